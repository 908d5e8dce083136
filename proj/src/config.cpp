#include "vqglab/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "vqglab/data.hpp"
#include "vqglab/encoders.hpp"
#include "vqglab/mixture.hpp"

namespace vqglab {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) {
      throw std::invalid_argument("config: unknown key \"" + where + key + "\"");
    }
  }
}

}  // namespace

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: not a JSON object");
  reject_unknown(j, {"version", "variant", "mixture", "exemplar", "loss", "optimizer", "dims",
                     "seed", "epochs", "vocab_min_count", "tag_combine", "pos_lexicon"},
                 "");
  if (!j.contains("version")) throw std::invalid_argument("config: missing \"version\"");
  if (j.at("version").get<int>() != 1) {
    throw std::invalid_argument("config: unsupported version " + j.at("version").dump());
  }

  RunConfig cfg;
  cfg.variant = j.value("variant", cfg.variant);
  cfg.mixture = j.value("mixture", cfg.mixture);
  if (j.contains("exemplar")) {
    const json& e = j.at("exemplar");
    reject_unknown(e, {"k", "mode"}, "exemplar.");
    cfg.exemplar.k = e.value("k", cfg.exemplar.k);
    cfg.exemplar.mode = e.value("mode", cfg.exemplar.mode);
  }
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    reject_unknown(l, {"alpha", "gamma", "n_max"}, "loss.");
    cfg.loss.alpha = l.value("alpha", cfg.loss.alpha);
    cfg.loss.gamma = l.value("gamma", cfg.loss.gamma);
    cfg.loss.n_max = l.value("n_max", cfg.loss.n_max);
  }
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    reject_unknown(o,
                   {"lr", "rho", "epsilon", "batch", "decay_a", "decay_b",
                    "decay_per_iteration", "clip", "triplet_lr", "triplet_rho"},
                   "optimizer.");
    cfg.optimizer.lr = o.value("lr", cfg.optimizer.lr);
    cfg.optimizer.rho = o.value("rho", cfg.optimizer.rho);
    cfg.optimizer.epsilon = o.value("epsilon", cfg.optimizer.epsilon);
    cfg.optimizer.batch = o.value("batch", cfg.optimizer.batch);
    cfg.optimizer.decay_a = o.value("decay_a", cfg.optimizer.decay_a);
    cfg.optimizer.decay_b = o.value("decay_b", cfg.optimizer.decay_b);
    cfg.optimizer.decay_per_iteration =
        o.value("decay_per_iteration", cfg.optimizer.decay_per_iteration);
    cfg.optimizer.clip = o.value("clip", cfg.optimizer.clip);
    if (o.contains("triplet_lr") && !o.at("triplet_lr").is_null()) {
      cfg.optimizer.separate_triplet_optimizer = true;
      cfg.optimizer.triplet_lr = o.at("triplet_lr").get<double>();
      cfg.optimizer.triplet_rho = o.value("triplet_rho", cfg.optimizer.triplet_rho);
    }
  }
  if (j.contains("dims")) {
    const json& d = j.at("dims");
    reject_unknown(d, {"d_img", "hidden", "embed", "tag_filters", "grid"}, "dims.");
    cfg.dims.d_img = d.value("d_img", cfg.dims.d_img);
    cfg.dims.hidden = d.value("hidden", cfg.dims.hidden);
    cfg.dims.embed = d.value("embed", cfg.dims.embed);
    cfg.dims.tag_filters = d.value("tag_filters", cfg.dims.tag_filters);
    cfg.dims.grid = d.value("grid", cfg.dims.grid);
  }
  cfg.seed = j.value("seed", cfg.seed);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.vocab_min_count = j.value("vocab_min_count", cfg.vocab_min_count);
  cfg.tag_combine = j.value("tag_combine", cfg.tag_combine);
  cfg.pos_lexicon = j.value("pos_lexicon", cfg.pos_lexicon);
  validate_config(cfg);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

json config_to_json(const RunConfig& cfg) {
  json j;
  j["version"] = 1;
  j["variant"] = cfg.variant;
  j["mixture"] = cfg.mixture;
  j["exemplar"] = {{"k", cfg.exemplar.k}, {"mode", cfg.exemplar.mode}};
  j["loss"] = {{"alpha", cfg.loss.alpha}, {"gamma", cfg.loss.gamma}, {"n_max", cfg.loss.n_max}};
  json o;
  o["lr"] = cfg.optimizer.lr;
  o["rho"] = cfg.optimizer.rho;
  o["epsilon"] = cfg.optimizer.epsilon;
  o["batch"] = cfg.optimizer.batch;
  o["decay_a"] = cfg.optimizer.decay_a;
  o["decay_b"] = cfg.optimizer.decay_b;
  o["decay_per_iteration"] = cfg.optimizer.decay_per_iteration;
  o["clip"] = cfg.optimizer.clip;
  if (cfg.optimizer.separate_triplet_optimizer) {
    o["triplet_lr"] = cfg.optimizer.triplet_lr;
    o["triplet_rho"] = cfg.optimizer.triplet_rho;
  }
  j["optimizer"] = o;
  j["dims"] = {{"d_img", cfg.dims.d_img},
               {"hidden", cfg.dims.hidden},
               {"embed", cfg.dims.embed},
               {"tag_filters", cfg.dims.tag_filters},
               {"grid", cfg.dims.grid}};
  j["seed"] = cfg.seed;
  j["epochs"] = cfg.epochs;
  j["vocab_min_count"] = cfg.vocab_min_count;
  j["tag_combine"] = cfg.tag_combine;
  j["pos_lexicon"] = cfg.pos_lexicon;
  return j;
}

void validate_config(const RunConfig& cfg) {
  variant_from_string(cfg.variant);
  mixture_from_string(cfg.mixture);
  tag_combine_from_string(cfg.tag_combine);
  if (cfg.exemplar.mode != "knn" && cfg.exemplar.mode != "random" &&
      cfg.exemplar.mode != "none") {
    throw std::invalid_argument("config: exemplar.mode must be knn|random|none, got \"" +
                                cfg.exemplar.mode + "\"");
  }
  if (cfg.exemplar.k < 1) throw std::invalid_argument("config: exemplar.k must be >= 1");
  if (cfg.loss.alpha <= 0.0) throw std::invalid_argument("config: loss.alpha must be > 0");
  if (cfg.loss.gamma < 0.0) throw std::invalid_argument("config: loss.gamma must be >= 0");
  if (cfg.loss.n_max < 1) throw std::invalid_argument("config: loss.n_max must be >= 1");
  if (cfg.optimizer.lr <= 0.0) throw std::invalid_argument("config: optimizer.lr must be > 0");
  if (cfg.optimizer.rho <= 0.0 || cfg.optimizer.rho >= 1.0) {
    throw std::invalid_argument("config: optimizer.rho must be in (0,1)");
  }
  if (cfg.optimizer.batch < 1) throw std::invalid_argument("config: optimizer.batch must be >= 1");
  if (cfg.optimizer.decay_a * cfg.optimizer.decay_b == 0.0) {
    throw std::invalid_argument("config: optimizer.decay_a * decay_b must be nonzero");
  }
  for (const auto& [name, v] :
       {std::pair<const char*, int>{"dims.d_img", cfg.dims.d_img},
        {"dims.hidden", cfg.dims.hidden},
        {"dims.embed", cfg.dims.embed},
        {"dims.tag_filters", cfg.dims.tag_filters},
        {"dims.grid", cfg.dims.grid}}) {
    if (v < 1) throw std::invalid_argument(std::string("config: ") + name + " must be >= 1");
  }
  if (cfg.epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
  if (cfg.vocab_min_count < 1) {
    throw std::invalid_argument("config: vocab_min_count must be >= 1");
  }
}

}  // namespace vqglab
