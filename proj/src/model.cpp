#include "vqglab/model.hpp"

#include <fstream>
#include <stdexcept>

#include "vqglab/rng.hpp"

namespace vqglab {

using nlohmann::json;

namespace {

template <typename Fn>
void visit_lstm(const std::string& prefix, LstmParams& p, Fn&& fn) {
  fn(prefix + ".wi", p.wi);
  fn(prefix + ".ui", p.ui);
  fn(prefix + ".bi", p.bi);
  fn(prefix + ".wf", p.wf);
  fn(prefix + ".uf", p.uf);
  fn(prefix + ".bf", p.bf);
  fn(prefix + ".wo", p.wo);
  fn(prefix + ".uo", p.uo);
  fn(prefix + ".bo", p.bo);
  fn(prefix + ".wg", p.wg);
  fn(prefix + ".ug", p.ug);
  fn(prefix + ".bg", p.bg);
}

template <typename Fn>
void visit_all(ModelParams& m, Fn&& fn) {
  auto maybe = [&fn](const std::string& name, Tensor& t) {
    if (t.numel() > 0) fn(name, t);
  };
  maybe("enc.img_w", m.enc.img_w);
  maybe("enc.img_b", m.enc.img_b);
  maybe("enc.embed", m.enc.embed);
  visit_lstm("enc.caption", m.enc.caption, maybe);
  maybe("enc.tag.conv1_w", m.enc.tag.conv1_w);
  maybe("enc.tag.conv1_b", m.enc.tag.conv1_b);
  maybe("enc.tag.conv2_w", m.enc.tag.conv2_w);
  maybe("enc.tag.conv2_b", m.enc.tag.conv2_b);
  maybe("enc.tag.conv3_w", m.enc.tag.conv3_w);
  maybe("enc.tag.conv3_b", m.enc.tag.conv3_b);
  maybe("enc.tag.comb_w", m.enc.tag.comb_w);
  maybe("enc.tag.comb_b", m.enc.tag.comb_b);
  maybe("enc.tag.proj_w", m.enc.tag.proj_w);
  maybe("enc.tag.proj_b", m.enc.tag.proj_b);
  maybe("enc.place_w", m.enc.place_w);
  maybe("enc.place_b", m.enc.place_b);
  maybe("mix.w_img", m.mix.w_img);
  maybe("mix.w_cap", m.mix.w_cap);
  maybe("mix.b_j", m.mix.b_j);
  maybe("mix.w_joint", m.mix.w_joint);
  maybe("mix.w_a", m.mix.w_a);
  maybe("mix.b_a", m.mix.b_a);
  maybe("mix.w_grid", m.mix.w_grid);
  maybe("mix.w_catt", m.mix.w_catt);
  maybe("mix.b_catt", m.mix.b_catt);
  maybe("mix.w_p", m.mix.w_p);
  maybe("mix.b_p", m.mix.b_p);
  maybe("dec.embed", m.dec.embed);
  visit_lstm("dec.lstm", m.dec.lstm, maybe);
  maybe("dec.w_out", m.dec.w_out);
  maybe("dec.b_out", m.dec.b_out);
}

}  // namespace

void ModelParams::visit(const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_all(*this, fn);
}

void ModelParams::visit(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  visit_all(const_cast<ModelParams&>(*this),
            [&fn](const std::string& n, Tensor& t) { fn(n, t); });
}

ModelParams init_params(const RunConfig& cfg, int vocab_size, int grid_cols) {
  const int h = cfg.dims.hidden;
  const int e = cfg.dims.embed;
  const int v = vocab_size;
  const Variant variant = variant_from_string(cfg.variant);
  const MixtureKind mix = mixture_from_string(cfg.mixture);
  const TagCombine combine = tag_combine_from_string(cfg.tag_combine);

  Rng rng(mix_seed(cfg.seed, 0x1217));
  auto uni = [&rng](Shape s) {
    Tensor t = Tensor::zeros(std::move(s));
    for (double& x : t.data) x = rng.uniform(-0.08, 0.08);
    return t;
  };
  auto lstm = [&](int in_dim) {
    LstmParams p;
    p.wi = uni({h, in_dim});
    p.ui = uni({h, h});
    p.bi = Tensor::zeros({h});
    p.wf = uni({h, in_dim});
    p.uf = uni({h, h});
    p.bf = Tensor::full({h}, 1.0);
    p.wo = uni({h, in_dim});
    p.uo = uni({h, h});
    p.bo = Tensor::zeros({h});
    p.wg = uni({h, in_dim});
    p.ug = uni({h, h});
    p.bg = Tensor::zeros({h});
    return p;
  };

  ModelParams m;
  m.enc.img_w = uni({h, cfg.dims.d_img});
  m.enc.img_b = Tensor::zeros({h});
  m.enc.embed = uni({v, e});
  for (int c = 0; c < e; ++c) m.enc.embed.data[static_cast<std::size_t>(c)] = 0.0;  // PAD row
  m.enc.caption = lstm(e);

  if (variant == Variant::Tag) {
    const int f = cfg.dims.tag_filters;
    m.enc.tag.conv1_w = uni({f, 1 * e});
    m.enc.tag.conv1_b = Tensor::zeros({f});
    m.enc.tag.conv2_w = uni({f, 2 * e});
    m.enc.tag.conv2_b = Tensor::zeros({f});
    m.enc.tag.conv3_w = uni({f, 3 * e});
    m.enc.tag.conv3_b = Tensor::zeros({f});
    if (combine == TagCombine::Conv1d) {
      m.enc.tag.comb_w = uni({3 * f, 3 * (3 * f)});
      m.enc.tag.comb_b = Tensor::zeros({3 * f});
    }
    const int merged = combine == TagCombine::Concat ? 9 * f : 3 * f;
    m.enc.tag.proj_w = uni({h, merged});
    m.enc.tag.proj_b = Tensor::zeros({h});
  }
  if (variant == Variant::Place) {
    m.enc.place_w = uni({h, kPlaceDim});
    m.enc.place_b = Tensor::zeros({h});
  }

  m.mix.kind = mix;
  switch (mix) {
    case MixtureKind::Joint:
      m.mix.w_img = uni({h, h});
      m.mix.w_cap = uni({h, h});
      m.mix.b_j = Tensor::zeros({h});
      m.mix.w_joint = uni({h, 2 * h});
      break;
    case MixtureKind::Hadamard:
    case MixtureKind::Addition:
      m.mix.w_img = uni({h, h});
      m.mix.w_cap = uni({h, h});
      m.mix.b_j = Tensor::zeros({h});
      m.mix.w_a = uni({h, h});
      m.mix.b_a = Tensor::zeros({h});
      break;
    case MixtureKind::Attention: {
      const int g = grid_cols > 0 ? grid_cols : cfg.dims.grid;
      m.mix.w_grid = uni({g, h});
      m.mix.w_catt = uni({h, h});
      m.mix.b_catt = Tensor::zeros({h});
      m.mix.w_p = uni({h});
      m.mix.b_p = Tensor::zeros({1});
      m.mix.w_a = uni({h, h});
      m.mix.b_a = Tensor::zeros({h});
      break;
    }
  }

  m.dec.embed = uni({v, h});
  for (int c = 0; c < h; ++c) m.dec.embed.data[static_cast<std::size_t>(c)] = 0.0;
  m.dec.lstm = lstm(h);
  m.dec.w_out = uni({v, h});
  m.dec.b_out = Tensor::zeros({v});
  return m;
}

ModelParams tape_params(Tape& tape, const ModelParams& params) {
  ModelParams taped = params;
  taped.mix.kind = params.mix.kind;
  taped.visit([&tape](const std::string&, Tensor& t) { t = tape.leaf(t); });
  return taped;
}

std::vector<Tensor> flatten_params(const ModelParams& params) {
  std::vector<Tensor> out;
  params.visit([&out](const std::string&, const Tensor& t) { out.push_back(t); });
  return out;
}

ModelParams unflatten_params(const ModelParams& proto, const std::vector<Tensor>& tensors) {
  ModelParams m = proto;
  std::size_t i = 0;
  m.visit([&](const std::string& name, Tensor& t) {
    if (i >= tensors.size()) {
      throw std::invalid_argument("unflatten_params: too few tensors at \"" + name + "\"");
    }
    t = tensors[i++];
  });
  if (i != tensors.size()) {
    throw std::invalid_argument("unflatten_params: tensor count mismatch");
  }
  return m;
}

void save_checkpoint(const std::string& path, const RunConfig& cfg, const Vocabulary& vocab,
                     const ModelParams& params) {
  json j;
  j["version"] = 1;
  j["config"] = config_to_json(cfg);
  j["vocab"] = vocab.tokens();
  json pj = json::object();
  params.visit([&pj](const std::string& name, const Tensor& t) {
    pj[name] = {{"shape", t.shape}, {"data", t.data}};
  });
  j["params"] = pj;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out << j.dump() << '\n';
  if (!out) throw IoError("short write to '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("checkpoint '" + path + "': " + e.what());
  }
  if (j.value("version", 0) != 1) {
    throw std::invalid_argument("checkpoint '" + path + "': unsupported version");
  }
  Checkpoint ck;
  ck.config = config_from_json(j.at("config"));
  ck.vocab = Vocabulary::from_tokens(j.at("vocab").get<std::vector<std::string>>());
  // allocate with the same topology, then overwrite from the file
  const int grid_cols = [&]() {
    if (j.at("params").contains("mix.w_grid")) {
      return j.at("params").at("mix.w_grid").at("shape").at(0).get<int>();
    }
    return ck.config.dims.grid;
  }();
  ck.params = init_params(ck.config, ck.vocab.size(), grid_cols);
  const json& pj = j.at("params");
  std::size_t seen = 0;
  ck.params.visit([&pj, &path, &seen](const std::string& name, Tensor& t) {
    if (!pj.contains(name)) {
      throw std::invalid_argument("checkpoint '" + path + "': missing parameter \"" + name +
                                  "\"");
    }
    const json& e = pj.at(name);
    const Shape shape = e.at("shape").get<Shape>();
    if (shape != t.shape) {
      throw std::invalid_argument("checkpoint '" + path + "': parameter \"" + name +
                                  "\" has shape " + shape_str(shape) + ", expected " +
                                  shape_str(t.shape));
    }
    t.data = e.at("data").get<std::vector<double>>();
    if (static_cast<int>(t.data.size()) != shape_numel(shape)) {
      throw std::invalid_argument("checkpoint '" + path + "': parameter \"" + name +
                                  "\" data length mismatch");
    }
    ++seen;
  });
  if (seen != pj.size()) {
    throw std::invalid_argument("checkpoint '" + path + "': unexpected extra parameters");
  }
  return ck;
}

}  // namespace vqglab
