#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "vqglab/analysis.hpp"
#include "vqglab/config.hpp"
#include "vqglab/data.hpp"
#include "vqglab/decoder.hpp"
#include "vqglab/exemplar.hpp"
#include "vqglab/metrics.hpp"
#include "vqglab/model.hpp"
#include "vqglab/optim.hpp"
#include "vqglab/rng.hpp"
#include "vqglab/train.hpp"

using namespace vqglab;
using nlohmann::json;

namespace {

// feature width of the first sample, so loaders do not need a flag
int infer_d_img(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::invalid_argument("line " + std::to_string(lineno) + ": malformed JSON: " +
                                  e.what());
    }
    if (!j.contains("features")) {
      throw std::invalid_argument("line " + std::to_string(lineno) + ": missing \"features\"");
    }
    return static_cast<int>(j.at("features").size());
  }
  throw std::invalid_argument("dataset file '" + path + "' is empty");
}

Dataset load_dataset_auto(const std::string& path) {
  SchemaConfig schema;
  schema.d_img = infer_d_img(path);
  Dataset ds = load_dataset(path, schema);
  const int cols = ds.grid_cols();
  if (cols > 0) schema.grid_cols = cols;
  return ds;
}

std::vector<std::pair<std::string, std::vector<double>>> features_by_id(const Dataset& ds) {
  std::vector<std::pair<std::string, std::vector<double>>> out;
  out.reserve(ds.samples.size());
  for (const Sample& s : ds.samples) out.emplace_back(s.id, s.features);
  return out;
}

int run_selfcheck();

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"exemplar-conditioned visual question generation laboratory"};
  app.require_subcommand(1);
  const RunConfig defaults;

  // ---- synth-data ----
  auto* synth = app.add_subcommand("synth-data", "generate a deterministic synthetic dataset");
  std::uint64_t synth_seed = 7;
  int synth_n = 100, synth_clusters = 4, synth_d_img = defaults.dims.d_img;
  int synth_grid_dim = kGridColsDefault;
  bool synth_grid = false, synth_place = false;
  std::string synth_out;
  synth->add_option("--seed", synth_seed, "generator seed")->capture_default_str();
  synth->add_option("--n", synth_n, "number of samples")->capture_default_str();
  synth->add_option("--clusters", synth_clusters, "number of clusters")->capture_default_str();
  synth->add_option("--d-img", synth_d_img, "image feature length")->capture_default_str();
  synth->add_flag("--grid", synth_grid, "emit 196-row grid features");
  synth->add_option("--grid-dim", synth_grid_dim, "grid cell dimension")->capture_default_str();
  synth->add_flag("--place", synth_place, "emit 365-dim place features");
  synth->add_option("--out", synth_out, "output JSON-Lines file")->required();

  // ---- build-index ----
  auto* bidx = app.add_subcommand("build-index", "build the exemplar index over a dataset");
  std::string bidx_data, bidx_out;
  int bidx_clusters = 50;
  std::uint64_t bidx_seed = 1;
  bidx->add_option("--data", bidx_data, "dataset JSON-Lines file")->required();
  bidx->add_option("--clusters", bidx_clusters, "coarse quantization clusters")
      ->capture_default_str();
  bidx->add_option("--seed", bidx_seed, "k-means seed")->capture_default_str();
  bidx->add_option("--out", bidx_out, "output index file")->required();

  // ---- train ----
  auto* tr = app.add_subcommand("train", "train a model on a dataset");
  std::string tr_config, tr_data, tr_index, tr_out, tr_log;
  RunConfig tr_cfg;  // flag defaults mirror RunConfig
  tr->add_option("--config", tr_config, "JSON config file (flags override it)");
  tr->add_option("--data", tr_data, "dataset JSON-Lines file")->required();
  tr->add_option("--index", tr_index, "exemplar index file");
  tr->add_option("--out", tr_out, "checkpoint output path")->required();
  tr->add_option("--log", tr_log, "training log output path (JSON-Lines)");
  tr->add_option("--variant", tr_cfg.variant, "mdn|diff-image|tag|place")
      ->capture_default_str();
  tr->add_option("--mixture", tr_cfg.mixture, "joint|hadamard|addition|attention")
      ->capture_default_str();
  tr->add_option("--exemplar-k", tr_cfg.exemplar.k, "exemplars per sample")
      ->capture_default_str();
  tr->add_option("--exemplar-mode", tr_cfg.exemplar.mode, "knn|random|none")
      ->capture_default_str();
  tr->add_option("--alpha", tr_cfg.loss.alpha, "triplet margin")->capture_default_str();
  tr->add_option("--gamma", tr_cfg.loss.gamma, "triplet loss weight")->capture_default_str();
  tr->add_option("--n-max", tr_cfg.loss.n_max, "max decode length")->capture_default_str();
  tr->add_option("--lr", tr_cfg.optimizer.lr, "RMSProp learning rate")->capture_default_str();
  tr->add_option("--rho", tr_cfg.optimizer.rho, "RMSProp decay")->capture_default_str();
  tr->add_option("--epsilon", tr_cfg.optimizer.epsilon, "RMSProp epsilon")
      ->capture_default_str();
  tr->add_option("--batch", tr_cfg.optimizer.batch, "batch size")->capture_default_str();
  tr->add_option("--decay-a", tr_cfg.optimizer.decay_a, "lr decay parameter a")
      ->capture_default_str();
  tr->add_option("--decay-b", tr_cfg.optimizer.decay_b, "lr decay parameter b")
      ->capture_default_str();
  tr->add_flag("--decay-per-iteration", tr_cfg.optimizer.decay_per_iteration,
               "apply the decay factor per batch instead of per epoch");
  tr->add_option("--clip", tr_cfg.optimizer.clip, "global gradient-norm clip (0 = off)")
      ->capture_default_str();
  double tr_triplet_lr = 0.0;
  auto* tr_triplet_lr_opt =
      tr->add_option("--triplet-lr", tr_triplet_lr,
                     "separate RMSProp rate for the triplet term (default: unified)");
  tr->add_option("--triplet-rho", tr_cfg.optimizer.triplet_rho,
                 "RMSProp decay for the separate triplet pass")
      ->capture_default_str();
  tr->add_option("--d-img", tr_cfg.dims.d_img, "image feature length")->capture_default_str();
  tr->add_option("--hidden", tr_cfg.dims.hidden, "hidden/embedding size")
      ->capture_default_str();
  tr->add_option("--embed", tr_cfg.dims.embed, "word embedding size")->capture_default_str();
  tr->add_option("--tag-filters", tr_cfg.dims.tag_filters, "tag net filters per width")
      ->capture_default_str();
  tr->add_option("--seed", tr_cfg.seed, "run seed")->capture_default_str();
  tr->add_option("--epochs", tr_cfg.epochs, "training epochs")->capture_default_str();
  tr->add_option("--vocab-min-count", tr_cfg.vocab_min_count, "vocabulary frequency cutoff")
      ->capture_default_str();
  tr->add_option("--tag-combine", tr_cfg.tag_combine, "concat|add|mul|conv1d")
      ->capture_default_str();
  bool tr_no_lexicon = false;
  tr->add_flag("--no-lexicon", tr_no_lexicon, "disable the builtin POS lexicon");

  // ---- generate ----
  auto* gen = app.add_subcommand("generate", "generate questions with a trained checkpoint");
  std::string gen_ckpt, gen_data, gen_out, gen_mode = "argmax";
  std::uint64_t gen_seed = 0;
  bool gen_seed_set = false;
  gen->add_option("--checkpoint", gen_ckpt, "checkpoint file")->required();
  gen->add_option("--data", gen_data, "dataset JSON-Lines file")->required();
  gen->add_option("--out", gen_out, "output JSON-Lines file ({\"id\",\"question\"})")
      ->required();
  gen->add_option("--mode", gen_mode, "argmax|sample")->capture_default_str();
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "sampling seed (default: from checkpoint)");

  // ---- evaluate ----
  auto* ev = app.add_subcommand("evaluate", "score generated questions against references");
  std::string ev_gen, ev_refs, ev_out;
  ev->add_option("--generated", ev_gen, "generated questions JSON-Lines file")->required();
  ev->add_option("--references", ev_refs, "reference dataset JSON-Lines file")->required();
  ev->add_option("--out", ev_out, "score report output path (JSON)")->required();

  // ---- cd-test ----
  auto* cd = app.add_subcommand("cd-test", "Friedman mean ranks + Nemenyi critical difference");
  std::string cd_scores, cd_out, cd_report;
  double cd_alpha = 0.05;
  cd->add_option("--scores", cd_scores, "scores JSON file {systems, conditions, scores}")
      ->required();
  cd->add_option("--alpha", cd_alpha, "significance level (0.05 or 0.10)")
      ->capture_default_str();
  cd->add_option("--out", cd_out, "CD diagram SVG output path")->required();
  cd->add_option("--report", cd_report, "optional JSON report output path");

  // ---- sunburst ----
  auto* sb = app.add_subcommand("sunburst", "word-position statistics of generated questions");
  std::string sb_gen, sb_out, sb_json;
  int sb_depth = 5;
  sb->add_option("--generated", sb_gen, "generated questions JSON-Lines file")->required();
  sb->add_option("--depth", sb_depth, "number of rings")->capture_default_str();
  sb->add_option("--out", sb_out, "sunburst SVG output path")->required();
  sb->add_option("--json", sb_json, "optional JSON tree output path");

  // ---- selfcheck ----
  app.add_subcommand("selfcheck", "run gradient checks and oracle equivalence suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (synth->parsed()) {
      SynthOptions opts;
      opts.with_grid = synth_grid;
      opts.grid_cols = synth_grid_dim;
      opts.with_place = synth_place;
      const Dataset ds = synth_dataset(synth_seed, synth_n, synth_clusters, synth_d_img, opts);
      save_dataset(ds, synth_out);
      std::printf("wrote %zu samples to %s\n", ds.samples.size(), synth_out.c_str());
    } else if (bidx->parsed()) {
      const Dataset ds = load_dataset_auto(bidx_data);
      const ExemplarIndex index = ExemplarIndex::build(features_by_id(ds), bidx_clusters,
                                                       bidx_seed);
      index.save(bidx_out);
      std::printf("indexed %d samples into %d clusters -> %s\n", index.n_samples(),
                  index.n_clusters(), bidx_out.c_str());
    } else if (tr->parsed()) {
      RunConfig cfg = tr_config.empty() ? RunConfig{} : load_config(tr_config);
      // flags override config-file values only when actually given
      auto take = [&](const char* flag, auto& dst, const auto& src) {
        if (tr->count(flag) > 0) dst = src;
      };
      take("--variant", cfg.variant, tr_cfg.variant);
      take("--mixture", cfg.mixture, tr_cfg.mixture);
      take("--exemplar-k", cfg.exemplar.k, tr_cfg.exemplar.k);
      take("--exemplar-mode", cfg.exemplar.mode, tr_cfg.exemplar.mode);
      take("--alpha", cfg.loss.alpha, tr_cfg.loss.alpha);
      take("--gamma", cfg.loss.gamma, tr_cfg.loss.gamma);
      take("--n-max", cfg.loss.n_max, tr_cfg.loss.n_max);
      take("--lr", cfg.optimizer.lr, tr_cfg.optimizer.lr);
      take("--rho", cfg.optimizer.rho, tr_cfg.optimizer.rho);
      take("--epsilon", cfg.optimizer.epsilon, tr_cfg.optimizer.epsilon);
      take("--batch", cfg.optimizer.batch, tr_cfg.optimizer.batch);
      take("--decay-a", cfg.optimizer.decay_a, tr_cfg.optimizer.decay_a);
      take("--decay-b", cfg.optimizer.decay_b, tr_cfg.optimizer.decay_b);
      take("--decay-per-iteration", cfg.optimizer.decay_per_iteration,
           tr_cfg.optimizer.decay_per_iteration);
      take("--clip", cfg.optimizer.clip, tr_cfg.optimizer.clip);
      if (tr_triplet_lr_opt->count() > 0) {
        cfg.optimizer.separate_triplet_optimizer = true;
        cfg.optimizer.triplet_lr = tr_triplet_lr;
      }
      take("--triplet-rho", cfg.optimizer.triplet_rho, tr_cfg.optimizer.triplet_rho);
      take("--d-img", cfg.dims.d_img, tr_cfg.dims.d_img);
      take("--hidden", cfg.dims.hidden, tr_cfg.dims.hidden);
      take("--embed", cfg.dims.embed, tr_cfg.dims.embed);
      take("--tag-filters", cfg.dims.tag_filters, tr_cfg.dims.tag_filters);
      take("--seed", cfg.seed, tr_cfg.seed);
      take("--epochs", cfg.epochs, tr_cfg.epochs);
      take("--vocab-min-count", cfg.vocab_min_count, tr_cfg.vocab_min_count);
      take("--tag-combine", cfg.tag_combine, tr_cfg.tag_combine);
      if (tr_no_lexicon) cfg.pos_lexicon = false;
      validate_config(cfg);

      SchemaConfig schema;
      schema.d_img = cfg.dims.d_img;
      Dataset ds = load_dataset(tr_data, schema);
      const int cols = ds.grid_cols();
      if (cols > 0 && cols != schema.grid_cols) {
        // reload with the observed grid width so validation names the right size
        schema.grid_cols = cols;
        ds = load_dataset(tr_data, schema);
      }

      std::optional<ExemplarIndex> index_storage;
      const ExemplarIndex* index = nullptr;
      if (!tr_index.empty()) {
        index_storage = ExemplarIndex::load(tr_index);
        index = &*index_storage;
      } else if (cfg.exemplar.mode != "none") {
        throw std::invalid_argument("train: exemplar.mode \"" + cfg.exemplar.mode +
                                    "\" needs --index (or use --exemplar-mode none)");
      }

      const TrainResult result = train(ds, index, cfg);
      save_checkpoint(tr_out, cfg, result.vocab, result.params);
      if (!tr_log.empty()) save_train_log(result.log, tr_log);
      std::printf("trained %d epochs; final loss %.6f -> %s\n", cfg.epochs,
                  result.log.empty() ? 0.0 : result.log.back().loss, tr_out.c_str());
    } else if (gen->parsed()) {
      gen_seed_set = gen_seed_opt->count() > 0;
      Checkpoint ck = load_checkpoint(gen_ckpt);
      if (gen_seed_set) ck.config.seed = gen_seed;
      SchemaConfig schema;
      schema.d_img = ck.config.dims.d_img;
      Dataset ds = load_dataset(gen_data, schema);
      const int cols = ds.grid_cols();
      if (cols > 0 && cols != schema.grid_cols) {
        schema.grid_cols = cols;
        ds = load_dataset(gen_data, schema);
      }
      const auto out = infer(ds, ck.params, ck.vocab, ck.config, gen_mode);
      save_generated(out, gen_out);
      std::printf("generated %zu questions -> %s\n", out.size(), gen_out.c_str());
    } else if (ev->parsed()) {
      const Dataset refs = load_dataset_auto(ev_refs);
      const auto gen_qs = load_generated(ev_gen);
      std::vector<std::pair<std::string, Tokens>> items;
      items.reserve(gen_qs.size());
      for (const auto& g : gen_qs) items.emplace_back(g.id, g.tokens);
      const ScoreReport report = evaluate_corpus(pair_with_references(items, refs));
      save_score_report(report, ev_out);
      for (const auto& [name, score] : report.scores)
        std::printf("%-8s %7.3f\n", name.c_str(), score);
    } else if (cd->parsed()) {
      const RankMatrix m = load_rank_matrix(cd_scores);
      CdDiagram diagram;
      diagram.systems = m.systems;
      diagram.mean_ranks = friedman_mean_ranks(m);
      diagram.cd = nemenyi_cd(static_cast<int>(m.systems.size()),
                              static_cast<int>(m.conditions.size()), cd_alpha);
      write_text_file(cd_out, render_cd_diagram_svg(diagram));
      if (!cd_report.empty()) {
        write_text_file(cd_report, cd_diagram_to_json(diagram).dump(2) + "\n");
      }
      std::printf("CD = %.4f over %zu conditions -> %s\n", diagram.cd, m.conditions.size(),
                  cd_out.c_str());
    } else if (sb->parsed()) {
      const auto gen_qs = load_generated(sb_gen);
      std::vector<std::vector<std::string>> questions;
      questions.reserve(gen_qs.size());
      for (const auto& g : gen_qs) questions.push_back(g.tokens);
      const SunburstNode tree = sunburst_stats(questions, sb_depth);
      write_text_file(sb_out, render_sunburst_svg(tree));
      if (!sb_json.empty()) write_text_file(sb_json, sunburst_to_json(tree).dump(2) + "\n");
      std::printf("sunburst over %d questions -> %s\n", tree.count, sb_out.c_str());
    } else {
      return run_selfcheck();
    }
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

// ---- selfcheck ---------------------------------------------------------------

namespace {

struct CheckRunner {
  int failures = 0;
  void operator()(const std::string& name, bool ok, const std::string& detail = "") {
    std::printf("[%s] %s%s%s\n", ok ? "ok" : "FAIL", name.c_str(),
                detail.empty() ? "" : ": ", detail.c_str());
    if (!ok) ++failures;
  }
};

Tensor rand_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(s));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

int run_selfcheck() {
  CheckRunner check;
  char buf[128];

  // gradient checks through each primitive
  {
    Rng rng(42);
    struct Case {
      const char* name;
      TapedFn fn;
      std::vector<Tensor> params;
    };
    std::vector<Case> cases;
    cases.push_back({"grad matmul",
                     [](Tape&, std::vector<Tensor>& l) {
                       return reduce_sum(tanh(matmul(l[0], l[1])));
                     },
                     {rand_tensor({4, 5}, rng), rand_tensor({5}, rng)}});
    cases.push_back({"grad elementwise",
                     [](Tape&, std::vector<Tensor>& l) {
                       return reduce_mean(mul(tanh(add(l[0], l[1])), sub(l[0], l[2])));
                     },
                     {rand_tensor({6}, rng), rand_tensor({6}, rng), rand_tensor({6}, rng)}});
    cases.push_back({"grad softmax+log",
                     [](Tape&, std::vector<Tensor>& l) {
                       return reduce_sum(mul(log(softmax(l[0], 0)), l[1]));
                     },
                     {rand_tensor({7}, rng), rand_tensor({7}, rng)}});
    cases.push_back({"grad concat+distance",
                     [](Tape&, std::vector<Tensor>& l) {
                       return squared_l2_distance(concat({l[0], l[1]}, 0), l[2]);
                     },
                     {rand_tensor({3}, rng), rand_tensor({4}, rng), rand_tensor({7}, rng)}});
    cases.push_back({"grad embedding+conv",
                     [](Tape&, std::vector<Tensor>& l) {
                       const Tensor e = embedding_lookup(l[0], {0, 1, 2, 1});
                       return reduce_sum(row_max(temporal_conv(e, l[1], l[2], 2)));
                     },
                     {rand_tensor({4, 3}, rng), rand_tensor({5, 6}, rng),
                      rand_tensor({5}, rng)}});
    for (auto& c : cases) {
      const double err = grad_check(c.fn, c.params, 1e-5);
      std::snprintf(buf, sizeof(buf), "max rel err %.2e", err);
      check(c.name, err < 1e-6, buf);
    }
  }

  // model-path gradient checks at small dims, one segment per path so every
  // parameter keeps a gradient above the finite-difference noise floor
  {
    RunConfig cfg;
    cfg.dims = {12, 16, 16, 4, 16};
    cfg.variant = "mdn";
    cfg.mixture = "joint";
    cfg.seed = 3;
    const ModelParams proto = init_params(cfg, 9, 16);
    Rng rng(7);
    auto wide = [&rng](std::vector<Tensor> ts) {
      for (Tensor& t : ts)
        for (double& v : t.data) v = rng.uniform(-0.4, 0.4);
      return ts;
    };
    std::vector<double> img(12);
    for (double& v : img) v = rng.uniform(-1.0, 1.0);
    const std::vector<int> caption = {4, 6, 8};
    const std::vector<int> question = {kStartId, 5, 7, kStopId};
    const Tensor probe = rand_tensor({16}, rng, 0.5, 1.0);

    {
      const std::vector<Tensor> params = wide({proto.enc.img_w, proto.enc.img_b});
      const double err = grad_check(
          [&](Tape&, std::vector<Tensor>& l) {
            EncoderParams e = proto.enc;
            e.img_w = l[0];
            e.img_b = l[1];
            return reduce_sum(mul(encode_image(img, e), probe));
          },
          params, 1e-5);
      std::snprintf(buf, sizeof(buf), "max rel err %.2e", err);
      check("grad image encoder", err < 1e-4, buf);
    }
    {
      std::vector<Tensor> params = {proto.enc.embed};
      for (const Tensor* t : {&proto.enc.caption.wi, &proto.enc.caption.ui,
                              &proto.enc.caption.bi, &proto.enc.caption.wf,
                              &proto.enc.caption.uf, &proto.enc.caption.bf,
                              &proto.enc.caption.wo, &proto.enc.caption.uo,
                              &proto.enc.caption.bo, &proto.enc.caption.wg,
                              &proto.enc.caption.ug, &proto.enc.caption.bg}) {
        params.push_back(*t);
      }
      params = wide(std::move(params));
      const double err = grad_check(
          [&](Tape&, std::vector<Tensor>& l) {
            EncoderParams e = proto.enc;
            e.embed = l[0];
            LstmParams& c = e.caption;
            c.wi = l[1]; c.ui = l[2]; c.bi = l[3];
            c.wf = l[4]; c.uf = l[5]; c.bf = l[6];
            c.wo = l[7]; c.uo = l[8]; c.bo = l[9];
            c.wg = l[10]; c.ug = l[11]; c.bg = l[12];
            return reduce_sum(mul(encode_caption(caption, e), probe));
          },
          params, 1e-5);
      std::snprintf(buf, sizeof(buf), "max rel err %.2e", err);
      check("grad caption encoder", err < 1e-4, buf);
    }
    {
      const std::vector<Tensor> params = wide({proto.mix.w_img, proto.mix.w_cap,
                                               proto.mix.b_j, proto.mix.w_joint,
                                               Tensor::zeros({16}), Tensor::zeros({16})});
      const double err = grad_check(
          [&](Tape&, std::vector<Tensor>& l) {
            MixtureParams m = proto.mix;
            m.w_img = l[0];
            m.w_cap = l[1];
            m.b_j = l[2];
            m.w_joint = l[3];
            return reduce_sum(mul(fuse_joint(l[4], l[5], m), probe));
          },
          params, 1e-5);
      std::snprintf(buf, sizeof(buf), "max rel err %.2e", err);
      check("grad joint fusion", err < 1e-4, buf);
    }
    {
      std::vector<Tensor> params = {proto.dec.embed};
      for (const Tensor* t : {&proto.dec.lstm.wi, &proto.dec.lstm.ui, &proto.dec.lstm.bi,
                              &proto.dec.lstm.wf, &proto.dec.lstm.uf, &proto.dec.lstm.bf,
                              &proto.dec.lstm.wo, &proto.dec.lstm.uo, &proto.dec.lstm.bo,
                              &proto.dec.lstm.wg, &proto.dec.lstm.ug, &proto.dec.lstm.bg,
                              &proto.dec.w_out, &proto.dec.b_out}) {
        params.push_back(*t);
      }
      params.push_back(Tensor::zeros({16}));  // context
      params = wide(std::move(params));
      const double err = grad_check(
          [&](Tape&, std::vector<Tensor>& l) {
            DecoderParams d = proto.dec;
            d.embed = l[0];
            LstmParams& m = d.lstm;
            m.wi = l[1]; m.ui = l[2]; m.bi = l[3];
            m.wf = l[4]; m.uf = l[5]; m.bf = l[6];
            m.wo = l[7]; m.uo = l[8]; m.bo = l[9];
            m.wg = l[10]; m.ug = l[11]; m.bg = l[12];
            d.w_out = l[13];
            d.b_out = l[14];
            return decode_teacher_forced(l[15], question, d, 20).loss;
          },
          params, 1e-5);
      std::snprintf(buf, sizeof(buf), "max rel err %.2e", err);
      check("grad decoder loss", err < 1e-4, buf);
    }
  }

  // k-d tree vs exhaustive linear scan
  {
    Rng rng(11);
    std::vector<std::pair<std::string, std::vector<double>>> pts;
    for (int i = 0; i < 300; ++i) {
      std::vector<double> f(16);
      for (double& v : f) v = rng.uniform(-1.0, 1.0);
      char id[16];
      std::snprintf(id, sizeof(id), "p%03d", i);
      pts.emplace_back(id, f);
    }
    const ExemplarIndex index = ExemplarIndex::build(pts, 10, 5);
    bool all_equal = true;
    for (int t = 0; t < 300 && all_equal; t += 7) {
      const auto got = index.find_exemplars(pts[static_cast<std::size_t>(t)].first, 5);
      std::vector<std::pair<double, std::string>> brute;
      for (int i = 0; i < 300; ++i) {
        if (i == t) continue;
        brute.emplace_back(squared_distance(pts[static_cast<std::size_t>(i)].second,
                                            pts[static_cast<std::size_t>(t)].second),
                           pts[static_cast<std::size_t>(i)].first);
      }
      std::sort(brute.begin(), brute.end());
      for (int j = 0; j < 5; ++j)
        if (got.supporting[static_cast<std::size_t>(j)] != brute[static_cast<std::size_t>(j)].second)
          all_equal = false;
    }
    check("k-d tree equals linear-scan k-NN", all_equal);
  }

  // metric hand values
  {
    const std::vector<EvalPair> brevity = {{{"the", "cat", "sat"},
                                            {{"the", "cat", "sat", "on", "the", "mat"}}}};
    const double b1 = bleu(brevity, 1)[0];
    std::snprintf(buf, sizeof(buf), "%.4f", b1);
    check("BLEU-1 brevity case ~= 36.7879", std::abs(b1 - 100.0 * std::exp(-1.0)) < 1e-9, buf);

    const std::vector<EvalPair> rl = {{{"the", "cat"}, {{"the", "cat", "sat"}}}};
    const double r = rouge_l(rl);
    std::snprintf(buf, sizeof(buf), "%.4f", r);
    check("ROUGE-L beta=1.2 case ~= 77.2152", std::abs(r - 100.0 * (2.44 * (2.0 / 3.0)) / (2.0 / 3.0 + 1.44)) < 1e-9,
          buf);

    const std::vector<EvalPair> single = {{{"cat"}, {{"cat"}}}};
    const double m = meteor_lite(single);
    std::snprintf(buf, sizeof(buf), "%.4f", m);
    check("METEOR single identical token = 50", std::abs(m - 50.0) < 1e-9, buf);
  }

  // Nemenyi critical difference table
  {
    const double cd2 = nemenyi_cd(2, 8, 0.05);
    std::snprintf(buf, sizeof(buf), "%.4f", cd2);
    check("CD(k=2, N=8) ~= 0.693", std::abs(cd2 - 0.693) < 1e-3, buf);
    const double cd3 = nemenyi_cd(3, 4, 0.05);
    std::snprintf(buf, sizeof(buf), "%.4f", cd3);
    check("CD(k=3, N=4) ~= 1.657", std::abs(cd3 - 1.657) < 1e-3, buf);
  }

  // decay identity and triplet hinge values
  {
    double lr = 1.0;
    const double f = lr_decay_factor(10, 10);
    for (int i = 0; i < 100; ++i) lr *= f;
    check("decay: lr after a*b epochs is 0.1*lr0", std::abs(lr - 0.1) < 1e-6 * 0.1);

    const Tensor s = Tensor::vec({0.0, 0.0});
    const Tensor sp = Tensor::vec({1.0, 0.0});
    const Tensor sn = Tensor::vec({0.5, 0.5});
    // D+ = 1.0, D- = 0.5, alpha = 0.2 -> 0.7
    const double t = triplet_loss(s, sp, sn, 0.2).value();
    std::snprintf(buf, sizeof(buf), "%.4f", t);
    check("triplet hinge example = 0.7", std::abs(t - 0.7) < 1e-12, buf);
  }

  std::printf(check.failures == 0 ? "selfcheck: all checks passed\n"
                                  : "selfcheck: %d check(s) FAILED\n",
              check.failures);
  return check.failures == 0 ? 0 : 1;
}

}  // namespace
