#include "vqglab/train.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "vqglab/decoder.hpp"
#include "vqglab/optim.hpp"
#include "vqglab/rng.hpp"

namespace vqglab {

using nlohmann::json;

namespace {

struct Instance {
  int sample = 0;
  int question = 0;
};

std::vector<int> to_decoder_ids(const Tokens& question, const Vocabulary& vocab) {
  std::vector<int> ids;
  ids.reserve(question.size() + 2);
  ids.push_back(kStartId);
  for (const std::string& t : question) ids.push_back(vocab.id_of(t));
  ids.push_back(kStopId);
  return ids;
}

std::vector<Tokens> corpus_of(const Dataset& data) {
  std::vector<Tokens> corpus;
  for (const Sample& s : data.samples) {
    for (const Tokens& c : s.captions) corpus.push_back(c);
    for (const Tokens& q : s.questions) corpus.push_back(q);
  }
  return corpus;
}

}  // namespace

void validate_training_inputs(const Dataset& data, const ExemplarIndex* index,
                              const RunConfig& cfg) {
  validate_config(cfg);
  if (data.samples.empty()) throw std::invalid_argument("train: empty dataset");
  const Variant variant = variant_from_string(cfg.variant);
  const MixtureKind mix = mixture_from_string(cfg.mixture);

  if (data.feature_dim() != cfg.dims.d_img) {
    throw std::invalid_argument("train: dataset features have length " +
                                std::to_string(data.feature_dim()) + " but dims.d_img is " +
                                std::to_string(cfg.dims.d_img));
  }
  for (const Sample& s : data.samples) {
    if (variant == Variant::Place && s.place_features.empty()) {
      throw std::invalid_argument("train: sample '" + s.id +
                                  "' has no place_features; the place variant cannot run");
    }
    if (variant == Variant::Tag && !s.tags && !cfg.pos_lexicon) {
      throw std::invalid_argument("train: sample '" + s.id +
                                  "' has no tags and pos_lexicon is disabled; supply tags in "
                                  "the dataset or enable the builtin lexicon");
    }
    if (mix == MixtureKind::Attention && s.grid_features.empty()) {
      throw std::invalid_argument("train: sample '" + s.id +
                                  "' has no grid_features; the attention mixture cannot run");
    }
    for (const Tokens& q : s.questions) {
      if (static_cast<int>(q.size()) > cfg.loss.n_max) {
        throw std::invalid_argument("train: question of sample '" + s.id + "' has " +
                                    std::to_string(q.size()) + " tokens, exceeding n_max=" +
                                    std::to_string(cfg.loss.n_max));
      }
    }
  }
  if (mix == MixtureKind::Attention) {
    const int cols = data.grid_cols();
    if (cols != cfg.dims.hidden) {
      throw std::invalid_argument("train: grid cell dim " + std::to_string(cols) +
                                  " must equal dims.hidden=" + std::to_string(cfg.dims.hidden) +
                                  " for the attention mixture");
    }
  }

  const bool needs_index = cfg.exemplar.mode != "none";
  if (needs_index) {
    if (index == nullptr) {
      throw std::invalid_argument("train: exemplar.mode \"" + cfg.exemplar.mode +
                                  "\" needs an ExemplarIndex");
    }
    if (cfg.exemplar.k >= index->n_samples()) {
      throw std::invalid_argument("train: exemplar.k=" + std::to_string(cfg.exemplar.k) +
                                  " too large for index of " +
                                  std::to_string(index->n_samples()) + " samples");
    }
    for (const Sample& s : data.samples) index->features_of(s.id);  // throws on gaps
  }
}

TrainResult train(const Dataset& data, const ExemplarIndex* index, const RunConfig& cfg) {
  validate_training_inputs(data, index, cfg);
  const Variant variant = variant_from_string(cfg.variant);
  const MixtureKind mix = mixture_from_string(cfg.mixture);
  const TagCombine combine = tag_combine_from_string(cfg.tag_combine);
  const bool need_grid = mix == MixtureKind::Attention;
  const PosLexicon* lexicon = cfg.pos_lexicon ? &PosLexicon::builtin() : nullptr;
  const bool use_exemplars = cfg.exemplar.mode != "none";
  const bool knn_mode = cfg.exemplar.mode == "knn";

  TrainResult result;
  result.vocab = Vocabulary::build(corpus_of(data), cfg.vocab_min_count);
  result.params = init_params(cfg, result.vocab.size(), data.grid_cols());

  std::vector<Instance> instances;
  for (int si = 0; si < static_cast<int>(data.samples.size()); ++si) {
    const auto& qs = data.samples[static_cast<std::size_t>(si)].questions;
    for (int qi = 0; qi < static_cast<int>(qs.size()); ++qi) instances.push_back({si, qi});
  }

  // KNN exemplars are a pure function of the index; fetch once
  std::vector<ExemplarPair> knn_cache;
  if (use_exemplars && knn_mode) {
    knn_cache.reserve(data.samples.size());
    for (const Sample& s : data.samples)
      knn_cache.push_back(index->find_exemplars(s.id, cfg.exemplar.k));
  }

  RmsProp main_opt(cfg.optimizer.lr, cfg.optimizer.rho, cfg.optimizer.epsilon);
  RmsProp triplet_opt(cfg.optimizer.triplet_lr, cfg.optimizer.triplet_rho,
                      cfg.optimizer.epsilon);
  const double decay = lr_decay_factor(cfg.optimizer.decay_a, cfg.optimizer.decay_b);
  Rng shuffle_rng(mix_seed(cfg.seed, 0x5f));

  auto apply = [&](RmsProp& opt, ModelParams& params, const ModelParams& taped,
                   const Gradients& grads) {
    // clip first so the step sees the bounded gradients
    std::vector<std::vector<double>> gbufs;
    std::vector<std::string> names;
    taped.visit([&](const std::string& name, const Tensor& t) {
      gbufs.push_back(grads.at(t.node));
      names.push_back(name);
    });
    if (cfg.optimizer.clip > 0.0) {
      std::vector<std::vector<double>*> ptrs;
      for (auto& g : gbufs) ptrs.push_back(&g);
      clip_global_norm(ptrs, cfg.optimizer.clip);
    }
    int slot = 0;
    params.visit([&](const std::string&, Tensor& t) {
      opt.step(slot, t.data, gbufs[static_cast<std::size_t>(slot)]);
      ++slot;
    });
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(instances);
    double epoch_loss = 0.0;
    int counted = 0;

    for (std::size_t start = 0; start < instances.size();
         start += static_cast<std::size_t>(cfg.optimizer.batch)) {
      const std::size_t stop =
          std::min(instances.size(), start + static_cast<std::size_t>(cfg.optimizer.batch));
      Tape tape;
      const ModelParams taped = tape_params(tape, result.params);

      std::vector<Tensor> ce_terms, triplet_terms;
      for (std::size_t ii = start; ii < stop; ++ii) {
        const Instance inst = instances[ii];
        const Sample& target = data.samples[static_cast<std::size_t>(inst.sample)];

        const TowerEmbedding target_tower =
            encode_tower(target, taped.enc, result.vocab, variant, need_grid, combine, lexicon);
        const Tensor context = fuse(target_tower, taped.mix);

        const std::vector<int> qids = to_decoder_ids(
            target.questions[static_cast<std::size_t>(inst.question)], result.vocab);
        ce_terms.push_back(
            decode_teacher_forced(context, qids, taped.dec, cfg.loss.n_max).loss);

        if (use_exemplars) {
          ExemplarPair pair;
          if (knn_mode) {
            pair = knn_cache[static_cast<std::size_t>(inst.sample)];
          } else {
            pair = index->random_exemplars(
                target.id, cfg.exemplar.k,
                mix_seed(cfg.seed, 0xe0 + 1315423911ull * static_cast<std::uint64_t>(epoch) +
                                       static_cast<std::uint64_t>(ii)));
          }
          // one hinge per exemplar pair, averaged
          Tensor trip;
          for (int j = 0; j < cfg.exemplar.k; ++j) {
            const Sample& sup = data.by_id(pair.supporting[static_cast<std::size_t>(j)]);
            const Sample& con = data.by_id(pair.contrasting[static_cast<std::size_t>(j)]);
            const TowerEmbedding sup_t =
                encode_tower(sup, taped.enc, result.vocab, variant, need_grid, combine, lexicon);
            const TowerEmbedding con_t =
                encode_tower(con, taped.enc, result.vocab, variant, need_grid, combine, lexicon);
            const Tensor t = triplet_loss(context, fuse(sup_t, taped.mix),
                                          fuse(con_t, taped.mix), cfg.loss.alpha);
            trip = j == 0 ? t : add(trip, t);
          }
          triplet_terms.push_back(scale(trip, 1.0 / cfg.exemplar.k));
        }
      }

      if (cfg.optimizer.separate_triplet_optimizer && use_exemplars) {
        const Tensor ce = total_loss(ce_terms, {}, 0.0);
        const Tensor trip = scale(total_loss(triplet_terms, {}, 0.0), cfg.loss.gamma);
        const Tensor combined = add(ce, trip);
        epoch_loss += combined.value() * static_cast<double>(stop - start);
        counted += static_cast<int>(stop - start);
        apply(main_opt, result.params, taped, tape.backward(ce));
        apply(triplet_opt, result.params, taped, tape.backward(trip));
      } else {
        const Tensor total = total_loss(ce_terms, triplet_terms, cfg.loss.gamma);
        epoch_loss += total.value() * static_cast<double>(stop - start);
        counted += static_cast<int>(stop - start);
        apply(main_opt, result.params, taped, tape.backward(total));
      }

      if (cfg.optimizer.decay_per_iteration) {
        main_opt.scale_lr(decay);
        triplet_opt.scale_lr(decay);
      }
    }

    if (!cfg.optimizer.decay_per_iteration) {
      main_opt.scale_lr(decay);
      triplet_opt.scale_lr(decay);
    }
    result.log.push_back({epoch, epoch_loss / counted, main_opt.lr()});
  }
  return result;
}

void save_train_log(const std::vector<EpochLog>& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write training log '" + path + "'");
  for (const EpochLog& e : log) {
    json j;
    j["epoch"] = e.epoch;
    j["loss"] = e.loss;
    j["lr"] = e.lr;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("short write to '" + path + "'");
}

int thread_budget() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("VQG_LAB_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

std::vector<GeneratedQuestion> infer(const Dataset& data, const ModelParams& params,
                                     const Vocabulary& vocab, const RunConfig& cfg,
                                     const std::string& mode) {
  if (mode != "argmax" && mode != "sample") {
    throw std::invalid_argument("infer: mode must be argmax or sample, got \"" + mode + "\"");
  }
  const Variant variant = variant_from_string(cfg.variant);
  const MixtureKind mix = mixture_from_string(cfg.mixture);
  const TagCombine combine = tag_combine_from_string(cfg.tag_combine);
  const bool need_grid = mix == MixtureKind::Attention;
  const PosLexicon* lexicon = cfg.pos_lexicon ? &PosLexicon::builtin() : nullptr;

  const int n = static_cast<int>(data.samples.size());
  std::vector<GeneratedQuestion> out(static_cast<std::size_t>(n));

  auto run_range = [&](int lo, int hi) {
    for (int i = lo; i < hi; ++i) {
      const Sample& s = data.samples[static_cast<std::size_t>(i)];
      // target tower and mixture only; no exemplar retrieval at inference
      const TowerEmbedding tower =
          encode_tower(s, params.enc, vocab, variant, need_grid, combine, lexicon);
      const Tensor context = fuse(tower, params.mix);
      std::vector<int> ids;
      if (mode == "argmax") {
        ids = generate_argmax(context, params.dec, cfg.loss.n_max);
      } else {
        ids = generate_sample(context, params.dec, cfg.loss.n_max,
                              mix_seed(cfg.seed, 0x9e + static_cast<std::uint64_t>(i)));
      }
      out[static_cast<std::size_t>(i)] = {s.id, vocab.decode(ids)};
    }
  };

  const int threads = std::min(thread_budget(), n > 0 ? n : 1);
  if (threads <= 1 || n < 4) {
    run_range(0, n);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const int lo = t * chunk;
      const int hi = std::min(n, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back(run_range, lo, hi);
    }
    for (std::thread& th : pool) th.join();
  }
  return out;
}

void save_generated(const std::vector<GeneratedQuestion>& gen, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write generated questions to '" + path + "'");
  for (const GeneratedQuestion& g : gen) {
    json j;
    j["id"] = g.id;
    j["question"] = join_tokens(g.tokens);
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("short write to '" + path + "'");
}

std::vector<GeneratedQuestion> load_generated(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open generated questions file '" + path + "'");
  std::vector<GeneratedQuestion> out;
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
    if (!j.contains("id") || !j.contains("question")) {
      throw std::invalid_argument("line " + std::to_string(lineno) +
                                  ": expected {\"id\", \"question\"}");
    }
    out.push_back({j.at("id").get<std::string>(),
                   tokenize(j.at("question").get<std::string>())});
  }
  return out;
}

}  // namespace vqglab
