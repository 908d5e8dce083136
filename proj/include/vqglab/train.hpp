#pragma once

#include <string>
#include <vector>

#include "vqglab/config.hpp"
#include "vqglab/data.hpp"
#include "vqglab/exemplar.hpp"
#include "vqglab/model.hpp"

namespace vqglab {

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  ModelParams params;
  Vocabulary vocab;
  std::vector<EpochLog> log;
};

// Checks the dataset can serve the configured variant and mixture before any
// work starts (tags/place/grid presence, question lengths, index coverage).
void validate_training_inputs(const Dataset& data, const ExemplarIndex* index,
                              const RunConfig& cfg);

// Per epoch: seeded shuffle of (sample, question) instances; per batch:
// exemplar retrieval, triplet encoding, fusion of all three towers, the
// combined cross-entropy + gamma * triplet objective, backward, RMSProp.
// The learning rate decays once per epoch (or per iteration by config).
// Fully deterministic in cfg.seed. `index` may be null for exemplar.mode
// "none".
TrainResult train(const Dataset& data, const ExemplarIndex* index, const RunConfig& cfg);

void save_train_log(const std::vector<EpochLog>& log, const std::string& path);

struct GeneratedQuestion {
  std::string id;
  Tokens tokens;
};

// Inference runs the target tower and mixture only; exemplar retrieval is
// never invoked. mode is "argmax" or "sample". Samples may be processed in
// parallel (capped by VQG_LAB_THREADS); results keep dataset order.
std::vector<GeneratedQuestion> infer(const Dataset& data, const ModelParams& params,
                                     const Vocabulary& vocab, const RunConfig& cfg,
                                     const std::string& mode = "argmax");

void save_generated(const std::vector<GeneratedQuestion>& gen, const std::string& path);
std::vector<GeneratedQuestion> load_generated(const std::string& path);

int thread_budget();  // hardware concurrency capped by VQG_LAB_THREADS

}  // namespace vqglab
