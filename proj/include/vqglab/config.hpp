#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

namespace vqglab {

// Run configuration. JSON files carry a "version" field; command-line flags
// override file values; unknown keys are rejected.
struct RunConfig {
  std::string variant = "mdn";    // mdn|diff-image|tag|place
  std::string mixture = "joint";  // joint|hadamard|addition|attention

  struct Exemplar {
    int k = 5;
    std::string mode = "knn";  // knn|random|none
  } exemplar;

  struct Loss {
    double alpha = 0.2;
    double gamma = 1.0;
    int n_max = 20;
  } loss;

  struct Optimizer {
    double lr = 0.0004;
    double rho = 0.99;
    double epsilon = 1e-8;
    int batch = 200;
    double decay_a = 1500;
    double decay_b = 1250;
    bool decay_per_iteration = false;
    double clip = 0.0;  // 0 disables gradient clipping
    // when enabled, the triplet term is optimized in a second pass with its
    // own hyperparameters (defaults mirror the separate triplet settings)
    bool separate_triplet_optimizer = false;
    double triplet_lr = 0.001;
    double triplet_rho = 0.9;
  } optimizer;

  struct Dims {
    int d_img = 4096;
    int hidden = 512;
    int embed = 512;
    int tag_filters = 64;
    int grid = 512;
  } dims;

  std::uint64_t seed = 1;
  int epochs = 10;
  int vocab_min_count = 1;
  std::string tag_combine = "concat";  // concat|add|mul|conv1d
  bool pos_lexicon = true;             // builtin lexicon for missing tags
};

RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::string& path);
nlohmann::json config_to_json(const RunConfig& cfg);
void validate_config(const RunConfig& cfg);

}  // namespace vqglab
