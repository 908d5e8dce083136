#pragma once

#include <functional>
#include <string>

#include "vqglab/config.hpp"
#include "vqglab/data.hpp"
#include "vqglab/decoder.hpp"
#include "vqglab/encoders.hpp"
#include "vqglab/mixture.hpp"

namespace vqglab {

// All trainable arrays. One encoder parameter set serves the target,
// supporting and contrasting towers alike.
struct ModelParams {
  EncoderParams enc;
  MixtureParams mix;
  DecoderParams dec;

  // visits every allocated tensor in a fixed order (name, tensor)
  void visit(const std::function<void(const std::string&, Tensor&)>& fn);
  void visit(const std::function<void(const std::string&, const Tensor&)>& fn) const;
};

// Weights uniform in [-0.08, 0.08] under the run seed; LSTM forget-gate
// biases start at 1.0; embedding row 0 (PAD) starts at zero. grid_cols is
// the attention grid cell dimension (ignored by other mixtures).
ModelParams init_params(const RunConfig& cfg, int vocab_size, int grid_cols);

// Fresh leaves on the tape for one training step.
ModelParams tape_params(Tape& tape, const ModelParams& params);

// Visit-order flattening, used by gradient checks over whole model paths.
std::vector<Tensor> flatten_params(const ModelParams& params);
ModelParams unflatten_params(const ModelParams& proto, const std::vector<Tensor>& tensors);

// Checkpoint file: {"version":1, "config":{...}, "vocab":[...],
//  "params":{name:{"shape":[...],"data":[...]}}}
void save_checkpoint(const std::string& path, const RunConfig& cfg, const Vocabulary& vocab,
                     const ModelParams& params);

struct Checkpoint {
  RunConfig config;
  Vocabulary vocab;
  ModelParams params;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace vqglab
