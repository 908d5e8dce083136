#pragma once

#include <string>

#include "vqglab/encoders.hpp"
#include "vqglab/tensor.hpp"

namespace vqglab {

enum class MixtureKind { Joint, Hadamard, Addition, Attention };

MixtureKind mixture_from_string(const std::string& s);
std::string to_string(MixtureKind m);

// One instance per fusion method; only the tensors the method uses are
// allocated.
struct MixtureParams {
  MixtureKind kind = MixtureKind::Joint;
  Tensor w_img, w_cap, b_j;  // branch projections (joint/hadamard/addition)
  Tensor w_joint;            // [H, 2H], joint only
  Tensor w_a, b_a;           // output layer (hadamard/addition/attention)
  Tensor w_grid;             // [G, H], attention: cells project as grid * w_grid
  Tensor w_catt, b_catt;     // attention caption projection
  Tensor w_p, b_p;           // attention logits: [H] and [1]
};

// s = tanh(W_j tanh(concat(W_ij g, W_cj f + b_j)))
Tensor fuse_joint(const Tensor& g, const Tensor& f, const MixtureParams& p);

// inner = tanh(W_ij g (*|+) (W_cj f + b_j)); s = tanh(W_A inner + b_A)
Tensor fuse_hadamard(const Tensor& g, const Tensor& f, const MixtureParams& p);
Tensor fuse_addition(const Tensor& g, const Tensor& f, const MixtureParams& p);

// h_att = tanh(W_I per grid cell + clone(W_C f + b_c)); attention weights by
// softmax over the 196 cells; weighted sum of raw cells plus f, then
// tanh(linear).
Tensor fuse_attention(const Tensor& grid, const Tensor& f, const MixtureParams& p);

// Dispatch by p.kind; towers carry the grid only when the attention mixture
// requested it.
Tensor fuse(const TowerEmbedding& tower, const MixtureParams& p);

// Attention probabilities over the grid cells (test and inspection hook).
Tensor attention_weights(const Tensor& grid, const Tensor& f, const MixtureParams& p);

}  // namespace vqglab
