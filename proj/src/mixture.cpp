#include "vqglab/mixture.hpp"

#include <stdexcept>

namespace vqglab {

MixtureKind mixture_from_string(const std::string& s) {
  if (s == "joint") return MixtureKind::Joint;
  if (s == "hadamard") return MixtureKind::Hadamard;
  if (s == "addition") return MixtureKind::Addition;
  if (s == "attention") return MixtureKind::Attention;
  throw std::invalid_argument("unknown mixture method '" + s +
                              "' (expected joint|hadamard|addition|attention)");
}

std::string to_string(MixtureKind m) {
  switch (m) {
    case MixtureKind::Joint: return "joint";
    case MixtureKind::Hadamard: return "hadamard";
    case MixtureKind::Addition: return "addition";
    case MixtureKind::Attention: return "attention";
  }
  return "?";
}

Tensor fuse_joint(const Tensor& g, const Tensor& f, const MixtureParams& p) {
  const Tensor gi = matmul(p.w_img, g);
  const Tensor fi = add(matmul(p.w_cap, f), p.b_j);
  return tanh(matmul(p.w_joint, tanh(concat({gi, fi}, 0))));
}

namespace {

Tensor fuse_elementwise(const Tensor& g, const Tensor& f, const MixtureParams& p,
                        bool multiply) {
  const Tensor gi = matmul(p.w_img, g);
  const Tensor fi = add(matmul(p.w_cap, f), p.b_j);
  const Tensor inner = tanh(multiply ? mul(gi, fi) : add(gi, fi));
  return tanh(add(matmul(p.w_a, inner), p.b_a));
}

void check_attention_inputs(const Tensor& grid, const Tensor& f, const MixtureParams& p) {
  if (grid.numel() == 0) {
    throw std::invalid_argument("fuse_attention: sample has no grid_features; supply "
                                "grid_features in the dataset to use the attention mixture");
  }
  if (grid.rank() != 2) {
    throw std::invalid_argument("fuse_attention: grid must be rank 2, got " +
                                shape_str(grid.shape));
  }
  if (p.w_grid.shape[0] != grid.shape[1]) {
    throw std::invalid_argument("fuse_attention: grid cell dim " +
                                std::to_string(grid.shape[1]) +
                                " does not match the grid projection " +
                                shape_str(p.w_grid.shape));
  }
  if (grid.shape[1] != f.shape[0]) {
    throw std::invalid_argument(
        "fuse_attention: grid cell dim " + std::to_string(grid.shape[1]) +
        " must equal the embedding size " + std::to_string(f.shape[0]) +
        " (the attended cell sum adds to the caption embedding)");
  }
}

}  // namespace

Tensor fuse_hadamard(const Tensor& g, const Tensor& f, const MixtureParams& p) {
  return fuse_elementwise(g, f, p, /*multiply=*/true);
}

Tensor fuse_addition(const Tensor& g, const Tensor& f, const MixtureParams& p) {
  return fuse_elementwise(g, f, p, /*multiply=*/false);
}

Tensor attention_weights(const Tensor& grid, const Tensor& f, const MixtureParams& p) {
  check_attention_inputs(grid, f, p);
  const int cells = grid.shape[0];
  // w_grid is stored [G,H]: cells project as grid * w_grid
  const Tensor gproj = matmul(grid, p.w_grid);
  const Tensor cap = add(matmul(p.w_catt, f), p.b_catt);
  const Tensor h_att = tanh(add(gproj, repeat_rows(cap, cells)));
  const Tensor logits = add(matmul(h_att, p.w_p), repeat_scalar(p.b_p, cells));
  return softmax(logits, 0);
}

Tensor fuse_attention(const Tensor& grid, const Tensor& f, const MixtureParams& p) {
  const Tensor probs = attention_weights(grid, f, p);
  const Tensor v_att = matmul(probs, grid);  // weighted sum of raw cells
  const Tensor a_att = add(v_att, f);
  return tanh(add(matmul(p.w_a, a_att), p.b_a));
}

Tensor fuse(const TowerEmbedding& tower, const MixtureParams& p) {
  switch (p.kind) {
    case MixtureKind::Joint: return fuse_joint(tower.image, tower.context, p);
    case MixtureKind::Hadamard: return fuse_hadamard(tower.image, tower.context, p);
    case MixtureKind::Addition: return fuse_addition(tower.image, tower.context, p);
    case MixtureKind::Attention: return fuse_attention(tower.grid, tower.context, p);
  }
  throw std::logic_error("fuse: bad mixture kind");
}

}  // namespace vqglab
