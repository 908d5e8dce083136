#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vqglab/mixture.hpp"
#include "vqglab/model.hpp"
#include "vqglab/rng.hpp"

using namespace vqglab;

namespace {

constexpr int kH = 10;

MixtureParams random_mixture(MixtureKind kind, std::uint64_t seed, int grid_cols = kH) {
  RunConfig cfg;
  cfg.dims.d_img = 8;
  cfg.dims.hidden = kH;
  cfg.dims.embed = 8;
  cfg.dims.grid = grid_cols;
  cfg.mixture = to_string(kind);
  cfg.seed = seed;
  ModelParams m = init_params(cfg, 6, grid_cols);
  Rng rng(seed + 1);
  m.visit([&rng](const std::string&, Tensor& t) {
    for (double& v : t.data) v = rng.uniform(-0.5, 0.5);
  });
  return m.mix;
}

Tensor rand_vec(int n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor t = Tensor::zeros({n});
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

Tensor rand_grid(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t = Tensor::zeros({rows, cols});
  for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("fuse_joint: zero propagation and shape") {
  MixtureParams p = random_mixture(MixtureKind::Joint, 3);
  p.b_j = Tensor::zeros({kH});
  const Tensor s = fuse_joint(Tensor::zeros({kH}), Tensor::zeros({kH}), p);
  REQUIRE(s.shape == Shape{kH});
  for (double v : s.data) CHECK(v == 0.0);

  // inner concat carries both branches
  CHECK(p.w_joint.shape == Shape{kH, 2 * kH});
  CHECK_THROWS_AS(fuse_joint(Tensor::zeros({kH + 1}), Tensor::zeros({kH}), p),
                  std::invalid_argument);
}

TEST_CASE("all fusion methods emit tanh-bounded hidden-length vectors") {
  const Tensor g = rand_vec(kH, 5);
  const Tensor f = rand_vec(kH, 6);
  const Tensor grid = rand_grid(196, kH, 7);
  for (const MixtureKind kind : {MixtureKind::Joint, MixtureKind::Hadamard,
                                 MixtureKind::Addition, MixtureKind::Attention}) {
    const MixtureParams p = random_mixture(kind, 11);
    TowerEmbedding tower;
    tower.image = g;
    tower.context = f;
    if (kind == MixtureKind::Attention) tower.grid = grid;
    const Tensor s = fuse(tower, p);
    REQUIRE(s.shape == Shape{kH});
    for (double v : s.data) {
      CHECK(v > -1.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("hadamard: zero caption projection annihilates to tanh(b_A)") {
  MixtureParams p = random_mixture(MixtureKind::Hadamard, 13);
  p.w_cap = Tensor::zeros(p.w_cap.shape);
  p.b_j = Tensor::zeros(p.b_j.shape);
  const Tensor s = fuse_hadamard(rand_vec(kH, 1), rand_vec(kH, 2), p);
  for (int i = 0; i < kH; ++i) {
    CHECK(s(i) == doctest::Approx(std::tanh(p.b_a(i))).epsilon(1e-12));
  }
}

TEST_CASE("addition: zero image projection reduces to the caption-only path") {
  MixtureParams p = random_mixture(MixtureKind::Addition, 17);
  p.w_img = Tensor::zeros(p.w_img.shape);
  const Tensor f = rand_vec(kH, 3);
  const Tensor s1 = fuse_addition(rand_vec(kH, 4), f, p);
  const Tensor s2 = fuse_addition(rand_vec(kH, 5), f, p);  // different image, same caption
  CHECK(s1.data == s2.data);
}

TEST_CASE("hadamard symmetry: swapping projections swaps the arguments") {
  MixtureParams p = random_mixture(MixtureKind::Hadamard, 19);
  p.b_j = Tensor::zeros(p.b_j.shape);  // bias sits on one branch only
  MixtureParams swapped = p;
  std::swap(swapped.w_img, swapped.w_cap);
  const Tensor g = rand_vec(kH, 6), f = rand_vec(kH, 7);
  const Tensor a = fuse_hadamard(g, f, p);
  const Tensor b = fuse_hadamard(f, g, swapped);
  for (int i = 0; i < kH; ++i) CHECK(a(i) == doctest::Approx(b(i)).epsilon(1e-12));
}

TEST_CASE("attention: probabilities normalize, uniform grids collapse, spikes saturate") {
  const MixtureParams p = random_mixture(MixtureKind::Attention, 23);
  const Tensor f = rand_vec(kH, 8);

  const Tensor grid = rand_grid(196, kH, 9);
  const Tensor probs = attention_weights(grid, f, p);
  REQUIRE(probs.shape == Shape{196});
  double sum = 0.0;
  for (double v : probs.data) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));

  // identical cells: the weighted sum is that cell no matter the weights
  const Tensor v = rand_vec(kH, 10);
  Tensor uniform = Tensor::zeros({196, kH});
  for (int r = 0; r < 196; ++r)
    for (int c = 0; c < kH; ++c) uniform.data[static_cast<std::size_t>(r) * kH + c] = v(c);
  const Tensor w = attention_weights(uniform, f, p);
  Tensor v_att = matmul(w, uniform);
  for (int c = 0; c < kH; ++c) CHECK(v_att(c) == doctest::Approx(v(c)).epsilon(1e-9));

  // one logit dominating by far more than +50 takes all the mass
  {
    MixtureParams q = p;
    q.w_catt = Tensor::zeros(q.w_catt.shape);
    q.b_catt = Tensor::zeros(q.b_catt.shape);
    q.w_grid = Tensor::zeros({kH, kH});
    for (int i = 0; i < kH; ++i)
      q.w_grid.data[static_cast<std::size_t>(i) * kH + i] = 1.0;
    q.w_p = Tensor::full({kH}, 10.0);
    q.b_p = Tensor::zeros({1});
    // saturated h_att rows: one at ~+1 everywhere, the rest at ~-1, so the
    // logit margin is about 2 * 10 * kH
    Tensor grid2 = Tensor::full({196, kH}, -5.0);
    const int arg = 57;
    for (int c = 0; c < kH; ++c)
      grid2.data[static_cast<std::size_t>(arg) * kH + c] = 5.0;
    const Tensor w2 = attention_weights(grid2, Tensor::zeros({kH}), q);
    CHECK(w2(arg) > 1.0 - 1e-12);
    const Tensor v2 = matmul(w2, grid2);
    for (int c = 0; c < kH; ++c) CHECK(std::abs(v2(c) - grid2(arg, c)) < 1e-9);
  }
}

TEST_CASE("attention requires a grid and matching dimensions") {
  const MixtureParams p = random_mixture(MixtureKind::Attention, 29);
  TowerEmbedding tower;
  tower.image = rand_vec(kH, 1);
  tower.context = rand_vec(kH, 2);
  CHECK_THROWS_WITH_AS(fuse(tower, p), doctest::Contains("grid_features"),
                       std::invalid_argument);
  CHECK_THROWS_AS(fuse_attention(rand_grid(196, kH + 2, 3), tower.context, p),
                  std::invalid_argument);
}

TEST_CASE("tanh saturation never produces out-of-range context entries") {
  // logits far beyond the linear range still map into (-1, 1)
  MixtureParams p = random_mixture(MixtureKind::Hadamard, 31);
  const Tensor s = fuse_hadamard(Tensor::full({kH}, 40.0), Tensor::full({kH}, 40.0), p);
  for (double v : s.data) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("gradients flow through every fusion method") {
  Rng rng(37);
  Tensor probe = Tensor::zeros({kH});
  for (double& v : probe.data) v = rng.uniform(0.5, 1.0);
  const Tensor g0 = rand_vec(kH, 41);
  const Tensor f0 = rand_vec(kH, 42);
  const Tensor grid0 = rand_grid(14, kH, 43);  // smaller grid keeps the check quick

  for (const MixtureKind kind : {MixtureKind::Joint, MixtureKind::Hadamard,
                                 MixtureKind::Addition, MixtureKind::Attention}) {
    const MixtureParams proto = random_mixture(kind, 47);
    std::vector<Tensor> params;
    const bool attn = kind == MixtureKind::Attention;
    if (attn) {
      params = {proto.w_grid, proto.w_catt, proto.b_catt, proto.w_p, proto.b_p,
                proto.w_a,    proto.b_a,    grid0,        f0};
    } else if (kind == MixtureKind::Joint) {
      params = {proto.w_img, proto.w_cap, proto.b_j, proto.w_joint, g0, f0};
    } else {
      params = {proto.w_img, proto.w_cap, proto.b_j, proto.w_a, proto.b_a, g0, f0};
    }
    const double err = grad_check(
        [&](Tape&, std::vector<Tensor>& l) {
          MixtureParams p = proto;
          Tensor s;
          if (attn) {
            p.w_grid = l[0];
            p.w_catt = l[1];
            p.b_catt = l[2];
            p.w_p = l[3];
            p.b_p = l[4];
            p.w_a = l[5];
            p.b_a = l[6];
            s = fuse_attention(l[7], l[8], p);
          } else if (kind == MixtureKind::Joint) {
            p.w_img = l[0];
            p.w_cap = l[1];
            p.b_j = l[2];
            p.w_joint = l[3];
            s = fuse_joint(l[4], l[5], p);
          } else {
            p.w_img = l[0];
            p.w_cap = l[1];
            p.b_j = l[2];
            p.w_a = l[3];
            p.b_a = l[4];
            s = kind == MixtureKind::Hadamard ? fuse_hadamard(l[5], l[6], p)
                                              : fuse_addition(l[5], l[6], p);
          }
          return reduce_sum(mul(s, probe));
        },
        params, 1e-5);
    INFO(to_string(kind));
    CHECK(err < 1e-4);
  }
}

TEST_CASE("shared mixture weights treat the exemplar towers identically") {
  const MixtureParams p = random_mixture(MixtureKind::Joint, 53);
  const Tensor g = rand_vec(kH, 54), f = rand_vec(kH, 55);
  // one MixtureParams instance serves (g+,f+) and (g-,f-): same function
  const Tensor a = fuse_joint(g, f, p);
  const Tensor b = fuse_joint(g, f, p);
  CHECK(a.data == b.data);
}
