#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "vqglab/rng.hpp"
#include "vqglab/tensor.hpp"

using namespace vqglab;

namespace {

Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(s));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("forward examples") {
  CHECK(tanh(Tensor::vec({0.0})).data[0] == 0.0);

  const Tensor s = softmax(Tensor::vec({0.0, 0.0}), 0);
  CHECK(s.data[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.data[1] == doctest::Approx(0.5).epsilon(1e-12));

  const Tensor eye = Tensor::mat(2, 2, {1, 0, 0, 1});
  const Tensor m = Tensor::mat(2, 2, {3, 4, 5, 6});
  const Tensor r = matmul(eye, m);
  CHECK(r.data == m.data);
}

TEST_CASE("matmul shape rules and errors") {
  const Tensor a = Tensor::mat(2, 3, {1, 2, 3, 4, 5, 6});
  const Tensor v = Tensor::vec({1, 1, 1});
  const Tensor mv = matmul(a, v);
  REQUIRE(mv.shape == Shape{2});
  CHECK(mv.data[0] == 6.0);
  CHECK(mv.data[1] == 15.0);

  const Tensor row = Tensor::vec({1, 1});
  const Tensor vm = matmul(row, a);
  REQUIRE(vm.shape == Shape{3});
  CHECK(vm.data[0] == 5.0);

  CHECK_THROWS_WITH_AS(matmul(a, Tensor::mat(2, 2, {1, 2, 3, 4})),
                       doctest::Contains("matmul"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(add(a, v), doctest::Contains("[2,3]"), std::invalid_argument);
}

TEST_CASE("dispatcher accepts the core set and rejects unknown kinds") {
  const Tensor x = Tensor::vec({1.0, 2.0});
  CHECK(forward("add", {x, x}).data[0] == 2.0);
  CHECK(forward("reduce-sum", {x}).value() == 3.0);
  OpArgs args;
  args.axis = 0;
  CHECK(forward("concat", {x, x}, args).numel() == 4);
  args.ids = {1};
  const Tensor table = Tensor::mat(3, 2, {0, 0, 5, 6, 0, 0});
  const Tensor looked = forward("embedding-lookup", {table}, args);
  CHECK(looked.data == std::vector<double>{5, 6});
  CHECK_THROWS_WITH_AS(forward("frobulate", {x}), doctest::Contains("unknown op-kind"),
                       std::invalid_argument);
}

TEST_CASE("backward power rule: d(x*x)/dx at 3 is 6") {
  Tape tape;
  const Tensor x = tape.leaf(Tensor::scalar(3.0));
  const Tensor y = mul(x, x);
  const Gradients g = tape.backward(y);
  CHECK(g.at(x.node)[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("backward rejects non-scalar loss and foreign tensors") {
  Tape tape;
  const Tensor x = tape.leaf(Tensor::vec({1.0, 2.0}));
  const Tensor y = add(x, x);
  CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
  CHECK_THROWS_AS(tape.backward(Tensor::scalar(1.0)), std::invalid_argument);
}

TEST_CASE("softmax cross-entropy gradient equals softmax minus one-hot") {
  Rng rng(11);
  Tape tape;
  const Tensor logits = tape.leaf(random_tensor({7}, rng, -2.0, 2.0));
  const Tensor loss = softmax_cross_entropy({logits}, {3});
  const Gradients g = tape.backward(loss);
  const auto probs = softmax_values(logits.data);
  for (int i = 0; i < 7; ++i) {
    const double expect = probs[static_cast<std::size_t>(i)] - (i == 3 ? 1.0 : 0.0);
    CHECK(g.at(logits.node)[static_cast<std::size_t>(i)] ==
          doctest::Approx(expect).epsilon(1e-12));
  }

  // and against central differences, step 1e-5
  const double err = grad_check(
      [](Tape&, std::vector<Tensor>& leaves) {
        return softmax_cross_entropy({leaves[0]}, {3});
      },
      {Tensor::vec({0.3, -1.2, 0.8, 0.1, 2.0, -0.5, 0.0})}, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("matmul chain matches finite differences") {
  Rng rng(5);
  const Tensor a = random_tensor({3, 4}, rng);
  const Tensor b = random_tensor({4, 2}, rng);
  const Tensor c = random_tensor({2}, rng);
  const double err = grad_check(
      [](Tape&, std::vector<Tensor>& leaves) {
        return reduce_sum(matmul(matmul(leaves[0], leaves[1]), leaves[2]));
      },
      {a, b, c}, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("every op kind matches central finite differences on random input") {
  Rng rng(101);
  auto check = [&](const char* name, const TapedFn& fn, std::vector<Tensor> params,
                   double tol = 1e-4) {
    const double err = grad_check(fn, params, 1e-5);
    INFO(name);
    CHECK(err < tol);
  };

  check("add+sub", [](Tape&, std::vector<Tensor>& l) {
    return reduce_sum(tanh(sub(add(l[0], l[1]), l[2])));
  }, {random_tensor({5}, rng), random_tensor({5}, rng), random_tensor({5}, rng)});

  check("mul", [](Tape&, std::vector<Tensor>& l) {
    return reduce_sum(mul(l[0], l[1]));
  }, {random_tensor({6}, rng), random_tensor({6}, rng)});

  check("matmul", [](Tape&, std::vector<Tensor>& l) {
    return reduce_sum(matmul(l[0], l[1]));
  }, {random_tensor({3, 4}, rng), random_tensor({4, 3}, rng)});

  check("concat", [](Tape&, std::vector<Tensor>& l) {
    return reduce_sum(tanh(concat({l[0], l[1]}, 0)));
  }, {random_tensor({3}, rng), random_tensor({4}, rng)});

  check("concat axis1", [](Tape&, std::vector<Tensor>& l) {
    return reduce_sum(tanh(concat({l[0], l[1]}, 1)));
  }, {random_tensor({2, 3}, rng), random_tensor({2, 2}, rng)});

  check("tanh", [](Tape&, std::vector<Tensor>& l) { return reduce_sum(tanh(l[0])); },
        {random_tensor({7}, rng)});

  check("sigmoid", [](Tape&, std::vector<Tensor>& l) { return reduce_sum(sigmoid(l[0])); },
        {random_tensor({7}, rng)});

  // keep relu inputs away from the kink
  Tensor rin = random_tensor({9}, rng);
  for (double& v : rin.data)
    if (std::abs(v) < 1e-2) v = 0.5;
  check("relu", [](Tape&, std::vector<Tensor>& l) { return reduce_sum(relu(l[0])); }, {rin});

  check("softmax", [](Tape&, std::vector<Tensor>& l) {
    return reduce_sum(mul(softmax(l[0], 0), l[1]));
  }, {random_tensor({5}, rng), random_tensor({5}, rng)});

  check("softmax rank2 axis0", [](Tape&, std::vector<Tensor>& l) {
    return reduce_sum(mul(softmax(l[0], 0), l[1]));
  }, {random_tensor({4, 3}, rng), random_tensor({4, 3}, rng)});

  check("log", [](Tape&, std::vector<Tensor>& l) { return reduce_sum(log(l[0])); },
        {random_tensor({5}, rng, 0.2, 1.0)});

  check("embedding", [](Tape&, std::vector<Tensor>& l) {
    return reduce_sum(tanh(embedding_lookup(l[0], {0, 2, 2})));
  }, {random_tensor({4, 3}, rng)});

  check("reduce_mean", [](Tape&, std::vector<Tensor>& l) { return reduce_mean(l[0]); },
        {random_tensor({8}, rng)});

  check("squared_l2", [](Tape&, std::vector<Tensor>& l) {
    return squared_l2_distance(l[0], l[1]);
  }, {random_tensor({6}, rng), random_tensor({6}, rng)});

  check("repeat_rows", [](Tape&, std::vector<Tensor>& l) {
    return reduce_sum(tanh(repeat_rows(l[0], 4)));
  }, {random_tensor({3}, rng)});

  check("repeat_scalar", [](Tape&, std::vector<Tensor>& l) {
    return reduce_sum(tanh(repeat_scalar(l[0], 5)));
  }, {random_tensor({1}, rng)});

  check("row_max", [](Tape&, std::vector<Tensor>& l) {
    return reduce_sum(row_max(l[0]));
  }, {random_tensor({4, 3}, rng)});

  check("temporal_conv", [](Tape&, std::vector<Tensor>& l) {
    return reduce_sum(tanh(temporal_conv(l[0], l[1], l[2], 2)));
  }, {random_tensor({5, 3}, rng), random_tensor({4, 6}, rng), random_tensor({4}, rng)});

  check("reshape", [](Tape&, std::vector<Tensor>& l) {
    return reduce_sum(tanh(reshape(l[0], {6})));
  }, {random_tensor({2, 3}, rng)});
}

TEST_CASE("softmax entries are positive and sum to one") {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = random_tensor({11}, rng, -30.0, 30.0);
    const Tensor y = softmax(x, 0);
    double sum = 0.0;
    for (double v : y.data) {
      CHECK(v > 0.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("tape linearity: sum of independent subgraphs") {
  Rng rng(3);
  const Tensor a0 = random_tensor({4}, rng);
  const Tensor b0 = random_tensor({4}, rng);

  Tape joint;
  const Tensor a = joint.leaf(a0);
  const Tensor b = joint.leaf(b0);
  const Tensor loss = add(reduce_sum(tanh(a)), reduce_sum(mul(b, b)));
  const Gradients g = joint.backward(loss);

  Tape only_a;
  const Tensor a2 = only_a.leaf(a0);
  const Gradients ga = only_a.backward(reduce_sum(tanh(a2)));
  Tape only_b;
  const Tensor b2 = only_b.leaf(b0);
  const Gradients gb = only_b.backward(reduce_sum(mul(b2, b2)));

  CHECK(g.at(a.node) == ga.at(a2.node));
  CHECK(g.at(b.node) == gb.at(b2.node));
}

TEST_CASE("unreached leaves get zero gradient") {
  Tape tape;
  const Tensor used = tape.leaf(Tensor::vec({1.0, 2.0}));
  const Tensor unused = tape.leaf(Tensor::vec({3.0}));
  const Gradients g = tape.backward(reduce_sum(used));
  CHECK(g.at(unused.node) == std::vector<double>{0.0});
}

TEST_CASE("replay determinism: identical program, identical bits") {
  auto run = [] {
    Rng rng(19);
    Tape tape;
    const Tensor w = tape.leaf(random_tensor({4, 5}, rng));
    const Tensor x = tape.leaf(random_tensor({5}, rng));
    const Tensor loss = reduce_sum(tanh(matmul(w, x)));
    Gradients g = tape.backward(loss);
    std::vector<double> out = g.at(w.node);
    const auto gx = g.at(x.node);
    out.insert(out.end(), gx.begin(), gx.end());
    out.push_back(loss.value());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("grad_check: linear layer + tanh + reduce-sum") {
  Rng rng(23);
  const double err = grad_check(
      [](Tape&, std::vector<Tensor>& l) {
        return reduce_sum(tanh(add(matmul(l[0], l[1]), l[2])));
      },
      {random_tensor({4, 6}, rng), random_tensor({6}, rng), random_tensor({4}, rng)}, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("grad_check rejects non-scalar programs and flags corrupted gradients") {
  CHECK_THROWS_AS(grad_check([](Tape&, std::vector<Tensor>& l) { return tanh(l[0]); },
                             {Tensor::vec({1.0, 2.0})}, 1e-5),
                  std::invalid_argument);

  // broken-oracle sentinel: one analytic entry doubled must be detected
  Rng rng(29);
  const Tensor w = random_tensor({3, 3}, rng);
  const Tensor x = random_tensor({3}, rng);
  const TapedFn fn = [](Tape&, std::vector<Tensor>& l) {
    return reduce_sum(tanh(matmul(l[0], l[1])));
  };
  Tape tape;
  std::vector<Tensor> leaves{tape.leaf(w), tape.leaf(x)};
  const Gradients g = tape.backward(fn(tape, leaves));
  std::vector<std::vector<double>> analytic{g.at(leaves[0].node), g.at(leaves[1].node)};
  CHECK(max_rel_error_vs_numeric(fn, {w, x}, analytic, 1e-5) < 1e-6);
  analytic[0][0] *= 2.0;
  CHECK(max_rel_error_vs_numeric(fn, {w, x}, analytic, 1e-5) > 1e-2);
}

TEST_CASE("log rejects non-positive input") {
  CHECK_THROWS_WITH_AS(log(Tensor::vec({1.0, 0.0})), doctest::Contains("log"),
                       std::invalid_argument);
}
