#pragma once

#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vqglab {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
int shape_numel(const Shape& s);

class Tape;

// Dense 64-bit tensor, row-major. A tensor optionally belongs to a tape
// (node >= 0); tensors without tape membership are constants and never
// receive gradients.
struct Tensor {
  Shape shape;
  std::vector<double> data;
  Tape* tape = nullptr;
  int node = -1;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> d);

  static Tensor zeros(Shape s);
  static Tensor full(Shape s, double v);
  static Tensor scalar(double v);
  static Tensor vec(std::vector<double> d);
  static Tensor mat(int rows, int cols, std::vector<double> d);

  int numel() const { return static_cast<int>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  bool is_scalar() const { return data.size() == 1; }
  bool on_tape() const { return tape != nullptr && node >= 0; }
  double value() const;  // scalar contents; throws when numel != 1

  double operator()(int i) const { return data[static_cast<std::size_t>(i)]; }
  double operator()(int i, int j) const {
    return data[static_cast<std::size_t>(i) * static_cast<std::size_t>(shape[1]) +
                static_cast<std::size_t>(j)];
  }
};

// Gradient buffers produced by Tape::backward, keyed by leaf node id.
// Leaves the loss never reached hold explicit zeros.
class Gradients {
 public:
  const std::vector<double>& at(int node_id) const;
  Tensor grad_of(const Tensor& leaf) const;

 private:
  friend class Tape;
  std::vector<int> leaf_ids_;
  std::vector<Shape> leaf_shapes_;
  std::vector<std::vector<double>> buffers_;
};

// Reverse-mode tape. Records operations in forward execution order and
// traverses them strictly in reverse on backward. One tape per training
// step; single-threaded per tape.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  int node_count() const { return static_cast<int>(nodes_.size()); }

  // Registers a trainable leaf. On a non-recording tape the value is
  // returned as a plain constant.
  Tensor leaf(const Tensor& value);

  // Gradient of a scalar loss w.r.t. every recorded leaf.
  Gradients backward(const Tensor& loss);

  // ---- recording machinery used by the op implementations ----
  using BackFn = std::function<void(Tape&, int self, std::span<const double> dout)>;

  // Either a node reference or an owned copy (constants only).
  struct Saved {
    int node = -1;
    Shape shape;
    std::vector<double> owned;
  };
  Saved save(const Tensor& t) const;
  std::span<const double> data_of(const Saved& s) const;

  int record(const Shape& shape, const std::vector<double>& value, BackFn back,
             bool is_leaf = false);
  std::span<const double> value_of(int node) const;
  void accumulate(int node, std::span<const double> g);
  std::vector<double>& grad_buffer(int node);

 private:
  struct Node {
    BackFn back;
    Shape shape;
    std::vector<double> value;
    bool is_leaf = false;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  bool recording_ = true;
};

// ---- forward operations -----------------------------------------------
// Shape rules (no broadcasting anywhere):
//   matmul  [m,k]x[k,n] -> [m,n];  [m,k]x[k] -> [m];  [k]x[k,n] -> [n]
//   add/sub/mul           identical shapes, elementwise
//   concat                equal rank, equal extents except `axis`
//   tanh/relu/log/sigmoid elementwise, shape preserved
//   softmax               rank 1 (axis 0) or rank 2 (axis 0 or 1)
//   embedding_lookup      table [V,E], ids [n] -> [n,E]
//   reduce_sum/mean       any shape -> scalar [1]
//   squared_l2_distance   identical shapes -> scalar [1]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor softmax(const Tensor& x, int axis);
Tensor log(const Tensor& x);
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);
Tensor reduce_sum(const Tensor& x);
Tensor reduce_mean(const Tensor& x);
Tensor squared_l2_distance(const Tensor& a, const Tensor& b);

// Additional primitives behind the model (explicit clone instead of
// broadcasting; fused stable cross-entropy; tag-net pooling plumbing).
Tensor sigmoid(const Tensor& x);
Tensor reshape(const Tensor& x, Shape s);
Tensor repeat_rows(const Tensor& v, int rows);     // [n] -> [rows,n]
Tensor repeat_scalar(const Tensor& s, int n);      // [1] -> [n]
Tensor row_max(const Tensor& x);                   // [t,f] -> [f], max over rows
Tensor temporal_conv(const Tensor& x, const Tensor& w, const Tensor& b,
                     int width);                   // [t,e],[f,width*e],[f] -> [t-width+1,f]
Tensor scale(const Tensor& x, double c);

// Mean negative log-likelihood over steps; softmax folded in through the
// log-sum-exp identity so large logits stay finite. logits: one [V] tensor
// per step; targets: one id per step.
Tensor softmax_cross_entropy(const std::vector<Tensor>& logits,
                             const std::vector<int>& targets);

// Dynamic dispatcher over the core op set. Unknown kinds are rejected.
struct OpArgs {
  int axis = -1;
  std::vector<int> ids;
};
Tensor forward(std::string_view op_kind, const std::vector<Tensor>& inputs,
               const OpArgs& args = {});

// Numerically stable softmax of a plain buffer (no tape involvement).
std::vector<double> softmax_values(std::span<const double> logits);

// ---- gradient checking --------------------------------------------------
// fn builds a scalar loss from taped leaves (one leaf per entry of params,
// same order). Returns the max over all parameter entries of
// |analytic - numeric| / max(1e-8, |analytic| + |numeric|), numeric from
// central differences with the given step.
using TapedFn = std::function<Tensor(Tape&, std::vector<Tensor>&)>;
double grad_check(const TapedFn& fn, const std::vector<Tensor>& params, double step);

// Same comparison against caller-supplied analytic gradients; grad_check is
// this applied to the tape's own backward output.
double max_rel_error_vs_numeric(const TapedFn& fn, const std::vector<Tensor>& params,
                                const std::vector<std::vector<double>>& analytic,
                                double step);

}  // namespace vqglab
