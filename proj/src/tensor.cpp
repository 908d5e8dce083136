#include "vqglab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace vqglab {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

int shape_numel(const Shape& s) {
  int n = 1;
  for (int e : s) n *= e;
  return n;
}

namespace {

void check_shape_valid(const Shape& s, const char* who) {
  for (int e : s) {
    if (e <= 0) {
      throw std::invalid_argument(std::string(who) + ": non-positive extent in shape " +
                                  shape_str(s));
    }
  }
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch: " + shape_str(a) +
                              " vs " + shape_str(b));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) shape_error(op, a.shape, b.shape);
}

// Tape the result belongs to, if any input is recorded.
Tape* tape_of(std::initializer_list<const Tensor*> ts) {
  Tape* t = nullptr;
  for (const Tensor* x : ts) {
    if (!x->on_tape()) continue;
    if (t != nullptr && t != x->tape) {
      throw std::invalid_argument("operands were recorded on different tapes");
    }
    t = x->tape;
  }
  return t;
}

int node_on(const Tape* t, const Tensor& x) {
  return (x.on_tape() && x.tape == t) ? x.node : -1;
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  check_shape_valid(shape, "Tensor");
  if (shape_numel(shape) != static_cast<int>(data.size())) {
    throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " wants " +
                                std::to_string(shape_numel(shape)) + " values, got " +
                                std::to_string(data.size()));
  }
}

Tensor Tensor::zeros(Shape s) { return full(std::move(s), 0.0); }

Tensor Tensor::full(Shape s, double v) {
  check_shape_valid(s, "Tensor::full");
  std::vector<double> d(static_cast<std::size_t>(shape_numel(s)), v);
  return Tensor(std::move(s), std::move(d));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::vec(std::vector<double> d) {
  Shape s{static_cast<int>(d.size())};
  return Tensor(std::move(s), std::move(d));
}

Tensor Tensor::mat(int rows, int cols, std::vector<double> d) {
  return Tensor({rows, cols}, std::move(d));
}

double Tensor::value() const {
  if (!is_scalar()) {
    throw std::invalid_argument("Tensor::value: tensor of shape " + shape_str(shape) +
                                " is not scalar");
  }
  return data[0];
}

// ---- Gradients -------------------------------------------------------------

const std::vector<double>& Gradients::at(int node_id) const {
  for (std::size_t i = 0; i < leaf_ids_.size(); ++i) {
    if (leaf_ids_[i] == node_id) return buffers_[i];
  }
  throw std::invalid_argument("Gradients::at: node " + std::to_string(node_id) +
                              " is not a recorded leaf");
}

Tensor Gradients::grad_of(const Tensor& leaf) const {
  if (!leaf.on_tape()) {
    throw std::invalid_argument("Gradients::grad_of: tensor is not on a tape");
  }
  return Tensor(leaf.shape, at(leaf.node));
}

// ---- Tape ------------------------------------------------------------------

Tensor Tape::leaf(const Tensor& value) {
  Tensor out(value.shape, value.data);
  if (!recording_) return out;
  out.tape = this;
  out.node = record(out.shape, out.data, nullptr, /*is_leaf=*/true);
  return out;
}

Tape::Saved Tape::save(const Tensor& t) const {
  if (t.on_tape() && t.tape == this) return Saved{t.node, t.shape, {}};
  return Saved{-1, t.shape, t.data};
}

std::span<const double> Tape::data_of(const Saved& s) const {
  if (s.node >= 0) return value_of(s.node);
  return std::span<const double>(s.owned);
}

int Tape::record(const Shape& shape, const std::vector<double>& value, BackFn back,
                 bool is_leaf) {
  Node n;
  n.back = std::move(back);
  n.shape = shape;
  n.value = value;
  n.is_leaf = is_leaf;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

std::span<const double> Tape::value_of(int node) const {
  return std::span<const double>(nodes_[static_cast<std::size_t>(node)].value);
}

std::vector<double>& Tape::grad_buffer(int node) {
  auto& buf = grads_[static_cast<std::size_t>(node)];
  if (buf.empty()) {
    buf.assign(nodes_[static_cast<std::size_t>(node)].value.size(), 0.0);
  }
  return buf;
}

void Tape::accumulate(int node, std::span<const double> g) {
  auto& buf = grad_buffer(node);
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

Gradients Tape::backward(const Tensor& loss) {
  if (!recording_) throw std::logic_error("Tape::backward: tape is not recording");
  if (nodes_.empty()) throw std::invalid_argument("Tape::backward: tape is empty");
  if (!loss.is_scalar()) {
    throw std::invalid_argument("Tape::backward: loss has shape " + shape_str(loss.shape) +
                                ", expected a scalar");
  }
  if (!loss.on_tape() || loss.tape != this) {
    throw std::invalid_argument("Tape::backward: loss is not recorded on this tape");
  }

  grads_.assign(nodes_.size(), {});
  grad_buffer(loss.node)[0] = 1.0;
  for (int i = loss.node; i >= 0; --i) {
    auto& buf = grads_[static_cast<std::size_t>(i)];
    if (buf.empty()) continue;  // never reached the loss
    const auto& node = nodes_[static_cast<std::size_t>(i)];
    if (node.back) node.back(*this, i, std::span<const double>(buf));
  }

  Gradients out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].is_leaf) continue;
    out.leaf_ids_.push_back(static_cast<int>(i));
    out.leaf_shapes_.push_back(nodes_[i].shape);
    if (grads_[i].empty()) {
      out.buffers_.emplace_back(nodes_[i].value.size(), 0.0);
    } else {
      out.buffers_.push_back(std::move(grads_[i]));
    }
  }
  grads_.clear();
  return out;
}

// ---- op helpers -------------------------------------------------------------

namespace {

// Finish an op: attach the result to the tape when any input was recorded.
Tensor finish(Tensor out, Tape* t, Tape::BackFn back) {
  if (t != nullptr && t->recording()) {
    out.tape = t;
    out.node = t->record(out.shape, out.data, std::move(back));
  }
  return out;
}

}  // namespace

// ---- arithmetic -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Tensor out(a.shape, a.data);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  Tape* t = tape_of({&a, &b});
  if (t == nullptr) return out;
  const int ia = node_on(t, a), ib = node_on(t, b);
  return finish(std::move(out), t, [ia, ib](Tape& tp, int, std::span<const double> d) {
    if (ia >= 0) tp.accumulate(ia, d);
    if (ib >= 0) tp.accumulate(ib, d);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Tensor out(a.shape, a.data);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
  Tape* t = tape_of({&a, &b});
  if (t == nullptr) return out;
  const int ia = node_on(t, a), ib = node_on(t, b);
  return finish(std::move(out), t, [ia, ib](Tape& tp, int, std::span<const double> d) {
    if (ia >= 0) tp.accumulate(ia, d);
    if (ib >= 0) {
      auto& buf = tp.grad_buffer(ib);
      for (std::size_t i = 0; i < d.size(); ++i) buf[i] -= d[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("elementwise-mul", a, b);
  Tensor out(a.shape, a.data);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
  Tape* t = tape_of({&a, &b});
  if (t == nullptr) return out;
  const int ia = node_on(t, a), ib = node_on(t, b);
  const Tape::Saved sa = t->save(a), sb = t->save(b);
  return finish(std::move(out), t,
                [ia, ib, sa, sb](Tape& tp, int, std::span<const double> d) {
                  if (ia >= 0) {
                    auto bv = tp.data_of(sb);
                    auto& buf = tp.grad_buffer(ia);
                    for (std::size_t i = 0; i < d.size(); ++i) buf[i] += d[i] * bv[i];
                  }
                  if (ib >= 0) {
                    auto av = tp.data_of(sa);
                    auto& buf = tp.grad_buffer(ib);
                    for (std::size_t i = 0; i < d.size(); ++i) buf[i] += d[i] * av[i];
                  }
                });
}

Tensor scale(const Tensor& x, double c) { return mul(x, Tensor::full(x.shape, c)); }

// ---- matmul -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  // supported: [m,k]x[k,n] -> [m,n]; [m,k]x[k] -> [m]; [k]x[k,n] -> [n]
  int m, k, n;
  enum class Kind { MM, MV, VM } kind;
  if (a.rank() == 2 && b.rank() == 2) {
    kind = Kind::MM;
    m = a.shape[0];
    k = a.shape[1];
    n = b.shape[1];
    if (b.shape[0] != k) shape_error("matmul", a.shape, b.shape);
  } else if (a.rank() == 2 && b.rank() == 1) {
    kind = Kind::MV;
    m = a.shape[0];
    k = a.shape[1];
    n = 1;
    if (b.shape[0] != k) shape_error("matmul", a.shape, b.shape);
  } else if (a.rank() == 1 && b.rank() == 2) {
    kind = Kind::VM;
    m = 1;
    k = a.shape[0];
    n = b.shape[1];
    if (b.shape[0] != k) shape_error("matmul", a.shape, b.shape);
  } else {
    throw std::invalid_argument("matmul: unsupported ranks " + shape_str(a.shape) + " x " +
                                shape_str(b.shape));
  }

  Shape out_shape = kind == Kind::MM  ? Shape{m, n}
                    : kind == Kind::MV ? Shape{m}
                                       : Shape{n};
  Tensor out = Tensor::zeros(out_shape);
  const double* pa = a.data.data();
  const double* pb = b.data.data();
  double* po = out.data.data();
  for (int i = 0; i < m; ++i) {
    for (int kk = 0; kk < k; ++kk) {
      const double av = pa[i * k + kk];
      for (int j = 0; j < n; ++j) po[i * n + j] += av * pb[kk * n + j];
    }
  }

  Tape* t = tape_of({&a, &b});
  if (t == nullptr) return out;
  const int ia = node_on(t, a), ib = node_on(t, b);
  const Tape::Saved sa = t->save(a), sb = t->save(b);
  return finish(std::move(out), t,
                [ia, ib, sa, sb, m, k, n](Tape& tp, int, std::span<const double> d) {
                  if (ia >= 0) {
                    auto bv = tp.data_of(sb);
                    auto& ga = tp.grad_buffer(ia);
                    // dA = dOut * B^T
                    for (int i = 0; i < m; ++i)
                      for (int kk = 0; kk < k; ++kk) {
                        double acc = 0.0;
                        for (int j = 0; j < n; ++j) acc += d[i * n + j] * bv[kk * n + j];
                        ga[i * k + kk] += acc;
                      }
                  }
                  if (ib >= 0) {
                    auto av = tp.data_of(sa);
                    auto& gb = tp.grad_buffer(ib);
                    // dB = A^T * dOut
                    for (int i = 0; i < m; ++i)
                      for (int kk = 0; kk < k; ++kk) {
                        const double a_ik = av[i * k + kk];
                        for (int j = 0; j < n; ++j) gb[kk * n + j] += a_ik * d[i * n + j];
                      }
                  }
                });
}

// ---- concat -----------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const int rank = parts[0].rank();
  if (axis < 0 || axis >= rank) {
    throw std::invalid_argument("concat: axis " + std::to_string(axis) +
                                " out of range for shape " + shape_str(parts[0].shape));
  }
  Shape out_shape = parts[0].shape;
  int axis_total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != rank) shape_error("concat", parts[0].shape, p.shape);
    for (int d = 0; d < rank; ++d) {
      if (d != axis && p.shape[d] != out_shape[d]) shape_error("concat", parts[0].shape, p.shape);
    }
    axis_total += p.shape[axis];
  }
  out_shape[axis] = axis_total;

  int outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= out_shape[d];
  for (int d = axis + 1; d < rank; ++d) inner *= out_shape[d];
  const int out_block = axis_total * inner;

  Tensor out = Tensor::zeros(out_shape);
  std::vector<int> blocks;
  blocks.reserve(parts.size());
  for (const Tensor& p : parts) blocks.push_back(p.shape[axis] * inner);
  for (int o = 0; o < outer; ++o) {
    int off = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
      const int blk = blocks[pi];
      std::copy_n(parts[pi].data.begin() + static_cast<std::ptrdiff_t>(o) * blk, blk,
                  out.data.begin() + static_cast<std::ptrdiff_t>(o) * out_block + off);
      off += blk;
    }
  }

  std::vector<const Tensor*> ptrs;
  for (const Tensor& p : parts) ptrs.push_back(&p);
  Tape* t = nullptr;
  for (const Tensor* p : ptrs) {
    if (p->on_tape()) {
      if (t != nullptr && t != p->tape)
        throw std::invalid_argument("operands were recorded on different tapes");
      t = p->tape;
    }
  }
  if (t == nullptr) return out;

  std::vector<int> ids;
  for (const Tensor& p : parts) ids.push_back(node_on(t, p));
  return finish(std::move(out), t,
                [ids, blocks, outer, out_block](Tape& tp, int, std::span<const double> d) {
                  for (int o = 0; o < outer; ++o) {
                    int off = 0;
                    for (std::size_t pi = 0; pi < ids.size(); ++pi) {
                      const int blk = blocks[pi];
                      if (ids[pi] >= 0) {
                        auto& buf = tp.grad_buffer(ids[pi]);
                        for (int i = 0; i < blk; ++i)
                          buf[static_cast<std::size_t>(o) * blk + i] +=
                              d[static_cast<std::size_t>(o) * out_block + off + i];
                      }
                      off += blk;
                    }
                  }
                });
}

// ---- elementwise nonlinearities ----------------------------------------------

Tensor tanh(const Tensor& x) {
  Tensor out(x.shape, x.data);
  for (double& v : out.data) v = std::tanh(v);
  Tape* t = tape_of({&x});
  if (t == nullptr) return out;
  const int ix = node_on(t, x);
  return finish(std::move(out), t, [ix](Tape& tp, int self, std::span<const double> d) {
    if (ix < 0) return;
    auto y = tp.value_of(self);
    auto& buf = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < d.size(); ++i) buf[i] += d[i] * (1.0 - y[i] * y[i]);
  });
}

Tensor sigmoid(const Tensor& x) {
  Tensor out(x.shape, x.data);
  for (double& v : out.data) v = 0.5 * (1.0 + std::tanh(0.5 * v));
  Tape* t = tape_of({&x});
  if (t == nullptr) return out;
  const int ix = node_on(t, x);
  return finish(std::move(out), t, [ix](Tape& tp, int self, std::span<const double> d) {
    if (ix < 0) return;
    auto y = tp.value_of(self);
    auto& buf = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < d.size(); ++i) buf[i] += d[i] * y[i] * (1.0 - y[i]);
  });
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape, x.data);
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  Tape* t = tape_of({&x});
  if (t == nullptr) return out;
  const int ix = node_on(t, x);
  const Tape::Saved sx = t->save(x);
  return finish(std::move(out), t, [ix, sx](Tape& tp, int, std::span<const double> d) {
    if (ix < 0) return;
    auto xv = tp.data_of(sx);
    auto& buf = tp.grad_buffer(ix);
    // subgradient at the kink is 0
    for (std::size_t i = 0; i < d.size(); ++i)
      if (xv[i] > 0.0) buf[i] += d[i];
  });
}

Tensor log(const Tensor& x) {
  Tensor out(x.shape, x.data);
  for (double& v : out.data) {
    if (v <= 0.0) throw std::invalid_argument("log: non-positive input");
    v = std::log(v);
  }
  Tape* t = tape_of({&x});
  if (t == nullptr) return out;
  const int ix = node_on(t, x);
  const Tape::Saved sx = t->save(x);
  return finish(std::move(out), t, [ix, sx](Tape& tp, int, std::span<const double> d) {
    if (ix < 0) return;
    auto xv = tp.data_of(sx);
    auto& buf = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < d.size(); ++i) buf[i] += d[i] / xv[i];
  });
}

// ---- softmax ----------------------------------------------------------------

std::vector<double> softmax_values(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

namespace {

// slice view: n slices of length len with stride between consecutive slice
// elements, start offset per slice.
struct SliceIter {
  int count;   // number of slices
  int len;     // elements per slice
  int stride;  // distance between consecutive elements in a slice
  int step;    // distance between slice starts
};

SliceIter softmax_slices(const Shape& shape, int axis) {
  if (shape.size() == 1) {
    if (axis != 0) throw std::invalid_argument("softmax: axis must be 0 for rank-1 input");
    return {1, shape[0], 1, 0};
  }
  if (shape.size() == 2) {
    if (axis == 1) return {shape[0], shape[1], 1, shape[1]};
    if (axis == 0) return {shape[1], shape[0], shape[1], 1};
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) +
                                " out of range for shape " + shape_str(shape));
  }
  throw std::invalid_argument("softmax: rank " + std::to_string(shape.size()) +
                              " not supported");
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  const SliceIter it = softmax_slices(x.shape, axis);
  Tensor out(x.shape, x.data);
  for (int s = 0; s < it.count; ++s) {
    const int base = s * it.step;
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < it.len; ++i) mx = std::max(mx, x.data[base + i * it.stride]);
    double sum = 0.0;
    for (int i = 0; i < it.len; ++i) {
      double& v = out.data[base + i * it.stride];
      v = std::exp(v - mx);
      sum += v;
    }
    for (int i = 0; i < it.len; ++i) out.data[base + i * it.stride] /= sum;
  }
  Tape* t = tape_of({&x});
  if (t == nullptr) return out;
  const int ix = node_on(t, x);
  return finish(std::move(out), t, [ix, it](Tape& tp, int self, std::span<const double> d) {
    if (ix < 0) return;
    auto y = tp.value_of(self);
    auto& buf = tp.grad_buffer(ix);
    for (int s = 0; s < it.count; ++s) {
      const int base = s * it.step;
      double dot = 0.0;
      for (int i = 0; i < it.len; ++i) {
        const int idx = base + i * it.stride;
        dot += d[idx] * y[idx];
      }
      for (int i = 0; i < it.len; ++i) {
        const int idx = base + i * it.stride;
        buf[idx] += y[idx] * (d[idx] - dot);
      }
    }
  });
}

// ---- lookup and reductions ----------------------------------------------------

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
  if (table.rank() != 2) {
    throw std::invalid_argument("embedding-lookup: table must be rank 2, got " +
                                shape_str(table.shape));
  }
  if (ids.empty()) throw std::invalid_argument("embedding-lookup: empty id list");
  const int v = table.shape[0], e = table.shape[1];
  for (int id : ids) {
    if (id < 0 || id >= v) {
      throw std::invalid_argument("embedding-lookup: id " + std::to_string(id) +
                                  " outside table with " + std::to_string(v) + " rows");
    }
  }
  Tensor out = Tensor::zeros({static_cast<int>(ids.size()), e});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    std::copy_n(table.data.begin() + static_cast<std::ptrdiff_t>(ids[r]) * e, e,
                out.data.begin() + static_cast<std::ptrdiff_t>(r) * e);
  }
  Tape* t = tape_of({&table});
  if (t == nullptr) return out;
  const int itab = node_on(t, table);
  return finish(std::move(out), t, [itab, ids, e](Tape& tp, int, std::span<const double> d) {
    if (itab < 0) return;
    auto& buf = tp.grad_buffer(itab);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      for (int c = 0; c < e; ++c)
        buf[static_cast<std::size_t>(ids[r]) * e + c] +=
            d[r * static_cast<std::size_t>(e) + c];
    }
  });
}

Tensor reduce_sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data) acc += v;
  Tensor out = Tensor::scalar(acc);
  Tape* t = tape_of({&x});
  if (t == nullptr) return out;
  const int ix = node_on(t, x);
  const int n = x.numel();
  return finish(std::move(out), t, [ix, n](Tape& tp, int, std::span<const double> d) {
    if (ix < 0) return;
    auto& buf = tp.grad_buffer(ix);
    for (int i = 0; i < n; ++i) buf[i] += d[0];
  });
}

Tensor reduce_mean(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data) acc += v;
  const int n = x.numel();
  Tensor out = Tensor::scalar(acc / n);
  Tape* t = tape_of({&x});
  if (t == nullptr) return out;
  const int ix = node_on(t, x);
  return finish(std::move(out), t, [ix, n](Tape& tp, int, std::span<const double> d) {
    if (ix < 0) return;
    auto& buf = tp.grad_buffer(ix);
    const double g = d[0] / n;
    for (int i = 0; i < n; ++i) buf[i] += g;
  });
}

Tensor squared_l2_distance(const Tensor& a, const Tensor& b) {
  require_same_shape("squared-l2-distance", a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double diff = a.data[i] - b.data[i];
    acc += diff * diff;
  }
  Tensor out = Tensor::scalar(acc);
  Tape* t = tape_of({&a, &b});
  if (t == nullptr) return out;
  const int ia = node_on(t, a), ib = node_on(t, b);
  const Tape::Saved sa = t->save(a), sb = t->save(b);
  return finish(std::move(out), t,
                [ia, ib, sa, sb](Tape& tp, int, std::span<const double> d) {
                  auto av = tp.data_of(sa);
                  auto bv = tp.data_of(sb);
                  if (ia >= 0) {
                    auto& buf = tp.grad_buffer(ia);
                    for (std::size_t i = 0; i < av.size(); ++i)
                      buf[i] += 2.0 * (av[i] - bv[i]) * d[0];
                  }
                  if (ib >= 0) {
                    auto& buf = tp.grad_buffer(ib);
                    for (std::size_t i = 0; i < av.size(); ++i)
                      buf[i] -= 2.0 * (av[i] - bv[i]) * d[0];
                  }
                });
}

// ---- structural ops ------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape s) {
  check_shape_valid(s, "reshape");
  if (shape_numel(s) != x.numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape) + " as " +
                                shape_str(s));
  }
  Tensor out(std::move(s), x.data);
  Tape* t = tape_of({&x});
  if (t == nullptr) return out;
  const int ix = node_on(t, x);
  return finish(std::move(out), t, [ix](Tape& tp, int, std::span<const double> d) {
    if (ix >= 0) tp.accumulate(ix, d);
  });
}

Tensor repeat_rows(const Tensor& v, int rows) {
  if (v.rank() != 1) {
    throw std::invalid_argument("repeat-rows: input must be rank 1, got " +
                                shape_str(v.shape));
  }
  if (rows <= 0) throw std::invalid_argument("repeat-rows: rows must be positive");
  const int n = v.shape[0];
  Tensor out = Tensor::zeros({rows, n});
  for (int r = 0; r < rows; ++r)
    std::copy_n(v.data.begin(), n, out.data.begin() + static_cast<std::ptrdiff_t>(r) * n);
  Tape* t = tape_of({&v});
  if (t == nullptr) return out;
  const int iv = node_on(t, v);
  return finish(std::move(out), t, [iv, rows, n](Tape& tp, int, std::span<const double> d) {
    if (iv < 0) return;
    auto& buf = tp.grad_buffer(iv);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < n; ++c) buf[c] += d[static_cast<std::size_t>(r) * n + c];
  });
}

Tensor repeat_scalar(const Tensor& s, int n) {
  if (!s.is_scalar()) {
    throw std::invalid_argument("repeat-scalar: input must be scalar, got " +
                                shape_str(s.shape));
  }
  if (n <= 0) throw std::invalid_argument("repeat-scalar: n must be positive");
  Tensor out = Tensor::full({n}, s.data[0]);
  Tape* t = tape_of({&s});
  if (t == nullptr) return out;
  const int is = node_on(t, s);
  return finish(std::move(out), t, [is, n](Tape& tp, int, std::span<const double> d) {
    if (is < 0) return;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += d[i];
    tp.grad_buffer(is)[0] += acc;
  });
}

Tensor row_max(const Tensor& x) {
  if (x.rank() != 2) {
    throw std::invalid_argument("row-max: input must be rank 2, got " + shape_str(x.shape));
  }
  const int rows = x.shape[0], cols = x.shape[1];
  Tensor out = Tensor::zeros({cols});
  std::vector<int> argmax(static_cast<std::size_t>(cols), 0);
  for (int c = 0; c < cols; ++c) {
    double best = x.data[c];
    int best_r = 0;
    for (int r = 1; r < rows; ++r) {
      const double v = x.data[static_cast<std::size_t>(r) * cols + c];
      if (v > best) {  // first maximum wins on ties
        best = v;
        best_r = r;
      }
    }
    out.data[c] = best;
    argmax[c] = best_r;
  }
  Tape* t = tape_of({&x});
  if (t == nullptr) return out;
  const int ix = node_on(t, x);
  return finish(std::move(out), t,
                [ix, argmax, cols](Tape& tp, int, std::span<const double> d) {
                  if (ix < 0) return;
                  auto& buf = tp.grad_buffer(ix);
                  for (int c = 0; c < cols; ++c)
                    buf[static_cast<std::size_t>(argmax[c]) * cols + c] += d[c];
                });
}

Tensor temporal_conv(const Tensor& x, const Tensor& w, const Tensor& b, int width) {
  if (x.rank() != 2) {
    throw std::invalid_argument("temporal-conv: input must be rank 2, got " +
                                shape_str(x.shape));
  }
  const int steps = x.shape[0], e = x.shape[1];
  if (width < 1 || width > steps) {
    throw std::invalid_argument("temporal-conv: width " + std::to_string(width) +
                                " invalid for " + std::to_string(steps) + " steps");
  }
  if (w.rank() != 2 || w.shape[1] != width * e) {
    throw std::invalid_argument("temporal-conv: filter shape " + shape_str(w.shape) +
                                " does not match window size " + std::to_string(width * e));
  }
  const int filters = w.shape[0];
  if (b.rank() != 1 || b.shape[0] != filters) shape_error("temporal-conv", w.shape, b.shape);

  const int out_steps = steps - width + 1;
  Tensor out = Tensor::zeros({out_steps, filters});
  for (int p = 0; p < out_steps; ++p) {
    for (int f = 0; f < filters; ++f) {
      double acc = b.data[f];
      for (int tt = 0; tt < width; ++tt)
        for (int c = 0; c < e; ++c)
          acc += w.data[static_cast<std::size_t>(f) * (width * e) + tt * e + c] *
                 x.data[static_cast<std::size_t>(p + tt) * e + c];
      out.data[static_cast<std::size_t>(p) * filters + f] = acc;
    }
  }

  Tape* t = tape_of({&x, &w, &b});
  if (t == nullptr) return out;
  const int ix = node_on(t, x), iw = node_on(t, w), ib = node_on(t, b);
  const Tape::Saved sx = t->save(x), sw = t->save(w);
  return finish(std::move(out), t,
                [ix, iw, ib, sx, sw, out_steps, filters, width, e](
                    Tape& tp, int, std::span<const double> d) {
                  auto xv = tp.data_of(sx);
                  auto wv = tp.data_of(sw);
                  for (int p = 0; p < out_steps; ++p) {
                    for (int f = 0; f < filters; ++f) {
                      const double g = d[static_cast<std::size_t>(p) * filters + f];
                      if (ib >= 0) tp.grad_buffer(ib)[f] += g;
                      for (int tt = 0; tt < width; ++tt)
                        for (int c = 0; c < e; ++c) {
                          const std::size_t wi =
                              static_cast<std::size_t>(f) * (width * e) + tt * e + c;
                          const std::size_t xi = static_cast<std::size_t>(p + tt) * e + c;
                          if (iw >= 0) tp.grad_buffer(iw)[wi] += g * xv[xi];
                          if (ix >= 0) tp.grad_buffer(ix)[xi] += g * wv[wi];
                        }
                    }
                  }
                });
}

// ---- fused cross-entropy ---------------------------------------------------------

Tensor softmax_cross_entropy(const std::vector<Tensor>& logits,
                             const std::vector<int>& targets) {
  if (logits.empty()) throw std::invalid_argument("softmax-cross-entropy: no steps");
  if (logits.size() != targets.size()) {
    throw std::invalid_argument("softmax-cross-entropy: " + std::to_string(logits.size()) +
                                " logit vectors vs " + std::to_string(targets.size()) +
                                " targets");
  }
  const int v = logits[0].numel();
  Tape* t = nullptr;
  for (const Tensor& l : logits) {
    if (l.rank() != 1 || l.numel() != v) shape_error("softmax-cross-entropy", logits[0].shape, l.shape);
    if (l.on_tape()) {
      if (t != nullptr && t != l.tape)
        throw std::invalid_argument("operands were recorded on different tapes");
      t = l.tape;
    }
  }
  for (int y : targets) {
    if (y < 0 || y >= v) {
      throw std::invalid_argument("softmax-cross-entropy: target " + std::to_string(y) +
                                  " outside vocabulary of " + std::to_string(v));
    }
  }

  const int steps = static_cast<int>(logits.size());
  std::vector<double> lse(static_cast<std::size_t>(steps));
  double total = 0.0;
  for (int s = 0; s < steps; ++s) {
    const auto& o = logits[static_cast<std::size_t>(s)].data;
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : o) mx = std::max(mx, x);
    double sum = 0.0;
    for (double x : o) sum += std::exp(x - mx);
    lse[static_cast<std::size_t>(s)] = mx + std::log(sum);
    total += lse[static_cast<std::size_t>(s)] - o[static_cast<std::size_t>(targets[s])];
  }
  Tensor out = Tensor::scalar(total / steps);
  if (t == nullptr) return out;

  std::vector<int> ids;
  std::vector<Tape::Saved> saved;
  for (const Tensor& l : logits) {
    ids.push_back(node_on(t, l));
    saved.push_back(t->save(l));
  }
  return finish(std::move(out), t,
                [ids, saved, lse, targets, steps, v](Tape& tp, int, std::span<const double> d) {
                  const double g = d[0] / steps;
                  for (int s = 0; s < steps; ++s) {
                    if (ids[static_cast<std::size_t>(s)] < 0) continue;
                    auto o = tp.data_of(saved[static_cast<std::size_t>(s)]);
                    auto& buf = tp.grad_buffer(ids[static_cast<std::size_t>(s)]);
                    for (int i = 0; i < v; ++i) {
                      const double p = std::exp(o[i] - lse[static_cast<std::size_t>(s)]);
                      buf[i] += g * (p - (i == targets[static_cast<std::size_t>(s)] ? 1.0 : 0.0));
                    }
                  }
                });
}

// ---- dispatcher ----------------------------------------------------------------

Tensor forward(std::string_view op_kind, const std::vector<Tensor>& inputs,
               const OpArgs& args) {
  auto want = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw std::invalid_argument(std::string(op_kind) + ": expected " + std::to_string(n) +
                                  " inputs, got " + std::to_string(inputs.size()));
    }
  };
  if (op_kind == "matmul") {
    want(2);
    return matmul(inputs[0], inputs[1]);
  }
  if (op_kind == "add") {
    want(2);
    return add(inputs[0], inputs[1]);
  }
  if (op_kind == "sub") {
    want(2);
    return sub(inputs[0], inputs[1]);
  }
  if (op_kind == "elementwise-mul") {
    want(2);
    return mul(inputs[0], inputs[1]);
  }
  if (op_kind == "concat") return concat(inputs, args.axis);
  if (op_kind == "tanh") {
    want(1);
    return tanh(inputs[0]);
  }
  if (op_kind == "relu") {
    want(1);
    return relu(inputs[0]);
  }
  if (op_kind == "softmax") {
    want(1);
    const int axis = args.axis < 0 && inputs[0].rank() == 1 ? 0 : args.axis;
    return softmax(inputs[0], axis);
  }
  if (op_kind == "log") {
    want(1);
    return log(inputs[0]);
  }
  if (op_kind == "embedding-lookup") {
    want(1);
    return embedding_lookup(inputs[0], args.ids);
  }
  if (op_kind == "reduce-sum") {
    want(1);
    return reduce_sum(inputs[0]);
  }
  if (op_kind == "reduce-mean") {
    want(1);
    return reduce_mean(inputs[0]);
  }
  if (op_kind == "squared-l2-distance") {
    want(2);
    return squared_l2_distance(inputs[0], inputs[1]);
  }
  throw std::invalid_argument("unknown op-kind '" + std::string(op_kind) + "'");
}

// ---- gradient checking ------------------------------------------------------------

namespace {

double eval_plain(const TapedFn& fn, const std::vector<Tensor>& params) {
  Tape t(/*recording=*/false);
  std::vector<Tensor> leaves;
  leaves.reserve(params.size());
  for (const Tensor& p : params) leaves.push_back(t.leaf(p));
  const Tensor out = fn(t, leaves);
  if (!out.is_scalar()) {
    throw std::invalid_argument("grad_check: function output has shape " +
                                shape_str(out.shape) + ", expected a scalar");
  }
  return out.value();
}

}  // namespace

double max_rel_error_vs_numeric(const TapedFn& fn, const std::vector<Tensor>& params,
                                const std::vector<std::vector<double>>& analytic,
                                double step) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");
  std::vector<Tensor> work = params;
  double worst = 0.0;
  for (std::size_t pi = 0; pi < work.size(); ++pi) {
    for (std::size_t e = 0; e < work[pi].data.size(); ++e) {
      const double keep = work[pi].data[e];
      work[pi].data[e] = keep + step;
      const double up = eval_plain(fn, work);
      work[pi].data[e] = keep - step;
      const double down = eval_plain(fn, work);
      work[pi].data[e] = keep;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[pi][e];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

double grad_check(const TapedFn& fn, const std::vector<Tensor>& params, double step) {
  Tape tape;
  std::vector<Tensor> leaves;
  leaves.reserve(params.size());
  for (const Tensor& p : params) leaves.push_back(tape.leaf(p));
  const Tensor loss = fn(tape, leaves);
  if (!loss.is_scalar()) {
    throw std::invalid_argument("grad_check: function output has shape " +
                                shape_str(loss.shape) + ", expected a scalar");
  }
  const Gradients grads = tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (const Tensor& l : leaves) analytic.push_back(grads.at(l.node));
  return max_rel_error_vs_numeric(fn, params, analytic, step);
}

}  // namespace vqglab
