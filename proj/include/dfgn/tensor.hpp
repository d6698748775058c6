#pragma once

// Dense f64 tensors with reverse-mode differentiation.
//
// Every op that consumes a tensor with requires_grad() records its inputs and
// a backward rule on the output node. backward() orders the reachable nodes by
// creation sequence and replays the rules in reverse, which is the tape order.
// Nothing is shared between graphs, so independent graphs may be built on
// different threads as long as leaf parameters are only read.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dfgn/errors.hpp"

namespace dfgn {

using Shape = std::vector<std::size_t>;
using Mask = std::vector<bool>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;
};

inline std::uint64_t next_seq() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
    for (auto e : shape)
      if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    if (shape_numel(shape) != values.size())
      throw DimensionError("shape " + shape_str(shape) + " does not hold " +
                           std::to_string(values.size()) + " values");
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->data = std::move(values);
    n->requires_grad = requires_grad;
    if (requires_grad) n->grad.assign(n->data.size(), 0.0);
    n->seq = detail::next_seq();
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto count = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(count, 0.0), requires_grad);
  }

  static Tensor filled(Shape shape, double value, bool requires_grad = false) {
    auto count = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(count, value), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false) {
    std::vector<double> values;
    std::size_t cols = rows.size() ? rows.begin()->size() : 0;
    for (const auto& r : rows) {
      if (r.size() != cols) throw DimensionError("ragged matrix literal");
      values.insert(values.end(), r.begin(), r.end());
    }
    return from({rows.size(), cols}, std::move(values), requires_grad);
  }

  static Tensor vector(std::initializer_list<double> v, bool requires_grad = false) {
    return from({v.size()}, std::vector<double>(v), requires_grad);
  }

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->data.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> data() const { return node_->data; }
  // Direct writes are for leaves (parameter updates, perturbation checks).
  std::span<double> mutable_data() { return node_->data; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad; }

  double item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }
  double at(std::size_t i) const { return node_->data.at(i); }
  double at(std::size_t i, std::size_t j) const {
    if (rank() != 2) throw DimensionError("2-index access on rank " + std::to_string(rank()));
    return node_->data.at(i * dim(1) + j);
  }

  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

  // Leaf copy of the values, detached from any graph.
  Tensor detach(bool requires_grad = false) const {
    return from(shape(), node_->data, requires_grad);
  }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

  // Builds an op output. Inputs and the backward rule are kept only when
  // recording is enabled and some input needs a gradient.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            std::vector<Tensor> inputs,
                            std::function<void(detail::Node&)> backward) {
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->data = std::move(values);
    n->seq = detail::next_seq();
    bool needs = false;
    if (detail::grad_mode())
      for (const auto& t : inputs) needs = needs || t.requires_grad();
    if (needs) {
      n->requires_grad = true;
      n->grad.assign(n->data.size(), 0.0);
      for (auto& t : inputs) n->inputs.push_back(t.node_);
      n->backward_fn = std::move(backward);
    }
    return Tensor(std::move(n));
  }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
};

// Accumulates the gradient of a scalar loss into every reachable leaf.
// Leaf gradients accumulate across calls; interior gradients are recomputed.
inline void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  if (!loss.requires_grad()) return;

  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{loss.node().get()};
  seen.insert(stack.back());
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });
  for (auto* n : order)
    if (n->backward_fn) std::fill(n->grad.begin(), n->grad.end(), 0.0);
  loss.node()->grad[0] += 1.0;
  for (auto* n : order)
    if (n->backward_fn) n->backward_fn(*n);
}

namespace detail {

inline std::vector<double>* grad_of(Node& out, std::size_t input) {
  auto& in = *out.inputs.at(input);
  return in.requires_grad ? &in.grad : nullptr;
}

inline void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw DimensionError(std::string(op) + " expects a matrix, got " + shape_str(t.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank2(a, "matmul");
  detail::require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return Tensor::make_result({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& o) {
    const auto& A = o.inputs[0]->data;
    const auto& B = o.inputs[1]->data;
    const auto& G = o.grad;
    if (auto* ga = detail::grad_of(o, 0)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += G[i * n + j] * B[p * n + j];
          (*ga)[i * k + p] += s;
        }
    }
    if (auto* gb = detail::grad_of(o, 1)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          for (std::size_t j = 0; j < n; ++j) (*gb)[p * n + j] += av * G[i * n + j];
        }
    }
  });
}

inline Tensor transpose(const Tensor& x) {
  detail::require_rank2(x, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(r * c);
  auto X = x.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = X[i * c + j];
  return Tensor::make_result({c, r}, std::move(out), {x}, [r, c](detail::Node& o) {
    if (auto* g = detail::grad_of(o, 0))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += o.grad[j * r + i];
  });
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw DimensionError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  std::vector<double> out(x.data().begin(), x.data().end());
  return Tensor::make_result(std::move(shape), std::move(out), {x}, [](detail::Node& o) {
    if (auto* g = detail::grad_of(o, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*g)[i] += o.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Pointwise

enum class Elementwise { kMul, kAdd, kSub };

// `b` either matches `a` exactly or is a vector broadcast along a's last axis.
inline Tensor elementwise(const Tensor& a, const Tensor& b, Elementwise kind) {
  const bool same = a.shape() == b.shape();
  const bool bcast = !same && b.rank() == 1 && a.rank() >= 1 && b.dim(0) == a.shape().back();
  if (!same && !bcast)
    throw DimensionError("elementwise shapes not broadcastable: " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  const std::size_t n = a.numel();
  const std::size_t bn = b.numel();
  auto A = a.data();
  auto B = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double bv = B[same ? i : i % bn];
    switch (kind) {
      case Elementwise::kMul: out[i] = A[i] * bv; break;
      case Elementwise::kAdd: out[i] = A[i] + bv; break;
      case Elementwise::kSub: out[i] = A[i] - bv; break;
    }
  }
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [same, n, bn, kind](detail::Node& o) {
    const auto& A = o.inputs[0]->data;
    const auto& B = o.inputs[1]->data;
    auto* ga = detail::grad_of(o, 0);
    auto* gb = detail::grad_of(o, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t bi = same ? i : i % bn;
      const double g = o.grad[i];
      switch (kind) {
        case Elementwise::kMul:
          if (ga) (*ga)[i] += g * B[bi];
          if (gb) (*gb)[bi] += g * A[i];
          break;
        case Elementwise::kAdd:
          if (ga) (*ga)[i] += g;
          if (gb) (*gb)[bi] += g;
          break;
        case Elementwise::kSub:
          if (ga) (*ga)[i] += g;
          if (gb) (*gb)[bi] -= g;
          break;
      }
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, Elementwise::kMul); }
inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, Elementwise::kAdd); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(a, b, Elementwise::kSub); }

inline Tensor scale(const Tensor& x, double c) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= c;
  return Tensor::make_result(x.shape(), std::move(out), {x}, [c](detail::Node& o) {
    if (auto* g = detail::grad_of(o, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*g)[i] += c * o.grad[i];
  });
}

enum class Activation { kTanh, kSigmoid, kRelu };

inline double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Tensor activation(const Tensor& x, Activation kind) {
  std::vector<double> out(x.numel());
  auto X = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (kind) {
      case Activation::kTanh: out[i] = std::tanh(X[i]); break;
      case Activation::kSigmoid: out[i] = sigmoid_value(X[i]); break;
      case Activation::kRelu: out[i] = X[i] > 0.0 ? X[i] : 0.0; break;
    }
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [kind](detail::Node& o) {
    auto* g = detail::grad_of(o, 0);
    if (!g) return;
    const auto& X = o.inputs[0]->data;
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const double y = o.data[i];
      double d = 0.0;
      switch (kind) {
        case Activation::kTanh: d = 1.0 - y * y; break;
        case Activation::kSigmoid: d = y * (1.0 - y); break;
        case Activation::kRelu: d = X[i] > 0.0 ? 1.0 : 0.0; break;
      }
      (*g)[i] += d * o.grad[i];
    }
  });
}

inline Tensor tanh(const Tensor& x) { return activation(x, Activation::kTanh); }
inline Tensor sigmoid(const Tensor& x) { return activation(x, Activation::kSigmoid); }
inline Tensor relu(const Tensor& x) { return activation(x, Activation::kRelu); }

// ---------------------------------------------------------------------------
// Normalization

// Masked positions stand in as this value before exponentiation and are then
// zeroed exactly.
inline constexpr double kMaskedLogit = -1e30;

// Softmax over the last axis. `mask` has either one entry per element or one
// entry per position of the last axis (shared by every slice).
inline Tensor softmax_masked(const Tensor& x, const Mask& mask) {
  if (x.rank() == 0) throw DimensionError("softmax of rank-0 tensor");
  const std::size_t n = x.shape().back();
  const std::size_t slices = x.numel() / n;
  const bool shared = mask.size() == n && mask.size() != x.numel();
  if (!shared && mask.size() != x.numel())
    throw DimensionError("softmax mask of size " + std::to_string(mask.size()) +
                         " does not fit " + shape_str(x.shape()));
  auto X = x.data();
  std::vector<double> out(x.numel(), 0.0);
  for (std::size_t s = 0; s < slices; ++s) {
    const std::size_t base = s * n;
    auto live = [&](std::size_t j) { return shared ? mask[j] : mask[base + j]; };
    double mx = kMaskedLogit;
    bool any = false;
    for (std::size_t j = 0; j < n; ++j)
      if (live(j)) {
        mx = any ? std::max(mx, X[base + j]) : X[base + j];
        any = true;
      }
    if (!any) throw DegenerateSliceError("softmax slice " + std::to_string(s) + " is fully masked");
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = live(j) ? X[base + j] : kMaskedLogit;
      const double e = std::exp(v - mx);
      out[base + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < n; ++j) out[base + j] = live(j) ? out[base + j] / z : 0.0;
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [n, slices](detail::Node& o) {
    auto* g = detail::grad_of(o, 0);
    if (!g) return;
    for (std::size_t s = 0; s < slices; ++s) {
      const std::size_t base = s * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += o.data[base + j] * o.grad[base + j];
      for (std::size_t j = 0; j < n; ++j)
        (*g)[base + j] += o.data[base + j] * (o.grad[base + j] - dot);
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

enum class Reduce { kMax, kMean, kSum };

// Reduces one axis. With a non-empty `mask` (one entry per position along
// `axis`) only unmasked positions participate. Max routes its gradient to the
// first maximal position.
inline Tensor reduce(const Tensor& x, std::size_t axis, Reduce kind, const Mask& mask = {}) {
  if (axis >= x.rank())
    throw DimensionError("reduce axis " + std::to_string(axis) + " out of range for " +
                         shape_str(x.shape()));
  const std::size_t len = x.dim(axis);
  if (!mask.empty() && mask.size() != len)
    throw DimensionError("reduce mask of size " + std::to_string(mask.size()) +
                         " does not match axis length " + std::to_string(len));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  auto live = [&mask](std::size_t p) { return mask.empty() || mask[p]; };
  std::size_t count = 0;
  for (std::size_t p = 0; p < len; ++p) count += live(p) ? 1 : 0;
  if (count == 0) throw DegenerateSliceError("reduction over an empty or fully masked axis");

  Shape out_shape;
  for (std::size_t i = 0; i < x.rank(); ++i)
    if (i != axis) out_shape.push_back(x.dim(i));
  if (out_shape.empty()) out_shape.push_back(1);

  auto X = x.data();
  std::vector<double> out(outer * inner, 0.0);
  std::vector<std::size_t> argmax;
  if (kind == Reduce::kMax) argmax.assign(outer * inner, 0);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t oi = o * inner + i;
      bool first = true;
      double acc = 0.0;
      for (std::size_t p = 0; p < len; ++p) {
        if (!live(p)) continue;
        const double v = X[(o * len + p) * inner + i];
        if (kind == Reduce::kMax) {
          if (first || v > acc) {
            acc = v;
            argmax[oi] = p;
          }
        } else {
          acc += v;
        }
        first = false;
      }
      out[oi] = kind == Reduce::kMean ? acc / static_cast<double>(count) : acc;
    }

  return Tensor::make_result(
      std::move(out_shape), std::move(out), {x},
      [kind, outer, inner, len, count, mask, argmax = std::move(argmax)](detail::Node& o) {
        auto* g = detail::grad_of(o, 0);
        if (!g) return;
        for (std::size_t a = 0; a < outer; ++a)
          for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t oi = a * inner + i;
            const double go = o.grad[oi];
            if (kind == Reduce::kMax) {
              (*g)[(a * len + argmax[oi]) * inner + i] += go;
              continue;
            }
            const double w = kind == Reduce::kMean ? go / static_cast<double>(count) : go;
            for (std::size_t p = 0; p < len; ++p)
              if (mask.empty() || mask[p]) (*g)[(a * len + p) * inner + i] += w;
          }
      });
}

inline Tensor sum(const Tensor& x) {
  return reduce(reshape(x, {x.numel()}), 0, Reduce::kSum);
}

inline Tensor mean(const Tensor& x) {
  return reduce(reshape(x, {x.numel()}), 0, Reduce::kMean);
}

// ---------------------------------------------------------------------------
// Structural

// Concatenates along axis 0. Rank-1 parts of length d join a matrix with d
// columns as single rows.
inline Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  bool any_matrix = false;
  for (const auto& p : parts) any_matrix = any_matrix || p.rank() == 2;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    std::size_t c = 0, r = 0;
    if (any_matrix) {
      if (p.rank() == 2) {
        r = p.dim(0);
        c = p.dim(1);
      } else if (p.rank() == 1) {
        r = 1;
        c = p.dim(0);
      } else {
        throw DimensionError("concat part of shape " + shape_str(p.shape()));
      }
      if (cols == 0) cols = c;
      if (c != cols)
        throw DimensionError("concat column mismatch: " + std::to_string(c) + " vs " +
                             std::to_string(cols));
    } else {
      if (p.rank() != 1) throw DimensionError("concat part of shape " + shape_str(p.shape()));
      r = p.dim(0);
    }
    rows += r;
    sizes.push_back(p.numel());
  }
  std::vector<double> out;
  out.reserve(any_matrix ? rows * cols : rows);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  Shape shape = any_matrix ? Shape{rows, cols} : Shape{rows};
  return Tensor::make_result(std::move(shape), std::move(out), parts, [sizes](detail::Node& o) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      if (auto* g = detail::grad_of(o, k))
        for (std::size_t i = 0; i < sizes[k]; ++i) (*g)[i] += o.grad[off + i];
      off += sizes[k];
    }
  });
}

// Rows [begin, end) of a matrix.
inline Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  detail::require_rank2(x, "slice_rows");
  if (begin >= end || end > x.dim(0))
    throw DimensionError("row slice [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range for " + shape_str(x.shape()));
  const std::size_t c = x.dim(1);
  std::vector<double> out(x.data().begin() + begin * c, x.data().begin() + end * c);
  return Tensor::make_result({end - begin, c}, std::move(out), {x}, [begin, c](detail::Node& o) {
    if (auto* g = detail::grad_of(o, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*g)[begin * c + i] += o.grad[i];
  });
}

// Sliding windows of `width` rows flattened to one row each: [P x width*d]
// with P = max(L - width + 1, 1). Rows past the end read as zeros.
inline Tensor unfold_windows(const Tensor& x, std::size_t width) {
  detail::require_rank2(x, "unfold_windows");
  if (width == 0) throw DimensionError("window width must be positive");
  const std::size_t len = x.dim(0), d = x.dim(1);
  const std::size_t positions = len >= width ? len - width + 1 : 1;
  std::vector<double> out(positions * width * d, 0.0);
  auto X = x.data();
  for (std::size_t p = 0; p < positions; ++p)
    for (std::size_t w = 0; w < width && p + w < len; ++w)
      std::copy_n(X.data() + (p + w) * d, d, out.data() + (p * width + w) * d);
  return Tensor::make_result(
      {positions, width * d}, std::move(out), {x}, [len, d, width, positions](detail::Node& o) {
        auto* g = detail::grad_of(o, 0);
        if (!g) return;
        for (std::size_t p = 0; p < positions; ++p)
          for (std::size_t w = 0; w < width && p + w < len; ++w)
            for (std::size_t k = 0; k < d; ++k)
              (*g)[(p + w) * d + k] += o.grad[(p * width + w) * d + k];
      });
}

// ---------------------------------------------------------------------------
// Model-specific pointwise ops

// phi(x, y): x when x >= y, otherwise 0.
inline double phi(double x, double y) { return x < y ? 0.0 : x; }

// Cell-wise phi over two same-shaped tensors. The gate itself is treated as
// constant: gradient reaches `x` on kept cells and never reaches `y`. With
// `straight_through` the gate's derivative w.r.t. (x - y) is taken as 1, so
// d/dx gains g*x and d/dy gets -g*x on every cell.
inline Tensor phi_filter(const Tensor& x, const Tensor& y, bool straight_through = false) {
  if (x.shape() != y.shape())
    throw DimensionError("phi operands differ: " + shape_str(x.shape()) + " vs " +
                         shape_str(y.shape()));
  auto X = x.data();
  auto Y = y.data();
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = phi(X[i], Y[i]);
  return Tensor::make_result(x.shape(), std::move(out), {x, y}, [straight_through](detail::Node& o) {
    const auto& X = o.inputs[0]->data;
    const auto& Y = o.inputs[1]->data;
    auto* gx = detail::grad_of(o, 0);
    auto* gy = detail::grad_of(o, 1);
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const double g = o.grad[i];
      const double kept = X[i] < Y[i] ? 0.0 : 1.0;
      if (gx) (*gx)[i] += g * kept + (straight_through ? g * X[i] : 0.0);
      if (gy && straight_through) (*gy)[i] -= g * X[i];
    }
  });
}

// Divides each row of a nonnegative matrix by its sum; all-zero rows stay zero.
inline Tensor normalize_rows(const Tensor& x) {
  detail::require_rank2(x, "normalize_rows");
  const std::size_t r = x.dim(0), c = x.dim(1);
  auto X = x.data();
  std::vector<double> sums(r, 0.0);
  std::vector<double> out(x.numel(), 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) sums[i] += X[i * c + j];
    if (sums[i] != 0.0)
      for (std::size_t j = 0; j < c; ++j) out[i * c + j] = X[i * c + j] / sums[i];
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [r, c, sums](detail::Node& o) {
    auto* g = detail::grad_of(o, 0);
    if (!g) return;
    for (std::size_t i = 0; i < r; ++i) {
      if (sums[i] == 0.0) continue;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += o.grad[i * c + j] * o.data[i * c + j];
      for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += (o.grad[i * c + j] - dot) / sums[i];
    }
  });
}

// KL(target || softmax(logits)) with 0 ln 0 = 0. `target` is a fixed
// distribution; the logit gradient is softmax(logits) - target.
inline Tensor listwise_kl(const Tensor& logits, std::span<const double> target) {
  if (logits.rank() != 1 || logits.numel() != target.size())
    throw DimensionError("listwise_kl: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(target.size()) + " targets");
  const std::size_t n = target.size();
  auto L = logits.data();
  const double mx = *std::max_element(L.begin(), L.end());
  double z = 0.0;
  for (auto v : L) z += std::exp(v - mx);
  const double log_z = std::log(z);
  std::vector<double> p(n);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double shifted = std::exp(L[i] - mx);
    p[i] = shifted / z;
    if (!(target[i] > 0.0)) continue;
    // The ratio form is exact when p equals t; logs take over once p underflows.
    loss += target[i] * (p[i] >= std::numeric_limits<double>::min()
                             ? std::log(target[i] / p[i])
                             : std::log(target[i]) - (L[i] - mx - log_z));
  }
  std::vector<double> t(target.begin(), target.end());
  const double mass = std::accumulate(t.begin(), t.end(), 0.0);
  return Tensor::make_result({1}, {loss}, {logits}, [p, t, mass](detail::Node& o) {
    if (auto* g = detail::grad_of(o, 0))
      for (std::size_t i = 0; i < p.size(); ++i) (*g)[i] += o.grad[0] * (mass * p[i] - t[i]);
  });
}

// ---------------------------------------------------------------------------
// Gradient checking

// Largest per-element relative error between central differences and the
// autodiff gradient of scalar `f` with respect to every tensor in `inputs`.
// The denominator is max(|autodiff gradient|, 1e-8). Inputs must be leaves.
inline double finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                                double h) {
  if (!(h > 0.0)) throw ContractError("finite difference step must be positive");
  for (auto& x : inputs) {
    if (!x.requires_grad()) throw ContractError("finite_diff_check input must require grad");
    x.zero_grad();
  }
  backward(f());
  double worst = 0.0;
  NoGradGuard no_grad;
  for (auto& x : inputs) {
    std::vector<double> analytic(x.grad().begin(), x.grad().end());
    auto values = x.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = f().item();
      values[i] = saved - h;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = std::abs(numeric - analytic[i]) / std::max(std::abs(analytic[i]), 1e-8);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

inline double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double h) {
  return finite_diff_check([&f, &x] { return f(x); }, std::vector<Tensor>{x}, h);
}

}  // namespace dfgn
