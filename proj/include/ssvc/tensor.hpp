#pragma once

// Reverse-mode automatic differentiation over dense row-major arrays.
//
// A Tensor is a shared handle onto a graph node. Operations record their
// parents and a backward closure only when at least one input requires a
// gradient, so inference-only graphs carry no tape.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace ssvc {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

class shape_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

template <std::floating_point T>
struct Node {
  Shape shape;
  std::shared_ptr<std::vector<T>> values;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }

  std::vector<T>& grad_slot() {
    if (grad.empty()) grad.assign(values->size(), T(0));
    return grad;
  }
};

}  // namespace detail

template <std::floating_point T>
class Tensor {
 public:
  using value_type = T;
  using node_type = detail::Node<T>;

  Tensor() : node_(std::make_shared<node_type>()) {
    node_->shape = {1};
    node_->values = std::make_shared<std::vector<T>>(1, T(0));
  }

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : node_(std::make_shared<node_type>()) {
    for (auto d : shape) {
      if (d == 0) throw shape_error("tensor dimensions must be positive");
    }
    if (shape.empty()) shape = {1};
    if (shape_numel(shape) != values.size()) {
      throw shape_error("tensor of shape " + shape_string(shape) + " given " +
                        std::to_string(values.size()) + " values");
    }
    node_->shape = std::move(shape);
    node_->values = std::make_shared<std::vector<T>>(std::move(values));
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return Tensor({1}, {value}, requires_grad);
  }

  static Tensor from_node(std::shared_ptr<node_type> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->values->size(); }

  std::span<const T> values() const { return *node_->values; }
  T operator[](std::size_t i) const { return (*node_->values)[i]; }

  T item() const {
    if (size() != 1) throw shape_error("item() on non-scalar tensor");
    return (*node_->values)[0];
  }

  // Leaves only: optimizers and finite-difference probes write parameters.
  std::span<T> mutable_values() {
    if (!node_->is_leaf()) {
      throw std::logic_error("mutable_values() on a non-leaf tensor");
    }
    return *node_->values;
  }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    if (!node_->is_leaf()) {
      throw std::logic_error("requires_grad can only be set on leaves");
    }
    node_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  // Zeros when no gradient has reached this tensor.
  std::vector<T> grad_values() const {
    if (node_->grad.empty()) return std::vector<T>(size(), T(0));
    return node_->grad;
  }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  // Leaf gradients accumulate across calls; callers zero them once per
  // optimizer step. Interior gradients are recomputed from scratch.
  void backward() const;

  Tensor detach_copy() const {
    return Tensor(shape(), std::vector<T>(values().begin(), values().end()));
  }

  const std::shared_ptr<node_type>& node() const { return node_; }

 private:
  std::shared_ptr<node_type> node_;
};

using Tensord = Tensor<double>;
using Tensorf = Tensor<float>;

namespace detail {

template <std::floating_point T>
Tensor<T> make_result(Shape shape, std::vector<T> values,
                      std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->values = std::make_shared<std::vector<T>>(std::move(values));
  bool any = false;
  for (const auto* in : inputs) any = any || in->requires_grad();
  if (any) {
    node->requires_grad = true;
    for (const auto* in : inputs) node->parents.push_back(in->node());
    node->backward = std::move(backward);
  }
  return Tensor<T>::from_node(std::move(node));
}

template <std::floating_point T>
Tensor<T> make_result(Shape shape, std::vector<T> values,
                      const std::vector<Tensor<T>>& inputs,
                      std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->values = std::make_shared<std::vector<T>>(std::move(values));
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (any) {
    node->requires_grad = true;
    for (const auto& in : inputs) node->parents.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Tensor<T>::from_node(std::move(node));
}

}  // namespace detail

template <std::floating_point T>
void Tensor<T>::backward() const {
  if (size() != 1) {
    throw shape_error("backward() requires a scalar, got shape " +
                      shape_string(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS yields a topological order (parents first).
  std::vector<node_type*> order;
  std::unordered_set<node_type*> seen;
  std::vector<std::pair<node_type*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      node_type* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (auto* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->values->size(), T(0));
  }
  node_->grad_slot()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward(**it);
  }
}

// ---------------------------------------------------------------------------
// Index helpers

namespace detail {

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    std::size_t da = i + a.size() >= rank ? a[i + a.size() - rank] : 1;
    std::size_t db = i + b.size() >= rank ? b[i + b.size() - rank] : 1;
    if (da != db && da != 1 && db != 1) {
      throw shape_error("cannot broadcast " + shape_string(a) + " with " +
                        shape_string(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// For each element of `out` (row-major), the flat index of the element of
// `from` it reads under broadcasting. `from` is left-padded with ones.
inline std::vector<std::size_t> broadcast_offsets(const Shape& from,
                                                  const Shape& out) {
  std::size_t rank = out.size();
  std::vector<std::size_t> stride(rank, 0);
  std::size_t s = 1;
  for (std::size_t i = rank; i-- > 0;) {
    std::size_t src_axis = i + from.size();
    if (src_axis < rank) continue;
    std::size_t d = from[src_axis - rank];
    stride[i] = d == 1 ? 0 : s;
    s *= d;
  }
  std::size_t n = shape_numel(out);
  std::vector<std::size_t> offsets(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t off = 0;
  for (std::size_t k = 0; k < n; ++k) {
    offsets[k] = off;
    for (std::size_t i = rank; i-- > 0;) {
      ++idx[i];
      off += stride[i];
      if (idx[i] < out[i]) break;
      off -= stride[i] * idx[i];
      idx[i] = 0;
    }
  }
  return offsets;
}

inline Shape reduced_shape(const Shape& shape, const std::vector<std::size_t>& axes) {
  Shape r = shape;
  for (auto a : axes) {
    if (a >= shape.size()) throw shape_error("reduction axis out of range");
    r[a] = 1;
  }
  return r;
}

inline Shape squeeze_axes(const Shape& shape, const std::vector<std::size_t>& axes) {
  Shape out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (std::find(axes.begin(), axes.end(), i) == axes.end()) out.push_back(shape[i]);
  }
  if (out.empty()) out = {1};
  return out;
}

// Maps flat output indices to flat indices of a broadcast operand. When the
// operand's non-unit dimensions form one contiguous run (per-channel bias,
// per-sample-channel scale) the index is computed arithmetically; otherwise
// a table is built.
class BroadcastIndex {
 public:
  BroadcastIndex(const Shape& from, const Shape& out) {
    const std::size_t rank = out.size();
    Shape padded(rank - from.size(), 1);
    padded.insert(padded.end(), from.begin(), from.end());
    if (padded == out) {
      identity_ = true;
      return;
    }
    std::size_t first = rank, last = 0;
    for (std::size_t i = 0; i < rank; ++i) {
      if (padded[i] != 1) {
        first = std::min(first, i);
        last = i + 1;
      }
    }
    bool block = true;
    for (std::size_t i = first; i < last; ++i) block = block && padded[i] == out[i];
    if (first == rank) {
      mid_ = 1;
      inner_ = 1;
    } else if (block) {
      mid_ = 1;
      inner_ = 1;
      for (std::size_t i = first; i < last; ++i) mid_ *= out[i];
      for (std::size_t i = last; i < rank; ++i) inner_ *= out[i];
    } else {
      table_ = std::make_shared<std::vector<std::size_t>>(broadcast_offsets(from, out));
    }
  }

  std::size_t operator()(std::size_t k) const {
    if (identity_) return k;
    if (table_) return (*table_)[k];
    return (k / inner_) % mid_;
  }

 private:
  bool identity_ = false;
  std::size_t mid_ = 1, inner_ = 1;
  std::shared_ptr<std::vector<std::size_t>> table_;
};

template <std::floating_point T, typename F, typename DA, typename DB>
Tensor<T> binary_broadcast(const Tensor<T>& a, const Tensor<T>& b, F f, DA da, DB db) {
  Shape out = broadcast_shape(a.shape(), b.shape());
  std::size_t n = shape_numel(out);
  BroadcastIndex ia(a.shape(), out), ib(b.shape(), out);
  std::vector<T> v(n);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t k = 0; k < n; ++k) v[k] = f(av[ia(k)], bv[ib(k)]);
  return make_result<T>(out, std::move(v), {&a, &b}, [ia, ib, n, da, db](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const auto& x = *pa.values;
    const auto& y = *pb.values;
    if (pa.requires_grad) {
      auto& g = pa.grad_slot();
      for (std::size_t k = 0; k < n; ++k) g[ia(k)] += self.grad[k] * da(x[ia(k)], y[ib(k)]);
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_slot();
      for (std::size_t k = 0; k < n; ++k) g[ib(k)] += self.grad[k] * db(x[ia(k)], y[ib(k)]);
    }
  });
}

template <std::floating_point T, typename F, typename DF>
Tensor<T> unary(const Tensor<T>& a, F f, DF df) {
  auto av = a.values();
  std::vector<T> v(av.size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = f(av[k]);
  return make_result<T>(a.shape(), std::move(v), {&a}, [df](Node<T>& self) {
    auto& p = *self.parents[0];
    auto& g = p.grad_slot();
    const auto& x = *p.values;
    const auto& y = *self.values;
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += self.grad[k] * df(x[k], y[k]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic (numpy broadcasting)

template <std::floating_point T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() == b.shape()) {
    auto av = a.values();
    auto bv = b.values();
    std::vector<T> v(av.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = av[k] + bv[k];
    return detail::make_result<T>(a.shape(), std::move(v), {&a, &b},
                                  [](detail::Node<T>& self) {
      for (auto& p : self.parents) {
        if (!p->requires_grad) continue;
        auto& g = p->grad_slot();
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += self.grad[k];
      }
    });
  }
  return detail::binary_broadcast(
      a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <std::floating_point T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_broadcast(
      a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <std::floating_point T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_broadcast(
      a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <std::floating_point T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_broadcast(
      a, b, [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
      [](T x, T y) { return -x / (y * y); });
}

template <std::floating_point T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  return detail::unary(a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <std::floating_point T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
  return detail::unary(a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <std::floating_point T>
Tensor<T> neg(const Tensor<T>& a) {
  return mul_scalar(a, T(-1));
}

template <std::floating_point T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <std::floating_point T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <std::floating_point T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <std::floating_point T>
Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }
template <std::floating_point T>
Tensor<T> operator-(const Tensor<T>& a) { return neg(a); }
template <std::floating_point T>
Tensor<T> operator+(const Tensor<T>& a, T s) { return add_scalar(a, s); }
template <std::floating_point T>
Tensor<T> operator-(const Tensor<T>& a, T s) { return add_scalar(a, -s); }
template <std::floating_point T>
Tensor<T> operator*(const Tensor<T>& a, T s) { return mul_scalar(a, s); }
template <std::floating_point T>
Tensor<T> operator*(T s, const Tensor<T>& a) { return mul_scalar(a, s); }

// ---------------------------------------------------------------------------
// Elementwise functions

template <std::floating_point T>
Tensor<T> exp(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <std::floating_point T>
Tensor<T> log(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <std::floating_point T>
Tensor<T> sqrt(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return std::sqrt(x); },
                       [](T, T y) { return T(0.5) / y; });
}

template <std::floating_point T>
T sigmoid_value(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  T e = std::exp(x);
  return e / (T(1) + e);
}

template <std::floating_point T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return sigmoid_value(x); },
                       [](T, T y) { return y * (T(1) - y); });
}

template <std::floating_point T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  return detail::unary(a, [slope](T x) { return x > T(0) ? x : slope * x; },
                       [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

// Gradient is zero where the input lies outside [lo, hi].
template <std::floating_point T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  return detail::unary(a, [lo, hi](T x) { return std::clamp(x, lo, hi); },
                       [lo, hi](T x, T) { return (x < lo || x > hi) ? T(0) : T(1); });
}

template <std::floating_point T>
Tensor<T> stop_gradient(const Tensor<T>& a) {
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = a.shape();
  node->values = a.node()->values;
  return Tensor<T>::from_node(std::move(node));
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <std::floating_point T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.size()) {
    throw shape_error("cannot reshape " + shape_string(a.shape()) + " to " +
                      shape_string(shape));
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->values = a.node()->values;
  if (a.requires_grad()) {
    node->requires_grad = true;
    node->parents.push_back(a.node());
    node->backward = [](detail::Node<T>& self) {
      auto& g = self.parents[0]->grad_slot();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += self.grad[k];
    };
  }
  return Tensor<T>::from_node(std::move(node));
}

namespace detail {
// Splits a shape around `axis` into (outer, extent, inner) element counts.
inline std::tuple<std::size_t, std::size_t, std::size_t> axis_split(const Shape& s,
                                                                    std::size_t axis) {
  if (axis >= s.size()) throw shape_error("axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  return {outer, s[axis], inner};
}
}  // namespace detail

template <std::floating_point T>
Tensor<T> narrow(const Tensor<T>& a, std::size_t axis, std::size_t start, std::size_t length) {
  auto [outer, extent, inner] = detail::axis_split(a.shape(), axis);
  if (length == 0 || start + length > extent) throw shape_error("narrow out of range");
  Shape out = a.shape();
  out[axis] = length;
  std::vector<T> v(outer * length * inner);
  auto av = a.values();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(av.begin() + (o * extent + start) * inner, length * inner,
                v.begin() + o * length * inner);
  }
  return detail::make_result<T>(out, std::move(v), {&a},
                                [outer, extent, inner, start, length](detail::Node<T>& self) {
    auto& g = self.parents[0]->grad_slot();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t k = 0; k < length * inner; ++k) {
        g[(o * extent + start) * inner + k] += self.grad[o * length * inner + k];
      }
    }
  });
}

template <std::floating_point T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw shape_error("concat of nothing");
  Shape out = parts.front().shape();
  if (axis >= out.size()) throw shape_error("concat axis out of range");
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != out.size()) throw shape_error("concat rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != out[i]) throw shape_error("concat shape mismatch");
    }
    total += s[axis];
  }
  out[axis] = total;
  auto [outer, extent, inner] = detail::axis_split(out, axis);
  std::vector<T> v(shape_numel(out));
  std::vector<std::size_t> starts;
  std::size_t start = 0;
  for (const auto& p : parts) {
    starts.push_back(start);
    std::size_t len = p.dim(axis);
    auto pv = p.values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.begin() + o * len * inner, len * inner,
                  v.begin() + (o * extent + start) * inner);
    }
    start += len;
  }
  return detail::make_result<T>(out, std::move(v), parts,
                                [outer, extent, inner, starts](detail::Node<T>& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      auto& p = *self.parents[i];
      if (!p.requires_grad) continue;
      auto& g = p.grad_slot();
      std::size_t len = g.size() / (outer * inner);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t k = 0; k < len * inner; ++k) {
          g[o * len * inner + k] += self.grad[(o * extent + starts[i]) * inner + k];
        }
      }
    }
  });
}

// Gathers slices along `axis`; repeated indices accumulate in backward.
template <std::floating_point T>
Tensor<T> index_select(const Tensor<T>& a, std::size_t axis, std::vector<std::size_t> indices) {
  auto [outer, extent, inner] = detail::axis_split(a.shape(), axis);
  if (indices.empty()) throw shape_error("index_select with no indices");
  for (auto i : indices) {
    if (i >= extent) throw shape_error("index_select index out of range");
  }
  Shape out = a.shape();
  out[axis] = indices.size();
  std::size_t m = indices.size();
  std::vector<T> v(outer * m * inner);
  auto av = a.values();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < m; ++j) {
      std::copy_n(av.begin() + (o * extent + indices[j]) * inner, inner,
                  v.begin() + (o * m + j) * inner);
    }
  }
  return detail::make_result<T>(out, std::move(v), {&a},
                                [outer, extent, inner, idx = std::move(indices)](detail::Node<T>& self) {
    auto& g = self.parents[0]->grad_slot();
    std::size_t m = idx.size();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t k = 0; k < inner; ++k) {
          g[(o * extent + idx[j]) * inner + k] += self.grad[(o * m + j) * inner + k];
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

template <std::floating_point T>
Tensor<T> sum(const Tensor<T>& a) {
  auto av = a.values();
  T s = T(0);
  for (auto x : av) s += x;
  return detail::make_result<T>({1}, {s}, {&a}, [](detail::Node<T>& self) {
    auto& g = self.parents[0]->grad_slot();
    for (auto& x : g) x += self.grad[0];
  });
}

template <std::floating_point T>
Tensor<T> mean(const Tensor<T>& a) {
  return mul_scalar(sum(a), T(1) / static_cast<T>(a.size()));
}

template <std::floating_point T>
Tensor<T> sum(const Tensor<T>& a, const std::vector<std::size_t>& axes, bool keepdim = false) {
  Shape r = detail::reduced_shape(a.shape(), axes);
  detail::BroadcastIndex off(r, a.shape());
  std::vector<T> v(shape_numel(r), T(0));
  auto av = a.values();
  for (std::size_t k = 0; k < av.size(); ++k) v[off(k)] += av[k];
  Shape out = keepdim ? r : detail::squeeze_axes(a.shape(), axes);
  return detail::make_result<T>(out, std::move(v), {&a}, [off](detail::Node<T>& self) {
    auto& g = self.parents[0]->grad_slot();
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += self.grad[off(k)];
  });
}

template <std::floating_point T>
Tensor<T> mean(const Tensor<T>& a, const std::vector<std::size_t>& axes, bool keepdim = false) {
  std::size_t n = 1;
  for (auto ax : axes) n *= a.dim(ax);
  return mul_scalar(sum(a, axes, keepdim), T(1) / static_cast<T>(n));
}

// Population standard deviation (divides by n). The gradient at a zero
// deviation slice is taken as zero.
template <std::floating_point T>
Tensor<T> std_dev(const Tensor<T>& a, const std::vector<std::size_t>& axes, bool keepdim = false) {
  Shape r = detail::reduced_shape(a.shape(), axes);
  detail::BroadcastIndex off(r, a.shape());
  std::size_t groups = shape_numel(r);
  std::size_t n = a.size() / groups;
  auto av = a.values();
  auto mu = std::make_shared<std::vector<T>>(groups, T(0));
  for (std::size_t k = 0; k < av.size(); ++k) (*mu)[off(k)] += av[k];
  for (auto& m : *mu) m /= static_cast<T>(n);
  std::vector<T> v(groups, T(0));
  for (std::size_t k = 0; k < av.size(); ++k) {
    T d = av[k] - (*mu)[off(k)];
    v[off(k)] += d * d;
  }
  for (auto& s : v) s = std::sqrt(s / static_cast<T>(n));
  Shape out = keepdim ? r : detail::squeeze_axes(a.shape(), axes);
  return detail::make_result<T>(out, std::move(v), {&a}, [off, mu, n](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    auto& g = p.grad_slot();
    const auto& x = *p.values;
    const auto& sd = *self.values;
    for (std::size_t k = 0; k < g.size(); ++k) {
      std::size_t r = off(k);
      if (sd[r] > T(0)) {
        g[k] += self.grad[r] * (x[k] - (*mu)[r]) / (static_cast<T>(n) * sd[r]);
      }
    }
  });
}

// Numerically stable log-sum-exp over the last axis.
template <std::floating_point T>
Tensor<T> logsumexp(const Tensor<T>& a) {
  std::size_t inner = a.shape().back();
  std::size_t outer = a.size() / inner;
  auto av = a.values();
  std::vector<T> v(outer);
  for (std::size_t o = 0; o < outer; ++o) {
    auto row = av.subspan(o * inner, inner);
    T m = *std::max_element(row.begin(), row.end());
    T s = T(0);
    for (auto x : row) s += std::exp(x - m);
    v[o] = m + std::log(s);
  }
  Shape out(a.shape().begin(), a.shape().end() - 1);
  if (out.empty()) out = {1};
  return detail::make_result<T>(out, std::move(v), {&a}, [inner, outer](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    auto& g = p.grad_slot();
    const auto& x = *p.values;
    for (std::size_t o = 0; o < outer; ++o) {
      T lse = (*self.values)[o];
      for (std::size_t k = 0; k < inner; ++k) {
        g[o * inner + k] += self.grad[o] * std::exp(x[o * inner + k] - lse);
      }
    }
  });
}

class zero_norm_error : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Divides each vector along the last axis by its Euclidean norm.
template <std::floating_point T>
Tensor<T> l2_normalize(const Tensor<T>& a) {
  std::size_t inner = a.shape().back();
  std::size_t outer = a.size() / inner;
  auto av = a.values();
  auto norms = std::make_shared<std::vector<T>>(outer);
  std::vector<T> v(a.size());
  for (std::size_t o = 0; o < outer; ++o) {
    T s = T(0);
    for (std::size_t k = 0; k < inner; ++k) s += av[o * inner + k] * av[o * inner + k];
    T nrm = std::sqrt(s);
    if (nrm == T(0)) throw zero_norm_error("l2_normalize of a zero vector");
    (*norms)[o] = nrm;
    for (std::size_t k = 0; k < inner; ++k) v[o * inner + k] = av[o * inner + k] / nrm;
  }
  return detail::make_result<T>(a.shape(), std::move(v), {&a},
                                [inner, outer, norms](detail::Node<T>& self) {
    auto& g = self.parents[0]->grad_slot();
    const auto& y = *self.values;
    for (std::size_t o = 0; o < outer; ++o) {
      T dot = T(0);
      for (std::size_t k = 0; k < inner; ++k) dot += self.grad[o * inner + k] * y[o * inner + k];
      for (std::size_t k = 0; k < inner; ++k) {
        g[o * inner + k] += (self.grad[o * inner + k] - dot * y[o * inner + k]) / (*norms)[o];
      }
    }
  });
}

// (x - mean) / (std + eps) over the trailing `slice` elements of each row,
// population std. The mean is accumulated relative to the slice's first
// element, so a constant slice normalizes to exactly zero.
template <std::floating_point T>
Tensor<T> instance_norm(const Tensor<T>& a, std::size_t slice, T eps) {
  if (slice == 0 || a.size() % slice != 0) throw shape_error("instance_norm slice mismatch");
  const std::size_t groups = a.size() / slice;
  auto av = a.values();
  auto centered = std::make_shared<std::vector<T>>(a.size());
  auto sd = std::make_shared<std::vector<T>>(groups);
  std::vector<T> v(a.size());
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const T* x = av.data() + gi * slice;
    T* xc = centered->data() + gi * slice;
    T shift = x[0], acc = T(0);
    for (std::size_t k = 0; k < slice; ++k) acc += x[k] - shift;
    T mu = shift + acc / static_cast<T>(slice);
    T var = T(0);
    for (std::size_t k = 0; k < slice; ++k) {
      xc[k] = x[k] - mu;
      var += xc[k] * xc[k];
    }
    (*sd)[gi] = std::sqrt(var / static_cast<T>(slice));
    for (std::size_t k = 0; k < slice; ++k) v[gi * slice + k] = xc[k] / ((*sd)[gi] + eps);
  }
  return detail::make_result<T>(a.shape(), std::move(v), {&a},
                                [slice, groups, centered, sd, eps](detail::Node<T>& self) {
    auto& g = self.parents[0]->grad_slot();
    const T n = static_cast<T>(slice);
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const T* gy = self.grad.data() + gi * slice;
      const T* xc = centered->data() + gi * slice;
      T s = (*sd)[gi] + eps;
      T gsum = T(0), gxc = T(0);
      for (std::size_t k = 0; k < slice; ++k) {
        gsum += gy[k];
        gxc += gy[k] * xc[k];
      }
      T coef = (*sd)[gi] > T(0) ? gxc / (s * s * n * (*sd)[gi]) : T(0);
      for (std::size_t k = 0; k < slice; ++k) {
        g[gi * slice + k] += (gy[k] - gsum / n) / s - xc[k] * coef;
      }
    }
  });
}

// Gated linear unit: splits `axis` in half and returns first * sigmoid(second).
template <std::floating_point T>
Tensor<T> glu(const Tensor<T>& a, std::size_t axis) {
  std::size_t n = a.dim(axis);
  if (n % 2 != 0) throw shape_error("glu needs an even extent on its axis");
  return mul(narrow(a, axis, 0, n / 2), sigmoid(narrow(a, axis, n / 2, n / 2)));
}

}  // namespace ssvc
