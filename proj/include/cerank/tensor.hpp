#pragma once

// Dense row-major tensors with reverse-mode differentiation driven by an
// explicit operation tape. Model math runs in float; the same templates
// instantiate with double for high-precision reference checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cerank {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename S>
class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;  // same length as value iff requires_grad
    bool requires_grad = false;
  };

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    const auto count = shape_numel(shape);
    if (count < 0) throw std::invalid_argument("tensor: negative dimension");
    n->shape = std::move(shape);
    n->value.assign(static_cast<std::size_t>(count), S{0});
    n->requires_grad = requires_grad;
    if (requires_grad) n->grad.assign(n->value.size(), S{0});
    return Tensor(std::move(n));
  }

  static Tensor from_data(Shape shape, std::vector<S> data,
                          bool requires_grad = false) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
      throw std::invalid_argument("tensor: data length " +
                                  std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    if (requires_grad) n->grad.assign(n->value.size(), S{0});
    return Tensor(std::move(n));
  }

  static Tensor scalar(S v, bool requires_grad = false) {
    return from_data({1}, {v}, requires_grad);
  }

  bool valid() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::int64_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::int64_t numel() const {
    return static_cast<std::int64_t>(node_->value.size());
  }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  std::span<const S> value() const { return node_->value; }
  std::span<S> value() { return node_->value; }
  std::span<const S> grad() const { return node_->grad; }
  std::span<S> grad() { return node_->grad; }

  S item() const {
    if (numel() != 1) {
      throw std::invalid_argument("tensor: item() on non-scalar " +
                                  shape_str(node_->shape));
    }
    return node_->value[0];
  }

  void zero_grad() {
    if (node_ && node_->requires_grad)
      std::fill(node_->grad.begin(), node_->grad.end(), S{0});
  }

  void set_value(std::span<const S> v) {
    if (v.size() != node_->value.size())
      throw std::invalid_argument("tensor: set_value size mismatch");
    std::copy(v.begin(), v.end(), node_->value.begin());
  }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  std::shared_ptr<Node> node_;
};

// Ordered record of applied operations. Entries are appended in execution
// order, which is a topological order of the graph by construction; walking
// the list in reverse replays every gradient rule.
//
// Leaf tensors (never an entry output) keep their gradients across calls,
// so repeated backward() accumulates; zero_grad() resets explicitly.
// Not thread-safe: one tape per model instance during forward/backward.
template <typename S>
class Tape {
 public:
  using NodePtr = std::shared_ptr<typename Tensor<S>::Node>;

  void record(const Tensor<S>& out, std::function<void()> pull) {
    entries_.push_back(Entry{out.node(), std::move(pull)});
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  void clear() { entries_.clear(); }

  void backward(const Tensor<S>& loss) {
    if (!loss.valid() || loss.numel() != 1) {
      throw std::invalid_argument("backward: loss must be a scalar tensor");
    }
    // Interior nodes restart from zero every walk; leaves accumulate.
    for (auto& e : entries_) {
      e.out->grad.assign(e.out->value.size(), S{0});
    }
    auto& ln = *loss.node();
    if (ln.grad.size() != ln.value.size()) ln.grad.assign(1, S{0});
    ln.grad[0] += S{1};
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      it->pull();
    }
  }

 private:
  struct Entry {
    NodePtr out;
    std::function<void()> pull;
  };
  std::vector<Entry> entries_;
};

namespace detail {

template <typename S>
bool track(const Tape<S>* tape, std::initializer_list<const Tensor<S>*> ins) {
  if (!tape) return false;
  for (const auto* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

template <typename S>
void require_same_shape(const Tensor<S>& a, const Tensor<S>& b,
                        const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

}  // namespace detail

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b,
                 Tape<S>* tape = nullptr) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul: dimension mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  const auto m = a.dim(0), n = a.dim(1), p = b.dim(1);
  const bool rg = detail::track(tape, {&a, &b});
  Tensor<S> out = Tensor<S>::zeros({m, p}, rg);
  const S* av = a.value().data();
  const S* bv = b.value().data();
  S* ov = out.value().data();
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t kk = 0; kk < n; ++kk) {
      const S aik = av[i * n + kk];
      const S* brow = bv + kk * p;
      S* orow = ov + i * p;
      for (std::int64_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
    }
  }
  if (rg) {
    auto an = a.node(), bn = b.node(), on = out.node();
    tape->record(out, [an, bn, on, m, n, p] {
      const S* g = on->grad.data();
      if (an->requires_grad) {  // dA = dC * B^T
        S* ga = an->grad.data();
        const S* bv2 = bn->value.data();
        for (std::int64_t i = 0; i < m; ++i)
          for (std::int64_t kk = 0; kk < n; ++kk) {
            S acc{0};
            const S* grow = g + i * p;
            const S* brow = bv2 + kk * p;
            for (std::int64_t j = 0; j < p; ++j) acc += grow[j] * brow[j];
            ga[i * n + kk] += acc;
          }
      }
      if (bn->requires_grad) {  // dB = A^T * dC
        S* gb = bn->grad.data();
        const S* av2 = an->value.data();
        for (std::int64_t i = 0; i < m; ++i)
          for (std::int64_t kk = 0; kk < n; ++kk) {
            const S aik = av2[i * n + kk];
            const S* grow = g + i * p;
            S* gbrow = gb + kk * p;
            for (std::int64_t j = 0; j < p; ++j) gbrow[j] += aik * grow[j];
          }
      }
    });
  }
  return out;
}

// y = W x for W [m x n], x [n].
template <typename S>
Tensor<S> matvec(const Tensor<S>& w, const Tensor<S>& x,
                 Tape<S>* tape = nullptr) {
  if (w.rank() != 2 || x.rank() != 1 || w.dim(1) != x.dim(0)) {
    throw std::invalid_argument("matvec: dimension mismatch " +
                                shape_str(w.shape()) + " vs " +
                                shape_str(x.shape()));
  }
  const auto m = w.dim(0), n = w.dim(1);
  const bool rg = detail::track(tape, {&w, &x});
  Tensor<S> out = Tensor<S>::zeros({m}, rg);
  const S* wv = w.value().data();
  const S* xv = x.value().data();
  S* ov = out.value().data();
  for (std::int64_t i = 0; i < m; ++i) {
    const S* row = wv + i * n;
    S acc{0};
    for (std::int64_t j = 0; j < n; ++j) acc += row[j] * xv[j];
    ov[i] = acc;
  }
  if (rg) {
    auto wn = w.node(), xn = x.node(), on = out.node();
    tape->record(out, [wn, xn, on, m, n] {
      const S* g = on->grad.data();
      if (wn->requires_grad) {
        S* gw = wn->grad.data();
        const S* xv2 = xn->value.data();
        for (std::int64_t i = 0; i < m; ++i) {
          const S gi = g[i];
          S* row = gw + i * n;
          for (std::int64_t j = 0; j < n; ++j) row[j] += gi * xv2[j];
        }
      }
      if (xn->requires_grad) {
        S* gx = xn->grad.data();
        const S* wv2 = wn->value.data();
        for (std::int64_t i = 0; i < m; ++i) {
          const S gi = g[i];
          const S* row = wv2 + i * n;
          for (std::int64_t j = 0; j < n; ++j) gx[j] += gi * row[j];
        }
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b, Tape<S>* tape = nullptr) {
  detail::require_same_shape(a, b, "add");
  const bool rg = detail::track(tape, {&a, &b});
  Tensor<S> out = Tensor<S>::zeros(a.shape(), rg);
  const std::size_t n = out.value().size();
  for (std::size_t i = 0; i < n; ++i) out.value()[i] = a.value()[i] + b.value()[i];
  if (rg) {
    auto an = a.node(), bn = b.node(), on = out.node();
    tape->record(out, [an, bn, on] {
      const auto& g = on->grad;
      if (an->requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i) bn->grad[i] += g[i];
    });
  }
  return out;
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b, Tape<S>* tape = nullptr) {
  detail::require_same_shape(a, b, "sub");
  const bool rg = detail::track(tape, {&a, &b});
  Tensor<S> out = Tensor<S>::zeros(a.shape(), rg);
  const std::size_t n = out.value().size();
  for (std::size_t i = 0; i < n; ++i) out.value()[i] = a.value()[i] - b.value()[i];
  if (rg) {
    auto an = a.node(), bn = b.node(), on = out.node();
    tape->record(out, [an, bn, on] {
      const auto& g = on->grad;
      if (an->requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i) bn->grad[i] -= g[i];
    });
  }
  return out;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b, Tape<S>* tape = nullptr) {
  detail::require_same_shape(a, b, "mul");
  const bool rg = detail::track(tape, {&a, &b});
  Tensor<S> out = Tensor<S>::zeros(a.shape(), rg);
  const std::size_t n = out.value().size();
  for (std::size_t i = 0; i < n; ++i) out.value()[i] = a.value()[i] * b.value()[i];
  if (rg) {
    auto an = a.node(), bn = b.node(), on = out.node();
    tape->record(out, [an, bn, on] {
      const auto& g = on->grad;
      if (an->requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i)
          an->grad[i] += g[i] * bn->value[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i)
          bn->grad[i] += g[i] * an->value[i];
    });
  }
  return out;
}

template <typename S>
Tensor<S> relu(const Tensor<S>& a, Tape<S>* tape = nullptr) {
  const bool rg = detail::track(tape, {&a});
  Tensor<S> out = Tensor<S>::zeros(a.shape(), rg);
  const std::size_t n = out.value().size();
  for (std::size_t i = 0; i < n; ++i)
    out.value()[i] = a.value()[i] > S{0} ? a.value()[i] : S{0};
  if (rg) {
    auto an = a.node(), on = out.node();
    tape->record(out, [an, on] {
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        if (an->value[i] > S{0}) an->grad[i] += on->grad[i];
    });
  }
  return out;
}

template <typename S>
Tensor<S> tanh(const Tensor<S>& a, Tape<S>* tape = nullptr) {
  const bool rg = detail::track(tape, {&a});
  Tensor<S> out = Tensor<S>::zeros(a.shape(), rg);
  const std::size_t n = out.value().size();
  for (std::size_t i = 0; i < n; ++i) out.value()[i] = std::tanh(a.value()[i]);
  if (rg) {
    auto an = a.node(), on = out.node();
    tape->record(out, [an, on] {
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        const S y = on->value[i];
        an->grad[i] += on->grad[i] * (S{1} - y * y);
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a, Tape<S>* tape = nullptr) {
  const bool rg = detail::track(tape, {&a});
  Tensor<S> out = Tensor<S>::zeros(a.shape(), rg);
  const std::size_t n = out.value().size();
  for (std::size_t i = 0; i < n; ++i) {
    const S x = a.value()[i];
    // Split on sign so exp never overflows.
    if (x >= S{0}) {
      const S e = std::exp(-x);
      out.value()[i] = S{1} / (S{1} + e);
    } else {
      const S e = std::exp(x);
      out.value()[i] = e / (S{1} + e);
    }
  }
  if (rg) {
    auto an = a.node(), on = out.node();
    tape->record(out, [an, on] {
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        const S y = on->value[i];
        an->grad[i] += on->grad[i] * y * (S{1} - y);
      }
    });
  }
  return out;
}

// Max-subtracted softmax over a vector; the normalizer accumulates in double.
template <typename S>
Tensor<S> softmax(const Tensor<S>& v, Tape<S>* tape = nullptr) {
  if (v.rank() != 1 || v.numel() < 1) {
    throw std::invalid_argument("softmax: expected a non-empty vector, got " +
                                shape_str(v.shape()));
  }
  const bool rg = detail::track(tape, {&v});
  Tensor<S> out = Tensor<S>::zeros(v.shape(), rg);
  const std::size_t n = out.value().size();
  S mx = v.value()[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, v.value()[i]);
  double denom = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const S e = std::exp(v.value()[i] - mx);
    out.value()[i] = e;
    denom += static_cast<double>(e);
  }
  for (std::size_t i = 0; i < n; ++i)
    out.value()[i] = static_cast<S>(static_cast<double>(out.value()[i]) / denom);
  if (rg) {
    auto vn = v.node(), on = out.node();
    tape->record(out, [vn, on] {
      double dot = 0.0;
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        dot += static_cast<double>(on->grad[i]) * on->value[i];
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        vn->grad[i] += on->value[i] * (on->grad[i] - static_cast<S>(dot));
    });
  }
  return out;
}

template <typename S>
Tensor<S> concat(std::span<const Tensor<S>> parts, Tape<S>* tape = nullptr) {
  if (parts.empty()) throw std::invalid_argument("concat: empty input list");
  std::int64_t total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.rank() != 1)
      throw std::invalid_argument("concat: expected vectors, got " +
                                  shape_str(p.shape()));
    total += p.numel();
    rg = rg || (tape && p.requires_grad());
  }
  Tensor<S> out = Tensor<S>::zeros({total}, rg);
  std::int64_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().begin(), p.value().end(), out.value().begin() + off);
    off += p.numel();
  }
  if (rg) {
    std::vector<std::shared_ptr<typename Tensor<S>::Node>> ins;
    ins.reserve(parts.size());
    for (const auto& p : parts) ins.push_back(p.node());
    auto on = out.node();
    tape->record(out, [ins = std::move(ins), on] {
      std::size_t off2 = 0;
      for (const auto& in : ins) {
        if (in->requires_grad)
          for (std::size_t i = 0; i < in->value.size(); ++i)
            in->grad[i] += on->grad[off2 + i];
        off2 += in->value.size();
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> concat(std::initializer_list<Tensor<S>> parts, Tape<S>* tape = nullptr) {
  std::vector<Tensor<S>> v(parts);
  return concat(std::span<const Tensor<S>>(v), tape);
}

template <typename S>
Tensor<S> slice(const Tensor<S>& v, std::int64_t offset, std::int64_t len,
                Tape<S>* tape = nullptr) {
  if (v.rank() != 1 || offset < 0 || len < 0 || offset + len > v.numel()) {
    throw std::invalid_argument("slice: range [" + std::to_string(offset) +
                                ", " + std::to_string(offset + len) +
                                ") out of bounds for " + shape_str(v.shape()));
  }
  const bool rg = detail::track(tape, {&v});
  Tensor<S> out = Tensor<S>::zeros({len}, rg);
  std::copy(v.value().begin() + offset, v.value().begin() + offset + len,
            out.value().begin());
  if (rg) {
    auto vn = v.node(), on = out.node();
    tape->record(out, [vn, on, offset] {
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        vn->grad[static_cast<std::size_t>(offset) + i] += on->grad[i];
    });
  }
  return out;
}

// Row i of a matrix as a vector; the gradient scatters back into that row.
template <typename S>
Tensor<S> select_row(const Tensor<S>& m, std::int64_t i,
                     Tape<S>* tape = nullptr) {
  if (m.rank() != 2 || i < 0 || i >= m.dim(0)) {
    throw std::invalid_argument("select_row: row " + std::to_string(i) +
                                " out of bounds for " + shape_str(m.shape()));
  }
  const auto cols = m.dim(1);
  const bool rg = detail::track(tape, {&m});
  Tensor<S> out = Tensor<S>::zeros({cols}, rg);
  std::copy(m.value().begin() + i * cols, m.value().begin() + (i + 1) * cols,
            out.value().begin());
  if (rg) {
    auto mn = m.node(), on = out.node();
    tape->record(out, [mn, on, i, cols] {
      for (std::int64_t j = 0; j < cols; ++j)
        mn->grad[static_cast<std::size_t>(i * cols + j)] += on->grad[j];
    });
  }
  return out;
}

template <typename S>
Tensor<S> sum(const Tensor<S>& a, Tape<S>* tape = nullptr) {
  const bool rg = detail::track(tape, {&a});
  Tensor<S> out = Tensor<S>::zeros({1}, rg);
  S acc{0};
  for (const S x : a.value()) acc += x;
  out.value()[0] = acc;
  if (rg) {
    auto an = a.node(), on = out.node();
    tape->record(out, [an, on] {
      const S g = on->grad[0];
      for (auto& gi : an->grad) gi += g;
    });
  }
  return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c, Tape<S>* tape = nullptr) {
  const bool rg = detail::track(tape, {&a});
  Tensor<S> out = Tensor<S>::zeros(a.shape(), rg);
  for (std::size_t i = 0; i < out.value().size(); ++i)
    out.value()[i] = a.value()[i] * c;
  if (rg) {
    auto an = a.node(), on = out.node();
    tape->record(out, [an, on, c] {
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        an->grad[i] += on->grad[i] * c;
    });
  }
  return out;
}

// out = s * v where s is a scalar tensor (both sides differentiable).
template <typename S>
Tensor<S> scale_by(const Tensor<S>& s, const Tensor<S>& v,
                   Tape<S>* tape = nullptr) {
  if (s.numel() != 1)
    throw std::invalid_argument("scale_by: scale must be scalar, got " +
                                shape_str(s.shape()));
  const bool rg = detail::track(tape, {&s, &v});
  Tensor<S> out = Tensor<S>::zeros(v.shape(), rg);
  const S c = s.value()[0];
  for (std::size_t i = 0; i < out.value().size(); ++i)
    out.value()[i] = v.value()[i] * c;
  if (rg) {
    auto sn = s.node(), vn = v.node(), on = out.node();
    tape->record(out, [sn, vn, on] {
      if (sn->requires_grad) {
        S acc{0};
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          acc += on->grad[i] * vn->value[i];
        sn->grad[0] += acc;
      }
      if (vn->requires_grad) {
        const S c2 = sn->value[0];
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          vn->grad[i] += on->grad[i] * c2;
      }
    });
  }
  return out;
}

// Copy into a new shape with the same element count; gradient passes through.
template <typename S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape, Tape<S>* tape = nullptr) {
  if (shape_numel(shape) != a.numel()) {
    throw std::invalid_argument("reshape: cannot view " +
                                shape_str(a.shape()) + " as " +
                                shape_str(shape));
  }
  const bool rg = detail::track(tape, {&a});
  Tensor<S> out = Tensor<S>::zeros(std::move(shape), rg);
  std::copy(a.value().begin(), a.value().end(), out.value().begin());
  if (rg) {
    auto an = a.node(), on = out.node();
    tape->record(out, [an, on] {
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        an->grad[i] += on->grad[i];
    });
  }
  return out;
}

}  // namespace cerank
