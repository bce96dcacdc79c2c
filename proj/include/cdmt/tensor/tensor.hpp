#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cdmt/tensor/rng.hpp"

namespace cdmt {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

class ShapeError : public std::invalid_argument {
 public:
  ShapeError(std::string_view op, const Shape& a, const Shape& b)
      : std::invalid_argument(std::string(op) + ": incompatible shapes " + to_string(a) + " and " +
                              to_string(b)) {}
  ShapeError(std::string_view op, const Shape& a, std::string_view what)
      : std::invalid_argument(std::string(op) + ": shape " + to_string(a) + " " + std::string(what)) {}
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A trainable tensor living outside any graph. Gradients accumulate across
/// backward passes until zero_grad().
template <typename T>
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;

  Parameter() = default;
  Parameter(std::string n, Shape s)
      : name(std::move(n)), shape(std::move(s)), value(numel(shape), T(0)), grad(numel(shape), T(0)) {}

  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

template <typename T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename T>
class Var {
 public:
  Var() = default;

  const Shape& shape() const;
  std::span<const T> value() const;
  std::span<const T> grad() const;
  std::size_t size() const { return numel(shape()); }
  T item() const;
  std::size_t id() const { return id_; }
  Graph<T>* graph() const { return graph_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph<T>;
  Var(Graph<T>* g, std::size_t id) : graph_(g), id_(id) {}

  Graph<T>* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Tape of tensor operations with reverse-mode differentiation.
///
/// Nodes are appended in execution order, which is a topological order, and
/// backward() walks them in reverse. A graph supports exactly one backward();
/// build a fresh graph for every forward pass. A graph constructed with
/// record=false computes values only and rejects backward().
template <typename T>
class Graph {
 public:
  using Backward = std::function<void(Graph&, Var<T> out)>;
  using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const RowMat>;
  using MMap = Eigen::Map<RowMat>;
  using AlignedBuffer = std::vector<T, Eigen::aligned_allocator<T>>;

  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }
  std::size_t node_count() const { return nodes_.size(); }

  // ---- leaves -------------------------------------------------------------

  Var<T> constant(Shape shape, std::vector<T> value) {
    check_size("constant", shape, value.size());
    return push(std::move(shape), std::move(value), false, nullptr);
  }

  /// Differentiable leaf whose gradient can be read back after backward().
  Var<T> input(Shape shape, std::vector<T> value) {
    check_size("input", shape, value.size());
    return push(std::move(shape), std::move(value), record_, nullptr);
  }

  Var<T> param(Parameter<T>& p) {
    check_size("param", p.shape, p.value.size());
    auto v = push(p.shape, p.value, record_, nullptr);
    nodes_[v.id_].param = &p;
    return v;
  }

  /// Register an externally computed op. `bw` reads grad(out) and accumulates
  /// into grad() of its inputs; it only runs when out requires a gradient.
  Var<T> custom(Shape shape, std::vector<T> value, std::initializer_list<Var<T>> inputs, Backward bw) {
    check_size("custom", shape, value.size());
    bool ng = false;
    for (const auto& in : inputs) ng = ng || requires_grad(in);
    return push(std::move(shape), std::move(value), ng, ng ? std::move(bw) : Backward{});
  }

  // ---- node access --------------------------------------------------------

  const Shape& shape(Var<T> v) const { return node(v).shape; }
  const std::vector<T>& value(Var<T> v) const { return node(v).value; }
  std::vector<T>& grad(Var<T> v) { return node(v).grad; }
  const std::vector<T>& grad(Var<T> v) const { return node(v).grad; }
  bool requires_grad(Var<T> v) const { return node(v).needs_grad; }

  // ---- backward -----------------------------------------------------------

  void backward(Var<T> loss) {
    if (loss.graph_ != this) throw GraphError("backward: loss belongs to a different graph");
    if (!record_) throw GraphError("backward: graph was built without gradient recording");
    if (consumed_) throw GraphError("backward: graph already consumed; run a new forward pass");
    if (numel(node(loss).shape) != 1)
      throw GraphError("backward: loss must be a scalar, got shape " + to_string(node(loss).shape));
    if (!node(loss).needs_grad) throw GraphError("backward: loss does not depend on any differentiable leaf");
    consumed_ = true;

    for (std::size_t i = 0; i <= loss.id_; ++i) {
      auto& n = nodes_[i];
      if (n.needs_grad) n.grad.assign(n.value.size(), T(0));
    }
    nodes_[loss.id_].grad[0] = T(1);
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.needs_grad && n.backward) n.backward(*this, Var<T>(this, i));
    }
    for (std::size_t i = 0; i <= loss.id_; ++i) {
      auto& n = nodes_[i];
      if (n.param && n.needs_grad) {
        auto& pg = n.param->grad;
        for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
      }
    }
  }

  // ---- elementwise ----------------------------------------------------------

  Var<T> add(Var<T> a, Var<T> b) {
    same_shape("add", a, b);
    std::vector<T> out(value(a));
    const auto& bv = value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return custom(shape(a), std::move(out), {a, b}, [a, b](Graph& g, Var<T> out) {
      const auto& go = g.grad(out);
      g.accumulate(a, go);
      g.accumulate(b, go);
    });
  }

  /// x[..., n] + bias[n], broadcast over leading dimensions.
  Var<T> add_bias(Var<T> x, Var<T> bias) {
    const auto& xs = shape(x);
    if (xs.empty() || shape(bias).size() != 1 || shape(bias)[0] != xs.back())
      throw ShapeError("add_bias", xs, shape(bias));
    const std::size_t n = xs.back();
    std::vector<T> out(value(x));
    const auto& bv = value(bias);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % n];
    return custom(xs, std::move(out), {x, bias}, [x, bias, n](Graph& g, Var<T> out) {
      const auto& go = g.grad(out);
      g.accumulate(x, go);
      if (g.requires_grad(bias)) {
        auto& gb = g.grad(bias);
        for (std::size_t i = 0; i < go.size(); ++i) gb[i % n] += go[i];
      }
    });
  }

  Var<T> mul(Var<T> a, Var<T> b) {
    same_shape("mul", a, b);
    const auto& av = value(a);
    const auto& bv = value(b);
    std::vector<T> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return custom(shape(a), std::move(out), {a, b}, [a, b](Graph& g, Var<T> out) {
      const auto& go = g.grad(out);
      if (g.requires_grad(a)) {
        auto& ga = g.grad(a);
        const auto& bv = g.value(b);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv[i];
      }
      if (g.requires_grad(b)) {
        auto& gb = g.grad(b);
        const auto& av = g.value(a);
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av[i];
      }
    });
  }

  Var<T> scale(Var<T> a, T s) {
    std::vector<T> out(value(a));
    for (auto& v : out) v *= s;
    return custom(shape(a), std::move(out), {a}, [a, s](Graph& g, Var<T> out) {
      const auto& go = g.grad(out);
      auto& ga = g.grad(a);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += s * go[i];
    });
  }

  Var<T> relu(Var<T> a) {
    std::vector<T> out(value(a));
    for (auto& v : out) v = v > T(0) ? v : T(0);
    return custom(shape(a), std::move(out), {a}, [a](Graph& g, Var<T> out) {
      const auto& go = g.grad(out);
      const auto& av = g.value(a);
      auto& ga = g.grad(a);
      for (std::size_t i = 0; i < go.size(); ++i)
        if (av[i] > T(0)) ga[i] += go[i];
    });
  }

  /// Inverted dropout: kept units are scaled by 1/(1-p) so inference needs no rescaling.
  Var<T> dropout(Var<T> a, double p, CounterRng& rng) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must lie in [0, 1)");
    if (p == 0.0) return a;
    const T keep_scale = T(1.0 / (1.0 - p));
    std::vector<T> mask(value(a).size());
    for (auto& m : mask) m = rng.bernoulli(p) ? T(0) : keep_scale;
    std::vector<T> out(value(a));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    return custom(shape(a), std::move(out), {a}, [a, mask = std::move(mask)](Graph& g, Var<T> out) {
      const auto& go = g.grad(out);
      auto& ga = g.grad(a);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * mask[i];
    });
  }

  // ---- reductions -----------------------------------------------------------

  Var<T> sum(Var<T> a) {
    T s = T(0);
    for (T v : value(a)) s += v;
    return custom({1}, {s}, {a}, [a](Graph& g, Var<T> out) {
      const T go = g.grad(out)[0];
      for (auto& v : g.grad(a)) v += go;
    });
  }

  /// sum_i w_i * a_i with constant weights.
  Var<T> weighted_sum(Var<T> a, std::vector<T> w) {
    if (w.size() != value(a).size()) throw ShapeError("weighted_sum", shape(a), Shape{w.size()});
    T s = T(0);
    const auto& av = value(a);
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * av[i];
    return custom({1}, {s}, {a}, [a, w = std::move(w)](Graph& g, Var<T> out) {
      const T go = g.grad(out)[0];
      auto& ga = g.grad(a);
      for (std::size_t i = 0; i < w.size(); ++i) ga[i] += go * w[i];
    });
  }

  Var<T> dot(Var<T> a, Var<T> b) {
    same_shape("dot", a, b);
    return sum(mul(a, b));
  }

  // ---- shape ------------------------------------------------------------------

  Var<T> reshape(Var<T> a, Shape s) {
    if (numel(s) != value(a).size()) throw ShapeError("reshape", shape(a), s);
    return custom(std::move(s), value(a), {a}, [a](Graph& g, Var<T> out) {
      g.accumulate(a, g.grad(out));
    });
  }

  /// General axis permutation for tensors of rank <= 4.
  Var<T> permute(Var<T> a, std::vector<std::size_t> perm) {
    const Shape& in = shape(a);
    const std::size_t r = in.size();
    if (perm.size() != r || r > 4) throw ShapeError("permute", in, "cannot be permuted with given axes");
    std::vector<bool> seen(r, false);
    for (auto p : perm) {
      if (p >= r || seen[p]) throw ShapeError("permute", in, "has an invalid permutation");
      seen[p] = true;
    }
    Shape out_shape(r);
    for (std::size_t i = 0; i < r; ++i) out_shape[i] = in[perm[i]];
    // When the last axis stays in place whole rows move together; map holds
    // the input offset of every output block.
    const bool rows = r > 0 && perm[r - 1] == r - 1;
    const std::size_t block = rows ? in[r - 1] : 1, outer_rank = rows ? r - 1 : r;
    std::array<std::size_t, 4> in_stride{}, idx{}, dims{};
    std::size_t st = 1;
    for (std::size_t i = r; i-- > 0;) {
      in_stride[i] = st;
      st *= in[i];
    }
    for (std::size_t i = 0; i < outer_rank; ++i) dims[i] = out_shape[i];
    const auto& av = value(a);
    std::vector<std::size_t> map(block ? av.size() / block : 0);
    for (std::size_t flat = 0; flat < map.size(); ++flat) {
      std::size_t src = 0;
      for (std::size_t i = 0; i < outer_rank; ++i) src += idx[i] * in_stride[perm[i]];
      map[flat] = src;
      for (std::size_t i = outer_rank; i-- > 0;) {
        if (++idx[i] < dims[i]) break;
        idx[i] = 0;
      }
    }
    std::vector<T> out(av.size());
    for (std::size_t b = 0; b < map.size(); ++b)
      std::copy_n(av.begin() + static_cast<long>(map[b]), block, out.begin() + static_cast<long>(b * block));
    return custom(std::move(out_shape), std::move(out), {a}, [a, block, map = std::move(map)](Graph& g, Var<T> out) {
      const auto& go = g.grad(out);
      auto& ga = g.grad(a);
      for (std::size_t b = 0; b < map.size(); ++b) {
        T* dst = ga.data() + map[b];
        const T* src = go.data() + b * block;
        for (std::size_t k = 0; k < block; ++k) dst[k] += src[k];
      }
    });
  }

  // ---- linear algebra ---------------------------------------------------------

  /// op(A) * op(B) for rank-2 operands, or batched over the leading axis for
  /// rank-3 operands. op(X) is X or its transpose per the flags.
  ///
  /// Eigen picks packet or scalar code per coefficient from the address
  /// alignment, which changes rounding, so every product runs on 64-byte
  /// aligned copies and results depend on shapes alone.
  Var<T> matmul(Var<T> a, Var<T> b, bool trans_a = false, bool trans_b = false) {
    const Shape& as = shape(a);
    const Shape& bs = shape(b);
    if (as.size() != bs.size() || (as.size() != 2 && as.size() != 3)) throw ShapeError("matmul", as, bs);
    const bool batched = as.size() == 3;
    const std::size_t batch = batched ? as[0] : 1;
    if (batched && bs[0] != batch) throw ShapeError("matmul", as, bs);
    const std::size_t ar = as[as.size() - 2], ac = as.back();
    const std::size_t br = bs[bs.size() - 2], bc = bs.back();
    const std::size_t m = trans_a ? ac : ar, k = trans_a ? ar : ac;
    const std::size_t k2 = trans_b ? bc : br, n = trans_b ? br : bc;
    if (k != k2) throw ShapeError("matmul", as, bs);

    Shape os = batched ? Shape{batch, m, n} : Shape{m, n};
    AlignedBuffer sa, sb, sc(batch * m * n);
    const T* ap = aligned(value(a), sa);
    const T* bp = aligned(value(b), sb);
    for (std::size_t bi = 0; bi < batch; ++bi) {
      CMap A(ap + bi * ar * ac, ar, ac);
      CMap B(bp + bi * br * bc, br, bc);
      MMap C(sc.data() + bi * m * n, m, n);
      if (!trans_a && !trans_b) C.noalias() = A * B;
      else if (trans_a && !trans_b) C.noalias() = A.transpose() * B;
      else if (!trans_a && trans_b) C.noalias() = A * B.transpose();
      else C.noalias() = A.transpose() * B.transpose();
    }
    std::vector<T> result(sc.begin(), sc.end());
    return custom(std::move(os), std::move(result), {a, b},
                  [a, b, batch, ar, ac, br, bc, m, n, trans_a, trans_b](Graph& g, Var<T> out) {
                    AlignedBuffer sa, sb, sg;
                    const T* gop = aligned(g.grad(out), sg);
                    const T* ap = aligned(g.value(a), sa);
                    const T* bp = aligned(g.value(b), sb);
                    const bool need_a = g.requires_grad(a), need_b = g.requires_grad(b);
                    AlignedBuffer ga(need_a ? batch * ar * ac : 0, T(0)), gb(need_b ? batch * br * bc : 0, T(0));
                    for (std::size_t bi = 0; bi < batch; ++bi) {
                      CMap A(ap + bi * ar * ac, ar, ac);
                      CMap B(bp + bi * br * bc, br, bc);
                      CMap G(gop + bi * m * n, m, n);
                      if (need_a) {
                        MMap GA(ga.data() + bi * ar * ac, ar, ac);
                        if (!trans_a && !trans_b) GA.noalias() = G * B.transpose();
                        else if (!trans_a && trans_b) GA.noalias() = G * B;
                        else if (trans_a && !trans_b) GA.noalias() = B * G.transpose();
                        else GA.noalias() = B.transpose() * G.transpose();
                      }
                      if (need_b) {
                        MMap GB(gb.data() + bi * br * bc, br, bc);
                        if (!trans_a && !trans_b) GB.noalias() = A.transpose() * G;
                        else if (trans_a && !trans_b) GB.noalias() = A * G;
                        else if (!trans_a && trans_b) GB.noalias() = G.transpose() * A;
                        else GB.noalias() = G.transpose() * A.transpose();
                      }
                    }
                    if (need_a) {
                      auto& dst = g.grad(a);
                      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += ga[i];
                    }
                    if (need_b) {
                      auto& dst = g.grad(b);
                      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gb[i];
                    }
                  });
  }

  // ---- normalisation ------------------------------------------------------------

  /// Softmax over the last axis, max-subtracted.
  Var<T> softmax(Var<T> a) { return masked_softmax(a, {}, 1); }

  /// Softmax over the last axis of scores [B*heads, Lq, Lk]. mask has layout
  /// [B, Lq, Lk] (nonzero = keep); masked entries get exactly zero weight.
  /// An empty mask keeps everything and accepts any rank >= 1.
  Var<T> masked_softmax(Var<T> a, std::span<const std::uint8_t> mask, std::size_t heads) {
    const Shape& s = shape(a);
    if (s.empty()) throw ShapeError("softmax", s, "has no axis");
    const std::size_t cols = s.back();
    const std::size_t rows = value(a).size() / std::max<std::size_t>(cols, 1);
    std::size_t lq = 1;
    if (!mask.empty()) {
      if (s.size() != 3 || heads == 0 || s[0] % heads != 0 || mask.size() != (s[0] / heads) * s[1] * s[2])
        throw ShapeError("masked_softmax", s, "does not match mask layout");
      lq = s[1];
    }
    const auto& av = value(a);
    std::vector<T> out(av.size(), T(0));
    for (std::size_t r = 0; r < rows; ++r) {
      const T* x = av.data() + r * cols;
      T* y = out.data() + r * cols;
      const std::uint8_t* keep = nullptr;
      if (!mask.empty()) {
        const std::size_t bh = r / lq, q = r % lq;
        keep = mask.data() + ((bh / heads) * lq + q) * cols;
      }
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t c = 0; c < cols; ++c)
        if (!keep || keep[c]) mx = std::max(mx, x[c]);
      if (mx == -std::numeric_limits<T>::infinity()) continue;  // fully masked row
      T z = T(0);
      for (std::size_t c = 0; c < cols; ++c) {
        if (keep && !keep[c]) continue;
        y[c] = std::exp(x[c] - mx);
        z += y[c];
      }
      for (std::size_t c = 0; c < cols; ++c) y[c] /= z;
    }
    return custom(s, std::move(out), {a}, [a, cols, rows](Graph& g, Var<T> out) {
      const auto& y = g.value(out);
      const auto& go = g.grad(out);
      auto& ga = g.grad(a);
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t off = r * cols;
        T d = T(0);
        for (std::size_t c = 0; c < cols; ++c) d += go[off + c] * y[off + c];
        for (std::size_t c = 0; c < cols; ++c) ga[off + c] += y[off + c] * (go[off + c] - d);
      }
    });
  }

  Var<T> log_softmax(Var<T> a) {
    const Shape& s = shape(a);
    if (s.empty()) throw ShapeError("log_softmax", s, "has no axis");
    const std::size_t cols = s.back();
    const std::size_t rows = value(a).size() / std::max<std::size_t>(cols, 1);
    const auto& av = value(a);
    std::vector<T> out(av.size());
    for (std::size_t r = 0; r < rows; ++r) {
      const T* x = av.data() + r * cols;
      T mx = *std::max_element(x, x + cols);
      T z = T(0);
      for (std::size_t c = 0; c < cols; ++c) z += std::exp(x[c] - mx);
      const T lz = mx + std::log(z);
      for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[c] - lz;
    }
    return custom(s, std::move(out), {a}, [a, cols, rows](Graph& g, Var<T> out) {
      const auto& y = g.value(out);
      const auto& go = g.grad(out);
      auto& ga = g.grad(a);
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t off = r * cols;
        T gs = T(0);
        for (std::size_t c = 0; c < cols; ++c) gs += go[off + c];
        for (std::size_t c = 0; c < cols; ++c) ga[off + c] += go[off + c] - std::exp(y[off + c]) * gs;
      }
    });
  }

  /// Layer normalisation over the last axis: gamma * (x - mean) / sqrt(var + eps) + beta.
  Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5)) {
    const Shape& s = shape(x);
    if (s.empty()) throw ShapeError("layer_norm", s, "has no axis");
    const std::size_t n = s.back();
    if (shape(gamma) != Shape{n}) throw ShapeError("layer_norm", s, shape(gamma));
    if (shape(beta) != Shape{n}) throw ShapeError("layer_norm", s, shape(beta));
    const std::size_t rows = value(x).size() / n;
    const auto& xv = value(x);
    const auto& gv = value(gamma);
    const auto& bv = value(beta);
    std::vector<T> xhat(xv.size()), inv_std(rows), out(xv.size());
    for (std::size_t r = 0; r < rows; ++r) {
      const T* xr = xv.data() + r * n;
      T mean = T(0);
      for (std::size_t c = 0; c < n; ++c) mean += xr[c];
      mean /= T(n);
      T var = T(0);
      for (std::size_t c = 0; c < n; ++c) var += (xr[c] - mean) * (xr[c] - mean);
      var /= T(n);
      inv_std[r] = T(1) / std::sqrt(var + eps);
      for (std::size_t c = 0; c < n; ++c) {
        const T h = (xr[c] - mean) * inv_std[r];
        xhat[r * n + c] = h;
        out[r * n + c] = gv[c] * h + bv[c];
      }
    }
    return custom(s, std::move(out), {x, gamma, beta},
                  [x, gamma, beta, n, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g, Var<T> out) {
                    const auto& go = g.grad(out);
                    const auto& gv = g.value(gamma);
                    if (g.requires_grad(gamma) || g.requires_grad(beta)) {
                      const bool ngam = g.requires_grad(gamma), nbet = g.requires_grad(beta);
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < n; ++c) {
                          if (ngam) g.grad(gamma)[c] += go[r * n + c] * xhat[r * n + c];
                          if (nbet) g.grad(beta)[c] += go[r * n + c];
                        }
                    }
                    if (!g.requires_grad(x)) return;
                    auto& gx = g.grad(x);
                    for (std::size_t r = 0; r < rows; ++r) {
                      T mean_d = T(0), mean_dx = T(0);
                      for (std::size_t c = 0; c < n; ++c) {
                        const T d = go[r * n + c] * gv[c];
                        mean_d += d;
                        mean_dx += d * xhat[r * n + c];
                      }
                      mean_d /= T(n);
                      mean_dx /= T(n);
                      for (std::size_t c = 0; c < n; ++c) {
                        const T d = go[r * n + c] * gv[c];
                        gx[r * n + c] += inv_std[r] * (d - mean_d - xhat[r * n + c] * mean_dx);
                      }
                    }
                  });
  }

  // ---- lookup -------------------------------------------------------------------

  /// Rows of table [V, d] selected by ids -> [ids.size(), d].
  Var<T> embedding(Var<T> table, std::span<const int> ids) {
    const Shape& ts = shape(table);
    if (ts.size() != 2) throw ShapeError("embedding", ts, "is not a matrix");
    const std::size_t vocab = ts[0], d = ts[1];
    std::vector<int> idv(ids.begin(), ids.end());
    const auto& tv = value(table);
    std::vector<T> out(idv.size() * d);
    for (std::size_t i = 0; i < idv.size(); ++i) {
      if (idv[i] < 0 || static_cast<std::size_t>(idv[i]) >= vocab)
        throw std::out_of_range("embedding: id " + std::to_string(idv[i]) + " outside table of " +
                                std::to_string(vocab) + " rows");
      std::copy_n(tv.data() + idv[i] * d, d, out.data() + i * d);
    }
    Shape out_shape{idv.size(), d};
    return custom(std::move(out_shape), std::move(out), {table}, [table, d, idv = std::move(idv)](Graph& g, Var<T> out) {
      const auto& go = g.grad(out);
      auto& gt = g.grad(table);
      for (std::size_t i = 0; i < idv.size(); ++i)
        for (std::size_t c = 0; c < d; ++c) gt[idv[i] * d + c] += go[i * d + c];
    });
  }

  /// Accumulate `g` into the gradient of v, when v requires one.
  void accumulate(Var<T> v, const std::vector<T>& g) {
    if (!requires_grad(v)) return;
    auto& dst = grad(v);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
  }

 private:
  struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    Backward backward;
    Parameter<T>* param = nullptr;
    bool needs_grad = false;
  };

  Node& node(Var<T> v) {
    if (v.graph_ != this) throw GraphError("variable belongs to a different graph");
    return nodes_[v.id_];
  }
  const Node& node(Var<T> v) const {
    if (v.graph_ != this) throw GraphError("variable belongs to a different graph");
    return nodes_[v.id_];
  }

  Var<T> push(Shape shape, std::vector<T> value, bool needs_grad, Backward bw) {
    if (consumed_) throw GraphError("graph already consumed by backward; build a new graph");
    Node n;
    n.shape = std::move(shape);
    n.value = std::move(value);
    n.needs_grad = record_ && needs_grad;
    if (n.needs_grad) n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  static const T* aligned(const std::vector<T>& v, AlignedBuffer& scratch) {
    if (reinterpret_cast<std::uintptr_t>(v.data()) % 64 == 0) return v.data();
    scratch.assign(v.begin(), v.end());
    return scratch.data();
  }

  static void check_size(std::string_view op, const Shape& s, std::size_t n) {
    if (numel(s) != n) throw ShapeError(op, s, "does not match " + std::to_string(n) + " values");
  }

  void same_shape(std::string_view op, Var<T> a, Var<T> b) const {
    if (shape(a) != shape(b)) throw ShapeError(op, shape(a), shape(b));
  }

  std::deque<Node> nodes_;
  bool record_;
  bool consumed_ = false;
};

template <typename T>
const Shape& Var<T>::shape() const {
  return graph_->shape(*this);
}
template <typename T>
std::span<const T> Var<T>::value() const {
  return graph_->value(*this);
}
template <typename T>
std::span<const T> Var<T>::grad() const {
  return graph_->grad(*this);
}
template <typename T>
T Var<T>::item() const {
  if (size() != 1) throw ShapeError("item", shape(), "is not a scalar");
  return value()[0];
}

}  // namespace cdmt
