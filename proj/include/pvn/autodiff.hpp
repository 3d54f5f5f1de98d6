// Tape-based reverse-mode automatic differentiation over Tensor values.
//
// A Graph records nodes in creation order, which is a topological order, so
// backward() is a single reverse sweep. Nodes built only from constants carry
// no backward closure and are skipped.
//
// One Graph per thread; graphs share nothing.

#ifndef PVN_AUTODIFF_HPP_
#define PVN_AUTODIFF_HPP_

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "pvn/error.hpp"
#include "pvn/tensor.hpp"

namespace pvn {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// A differentiable input.
  Var leaf(Tensor value) { return push(std::move(value), true, nullptr); }

  /// A non-differentiable input.
  Var constant(Tensor value) { return push(std::move(value), false, nullptr); }

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }

  /// Gradient of the last backward() root with respect to `v`. Zero-filled for
  /// nodes that do not depend on any leaf.
  const Tensor& grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.size() != n.value.size()) {
      throw Error("grad() requested before backward() or for a constant node");
    }
    return n.grad;
  }

  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Accumulates d(root)/d(node) into every node that depends on a leaf.
  /// Forward values are untouched, so repeated calls return identical results.
  void backward(Var root) {
    if (root.graph != this) throw Error("backward: variable belongs to another graph");
    const Tensor& rv = nodes_.at(root.id).value;
    if (rv.size() != 1) {
      throw ShapeError("backward: root must be scalar, got " + shape_string(rv.shape()));
    }
    for (Node& n : nodes_) {
      n.grad = n.requires_grad ? Tensor::zeros(n.value.shape()) : Tensor();
    }
    if (!nodes_[root.id].requires_grad) return;
    nodes_[root.id].grad[0] = 1.0;
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward) n.backward(*this, i);
    }
  }

  // Used by op implementations.
  Var push(Tensor value, bool requires_grad, BackwardFn fn) {
    if constexpr (kCheckedBuild) value.check_finite("graph node");
    nodes_.push_back(Node{std::move(value), Tensor(), requires_grad,
                          requires_grad ? std::move(fn) : BackwardFn{}});
    return Var{this, nodes_.size() - 1};
  }

  Tensor& grad_ref(std::size_t id) { return nodes_[id].grad; }
  const Tensor& value_at(std::size_t id) const { return nodes_[id].value; }
  bool needs(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
};

namespace detail {

inline Graph& same_graph(Var a, Var b) {
  if (a.graph == nullptr || a.graph != b.graph) throw Error("variables from different graphs");
  return *a.graph;
}

inline void accumulate(Graph& g, std::size_t id, const Tensor& delta) {
  if (!g.needs(id)) return;
  Tensor& dst = g.grad_ref(id);
  for (std::size_t i = 0; i < delta.size(); ++i) dst[i] += delta[i];
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Graph& g = detail::same_graph(a, b);
  Tensor out = matmul(g.value(a), g.value(b));
  const bool rg = g.requires_grad(a) || g.requires_grad(b);
  return g.push(std::move(out), rg, [a = a.id, b = b.id](Graph& gr, std::size_t self) {
    const Tensor& go = gr.grad_ref(self);
    const Tensor& av = gr.value_at(a);
    const Tensor& bv = gr.value_at(b);
    const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
    if (gr.needs(a)) {
      Tensor& ga = gr.grad_ref(a);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += go[i * m + j] * bv[p * m + j];
          ga[i * k + p] += s;
        }
    }
    if (gr.needs(b)) {
      Tensor& gb = gr.grad_ref(b);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < m; ++j) gb[p * m + j] += aip * go[i * m + j];
        }
    }
  });
}

inline Var add_row(Var a, Var bias) {
  Graph& g = detail::same_graph(a, bias);
  Tensor out = add_row(g.value(a), g.value(bias));
  const bool rg = g.requires_grad(a) || g.requires_grad(bias);
  return g.push(std::move(out), rg, [a = a.id, b = bias.id](Graph& gr, std::size_t self) {
    const Tensor& go = gr.grad_ref(self);
    detail::accumulate(gr, a, go);
    if (gr.needs(b)) {
      Tensor& gb = gr.grad_ref(b);
      const std::size_t m = gb.size();
      for (std::size_t i = 0; i < go.size(); ++i) gb[i % m] += go[i];
    }
  });
}

inline Var add(Var a, Var b) {
  Graph& g = detail::same_graph(a, b);
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  if (av.size() != bv.size()) throw ShapeError("add: size mismatch");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const bool rg = g.requires_grad(a) || g.requires_grad(b);
  return g.push(std::move(out), rg, [a = a.id, b = b.id](Graph& gr, std::size_t self) {
    const Tensor go = gr.grad_ref(self);
    detail::accumulate(gr, a, go);
    detail::accumulate(gr, b, go);
  });
}

inline Var sub(Var a, Var b) {
  Graph& g = detail::same_graph(a, b);
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  if (av.size() != bv.size()) throw ShapeError("sub: size mismatch");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const bool rg = g.requires_grad(a) || g.requires_grad(b);
  return g.push(std::move(out), rg, [a = a.id, b = b.id](Graph& gr, std::size_t self) {
    const Tensor go = gr.grad_ref(self);
    detail::accumulate(gr, a, go);
    if (gr.needs(b)) {
      Tensor& gb = gr.grad_ref(b);
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
    }
  });
}

/// Elementwise product.
inline Var mul(Var a, Var b) {
  Graph& g = detail::same_graph(a, b);
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  if (av.size() != bv.size()) throw ShapeError("mul: size mismatch");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const bool rg = g.requires_grad(a) || g.requires_grad(b);
  return g.push(std::move(out), rg, [a = a.id, b = b.id](Graph& gr, std::size_t self) {
    const Tensor& go = gr.grad_ref(self);
    const Tensor& av = gr.value_at(a);
    const Tensor& bv = gr.value_at(b);
    if (gr.needs(a)) {
      Tensor& ga = gr.grad_ref(a);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv[i];
    }
    if (gr.needs(b)) {
      Tensor& gb = gr.grad_ref(b);
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av[i];
    }
  });
}

inline Var mul(Var a, const Tensor& c) { return mul(a, a.graph->constant(c)); }

inline Var scale(Var a, double c) {
  Graph& g = *a.graph;
  Tensor out = g.value(a);
  for (double& v : out.data()) v *= c;
  return g.push(std::move(out), g.requires_grad(a), [a = a.id, c](Graph& gr, std::size_t self) {
    const Tensor& go = gr.grad_ref(self);
    Tensor& ga = gr.grad_ref(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += c * go[i];
  });
}

inline Var square(Var a) { return mul(a, a); }

inline Var relu(Var a) {
  Graph& g = *a.graph;
  return g.push(relu(g.value(a)), g.requires_grad(a), [a = a.id](Graph& gr, std::size_t self) {
    const Tensor& go = gr.grad_ref(self);
    const Tensor& av = gr.value_at(a);
    Tensor& ga = gr.grad_ref(a);
    for (std::size_t i = 0; i < go.size(); ++i)
      if (av[i] > 0.0) ga[i] += go[i];
  });
}

inline Var tanh(Var a) {
  Graph& g = *a.graph;
  return g.push(tanh(g.value(a)), g.requires_grad(a), [a = a.id](Graph& gr, std::size_t self) {
    const Tensor& go = gr.grad_ref(self);
    const Tensor& y = gr.value_at(self);
    Tensor& ga = gr.grad_ref(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * (1.0 - y[i] * y[i]);
  });
}

inline Var softmax_rows(Var a, double temperature = 1.0) {
  Graph& g = *a.graph;
  return g.push(softmax_rows(g.value(a), temperature), g.requires_grad(a),
                [a = a.id, temperature](Graph& gr, std::size_t self) {
                  const Tensor& go = gr.grad_ref(self);
                  const Tensor& y = gr.value_at(self);
                  Tensor& ga = gr.grad_ref(a);
                  const std::size_t n = y.rows(), m = y.cols();
                  for (std::size_t i = 0; i < n; ++i) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < m; ++j) dot += go[i * m + j] * y[i * m + j];
                    for (std::size_t j = 0; j < m; ++j)
                      ga[i * m + j] += y[i * m + j] * (go[i * m + j] - dot) / temperature;
                  }
                });
}

/// log(max(a, floor)); the gradient is zero where the floor is active.
inline Var log_floor(Var a, double floor) {
  Graph& g = *a.graph;
  Tensor out = g.value(a);
  for (double& v : out.data()) v = std::log(std::max(v, floor));
  return g.push(std::move(out), g.requires_grad(a), [a = a.id, floor](Graph& gr, std::size_t self) {
    const Tensor& go = gr.grad_ref(self);
    const Tensor& av = gr.value_at(a);
    Tensor& ga = gr.grad_ref(a);
    for (std::size_t i = 0; i < go.size(); ++i)
      if (av[i] > floor) ga[i] += go[i] / av[i];
  });
}

/// Sum of all entries, as a scalar of shape (1).
inline Var sum(Var a) {
  Graph& g = *a.graph;
  const Tensor& av = g.value(a);
  double s = 0.0;
  for (double v : av.data()) s += v;
  return g.push(Tensor::scalar(s), g.requires_grad(a), [a = a.id](Graph& gr, std::size_t self) {
    const double go = gr.grad_ref(self)[0];
    Tensor& ga = gr.grad_ref(a);
    for (double& v : ga.data()) v += go;
  });
}

inline Var slice(Var flat, std::size_t offset, Shape shape) {
  Graph& g = *flat.graph;
  Tensor out = slice(g.value(flat), offset, std::move(shape));
  return g.push(std::move(out), g.requires_grad(flat),
                [a = flat.id, offset](Graph& gr, std::size_t self) {
                  const Tensor& go = gr.grad_ref(self);
                  Tensor& ga = gr.grad_ref(a);
                  for (std::size_t i = 0; i < go.size(); ++i) ga[offset + i] += go[i];
                });
}

inline Var reshape(Var a, Shape shape) {
  Graph& g = *a.graph;
  return g.push(reshape(g.value(a), std::move(shape)), g.requires_grad(a),
                [a = a.id](Graph& gr, std::size_t self) {
                  detail::accumulate(gr, a, gr.grad_ref(self));
                });
}

inline Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Graph& g = *parts.front().graph;
  std::vector<Tensor> values;
  values.reserve(parts.size());
  bool rg = false;
  std::vector<std::size_t> ids;
  for (Var p : parts) {
    if (p.graph != &g) throw Error("variables from different graphs");
    values.push_back(g.value(p));
    rg = rg || g.requires_grad(p);
    ids.push_back(p.id);
  }
  return g.push(concat_rows(values), rg, [ids = std::move(ids)](Graph& gr, std::size_t self) {
    const Tensor& go = gr.grad_ref(self);
    std::size_t offset = 0;
    for (std::size_t id : ids) {
      const std::size_t n = gr.value_at(id).size();
      if (gr.needs(id)) {
        Tensor& gp = gr.grad_ref(id);
        for (std::size_t i = 0; i < n; ++i) gp[i] += go[offset + i];
      }
      offset += n;
    }
  });
}

}  // namespace pvn

#endif  // PVN_AUTODIFF_HPP_
