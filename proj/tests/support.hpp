// Shared oracles and finite-difference checks for the unit and acceptance tests.
#ifndef PVN_TESTS_SUPPORT_HPP_
#define PVN_TESTS_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "pvn/autodiff.hpp"
#include "pvn/mlp.hpp"
#include "pvn/policy.hpp"
#include "pvn/pvn.hpp"
#include "pvn/rng.hpp"

namespace pvn::testing {

/// Straight-line MLP forward pass for one input row, written without the
/// tensor or graph code.
inline std::vector<double> reference_mlp(const std::vector<double>& params, const MlpArch& arch,
                                         std::vector<double> x) {
  const auto widths = arch.widths();
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t fi = widths[l], fo = widths[l + 1];
    std::vector<double> y(fo, 0.0);
    for (std::size_t j = 0; j < fo; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < fi; ++i) acc += x[i] * params[off + i * fo + j];
      y[j] = acc + params[off + fi * fo + j];
    }
    off += fi * fo + fo;
    if (l + 2 < widths.size())
      for (double& v : y) v = arch.activation == Activation::relu ? (v > 0.0 ? v : 0.0) : std::tanh(v);
    x = std::move(y);
  }
  if (arch.head == OutputHead::softmax) {
    double mx = -INFINITY;
    for (double v : x) mx = std::max(mx, v / arch.temperature);
    double z = 0.0;
    for (double& v : x) z += (v = std::exp(v / arch.temperature - mx));
    for (double& v : x) v /= z;
  }
  return x;
}

inline std::vector<double> numeric_grad(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Largest |a - n| / max(|a|, |n|, 1e-5) over components.
inline double max_rel_error(std::span<const double> analytic, std::span<const double> numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double den = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-5});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / den);
  }
  return worst;
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

inline MlpArch random_arch(Rng& rng, std::size_t max_width = 5) {
  MlpArch a;
  a.input = 1 + rng.below(max_width);
  const std::size_t depth = rng.below(3);
  for (std::size_t i = 0; i < depth; ++i) a.hidden.push_back(1 + rng.below(max_width));
  a.output = 1 + rng.below(max_width);
  a.activation = rng.below(2) ? Activation::relu : Activation::tanh;
  a.head = rng.below(2) ? OutputHead::softmax : OutputHead::linear;
  a.temperature = rng.uniform(0.5, 3.0);
  return a;
}

/// One randomized check of every graph op through a composite scalar
/// objective, with respect to parameters and inputs. Returns the max relative error.
inline double core_math_trial(std::uint64_t seed) {
  Rng rng(seed);
  const MlpArch arch = random_arch(rng);
  const std::size_t rows = 1 + rng.below(3);
  const auto params0 = random_vector(rng, arch.param_count(), 0.7);
  const auto input0 = random_vector(rng, rows * arch.input);
  const Tensor c = Tensor({rows, arch.output}, random_vector(rng, rows * arch.output));
  const Tensor d = Tensor({rows, arch.output}, random_vector(rng, rows * arch.output));

  auto build = [&](Graph& g, Var p, Var x) {
    Var out = mlp_forward(p, arch, x);
    Var a = scale(mul(out, c), 0.7);
    Var b = square(sub(out, g.constant(d)));
    Var z = add(a, b);
    Var extra = arch.head == OutputHead::softmax ? mul(log_floor(out, 1e-12), d) : mul(tanh(out), c);
    const Var parts[] = {z, relu(extra)};
    return add(sum(concat_rows(parts)), sum(reshape(extra, {extra.graph->value(extra).size()})));
  };
  auto value = [&](const std::vector<double>& p, const std::vector<double>& x) {
    Graph g;
    return g.value(build(g, g.constant(Tensor::vector(p)), g.constant(Tensor({rows, arch.input}, x)))).item();
  };

  Graph g;
  Var p = g.leaf(Tensor::vector(params0));
  Var x = g.leaf(Tensor({rows, arch.input}, input0));
  g.backward(build(g, p, x));
  const auto num_p = numeric_grad([&](const std::vector<double>& v) { return value(v, input0); }, params0);
  const auto num_x = numeric_grad([&](const std::vector<double>& v) { return value(params0, v); }, input0);
  return std::max(max_rel_error(g.grad(p).data(), num_p), max_rel_error(g.grad(x).data(), num_x));
}

/// Fingerprint gradients with respect to policy parameters and probing states.
inline double fingerprint_trial(std::uint64_t seed) {
  Rng rng(seed);
  MlpArch arch = random_arch(rng, 4);
  arch.head = OutputHead::softmax;
  arch.output = 2 + rng.below(2);
  const std::size_t n = 1 + rng.below(5);
  const auto theta0 = random_vector(rng, arch.param_count(), 0.7);
  const auto probes0 = random_vector(rng, n * arch.input);
  const Tensor c = Tensor({1, n * arch.output}, random_vector(rng, n * arch.output));

  auto value = [&](const std::vector<double>& th, const std::vector<double>& ph) {
    const Tensor fp = fingerprint(MlpPolicy{arch, th}, ProbingStates{Tensor({n, arch.input}, ph)});
    double s = 0.0;
    for (std::size_t i = 0; i < fp.size(); ++i) s += fp[i] * c[i];
    return s;
  };
  Graph g;
  Var th = g.leaf(Tensor::vector(theta0));
  Var ph = g.leaf(Tensor({n, arch.input}, probes0));
  g.backward(sum(mul(fingerprint(th, arch, ph), c)));
  const auto num_t = numeric_grad([&](const std::vector<double>& v) { return value(v, probes0); }, theta0);
  const auto num_p = numeric_grad([&](const std::vector<double>& v) { return value(theta0, v); }, probes0);
  return std::max(max_rel_error(g.grad(th).data(), num_t), max_rel_error(g.grad(ph).data(), num_p));
}

/// KL(target || PVN(theta)) differentiated with respect to the PVN weights,
/// the policy parameters and the probing states. Odd seeds use flatten mode.
inline double kl_predict_trial(std::uint64_t seed) {
  Rng rng(seed);
  PvnSpec spec;
  spec.mode = seed % 2 ? InputMode::flatten : InputMode::fingerprint;
  spec.policy_arch = policy_arch(1 + rng.below(4), rng.below(2) ? std::vector<std::size_t>{1 + rng.below(4)}
                                                                  : std::vector<std::size_t>{},
                                 2, rng.uniform(0.5, 3.0), rng.below(2) ? Activation::relu : Activation::tanh);
  spec.hidden = {2 + rng.below(5)};
  spec.activation = rng.below(2) ? Activation::relu : Activation::tanh;
  spec.bins = BinSpec{3 + rng.below(5), 0.0, 100.0};
  spec.num_probes = 1 + rng.below(4);
  Pvn pvn = make_pvn(spec, rng());
  for (double& w : pvn.params) w += 0.3 * rng.normal();
  const auto theta0 = random_vector(rng, spec.policy_arch.param_count(), 0.7);

  std::vector<double> target(spec.bins.m, 0.0);
  for (std::size_t k = 0; k < 10; ++k) target[rng.below(spec.bins.m)] += 0.1;
  const Tensor target_t({1, spec.bins.m}, target);

  auto value = [&](const std::vector<double>& w, const std::vector<double>& th, const std::vector<double>& ph) {
    Pvn q = pvn;
    q.params = w;
    if (q.probes) q.probes->states = Tensor(q.probes->states.shape(), ph);
    return kl_loss(predict_distribution(q, th), target);
  };
  const std::vector<double> w0 = pvn.params;
  const std::vector<double> ph0 = pvn.probes ? pvn.probes->states.values() : std::vector<double>{};

  Graph g;
  Var w = g.leaf(Tensor::vector(w0));
  Var th = g.leaf(Tensor::vector(theta0));
  std::optional<Var> ph;
  if (pvn.probes) ph = g.leaf(pvn.probes->states);
  g.backward(kl_loss(mlp_forward(w, pvn.arch, pvn_input(pvn, th, ph)), target_t));

  double worst = max_rel_error(
      g.grad(w).data(), numeric_grad([&](const std::vector<double>& v) { return value(v, theta0, ph0); }, w0));
  worst = std::max(worst, max_rel_error(g.grad(th).data(), numeric_grad([&](const std::vector<double>& v) {
                                          return value(w0, v, ph0);
                                        }, theta0)));
  if (ph) {
    worst = std::max(worst, max_rel_error(g.grad(*ph).data(), numeric_grad([&](const std::vector<double>& v) {
                                            return value(w0, theta0, v);
                                          }, ph0)));
  }
  return worst;
}

}  // namespace pvn::testing

#endif  // PVN_TESTS_SUPPORT_HPP_
