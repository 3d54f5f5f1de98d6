// Policy improvement by gradient ascent on J_hat through a frozen PVN, with
// parallel restarts and Monte-Carlo evaluation of every iterate; plus the
// exact-gradient ascent and gradient fields for two-state tabular MDPs.

#ifndef PVN_ASCENT_HPP_
#define PVN_ASCENT_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "pvn/cartpole.hpp"
#include "pvn/dataset.hpp"
#include "pvn/optim.hpp"
#include "pvn/parallel.hpp"
#include "pvn/pvn.hpp"
#include "pvn/rng.hpp"
#include "pvn/tabular.hpp"

namespace pvn {

struct AscentStep {
  std::size_t step = 0;
  std::vector<double> theta;
  double j_hat = 0.0;
  /// Mean Monte-Carlo return of theta (exact J for tabular evaluators).
  double g_mc = 0.0;
};

struct AscentTrace {
  std::size_t restart = 0;
  /// steps[0] is the starting policy; steps[t] follows t updates.
  std::vector<AscentStep> steps;
  bool aborted = false;
  std::string diagnostic;

  /// Index of the record with the highest g_mc (first one on ties).
  std::size_t best_index() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < steps.size(); ++i)
      if (steps[i].g_mc > steps[best].g_mc) best = i;
    return best;
  }
  const AscentStep& best() const { return steps.at(best_index()); }
};

struct AscentOptions {
  std::size_t steps = 100;
  OptimizerConfig optimizer{OptimizerKind::adam, 0.001};
  /// Stop once the best g_mc has not improved for this many steps; 0 disables.
  std::size_t patience = 0;
  /// Clamp every coordinate to [0, 1] after each update (tabular policies).
  bool clamp_unit = false;
};

using Objective = std::function<std::pair<double, std::vector<double>>(std::span<const double>)>;
using Evaluator = std::function<double(std::span<const double>, std::size_t step)>;

/// Generic ascent loop: records (theta_t, J_hat(theta_t), eval(theta_t)) for
/// t = 0..steps and updates theta with the optimizer on -grad between records.
/// A non-finite objective or gradient aborts the trace with a diagnostic.
inline AscentTrace run_ascent(std::size_t restart, std::vector<double> theta, const Objective& objective,
                              const Evaluator& evaluate, const AscentOptions& options) {
  AscentTrace trace;
  trace.restart = restart;
  if (options.clamp_unit)
    for (double& v : theta) v = std::clamp(v, 0.0, 1.0);
  OptimizerState opt(options.optimizer, theta.size());
  double best = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  auto abort = [&](const std::string& why) {
    trace.aborted = true;
    trace.diagnostic = why;
  };
  for (std::size_t t = 0;; ++t) {
    double j = 0.0, g = 0.0;
    std::vector<double> grad;
    try {
      std::tie(j, grad) = objective(theta);
      const bool finite =
          std::isfinite(j) && std::all_of(grad.begin(), grad.end(), [](double v) { return std::isfinite(v); });
      if (!finite) {
        abort("non-finite J_hat or gradient at step " + std::to_string(t));
        break;
      }
      g = evaluate(theta, t);
    } catch (const NumericalError& e) {
      abort("step " + std::to_string(t) + ": " + e.what());
      break;
    }
    trace.steps.push_back({t, theta, j, g});
    if (g > best) {
      best = g;
      since_best = 0;
    } else if (++since_best >= options.patience && options.patience > 0) {
      break;
    }
    if (t == options.steps) break;
    for (double& v : grad) v = -v;
    opt.step(theta, grad);
    if (options.clamp_unit)
      for (double& v : theta) v = std::clamp(v, 0.0, 1.0);
  }
  return trace;
}

struct AscentConfig {
  std::size_t restarts = 5;
  AscentOptions options;
  /// Monte-Carlo episodes per evaluated iterate.
  std::size_t eval_rollouts = 1;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

struct AscentResult {
  std::vector<double> best_theta;
  double best_g_mc = -std::numeric_limits<double>::infinity();
  std::size_t best_restart = 0;
  std::vector<AscentTrace> traces;
};

/// Seeds of restart i: its Glorot start and its evaluation rollouts.
inline std::uint64_t restart_seed(std::uint64_t seed, std::size_t restart) { return derive_seed(seed, {2, restart}); }
inline std::uint64_t restart_init_seed(std::uint64_t seed, std::size_t restart) {
  return derive_seed(restart_seed(seed, restart), {0});
}
inline std::uint64_t restart_eval_seed(std::uint64_t seed, std::size_t restart, std::size_t step) {
  return derive_seed(restart_seed(seed, restart), {1, step});
}

/// One restart of the cart-pole ascent; identical to trace `restart` of ascend().
inline AscentTrace ascend_restart(const Pvn& pvn, const CartPoleEnv& env, const AscentConfig& cfg,
                                  std::size_t restart) {
  if (pvn.mode == InputMode::tabular) throw ShapeError("tabular PVNs cannot drive cart-pole policies");
  if (!(pvn.policy_arch == env.arch)) throw ShapeError("environment policy architecture does not match the PVN");
  const MlpArch arch = env.arch;
  auto objective = [&pvn](std::span<const double> theta) { return j_hat_and_grad(pvn, theta); };
  auto evaluate = [&](std::span<const double> theta, std::size_t step) {
    const MlpPolicy policy{arch, std::vector<double>(theta.begin(), theta.end())};
    double total = 0.0;
    const std::uint64_t base = restart_eval_seed(cfg.seed, restart, step);
    for (std::size_t e = 0; e < cfg.eval_rollouts; ++e) total += env.rollout(policy, derive_seed(base, {e}));
    return cfg.eval_rollouts ? total / static_cast<double>(cfg.eval_rollouts) : 0.0;
  };
  auto start = env.init_policy(restart_init_seed(cfg.seed, restart));
  return run_ascent(restart, std::move(start.params), objective, evaluate, cfg.options);
}

/// Ascends `restarts` Glorot-initialized policies in parallel and returns the
/// iterate with the highest Monte-Carlo return over all of them.
inline AscentResult ascend(const Pvn& pvn, const CartPoleEnv& env, const AscentConfig& cfg) {
  AscentResult result;
  result.traces.resize(cfg.restarts);
  parallel_for(cfg.restarts, cfg.jobs,
               [&](std::size_t i) { result.traces[i] = ascend_restart(pvn, env, cfg, i); });
  for (const auto& tr : result.traces) {
    if (tr.steps.empty()) continue;
    const auto& b = tr.best();
    if (b.g_mc > result.best_g_mc) {
      result.best_g_mc = b.g_mc;
      result.best_theta = b.theta;
      result.best_restart = tr.restart;
    }
  }
  return result;
}

/// Ascent on a two-state tabular policy through a PVN; g_mc records exact J.
inline AscentTrace ascend_tabular(const Pvn& pvn, const TabularMdp& mdp, std::vector<double> start,
                                  AscentOptions options) {
  options.clamp_unit = true;
  auto objective = [&pvn](std::span<const double> theta) { return j_hat_and_grad(pvn, theta); };
  auto evaluate = [&mdp](std::span<const double> theta, std::size_t) {
    return exact_j(mdp, TabularPolicy::from_first_action(theta));
  };
  return run_ascent(0, std::move(start), objective, evaluate, options);
}

/// Plain gradient ascent with the exact (finite-difference) policy gradient,
/// clamped to [0, 1].
inline AscentTrace ascend_exact(const TabularMdp& mdp, std::vector<double> start, std::size_t steps,
                                double learning_rate) {
  AscentOptions options;
  options.steps = steps;
  options.optimizer = OptimizerConfig{OptimizerKind::sgd, learning_rate};
  options.clamp_unit = true;
  auto objective = [&mdp](std::span<const double> theta) {
    const double j = exact_j(mdp, TabularPolicy::from_first_action(theta));
    return std::pair{j, exact_grad(mdp, theta)};
  };
  auto evaluate = [&mdp](std::span<const double> theta, std::size_t) {
    return exact_j(mdp, TabularPolicy::from_first_action(theta));
  };
  return run_ascent(0, std::move(start), objective, evaluate, options);
}

struct FieldPoint {
  double p1 = 0.0;
  double p2 = 0.0;
  double g1 = 0.0;
  double g2 = 0.0;
};

using GradientFn = std::function<std::vector<double>(std::span<const double>)>;

/// Gradients at the cell centres ((i + 0.5) / n, (j + 0.5) / n) of an n x n
/// grid over [0, 1]^2, row-major with p1 varying slowest.
inline std::vector<FieldPoint> gradient_field(const GradientFn& gradient, std::size_t resolution) {
  if (resolution == 0) throw ConfigError("gradient field resolution must be positive");
  std::vector<FieldPoint> out;
  out.reserve(resolution * resolution);
  for (std::size_t i = 0; i < resolution; ++i)
    for (std::size_t j = 0; j < resolution; ++j) {
      const double p[2] = {(static_cast<double>(i) + 0.5) / static_cast<double>(resolution),
                           (static_cast<double>(j) + 0.5) / static_cast<double>(resolution)};
      const auto g = gradient(p);
      out.push_back({p[0], p[1], g.at(0), g.at(1)});
    }
  return out;
}

inline std::vector<FieldPoint> exact_gradient_field(const TabularMdp& mdp, std::size_t resolution) {
  return gradient_field([&mdp](std::span<const double> p) { return exact_grad(mdp, p); }, resolution);
}

inline std::vector<FieldPoint> pvn_gradient_field(const Pvn& pvn, std::size_t resolution) {
  return gradient_field([&pvn](std::span<const double> p) { return j_hat_and_grad(pvn, p).second; }, resolution);
}

/// Mean cosine similarity between matching field vectors. Points where either
/// vector is zero count as similarity 0.
inline double mean_cosine_similarity(std::span<const FieldPoint> a, std::span<const FieldPoint> b) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("gradient fields differ in size");
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double na = std::hypot(a[i].g1, a[i].g2);
    const double nb = std::hypot(b[i].g1, b[i].g2);
    if (na > 0.0 && nb > 0.0) total += (a[i].g1 * b[i].g1 + a[i].g2 * b[i].g2) / (na * nb);
  }
  return total / static_cast<double>(a.size());
}

}  // namespace pvn

#endif  // PVN_ASCENT_HPP_
