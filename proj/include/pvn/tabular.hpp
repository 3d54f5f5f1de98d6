// Small finite MDPs with exact policy evaluation:
//   V = (I - gamma P_pi)^-1 r_pi,  J = d0 . V
// where P_pi[s, s'] = sum_a pi(a|s) P[s, a, s'] and r_pi[s] = sum_a pi(a|s) r[s, a].

#ifndef PVN_TABULAR_HPP_
#define PVN_TABULAR_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pvn/error.hpp"
#include "pvn/rng.hpp"

namespace pvn {

struct TabularMdp {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  /// transition[(s * A + a) * S + s'] = P(s' | s, a).
  std::vector<double> transition;
  /// reward[s * A + a] = r(s, a).
  std::vector<double> reward;
  double gamma = 0.0;
  std::vector<double> d0;

  double p(std::size_t s, std::size_t a, std::size_t next) const {
    return transition[(s * num_actions + a) * num_states + next];
  }
  double r(std::size_t s, std::size_t a) const { return reward[s * num_actions + a]; }

  void validate() const {
    const std::size_t S = num_states, A = num_actions;
    if (S == 0 || A == 0) throw DataError("MDP needs at least one state and one action");
    if (transition.size() != S * A * S || reward.size() != S * A || d0.size() != S) {
      throw ShapeError("MDP tables do not match |S|=" + std::to_string(S) + ", |A|=" + std::to_string(A));
    }
    if (!(gamma >= 0.0 && gamma < 1.0)) throw DataError("discount must lie in [0, 1)");
    for (std::size_t sa = 0; sa < S * A; ++sa) {
      double total = 0.0;
      for (std::size_t k = 0; k < S; ++k) {
        const double v = transition[sa * S + k];
        if (!(v >= 0.0)) throw DataError("negative transition probability");
        total += v;
      }
      if (std::abs(total - 1.0) > 1e-12) throw DataError("transition row does not sum to 1");
    }
    double total = 0.0;
    for (double v : d0) {
      if (!(v >= 0.0)) throw DataError("negative initial probability");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-12) throw DataError("initial distribution does not sum to 1");
    for (double v : reward)
      if (!std::isfinite(v)) throw DataError("non-finite reward");
  }
};

/// pi(a|s) as an S x A row-stochastic table.
struct TabularPolicy {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::vector<double> probs;

  double operator()(std::size_t s, std::size_t a) const { return probs[s * num_actions + a]; }

  /// Two-action policy from the vector [P(a1|s1), ..., P(a1|sS)].
  static TabularPolicy from_first_action(std::span<const double> p_first) {
    TabularPolicy pi{p_first.size(), 2, std::vector<double>(2 * p_first.size())};
    for (std::size_t s = 0; s < p_first.size(); ++s) {
      pi.probs[2 * s] = p_first[s];
      pi.probs[2 * s + 1] = 1.0 - p_first[s];
    }
    return pi;
  }

  static TabularPolicy deterministic(std::span<const std::size_t> actions, std::size_t num_actions) {
    TabularPolicy pi{actions.size(), num_actions, std::vector<double>(actions.size() * num_actions, 0.0)};
    for (std::size_t s = 0; s < actions.size(); ++s) pi.probs[s * num_actions + actions[s]] = 1.0;
    return pi;
  }

  void validate_for(const TabularMdp& mdp) const {
    if (num_states != mdp.num_states || num_actions != mdp.num_actions || probs.size() != num_states * num_actions) {
      throw ShapeError("policy table does not match the MDP");
    }
    for (std::size_t s = 0; s < num_states; ++s) {
      double total = 0.0;
      for (std::size_t a = 0; a < num_actions; ++a) {
        const double v = (*this)(s, a);
        if (!(v >= -1e-12 && v <= 1.0 + 1e-12)) throw DataError("policy probability outside [0, 1]");
        total += v;
      }
      if (std::abs(total - 1.0) > 1e-9) throw DataError("policy row does not sum to 1");
    }
  }
};

/// The 2-state, 2-action MDP of the value-polytope experiment. Tables use the
/// convention r(s_i, a_j) = r[i*|A| + j] and P(s_k | s_i, a_j) = P[i*|A| + j][k].
inline TabularMdp polytope_mdp(std::vector<double> d0 = {0.5, 0.5}) {
  TabularMdp mdp;
  mdp.num_states = 2;
  mdp.num_actions = 2;
  mdp.gamma = 0.8;
  mdp.reward = {-0.45, -0.1, 0.5, 0.5};
  mdp.transition = {0.6, 0.4, 0.99, 0.01, 0.2, 0.8, 0.99, 0.01};
  mdp.d0 = std::move(d0);
  mdp.validate();
  return mdp;
}

namespace detail {

/// Solves A x = b in place by Gaussian elimination with partial pivoting.
inline std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[pivot * n + col])) pivot = r;
    if (std::abs(a[pivot * n + col]) < 1e-300) throw NumericalError("singular linear system");
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[pivot * n + c]);
      std::swap(b[col], b[pivot]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] / a[col * n + col];
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= a[i * n + c] * x[c];
    x[i] = s / a[i * n + i];
  }
  return x;
}

}  // namespace detail

/// P_pi as an S x S row-major matrix and r_pi as a length-S vector.
inline std::pair<std::vector<double>, std::vector<double>> induced_chain(const TabularMdp& mdp,
                                                                         const TabularPolicy& pi) {
  const std::size_t S = mdp.num_states, A = mdp.num_actions;
  std::vector<double> p_pi(S * S, 0.0), r_pi(S, 0.0);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) {
      const double w = pi(s, a);
      r_pi[s] += w * mdp.r(s, a);
      for (std::size_t k = 0; k < S; ++k) p_pi[s * S + k] += w * mdp.p(s, a, k);
    }
  return {std::move(p_pi), std::move(r_pi)};
}

inline std::vector<double> exact_values(const TabularMdp& mdp, const TabularPolicy& pi) {
  pi.validate_for(mdp);
  const std::size_t S = mdp.num_states;
  auto [p_pi, r_pi] = induced_chain(mdp, pi);
  std::vector<double> lhs(S * S);
  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t j = 0; j < S; ++j) lhs[i * S + j] = (i == j ? 1.0 : 0.0) - mdp.gamma * p_pi[i * S + j];
  return detail::solve_dense(std::move(lhs), std::move(r_pi));
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double exact_j(const TabularMdp& mdp, const TabularPolicy& pi) {
  const auto v = exact_values(mdp, pi);
  return dot(mdp.d0, v);
}

/// Iterates V <- r_pi + gamma P_pi V until the sup-norm residual drops below `tolerance`.
inline std::vector<double> value_iteration(const TabularMdp& mdp, const TabularPolicy& pi,
                                           double tolerance = 1e-10, std::size_t max_iters = 1000000) {
  const std::size_t S = mdp.num_states;
  auto [p_pi, r_pi] = induced_chain(mdp, pi);
  std::vector<double> v(S, 0.0), next(S);
  for (std::size_t it = 0; it < max_iters; ++it) {
    double residual = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      double acc = r_pi[s];
      for (std::size_t k = 0; k < S; ++k) acc += mdp.gamma * p_pi[s * S + k] * v[k];
      next[s] = acc;
      residual = std::max(residual, std::abs(acc - v[s]));
    }
    v.swap(next);
    if (residual < tolerance) return v;
  }
  throw NumericalError("value iteration did not converge");
}

/// Finite-difference step used by exact_grad.
inline constexpr double kExactGradStep = 1e-6;

/// dJ/dp for a two-action MDP, where p[s] = P(a1 | s). Central differences at
/// step 1e-6; one-sided at the edges of [0, 1].
inline std::vector<double> exact_grad(const TabularMdp& mdp, std::span<const double> p_first,
                                      double step = kExactGradStep) {
  if (mdp.num_actions != 2 || p_first.size() != mdp.num_states) {
    throw ShapeError("exact_grad expects a two-action MDP and one probability per state");
  }
  std::vector<double> p(p_first.begin(), p_first.end());
  for (double& v : p) v = std::clamp(v, 0.0, 1.0);
  auto j_at = [&](std::span<const double> q) { return exact_j(mdp, TabularPolicy::from_first_action(q)); };
  std::vector<double> grad(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double lo = std::max(0.0, p[i] - step);
    const double hi = std::min(1.0, p[i] + step);
    std::vector<double> a = p, b = p;
    a[i] = lo;
    b[i] = hi;
    grad[i] = (j_at(b) - j_at(a)) / (hi - lo);
  }
  return grad;
}

struct PolytopeSample {
  std::vector<double> policy;  // [P(a1|s1), P(a1|s2), ...]
  std::vector<double> values;  // V(s) per state
  double j = 0.0;
};

/// Policies drawn uniformly from [0,1]^S with exact values. Sample i uses
/// derive_seed(seed, {i}).
inline std::vector<PolytopeSample> sample_polytope_dataset(const TabularMdp& mdp, std::size_t count,
                                                           std::uint64_t seed) {
  if (count == 0) throw DataError("polytope dataset needs at least one policy");
  if (mdp.num_actions != 2) throw ShapeError("polytope sampling expects a two-action MDP");
  std::vector<PolytopeSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, {i}));
    PolytopeSample s;
    s.policy.resize(mdp.num_states);
    for (double& p : s.policy) p = rng.uniform();
    const auto pi = TabularPolicy::from_first_action(s.policy);
    s.values = exact_values(mdp, pi);
    s.j = dot(mdp.d0, s.values);
    out.push_back(std::move(s));
  }
  return out;
}

/// All deterministic policies of a two-action MDP as P(a1|s) vectors in {0,1}^S,
/// enumerated in binary order.
inline std::vector<std::vector<double>> deterministic_corners(std::size_t num_states) {
  std::vector<std::vector<double>> out;
  for (std::size_t mask = 0; mask < (std::size_t{1} << num_states); ++mask) {
    std::vector<double> p(num_states);
    for (std::size_t s = 0; s < num_states; ++s) p[s] = (mask >> s) & 1U ? 1.0 : 0.0;
    out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<double> best_corner(const TabularMdp& mdp) {
  std::vector<double> best;
  double best_j = -INFINITY;
  for (auto& c : deterministic_corners(mdp.num_states)) {
    const double j = exact_j(mdp, TabularPolicy::from_first_action(c));
    if (j > best_j) {
      best_j = j;
      best = c;
    }
  }
  return best;
}

inline std::size_t sample_index(std::span<const double> probs, double u) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

/// Discounted Monte-Carlo return of one episode, truncated once gamma^t drops
/// below `tail` (the neglected tail is at most tail * max|r| / (1 - gamma)).
inline double tabular_rollout(const TabularMdp& mdp, const TabularPolicy& pi, std::uint64_t seed,
                              double tail = 1e-12) {
  Rng rng(seed);
  const std::size_t S = mdp.num_states, A = mdp.num_actions;
  std::size_t s = sample_index(mdp.d0, rng.uniform());
  double discount = 1.0, ret = 0.0;
  while (discount >= tail) {
    const std::size_t a = sample_index(std::span<const double>(pi.probs).subspan(s * A, A), rng.uniform());
    ret += discount * mdp.r(s, a);
    s = sample_index(std::span<const double>(mdp.transition).subspan((s * A + a) * S, S), rng.uniform());
    discount *= mdp.gamma;
    if (discount == 0.0) break;
  }
  return ret;
}

}  // namespace pvn

#endif  // PVN_TABULAR_HPP_
