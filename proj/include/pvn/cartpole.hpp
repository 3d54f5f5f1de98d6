// Classic cart-pole balancing task (Barto, Sutton & Anderson 1983 dynamics,
// explicit Euler integration), with the constants of the common benchmark.

#ifndef PVN_CARTPOLE_HPP_
#define PVN_CARTPOLE_HPP_

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "pvn/error.hpp"
#include "pvn/policy.hpp"
#include "pvn/rng.hpp"

namespace pvn {

struct CartPoleState {
  double x = 0.0;
  double x_dot = 0.0;
  double theta = 0.0;
  double theta_dot = 0.0;

  std::array<double, 4> observation() const { return {x, x_dot, theta, theta_dot}; }
  friend bool operator==(const CartPoleState&, const CartPoleState&) = default;
};

struct CartPoleParams {
  double gravity = 9.8;
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double half_pole_length = 0.5;
  double force_mag = 10.0;
  double tau = 0.02;
  double theta_threshold = 12.0 * 2.0 * std::numbers::pi / 360.0;
  double x_threshold = 2.4;
};

enum class CartPoleAction : std::size_t { left = 0, right = 1 };

struct CartPoleStep {
  CartPoleState next;
  double reward = 0.0;
  bool done = false;
};

inline constexpr std::size_t kCartPoleStateDim = 4;
inline constexpr std::size_t kCartPoleActions = 2;
inline constexpr std::size_t kDefaultEpisodeCap = 100;

/// Applies a force directly (the action maps to +-force_mag).
inline CartPoleStep cartpole_step_force(const CartPoleState& s, double force, const CartPoleParams& c = {}) {
  const double total_mass = c.cart_mass + c.pole_mass;
  const double polemass_length = c.pole_mass * c.half_pole_length;
  const double cos_t = std::cos(s.theta);
  const double sin_t = std::sin(s.theta);
  const double temp = (force + polemass_length * s.theta_dot * s.theta_dot * sin_t) / total_mass;
  const double theta_acc = (c.gravity * sin_t - cos_t * temp) /
                           (c.half_pole_length * (4.0 / 3.0 - c.pole_mass * cos_t * cos_t / total_mass));
  const double x_acc = temp - polemass_length * theta_acc * cos_t / total_mass;

  CartPoleStep out;
  out.next.x = s.x + c.tau * s.x_dot;
  out.next.x_dot = s.x_dot + c.tau * x_acc;
  out.next.theta = s.theta + c.tau * s.theta_dot;
  out.next.theta_dot = s.theta_dot + c.tau * theta_acc;
  out.done = std::abs(out.next.x) > c.x_threshold || std::abs(out.next.theta) > c.theta_threshold;
  out.reward = 1.0;
  return out;
}

inline CartPoleStep cartpole_step(const CartPoleState& s, CartPoleAction action, const CartPoleParams& c = {}) {
  const double force = action == CartPoleAction::right ? c.force_mag : -c.force_mag;
  return cartpole_step_force(s, force, c);
}

struct EpisodeResult {
  double undiscounted_return = 0.0;
  std::size_t steps = 0;
  std::uint64_t seed = 0;
};

/// One episode with actions sampled from the policy's softmax output.
/// The start state is uniform in [-0.05, 0.05]^4; the stream is fully
/// determined by `seed`.
inline EpisodeResult cartpole_rollout(const MlpPolicy& policy, std::uint64_t seed,
                                      std::size_t max_steps = kDefaultEpisodeCap, const CartPoleParams& c = {}) {
  if (policy.arch.input != kCartPoleStateDim || policy.arch.output != kCartPoleActions ||
      policy.arch.head != OutputHead::softmax) {
    throw ShapeError("cart-pole needs a softmax policy with 4 inputs and 2 actions");
  }
  Rng rng(seed);
  CartPoleState s{rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05),
                  rng.uniform(-0.05, 0.05)};
  EpisodeResult result{0.0, 0, seed};
  const Tensor params = Tensor::vector(policy.params);
  while (result.steps < max_steps) {
    const auto obs = s.observation();
    const Tensor probs = mlp_forward(params, policy.arch, Tensor({1, 4}, {obs.begin(), obs.end()}));
    const double p_left = probs[0];
    if (!std::isfinite(p_left) || !std::isfinite(probs[1])) {
      throw NumericalError("policy produced a non-finite action distribution");
    }
    const auto action = rng.uniform() < p_left ? CartPoleAction::left : CartPoleAction::right;
    const CartPoleStep st = cartpole_step(s, action, c);
    result.undiscounted_return += st.reward;
    ++result.steps;
    s = st.next;
    if (st.done) break;
  }
  return result;
}

/// Mean undiscounted return over `episodes` rollouts seeded derive_seed(seed, {i}).
inline double cartpole_mean_return(const MlpPolicy& policy, std::uint64_t seed, std::size_t episodes,
                                   std::size_t max_steps = kDefaultEpisodeCap) {
  double total = 0.0;
  for (std::size_t i = 0; i < episodes; ++i)
    total += cartpole_rollout(policy, derive_seed(seed, {i}), max_steps).undiscounted_return;
  return episodes ? total / static_cast<double>(episodes) : 0.0;
}

}  // namespace pvn

#endif  // PVN_CARTPOLE_HPP_
