#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "pvn/cartpole.hpp"

namespace pvn {
namespace {

MlpPolicy uniform_policy() { return MlpPolicy{policy_arch(4, {}, 2, 3.0), std::vector<double>(10, 0.0)}; }

TEST(CartPole, EulerStepFromRestMatchesHandComputation) {
  const CartPoleStep st = cartpole_step(CartPoleState{}, CartPoleAction::right);
  // temp = 10 / 1.1; theta_acc = -temp / (0.5 (4/3 - 0.1 / 1.1)); x_acc = temp - 0.05 theta_acc / 1.1
  const double temp = 10.0 / 1.1;
  const double theta_acc = -temp / (0.5 * (4.0 / 3.0 - 0.1 / 1.1));
  const double x_acc = temp - 0.05 * theta_acc / 1.1;
  EXPECT_EQ(st.next.x, 0.0);
  EXPECT_EQ(st.next.theta, 0.0);
  EXPECT_NEAR(st.next.x_dot, 0.02 * x_acc, 1e-15);
  EXPECT_NEAR(st.next.theta_dot, 0.02 * theta_acc, 1e-15);
  EXPECT_NEAR(st.next.x_dot, 0.195122, 1e-6);
  EXPECT_NEAR(st.next.theta_dot, -0.292683, 1e-6);
  EXPECT_EQ(st.reward, 1.0);
  EXPECT_FALSE(st.done);

  const CartPoleStep left = cartpole_step(CartPoleState{}, CartPoleAction::left);
  EXPECT_NEAR(left.next.x_dot, -st.next.x_dot, 1e-15);
}

TEST(CartPole, EulerUsesPreviousVelocities) {
  const CartPoleState s{0.1, 0.5, 0.02, -0.3};
  const CartPoleStep st = cartpole_step(s, CartPoleAction::left);
  EXPECT_DOUBLE_EQ(st.next.x, 0.1 + 0.02 * 0.5);
  EXPECT_DOUBLE_EQ(st.next.theta, 0.02 + 0.02 * -0.3);
}

TEST(CartPole, TerminatesPastAngleAndPositionLimits) {
  const double deg = std::numbers::pi / 180.0;
  EXPECT_TRUE(cartpole_step(CartPoleState{0, 0, 13 * deg, 0}, CartPoleAction::left).done);
  EXPECT_TRUE(cartpole_step(CartPoleState{0, 0, -13 * deg, 0}, CartPoleAction::right).done);
  EXPECT_FALSE(cartpole_step(CartPoleState{0, 0, 11 * deg, 0}, CartPoleAction::left).done);
  EXPECT_TRUE(cartpole_step(CartPoleState{2.45, 0, 0, 0}, CartPoleAction::left).done);
  EXPECT_FALSE(cartpole_step(CartPoleState{2.3, 0, 0, 0}, CartPoleAction::left).done);
}

TEST(CartPole, ZeroGravityAndForceKeepVelocitiesConstant) {
  CartPoleParams c;
  c.gravity = 0.0;
  CartPoleState s{0.0, 0.3, 0.0, 0.0};
  for (int i = 0; i < 50; ++i) {
    const CartPoleStep st = cartpole_step_force(s, 0.0, c);
    EXPECT_EQ(st.next.x_dot, 0.3);
    EXPECT_EQ(st.next.theta_dot, 0.0);
    EXPECT_NEAR(st.next.x, s.x + 0.02 * 0.3, 1e-15);
    s = st.next;
  }
}

TEST(CartPole, UniformRandomPolicyGolden) {
  // Logits are all zero, so each action has probability 1/2.
  const double mean = cartpole_mean_return(uniform_policy(), 2024, 1000, 100);
  EXPECT_GE(mean, 15.0);
  EXPECT_LE(mean, 35.0);
  EXPECT_DOUBLE_EQ(mean, 22.271999999999998);
}

TEST(CartPole, RolloutIsDeterministicPerSeed) {
  const MlpPolicy p = MlpPolicy::glorot(policy_arch(4, {8}, 2, 1.0), 3);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = cartpole_rollout(p, seed), b = cartpole_rollout(p, seed);
    EXPECT_EQ(a.undiscounted_return, b.undiscounted_return);
    EXPECT_EQ(a.steps, b.steps);
    EXPECT_EQ(a.undiscounted_return, static_cast<double>(a.steps));
  }
}

TEST(CartPole, EpisodeCapIsRespected) {
  const MlpPolicy p = uniform_policy();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto r = cartpole_rollout(p, seed, 5);
    EXPECT_LE(r.steps, 5u);
    EXPECT_GE(r.steps, 1u);
  }
}

TEST(CartPole, RejectsWrongPolicyShape) {
  const MlpPolicy p = MlpPolicy::glorot(policy_arch(3, {}, 2, 1.0), 1);
  EXPECT_THROW(cartpole_rollout(p, 0), ShapeError);
}

}  // namespace
}  // namespace pvn
