#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "pvn/dataset.hpp"
#include "pvn/rng.hpp"
#include "pvn/tabular.hpp"

namespace pvn {
namespace {

// V for a two-state chain by Cramer's rule on (I - gamma P) V = r.
std::vector<double> cramer_values(const TabularMdp& mdp, std::span<const double> p_first) {
  double P[2][2], r[2];
  for (std::size_t s = 0; s < 2; ++s) {
    const double a = p_first[s];
    r[s] = a * mdp.r(s, 0) + (1 - a) * mdp.r(s, 1);
    for (std::size_t k = 0; k < 2; ++k) P[s][k] = a * mdp.p(s, 0, k) + (1 - a) * mdp.p(s, 1, k);
  }
  const double g = mdp.gamma;
  const double m00 = 1 - g * P[0][0], m01 = -g * P[0][1], m10 = -g * P[1][0], m11 = 1 - g * P[1][1];
  const double det = m00 * m11 - m01 * m10;
  return {(r[0] * m11 - m01 * r[1]) / det, (m00 * r[1] - m10 * r[0]) / det};
}

TabularMdp random_mdp(Rng& rng, std::size_t S, std::size_t A) {
  TabularMdp mdp;
  mdp.num_states = S;
  mdp.num_actions = A;
  mdp.gamma = rng.uniform(0.0, 0.95);
  mdp.transition.resize(S * A * S);
  for (std::size_t sa = 0; sa < S * A; ++sa) {
    double total = 0.0;
    for (std::size_t k = 0; k < S; ++k) total += (mdp.transition[sa * S + k] = rng.uniform());
    for (std::size_t k = 0; k < S; ++k) mdp.transition[sa * S + k] /= total;
    // Renormalize the last entry so the row sums to 1 to within rounding.
    double head = 0.0;
    for (std::size_t k = 0; k + 1 < S; ++k) head += mdp.transition[sa * S + k];
    mdp.transition[sa * S + S - 1] = 1.0 - head;
  }
  mdp.reward.resize(S * A);
  for (double& r : mdp.reward) r = rng.uniform(-1.0, 1.0);
  mdp.d0.assign(S, 1.0 / static_cast<double>(S));
  mdp.d0.back() = 1.0 - (static_cast<double>(S) - 1.0) / static_cast<double>(S);
  mdp.validate();
  return mdp;
}

TabularPolicy random_policy(Rng& rng, std::size_t S, std::size_t A) {
  TabularPolicy pi{S, A, std::vector<double>(S * A)};
  for (std::size_t s = 0; s < S; ++s) {
    double total = 0.0;
    for (std::size_t a = 0; a < A; ++a) total += (pi.probs[s * A + a] = rng.uniform() + 1e-3);
    for (std::size_t a = 0; a < A; ++a) pi.probs[s * A + a] /= total;
  }
  return pi;
}

TEST(PolytopeMdp, TablesFollowTheIndexingConvention) {
  const TabularMdp mdp = polytope_mdp();
  EXPECT_EQ(mdp.r(0, 0), -0.45);
  EXPECT_EQ(mdp.r(1, 0), 0.5);
  EXPECT_EQ(mdp.p(0, 0, 0), 0.6);
  EXPECT_EQ(mdp.p(0, 0, 1), 0.4);
  EXPECT_EQ(mdp.gamma, 0.8);
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t a = 0; a < 2; ++a) EXPECT_NEAR(mdp.p(s, a, 0) + mdp.p(s, a, 1), 1.0, 1e-15);
}

TEST(PolytopeMdp, CornerValuesMatchClosedForm) {
  const TabularMdp mdp = polytope_mdp();
  const std::vector<double> a1{1.0, 1.0}, a2{0.0, 0.0};
  const auto v1 = exact_values(mdp, TabularPolicy::from_first_action(a1));
  EXPECT_NEAR(v1[0], -0.014706, 1e-6);
  EXPECT_NEAR(v1[1], 1.382353, 1e-6);
  const auto v2 = exact_values(mdp, TabularPolicy::from_first_action(a2));
  EXPECT_NEAR(v2[0], -0.476, 5e-4);
  EXPECT_NEAR(v2[1], 0.124, 5e-4);
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    const std::vector<double> p{rng.uniform(), rng.uniform()};
    const auto want = cramer_values(mdp, p);
    const auto got = exact_values(mdp, TabularPolicy::from_first_action(p));
    EXPECT_NEAR(got[0], want[0], 1e-12);
    EXPECT_NEAR(got[1], want[1], 1e-12);
  }
}

TEST(ExactValues, MatchValueIterationOnRandomMdps) {
  Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t S = 1 + rng.below(5), A = 1 + rng.below(5);
    const TabularMdp mdp = random_mdp(rng, S, A);
    const TabularPolicy pi = random_policy(rng, S, A);
    const auto exact = exact_values(mdp, pi);
    const auto vi = value_iteration(mdp, pi, 1e-10);
    for (std::size_t s = 0; s < S; ++s) EXPECT_NEAR(exact[s], vi[s], 1e-8);
  }
}

TEST(ExactValues, ZeroRewardGivesZeroValue) {
  Rng rng(5);
  TabularMdp mdp = random_mdp(rng, 3, 2);
  std::fill(mdp.reward.begin(), mdp.reward.end(), 0.0);
  for (double v : exact_values(mdp, random_policy(rng, 3, 2))) EXPECT_EQ(v, 0.0);
}

TEST(ExactValues, InvariantUnderStateRelabeling) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t S = 2 + rng.below(4), A = 1 + rng.below(4);
    TabularMdp mdp = random_mdp(rng, S, A);
    for (double& d : mdp.d0) d = rng.uniform() + 0.1;
    const double total = std::accumulate(mdp.d0.begin(), mdp.d0.end(), 0.0);
    for (double& d : mdp.d0) d /= total;
    mdp.d0.back() = 1.0 - std::accumulate(mdp.d0.begin(), mdp.d0.end() - 1, 0.0);
    const TabularPolicy pi = random_policy(rng, S, A);

    std::vector<std::size_t> perm(S);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = S; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    TabularMdp q = mdp;
    TabularPolicy qi = pi;
    for (std::size_t s = 0; s < S; ++s) {
      q.d0[perm[s]] = mdp.d0[s];
      for (std::size_t a = 0; a < A; ++a) {
        q.reward[perm[s] * A + a] = mdp.r(s, a);
        qi.probs[perm[s] * A + a] = pi(s, a);
        for (std::size_t k = 0; k < S; ++k) q.transition[(perm[s] * A + a) * S + perm[k]] = mdp.p(s, a, k);
      }
    }
    const auto v = exact_values(mdp, pi), vq = exact_values(q, qi);
    for (std::size_t s = 0; s < S; ++s) EXPECT_NEAR(vq[perm[s]], v[s], 1e-12);
    EXPECT_NEAR(exact_j(q, qi), exact_j(mdp, pi), 1e-12);
  }
}

TEST(ExactGrad, MatchesDenseSweepSlopeAtCentre) {
  const TabularMdp mdp = polytope_mdp();
  const std::vector<double> centre{0.5, 0.5};
  const auto g = exact_grad(mdp, centre);
  for (std::size_t axis = 0; axis < 2; ++axis) {
    // Least-squares slope over 401 points in a +-0.01 window.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int n = 401;
    for (int i = 0; i < n; ++i) {
      const double dx = -0.01 + 0.02 * i / (n - 1);
      std::vector<double> p = centre;
      p[axis] += dx;
      const double j = exact_j(mdp, TabularPolicy::from_first_action(p));
      sx += dx;
      sy += j;
      sxx += dx * dx;
      sxy += dx * j;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    EXPECT_NEAR(g[axis], slope, 1e-4);
  }
}

TEST(ExactGrad, MatchesPolicyGradientIdentity) {
  // dJ/dp_s = d(s) (Q(s,a1) - Q(s,a2)) with d the discounted state visitation.
  const TabularMdp mdp = polytope_mdp();
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    const std::vector<double> p{rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
    const auto pi = TabularPolicy::from_first_action(p);
    const auto v = exact_values(mdp, pi);
    auto [pp, rp] = induced_chain(mdp, pi);
    // d^T = d0^T (I - gamma P_pi)^-1, solved as the transpose system.
    const double m00 = 1 - mdp.gamma * pp[0], m01 = -mdp.gamma * pp[1];
    const double m10 = -mdp.gamma * pp[2], m11 = 1 - mdp.gamma * pp[3];
    const double det = m00 * m11 - m01 * m10;
    const double d[2] = {(mdp.d0[0] * m11 - mdp.d0[1] * m10) / det, (mdp.d0[1] * m00 - mdp.d0[0] * m01) / det};
    const auto g = exact_grad(mdp, p);
    for (std::size_t s = 0; s < 2; ++s) {
      auto q = [&](std::size_t a) { return mdp.r(s, a) + mdp.gamma * (mdp.p(s, a, 0) * v[0] + mdp.p(s, a, 1) * v[1]); };
      EXPECT_NEAR(g[s], d[s] * (q(0) - q(1)), 1e-7);
    }
  }
}

TEST(ExactGrad, ConstantRewardGivesZeroGradient) {
  TabularMdp mdp = polytope_mdp();
  std::fill(mdp.reward.begin(), mdp.reward.end(), 0.3);
  Rng rng(9);
  for (int i = 0; i < 20; ++i) {
    const std::vector<double> p{rng.uniform(), rng.uniform()};
    for (double g : exact_grad(mdp, p)) EXPECT_NEAR(g, 0.0, 1e-8);
  }
}

TEST(ExactGrad, OptimalCornerHasNoFeasibleAscentDirection) {
  const TabularMdp mdp = polytope_mdp();
  const auto best = best_corner(mdp);
  EXPECT_EQ(best, (std::vector<double>{1.0, 1.0}));
  const double j_best = exact_j(mdp, TabularPolicy::from_first_action(best));
  EXPECT_NEAR(j_best, 0.5 * (-0.014706 + 1.382353), 1e-6);
  const auto g = exact_grad(mdp, best);
  EXPECT_GT(g[0], 0.0);
  EXPECT_GT(g[1], 0.0);
  // Local grid: no feasible neighbour is better.
  for (double d1 = 0.0; d1 <= 0.05; d1 += 0.01)
    for (double d2 = 0.0; d2 <= 0.05; d2 += 0.01) {
      const std::vector<double> p{1.0 - d1, 1.0 - d2};
      EXPECT_LE(exact_j(mdp, TabularPolicy::from_first_action(p)), j_best + 1e-15);
    }
}

bool in_triangle(const double* p, const std::vector<double>& a, const std::vector<double>& b,
                 const std::vector<double>& c) {
  auto cross = [](const std::vector<double>& o, const std::vector<double>& u, const double* v) {
    return (u[0] - o[0]) * (v[1] - o[1]) - (u[1] - o[1]) * (v[0] - o[0]);
  };
  const double d1 = cross(a, b, p), d2 = cross(b, c, p), d3 = cross(c, a, p);
  const double eps = 1e-12;
  const bool has_neg = d1 < -eps || d2 < -eps || d3 < -eps;
  const bool has_pos = d1 > eps || d2 > eps || d3 > eps;
  return !(has_neg && has_pos);
}

TEST(PolytopeSampling, ValuesLieInsideCornerHull) {
  const TabularMdp mdp = polytope_mdp();
  std::vector<std::vector<double>> corners;
  for (const auto& c : deterministic_corners(2)) corners.push_back(exact_values(mdp, TabularPolicy::from_first_action(c)));
  ASSERT_EQ(corners.size(), 4u);
  const auto samples = sample_polytope_dataset(mdp, 500, 3);
  for (const auto& s : samples) {
    EXPECT_GE(s.policy[0], 0.0);
    EXPECT_LT(s.policy[0], 1.0);
    bool inside = false;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = i + 1; j < 4; ++j)
        for (std::size_t k = j + 1; k < 4; ++k) inside |= in_triangle(s.values.data(), corners[i], corners[j], corners[k]);
    EXPECT_TRUE(inside);
    EXPECT_NEAR(s.j, 0.5 * (s.values[0] + s.values[1]), 1e-15);
  }
}

TEST(PolytopeSampling, Deterministic) {
  const TabularMdp mdp = polytope_mdp();
  const auto a = sample_polytope_dataset(mdp, 1, 77), b = sample_polytope_dataset(mdp, 1, 77);
  EXPECT_EQ(a[0].policy, b[0].policy);
  EXPECT_EQ(a[0].values, b[0].values);
  EXPECT_THROW(sample_polytope_dataset(mdp, 0, 1), DataError);
}

TEST(TabularMdp, ValidationRejectsBadTables) {
  TabularMdp mdp = polytope_mdp();
  mdp.transition[0] = 0.7;
  EXPECT_THROW(mdp.validate(), DataError);
  mdp = polytope_mdp();
  mdp.gamma = 1.0;
  EXPECT_THROW(mdp.validate(), DataError);
  mdp = polytope_mdp();
  mdp.d0 = {0.7, 0.7};
  EXPECT_THROW(mdp.validate(), DataError);
  mdp = polytope_mdp();
  mdp.reward.pop_back();
  EXPECT_THROW(mdp.validate(), ShapeError);
}

TEST(TabularRollout, MonteCarloMatchesExactJ) {
  const TabularMdp mdp = polytope_mdp();
  const TabularEnv env{mdp};
  const std::vector<double> p{0.3, 0.8};
  const auto pi = TabularPolicy::from_first_action(p);
  const std::size_t n = 100000;
  double s = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = env.rollout(pi, derive_seed(12, {i}));
    s += g;
    s2 += g * g;
  }
  const double mc = s / n;
  const double se = std::sqrt((s2 / n - mc * mc) / n);
  EXPECT_LT(std::abs(mc - exact_j(mdp, pi)), 3.0 * se);
}

}  // namespace
}  // namespace pvn
