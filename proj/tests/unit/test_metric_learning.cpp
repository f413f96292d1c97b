#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "zirrel/error.hpp"
#include "zirrel/metric_learning.hpp"
#include "zirrel/return_dist.hpp"

using namespace zirrel;

namespace {

/// 0 -a0-> 1 -> 2 (absorbing), 0 -a1-> 2; all rewards zero. Actions at state 1
/// lead to the same place, so (1,0) and (1,1) are interchangeable.
TabularMdp fork_mdp() {
  TabularMdp m;
  m.num_states = 3;
  m.num_actions = 2;
  m.gamma = 0.9;
  m.horizon_cap = 5;
  m.episodic = true;
  m.transition.assign(3 * 2 * 3, 0.0);
  m.reward.assign(6, 0.0);
  auto go = [&](std::size_t s, std::size_t a, std::size_t t) { m.transition[(s * 2 + a) * 3 + t] = 1.0; };
  go(0, 0, 1);
  go(0, 1, 2);
  go(1, 0, 2);
  go(1, 1, 2);
  go(2, 0, 2);
  go(2, 1, 2);
  return m;
}

Policy det(std::vector<std::size_t> actions, std::size_t num_actions) {
  return Policy::from_actions(actions, num_actions);
}

/// The two-policy scenario: pi_a visits x=0 and x=2 with equal returns,
/// pi_b visits x=0 and x=3.
std::vector<Policy> two_policies() { return {det({0, 0, 0}, 2), det({0, 1, 0}, 2)}; }

constexpr std::size_t kX1 = 0;  // (0, 0)
constexpr std::size_t kX2 = 2;  // (1, 0)

/// d1 and d2 straight from per-policy walks.
struct OracleMetrics {
  std::vector<double> d1;
  std::vector<double> d2;
  std::vector<bool> d2_defined;
};

OracleMetrics oracle_metrics(const TabularMdp& mdp, const std::vector<std::vector<std::size_t>>& acts) {
  const std::size_t X = mdp.num_pairs();
  std::vector<oracle::Walk> walks;
  for (const auto& a : acts) walks.push_back(oracle::deterministic_walk(mdp, a));
  OracleMetrics o{std::vector<double>(X * X), std::vector<double>(X * X),
                  std::vector<bool>(X * X)};
  for (std::size_t i = 0; i < X; ++i) {
    for (std::size_t j = 0; j < X; ++j) {
      double same = 0, differ = 0, co = 0;
      for (const auto& w : walks) {
        if (!w.visited[i] || !w.visited[j]) continue;
        co += 1;
        if (std::abs(w.ret[i] - w.ret[j]) <= 1e-9) {
          same += 1;
        } else {
          differ += 1;
        }
      }
      o.d1[i * X + j] = i == j ? 0.0 : 1.0 - same / static_cast<double>(walks.size());
      o.d2_defined[i * X + j] = co > 0;
      o.d2[i * X + j] = co > 0 ? differ / co : 0.0;
    }
  }
  return o;
}

std::vector<std::vector<std::size_t>> all_action_lists(std::size_t S, std::size_t A) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> a(S, 0);
  while (true) {
    out.push_back(a);
    std::size_t i = 0;
    while (i < S && ++a[i] == A) a[i++] = 0;
    if (i == S) break;
  }
  return out;
}

std::vector<Policy> to_policies(const std::vector<std::vector<std::size_t>>& lists, std::size_t A) {
  std::vector<Policy> out;
  for (const auto& l : lists) out.push_back(det(l, A));
  return out;
}

TabularMdp random_det_mdp(std::uint64_t seed) {
  RandomMdpOptions opt;
  opt.reward_levels = 2;
  return random_mdp(seed, 4, 2, 1, 0.9, opt);
}

}  // namespace

TEST(CollectExact, LabelsAndCount) {
  const auto m = fork_mdp();
  const auto pairs = collect_pairs_exact(m, {det({0, 0, 0}, 2)});
  EXPECT_EQ(pairs.provenance, PairProvenance::kExact);
  EXPECT_EQ(pairs.tuples.size(), 36u);
  for (const auto& t : pairs.tuples) {
    const bool both = (t.xi == kX1 || t.xi == kX2) && (t.xj == kX1 || t.xj == kX2);
    EXPECT_EQ(t.y, both ? 0 : 1) << t.xi << "," << t.xj;
  }
}

TEST(CollectExact, SixteenTuplesForFourPairs) {
  TabularMdp m;
  m.num_states = 2;
  m.num_actions = 2;
  m.horizon_cap = 2;
  m.transition = {0, 1, 0, 1, 0, 1, 0, 1};
  m.reward = {1, 0, 0, 0};
  m.episodic = true;
  const auto pairs = collect_pairs_exact(m, {det({0, 0}, 2)});
  EXPECT_EQ(pairs.tuples.size(), 16u);
  for (const auto& t : pairs.tuples) {
    if (t.xi == 0 && t.xj == 0) EXPECT_EQ(t.y, 0);
  }
}

TEST(CollectVisited, WithinTrajectoryProduct) {
  // Chain 0 -> 1 -> 2 -> 3 (absorbing) visits three pairs.
  TabularMdp m;
  m.num_states = 4;
  m.num_actions = 1;
  m.horizon_cap = 10;
  m.gamma = 0.5;
  m.episodic = true;
  m.transition = {0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 1};
  m.reward = {0, 0, 0, 0};
  const auto pairs = collect_pairs_visited(m, {det({0, 0, 0, 0}, 1)});
  EXPECT_EQ(pairs.provenance, PairProvenance::kVisited);
  EXPECT_EQ(pairs.tuples.size(), 9u);
  for (const auto& t : pairs.tuples) EXPECT_EQ(t.y, 0);
}

TEST(CollectVisited, UnequalReturnsLabelOne) {
  // R0 = 3.5 + 0.5 * 3 = 5 and R1 = 3.
  TabularMdp m;
  m.num_states = 3;
  m.num_actions = 1;
  m.horizon_cap = 10;
  m.gamma = 0.5;
  m.r_max = 5.0;
  m.episodic = true;
  m.transition = {0, 1, 0, 0, 0, 1, 0, 0, 1};
  m.reward = {3.5, 3, 0};
  const auto pairs = collect_pairs_visited(m, {det({0, 0, 0}, 1)});
  ASSERT_EQ(pairs.tuples.size(), 4u);
  for (const auto& t : pairs.tuples) EXPECT_EQ(t.y, t.xi == t.xj ? 0 : 1);
}

TEST(CollectPairs, StochasticDynamicsRejected) {
  const auto m = coin_flip_mdp(0.9);
  std::vector<std::size_t> acts(m.num_states, 0);
  EXPECT_THROW(collect_pairs_exact(m, {det(acts, m.num_actions)}), PreconditionError);
  EXPECT_THROW(collect_pairs_visited(m, {det(acts, m.num_actions)}), PreconditionError);
  EXPECT_THROW(closed_form_d1(m, {det(acts, m.num_actions)}), PreconditionError);
  EXPECT_THROW(closed_form_d2(m, {det(acts, m.num_actions)}), PreconditionError);
}

TEST(ClosedForm, TwoPolicyScenario) {
  const auto m = fork_mdp();
  const auto d1 = closed_form_d1(m, two_policies());
  const auto d2 = closed_form_d2(m, two_policies());
  EXPECT_DOUBLE_EQ(d1(kX1, kX2), 0.5);
  EXPECT_DOUBLE_EQ(d1(kX2, kX1), 0.5);
  ASSERT_TRUE(d2.is_defined(kX1, kX2));
  EXPECT_EQ(d2(kX1, kX2), 0.0);
  EXPECT_TRUE(d1.fully_defined());
  // (1,0) and (1,1) are never co-visited.
  EXPECT_EQ(d1(2, 3), 1.0);
  EXPECT_FALSE(d2.is_defined(2, 3));
  // x = 1 is never visited by either policy.
  EXPECT_EQ(d1(kX1, 1), 1.0);
  const auto order = check_d2_le_d1(d1, d2);
  EXPECT_TRUE(order.ok());
  EXPECT_GT(order.pairs_checked, 0u);
}

TEST(ClosedForm, AlwaysEqualPairIsZero) {
  const auto m = fork_mdp();
  const auto d1 = closed_form_d1(m, {det({0, 0, 0}, 2)});
  EXPECT_EQ(d1(kX1, kX2), 0.0);
}

TEST(ClosedForm, UnequalCoVisitIsOne) {
  TabularMdp m;
  m.num_states = 3;
  m.num_actions = 1;
  m.horizon_cap = 10;
  m.gamma = 0.5;
  m.episodic = true;
  m.transition = {0, 1, 0, 0, 0, 1, 0, 0, 1};
  m.reward = {1, 0, 0};
  const auto d2 = closed_form_d2(m, {det({0, 0, 0}, 1)});
  EXPECT_EQ(d2(0, 1), 1.0);
}

TEST(ClosedForm, SinglePolicyMakesD1EqualD2OnCoVisits) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto m = random_det_mdp(seed);
    const std::vector<Policy> one{det({1, 0, 1, 0}, 2)};
    const auto d1 = closed_form_d1(m, one);
    const auto d2 = closed_form_d2(m, one);
    for (std::size_t i = 0; i < m.num_pairs(); ++i) {
      for (std::size_t j = 0; j < m.num_pairs(); ++j) {
        if (d2.is_defined(i, j)) EXPECT_EQ(d1(i, j), d2(i, j));
      }
    }
  }
}

TEST(ClosedForm, MatchesWalkOracle) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto m = random_det_mdp(seed);
    const auto lists = all_action_lists(m.num_states, m.num_actions);
    const auto pols = to_policies(lists, m.num_actions);
    const auto o = oracle_metrics(m, lists);
    const auto d1 = closed_form_d1(m, pols);
    const auto d2 = closed_form_d2(m, pols);
    const std::size_t X = m.num_pairs();
    for (std::size_t i = 0; i < X; ++i) {
      for (std::size_t j = 0; j < X; ++j) {
        EXPECT_NEAR(d1(i, j), o.d1[i * X + j], 1e-12);
        EXPECT_EQ(d2.is_defined(i, j), o.d2_defined[i * X + j]);
        if (o.d2_defined[i * X + j]) EXPECT_NEAR(d2(i, j), o.d2[i * X + j], 1e-12);
      }
    }
  }
}

TEST(FitMetric, ExactPairsReproduceD1) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto m = random_det_mdp(seed);
    const auto pols = to_policies(all_action_lists(m.num_states, m.num_actions), m.num_actions);
    const auto fit = fit_metric(collect_pairs_exact(m, pols));
    const auto d1 = closed_form_d1(m, pols);
    EXPECT_LE(max_abs_diff(fit, d1), 1e-12) << seed;
  }
}

TEST(FitMetric, VisitedPairsReproduceD2) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto m = random_det_mdp(seed);
    const auto pols = to_policies(all_action_lists(m.num_states, m.num_actions), m.num_actions);
    const auto fit = fit_metric(collect_pairs_visited(m, pols));
    const auto d2 = closed_form_d2(m, pols);
    EXPECT_LE(max_abs_diff(fit, d2), 1e-12) << seed;
  }
}

TEST(FitMetric, MeanOfLabels) {
  LabeledPairSet pairs;
  pairs.domain_size = 2;
  pairs.tuples = {{0, 1, 1}, {0, 1, 0}};
  const auto fit = fit_metric(pairs);
  EXPECT_DOUBLE_EQ(fit(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(fit(1, 0), 0.5);
}

TEST(FitMetric, UnseenPairsStayUndefined) {
  LabeledPairSet pairs;
  pairs.domain_size = 3;
  pairs.tuples = {{0, 1, 1}, {0, 0, 1}};
  const auto fit = fit_metric(pairs);
  EXPECT_FALSE(fit.is_defined(0, 2));
  EXPECT_FALSE(fit.is_defined(2, 2));
  EXPECT_FALSE(fit.is_defined(1, 1));
  ASSERT_TRUE(fit.is_defined(0, 0));
  EXPECT_EQ(fit(0, 0), 0.0);
}

TEST(MaxAbsDiff, MaskMismatchIsInfinite) {
  auto a = AbstractionMetric::undefined(2);
  auto b = AbstractionMetric::undefined(2);
  a.set(0, 1, 0.3);
  EXPECT_TRUE(std::isinf(max_abs_diff(a, b)));
  b.set(0, 1, 0.1);
  EXPECT_NEAR(max_abs_diff(a, b), 0.2, 1e-15);
}

TEST(Semimetric, D1PassesOnRandomDeterministicMdps) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto m = random_det_mdp(seed);
    const auto pols = to_policies(all_action_lists(m.num_states, m.num_actions), m.num_actions);
    const auto report = check_semimetric(closed_form_d1(m, pols));
    EXPECT_TRUE(report.ok()) << seed;
    EXPECT_EQ(report.undefined_entries, 0u);
  }
}

TEST(Semimetric, D2OnTwoPolicyScenarioReportsWithoutThrowing) {
  const auto m = fork_mdp();
  const auto d2 = closed_form_d2(m, two_policies());
  SemimetricReport report;
  EXPECT_NO_THROW(report = check_semimetric(d2));
  EXPECT_TRUE(report.identity.empty());
  EXPECT_TRUE(report.symmetry.empty());
  EXPECT_TRUE(report.boundedness.empty());
  EXPECT_GT(report.undefined_entries, 0u);
}

TEST(Semimetric, D2TriangleCanFail) {
  // Search small deterministic MDPs for a triangle counterexample and check
  // that every flagged excess is real.
  std::size_t flagged = 0;
  for (std::uint64_t seed = 1; seed <= 200 && flagged == 0; ++seed) {
    RandomMdpOptions opt;
    opt.reward_levels = 3;
    const auto m = random_mdp(seed, 5, 2, 1, 0.9, opt);
    const auto pols = to_policies(all_action_lists(m.num_states, m.num_actions), m.num_actions);
    const auto d2 = closed_form_d2(m, pols);
    const auto report = check_semimetric(d2);
    for (const auto& v : report.triangle) {
      EXPECT_NEAR(v.value, d2(v.i, v.k) - d2(v.i, v.j) - d2(v.j, v.k), 1e-12);
      EXPECT_GT(v.value, 0.0);
    }
    flagged += report.triangle.size();
  }
  EXPECT_GT(flagged, 0u);
}

TEST(Semimetric, BoundednessNegativeControl) {
  auto m = AbstractionMetric::undefined(3);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) m.set(i, j, i == j ? 0.0 : 0.6);
  }
  m.set(0, 1, 1.2);
  const auto report = check_semimetric(m);
  EXPECT_FALSE(report.boundedness.empty());
  EXPECT_TRUE(report.symmetry.empty());
}

TEST(Semimetric, IdentityAndSymmetryViolations) {
  AbstractionMetric m;
  m.size = 2;
  m.values = {0.1, 0.2, 0.3, 0.0};
  m.defined = {1, 1, 1, 1};
  const auto report = check_semimetric(m);
  EXPECT_EQ(report.identity.size(), 1u);
  EXPECT_FALSE(report.symmetry.empty());
}

TEST(Ordering, AuditOverRandomDeterministicMdps) {
  std::size_t checked = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    RandomMdpOptions opt;
    opt.reward_levels = 2;
    const auto m = random_mdp(seed, 5, 2, 1, 0.9, opt);
    const auto pols = enumerate_det_policies(m);
    const auto report = check_d2_le_d1(closed_form_d1(m, pols), closed_form_d2(m, pols));
    EXPECT_TRUE(report.ok()) << seed;
    checked += report.pairs_checked;
  }
  EXPECT_GT(checked, 0u);
}

TEST(Ordering, FlagsPlantedViolations) {
  auto d1 = AbstractionMetric::undefined(2);
  auto d2 = AbstractionMetric::undefined(2);
  d1.set(0, 1, 0.0);
  d2.set(0, 1, 0.4);
  const auto report = check_d2_le_d1(d1, d2);
  EXPECT_FALSE(report.d2_above_d1.empty());
  EXPECT_FALSE(report.zero_implication.empty());
  d1.set(0, 1, 0.5);
  d2.set(0, 1, 1.0);
  EXPECT_FALSE(check_d2_le_d1(d1, d2).one_implication.empty());
}

TEST(D1Zero, ImpliesEqualQUnderCoVisitingPolicies) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto m = random_det_mdp(seed);
    const auto lists = all_action_lists(m.num_states, m.num_actions);
    const auto pols = to_policies(lists, m.num_actions);
    const auto d1 = closed_form_d1(m, pols);
    const std::size_t X = m.num_pairs();
    for (std::size_t p = 0; p < pols.size(); ++p) {
      const auto q = policy_eval_q(m, pols[p]);
      const auto walk = oracle::deterministic_walk(m, lists[p]);
      for (std::size_t i = 0; i < X; ++i) {
        for (std::size_t j = i + 1; j < X; ++j) {
          if (d1(i, j) != 0.0 || !walk.visited[i] || !walk.visited[j]) continue;
          EXPECT_NEAR(q[i], q[j], 1e-9);
        }
      }
    }
  }
}
