#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "zirrel/error.hpp"
#include "zirrel/mdp.hpp"

using namespace zirrel;

namespace {

TabularMdp two_state_chain() {
  TabularMdp m;
  m.num_states = 2;
  m.num_actions = 1;
  m.transition = {0.0, 1.0, 0.0, 1.0};
  m.reward = {1.0, 0.0};
  m.gamma = 0.9;
  m.horizon_cap = 2;
  m.episodic = true;
  return m;
}

}  // namespace

TEST(ValidateMdp, WellFormedChainIsClean) { EXPECT_TRUE(validate_mdp(two_state_chain()).empty()); }

TEST(ValidateMdp, RowSumViolationNamesCell) {
  TabularMdp m = two_state_chain();
  m.transition = {0.0, 0.9, 0.0, 1.0};
  const auto report = validate_mdp(m);
  ASSERT_EQ(report.size(), 1u);
  EXPECT_NE(report[0].find("(s=0, a=0)"), std::string::npos) << report[0];
  EXPECT_NE(report[0].find("0.9"), std::string::npos);
}

TEST(ValidateMdp, RewardAboveBound) {
  TabularMdp m = two_state_chain();
  m.reward[0] = 2.0;
  const auto report = validate_mdp(m);
  ASSERT_EQ(report.size(), 1u);
  EXPECT_NE(report[0].find("outside"), std::string::npos);
}

TEST(ValidateMdp, StructuralChecks) {
  TabularMdp m = two_state_chain();
  m.gamma = 1.0;
  EXPECT_FALSE(validate_mdp(m).empty());
  m = two_state_chain();
  m.initial_state = 2;
  EXPECT_FALSE(validate_mdp(m).empty());
  m = two_state_chain();
  m.horizon_cap = 0;
  EXPECT_FALSE(validate_mdp(m).empty());
  m = two_state_chain();
  m.transition = {-0.5, 1.5, 0.0, 1.0};
  EXPECT_FALSE(validate_mdp(m).empty());
}

TEST(ValidateMdp, EpisodicNeedsReachableAbsorbingState) {
  TabularMdp m = two_state_chain();
  m.transition = {1.0, 0.0, 0.0, 1.0};  // state 0 loops forever
  const auto report = validate_mdp(m);
  ASSERT_EQ(report.size(), 1u);
  EXPECT_NE(report[0].find("absorbing"), std::string::npos);
  m.episodic = false;
  EXPECT_TRUE(validate_mdp(m).empty());
}

TEST(ValidatePolicy, RowsAndOneHot) {
  Policy p = Policy::uniform(2, 2);
  EXPECT_TRUE(validate_policy(p).empty());
  p.probs[0] = 0.7;
  EXPECT_FALSE(validate_policy(p).empty());
  p = Policy::uniform(2, 2);
  p.deterministic = true;
  EXPECT_FALSE(validate_policy(p).empty());
  EXPECT_TRUE(validate_policy(Policy::from_actions(std::vector<std::size_t>{1, 0}, 2)).empty());
}

TEST(RandomMdp, SameSeedIsBitIdentical) {
  EXPECT_EQ(random_mdp(7, 4, 2, 2, 0.9), random_mdp(7, 4, 2, 2, 0.9));
  EXPECT_NE(random_mdp(7, 4, 2, 2, 0.9), random_mdp(8, 4, 2, 2, 0.9));
}

TEST(RandomMdp, BranchingOneIsDeterministic) {
  const TabularMdp m = random_mdp(3, 5, 3, 1, 0.9);
  for (std::size_t s = 0; s < m.num_states; ++s) {
    for (std::size_t a = 0; a < m.num_actions; ++a) {
      std::size_t ones = 0;
      for (double v : m.row(s, a)) {
        EXPECT_TRUE(v == 0.0 || v == 1.0);
        ones += v == 1.0;
      }
      EXPECT_EQ(ones, 1u);
    }
  }
  EXPECT_TRUE(m.has_deterministic_dynamics());
}

TEST(RandomMdp, OutputsValidateAndRespectBranching) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const std::size_t S = 2 + seed % 5;
    const std::size_t branching = 1 + seed % 2;
    const TabularMdp m = random_mdp(seed, S, 1 + seed % 3, branching, 0.9);
    EXPECT_TRUE(validate_mdp(m).empty()) << seed;
    for (std::size_t s = 0; s < m.num_states; ++s) {
      for (std::size_t a = 0; a < m.num_actions; ++a) {
        std::size_t support = 0;
        for (double v : m.row(s, a)) support += v > 0.0;
        EXPECT_LE(support, branching);
      }
    }
  }
}

TEST(RandomMdp, RejectsBadArguments) {
  EXPECT_THROW(random_mdp(1, 4, 2, 0, 0.9), PreconditionError);
  EXPECT_THROW(random_mdp(1, 4, 2, 5, 0.9), PreconditionError);
}

TEST(RandomMdp, RewardLevelsSnapRewards) {
  RandomMdpOptions o;
  o.reward_levels = 3;
  const TabularMdp m = random_mdp(5, 5, 2, 2, 0.9, o);
  for (double r : m.reward) {
    EXPECT_TRUE(r == 0.0 || r == 0.5 || r == 1.0) << r;
  }
}

TEST(Gridworld, OneByTwoQIsGoalReward) {
  const TabularMdp g = gridworld(2, 1, {1, 0}, 0.0, 1.0, 0.9);
  EXPECT_TRUE(validate_mdp(g).empty());
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    const Trajectory t = rollout(g, Policy::uniform(2, 4), {0, kRight}, rng);
    EXPECT_DOUBLE_EQ(t.discounted_return(g.gamma), 1.0);
    EXPECT_TRUE(t.terminated);
  }
}

TEST(Gridworld, ThreeByThreeShape) {
  const TabularMdp g = gridworld(3, 3, {2, 2}, 0.0, 1.0, 0.9);
  EXPECT_EQ(g.num_states, 9u);
  EXPECT_EQ(g.num_actions, 4u);
  EXPECT_TRUE(validate_mdp(g).empty());
  EXPECT_TRUE(g.is_absorbing(8));
}

TEST(Gridworld, WallsAreNoOpsAndGoalAbsorbs) {
  const TabularMdp g = gridworld(2, 2, {1, 1}, -0.1, 1.0, 0.9, 8);
  EXPECT_EQ(g.p(0, kLeft, 0), 1.0);
  EXPECT_EQ(g.p(0, kUp, 0), 1.0);
  EXPECT_EQ(g.p(0, kDown, 0), 0.0);
  EXPECT_EQ(g.r(0, kLeft), -0.1);
  EXPECT_TRUE(g.is_absorbing(3));
}

TEST(Gridworld, TwoByTwoGreedyReturnMatchesPathEnumeration) {
  const TabularMdp g = gridworld(2, 2, {1, 1}, 0.0, 1.0, 0.9, 8);
  const Policy pi = Policy::from_actions(std::vector<std::size_t>{kRight, kDown, kRight, 0}, 4);
  // Shortest path from (0,0) takes two moves; the reward arrives on the second.
  Rng rng(3);
  const double ret = rollout(g, pi, {0, kRight}, rng).discounted_return(g.gamma);
  const auto law = oracle::return_law(g, pi, g.x_index(0, kRight));
  ASSERT_EQ(law.size(), 1u);
  EXPECT_NEAR(law[0].first, 0.9, 1e-15);
  EXPECT_NEAR(ret, law[0].first, 1e-15);
}

TEST(Gridworld, RejectsDegenerateGrids) {
  EXPECT_THROW(gridworld(0, 3, {0, 0}, 0, 1, 0.9), PreconditionError);
  EXPECT_THROW(gridworld(2, 2, {2, 0}, 0, 1, 0.9), PreconditionError);
}

TEST(EnumeratePolicies, Counts) {
  EXPECT_EQ(enumerate_det_policies(random_mdp(1, 2, 2, 1, 0.9)).size(), 4u);
  TabularMdp one;
  one.num_states = 1;
  one.num_actions = 3;
  one.transition.assign(3, 1.0);
  one.reward.assign(3, 0.0);
  EXPECT_EQ(enumerate_det_policies(one).size(), 3u);
}

TEST(EnumeratePolicies, MatchesDirectProductWithoutDuplicates) {
  const TabularMdp m = random_mdp(2, 3, 2, 1, 0.9);
  const auto policies = enumerate_det_policies(m);
  ASSERT_EQ(policies.size(), 8u);
  std::set<std::vector<double>> seen;
  std::size_t i = 0;
  for (std::size_t a0 = 0; a0 < 2; ++a0) {
    for (std::size_t a1 = 0; a1 < 2; ++a1) {
      for (std::size_t a2 = 0; a2 < 2; ++a2) {
        std::vector<double> table(6, 0.0);
        table[0 * 2 + a0] = table[1 * 2 + a1] = table[2 * 2 + a2] = 1.0;
        EXPECT_EQ(policies[i].probs, table) << "lexicographic position " << i;
        EXPECT_TRUE(policies[i].deterministic);
        seen.insert(policies[i].probs);
        ++i;
      }
    }
  }
  EXPECT_EQ(seen.size(), 8u);
}

TEST(EnumeratePolicies, GuardRefusalNamesCount) {
  const TabularMdp m = random_mdp(1, 4, 3, 1, 0.9);
  try {
    enumerate_det_policies(m, 80);
    FAIL() << "expected refusal";
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("81"), std::string::npos) << e.what();
  }
  EXPECT_EQ(det_policy_count(40, 40), SIZE_MAX);
}

TEST(EnumeratePolicies, EarlyStop) {
  std::size_t calls = 0;
  for_each_det_policy(3, 2, [&](const Policy&) { return ++calls < 3; });
  EXPECT_EQ(calls, 3u);
}

TEST(Rollout, DeterministicCaseIgnoresSeed) {
  const TabularMdp m = random_mdp(4, 5, 2, 1, 0.9);
  const Policy pi = Policy::from_actions(std::vector<std::size_t>{1, 0, 1, 0, 1}, 2);
  Rng r1(1);
  Rng r2(999);
  const Trajectory t1 = rollout(m, pi, {0, 0}, r1);
  const Trajectory t2 = rollout(m, pi, {0, 0}, r2);
  ASSERT_EQ(t1.steps.size(), t2.steps.size());
  for (std::size_t i = 0; i < t1.steps.size(); ++i) {
    EXPECT_EQ(t1.steps[i].state, t2.steps[i].state);
    EXPECT_EQ(t1.steps[i].action, t2.steps[i].action);
  }
}

TEST(Rollout, AbsorbingStartIsOneZeroStep) {
  const TabularMdp c = coin_flip_mdp();
  Rng rng(0);
  const Trajectory t = rollout(c, Policy::uniform(4, 1), {3, 0}, rng);
  ASSERT_EQ(t.steps.size(), 1u);
  EXPECT_EQ(t.steps[0].reward, 0.0);
  EXPECT_TRUE(t.terminated);
}

TEST(Rollout, CoinFlipSuccessorFrequency) {
  const TabularMdp c = coin_flip_mdp();
  const Policy pi = Policy::uniform(4, 1);
  Rng rng(42);
  const int n = 10000;
  int wins = 0;
  for (int i = 0; i < n; ++i) {
    const Trajectory t = rollout(c, pi, {0, 0}, rng);
    ASSERT_EQ(t.steps.size(), 2u);
    wins += t.steps[1].state == 1;
  }
  const double sigma = std::sqrt(n * 0.25);
  EXPECT_LE(std::abs(wins - n / 2.0), 3.0 * sigma);
}

TEST(Rollout, LengthAndReturnBounds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    TabularMdp m = random_mdp(seed, 5, 2, 2, 0.8);
    m.episodic = false;
    m.horizon_cap = 3;
    const Policy pi = Policy::uniform(5, 2);
    Rng rng(seed);
    for (std::size_t x = 0; x < m.num_pairs(); ++x) {
      const Trajectory t = rollout(m, pi, m.pair(x), rng);
      EXPECT_LE(t.steps.size(), m.horizon_cap);
      const double g = t.discounted_return(m.gamma);
      EXPECT_GE(g, m.r_min / (1 - m.gamma) - 1e-12);
      EXPECT_LE(g, m.r_max / (1 - m.gamma) + 1e-12);
    }
  }
}

TEST(Rollout, SameSeedSameTrajectory) {
  const TabularMdp m = random_mdp(9, 6, 2, 3, 0.9);
  const Policy pi = Policy::uniform(6, 2);
  Rng a(5);
  Rng b(5);
  for (int i = 0; i < 20; ++i) {
    const Trajectory ta = rollout(m, pi, {0, 1}, a);
    const Trajectory tb = rollout(m, pi, {0, 1}, b);
    ASSERT_EQ(ta.steps.size(), tb.steps.size());
    for (std::size_t k = 0; k < ta.steps.size(); ++k) EXPECT_EQ(ta.steps[k].state, tb.steps[k].state);
  }
}

TEST(Rng, ForkDependsOnlyOnSeed) {
  Rng a(11);
  Rng b(11);
  a.next_u64();
  EXPECT_EQ(a.fork(3).next_u64(), b.fork(3).next_u64());
  EXPECT_NE(b.fork(3).next_u64(), b.fork(4).next_u64());
}

TEST(Rng, UniformAndBelowRanges) {
  Rng r(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(r.below(7), 7u);
  }
}

TEST(LumpableMdp, PlantedPartitionIsBisimulation) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const LumpableMdp l = random_lumpable_mdp(seed, 3, 2, 2, 2, 0.9);
    EXPECT_TRUE(validate_mdp(l.mdp).empty());
    EXPECT_TRUE(oracle::is_bisimulation(l.mdp, l.block_of_state));
  }
}
