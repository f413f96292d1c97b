#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "zirrel/error.hpp"
#include "zirrel/return_dist.hpp"

using namespace zirrel;

namespace {

TabularMdp zero_reward(std::uint64_t seed) {
  TabularMdp m = random_mdp(seed, 5, 2, 2, 0.9);
  std::fill(m.reward.begin(), m.reward.end(), 0.0);
  return m;
}

BinningConfig unit_bins(std::size_t k) { return BinningConfig{k, 0.0, 1.0}; }

}  // namespace

TEST(PolicyEvalQ, OneByTwoGridGreedy) {
  const TabularMdp g = gridworld(2, 1, {1, 0}, 0.0, 1.0, 0.9);
  const Policy greedy = greedy_policy(g, optimal_q(g));
  const auto q = policy_eval_q(g, greedy);
  EXPECT_NEAR(q[g.x_index(0, kRight)], 1.0, 1e-12);
  EXPECT_EQ(greedy.action(0), static_cast<std::size_t>(kRight));
}

TEST(PolicyEvalQ, ZeroRewardIsZero) {
  for (double v : policy_eval_q(zero_reward(1), Policy::uniform(5, 2))) EXPECT_EQ(v, 0.0);
}

TEST(PolicyEvalQ, CoinFlipRoot) {
  const auto q = policy_eval_q(coin_flip_mdp(0.9, 2), Policy::uniform(4, 2));
  EXPECT_NEAR(q[0], 0.45, 1e-12);
  EXPECT_NEAR(q[1], 0.45, 1e-12);
}

TEST(PolicyEvalQ, MatchesLinearSolve) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    TabularMdp m = random_mdp(seed, 6, 3, 3, 0.95);
    Rng rng(seed);
    const Policy pi = Policy::random(6, 3, rng);
    const auto q = policy_eval_q(m, pi);
    const auto ref = oracle::solve_q(m, pi);
    for (std::size_t x = 0; x < q.size(); ++x) {
      EXPECT_NEAR(q[x], ref[x], 1e-10);
      EXPECT_GE(q[x], m.r_min / (1 - m.gamma) - 1e-12);
      EXPECT_LE(q[x], m.r_max / (1 - m.gamma) + 1e-12);
    }
  }
}

TEST(PolicyEvalQ, NonConvergenceReportsResidual) {
  TabularMdp m = random_mdp(1, 4, 2, 2, 0.99);
  m.episodic = false;
  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t a = 0; a < 2; ++a) {
      for (std::size_t t = 0; t < 4; ++t) m.transition[(s * 2 + a) * 4 + t] = t == s ? 1.0 : 0.0;
      m.reward[s * 2 + a] = 1.0;
    }
  }
  PolicyEvalOptions o;
  o.max_iterations = 3;
  try {
    policy_eval_q(m, Policy::uniform(4, 2), o);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("residual"), std::string::npos) << e.what();
  }
  o.tolerance = 0.0;
  EXPECT_THROW(policy_eval_q(m, Policy::uniform(4, 2), o), PreconditionError);
}

TEST(ExactReturn, DeterministicIsPointMassAtRolloutReturn) {
  const TabularMdp m = random_mdp(5, 5, 2, 1, 0.9);
  const Policy pi = Policy::from_actions(std::vector<std::size_t>{0, 1, 0, 1, 0}, 2);
  Rng rng(0);
  for (std::size_t x = 0; x < m.num_pairs(); ++x) {
    const SupportDistribution d = exact_return_distribution(m, pi, x);
    ASSERT_EQ(d.atoms.size(), 1u);
    EXPECT_EQ(d.atoms[0].prob, 1.0);
    EXPECT_NEAR(d.atoms[0].value, sample_return(m, pi, x, rng), 1e-12);
  }
}

TEST(ExactReturn, CoinFlipAtoms) {
  const SupportDistribution d = exact_return_distribution(coin_flip_mdp(), Policy::uniform(4, 1), 0);
  ASSERT_EQ(d.atoms.size(), 2u);
  EXPECT_NEAR(d.atoms[0].value, 0.0, 1e-15);
  EXPECT_NEAR(d.atoms[0].prob, 0.5, 1e-15);
  EXPECT_NEAR(d.atoms[1].value, 0.9, 1e-15);
  EXPECT_NEAR(d.atoms[1].prob, 0.5, 1e-15);
}

TEST(ExactReturn, MatchesBackwardRecursionAndLinearSolve) {
  EnumerationOptions no_prune;
  no_prune.prune_eps = 0.0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const TabularMdp m = random_mdp(seed, 5, 2, 2, 0.9);
    Rng rng(seed + 100);
    const Policy pi = Policy::random(5, 2, rng);
    const auto table = exact_return_table(m, pi, no_prune);
    const auto q = oracle::solve_q(m, pi);
    for (std::size_t x = 0; x < m.num_pairs(); ++x) {
      const auto ref = oracle::return_law(m, pi, x);
      ASSERT_EQ(table[x].atoms.size(), ref.size()) << "seed " << seed << " x " << x;
      for (std::size_t i = 0; i < ref.size(); ++i) {
        EXPECT_NEAR(table[x].atoms[i].value, ref[i].first, 1e-9);
        EXPECT_NEAR(table[x].atoms[i].prob, ref[i].second, 1e-12);
      }
      EXPECT_NEAR(table[x].total_mass(), 1.0, 1e-9);
      EXPECT_NEAR(table[x].mean(), q[x], 1e-6);
    }
  }
}

TEST(ExactReturn, BudgetRefusalNamesBudget) {
  const TabularMdp g = gridworld(3, 3, {2, 2}, 0.0, 1.0, 0.9, 8);
  EnumerationOptions o;
  o.node_budget = 10;
  try {
    exact_return_distribution(g, Policy::uniform(9, 4), 0, o);
    FAIL();
  } catch (const BudgetExceeded& e) {
    EXPECT_NE(std::string(e.what()).find("10"), std::string::npos);
  }
}

TEST(ExactReturn, PruningConservesMass) {
  const TabularMdp m = random_mdp(8, 6, 2, 3, 0.9);
  EnumerationOptions o;
  o.prune_eps = 0.05;
  for (const auto& d : exact_return_table(m, Policy::uniform(6, 2), o)) {
    EXPECT_NEAR(d.total_mass(), 1.0, 1e-12);
  }
}

TEST(SampleReturn, DeterministicChainIsConstant) {
  const TabularMdp m = random_mdp(6, 4, 1, 1, 0.9);
  const Policy pi = Policy::uniform(4, 1);
  Rng rng(1);
  const double first = sample_return(m, pi, 0, rng);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sample_return(m, pi, 0, rng), first);
}

TEST(SampleReturn, ZeroRewardIsZero) {
  const TabularMdp m = zero_reward(2);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sample_return(m, Policy::uniform(5, 2), i % 10, rng), 0.0);
}

TEST(SampleReturn, CoinFlipMeanWithinThreeSigma) {
  const TabularMdp c = coin_flip_mdp();
  Rng rng(7);
  const int n = 10000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += sample_return(c, Policy::uniform(4, 1), 0, rng);
  const double sigma = 0.45 / std::sqrt(static_cast<double>(n));  // sd of the return is 0.45
  EXPECT_LE(std::abs(sum / n - 0.45), 3.0 * sigma);
}

TEST(SampleReturn, BinFrequenciesPassChiSquare) {
  const TabularMdp m = random_mdp(12, 6, 2, 3, 0.9);
  const Policy pi = Policy::uniform(6, 2);
  const BinningConfig cfg = default_binning(m, 4);
  Rng rng(99);
  for (std::size_t x : {0u, 3u}) {
    const auto z = bin_distribution(exact_return_distribution(m, pi, x), cfg);
    std::vector<double> counts(4, 0.0);
    const int n = 10000;
    for (int i = 0; i < n; ++i) counts[bin_return(sample_return(m, pi, x, rng), cfg) - 1] += 1.0;
    double chi2 = 0.0;
    std::size_t cells = 0;
    for (std::size_t b = 0; b < 4; ++b) {
      const double expected = n * z.probs[b];
      if (expected == 0.0) {
        EXPECT_EQ(counts[b], 0.0);
        continue;
      }
      chi2 += (counts[b] - expected) * (counts[b] - expected) / expected;
      ++cells;
    }
    if (cells > 1) EXPECT_LT(chi2, oracle::chi2_crit_001(static_cast<double>(cells - 1)));
  }
}

TEST(BinReturn, Examples) {
  const BinningConfig cfg = unit_bins(4);
  EXPECT_EQ(bin_return(0.0, cfg), 1u);
  EXPECT_EQ(bin_return(1.0, cfg), 4u);
  EXPECT_EQ(bin_return(0.25, cfg), 2u);
  EXPECT_EQ(bin_return(0.24, cfg), 1u);
}

TEST(BinReturn, ClampToleranceAndRejection) {
  const BinningConfig cfg = unit_bins(4);
  EXPECT_EQ(bin_return(1.0 + 5e-10, cfg), 4u);
  EXPECT_EQ(bin_return(-5e-10, cfg), 1u);
  try {
    bin_return(1.5, cfg);
    FAIL();
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("1.5"), std::string::npos);
  }
  EXPECT_THROW(bin_return(0.5, BinningConfig{0, 0.0, 1.0}), PreconditionError);
  EXPECT_THROW(bin_return(0.5, BinningConfig{2, 1.0, 1.0}), PreconditionError);
}

TEST(BinReturn, MatchesFloorFormula) {
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t k = 1 + rng.below(16);
    const double lo = rng.uniform(-2, 0);
    const double hi = lo + rng.uniform(0.5, 3);
    const BinningConfig cfg{k, lo, hi};
    const double r = rng.uniform(lo, hi);
    const auto expected = oracle::bin_law({{r, 1.0}}, k, lo, hi);
    const std::size_t b = bin_return(r, cfg);
    EXPECT_EQ(expected[b - 1], 1.0);
  }
}

TEST(DefaultBinning, EpisodicReturnRange) {
  const TabularMdp c = coin_flip_mdp(0.9);
  const BinningConfig cfg = default_binning(c, 2);
  EXPECT_EQ(cfg.return_min, 0.0);
  EXPECT_NEAR(cfg.return_max, (1 - std::pow(0.9, 3)) / 0.1, 1e-12);
}

TEST(BinDistribution, Examples) {
  const SupportDistribution point{{{0.0, 1.0}}};
  EXPECT_EQ(bin_distribution(point, unit_bins(3)).probs, (std::vector<double>{1.0, 0.0, 0.0}));
  const SupportDistribution coin{{{0.0, 0.5}, {0.9, 0.5}}};
  EXPECT_EQ(bin_distribution(coin, unit_bins(2)).probs, (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(bin_distribution(coin, unit_bins(1)).probs, (std::vector<double>{1.0}));
}

TEST(BinDistribution, NormalisedOnRandomTables) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const TabularMdp m = random_mdp(seed, 5, 2, 2, 0.9);
    const auto table = bin_table(exact_return_table(m, Policy::uniform(5, 2)), default_binning(m, 8));
    for (const auto& z : table) {
      EXPECT_NEAR(z.total_mass(), 1.0, 1e-9);
      for (double p : z.probs) EXPECT_GE(p, 0.0);
    }
  }
}

TEST(Categorical, DeterministicChainIsOneHot) {
  const TabularMdp m = random_mdp(21, 5, 1, 1, 0.9);
  const Policy pi = Policy::uniform(5, 1);
  const BinningConfig cfg = default_binning(m, 4);
  const auto cat = categorical_bellman(m, pi, cfg);
  const auto exact = bin_table(exact_return_table(m, pi), cfg);
  for (std::size_t x = 0; x < m.num_pairs(); ++x) EXPECT_LE(total_variation(cat[x], exact[x]), 1e-2);
}

TEST(Categorical, CoinFlipHalfHalf) {
  const auto z = categorical_bellman(coin_flip_mdp(), Policy::uniform(4, 1), unit_bins(2));
  EXPECT_LE(total_variation(z[0], BinnedReturnDistribution{{0.5, 0.5}}), 1e-3);
}

TEST(Categorical, MeanWithinProjectionError) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const TabularMdp m = random_mdp(seed, 5, 2, 2, 0.9);
    const Policy pi = Policy::uniform(5, 2);
    const BinningConfig cfg = default_binning(m, 4);
    const CategoricalTable t = categorical_bellman_atoms(m, pi, cfg);
    const auto q = policy_eval_q(m, pi);
    const double range = cfg.return_max - cfg.return_min;
    for (std::size_t x = 0; x < m.num_pairs(); ++x) {
      EXPECT_LE(std::abs(t.mean(x) - q[x]), 2.0 * range / static_cast<double>(t.atom_count()));
    }
  }
}

// A return within one atom spacing of a bin edge is split across the edge by
// the projection, so the comparison runs on a fine grid.
TEST(Categorical, AgreesWithExactOracleInTv) {
  CategoricalOptions fine;
  fine.atom_count = 20001;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const TabularMdp m = random_mdp(seed, 5, 2, 2, 0.9, {0.0, 1.0, seed % 2 ? 0u : 3u});
    Rng rng(seed);
    const Policy pi = Policy::random(5, 2, rng);
    for (std::size_t k : {2u, 4u, 8u}) {
      const BinningConfig cfg = default_binning(m, k);
      const auto cat = categorical_bellman(m, pi, cfg, fine);
      const auto exact = bin_table(exact_return_table(m, pi), cfg);
      for (std::size_t x = 0; x < m.num_pairs(); ++x) {
        EXPECT_LE(total_variation(cat[x], exact[x]), 1e-2) << seed << " K=" << k << " x=" << x;
        EXPECT_NEAR(cat[x].total_mass(), 1.0, 1e-9);
      }
    }
  }
}

TEST(Categorical, TruncatedModeMatchesCappedRollouts) {
  const TabularMdp g = gridworld(3, 3, {2, 2}, 0.0, 1.0, 0.9, 4);
  const Policy pi = Policy::uniform(9, 4);
  const BinningConfig cfg = default_binning(g, 4);
  CategoricalOptions o;
  o.atom_count = 20001;
  o.horizon = HorizonMode::kTruncated;
  const auto cat = categorical_bellman(g, pi, cfg, o);
  const auto exact = bin_table(exact_return_table(g, pi), cfg);
  for (std::size_t x = 0; x < g.num_pairs(); ++x) EXPECT_LE(total_variation(cat[x], exact[x]), 1e-2);
}

TEST(Categorical, Errors) {
  const TabularMdp m = random_mdp(1, 4, 2, 2, 0.9);
  CategoricalOptions o;
  o.atom_count = 1;
  EXPECT_THROW(categorical_bellman(m, Policy::uniform(4, 2), default_binning(m, 2), o),
               PreconditionError);
  TabularMdp loop = m;
  loop.episodic = false;
  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t a = 0; a < 2; ++a) {
      for (std::size_t t = 0; t < 4; ++t) loop.transition[(s * 2 + a) * 4 + t] = t == (s + 1) % 4;
    }
  }
  CategoricalOptions slow;
  slow.max_iterations = 2;
  try {
    categorical_bellman(loop, Policy::uniform(4, 2), default_binning(loop, 2), slow);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("TV"), std::string::npos) << e.what();
  }
}
