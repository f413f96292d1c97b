#pragma once

#include <cstddef>
#include <vector>

#include "zirrel/mdp.hpp"

namespace zirrel {

struct Atom {
  double value = 0.0;
  double prob = 0.0;
};

/// Discrete return law: atoms sorted by value, distinct values.
struct SupportDistribution {
  std::vector<Atom> atoms;

  double mean() const;
  double total_mass() const;
};

/// K-bin probability vector; probs[k - 1] holds bin k.
struct BinnedReturnDistribution {
  std::vector<double> probs;

  double total_mass() const;
};

/// Equal-width binning of the return range [return_min, return_max].
struct BinningConfig {
  std::size_t k = 1;
  double return_min = 0.0;
  double return_max = 1.0;

  double width() const { return (return_max - return_min) / static_cast<double>(k); }
};

/// Return bounds implied by per-step rewards over horizon_cap steps:
/// [r_min, r_max] * (1 - gamma^T) / (1 - gamma).
BinningConfig default_binning(const TabularMdp& mdp, std::size_t k);

inline constexpr double kBinClampTol = 1e-9;

/// 1-based bin: 1 + floor((r - lo) * K / (hi - lo)), with r = hi mapped to K.
/// Returns within kBinClampTol of the bounds are clamped; further out throws.
std::size_t bin_return(double r, const BinningConfig& cfg);

BinnedReturnDistribution bin_distribution(const SupportDistribution& dist, const BinningConfig& cfg);

struct PolicyEvalOptions {
  /// Sup-norm distance to the fixed point guaranteed at exit.
  double tolerance = 1e-12;
  std::size_t max_iterations = 1'000'000;
};

/// Q^pi over all x, by iterating the Bellman expectation operator.
/// Throws NumericError if the iteration cap is hit.
std::vector<double> policy_eval_q(const TabularMdp& mdp, const Policy& policy,
                                  const PolicyEvalOptions& options = {});

/// Q* by value iteration.
std::vector<double> optimal_q(const TabularMdp& mdp, const PolicyEvalOptions& options = {});

/// Deterministic policy choosing the lowest-index maximiser of q.
Policy greedy_policy(const TabularMdp& mdp, const std::vector<double>& q);

struct EnumerationOptions {
  /// Branches whose path probability drops below this are truncated, keeping
  /// their accumulated return and mass.
  double prune_eps = 1e-12;
  std::size_t node_budget = 10'000'000;
};

/// Brute-force law of the discounted return from x, enumerating every
/// branch with the same stopping rule as Simulator::rollout.
/// Throws PreconditionError when the node budget is exceeded.
SupportDistribution exact_return_distribution(const TabularMdp& mdp, const Policy& policy,
                                              std::size_t x, const EnumerationOptions& options = {});

std::vector<SupportDistribution> exact_return_table(const TabularMdp& mdp, const Policy& policy,
                                                    const EnumerationOptions& options = {});

std::vector<BinnedReturnDistribution> bin_table(const std::vector<SupportDistribution>& table,
                                                const BinningConfig& cfg);

double sample_return(const TabularMdp& mdp, const Policy& policy, std::size_t x, Rng& rng);

enum class HorizonMode {
  /// Iterate to the fixed point of the operator (infinite horizon).
  kFixedPoint,
  /// Apply the operator exactly horizon_cap - 1 times from the one-step law,
  /// matching rollouts truncated at horizon_cap.
  kTruncated,
};

struct CategoricalOptions {
  std::size_t atom_count = 201;
  std::size_t max_iterations = 10'000;
  /// Stop once the largest total-variation change over x falls below this.
  double tolerance = 1e-12;
  HorizonMode horizon = HorizonMode::kFixedPoint;
};

/// Categorical return laws on a fixed atom grid spanning the binning range.
struct CategoricalTable {
  std::vector<double> support;
  /// probs[x * atom_count + j]
  std::vector<double> probs;
  std::size_t iterations = 0;
  double residual = 0.0;

  std::size_t atom_count() const { return support.size(); }
  double mean(std::size_t x) const;
};

/// Distributional Bellman iteration with the linear-interpolation (C51)
/// projection. Throws NumericError with the TV residual on non-convergence.
CategoricalTable categorical_bellman_atoms(const TabularMdp& mdp, const Policy& policy,
                                           const BinningConfig& cfg,
                                           const CategoricalOptions& options = {});

/// categorical_bellman_atoms followed by projection of each atom onto its bin.
std::vector<BinnedReturnDistribution> categorical_bellman(const TabularMdp& mdp,
                                                          const Policy& policy,
                                                          const BinningConfig& cfg,
                                                          const CategoricalOptions& options = {});

double total_variation(const BinnedReturnDistribution& a, const BinnedReturnDistribution& b);

}  // namespace zirrel
