#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "zirrel/abstraction.hpp"
#include "zirrel/mdp.hpp"
#include "zirrel/return_dist.hpp"
#include "zirrel/rng.hpp"

namespace zirrel {

struct ContrastiveTuple {
  std::size_t x1 = 0;
  std::size_t x2 = 0;
  /// 1 when the two sampled returns land in different bins.
  int y = 0;

  bool operator==(const ContrastiveTuple&) const = default;
};

struct ContrastiveDataset {
  std::vector<ContrastiveTuple> tuples;
  std::vector<double> sampling_dist;
  std::size_t domain_size = 0;
};

/// N x N table of predictions in [0, 1], row-major.
struct TabularRegressor {
  std::size_t n = 0;
  std::vector<double> w;

  double operator()(std::size_t i, std::size_t j) const { return w[i * n + j]; }
  static TabularRegressor constant(std::size_t n, double value);
};

std::vector<double> uniform_distribution(std::size_t size);

/// Draws x1, x2 i.i.d. from `sampling_dist`, one rollout return for each, and
/// labels the pair by bin disagreement.
ContrastiveDataset sample_dataset(const TabularMdp& mdp, const Policy& policy,
                                  const std::vector<double>& sampling_dist, std::size_t n,
                                  const BinningConfig& cfg, Rng& rng);

/// Labels drawn directly as Bernoulli(f*(x1, x2)) from a binned table.
ContrastiveDataset sample_dataset_from_table(const std::vector<BinnedReturnDistribution>& table,
                                             const std::vector<double>& sampling_dist,
                                             std::size_t n, Rng& rng);

/// Mean of (w(phi(x1), phi(x2)) - y)^2 over the tuples; 0 for an empty set.
double contrastive_loss(const Abstraction& phi, const TabularRegressor& w,
                        const ContrastiveDataset& data);

/// Conditional mean label per cell; cells without data get 0.5.
TabularRegressor optimal_w_given_phi(const Abstraction& phi, const ContrastiveDataset& data);

struct FitResult {
  Abstraction phi;
  TabularRegressor w;
  double loss = 0.0;
  std::string method;
  std::size_t candidates = 0;
  /// Loss after each sweep, one list per restart (local search only).
  std::vector<std::vector<double>> sweep_losses;
};

inline constexpr std::size_t kDefaultEnumerationGuard = 10'000'000;

/// Global minimiser over every labelling with at most n_classes classes, one
/// candidate per relabelling orbit. Ties keep the lexicographically smallest
/// canonical assignment.
FitResult fit_encoder_enumerate(const ContrastiveDataset& data, std::size_t n_classes,
                                std::size_t domain_size,
                                std::size_t guard = kDefaultEnumerationGuard);

/// Hill climbing over single-x reassignments with first-improvement sweeps in
/// ascending x order; keeps the best of `restarts` random starts.
FitResult fit_encoder_local_search(const ContrastiveDataset& data, std::size_t n_classes,
                                   std::size_t restarts, std::size_t max_sweeps, Rng& rng);

struct BoundInputs {
  std::size_t n = 1;
  std::size_t n_classes = 1;
  /// ln |Phi_N|; when unset, domain_size * ln N.
  std::optional<double> log_phi_card;
  std::size_t domain_size = 1;
  double delta = 0.1;
};

/// sqrt(8N/n * (3 + 4 N^2 ln n + 4 ln|Phi_N| + 4 ln(2/delta))) without
/// range checks on delta.
double theorem_bound_formula(double n, double n_classes, double log_phi_card, double delta);

/// Checks the inputs, then evaluates theorem_bound_formula.
double theorem_bound_rhs(const BoundInputs& b);

/// E_{x1, x2 ~ d}[ 1[phi(x1) = phi(x2)] |z(x')^T (z(x1) - z(x2))| ] by exact
/// double sum.
double theorem_lhs_exact(const Abstraction& phi_hat,
                         const std::vector<BinnedReturnDistribution>& table,
                         const std::vector<double>& sampling_dist, std::size_t x_probe);

/// f*(x1, x2) = 1 - z(x1)^T z(x2), row-major |X| x |X|.
std::vector<double> bayes_predictor(const std::vector<BinnedReturnDistribution>& table);

/// Largest ||z(x1) - z(x2)||_1 over pairs sharing a class.
double max_same_class_l1(const Abstraction& phi,
                         const std::vector<BinnedReturnDistribution>& table);

enum class FitMethod { kAuto, kEnumerate, kLocalSearch };

struct ZlearnRunConfig {
  std::size_t n_classes = 2;
  std::vector<std::size_t> n_schedule{100, 1000, 10000};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  double delta = 0.1;
  std::optional<double> log_phi_card;
  /// Empty selects the uniform distribution over x.
  std::vector<double> sampling_dist;
  FitMethod method = FitMethod::kAuto;
  std::size_t restarts = 20;
  std::size_t max_sweeps = 100;
  double corollary_tol = 0.05;
};

struct SweepFit {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  FitResult fit;
};

struct ZlearnSweep {
  std::vector<BinnedReturnDistribution> table;
  std::vector<double> sampling_dist;
  /// Class count of the exact oracle abstraction.
  std::size_t oracle_n_classes = 0;
  std::vector<SweepFit> fits;
};

/// The dataset a sweep draws for (n, seed).
ContrastiveDataset sweep_dataset(const TabularMdp& mdp, const Policy& policy,
                                 const BinningConfig& cfg, const std::vector<double>& sampling_dist,
                                 std::size_t n, std::uint64_t seed);

/// Fits one encoder per (n, seed) on freshly sampled rollout data. Throws
/// PreconditionError when n_classes is below the oracle class count.
ZlearnSweep run_zlearn_sweep(const TabularMdp& mdp, const Policy& policy, const BinningConfig& cfg,
                             const ZlearnRunConfig& run);

struct CorollaryRow {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double statistic = 0.0;
  double loss = 0.0;
  std::size_t classes_used = 0;
};

struct CorollaryReport {
  std::vector<CorollaryRow> rows;
  std::vector<std::size_t> n_schedule;
  /// Median statistic per schedule entry.
  std::vector<double> medians;
  bool non_increasing = false;
  bool converged = false;
  std::size_t oracle_n_classes = 0;
};

CorollaryReport corollary_report(const ZlearnSweep& sweep, const ZlearnRunConfig& run);

CorollaryReport verify_corollary(const TabularMdp& mdp, const Policy& policy,
                                 const BinningConfig& cfg, const ZlearnRunConfig& run);

struct AuditRow {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::size_t x_probe = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  bool satisfied = false;
};

/// One row per (fit, x') comparing the exact left side with the bound.
std::vector<AuditRow> theorem_audit(const ZlearnSweep& sweep, const ZlearnRunConfig& run);

}  // namespace zirrel
