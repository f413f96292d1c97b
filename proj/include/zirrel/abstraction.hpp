#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zirrel/mdp.hpp"
#include "zirrel/return_dist.hpp"

namespace zirrel {

/// Map from x-indices to classes [0, n_classes) with every class non-empty.
struct Abstraction {
  std::vector<std::size_t> assignment;
  std::size_t n_classes = 0;

  std::size_t size() const { return assignment.size(); }
  std::size_t operator()(std::size_t x) const { return assignment[x]; }

  /// Relabels arbitrary labels to 0, 1, ... in order of first occurrence.
  static Abstraction from_labels(std::span<const std::size_t> labels);
  static Abstraction identity(std::size_t size);
  static Abstraction constant(std::size_t size);

  bool operator==(const Abstraction&) const = default;
};

/// Partition of states into blocks [0, n_blocks), labelled by first occurrence.
struct StatePartition {
  std::vector<std::size_t> assignment;
  std::size_t n_blocks = 0;
  /// Refinement rounds needed to reach the fixpoint.
  std::size_t rounds = 0;

  static StatePartition from_labels(std::span<const std::size_t> labels);
  static StatePartition identity(std::size_t num_states);

  bool operator==(const StatePartition& other) const {
    return assignment == other.assignment && n_blocks == other.n_blocks;
  }
};

/// Groups x whose binned vectors lie within `tol` (sup-norm) of the first-seen
/// member of a class, scanning x in ascending order.
Abstraction zpi_irrelevance_oracle(const std::vector<BinnedReturnDistribution>& table,
                                   double tol = 1e-9);

/// Same grouping on the unbinned laws: two laws match when their atoms pair
/// up with values and masses within `tol`. Stands in for the K -> infinity
/// limit of the binned oracle.
Abstraction support_irrelevance_oracle(const std::vector<SupportDistribution>& table,
                                       double tol = 1e-9);

/// True iff equal classes under `fine` imply equal classes under `coarse`.
bool is_finer(const Abstraction& fine, const Abstraction& coarse);

/// Coarsest partition with equal per-action rewards and equal per-action
/// block transition masses, by refinement from the reward partition.
StatePartition coarsest_bisimulation(const TabularMdp& mdp, double tol = 1e-9);

/// Coarsest partition with equal policy-averaged rewards and equal
/// policy-averaged block transition masses.
StatePartition pi_bisimulation(const TabularMdp& mdp, const Policy& policy, double tol = 1e-9);

/// (s, a) -> (block(s), a), compacted.
Abstraction lift_bisim_to_state_action(const StatePartition& partition, std::size_t num_actions);

/// Policy rows agree within 1e-12 across every block.
bool is_block_constant(const Policy& policy, const StatePartition& partition);

struct ZpiViolation {
  std::size_t state1 = 0;
  std::size_t state2 = 0;
  std::size_t action = 0;
  /// Sup-norm gap between the two binned vectors.
  double gap = 0.0;
};

struct ZpiReport {
  std::vector<ZpiViolation> violations;
  std::size_t pairs_checked = 0;

  bool ok() const { return violations.empty(); }
};

/// Checks that states sharing a block have equal binned return laws under
/// every action, using exact enumeration. Throws PreconditionError if the
/// policy is not constant within blocks.
ZpiReport check_bisim_induces_zpi(const TabularMdp& mdp, const StatePartition& partition,
                                  const Policy& policy, const BinningConfig& cfg,
                                  double tol = 1e-9);

struct AbstractQ {
  /// Q of each class, taken from its lowest-index member.
  std::vector<double> class_q;
  double max_error = 0.0;
  double bound = 0.0;

  bool within_bound(double tol = 1e-9) const { return max_error <= bound + tol; }
};

AbstractQ construct_q_from_abstraction(const Abstraction& phi, std::span<const double> q_values,
                                       double binning_width);

/// First deterministic policy, in enumeration order, with
/// |Q(x) - Q(x_bar)| > tol.
std::optional<Policy> find_distinguishing_det_policy(const TabularMdp& mdp, std::size_t x,
                                                     std::size_t x_bar, double tol = 1e-9,
                                                     std::size_t guard = kDefaultPolicyGuard);

struct Comparison {
  bool finer = false;
  bool coarser = false;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
};

Comparison compare(const Abstraction& phi1, const Abstraction& phi2);

}  // namespace zirrel
