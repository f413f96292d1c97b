#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "zirrel/mdp.hpp"

namespace zirrel {

/// Returns compare equal when they differ by at most this much.
inline constexpr double kReturnEqualTol = 1e-9;

bool returns_equal(double a, double b);

/// What one deterministic policy's rollout from the initial state visits.
struct VisitRecord {
  std::vector<bool> visited;
  /// Discounted return from the first visit of each x; 0 where unvisited.
  std::vector<double> first_return;
  /// Some x was visited more than once.
  bool revisited = false;
};

/// Rolls each policy out once from initial_state. Throws PreconditionError
/// on stochastic dynamics or a non-deterministic policy.
std::vector<VisitRecord> visit_records(const TabularMdp& mdp, const std::vector<Policy>& policies);

struct LabeledPair {
  std::size_t xi = 0;
  std::size_t xj = 0;
  int y = 0;
};

enum class PairProvenance { kExact, kVisited };

struct LabeledPairSet {
  std::vector<LabeledPair> tuples;
  PairProvenance provenance = PairProvenance::kExact;
  std::size_t domain_size = 0;
  bool revisited = false;
};

/// Every ordered pair of x per policy, labelled 0 only when both were
/// visited with equal returns.
LabeledPairSet collect_pairs_exact(const TabularMdp& mdp, const std::vector<Policy>& policies);

/// Ordered pairs of co-visited x per policy, labelled 1 when their returns
/// differ.
LabeledPairSet collect_pairs_visited(const TabularMdp& mdp, const std::vector<Policy>& policies);

/// Symmetric table over x with a definedness mask.
struct AbstractionMetric {
  std::size_t size = 0;
  std::vector<double> values;
  std::vector<char> defined;

  double operator()(std::size_t i, std::size_t j) const { return values[i * size + j]; }
  bool is_defined(std::size_t i, std::size_t j) const { return defined[i * size + j] != 0; }
  bool fully_defined() const;

  static AbstractionMetric undefined(std::size_t size);
  void set(std::size_t i, std::size_t j, double value);
};

/// 1 - (policies co-visiting with equal returns) / |policies| off the
/// diagonal, 0 on it.
AbstractionMetric closed_form_d1(const TabularMdp& mdp, const std::vector<Policy>& policies);

/// (co-visits with unequal returns) / (co-visits); undefined without a
/// co-visit. The diagonal is 0 for x visited by some policy.
AbstractionMetric closed_form_d2(const TabularMdp& mdp, const std::vector<Policy>& policies);

/// Per unordered pair, the mean label that minimises the cross-entropy.
/// Defined diagonal entries are pinned to 0; pairs that never appear stay
/// undefined.
AbstractionMetric fit_metric(const LabeledPairSet& pairs);

/// Largest |a - b| over entries defined in both; +inf when the masks differ.
double max_abs_diff(const AbstractionMetric& a, const AbstractionMetric& b);

struct MetricViolation {
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t k = 0;
  double value = 0.0;
};

struct SemimetricReport {
  std::vector<MetricViolation> identity;
  std::vector<MetricViolation> symmetry;
  /// d(i, k) > d(i, j) + d(j, k); `value` holds the excess.
  std::vector<MetricViolation> triangle;
  std::vector<MetricViolation> boundedness;
  std::size_t undefined_entries = 0;

  bool ok() const {
    return identity.empty() && symmetry.empty() && triangle.empty() && boundedness.empty();
  }
};

/// Audits the four axioms over defined entries and triples.
SemimetricReport check_semimetric(const AbstractionMetric& metric, double tol = 1e-12);

struct OrderingReport {
  /// d2 > d1.
  std::vector<MetricViolation> d2_above_d1;
  /// d1 = 0 but d2 > 0.
  std::vector<MetricViolation> zero_implication;
  /// d2 = 1 but d1 < 1.
  std::vector<MetricViolation> one_implication;
  std::size_t pairs_checked = 0;

  bool ok() const {
    return d2_above_d1.empty() && zero_implication.empty() && one_implication.empty();
  }
};

OrderingReport check_d2_le_d1(const AbstractionMetric& d1, const AbstractionMetric& d2,
                              double tol = 1e-12);

}  // namespace zirrel
