#include "zirrel/metric_learning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "zirrel/error.hpp"

namespace zirrel {

namespace {

void require_deterministic(const TabularMdp& mdp, const std::vector<Policy>& policies) {
  require_valid(mdp);
  if (!mdp.has_deterministic_dynamics()) {
    throw PreconditionError("metric learning requires deterministic dynamics");
  }
  for (const auto& pi : policies) {
    require_valid(mdp, pi);
    for (std::size_t s = 0; s < pi.num_states; ++s) {
      if (pi.prob(s, pi.action(s)) != 1.0) {
        throw PreconditionError("metric learning requires deterministic policies");
      }
    }
  }
}

}  // namespace

bool returns_equal(double a, double b) { return std::abs(a - b) <= kReturnEqualTol; }

std::vector<VisitRecord> visit_records(const TabularMdp& mdp, const std::vector<Policy>& policies) {
  require_deterministic(mdp, policies);
  std::vector<VisitRecord> out;
  out.reserve(policies.size());
  for (const auto& pi : policies) {
    // Dynamics and policy are deterministic, so the stream is irrelevant.
    Rng rng(0);
    const std::size_t s0 = mdp.initial_state;
    const Trajectory traj = rollout(mdp, pi, {s0, pi.action(s0)}, rng);
    std::vector<double> to_go(traj.steps.size(), 0.0);
    double g = 0.0;
    for (std::size_t t = traj.steps.size(); t-- > 0;) {
      g = traj.steps[t].reward + mdp.gamma * g;
      to_go[t] = g;
    }
    VisitRecord rec;
    rec.visited.assign(mdp.num_pairs(), false);
    rec.first_return.assign(mdp.num_pairs(), 0.0);
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      const std::size_t x = mdp.x_index(traj.steps[t].state, traj.steps[t].action);
      if (rec.visited[x]) {
        rec.revisited = true;
        continue;
      }
      rec.visited[x] = true;
      rec.first_return[x] = to_go[t];
    }
    out.push_back(std::move(rec));
  }
  return out;
}

LabeledPairSet collect_pairs_exact(const TabularMdp& mdp, const std::vector<Policy>& policies) {
  const auto records = visit_records(mdp, policies);
  const std::size_t D = mdp.num_pairs();
  LabeledPairSet set;
  set.provenance = PairProvenance::kExact;
  set.domain_size = D;
  set.tuples.reserve(records.size() * D * D);
  for (const auto& rec : records) {
    set.revisited = set.revisited || rec.revisited;
    for (std::size_t i = 0; i < D; ++i) {
      for (std::size_t j = 0; j < D; ++j) {
        const bool same = rec.visited[i] && rec.visited[j] &&
                          returns_equal(rec.first_return[i], rec.first_return[j]);
        set.tuples.push_back({i, j, same ? 0 : 1});
      }
    }
  }
  return set;
}

LabeledPairSet collect_pairs_visited(const TabularMdp& mdp, const std::vector<Policy>& policies) {
  const auto records = visit_records(mdp, policies);
  const std::size_t D = mdp.num_pairs();
  LabeledPairSet set;
  set.provenance = PairProvenance::kVisited;
  set.domain_size = D;
  for (const auto& rec : records) {
    set.revisited = set.revisited || rec.revisited;
    for (std::size_t i = 0; i < D; ++i) {
      if (!rec.visited[i]) continue;
      for (std::size_t j = 0; j < D; ++j) {
        if (!rec.visited[j]) continue;
        set.tuples.push_back(
            {i, j, returns_equal(rec.first_return[i], rec.first_return[j]) ? 0 : 1});
      }
    }
  }
  return set;
}

bool AbstractionMetric::fully_defined() const {
  return std::all_of(defined.begin(), defined.end(), [](char c) { return c != 0; });
}

AbstractionMetric AbstractionMetric::undefined(std::size_t size) {
  return {size, std::vector<double>(size * size, 0.0), std::vector<char>(size * size, 0)};
}

void AbstractionMetric::set(std::size_t i, std::size_t j, double value) {
  values[i * size + j] = value;
  values[j * size + i] = value;
  defined[i * size + j] = 1;
  defined[j * size + i] = 1;
}

AbstractionMetric closed_form_d1(const TabularMdp& mdp, const std::vector<Policy>& policies) {
  if (policies.empty()) throw PreconditionError("d1 needs at least one policy");
  const auto records = visit_records(mdp, policies);
  const std::size_t D = mdp.num_pairs();
  const double total = static_cast<double>(policies.size());
  AbstractionMetric d = AbstractionMetric::undefined(D);
  for (std::size_t i = 0; i < D; ++i) {
    d.set(i, i, 0.0);
    for (std::size_t j = i + 1; j < D; ++j) {
      std::size_t agree = 0;
      for (const auto& rec : records) {
        if (rec.visited[i] && rec.visited[j] &&
            returns_equal(rec.first_return[i], rec.first_return[j])) {
          ++agree;
        }
      }
      d.set(i, j, 1.0 - static_cast<double>(agree) / total);
    }
  }
  return d;
}

AbstractionMetric closed_form_d2(const TabularMdp& mdp, const std::vector<Policy>& policies) {
  const auto records = visit_records(mdp, policies);
  const std::size_t D = mdp.num_pairs();
  AbstractionMetric d = AbstractionMetric::undefined(D);
  for (std::size_t i = 0; i < D; ++i) {
    for (std::size_t j = i; j < D; ++j) {
      std::size_t co = 0;
      std::size_t differ = 0;
      for (const auto& rec : records) {
        if (!(rec.visited[i] && rec.visited[j])) continue;
        ++co;
        if (!returns_equal(rec.first_return[i], rec.first_return[j])) ++differ;
      }
      if (co > 0) d.set(i, j, static_cast<double>(differ) / static_cast<double>(co));
    }
  }
  return d;
}

AbstractionMetric fit_metric(const LabeledPairSet& pairs) {
  const std::size_t D = pairs.domain_size;
  std::vector<double> count(D * D, 0.0);
  std::vector<double> ones(D * D, 0.0);
  for (const auto& t : pairs.tuples) {
    if (t.xi >= D || t.xj >= D) throw PreconditionError("pair index outside the domain");
    const std::size_t lo = std::min(t.xi, t.xj);
    const std::size_t hi = std::max(t.xi, t.xj);
    count[lo * D + hi] += 1.0;
    ones[lo * D + hi] += t.y;
  }
  AbstractionMetric d = AbstractionMetric::undefined(D);
  for (std::size_t i = 0; i < D; ++i) {
    for (std::size_t j = i; j < D; ++j) {
      const double c = count[i * D + j];
      if (c == 0.0) continue;
      d.set(i, j, i == j ? 0.0 : ones[i * D + j] / c);
    }
  }
  return d;
}

double max_abs_diff(const AbstractionMetric& a, const AbstractionMetric& b) {
  if (a.size != b.size) throw PreconditionError("metrics cover different domains");
  double worst = 0.0;
  for (std::size_t k = 0; k < a.values.size(); ++k) {
    if (a.defined[k] != b.defined[k]) return std::numeric_limits<double>::infinity();
    if (a.defined[k]) worst = std::max(worst, std::abs(a.values[k] - b.values[k]));
  }
  return worst;
}

SemimetricReport check_semimetric(const AbstractionMetric& metric, double tol) {
  SemimetricReport report;
  const std::size_t D = metric.size;
  for (std::size_t i = 0; i < D; ++i) {
    for (std::size_t j = 0; j < D; ++j) {
      if (!metric.is_defined(i, j)) {
        ++report.undefined_entries;
        continue;
      }
      const double v = metric(i, j);
      if (i == j && std::abs(v) > tol) report.identity.push_back({i, i, i, v});
      if (v < -tol || v > 1.0 + tol) report.boundedness.push_back({i, j, j, v});
      if (j > i && metric.is_defined(j, i) && std::abs(v - metric(j, i)) > tol) {
        report.symmetry.push_back({i, j, j, v - metric(j, i)});
      }
    }
  }
  for (std::size_t i = 0; i < D; ++i) {
    for (std::size_t k = 0; k < D; ++k) {
      if (!metric.is_defined(i, k)) continue;
      for (std::size_t j = 0; j < D; ++j) {
        if (!metric.is_defined(i, j) || !metric.is_defined(j, k)) continue;
        const double excess = metric(i, k) - metric(i, j) - metric(j, k);
        if (excess > tol) report.triangle.push_back({i, j, k, excess});
      }
    }
  }
  return report;
}

OrderingReport check_d2_le_d1(const AbstractionMetric& d1, const AbstractionMetric& d2,
                              double tol) {
  if (d1.size != d2.size) throw PreconditionError("metrics cover different domains");
  OrderingReport report;
  const std::size_t D = d1.size;
  for (std::size_t i = 0; i < D; ++i) {
    for (std::size_t j = i; j < D; ++j) {
      if (!d1.is_defined(i, j) || !d2.is_defined(i, j)) continue;
      ++report.pairs_checked;
      const double a = d1(i, j);
      const double b = d2(i, j);
      if (b > a + tol) report.d2_above_d1.push_back({i, j, j, b - a});
      if (std::abs(a) <= tol && b > tol) report.zero_implication.push_back({i, j, j, b});
      if (b >= 1.0 - tol && a < 1.0 - tol) report.one_implication.push_back({i, j, j, a});
    }
  }
  return report;
}

}  // namespace zirrel
