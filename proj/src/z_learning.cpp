#include "zirrel/z_learning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "zirrel/error.hpp"

namespace zirrel {

namespace {

void require_distribution(const std::vector<double>& d, std::size_t size) {
  if (d.size() != size) {
    throw PreconditionError("sampling distribution has " + std::to_string(d.size()) +
                            " entries, expected " + std::to_string(size));
  }
  double total = 0.0;
  for (double p : d) {
    if (!(p >= 0.0)) throw PreconditionError("sampling distribution has a negative entry");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw PreconditionError("sampling distribution sums to " + std::to_string(total));
  }
}

// Counts and positive labels per ordered (x1, x2).
struct PairStats {
  std::size_t domain = 0;
  std::vector<double> count;
  std::vector<double> ones;
  double total_ones = 0.0;
  double n = 0.0;

  PairStats(const ContrastiveDataset& data, std::size_t domain_size)
      : domain(domain_size), count(domain_size * domain_size, 0.0),
        ones(domain_size * domain_size, 0.0) {
    for (const auto& t : data.tuples) {
      if (t.x1 >= domain || t.x2 >= domain) {
        throw PreconditionError("dataset index outside the domain");
      }
      count[t.x1 * domain + t.x2] += 1.0;
      ones[t.x1 * domain + t.x2] += t.y;
      total_ones += t.y;
    }
    n = static_cast<double>(data.tuples.size());
  }

  // Loss of the conditional-mean regressor: (sum y - sum_cells s^2 / c) / n.
  double loss(const std::vector<std::size_t>& labels, std::size_t n_classes,
              std::vector<double>& cell_count, std::vector<double>& cell_ones) const {
    if (n == 0.0) return 0.0;
    cell_count.assign(n_classes * n_classes, 0.0);
    cell_ones.assign(n_classes * n_classes, 0.0);
    for (std::size_t a = 0; a < domain; ++a) {
      const std::size_t row = labels[a] * n_classes;
      for (std::size_t b = 0; b < domain; ++b) {
        const double c = count[a * domain + b];
        if (c == 0.0) continue;
        cell_count[row + labels[b]] += c;
        cell_ones[row + labels[b]] += ones[a * domain + b];
      }
    }
    double explained = 0.0;
    for (std::size_t k = 0; k < cell_count.size(); ++k) {
      if (cell_count[k] > 0.0) explained += cell_ones[k] * cell_ones[k] / cell_count[k];
    }
    return std::max(0.0, (total_ones - explained) / n);
  }
};

std::size_t saturating_pow(std::size_t base, std::size_t exp) {
  std::size_t out = 1;
  for (std::size_t i = 0; i < exp; ++i) {
    if (base != 0 && out > std::numeric_limits<std::size_t>::max() / base) {
      return std::numeric_limits<std::size_t>::max();
    }
    out *= base;
  }
  return out;
}

FitResult finish_fit(const ContrastiveDataset& data, const std::vector<std::size_t>& labels,
                     std::string method) {
  FitResult fit;
  fit.phi = Abstraction::from_labels(labels);
  fit.w = optimal_w_given_phi(fit.phi, data);
  fit.loss = contrastive_loss(fit.phi, fit.w, data);
  fit.method = std::move(method);
  return fit;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

}  // namespace

TabularRegressor TabularRegressor::constant(std::size_t n, double value) {
  return {n, std::vector<double>(n * n, value)};
}

std::vector<double> uniform_distribution(std::size_t size) {
  if (size == 0) throw PreconditionError("uniform distribution over an empty set");
  return std::vector<double>(size, 1.0 / static_cast<double>(size));
}

ContrastiveDataset sample_dataset(const TabularMdp& mdp, const Policy& policy,
                                  const std::vector<double>& sampling_dist, std::size_t n,
                                  const BinningConfig& cfg, Rng& rng) {
  require_valid(mdp, policy);
  require_distribution(sampling_dist, mdp.num_pairs());
  const Simulator sim(mdp, policy);
  ContrastiveDataset data;
  data.sampling_dist = sampling_dist;
  data.domain_size = mdp.num_pairs();
  data.tuples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t x1 = rng.categorical(sampling_dist);
    const std::size_t x2 = rng.categorical(sampling_dist);
    const double r1 = sim.sample_return(mdp.pair(x1), rng);
    const double r2 = sim.sample_return(mdp.pair(x2), rng);
    data.tuples.push_back({x1, x2, bin_return(r1, cfg) != bin_return(r2, cfg) ? 1 : 0});
  }
  return data;
}

ContrastiveDataset sample_dataset_from_table(const std::vector<BinnedReturnDistribution>& table,
                                             const std::vector<double>& sampling_dist,
                                             std::size_t n, Rng& rng) {
  require_distribution(sampling_dist, table.size());
  const auto f = bayes_predictor(table);
  ContrastiveDataset data;
  data.sampling_dist = sampling_dist;
  data.domain_size = table.size();
  data.tuples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t x1 = rng.categorical(sampling_dist);
    const std::size_t x2 = rng.categorical(sampling_dist);
    data.tuples.push_back({x1, x2, rng.bernoulli(f[x1 * table.size() + x2]) ? 1 : 0});
  }
  return data;
}

double contrastive_loss(const Abstraction& phi, const TabularRegressor& w,
                        const ContrastiveDataset& data) {
  if (w.n < phi.n_classes) throw PreconditionError("regressor smaller than the class count");
  if (data.tuples.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& t : data.tuples) {
    if (t.x1 >= phi.size() || t.x2 >= phi.size()) {
      throw PreconditionError("dataset index outside the abstraction domain");
    }
    const double err = w(phi(t.x1), phi(t.x2)) - t.y;
    acc += err * err;
  }
  return acc / static_cast<double>(data.tuples.size());
}

TabularRegressor optimal_w_given_phi(const Abstraction& phi, const ContrastiveDataset& data) {
  const std::size_t N = phi.n_classes;
  std::vector<double> count(N * N, 0.0);
  std::vector<double> ones(N * N, 0.0);
  for (const auto& t : data.tuples) {
    if (t.x1 >= phi.size() || t.x2 >= phi.size()) {
      throw PreconditionError("dataset index outside the abstraction domain");
    }
    const std::size_t cell = phi(t.x1) * N + phi(t.x2);
    count[cell] += 1.0;
    ones[cell] += t.y;
  }
  TabularRegressor w = TabularRegressor::constant(N, 0.5);
  for (std::size_t k = 0; k < N * N; ++k) {
    if (count[k] > 0.0) w.w[k] = ones[k] / count[k];
  }
  return w;
}

FitResult fit_encoder_enumerate(const ContrastiveDataset& data, std::size_t n_classes,
                                std::size_t domain_size, std::size_t guard) {
  if (n_classes == 0) throw PreconditionError("n_classes must be positive");
  if (domain_size == 0) throw PreconditionError("domain_size must be positive");
  const std::size_t space = saturating_pow(n_classes, domain_size);
  if (space > guard) {
    throw PreconditionError("encoder enumeration refused: N^|X| = " +
                            (space == std::numeric_limits<std::size_t>::max()
                                 ? std::string("more than 2^64")
                                 : std::to_string(space)) +
                            " exceeds the guard of " + std::to_string(guard));
  }
  const PairStats stats(data, domain_size);
  std::vector<double> cell_count;
  std::vector<double> cell_ones;

  // Restricted growth strings in lexicographic order.
  std::vector<std::size_t> labels(domain_size, 0);
  std::vector<std::size_t> prefix_max(domain_size, 0);
  std::vector<std::size_t> best;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t candidates = 0;
  const auto consider = [&] {
    ++candidates;
    const std::size_t used = prefix_max[domain_size - 1] + 1;
    const double l = stats.loss(labels, used, cell_count, cell_ones);
    if (l < best_loss - 1e-12) {
      best_loss = l;
      best = labels;
    }
  };
  // labels[0] is always 0; iterate the remaining positions as an odometer.
  while (true) {
    for (std::size_t i = 1; i < domain_size; ++i) {
      prefix_max[i] = std::max(prefix_max[i - 1], labels[i]);
    }
    consider();
    std::size_t pos = domain_size;
    while (pos-- > 1) {
      const std::size_t limit = std::min(prefix_max[pos - 1] + 1, n_classes - 1);
      if (labels[pos] < limit) {
        ++labels[pos];
        std::fill(labels.begin() + static_cast<std::ptrdiff_t>(pos) + 1, labels.end(), 0);
        break;
      }
    }
    if (pos == 0) break;
  }
  FitResult fit = finish_fit(data, best, "enumerate");
  fit.candidates = candidates;
  return fit;
}

FitResult fit_encoder_local_search(const ContrastiveDataset& data, std::size_t n_classes,
                                   std::size_t restarts, std::size_t max_sweeps, Rng& rng) {
  if (n_classes == 0) throw PreconditionError("n_classes must be positive");
  if (restarts == 0) throw PreconditionError("restarts must be positive");
  const std::size_t D = data.domain_size;
  if (D == 0) throw PreconditionError("dataset has an empty domain");
  const PairStats stats(data, D);
  std::vector<double> cell_count;
  std::vector<double> cell_ones;

  std::vector<std::size_t> best;
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> history;
  std::size_t candidates = 0;
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng local = rng.fork(r);
    std::vector<std::size_t> labels(D);
    for (auto& l : labels) l = local.below(n_classes);
    double current = stats.loss(labels, n_classes, cell_count, cell_ones);
    ++candidates;
    std::vector<double> sweeps{current};
    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
      bool improved = false;
      for (std::size_t x = 0; x < D; ++x) {
        const std::size_t original = labels[x];
        for (std::size_t c = 0; c < n_classes; ++c) {
          if (c == original) continue;
          labels[x] = c;
          ++candidates;
          const double l = stats.loss(labels, n_classes, cell_count, cell_ones);
          if (l < current - 1e-12) {
            current = l;
            improved = true;
            break;
          }
          labels[x] = original;
        }
      }
      sweeps.push_back(current);
      if (!improved) break;
    }
    history.push_back(std::move(sweeps));
    if (current < best_loss - 1e-12) {
      best_loss = current;
      best = labels;
    }
  }
  FitResult fit = finish_fit(data, best, "local_search");
  fit.candidates = candidates;
  fit.sweep_losses = std::move(history);
  return fit;
}

double theorem_bound_formula(double n, double n_classes, double log_phi_card, double delta) {
  const double N = n_classes;
  const double inner = 3.0 + 4.0 * N * N * std::log(n) + 4.0 * log_phi_card +
                       4.0 * std::log(2.0 / delta);
  return std::sqrt(8.0 * N / n * inner);
}

double theorem_bound_rhs(const BoundInputs& b) {
  if (b.n < 1) throw PreconditionError("bound needs n >= 1");
  if (b.n_classes < 1) throw PreconditionError("bound needs N >= 1");
  if (!(b.delta > 0.0 && b.delta < 1.0)) throw PreconditionError("delta must lie in (0, 1)");
  const double log_phi = b.log_phi_card.value_or(static_cast<double>(b.domain_size) *
                                                 std::log(static_cast<double>(b.n_classes)));
  return theorem_bound_formula(static_cast<double>(b.n), static_cast<double>(b.n_classes), log_phi,
                               b.delta);
}

double theorem_lhs_exact(const Abstraction& phi_hat,
                         const std::vector<BinnedReturnDistribution>& table,
                         const std::vector<double>& sampling_dist, std::size_t x_probe) {
  const std::size_t D = table.size();
  if (phi_hat.size() != D) throw PreconditionError("abstraction and table sizes differ");
  require_distribution(sampling_dist, D);
  if (x_probe >= D) throw PreconditionError("probe index out of range");
  // Project every z(x) onto z(x') once.
  std::vector<double> proj(D, 0.0);
  const auto& probe = table[x_probe].probs;
  for (std::size_t x = 0; x < D; ++x) {
    for (std::size_t k = 0; k < probe.size(); ++k) proj[x] += probe[k] * table[x].probs[k];
  }
  double acc = 0.0;
  for (std::size_t a = 0; a < D; ++a) {
    for (std::size_t b = 0; b < D; ++b) {
      if (phi_hat(a) != phi_hat(b)) continue;
      acc += sampling_dist[a] * sampling_dist[b] * std::abs(proj[a] - proj[b]);
    }
  }
  return acc;
}

std::vector<double> bayes_predictor(const std::vector<BinnedReturnDistribution>& table) {
  const std::size_t D = table.size();
  std::vector<double> f(D * D, 0.0);
  for (std::size_t a = 0; a < D; ++a) {
    for (std::size_t b = 0; b < D; ++b) {
      double dot = 0.0;
      for (std::size_t k = 0; k < table[a].probs.size(); ++k) {
        dot += table[a].probs[k] * table[b].probs[k];
      }
      f[a * D + b] = std::clamp(1.0 - dot, 0.0, 1.0);
    }
  }
  return f;
}

double max_same_class_l1(const Abstraction& phi,
                         const std::vector<BinnedReturnDistribution>& table) {
  if (phi.size() != table.size()) throw PreconditionError("abstraction and table sizes differ");
  double worst = 0.0;
  for (std::size_t a = 0; a < table.size(); ++a) {
    for (std::size_t b = a + 1; b < table.size(); ++b) {
      if (phi(a) != phi(b)) continue;
      double l1 = 0.0;
      for (std::size_t k = 0; k < table[a].probs.size(); ++k) {
        l1 += std::abs(table[a].probs[k] - table[b].probs[k]);
      }
      worst = std::max(worst, l1);
    }
  }
  return worst;
}

ContrastiveDataset sweep_dataset(const TabularMdp& mdp, const Policy& policy,
                                 const BinningConfig& cfg, const std::vector<double>& sampling_dist,
                                 std::size_t n, std::uint64_t seed) {
  Rng rng(mix_seed(seed, n));
  return sample_dataset(mdp, policy, sampling_dist, n, cfg, rng);
}

ZlearnSweep run_zlearn_sweep(const TabularMdp& mdp, const Policy& policy, const BinningConfig& cfg,
                             const ZlearnRunConfig& run) {
  require_valid(mdp, policy);
  if (run.n_classes == 0) throw PreconditionError("n_classes must be positive");
  ZlearnSweep sweep;
  sweep.table = bin_table(exact_return_table(mdp, policy), cfg);
  sweep.sampling_dist =
      run.sampling_dist.empty() ? uniform_distribution(mdp.num_pairs()) : run.sampling_dist;
  require_distribution(sweep.sampling_dist, mdp.num_pairs());
  sweep.oracle_n_classes = zpi_irrelevance_oracle(sweep.table).n_classes;
  if (run.n_classes < sweep.oracle_n_classes) {
    std::ostringstream os;
    os << "realizability requires n_classes >= the oracle class count " << sweep.oracle_n_classes
       << ", got " << run.n_classes;
    throw PreconditionError(os.str());
  }
  const bool enumerate =
      run.method == FitMethod::kEnumerate ||
      (run.method == FitMethod::kAuto &&
       saturating_pow(run.n_classes, mdp.num_pairs()) <= kDefaultEnumerationGuard / 100);
  for (std::size_t n : run.n_schedule) {
    if (n == 0) throw PreconditionError("n_schedule entries must be positive");
    for (std::uint64_t seed : run.seeds) {
      const ContrastiveDataset data = sweep_dataset(mdp, policy, cfg, sweep.sampling_dist, n, seed);
      Rng search = Rng(mix_seed(seed, n)).fork(0x5ea7c4);
      FitResult fit = enumerate
                          ? fit_encoder_enumerate(data, run.n_classes, mdp.num_pairs())
                          : fit_encoder_local_search(data, run.n_classes, run.restarts,
                                                     run.max_sweeps, search);
      sweep.fits.push_back({n, seed, std::move(fit)});
    }
  }
  return sweep;
}

CorollaryReport corollary_report(const ZlearnSweep& sweep, const ZlearnRunConfig& run) {
  CorollaryReport report;
  report.oracle_n_classes = sweep.oracle_n_classes;
  report.n_schedule = run.n_schedule;
  for (const auto& f : sweep.fits) {
    report.rows.push_back(
        {f.n, f.seed, max_same_class_l1(f.fit.phi, sweep.table), f.fit.loss, f.fit.phi.n_classes});
  }
  for (std::size_t n : run.n_schedule) {
    std::vector<double> stats;
    for (const auto& row : report.rows) {
      if (row.n == n) stats.push_back(row.statistic);
    }
    report.medians.push_back(median(stats));
  }
  report.non_increasing = true;
  for (std::size_t i = 1; i < report.medians.size(); ++i) {
    if (report.medians[i] > report.medians[i - 1] + 1e-12) report.non_increasing = false;
  }
  report.converged = !report.medians.empty() && report.medians.back() <= run.corollary_tol;
  return report;
}

CorollaryReport verify_corollary(const TabularMdp& mdp, const Policy& policy,
                                 const BinningConfig& cfg, const ZlearnRunConfig& run) {
  return corollary_report(run_zlearn_sweep(mdp, policy, cfg, run), run);
}

std::vector<AuditRow> theorem_audit(const ZlearnSweep& sweep, const ZlearnRunConfig& run) {
  std::vector<AuditRow> rows;
  const std::size_t D = sweep.table.size();
  for (const auto& f : sweep.fits) {
    BoundInputs b;
    b.n = f.n;
    b.n_classes = run.n_classes;
    b.log_phi_card = run.log_phi_card;
    b.domain_size = D;
    b.delta = run.delta;
    const double rhs = theorem_bound_rhs(b);
    for (std::size_t x = 0; x < D; ++x) {
      const double lhs = theorem_lhs_exact(f.fit.phi, sweep.table, sweep.sampling_dist, x);
      rows.push_back({f.n, f.seed, x, lhs, rhs, lhs <= rhs});
    }
  }
  return rows;
}

}  // namespace zirrel
