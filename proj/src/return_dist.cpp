#include "zirrel/return_dist.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "zirrel/error.hpp"

namespace zirrel {

namespace {

void require_binning(const BinningConfig& cfg) {
  if (cfg.k < 1) throw PreconditionError("binning needs k >= 1");
  if (!(cfg.return_min < cfg.return_max)) {
    throw PreconditionError("binning needs return_min < return_max");
  }
}

// Shared Bellman sweep: q_next(s, a) = R(s, a) + gamma * sum_s' P v(s').
double bellman_backup(const TabularMdp& mdp, std::size_t s, std::size_t a,
                      const std::vector<double>& v) {
  double acc = 0.0;
  const auto row = mdp.row(s, a);
  for (std::size_t t = 0; t < mdp.num_states; ++t) {
    if (row[t] != 0.0) acc += row[t] * v[t];
  }
  return mdp.r(s, a) + mdp.gamma * acc;
}

template <typename StateValue>
std::vector<double> iterate_q(const TabularMdp& mdp, const PolicyEvalOptions& options,
                              StateValue state_value, const char* what) {
  const std::size_t S = mdp.num_states;
  const std::size_t A = mdp.num_actions;
  std::vector<double> q(S * A, 0.0);
  std::vector<double> next(S * A, 0.0);
  std::vector<double> v(S, 0.0);
  const double factor = mdp.gamma / (1.0 - mdp.gamma);
  double residual = 0.0;
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    for (std::size_t s = 0; s < S; ++s) v[s] = state_value(q, s);
    residual = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t a = 0; a < A; ++a) {
        const double value = bellman_backup(mdp, s, a, v);
        residual = std::max(residual, std::abs(value - q[s * A + a]));
        next[s * A + a] = value;
      }
    }
    q.swap(next);
    // ||q - q*|| <= gamma / (1 - gamma) * ||q_k+1 - q_k||.
    if (factor * residual <= options.tolerance) return q;
  }
  std::ostringstream os;
  os << what << " did not converge in " << options.max_iterations
     << " iterations (residual " << residual << ")";
  throw NumericError(os.str());
}

struct Enumerator {
  const TabularMdp& mdp;
  const Policy& policy;
  const std::vector<bool>& absorbing;
  const EnumerationOptions& options;
  std::vector<Atom> atoms;
  std::size_t nodes = 0;

  void visit(std::size_t s, std::size_t a, double ret, double disc, double prob,
             std::size_t steps) {
    if (++nodes > options.node_budget) {
      throw BudgetExceeded("return enumeration exceeded the node budget of " +
                              std::to_string(options.node_budget));
    }
    ret += disc * mdp.r(s, a);
    ++steps;
    if (absorbing[s] || steps >= mdp.horizon_cap) {
      atoms.push_back({ret, prob});
      return;
    }
    const auto row = mdp.row(s, a);
    for (std::size_t t = 0; t < mdp.num_states; ++t) {
      if (row[t] == 0.0) continue;
      const double p_t = prob * row[t];
      if (absorbing[t]) {
        atoms.push_back({ret, p_t});
        continue;
      }
      for (std::size_t b = 0; b < mdp.num_actions; ++b) {
        const double pi = policy.prob(t, b);
        if (pi == 0.0) continue;
        const double p_tb = p_t * pi;
        if (p_tb < options.prune_eps) {
          atoms.push_back({ret, p_tb});
          continue;
        }
        visit(t, b, ret, disc * mdp.gamma, p_tb, steps);
      }
    }
  }
};

void project(std::vector<double>& probs, const std::vector<double>& support, double lo,
             double delta, double value, double mass) {
  const std::size_t m = support.size();
  const double hi = support.back();
  value = std::clamp(value, lo, hi);
  const double pos = (value - lo) / delta;
  const double floor_pos = std::floor(pos);
  auto l = static_cast<std::size_t>(floor_pos);
  if (l >= m - 1) {
    probs[m - 1] += mass;
    return;
  }
  const double frac = pos - floor_pos;
  probs[l] += mass * (1.0 - frac);
  if (frac > 0.0) probs[l + 1] += mass * frac;
}

}  // namespace

double SupportDistribution::mean() const {
  double m = 0.0;
  for (const auto& atom : atoms) m += atom.value * atom.prob;
  return m;
}

double SupportDistribution::total_mass() const {
  double m = 0.0;
  for (const auto& atom : atoms) m += atom.prob;
  return m;
}

double BinnedReturnDistribution::total_mass() const {
  double m = 0.0;
  for (double p : probs) m += p;
  return m;
}

BinningConfig default_binning(const TabularMdp& mdp, std::size_t k) {
  const double scale =
      (1.0 - std::pow(mdp.gamma, static_cast<double>(mdp.horizon_cap))) / (1.0 - mdp.gamma);
  return {k, mdp.r_min * scale, mdp.r_max * scale};
}

std::size_t bin_return(double r, const BinningConfig& cfg) {
  require_binning(cfg);
  const double range = cfg.return_max - cfg.return_min;
  const double slack = kBinClampTol * std::max(1.0, range);
  if (!(r >= cfg.return_min - slack && r <= cfg.return_max + slack)) {
    std::ostringstream os;
    os.precision(17);
    os << "return " << r << " outside binning range [" << cfg.return_min << ", "
       << cfg.return_max << "]";
    throw PreconditionError(os.str());
  }
  if (r <= cfg.return_min) return 1;
  if (r >= cfg.return_max) return cfg.k;
  const double scaled = (r - cfg.return_min) * static_cast<double>(cfg.k) / range;
  const auto idx = static_cast<std::size_t>(std::floor(scaled));
  return std::min(idx + 1, cfg.k);
}

BinnedReturnDistribution bin_distribution(const SupportDistribution& dist,
                                          const BinningConfig& cfg) {
  require_binning(cfg);
  BinnedReturnDistribution out;
  out.probs.assign(cfg.k, 0.0);
  for (const auto& atom : dist.atoms) out.probs[bin_return(atom.value, cfg) - 1] += atom.prob;
  return out;
}

std::vector<double> policy_eval_q(const TabularMdp& mdp, const Policy& policy,
                                  const PolicyEvalOptions& options) {
  require_valid(mdp, policy);
  if (!(options.tolerance > 0.0)) throw PreconditionError("tolerance must be positive");
  const std::size_t A = mdp.num_actions;
  return iterate_q(
      mdp, options,
      [&](const std::vector<double>& q, std::size_t s) {
        double v = 0.0;
        for (std::size_t a = 0; a < A; ++a) v += policy.prob(s, a) * q[s * A + a];
        return v;
      },
      "policy evaluation");
}

std::vector<double> optimal_q(const TabularMdp& mdp, const PolicyEvalOptions& options) {
  require_valid(mdp);
  const std::size_t A = mdp.num_actions;
  return iterate_q(
      mdp, options,
      [&](const std::vector<double>& q, std::size_t s) {
        return *std::max_element(q.begin() + static_cast<std::ptrdiff_t>(s * A),
                                 q.begin() + static_cast<std::ptrdiff_t>((s + 1) * A));
      },
      "value iteration");
}

Policy greedy_policy(const TabularMdp& mdp, const std::vector<double>& q) {
  std::vector<std::size_t> actions(mdp.num_states);
  for (std::size_t s = 0; s < mdp.num_states; ++s) {
    std::size_t best = 0;
    for (std::size_t a = 1; a < mdp.num_actions; ++a) {
      if (q[mdp.x_index(s, a)] > q[mdp.x_index(s, best)]) best = a;
    }
    actions[s] = best;
  }
  return Policy::from_actions(actions, mdp.num_actions);
}

SupportDistribution exact_return_distribution(const TabularMdp& mdp, const Policy& policy,
                                              std::size_t x, const EnumerationOptions& options) {
  require_valid(mdp, policy);
  if (x >= mdp.num_pairs()) throw PreconditionError("state-action index out of range");
  const auto absorbing = absorbing_mask(mdp);
  Enumerator e{mdp, policy, absorbing, options, {}, 0};
  const StateAction start = mdp.pair(x);
  e.visit(start.state, start.action, 0.0, 1.0, 1.0, 0);

  std::stable_sort(e.atoms.begin(), e.atoms.end(),
                   [](const Atom& l, const Atom& r) { return l.value < r.value; });
  SupportDistribution out;
  for (const auto& atom : e.atoms) {
    if (!out.atoms.empty() && out.atoms.back().value == atom.value) {
      out.atoms.back().prob += atom.prob;
    } else {
      out.atoms.push_back(atom);
    }
  }
  return out;
}

std::vector<SupportDistribution> exact_return_table(const TabularMdp& mdp, const Policy& policy,
                                                    const EnumerationOptions& options) {
  std::vector<SupportDistribution> table;
  table.reserve(mdp.num_pairs());
  for (std::size_t x = 0; x < mdp.num_pairs(); ++x) {
    table.push_back(exact_return_distribution(mdp, policy, x, options));
  }
  return table;
}

std::vector<BinnedReturnDistribution> bin_table(const std::vector<SupportDistribution>& table,
                                                const BinningConfig& cfg) {
  std::vector<BinnedReturnDistribution> out;
  out.reserve(table.size());
  for (const auto& dist : table) out.push_back(bin_distribution(dist, cfg));
  return out;
}

double sample_return(const TabularMdp& mdp, const Policy& policy, std::size_t x, Rng& rng) {
  return Simulator(mdp, policy).sample_return(mdp.pair(x), rng);
}

double CategoricalTable::mean(std::size_t x) const {
  const std::size_t m = atom_count();
  double acc = 0.0;
  for (std::size_t j = 0; j < m; ++j) acc += support[j] * probs[x * m + j];
  return acc;
}

CategoricalTable categorical_bellman_atoms(const TabularMdp& mdp, const Policy& policy,
                                           const BinningConfig& cfg,
                                           const CategoricalOptions& options) {
  require_valid(mdp, policy);
  require_binning(cfg);
  if (options.atom_count < 2) throw PreconditionError("atom_count must be at least 2");

  const std::size_t S = mdp.num_states;
  const std::size_t A = mdp.num_actions;
  const std::size_t m = options.atom_count;
  const double lo = cfg.return_min;
  const double delta = (cfg.return_max - cfg.return_min) / static_cast<double>(m - 1);

  CategoricalTable table;
  table.support.resize(m);
  for (std::size_t j = 0; j < m; ++j) table.support[j] = lo + delta * static_cast<double>(j);
  table.support[m - 1] = cfg.return_max;

  const auto absorbing = absorbing_mask(mdp);
  std::vector<double>& eta = table.probs;
  eta.assign(S * A * m, 0.0);
  // One-step law: the immediate reward.
  for (std::size_t x = 0; x < S * A; ++x) {
    const StateAction sa = mdp.pair(x);
    std::vector<double> cell(m, 0.0);
    project(cell, table.support, lo, delta, mdp.r(sa.state, sa.action), 1.0);
    std::copy(cell.begin(), cell.end(), eta.begin() + static_cast<std::ptrdiff_t>(x * m));
  }

  std::vector<double> next(S * A * m);
  std::vector<double> state_law(S * m);
  const std::size_t sweeps =
      options.horizon == HorizonMode::kTruncated ? mdp.horizon_cap - 1 : options.max_iterations;
  double residual = 0.0;
  std::size_t it = 0;
  for (; it < sweeps; ++it) {
    std::fill(state_law.begin(), state_law.end(), 0.0);
    for (std::size_t t = 0; t < S; ++t) {
      for (std::size_t b = 0; b < A; ++b) {
        const double pi = policy.prob(t, b);
        if (pi == 0.0) continue;
        for (std::size_t j = 0; j < m; ++j) state_law[t * m + j] += pi * eta[(t * A + b) * m + j];
      }
    }
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t a = 0; a < A; ++a) {
        std::vector<double> cell(m, 0.0);
        const double r = mdp.r(s, a);
        if (absorbing[s]) {
          project(cell, table.support, lo, delta, 0.0, 1.0);
        } else {
          const auto row = mdp.row(s, a);
          for (std::size_t t = 0; t < S; ++t) {
            if (row[t] == 0.0) continue;
            if (absorbing[t]) {
              project(cell, table.support, lo, delta, r, row[t]);
              continue;
            }
            for (std::size_t j = 0; j < m; ++j) {
              const double w = row[t] * state_law[t * m + j];
              if (w != 0.0) {
                project(cell, table.support, lo, delta, r + mdp.gamma * table.support[j], w);
              }
            }
          }
        }
        std::copy(cell.begin(), cell.end(),
                  next.begin() + static_cast<std::ptrdiff_t>((s * A + a) * m));
      }
    }
    residual = 0.0;
    for (std::size_t x = 0; x < S * A; ++x) {
      double l1 = 0.0;
      for (std::size_t j = 0; j < m; ++j) l1 += std::abs(next[x * m + j] - eta[x * m + j]);
      residual = std::max(residual, 0.5 * l1);
    }
    eta.swap(next);
    if (options.horizon == HorizonMode::kFixedPoint && residual < options.tolerance) {
      ++it;
      break;
    }
  }
  table.iterations = it;
  table.residual = residual;
  if (options.horizon == HorizonMode::kFixedPoint && !(residual < options.tolerance)) {
    std::ostringstream os;
    os << "categorical Bellman iteration did not converge in " << options.max_iterations
       << " sweeps (TV residual " << residual << ")";
    throw NumericError(os.str());
  }
  return table;
}

std::vector<BinnedReturnDistribution> categorical_bellman(const TabularMdp& mdp,
                                                          const Policy& policy,
                                                          const BinningConfig& cfg,
                                                          const CategoricalOptions& options) {
  const CategoricalTable table = categorical_bellman_atoms(mdp, policy, cfg, options);
  const std::size_t m = table.atom_count();
  std::vector<std::size_t> atom_bin(m);
  for (std::size_t j = 0; j < m; ++j) atom_bin[j] = bin_return(table.support[j], cfg) - 1;

  std::vector<BinnedReturnDistribution> out(mdp.num_pairs());
  for (std::size_t x = 0; x < mdp.num_pairs(); ++x) {
    out[x].probs.assign(cfg.k, 0.0);
    for (std::size_t j = 0; j < m; ++j) out[x].probs[atom_bin[j]] += table.probs[x * m + j];
  }
  return out;
}

double total_variation(const BinnedReturnDistribution& a, const BinnedReturnDistribution& b) {
  if (a.probs.size() != b.probs.size()) throw PreconditionError("bin counts differ");
  double l1 = 0.0;
  for (std::size_t k = 0; k < a.probs.size(); ++k) l1 += std::abs(a.probs[k] - b.probs[k]);
  return 0.5 * l1;
}

}  // namespace zirrel
