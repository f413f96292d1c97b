#include "zirrel/abstraction.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "zirrel/error.hpp"

namespace zirrel {

namespace {

std::vector<std::size_t> compact(std::span<const std::size_t> labels, std::size_t& count) {
  std::unordered_map<std::size_t, std::size_t> relabel;
  std::vector<std::size_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = relabel.try_emplace(labels[i], relabel.size());
    out[i] = it->second;
  }
  count = relabel.size();
  return out;
}

double sup_gap(const std::vector<double>& a, const std::vector<double>& b) {
  double gap = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) gap = std::max(gap, std::abs(a[i] - b[i]));
  return gap;
}

// Assigns each item to the first earlier representative it matches.
template <typename Match>
std::vector<std::size_t> group_by_representative(std::size_t n, Match match) {
  std::vector<std::size_t> reps;
  std::vector<std::size_t> label(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (; c < reps.size(); ++c) {
      if (match(reps[c], i)) break;
    }
    if (c == reps.size()) reps.push_back(i);
    label[i] = c;
  }
  return label;
}

// Splits blocks by signature until stable. signature(s, blocks) must already
// include the state's current block implicitly through the grouping below.
template <typename Signature>
StatePartition refine(std::size_t num_states, std::vector<std::size_t> initial, double tol,
                      Signature signature) {
  StatePartition part = StatePartition::from_labels(initial);
  for (std::size_t round = 1;; ++round) {
    std::vector<std::vector<double>> sig(num_states);
    for (std::size_t s = 0; s < num_states; ++s) sig[s] = signature(s, part);
    const auto labels = group_by_representative(num_states, [&](std::size_t r, std::size_t s) {
      return part.assignment[r] == part.assignment[s] && sup_gap(sig[r], sig[s]) <= tol;
    });
    StatePartition next = StatePartition::from_labels(labels);
    if (next.n_blocks == part.n_blocks) {
      part.rounds = round;
      return part;
    }
    part = std::move(next);
  }
}

std::vector<double> block_masses(std::span<const double> row, const StatePartition& part) {
  std::vector<double> mass(part.n_blocks, 0.0);
  for (std::size_t t = 0; t < row.size(); ++t) mass[part.assignment[t]] += row[t];
  return mass;
}

}  // namespace

Abstraction Abstraction::from_labels(std::span<const std::size_t> labels) {
  Abstraction phi;
  phi.assignment = compact(labels, phi.n_classes);
  return phi;
}

Abstraction Abstraction::identity(std::size_t size) {
  Abstraction phi;
  phi.assignment.resize(size);
  for (std::size_t x = 0; x < size; ++x) phi.assignment[x] = x;
  phi.n_classes = size;
  return phi;
}

Abstraction Abstraction::constant(std::size_t size) {
  return {std::vector<std::size_t>(size, 0), size == 0 ? 0u : 1u};
}

StatePartition StatePartition::from_labels(std::span<const std::size_t> labels) {
  StatePartition part;
  part.assignment = compact(labels, part.n_blocks);
  return part;
}

StatePartition StatePartition::identity(std::size_t num_states) {
  std::vector<std::size_t> labels(num_states);
  for (std::size_t s = 0; s < num_states; ++s) labels[s] = s;
  return from_labels(labels);
}

Abstraction zpi_irrelevance_oracle(const std::vector<BinnedReturnDistribution>& table, double tol) {
  if (tol < 0.0) throw PreconditionError("tol must be non-negative");
  const auto labels = group_by_representative(table.size(), [&](std::size_t r, std::size_t x) {
    if (table[r].probs.size() != table[x].probs.size()) {
      throw PreconditionError("binned table mixes different bin counts");
    }
    return sup_gap(table[r].probs, table[x].probs) <= tol;
  });
  return Abstraction::from_labels(labels);
}

Abstraction support_irrelevance_oracle(const std::vector<SupportDistribution>& table, double tol) {
  if (tol < 0.0) throw PreconditionError("tol must be non-negative");
  const auto labels = group_by_representative(table.size(), [&](std::size_t r, std::size_t x) {
    const auto& a = table[r].atoms;
    const auto& b = table[x].atoms;
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (std::abs(a[i].value - b[i].value) > tol || std::abs(a[i].prob - b[i].prob) > tol) {
        return false;
      }
    }
    return true;
  });
  return Abstraction::from_labels(labels);
}

bool is_finer(const Abstraction& fine, const Abstraction& coarse) {
  if (fine.size() != coarse.size()) {
    throw PreconditionError("abstractions cover different domains (" +
                            std::to_string(fine.size()) + " vs " + std::to_string(coarse.size()) +
                            ")");
  }
  // Each fine class must land inside a single coarse class.
  std::vector<std::size_t> image(fine.n_classes, static_cast<std::size_t>(-1));
  for (std::size_t x = 0; x < fine.size(); ++x) {
    std::size_t& seen = image[fine(x)];
    if (seen == static_cast<std::size_t>(-1)) {
      seen = coarse(x);
    } else if (seen != coarse(x)) {
      return false;
    }
  }
  return true;
}

StatePartition coarsest_bisimulation(const TabularMdp& mdp, double tol) {
  require_valid(mdp);
  const std::size_t S = mdp.num_states;
  const std::size_t A = mdp.num_actions;
  std::vector<std::vector<double>> rewards(S, std::vector<double>(A));
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) rewards[s][a] = mdp.r(s, a);
  }
  const auto initial = group_by_representative(
      S, [&](std::size_t r, std::size_t s) { return sup_gap(rewards[r], rewards[s]) <= tol; });
  return refine(S, initial, tol, [&](std::size_t s, const StatePartition& part) {
    std::vector<double> sig;
    sig.reserve(A * part.n_blocks);
    for (std::size_t a = 0; a < A; ++a) {
      const auto mass = block_masses(mdp.row(s, a), part);
      sig.insert(sig.end(), mass.begin(), mass.end());
    }
    return sig;
  });
}

StatePartition pi_bisimulation(const TabularMdp& mdp, const Policy& policy, double tol) {
  require_valid(mdp, policy);
  const std::size_t S = mdp.num_states;
  const std::size_t A = mdp.num_actions;
  std::vector<double> reward(S, 0.0);
  std::vector<double> kernel(S * S, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      const double pi = policy.prob(s, a);
      reward[s] += pi * mdp.r(s, a);
      const auto row = mdp.row(s, a);
      for (std::size_t t = 0; t < S; ++t) kernel[s * S + t] += pi * row[t];
    }
  }
  const auto initial = group_by_representative(
      S, [&](std::size_t r, std::size_t s) { return std::abs(reward[r] - reward[s]) <= tol; });
  return refine(S, initial, tol, [&](std::size_t s, const StatePartition& part) {
    return block_masses(std::span<const double>(kernel.data() + s * S, S), part);
  });
}

Abstraction lift_bisim_to_state_action(const StatePartition& partition, std::size_t num_actions) {
  std::vector<std::size_t> labels(partition.assignment.size() * num_actions);
  for (std::size_t s = 0; s < partition.assignment.size(); ++s) {
    for (std::size_t a = 0; a < num_actions; ++a) {
      labels[s * num_actions + a] = partition.assignment[s] * num_actions + a;
    }
  }
  return Abstraction::from_labels(labels);
}

bool is_block_constant(const Policy& policy, const StatePartition& partition) {
  if (partition.assignment.size() != policy.num_states) return false;
  std::vector<std::size_t> rep(partition.n_blocks, static_cast<std::size_t>(-1));
  for (std::size_t s = 0; s < policy.num_states; ++s) {
    std::size_t& r = rep[partition.assignment[s]];
    if (r == static_cast<std::size_t>(-1)) {
      r = s;
      continue;
    }
    for (std::size_t a = 0; a < policy.num_actions; ++a) {
      if (std::abs(policy.prob(s, a) - policy.prob(r, a)) > 1e-12) return false;
    }
  }
  return true;
}

ZpiReport check_bisim_induces_zpi(const TabularMdp& mdp, const StatePartition& partition,
                                  const Policy& policy, const BinningConfig& cfg, double tol) {
  require_valid(mdp, policy);
  if (partition.assignment.size() != mdp.num_states) {
    throw PreconditionError("partition does not cover the state space");
  }
  if (!is_block_constant(policy, partition)) {
    throw PreconditionError("policy is not constant within partition blocks");
  }
  const auto binned = bin_table(exact_return_table(mdp, policy), cfg);
  ZpiReport report;
  const std::size_t S = mdp.num_states;
  const std::size_t A = mdp.num_actions;
  for (std::size_t s1 = 0; s1 < S; ++s1) {
    for (std::size_t s2 = s1 + 1; s2 < S; ++s2) {
      if (partition.assignment[s1] != partition.assignment[s2]) continue;
      for (std::size_t a = 0; a < A; ++a) {
        ++report.pairs_checked;
        const double gap = sup_gap(binned[mdp.x_index(s1, a)].probs, binned[mdp.x_index(s2, a)].probs);
        if (gap > tol) report.violations.push_back({s1, s2, a, gap});
      }
    }
  }
  return report;
}

AbstractQ construct_q_from_abstraction(const Abstraction& phi, std::span<const double> q_values,
                                       double binning_width) {
  if (phi.size() != q_values.size()) {
    throw PreconditionError("abstraction and Q table cover different domains");
  }
  AbstractQ out;
  out.bound = binning_width;
  out.class_q.assign(phi.n_classes, 0.0);
  std::vector<bool> set(phi.n_classes, false);
  for (std::size_t x = 0; x < phi.size(); ++x) {
    if (!set[phi(x)]) {
      out.class_q[phi(x)] = q_values[x];
      set[phi(x)] = true;
    }
  }
  for (std::size_t x = 0; x < phi.size(); ++x) {
    out.max_error = std::max(out.max_error, std::abs(out.class_q[phi(x)] - q_values[x]));
  }
  return out;
}

std::optional<Policy> find_distinguishing_det_policy(const TabularMdp& mdp, std::size_t x,
                                                     std::size_t x_bar, double tol,
                                                     std::size_t guard) {
  require_valid(mdp);
  if (x >= mdp.num_pairs() || x_bar >= mdp.num_pairs()) {
    throw PreconditionError("state-action index out of range");
  }
  std::optional<Policy> found;
  if (x == x_bar) {
    // Still honour the guard so oversized inputs are refused consistently.
    if (det_policy_count(mdp.num_states, mdp.num_actions) > guard) {
      for_each_det_policy(mdp.num_states, mdp.num_actions, [](const Policy&) { return false; },
                          guard);
    }
    return found;
  }
  for_each_det_policy(
      mdp.num_states, mdp.num_actions,
      [&](const Policy& pi) {
        const auto q = policy_eval_q(mdp, pi);
        if (std::abs(q[x] - q[x_bar]) > tol) {
          found = pi;
          return false;
        }
        return true;
      },
      guard);
  return found;
}

Comparison compare(const Abstraction& phi1, const Abstraction& phi2) {
  return {is_finer(phi1, phi2), is_finer(phi2, phi1), phi1.n_classes, phi2.n_classes};
}

}  // namespace zirrel
