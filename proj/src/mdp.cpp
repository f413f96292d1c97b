#include "zirrel/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "zirrel/error.hpp"

namespace zirrel {

namespace {

constexpr double kRowTol = 1e-9;

std::string cell_name(std::size_t s, std::size_t a) {
  std::ostringstream os;
  os << "(s=" << s << ", a=" << a << ")";
  return os.str();
}

double snap_reward(double u, std::size_t levels) {
  if (levels <= 1) return u;
  const double steps = static_cast<double>(levels - 1);
  return std::round(u * steps) / steps;
}

std::vector<double> random_simplex(std::size_t k, Rng& rng) {
  std::vector<double> w(k);
  double total = 0.0;
  for (auto& v : w) {
    v = 0.05 + rng.uniform();
    total += v;
  }
  for (auto& v : w) v /= total;
  return w;
}

// k distinct values from [lo, hi), in draw order.
std::vector<std::size_t> choose_distinct(std::size_t lo, std::size_t hi, std::size_t k, Rng& rng) {
  std::vector<std::size_t> pool(hi - lo);
  std::iota(pool.begin(), pool.end(), lo);
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
  }
  pool.resize(k);
  return pool;
}

void require_reward_bounds(const RandomMdpOptions& options) {
  if (!(options.r_min <= 0.0 && 0.0 <= options.r_max && options.r_min < options.r_max)) {
    throw PreconditionError("reward bounds must satisfy r_min <= 0 <= r_max and r_min < r_max "
                            "(absorbing states pay 0)");
  }
}

}  // namespace

bool TabularMdp::is_absorbing(std::size_t s) const {
  for (std::size_t a = 0; a < num_actions; ++a) {
    if (r(s, a) != 0.0 || p(s, a, s) != 1.0) return false;
  }
  return true;
}

bool TabularMdp::has_deterministic_dynamics() const {
  for (std::size_t s = 0; s < num_states; ++s) {
    for (std::size_t a = 0; a < num_actions; ++a) {
      for (double v : row(s, a)) {
        if (v != 0.0 && v != 1.0) return false;
      }
    }
  }
  return true;
}

std::size_t Policy::action(std::size_t s) const {
  const auto r = row(s);
  return static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
}

Policy Policy::uniform(std::size_t num_states, std::size_t num_actions) {
  Policy pi;
  pi.num_states = num_states;
  pi.num_actions = num_actions;
  pi.probs.assign(num_states * num_actions, 1.0 / static_cast<double>(num_actions));
  pi.deterministic = num_actions == 1;
  return pi;
}

Policy Policy::from_actions(std::span<const std::size_t> actions, std::size_t num_actions) {
  Policy pi;
  pi.num_states = actions.size();
  pi.num_actions = num_actions;
  pi.probs.assign(actions.size() * num_actions, 0.0);
  for (std::size_t s = 0; s < actions.size(); ++s) {
    if (actions[s] >= num_actions) {
      throw PreconditionError("action " + std::to_string(actions[s]) + " out of range for state " +
                              std::to_string(s));
    }
    pi.probs[s * num_actions + actions[s]] = 1.0;
  }
  pi.deterministic = true;
  return pi;
}

Policy Policy::random(std::size_t num_states, std::size_t num_actions, Rng& rng) {
  Policy pi;
  pi.num_states = num_states;
  pi.num_actions = num_actions;
  pi.probs.resize(num_states * num_actions);
  for (std::size_t s = 0; s < num_states; ++s) {
    double total = 0.0;
    for (std::size_t a = 0; a < num_actions; ++a) {
      const double e = -std::log(1.0 - rng.uniform());
      pi.probs[s * num_actions + a] = e;
      total += e;
    }
    for (std::size_t a = 0; a < num_actions; ++a) pi.probs[s * num_actions + a] /= total;
  }
  pi.deterministic = num_actions == 1;
  return pi;
}

double Trajectory::discounted_return(double gamma) const {
  double g = 0.0;
  double disc = 1.0;
  for (const auto& step : steps) {
    g += disc * step.reward;
    disc *= gamma;
  }
  return g;
}

std::vector<std::string> validate_mdp(const TabularMdp& mdp) {
  std::vector<std::string> out;
  const std::size_t S = mdp.num_states;
  const std::size_t A = mdp.num_actions;
  if (S == 0) out.emplace_back("num_states must be positive");
  if (A == 0) out.emplace_back("num_actions must be positive");
  if (mdp.transition.size() != S * A * S) {
    out.emplace_back("transition table has " + std::to_string(mdp.transition.size()) +
                     " entries, expected " + std::to_string(S * A * S));
  }
  if (mdp.reward.size() != S * A) {
    out.emplace_back("reward table has " + std::to_string(mdp.reward.size()) +
                     " entries, expected " + std::to_string(S * A));
  }
  if (!out.empty()) return out;

  if (!(mdp.gamma > 0.0 && mdp.gamma < 1.0)) {
    out.emplace_back("gamma " + std::to_string(mdp.gamma) + " outside (0, 1)");
  }
  if (!(mdp.r_min <= mdp.r_max)) out.emplace_back("r_min exceeds r_max");
  if (mdp.horizon_cap < 1) out.emplace_back("horizon_cap must be at least 1");
  if (mdp.initial_state >= S) {
    out.emplace_back("initial_state " + std::to_string(mdp.initial_state) + " out of range");
  }

  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      double sum = 0.0;
      bool negative = false;
      for (double v : mdp.row(s, a)) {
        if (v < 0.0 || !std::isfinite(v)) negative = true;
        sum += v;
      }
      if (negative) out.push_back("transition row " + cell_name(s, a) + " has a negative entry");
      if (std::abs(sum - 1.0) > kRowTol) {
        std::ostringstream os;
        os << "transition row " << cell_name(s, a) << " sums to " << sum;
        out.push_back(os.str());
      }
      const double r = mdp.r(s, a);
      if (!(r >= mdp.r_min && r <= mdp.r_max)) {
        std::ostringstream os;
        os << "reward " << cell_name(s, a) << " = " << r << " outside [" << mdp.r_min << ", "
           << mdp.r_max << "]";
        out.push_back(os.str());
      }
    }
  }

  if (mdp.episodic && out.empty()) {
    // Breadth-first search from the initial state, depth-limited by the cap.
    const auto absorbing = absorbing_mask(mdp);
    std::vector<bool> seen(S, false);
    std::vector<std::size_t> frontier{mdp.initial_state};
    seen[mdp.initial_state] = true;
    bool found = absorbing[mdp.initial_state];
    for (std::size_t depth = 0; depth < mdp.horizon_cap && !found && !frontier.empty(); ++depth) {
      std::vector<std::size_t> next;
      for (std::size_t s : frontier) {
        for (std::size_t a = 0; a < A; ++a) {
          for (std::size_t t = 0; t < S; ++t) {
            if (mdp.p(s, a, t) > 0.0 && !seen[t]) {
              seen[t] = true;
              found = found || absorbing[t];
              next.push_back(t);
            }
          }
        }
      }
      frontier = std::move(next);
    }
    if (!found) {
      out.emplace_back("episodic MDP has no absorbing state reachable within horizon_cap");
    }
  }
  return out;
}

std::vector<std::string> validate_policy(const Policy& policy) {
  std::vector<std::string> out;
  if (policy.probs.size() != policy.num_states * policy.num_actions) {
    out.emplace_back("policy table has the wrong size");
    return out;
  }
  for (std::size_t s = 0; s < policy.num_states; ++s) {
    double sum = 0.0;
    std::size_t ones = 0;
    bool bad = false;
    for (double v : policy.row(s)) {
      if (v < 0.0 || !std::isfinite(v)) bad = true;
      if (v == 1.0) ++ones;
      sum += v;
    }
    if (bad) out.push_back("policy row " + std::to_string(s) + " has a negative entry");
    if (std::abs(sum - 1.0) > kRowTol) {
      out.push_back("policy row " + std::to_string(s) + " does not sum to 1");
    }
    if (policy.deterministic && ones != 1) {
      out.push_back("deterministic policy row " + std::to_string(s) + " is not one-hot");
    }
  }
  return out;
}

void require_valid(const TabularMdp& mdp) {
  const auto report = validate_mdp(mdp);
  if (!report.empty()) throw PreconditionError("invalid MDP: " + report.front());
}

void require_valid(const TabularMdp& mdp, const Policy& policy) {
  require_valid(mdp);
  if (policy.num_states != mdp.num_states || policy.num_actions != mdp.num_actions) {
    throw PreconditionError("policy shape does not match the MDP");
  }
  const auto report = validate_policy(policy);
  if (!report.empty()) throw PreconditionError("invalid policy: " + report.front());
}

TabularMdp random_mdp(std::uint64_t seed, std::size_t num_states, std::size_t num_actions,
                      std::size_t branching, double gamma, const RandomMdpOptions& options) {
  if (branching == 0) throw PreconditionError("branching must be at least 1");
  if (num_states == 0 || num_actions == 0) {
    throw PreconditionError("num_states and num_actions must be positive");
  }
  if (branching > num_states) throw PreconditionError("branching exceeds num_states");
  require_reward_bounds(options);

  Rng rng(seed);
  TabularMdp mdp;
  mdp.num_states = num_states;
  mdp.num_actions = num_actions;
  mdp.gamma = gamma;
  mdp.r_min = options.r_min;
  mdp.r_max = options.r_max;
  mdp.horizon_cap = num_states;
  mdp.initial_state = 0;
  mdp.episodic = true;
  mdp.transition.assign(num_states * num_actions * num_states, 0.0);
  mdp.reward.assign(num_states * num_actions, 0.0);

  const std::size_t terminal = num_states - 1;
  for (std::size_t s = 0; s < num_states; ++s) {
    for (std::size_t a = 0; a < num_actions; ++a) {
      double* row = mdp.transition.data() + (s * num_actions + a) * num_states;
      if (s == terminal) {
        row[s] = 1.0;
        continue;
      }
      const double u = snap_reward(rng.uniform(), options.reward_levels);
      mdp.reward[s * num_actions + a] = options.r_min + u * (options.r_max - options.r_min);
      const std::size_t k = std::min(branching, terminal - s);
      const auto successors = choose_distinct(s + 1, num_states, k, rng);
      if (k == 1) {
        row[successors[0]] = 1.0;
      } else {
        const auto w = random_simplex(k, rng);
        for (std::size_t i = 0; i < k; ++i) row[successors[i]] = w[i];
      }
    }
  }
  return mdp;
}

LumpableMdp random_lumpable_mdp(std::uint64_t seed, std::size_t num_blocks, std::size_t copies,
                                std::size_t num_actions, std::size_t branching, double gamma,
                                const RandomMdpOptions& options) {
  if (num_blocks == 0 || copies == 0) throw PreconditionError("need at least one block and copy");
  const TabularMdp quotient =
      random_mdp(seed, num_blocks, num_actions, std::min(branching, num_blocks), gamma, options);
  Rng rng(mix_seed(seed, 0x10b));

  LumpableMdp out;
  TabularMdp& mdp = out.mdp;
  const std::size_t S = num_blocks * copies;
  mdp.num_states = S;
  mdp.num_actions = num_actions;
  mdp.gamma = gamma;
  mdp.r_min = options.r_min;
  mdp.r_max = options.r_max;
  mdp.horizon_cap = num_blocks;
  mdp.initial_state = 0;
  mdp.episodic = true;
  mdp.transition.assign(S * num_actions * S, 0.0);
  mdp.reward.assign(S * num_actions, 0.0);
  out.block_of_state.resize(S);

  for (std::size_t b = 0; b < num_blocks; ++b) {
    for (std::size_t c = 0; c < copies; ++c) {
      const std::size_t s = b * copies + c;
      out.block_of_state[s] = b;
      for (std::size_t a = 0; a < num_actions; ++a) {
        mdp.reward[s * num_actions + a] = quotient.r(b, a);
        double* row = mdp.transition.data() + (s * num_actions + a) * S;
        if (quotient.is_absorbing(b)) {
          row[s] = 1.0;
          continue;
        }
        for (std::size_t target = 0; target < num_blocks; ++target) {
          const double q = quotient.p(b, a, target);
          if (q == 0.0) continue;
          const auto w = random_simplex(copies, rng);
          for (std::size_t j = 0; j < copies; ++j) row[target * copies + j] = q * w[j];
        }
      }
    }
  }
  return out;
}

TabularMdp gridworld(std::size_t width, std::size_t height, GridCell goal, double step_reward,
                     double goal_reward, double gamma, std::size_t horizon_cap) {
  if (width == 0 || height == 0) throw PreconditionError("gridworld needs a non-zero area");
  if (goal.x >= width || goal.y >= height) throw PreconditionError("goal cell outside the grid");

  TabularMdp mdp;
  const std::size_t S = width * height;
  constexpr std::size_t A = 4;
  mdp.num_states = S;
  mdp.num_actions = A;
  mdp.gamma = gamma;
  mdp.r_min = std::min({step_reward, goal_reward, 0.0});
  mdp.r_max = std::max({step_reward, goal_reward, 0.0});
  mdp.horizon_cap = horizon_cap == 0 ? 4 * (width + height) : horizon_cap;
  mdp.initial_state = 0;
  mdp.episodic = true;
  mdp.transition.assign(S * A * S, 0.0);
  mdp.reward.assign(S * A, 0.0);

  const std::size_t goal_state = goal.y * width + goal.x;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t s = y * width + x;
      for (std::size_t a = 0; a < A; ++a) {
        double* row = mdp.transition.data() + (s * A + a) * S;
        if (s == goal_state) {
          row[s] = 1.0;
          continue;
        }
        std::size_t nx = x;
        std::size_t ny = y;
        switch (a) {
          case kUp: ny = y > 0 ? y - 1 : y; break;
          case kRight: nx = x + 1 < width ? x + 1 : x; break;
          case kDown: ny = y + 1 < height ? y + 1 : y; break;
          case kLeft: nx = x > 0 ? x - 1 : x; break;
          default: break;
        }
        const std::size_t next = ny * width + nx;
        row[next] = 1.0;
        mdp.reward[s * A + a] = next == goal_state ? goal_reward : step_reward;
      }
    }
  }
  return mdp;
}

TabularMdp coin_flip_mdp(double gamma, std::size_t num_actions) {
  TabularMdp mdp;
  constexpr std::size_t S = 4;
  const std::size_t A = num_actions;
  mdp.num_states = S;
  mdp.num_actions = A;
  mdp.gamma = gamma;
  mdp.r_min = 0.0;
  mdp.r_max = 1.0;
  mdp.horizon_cap = 3;
  mdp.initial_state = 0;
  mdp.episodic = true;
  mdp.transition.assign(S * A * S, 0.0);
  mdp.reward.assign(S * A, 0.0);
  for (std::size_t a = 0; a < A; ++a) {
    mdp.transition[(0 * A + a) * S + 1] = 0.5;
    mdp.transition[(0 * A + a) * S + 2] = 0.5;
    mdp.transition[(1 * A + a) * S + 3] = 1.0;
    mdp.transition[(2 * A + a) * S + 3] = 1.0;
    mdp.transition[(3 * A + a) * S + 3] = 1.0;
    mdp.reward[1 * A + a] = 1.0;
  }
  return mdp;
}

TabularMdp planted_two_class_mdp(double stay, double gamma, std::size_t horizon_cap) {
  if (!(stay >= 0.0 && stay < 1.0)) throw PreconditionError("stay probability must be in [0, 1)");
  TabularMdp mdp;
  constexpr std::size_t S = 4;
  constexpr std::size_t A = 2;
  mdp.num_states = S;
  mdp.num_actions = A;
  mdp.gamma = gamma;
  mdp.r_min = 0.0;
  mdp.r_max = 1.0;
  mdp.horizon_cap = horizon_cap;
  mdp.initial_state = 0;
  mdp.episodic = true;
  mdp.transition.assign(S * A * S, 0.0);
  mdp.reward.assign(S * A, 0.0);
  for (std::size_t a = 0; a < A; ++a) {
    for (std::size_t s : {0, 1}) {
      mdp.transition[(s * A + a) * S + 0] = stay / 2.0;
      mdp.transition[(s * A + a) * S + 1] = stay / 2.0;
      mdp.transition[(s * A + a) * S + 3] = 1.0 - stay;
      mdp.reward[s * A + a] = 1.0;
    }
    mdp.transition[(2 * A + a) * S + 3] = 1.0;
    mdp.transition[(3 * A + a) * S + 3] = 1.0;
  }
  return mdp;
}

std::size_t det_policy_count(std::size_t num_states, std::size_t num_actions) {
  std::size_t count = 1;
  for (std::size_t s = 0; s < num_states; ++s) {
    if (num_actions != 0 && count > std::numeric_limits<std::size_t>::max() / num_actions) {
      return std::numeric_limits<std::size_t>::max();
    }
    count *= num_actions;
  }
  return count;
}

void for_each_det_policy(std::size_t num_states, std::size_t num_actions,
                         const std::function<bool(const Policy&)>& visit, std::size_t guard) {
  const std::size_t count = det_policy_count(num_states, num_actions);
  if (count > guard) {
    const std::string shown = count == std::numeric_limits<std::size_t>::max()
                                  ? std::string("more than 2^64")
                                  : std::to_string(count);
    throw PreconditionError("deterministic policy enumeration refused: |A|^|S| = " + shown +
                            " exceeds the guard of " + std::to_string(guard));
  }
  std::vector<std::size_t> digits(num_states, 0);
  for (std::size_t i = 0; i < count; ++i) {
    if (!visit(Policy::from_actions(digits, num_actions))) return;
    // Odometer with the last state as the fastest digit.
    for (std::size_t pos = num_states; pos-- > 0;) {
      if (++digits[pos] < num_actions) break;
      digits[pos] = 0;
    }
  }
}

std::vector<Policy> enumerate_det_policies(const TabularMdp& mdp, std::size_t guard) {
  std::vector<Policy> out;
  for_each_det_policy(
      mdp.num_states, mdp.num_actions,
      [&](const Policy& pi) {
        out.push_back(pi);
        return true;
      },
      guard);
  return out;
}

std::vector<bool> absorbing_mask(const TabularMdp& mdp) {
  std::vector<bool> mask(mdp.num_states);
  for (std::size_t s = 0; s < mdp.num_states; ++s) mask[s] = mdp.is_absorbing(s);
  return mask;
}

Simulator::Simulator(const TabularMdp& mdp, const Policy& policy)
    : mdp_(&mdp), policy_(&policy), absorbing_(absorbing_mask(mdp)) {}

Trajectory Simulator::rollout(StateAction start, Rng& rng) const {
  const TabularMdp& mdp = *mdp_;
  Trajectory traj;
  std::size_t s = start.state;
  std::size_t a = start.action;
  while (true) {
    traj.steps.push_back({s, a, mdp.r(s, a)});
    if (absorbing_[s]) {
      traj.terminated = true;
      break;
    }
    const std::size_t next = rng.categorical(mdp.row(s, a));
    if (absorbing_[next]) {
      traj.terminated = true;
      break;
    }
    if (traj.steps.size() >= mdp.horizon_cap) break;
    s = next;
    a = rng.categorical(policy_->row(s));
  }
  return traj;
}

double Simulator::sample_return(StateAction start, Rng& rng) const {
  return rollout(start, rng).discounted_return(mdp_->gamma);
}

Trajectory rollout(const TabularMdp& mdp, const Policy& policy, StateAction start, Rng& rng) {
  return Simulator(mdp, policy).rollout(start, rng);
}

}  // namespace zirrel
