#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "zirrel/rng.hpp"

namespace zirrel {

/// A state-action pair. Flattened x-index is state * num_actions + action.
struct StateAction {
  std::size_t state = 0;
  std::size_t action = 0;
  bool operator==(const StateAction&) const = default;
};

/// Finite MDP with deterministic rewards R(s, a).
///
/// Storage is dense: transition[(s * A + a) * S + s'] and reward[s * A + a].
/// Instances are plain values and are never mutated by library code.
struct TabularMdp {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::vector<double> transition;
  std::vector<double> reward;
  double gamma = 0.9;
  double r_min = 0.0;
  double r_max = 1.0;
  std::size_t horizon_cap = 1;
  std::size_t initial_state = 0;
  /// When set, validation requires a reachable absorbing state.
  bool episodic = false;

  std::size_t num_pairs() const { return num_states * num_actions; }
  std::size_t x_index(std::size_t s, std::size_t a) const { return s * num_actions + a; }
  StateAction pair(std::size_t x) const { return {x / num_actions, x % num_actions}; }

  double p(std::size_t s, std::size_t a, std::size_t next) const {
    return transition[(s * num_actions + a) * num_states + next];
  }
  double r(std::size_t s, std::size_t a) const { return reward[s * num_actions + a]; }
  std::span<const double> row(std::size_t s, std::size_t a) const {
    return {transition.data() + (s * num_actions + a) * num_states, num_states};
  }

  /// Self-loop with probability one and zero reward under every action.
  bool is_absorbing(std::size_t s) const;
  /// Every transition row is one-hot.
  bool has_deterministic_dynamics() const;

  bool operator==(const TabularMdp&) const = default;
};

/// Stationary policy pi(a | s), stored row-major [s * A + a].
struct Policy {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::vector<double> probs;
  bool deterministic = false;

  double prob(std::size_t s, std::size_t a) const { return probs[s * num_actions + a]; }
  std::span<const double> row(std::size_t s) const {
    return {probs.data() + s * num_actions, num_actions};
  }
  /// The chosen action of a deterministic policy; argmax otherwise.
  std::size_t action(std::size_t s) const;

  static Policy uniform(std::size_t num_states, std::size_t num_actions);
  static Policy from_actions(std::span<const std::size_t> actions, std::size_t num_actions);
  /// Rows drawn from a flat Dirichlet via normalised exponentials.
  static Policy random(std::size_t num_states, std::size_t num_actions, Rng& rng);

  bool operator==(const Policy&) const = default;
};

struct Step {
  std::size_t state = 0;
  std::size_t action = 0;
  double reward = 0.0;
};

struct Trajectory {
  std::vector<Step> steps;
  /// Ended by reaching an absorbing state rather than the horizon cap.
  bool terminated = false;

  double discounted_return(double gamma) const;
};

/// Lists every violated TabularMdp invariant; empty means valid.
std::vector<std::string> validate_mdp(const TabularMdp& mdp);
std::vector<std::string> validate_policy(const Policy& policy);
/// Throws PreconditionError carrying the first violation.
void require_valid(const TabularMdp& mdp);
void require_valid(const TabularMdp& mdp, const Policy& policy);

struct RandomMdpOptions {
  double r_min = 0.0;
  double r_max = 1.0;
  /// 0 draws continuous rewards; L > 1 snaps them to L evenly spaced levels.
  std::size_t reward_levels = 0;
};

/// Random episodic MDP on a layered graph.
///
/// State num_states - 1 is absorbing; every other state moves only to
/// higher-indexed states, so absorption happens within num_states - 1 steps
/// and horizon_cap = num_states. Each (s, a) has at most `branching`
/// successors.
TabularMdp random_mdp(std::uint64_t seed, std::size_t num_states, std::size_t num_actions,
                      std::size_t branching, double gamma, const RandomMdpOptions& options = {});

struct LumpableMdp {
  TabularMdp mdp;
  /// Planted bisimulation: block of each state.
  std::vector<std::size_t> block_of_state;
};

/// Episodic MDP built by expanding a random layered quotient MDP: each block
/// becomes `copies` states with identical rewards, and mass into a block is
/// split randomly among its copies. The planted partition is a bisimulation.
LumpableMdp random_lumpable_mdp(std::uint64_t seed, std::size_t num_blocks, std::size_t copies,
                                std::size_t num_actions, std::size_t branching, double gamma,
                                const RandomMdpOptions& options = {});

struct GridCell {
  std::size_t x = 0;
  std::size_t y = 0;
};

enum GridAction : std::size_t { kUp = 0, kRight = 1, kDown = 2, kLeft = 3 };

/// Four-action deterministic grid. State index is y * width + x, start cell
/// (0, 0). The goal absorbs; entering it pays goal_reward, any other move
/// pays step_reward, and moves into walls leave the agent in place.
/// horizon_cap of 0 selects 4 * (width + height).
TabularMdp gridworld(std::size_t width, std::size_t height, GridCell goal, double step_reward,
                     double goal_reward, double gamma, std::size_t horizon_cap = 0);

/// Root -> {win, lose} with probability 1/2 each; win pays 1, everything else
/// pays 0, then both absorb. All actions behave identically.
TabularMdp coin_flip_mdp(double gamma = 0.9, std::size_t num_actions = 1);

/// Four states, two actions, eight state-actions. States 0 and 1 pay 1 and
/// stay in {0, 1} with probability `stay`, otherwise absorb; state 2 pays 0
/// and absorbs; state 3 is absorbing. Under any policy the binned return
/// distributions take exactly two values at K = 2.
TabularMdp planted_two_class_mdp(double stay = 0.7, double gamma = 0.9,
                                 std::size_t horizon_cap = 10);

inline constexpr std::size_t kDefaultPolicyGuard = 1'000'000;

/// |A|^|S| saturated at SIZE_MAX.
std::size_t det_policy_count(std::size_t num_states, std::size_t num_actions);

/// Calls `visit` with every deterministic policy in lexicographic order of
/// (action of state 0, action of state 1, ...) until `visit` returns false.
/// Refuses above `guard`.
void for_each_det_policy(std::size_t num_states, std::size_t num_actions,
                         const std::function<bool(const Policy&)>& visit,
                         std::size_t guard = kDefaultPolicyGuard);

std::vector<Policy> enumerate_det_policies(const TabularMdp& mdp,
                                           std::size_t guard = kDefaultPolicyGuard);

/// Rollout engine bound to one MDP and policy; caches the absorbing mask.
class Simulator {
 public:
  Simulator(const TabularMdp& mdp, const Policy& policy);

  /// Executes `start` first, then follows the policy until an absorbing
  /// state is entered or horizon_cap steps have been recorded. A start in an
  /// absorbing state yields one zero-reward step.
  Trajectory rollout(StateAction start, Rng& rng) const;
  double sample_return(StateAction start, Rng& rng) const;

  const std::vector<bool>& absorbing() const { return absorbing_; }

 private:
  const TabularMdp* mdp_;
  const Policy* policy_;
  std::vector<bool> absorbing_;
};

Trajectory rollout(const TabularMdp& mdp, const Policy& policy, StateAction start, Rng& rng);

std::vector<bool> absorbing_mask(const TabularMdp& mdp);

}  // namespace zirrel
