#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "zirrel/mdp.hpp"
#include "zirrel/rng.hpp"

namespace zirrel {

enum class SegmentMode { kSparse, kThreshold };

struct SegmentRule {
  SegmentMode mode = SegmentMode::kSparse;
  /// Threshold mode only; must be positive.
  double threshold = 1.0;
};

/// Per-step segment labels starting at 0. Sparse: a step with nonzero reward
/// closes its segment. Threshold: a segment closes once its cumulative reward
/// exceeds the threshold.
std::vector<std::size_t> segment_trajectory(const Trajectory& traj, const SegmentRule& rule);

/// FIFO store of whole trajectories holding at most `capacity` steps (the
/// newest trajectory is always kept). Steps are addressed by a flat position.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, SegmentRule rule, std::size_t num_actions);

  void add(Trajectory traj);

  std::size_t size() const { return x_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t num_trajectories() const { return entries_.size(); }
  const Trajectory& trajectory(std::size_t i) const { return entries_[i].traj; }
  /// Segment labels of trajectory i, as produced by segment_trajectory.
  const std::vector<std::size_t>& segment_ids(std::size_t i) const { return entries_[i].labels; }

  /// x-index at flat position p.
  std::size_t x_at(std::size_t p) const { return x_[p]; }
  /// Buffer-wide segment key at flat position p.
  std::size_t segment_at(std::size_t p) const { return segment_[p]; }
  /// Flat positions of the segment containing p, ascending.
  const std::vector<std::size_t>& segment_members(std::size_t p) const;
  /// Positions whose segment has at least two steps.
  const std::vector<std::size_t>& eligible_anchors() const { return eligible_; }

 private:
  struct Entry {
    Trajectory traj;
    std::vector<std::size_t> labels;
    std::size_t first_segment = 0;
  };

  void reindex();

  std::size_t capacity_;
  SegmentRule rule_;
  std::size_t num_actions_;
  std::deque<Entry> entries_;
  std::size_t steps_ = 0;
  std::size_t next_segment_ = 0;
  std::vector<std::size_t> x_;
  std::vector<std::size_t> segment_;
  std::vector<std::size_t> segment_slot_;
  std::vector<std::vector<std::size_t>> members_;
  std::vector<std::size_t> eligible_;
};

struct ContrastiveBatch {
  std::vector<std::size_t> anchors;
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
  /// Flat buffer positions of the same draws, for auditing.
  std::vector<std::size_t> anchor_steps;
  std::vector<std::size_t> positive_steps;
  std::vector<std::size_t> negative_steps;

  std::size_t size() const { return anchors.size(); }
};

/// Anchor uniform over eligible steps, positive uniform over the rest of its
/// segment, negative uniform over the whole buffer.
ContrastiveBatch sample_contrastive_batch(const ReplayBuffer& buffer, std::size_t batch_size,
                                          Rng& rng);

/// Row-major tables: state S x d, action A x d, discriminator d x d.
struct EmbeddingParams {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::size_t d_emb = 0;
  std::vector<double> state_table;
  std::vector<double> action_table;
  std::vector<double> discriminator;

  /// All tables drawn from uniform(-scale, scale).
  static EmbeddingParams random(std::size_t num_states, std::size_t num_actions,
                                std::size_t d_emb, Rng& rng, double scale = 0.1);
  static EmbeddingParams zeros(std::size_t num_states, std::size_t num_actions, std::size_t d_emb);

  bool operator==(const EmbeddingParams&) const = default;
};

/// state_table[s] * action_table[a], elementwise, for x = s * A + a.
std::vector<double> embed(const EmbeddingParams& params, std::size_t x);

/// logistic(z1^T W z2).
double discriminator_out(const EmbeddingParams& params, const std::vector<double>& z1,
                         const std::vector<double>& z2);

struct AuxLoss {
  double loss = 0.0;
  /// Same shapes as the parameter tables.
  EmbeddingParams grad;
};

/// Mean squared error over the 2B pairs (anchor, positive) with label 0 and
/// (anchor, negative) with label 1, with exact gradients.
AuxLoss aux_loss_and_grads(const EmbeddingParams& params, const ContrastiveBatch& batch);

/// Throws PreconditionError if either vector is zero.
double cosine_similarity(const std::vector<double>& z1, const std::vector<double>& z2);

struct RepresentationReport {
  std::size_t probe_count = 0;
  double pos_mean = 0.0;
  double pos_std = 0.0;
  double neg_mean = 0.0;
  double neg_std = 0.0;

  bool empty() const { return probe_count == 0; }
  double separation() const { return pos_mean - neg_mean; }
};

/// Cosine of anchor vs positive and anchor vs negative over probe triples.
RepresentationReport representation_report(const EmbeddingParams& params,
                                            const ReplayBuffer& buffer, std::size_t probe_count,
                                            Rng& rng);

enum class OptimizerKind { kAdam, kSgd };

struct RcrlConfig {
  std::size_t epochs = 200;
  std::size_t episodes_per_epoch = 16;
  std::size_t updates_per_epoch = 16;
  std::size_t batch_size = 64;
  double learning_rate = 0.05;
  std::size_t d_emb = 16;
  double init_scale = 0.1;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Exploration rate of the epsilon-greedy behaviour policy.
  double epsilon = 0.5;
  /// Tabular Q-learning step size.
  double q_learning_rate = 0.5;
  SegmentRule segments;
  /// Start episodes from a uniformly drawn non-absorbing state.
  bool random_start = false;
  std::size_t buffer_capacity = 2'000;
  std::size_t probe_count = 1000;
  std::uint64_t seed = 0;
};

/// Throws PreconditionError naming the first invalid field.
void validate_rcrl_config(const RcrlConfig& config);

struct EpochLog {
  std::size_t epoch = 0;
  double aux_loss = 0.0;
  double pos_cos_mean = 0.0;
  double pos_cos_std = 0.0;
  double neg_cos_mean = 0.0;
  double neg_cos_std = 0.0;
  /// Mean undiscounted return of the episodes collected this epoch.
  double episode_return = 0.0;
};

struct RcrlResult {
  std::vector<EpochLog> log;
  EmbeddingParams initial_params;
  EmbeddingParams params;
  /// Initial and trained parameters probed on the final buffer with the same
  /// probe stream.
  RepresentationReport initial_report;
  RepresentationReport final_report;
  std::vector<double> q_table;
  std::size_t buffer_steps = 0;
};

/// Alternates epsilon-greedy collection with tabular Q-learning and gradient
/// steps on the auxiliary loss; only the auxiliary loss moves the embedding.
RcrlResult train_rcrl_demo(const TabularMdp& env, const RcrlConfig& config);

}  // namespace zirrel
