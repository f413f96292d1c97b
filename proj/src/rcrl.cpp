#include "zirrel/rcrl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "zirrel/error.hpp"

namespace zirrel {

namespace {

double logistic(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

void mean_std(const std::vector<double>& v, double& mean, double& std_dev) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  std_dev = std::sqrt(var / static_cast<double>(v.size()));
}

// Flat views over the three tables, in a fixed order.
std::size_t param_count(const EmbeddingParams& p) {
  return p.state_table.size() + p.action_table.size() + p.discriminator.size();
}

double& param_ref(EmbeddingParams& p, std::size_t i) {
  if (i < p.state_table.size()) return p.state_table[i];
  i -= p.state_table.size();
  if (i < p.action_table.size()) return p.action_table[i];
  return p.discriminator[i - p.action_table.size()];
}

class Optimizer {
 public:
  Optimizer(const RcrlConfig& config, std::size_t size)
      : config_(config), m_(size, 0.0), v_(size, 0.0) {}

  void step(EmbeddingParams& params, EmbeddingParams& grad) {
    ++t_;
    const double lr = config_.learning_rate;
    const std::size_t n = m_.size();
    if (config_.optimizer == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < n; ++i) param_ref(params, i) -= lr * param_ref(grad, i);
      return;
    }
    const double b1 = config_.adam_beta1;
    const double b2 = config_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < n; ++i) {
      const double g = param_ref(grad, i);
      m_[i] = b1 * m_[i] + (1.0 - b1) * g;
      v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
      const double m_hat = m_[i] / c1;
      const double v_hat = v_[i] / c2;
      param_ref(params, i) -= lr * m_hat / (std::sqrt(v_hat) + config_.adam_eps);
    }
  }

 private:
  const RcrlConfig& config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

std::size_t epsilon_greedy(const std::vector<double>& q, std::size_t s, std::size_t num_actions,
                           double epsilon, Rng& rng) {
  if (rng.uniform() < epsilon) return rng.below(num_actions);
  const double* row = q.data() + s * num_actions;
  const double best = *std::max_element(row, row + num_actions);
  std::vector<std::size_t> ties;
  for (std::size_t a = 0; a < num_actions; ++a) {
    if (row[a] == best) ties.push_back(a);
  }
  return ties[rng.below(ties.size())];
}

}  // namespace

std::vector<std::size_t> segment_trajectory(const Trajectory& traj, const SegmentRule& rule) {
  if (rule.mode == SegmentMode::kThreshold && !(rule.threshold > 0.0)) {
    throw PreconditionError("segment threshold must be positive");
  }
  std::vector<std::size_t> labels;
  labels.reserve(traj.steps.size());
  std::size_t current = 0;
  double cumulative = 0.0;
  for (const auto& step : traj.steps) {
    labels.push_back(current);
    if (rule.mode == SegmentMode::kSparse) {
      if (step.reward != 0.0) ++current;
    } else {
      cumulative += step.reward;
      if (cumulative > rule.threshold) {
        ++current;
        cumulative = 0.0;
      }
    }
  }
  return labels;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, SegmentRule rule, std::size_t num_actions)
    : capacity_(capacity), rule_(rule), num_actions_(num_actions) {
  if (capacity == 0) throw PreconditionError("replay buffer capacity must be positive");
  if (num_actions == 0) throw PreconditionError("replay buffer needs num_actions > 0");
  if (rule.mode == SegmentMode::kThreshold && !(rule.threshold > 0.0)) {
    throw PreconditionError("segment threshold must be positive");
  }
}

void ReplayBuffer::add(Trajectory traj) {
  if (traj.steps.empty()) return;
  Entry entry;
  entry.labels = segment_trajectory(traj, rule_);
  entry.first_segment = next_segment_;
  next_segment_ += entry.labels.back() + 1;
  steps_ += traj.steps.size();
  entry.traj = std::move(traj);
  entries_.push_back(std::move(entry));
  while (entries_.size() > 1 && steps_ > capacity_) {
    steps_ -= entries_.front().traj.steps.size();
    entries_.pop_front();
  }
  reindex();
}

void ReplayBuffer::reindex() {
  x_.clear();
  segment_.clear();
  segment_slot_.clear();
  members_.clear();
  eligible_.clear();
  std::size_t base_segment = entries_.empty() ? 0 : entries_.front().first_segment;
  for (const auto& entry : entries_) {
    for (std::size_t t = 0; t < entry.traj.steps.size(); ++t) {
      const std::size_t p = x_.size();
      const auto& step = entry.traj.steps[t];
      x_.push_back(step.state * num_actions_ + step.action);
      const std::size_t key = entry.first_segment + entry.labels[t];
      segment_.push_back(key);
      const std::size_t slot = key - base_segment;
      if (slot >= members_.size()) members_.resize(slot + 1);
      members_[slot].push_back(p);
      segment_slot_.push_back(slot);
    }
  }
  for (std::size_t p = 0; p < x_.size(); ++p) {
    if (members_[segment_slot_[p]].size() >= 2) eligible_.push_back(p);
  }
}

const std::vector<std::size_t>& ReplayBuffer::segment_members(std::size_t p) const {
  return members_[segment_slot_[p]];
}

ContrastiveBatch sample_contrastive_batch(const ReplayBuffer& buffer, std::size_t batch_size,
                                          Rng& rng) {
  const auto& eligible = buffer.eligible_anchors();
  if (eligible.empty()) {
    throw PreconditionError("replay buffer has no segment with at least two steps");
  }
  ContrastiveBatch batch;
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t anchor = eligible[rng.below(eligible.size())];
    const auto& members = buffer.segment_members(anchor);
    // Uniform over members other than the anchor.
    std::size_t pick = rng.below(members.size() - 1);
    if (members[pick] >= anchor) ++pick;
    const std::size_t positive = members[pick];
    const std::size_t negative = rng.below(buffer.size());
    batch.anchor_steps.push_back(anchor);
    batch.positive_steps.push_back(positive);
    batch.negative_steps.push_back(negative);
    batch.anchors.push_back(buffer.x_at(anchor));
    batch.positives.push_back(buffer.x_at(positive));
    batch.negatives.push_back(buffer.x_at(negative));
  }
  return batch;
}

EmbeddingParams EmbeddingParams::random(std::size_t num_states, std::size_t num_actions,
                                        std::size_t d_emb, Rng& rng, double scale) {
  EmbeddingParams p = zeros(num_states, num_actions, d_emb);
  for (auto& v : p.state_table) v = rng.uniform(-scale, scale);
  for (auto& v : p.action_table) v = rng.uniform(-scale, scale);
  for (auto& v : p.discriminator) v = rng.uniform(-scale, scale);
  return p;
}

EmbeddingParams EmbeddingParams::zeros(std::size_t num_states, std::size_t num_actions,
                                       std::size_t d_emb) {
  if (d_emb == 0) throw PreconditionError("d_emb must be positive");
  EmbeddingParams p;
  p.num_states = num_states;
  p.num_actions = num_actions;
  p.d_emb = d_emb;
  p.state_table.assign(num_states * d_emb, 0.0);
  p.action_table.assign(num_actions * d_emb, 0.0);
  p.discriminator.assign(d_emb * d_emb, 0.0);
  return p;
}

std::vector<double> embed(const EmbeddingParams& params, std::size_t x) {
  const std::size_t s = x / params.num_actions;
  const std::size_t a = x % params.num_actions;
  if (s >= params.num_states) throw PreconditionError("state-action index out of range");
  const std::size_t d = params.d_emb;
  std::vector<double> z(d);
  for (std::size_t k = 0; k < d; ++k) {
    z[k] = params.state_table[s * d + k] * params.action_table[a * d + k];
  }
  return z;
}

double discriminator_out(const EmbeddingParams& params, const std::vector<double>& z1,
                         const std::vector<double>& z2) {
  const std::size_t d = params.d_emb;
  if (z1.size() != d || z2.size() != d) throw PreconditionError("embedding length mismatch");
  double u = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < d; ++j) row += params.discriminator[i * d + j] * z2[j];
    u += z1[i] * row;
  }
  return logistic(u);
}

AuxLoss aux_loss_and_grads(const EmbeddingParams& params, const ContrastiveBatch& batch) {
  const std::size_t B = batch.size();
  if (B == 0) throw PreconditionError("auxiliary loss needs a non-empty batch");
  if (batch.positives.size() != B || batch.negatives.size() != B) {
    throw PreconditionError("batch lists have unequal lengths");
  }
  const std::size_t d = params.d_emb;
  const std::size_t A = params.num_actions;
  AuxLoss out;
  out.grad = EmbeddingParams::zeros(params.num_states, params.num_actions, d);
  const double scale = 1.0 / static_cast<double>(2 * B);

  std::vector<double> w_z2(d);
  std::vector<double> wt_z1(d);
  const auto backprop_embedding = [&](std::size_t x, const std::vector<double>& dz) {
    const std::size_t s = x / A;
    const std::size_t a = x % A;
    for (std::size_t k = 0; k < d; ++k) {
      out.grad.state_table[s * d + k] += dz[k] * params.action_table[a * d + k];
      out.grad.action_table[a * d + k] += dz[k] * params.state_table[s * d + k];
    }
  };
  const auto accumulate = [&](std::size_t x1, std::size_t x2, double y) {
    const auto z1 = embed(params, x1);
    const auto z2 = embed(params, x2);
    std::fill(w_z2.begin(), w_z2.end(), 0.0);
    std::fill(wt_z1.begin(), wt_z1.end(), 0.0);
    double u = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        const double w = params.discriminator[i * d + j];
        w_z2[i] += w * z2[j];
        wt_z1[j] += w * z1[i];
      }
      u += z1[i] * w_z2[i];
    }
    const double p = logistic(u);
    out.loss += scale * (p - y) * (p - y);
    const double g = scale * 2.0 * (p - y) * p * (1.0 - p);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) out.grad.discriminator[i * d + j] += g * z1[i] * z2[j];
    }
    std::vector<double> dz1(d);
    std::vector<double> dz2(d);
    for (std::size_t k = 0; k < d; ++k) {
      dz1[k] = g * w_z2[k];
      dz2[k] = g * wt_z1[k];
    }
    backprop_embedding(x1, dz1);
    backprop_embedding(x2, dz2);
  };
  for (std::size_t i = 0; i < B; ++i) {
    accumulate(batch.anchors[i], batch.positives[i], 0.0);
    accumulate(batch.anchors[i], batch.negatives[i], 1.0);
  }
  return out;
}

double cosine_similarity(const std::vector<double>& z1, const std::vector<double>& z2) {
  if (z1.size() != z2.size()) throw PreconditionError("cosine of vectors with different lengths");
  double dot = 0.0;
  double n1 = 0.0;
  double n2 = 0.0;
  for (std::size_t k = 0; k < z1.size(); ++k) {
    dot += z1[k] * z2[k];
    n1 += z1[k] * z1[k];
    n2 += z2[k] * z2[k];
  }
  if (n1 == 0.0 || n2 == 0.0) throw PreconditionError("cosine similarity of a zero vector");
  return std::clamp(dot / (std::sqrt(n1) * std::sqrt(n2)), -1.0, 1.0);
}

RepresentationReport representation_report(const EmbeddingParams& params,
                                            const ReplayBuffer& buffer, std::size_t probe_count,
                                            Rng& rng) {
  RepresentationReport report;
  if (probe_count == 0) return report;
  const ContrastiveBatch probes = sample_contrastive_batch(buffer, probe_count, rng);
  std::vector<double> pos(probe_count);
  std::vector<double> neg(probe_count);
  for (std::size_t i = 0; i < probe_count; ++i) {
    const auto za = embed(params, probes.anchors[i]);
    pos[i] = cosine_similarity(za, embed(params, probes.positives[i]));
    neg[i] = cosine_similarity(za, embed(params, probes.negatives[i]));
  }
  report.probe_count = probe_count;
  mean_std(pos, report.pos_mean, report.pos_std);
  mean_std(neg, report.neg_mean, report.neg_std);
  return report;
}

void validate_rcrl_config(const RcrlConfig& c) {
  const auto fail = [](const std::string& what) { throw PreconditionError("rcrl config: " + what); };
  if (c.epochs == 0) fail("epochs must be positive");
  if (c.episodes_per_epoch == 0) fail("episodes_per_epoch must be positive");
  if (c.batch_size == 0) fail("batch_size must be positive");
  if (!(c.learning_rate >= 0.0) || !std::isfinite(c.learning_rate)) {
    fail("learning_rate must be finite and non-negative");
  }
  if (c.d_emb == 0) fail("d_emb must be positive");
  if (!(c.init_scale > 0.0)) fail("init_scale must be positive");
  if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0)) fail("adam_beta1 must lie in [0, 1)");
  if (!(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0)) fail("adam_beta2 must lie in [0, 1)");
  if (!(c.adam_eps > 0.0)) fail("adam_eps must be positive");
  if (!(c.epsilon >= 0.0 && c.epsilon <= 1.0)) fail("epsilon must lie in [0, 1]");
  if (!(c.q_learning_rate >= 0.0 && c.q_learning_rate <= 1.0)) {
    fail("q_learning_rate must lie in [0, 1]");
  }
  if (c.segments.mode == SegmentMode::kThreshold && !(c.segments.threshold > 0.0)) {
    fail("segment threshold must be positive");
  }
  if (c.buffer_capacity == 0) fail("buffer_capacity must be positive");
}

RcrlResult train_rcrl_demo(const TabularMdp& env, const RcrlConfig& config) {
  validate_rcrl_config(config);
  require_valid(env);
  const std::size_t S = env.num_states;
  const std::size_t A = env.num_actions;
  const auto absorbing = absorbing_mask(env);
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s < S; ++s) {
    if (!absorbing[s]) starts.push_back(s);
  }
  if (config.random_start && starts.empty()) {
    throw PreconditionError("random_start needs a non-absorbing state");
  }

  Rng init_rng(mix_seed(config.seed, 1));
  Rng env_rng(mix_seed(config.seed, 2));
  Rng batch_rng(mix_seed(config.seed, 3));

  RcrlResult result;
  result.params = EmbeddingParams::random(S, A, config.d_emb, init_rng, config.init_scale);
  result.initial_params = result.params;
  result.q_table.assign(S * A, 0.0);
  std::vector<double>& q = result.q_table;
  ReplayBuffer buffer(config.buffer_capacity, config.segments, A);
  Optimizer opt(config, param_count(result.params));
  const double nan = std::numeric_limits<double>::quiet_NaN();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    EpochLog row;
    row.epoch = epoch;
    double return_sum = 0.0;
    for (std::size_t e = 0; e < config.episodes_per_epoch; ++e) {
      std::size_t s = config.random_start ? starts[env_rng.below(starts.size())]
                                          : env.initial_state;
      Trajectory traj;
      double total = 0.0;
      while (traj.steps.size() < env.horizon_cap) {
        const std::size_t a = epsilon_greedy(q, s, A, config.epsilon, env_rng);
        const double r = env.r(s, a);
        traj.steps.push_back({s, a, r});
        total += r;
        if (absorbing[s]) {
          traj.terminated = true;
          break;
        }
        const std::size_t next = env_rng.categorical(env.row(s, a));
        double target = r;
        if (!absorbing[next]) {
          const double* qn = q.data() + next * A;
          target += env.gamma * *std::max_element(qn, qn + A);
        }
        q[s * A + a] += config.q_learning_rate * (target - q[s * A + a]);
        if (absorbing[next]) {
          traj.terminated = true;
          break;
        }
        s = next;
      }
      return_sum += total;
      buffer.add(std::move(traj));
    }
    row.episode_return = return_sum / static_cast<double>(config.episodes_per_epoch);

    if (buffer.eligible_anchors().empty()) {
      row.aux_loss = nan;
      row.pos_cos_mean = row.pos_cos_std = row.neg_cos_mean = row.neg_cos_std = nan;
      result.log.push_back(row);
      continue;
    }
    double loss_sum = 0.0;
    for (std::size_t u = 0; u < config.updates_per_epoch; ++u) {
      const ContrastiveBatch batch = sample_contrastive_batch(buffer, config.batch_size, batch_rng);
      AuxLoss aux = aux_loss_and_grads(result.params, batch);
      loss_sum += aux.loss;
      opt.step(result.params, aux.grad);
    }
    row.aux_loss = config.updates_per_epoch == 0
                       ? nan
                       : loss_sum / static_cast<double>(config.updates_per_epoch);
    Rng probe_rng(mix_seed(config.seed, 0x1000 + epoch));
    const RepresentationReport rep =
        representation_report(result.params, buffer, config.probe_count, probe_rng);
    if (rep.empty()) {
      row.pos_cos_mean = row.pos_cos_std = row.neg_cos_mean = row.neg_cos_std = nan;
    } else {
      row.pos_cos_mean = rep.pos_mean;
      row.pos_cos_std = rep.pos_std;
      row.neg_cos_mean = rep.neg_mean;
      row.neg_cos_std = rep.neg_std;
    }
    result.log.push_back(row);
  }

  result.buffer_steps = buffer.size();
  if (!buffer.eligible_anchors().empty()) {
    Rng initial_probe(mix_seed(config.seed, 4));
    result.initial_report =
        representation_report(result.initial_params, buffer, config.probe_count, initial_probe);
    Rng final_probe(mix_seed(config.seed, 4));
    result.final_report =
        representation_report(result.params, buffer, config.probe_count, final_probe);
  }
  return result;
}

}  // namespace zirrel
