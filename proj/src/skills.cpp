#include "sepoa/skills.hpp"

#include <algorithm>
#include <cmath>

#include "sepoa/errors.hpp"

namespace sepoa {

using Eigen::MatrixXd;
using Eigen::VectorXd;

SkillVector sample_skill(const SkillSpace& space, Rng& rng) {
  SkillVector z;
  z.values.assign(static_cast<std::size_t>(space.dim), 0.0);
  if (space.is_discrete()) {
    z.values[uniform_index(rng, z.values.size())] = 1.0;
    return z;
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  double norm = 0.0;
  while (norm < 1e-12) {
    for (auto& v : z.values) v = normal(rng);
    norm = 0.0;
    for (double v : z.values) norm += v * v;
    norm = std::sqrt(norm);
  }
  for (auto& v : z.values) v /= norm;
  return z;
}

int skill_index(const SkillVector& z) {
  return static_cast<int>(std::max_element(z.values.begin(), z.values.end()) - z.values.begin());
}

double knn_entropy(std::span<const double> h, const Eigen::Ref<const MatrixXd>& particles, int k) {
  if (k < 1 || particles.cols() < k)
    throw TooFewParticles("need at least k=" + std::to_string(k) + " particles, have " +
                          std::to_string(particles.cols()));
  if (static_cast<Eigen::Index>(h.size()) != particles.rows())
    throw DimensionMismatch("feature and particle dimensions differ");
  Eigen::Map<const VectorXd> hv(h.data(), particles.rows());
  std::vector<double> dist(static_cast<std::size_t>(particles.cols()));
  for (Eigen::Index j = 0; j < particles.cols(); ++j) dist[j] = (particles.col(j) - hv).norm();
  std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
  double total = 0.0;
  for (int i = 0; i < k; ++i) total += dist[i];
  return std::log(1.0 + total / k);
}

double aps_intrinsic_reward(std::span<const double> feature_next, const SkillVector& z,
                            const Eigen::Ref<const MatrixXd>& particles, int k, double beta) {
  if (feature_next.size() != z.dim()) throw DimensionMismatch("feature and skill dimensions differ");
  double align = 0.0;
  for (std::size_t i = 0; i < z.dim(); ++i) align += feature_next[i] * z.values[i];
  return align + beta * knn_entropy(feature_next, particles, k);
}

double aps_intrinsic_reward(const FeatureNet& phi, const SkillVector& z, std::span<const double> next_obs,
                            const Eigen::Ref<const MatrixXd>& particles, int k, double beta) {
  VectorXd h = phi.features(next_obs);
  return aps_intrinsic_reward(std::span<const double>(h.data(), h.size()), z, particles, k, beta);
}

// ---------------------------------------------------------------------------

FeatureNet::FeatureNet(int obs_dim, int skill_dim, int hidden, double lr, std::uint64_t seed)
    : net_({obs_dim, hidden, hidden, skill_dim}, OutputActivation::UnitNormalize, seed),
      adam_(net_.param_count(), lr) {}

double FeatureNet::update(const MatrixXd& next_obs, const MatrixXd& skills) {
  ParamVector grad;
  const auto n = static_cast<double>(next_obs.cols());
  double loss = loss_and_grad(
      net_, next_obs,
      [&](const MatrixXd& phi, MatrixXd& d_out) {
        d_out = -skills / n;
        return -(phi.array() * skills.array()).sum() / n;
      },
      grad);
  adam_step(adam_, net_.params(), grad);
  return loss;
}

Discriminator::Discriminator(int obs_dim, int n_skills, int hidden, double lr, std::uint64_t seed)
    : net_({obs_dim, hidden, hidden, n_skills}, OutputActivation::Identity, seed),
      adam_(net_.param_count(), lr) {}

double Discriminator::log_prob(std::span<const double> obs, int skill) const {
  return losses::log_softmax(logits(obs))(skill);
}

double Discriminator::update(const MatrixXd& obs, std::span<const int> skills) {
  ParamVector grad;
  double loss = loss_and_grad(
      net_, obs,
      [&](const MatrixXd& logits, MatrixXd& d_out) {
        return losses::softmax_cross_entropy(logits, skills, d_out);
      },
      grad);
  adam_step(adam_, net_.params(), grad);
  return loss;
}

double diayn_intrinsic_reward(const Discriminator& q, std::span<const double> obs, int skill) {
  return q.log_prob(obs, skill) + std::log(static_cast<double>(q.skill_count()));
}

// ---------------------------------------------------------------------------

SkillPolicy::SkillPolicy(int obs_dim, int action_count, SkillSpace space, Options options,
                         std::uint64_t seed)
    : obs_dim_(obs_dim), action_count_(action_count), space_(space), options_(options) {
  int out = successor_head() ? action_count * space.dim : action_count;
  net_ = Mlp({obs_dim + space.dim, options.hidden, options.hidden, out}, OutputActivation::Identity, seed);
  target_ = net_;
  adam_ = AdamState(net_.param_count(), options.lr);
}

MatrixXd SkillPolicy::inputs(const MatrixXd& obs, const MatrixXd& z) const {
  MatrixXd in(obs.rows() + z.rows(), obs.cols());
  in.topRows(obs.rows()) = obs;
  in.bottomRows(z.rows()) = z;
  return in;
}

MatrixXd SkillPolicy::project(const MatrixXd& raw, const MatrixXd& z) const {
  if (!successor_head()) return raw;
  const int d = space_.dim;
  MatrixXd q(action_count_, raw.cols());
  for (Eigen::Index b = 0; b < raw.cols(); ++b)
    for (int a = 0; a < action_count_; ++a) q(a, b) = raw.col(b).segment(a * d, d).dot(z.col(b));
  return q;
}

MatrixXd SkillPolicy::successor_features(std::span<const double> obs, const SkillVector& z) const {
  if (!successor_head()) throw Error("successor features requested from a Q-head policy");
  MatrixXd o = Eigen::Map<const MatrixXd>(obs.data(), static_cast<Eigen::Index>(obs.size()), 1);
  MatrixXd zz = Eigen::Map<const MatrixXd>(z.values.data(), static_cast<Eigen::Index>(z.dim()), 1);
  VectorXd raw = net_.forward(inputs(o, zz)).col(0);
  const int d = space_.dim;
  MatrixXd psi(action_count_, d);
  for (int a = 0; a < action_count_; ++a) psi.row(a) = raw.segment(a * d, d).transpose();
  return psi;
}

MatrixXd SkillPolicy::q_values(const MatrixXd& obs, const MatrixXd& z, bool use_target) const {
  const Mlp& net = use_target ? target_ : net_;
  return project(net.forward(inputs(obs, z)), z);
}

VectorXd SkillPolicy::q_values(std::span<const double> obs, const SkillVector& z) const {
  if (static_cast<int>(obs.size()) != obs_dim_) throw DimensionMismatch("policy observation size");
  if (static_cast<int>(z.dim()) != space_.dim) throw DimensionMismatch("policy skill size");
  MatrixXd o = Eigen::Map<const MatrixXd>(obs.data(), obs_dim_, 1);
  MatrixXd zz = Eigen::Map<const MatrixXd>(z.values.data(), space_.dim, 1);
  return q_values(o, zz, false).col(0);
}

namespace {

VectorXd softmax_probs(const Eigen::Ref<const VectorXd>& q, double alpha) {
  VectorXd p(q.size());
  if (alpha <= 0.0) {
    Eigen::Index best = 0;
    q.maxCoeff(&best);
    p.setZero();
    p(best) = 1.0;
    return p;
  }
  VectorXd scaled = (q.array() - q.maxCoeff()) / alpha;
  p = scaled.array().exp();
  return p / p.sum();
}

}  // namespace

std::vector<double> SkillPolicy::action_probabilities(std::span<const double> obs, const SkillVector& z) const {
  VectorXd p = softmax_probs(q_values(obs, z), options_.alpha);
  return {p.data(), p.data() + p.size()};
}

int sample_softmax(const Eigen::Ref<const VectorXd>& q, double alpha, Rng& rng) {
  VectorXd p = softmax_probs(q, alpha);
  double u = uniform01(rng);
  double acc = 0.0;
  for (Eigen::Index a = 0; a < p.size(); ++a) {
    acc += p(a);
    if (u < acc) return static_cast<int>(a);
  }
  // Rounding left u above the cumulative sum; return the last positive entry.
  for (Eigen::Index a = p.size(); a-- > 0;)
    if (p(a) > 0.0) return static_cast<int>(a);
  return 0;
}

int SkillPolicy::act(std::span<const double> obs, const SkillVector& z, Rng& rng) const {
  return sample_softmax(q_values(obs, z), options_.alpha, rng);
}

void SkillPolicy::after_update() {
  ++updates_;
  if (options_.target_sync > 0 && updates_ % options_.target_sync == 0) target_ = net_;
}

double successor_critic_update(SkillPolicy& policy, const CriticBatch& batch, double gamma, Rng& rng) {
  const auto n = batch.obs.cols();
  // Bootstrapped targets: a' from the current softmax policy, valued by the target copy.
  MatrixXd q_next_online = policy.q_values(batch.next_obs, batch.skills, false);
  MatrixXd q_next_target = policy.q_values(batch.next_obs, batch.skills, true);
  VectorXd targets(n);
  for (Eigen::Index b = 0; b < n; ++b) {
    int a_next = sample_softmax(q_next_online.col(b), policy.alpha(), rng);
    targets(b) = batch.rewards(b) + gamma * q_next_target(a_next, b);
  }

  const int d = policy.space().dim;
  const bool sf = policy.successor_head();
  ParamVector grad;
  double loss = loss_and_grad(
      policy.net(), policy.inputs(batch.obs, batch.skills),
      [&](const MatrixXd& raw, MatrixXd& d_out) {
        MatrixXd q = policy.project(raw, batch.skills);
        double total = 0.0;
        for (Eigen::Index b = 0; b < n; ++b) {
          const int a = batch.actions[static_cast<std::size_t>(b)];
          double td = q(a, b) - targets(b);
          total += td * td;
          double g = 2.0 * td / static_cast<double>(n);
          if (sf)
            d_out.col(b).segment(a * d, d) = g * batch.skills.col(b);
          else
            d_out(a, b) = g;
        }
        return total / static_cast<double>(n);
      },
      grad);
  adam_step(policy.optimizer(), policy.net().params(), grad);
  policy.after_update();
  return loss;
}

CriticBatch make_critic_batch(const ReplayBuffer& buffer, const Environment& env,
                              std::span<const std::size_t> indices, const SkillVector* skill) {
  const auto n = static_cast<Eigen::Index>(indices.size());
  const int sd = env.spec().state_dim;
  const auto& bounds = env.spec().bounds;
  CriticBatch batch;
  const auto zdim = static_cast<Eigen::Index>(skill != nullptr ? skill->dim() : buffer.at(indices[0]).skill.dim());
  batch.obs.resize(sd, n);
  batch.next_obs.resize(sd, n);
  batch.skills.resize(zdim, n);
  batch.rewards.resize(n);
  batch.actions.resize(indices.size());
  for (Eigen::Index b = 0; b < n; ++b) {
    const auto& t = buffer.at(indices[static_cast<std::size_t>(b)]);
    for (int i = 0; i < sd; ++i) {
      batch.obs(i, b) = t.state[i] / bounds[i];
      batch.next_obs(i, b) = t.next_state[i] / bounds[i];
    }
    const auto& z = skill != nullptr ? *skill : t.skill;
    batch.skills.col(b) = Eigen::Map<const VectorXd>(z.values.data(), zdim);
    batch.rewards(b) = t.r_hat;
    batch.actions[static_cast<std::size_t>(b)] = t.action;
  }
  return batch;
}

// ---------------------------------------------------------------------------

SkillPolicy make_skill_policy(const Environment& env, const SkillSpace& space,
                              const SkillPolicy::Options& options, std::uint64_t seed) {
  return SkillPolicy(env.spec().state_dim, env.spec().action_count, space, options,
                     stream_seed(seed, "init.policy"));
}

namespace {

/// Sliding window of recent next-state observations and their features.
class ParticleSet {
 public:
  ParticleSet(int obs_dim, int feat_dim, int capacity)
      : obs_(obs_dim, capacity), feats_(feat_dim, capacity) {}

  void push(std::span<const double> obs, const VectorXd& feat) {
    obs_.col(head_) = Eigen::Map<const VectorXd>(obs.data(), obs_.rows());
    feats_.col(head_) = feat;
    head_ = (head_ + 1) % obs_.cols();
    count_ = std::min<Eigen::Index>(count_ + 1, obs_.cols());
  }

  /// Recomputes all stored features with the current feature net.
  void refresh(const FeatureNet& phi) {
    if (count_ > 0) feats_.leftCols(count_) = phi.features(MatrixXd(obs_.leftCols(count_)));
  }

  Eigen::Index size() const { return count_; }
  Eigen::Ref<const MatrixXd> features() const { return feats_.leftCols(count_); }

 private:
  MatrixXd obs_;
  MatrixXd feats_;
  Eigen::Index head_ = 0;
  Eigen::Index count_ = 0;
};

}  // namespace

PretrainResult pretrain(Environment& env, const SkillSpace& space, const PretrainConfig& config,
                        std::uint64_t seed) {
  const auto& spec = env.spec();
  PretrainResult result;
  result.policy = make_skill_policy(env, space, config.policy, seed);
  result.buffer = ReplayBuffer(config.buffer_capacity);
  if (space.is_discrete())
    result.discriminator.emplace(spec.state_dim, space.dim, config.feature_hidden, config.feature_lr,
                                 stream_seed(seed, "init.discriminator"));
  else
    result.features.emplace(spec.state_dim, space.dim, config.feature_hidden, config.feature_lr,
                            stream_seed(seed, "init.features"));

  Rng env_rng = make_stream(seed, "pretrain.env");
  Rng skill_rng = make_stream(seed, "pretrain.skill");
  Rng act_rng = make_stream(seed, "pretrain.policy");
  Rng batch_rng = make_stream(seed, "pretrain.batch");
  ParticleSet particles(spec.state_dim, space.dim, config.particle_count);

  long total = 0;
  std::vector<std::size_t> idx(static_cast<std::size_t>(config.batch_size));
  while (total < config.steps) {
    SkillVector z = sample_skill(space, skill_rng);
    result.buffer.begin_trajectory(z);
    auto state = env.reset(env_rng());
    double episode_return = 0.0;
    bool done = false;
    while (!done && total < config.steps) {
      auto obs = env.observe(state);
      int action = result.policy.act(obs, z, act_rng);
      auto step = env.step(state, action);
      done = step.done;
      auto next_obs = env.observe(step.next_state);

      double r_int = 0.0;
      if (result.features) {
        VectorXd h = result.features->features(next_obs);
        std::span<const double> hs(h.data(), h.size());
        if (particles.size() >= config.knn_k)
          r_int = aps_intrinsic_reward(hs, z, particles.features(), config.knn_k, config.beta);
        else
          r_int = h.dot(Eigen::Map<const VectorXd>(z.values.data(), h.size()));
        particles.push(next_obs, h);
      } else {
        r_int = diayn_intrinsic_reward(*result.discriminator, next_obs, skill_index(z));
      }
      episode_return += r_int;

      Transition t;
      t.state = state;
      t.action = action;
      t.next_state = step.next_state;
      t.r_gt = step.r_gt;
      t.r_hat = r_int;
      result.buffer.append(std::move(t));
      state = std::move(step.next_state);
      ++total;

      if (result.features && config.particle_refresh > 0 && total % config.particle_refresh == 0)
        particles.refresh(*result.features);

      if (static_cast<long>(result.buffer.size()) >= config.warmup && total % config.update_every == 0) {
        for (auto& i : idx) i = uniform_index(batch_rng, result.buffer.size());
        auto batch = make_critic_batch(result.buffer, env, idx);
        if (result.features) {
          result.features->update(batch.next_obs, batch.skills);
        } else {
          std::vector<int> labels(idx.size());
          for (std::size_t b = 0; b < idx.size(); ++b) labels[b] = skill_index(result.buffer.at(idx[b]).skill);
          result.discriminator->update(batch.next_obs, labels);
        }
        successor_critic_update(result.policy, batch, config.gamma, batch_rng);
      }
    }
    result.buffer.end_trajectory();
    if (done) result.episode_intrinsic_returns.push_back(episode_return);
  }
  return result;
}

std::vector<std::pair<double, double>> rollout_endpoints(Environment& env, const SkillPolicy& policy,
                                                         std::span<const SkillVector> skills,
                                                         std::uint64_t seed) {
  std::vector<std::pair<double, double>> out;
  for (const auto& z : skills) {
    Rng act_rng(stream_seed(seed, "rollout.policy"));
    auto state = env.reset(stream_seed(seed, "rollout.env"));
    bool done = false;
    while (!done) {
      auto step = env.step(state, policy.act(env.observe(state), z, act_rng));
      done = step.done;
      state = std::move(step.next_state);
    }
    out.emplace_back(state[0], state[1]);
  }
  return out;
}

double mean_pairwise_distance(std::span<const std::pair<double, double>> points) {
  double total = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      total += std::hypot(points[i].first - points[j].first, points[i].second - points[j].second);
      ++pairs;
    }
  return pairs > 0 ? total / static_cast<double>(pairs) : 0.0;
}

}  // namespace sepoa
