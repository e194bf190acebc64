#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sepoa/approx.hpp"
#include "sepoa/core.hpp"
#include "sepoa/envs.hpp"
#include "sepoa/rng.hpp"

namespace sepoa {

struct SkillSpace {
  enum class Kind { ContinuousSphere, Discrete };

  Kind kind = Kind::ContinuousSphere;
  int dim = 10;  // d_z, or the number of discrete skills

  static SkillSpace continuous(int d) { return {Kind::ContinuousSphere, d}; }
  static SkillSpace discrete(int n) { return {Kind::Discrete, n}; }
  bool is_discrete() const { return kind == Kind::Discrete; }
};

/// Continuous: normalized standard-normal draw. Discrete: uniform one-hot.
SkillVector sample_skill(const SkillSpace& space, Rng& rng);

/// Index of the hot entry of a discrete skill.
int skill_index(const SkillVector& z);

/// log(1 + mean distance from h to its k nearest particles). Particles are
/// the columns of `particles`.
double knn_entropy(std::span<const double> h, const Eigen::Ref<const Eigen::MatrixXd>& particles, int k);

/// phi(s')^T z + beta * knn_entropy(phi(s'), particles, k), given the
/// already-computed feature phi(s').
double aps_intrinsic_reward(std::span<const double> feature_next, const SkillVector& z,
                            const Eigen::Ref<const Eigen::MatrixXd>& particles, int k, double beta);

/// State feature map phi: obs -> unit sphere in R^{d_z}.
class FeatureNet {
 public:
  FeatureNet() = default;
  FeatureNet(int obs_dim, int skill_dim, int hidden, double lr, std::uint64_t seed);

  Eigen::VectorXd features(std::span<const double> obs) const { return net_.forward(obs); }
  Eigen::MatrixXd features(const Eigen::MatrixXd& obs) const { return net_.forward(obs); }

  /// One Adam step on mean(-phi(s')^T z). Returns the pre-step loss.
  double update(const Eigen::MatrixXd& next_obs, const Eigen::MatrixXd& skills);

  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }

 private:
  Mlp net_;
  AdamState adam_;
};

double aps_intrinsic_reward(const FeatureNet& phi, const SkillVector& z, std::span<const double> next_obs,
                            const Eigen::Ref<const Eigen::MatrixXd>& particles, int k, double beta);

/// DIAYN skill discriminator q(z|s) over discrete skills.
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(int obs_dim, int n_skills, int hidden, double lr, std::uint64_t seed);

  Eigen::VectorXd logits(std::span<const double> obs) const { return net_.forward(obs); }
  double log_prob(std::span<const double> obs, int skill) const;
  int skill_count() const { return net_.output_size(); }

  /// One Adam step on softmax cross-entropy. Returns the pre-step loss.
  double update(const Eigen::MatrixXd& obs, std::span<const int> skills);

  Mlp& net() { return net_; }

 private:
  Mlp net_;
  AdamState adam_;
};

/// log q(z|s) - log(1/n).
double diayn_intrinsic_reward(const Discriminator& q, std::span<const double> obs, int skill);

/// Skill-conditioned softmax policy pi(a|s,z) = softmax(Q(s,a,z)/alpha).
/// Continuous skills use successor features, Q = Psi(s,a)^T z, with the
/// net emitting action_count x d_z values; discrete skills use a plain
/// Q head. Both nets take obs concatenated with z.
class SkillPolicy {
 public:
  struct Options {
    int hidden = 64;
    double lr = 5e-4;
    double alpha = 0.2;
    int target_sync = 100;
  };

  SkillPolicy() = default;
  SkillPolicy(int obs_dim, int action_count, SkillSpace space, Options options, std::uint64_t seed);

  bool successor_head() const { return !space_.is_discrete(); }
  int action_count() const { return action_count_; }
  int obs_dim() const { return obs_dim_; }
  const SkillSpace& space() const { return space_; }
  double alpha() const { return options_.alpha; }
  void set_alpha(double alpha) { options_.alpha = alpha; }
  long updates() const { return updates_; }

  /// Psi(s, ., z) as an (action_count x d_z) matrix. Successor head only.
  Eigen::MatrixXd successor_features(std::span<const double> obs, const SkillVector& z) const;
  Eigen::VectorXd q_values(std::span<const double> obs, const SkillVector& z) const;
  /// Q for a batch: returns (action_count x B). `obs` is (obs_dim x B), `z` is (d_z x B).
  Eigen::MatrixXd q_values(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& z, bool use_target) const;

  std::vector<double> action_probabilities(std::span<const double> obs, const SkillVector& z) const;
  int act(std::span<const double> obs, const SkillVector& z, Rng& rng) const;

  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }
  const Mlp& target() const { return target_; }
  AdamState& optimizer() { return adam_; }

  /// Bookkeeping after an optimizer step: syncs the target every target_sync updates.
  void after_update();

  /// Net input: obs stacked on z, one column per sample.
  Eigen::MatrixXd inputs(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& z) const;
  /// Raw net output -> (action_count x B) Q values.
  Eigen::MatrixXd project(const Eigen::MatrixXd& raw, const Eigen::MatrixXd& z) const;

 private:

  int obs_dim_ = 0;
  int action_count_ = 0;
  SkillSpace space_;
  Options options_;
  Mlp net_;
  Mlp target_;
  AdamState adam_;
  long updates_ = 0;
};

/// Softmax sample over q/alpha. alpha <= 0 picks the argmax (lowest index on ties).
int sample_softmax(const Eigen::Ref<const Eigen::VectorXd>& q, double alpha, Rng& rng);

struct CriticBatch {
  Eigen::MatrixXd obs;       // obs_dim x B
  std::vector<int> actions;  // B
  Eigen::VectorXd rewards;   // B
  Eigen::MatrixXd next_obs;  // obs_dim x B
  Eigen::MatrixXd skills;    // d_z x B
};

/// One Adam step on the squared TD error (Q(s,a,z) - r - gamma Q_target(s',a',z))^2
/// with a' drawn from the softmax policy at s'. Returns the pre-step mean
/// squared TD error.
double successor_critic_update(SkillPolicy& policy, const CriticBatch& batch, double gamma, Rng& rng);

/// Builds a critic batch from buffer indices, using stored r_hat as reward.
/// When `skill` is given it replaces every transition's own skill tag.
CriticBatch make_critic_batch(const ReplayBuffer& buffer, const Environment& env,
                              std::span<const std::size_t> indices, const SkillVector* skill = nullptr);

struct PretrainConfig {
  long steps = 50000;
  int batch_size = 32;
  int warmup = 1000;
  int update_every = 1;
  double gamma = 0.95;
  double beta = 5.0;
  int knn_k = 12;
  int particle_count = 4096;
  int particle_refresh = 1000;
  SkillPolicy::Options policy;
  int feature_hidden = 64;
  double feature_lr = 5e-4;
  std::size_t buffer_capacity = 400000;
};

struct PretrainResult {
  SkillPolicy policy;
  std::optional<FeatureNet> features;
  std::optional<Discriminator> discriminator;
  ReplayBuffer buffer{1};
  std::vector<double> episode_intrinsic_returns;
};

/// Unsupervised skill pretraining: APS for continuous skill spaces, DIAYN for
/// discrete ones. Every step stores a transition whose r_hat holds the
/// intrinsic reward, then updates the skill model and the critic.
PretrainResult pretrain(Environment& env, const SkillSpace& space, const PretrainConfig& config,
                        std::uint64_t seed);

/// Freshly initialized policy with the same seeding as pretrain() uses.
SkillPolicy make_skill_policy(const Environment& env, const SkillSpace& space,
                              const SkillPolicy::Options& options, std::uint64_t seed);

/// Final (x, y) of one rollout per skill from a shared reset seed.
std::vector<std::pair<double, double>> rollout_endpoints(Environment& env, const SkillPolicy& policy,
                                                         std::span<const SkillVector> skills,
                                                         std::uint64_t seed);

/// Mean pairwise Euclidean distance between points.
double mean_pairwise_distance(std::span<const std::pair<double, double>> points);

}  // namespace sepoa
