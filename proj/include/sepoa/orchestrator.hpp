#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sepoa/skills.hpp"
#include "sepoa/teacher.hpp"

namespace sepoa {

/// Every knob of a training run. Defaults are the desk-scale PointRunner
/// settings; field names double as config-file keys.
struct RunConfig {
  std::string env = "point_runner";
  std::string skill_method = "aps";  // aps | diayn
  int skill_dim = 10;
  std::string teacher = "noisy";  // oracle | noisy | human
  double epsilon = 0.3;
  int teacher_window = 10;
  std::string selection = "skill";  // uniform | disagreement | skill
  bool surf = true;

  long pretrain_steps = 50000;
  long online_steps = 100000;
  int feedback_frequency = 2000;  // K
  int queries_per_session = 20;   // M
  int total_feedback = 600;       // N_total
  int candidate_ratio = 10;       // N = candidate_ratio * M
  int metrics_every = 2000;

  int segment_length = 50;
  int precrop_length = 60;
  int crop_min = 45;
  int crop_max = 55;
  int surf_mu = 4;
  double surf_threshold = 0.999;

  int ensemble_size = 3;
  int reward_hidden = 64;
  double reward_lr = 5e-4;
  int reward_epochs = 50;
  int reward_batch = 64;

  int hidden = 64;
  double critic_lr = 5e-4;
  double alpha = 0.2;
  double gamma = 0.95;
  int batch_size = 32;
  int warmup = 1000;
  int update_every = 1;
  int target_sync = 100;

  double beta = 5.0;
  int knn_k = 12;
  int particles = 4096;

  int estimator_hidden = 64;
  int estimator_layers = 3;
  int estimator_steps = 200;
  int task_samples = 50;  // N_z
  bool keep_task_skill = true;  // the current z_task competes with the fresh samples
  double explore_prob = 0.25;

  long buffer_capacity = 400000;
  int human_timeout_ms = 1000;
  std::uint64_t seed = 1;

  bool operator==(const RunConfig&) const = default;

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
  SkillSpace skill_space() const;
  PretrainConfig pretrain_config() const;
};

/// return_gt / return_hat average the z_task episodes finished since the
/// previous row (exploration episodes excluded); the last value carries over.
struct MetricsRow {
  long step = 0;
  double return_gt = 0.0;
  double return_hat = 0.0;
  int feedback_used = 0;
  double disting_ratio = 0.0;
  double match_rate = 0.0;

  bool operator==(const MetricsRow&) const = default;
};

struct RunMetrics {
  std::vector<MetricsRow> rows;
  std::vector<double> pretrain_intrinsic_returns;
  std::vector<double> episode_returns_gt;  // online z_task episodes, in order
  int queries_issued = 0;
  int queries_distinguishable = 0;
  int triples_stored = 0;
  int labels_matching_oracle = 0;
  int sessions = 0;

  /// Mean ground-truth return of the last `window` online episodes.
  double final_return(int window = 10) const;
  double distinguishable_ratio() const;
};

/// Runs skill pretraining (unless pretrain_steps == 0, or a cached result is
/// supplied) and then the online preference-learning loop. A human teacher
/// needs an open mailbox.
RunMetrics run(const RunConfig& config, const PretrainResult* cached_pretrain = nullptr,
               LabelMailbox* mailbox = nullptr);

struct AblationToggles {
  bool vary_pretrain = true;
  bool vary_selection = true;
  bool vary_surf = false;
};

struct AblationCell {
  std::string name;
  RunConfig config;
  RunMetrics metrics;
};

/// Runs the toggle grid from `base`, sharing one pretraining result across
/// all cells that use pretraining.
std::vector<AblationCell> ablate(const RunConfig& base, const AblationToggles& toggles);

}  // namespace sepoa
