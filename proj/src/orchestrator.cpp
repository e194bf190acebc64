#include "sepoa/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "sepoa/errors.hpp"
#include "sepoa/reward.hpp"
#include "sepoa/selection.hpp"

namespace sepoa {

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  make_env(env);  // throws on unknown names
  if (skill_method != "aps" && skill_method != "diayn") fail("skill_method must be aps or diayn");
  if (teacher != "oracle" && teacher != "noisy" && teacher != "human") fail("teacher must be oracle, noisy or human");
  parse_selection_method(selection);
  if (skill_dim < 2) fail("skill_dim must be at least 2");
  if (epsilon < 0.0 || epsilon >= 1.0) fail("epsilon must lie in [0, 1)");
  if (teacher_window < 1) fail("teacher_window must be positive");
  if (queries_per_session < 1) fail("queries_per_session must be positive");
  if (total_feedback < 0) fail("total_feedback must be non-negative");
  if (total_feedback != 0 && total_feedback < queries_per_session)
    fail("total_feedback must be zero or at least queries_per_session");
  if (feedback_frequency < 1) fail("feedback_frequency must be positive");
  if (metrics_every < 1 || metrics_every % feedback_frequency != 0)
    fail("metrics_every must be a positive multiple of feedback_frequency");
  if (pretrain_steps < 0 || online_steps < 1) fail("step counts out of range");
  if (segment_length < 1 || precrop_length < segment_length) fail("precrop_length must be >= segment_length");
  if (surf && (crop_min < 1 || crop_min > crop_max || crop_max > precrop_length))
    fail("crop range must satisfy 1 <= crop_min <= crop_max <= precrop_length");
  if (ensemble_size < 2) fail("ensemble_size must be at least 2");
  if (gamma < 0.0 || gamma >= 1.0) fail("gamma must lie in [0, 1)");
  if (candidate_ratio < 1 || task_samples < 1) fail("sampling counts must be positive");
  if (explore_prob < 0.0 || explore_prob > 1.0) fail("explore_prob must lie in [0, 1]");
  auto spec = make_env(env)->spec();
  if (buffer_capacity < spec.episode_length) fail("buffer_capacity below one episode");
  if (spec.episode_length < precrop_length) fail("episodes shorter than the pre-crop window");
}

SkillSpace RunConfig::skill_space() const {
  return skill_method == "diayn" ? SkillSpace::discrete(skill_dim) : SkillSpace::continuous(skill_dim);
}

PretrainConfig RunConfig::pretrain_config() const {
  PretrainConfig pc;
  pc.steps = pretrain_steps;
  pc.batch_size = batch_size;
  pc.warmup = warmup;
  pc.update_every = update_every;
  pc.gamma = gamma;
  pc.beta = beta;
  pc.knn_k = knn_k;
  pc.particle_count = particles;
  pc.policy = {hidden, critic_lr, alpha, target_sync};
  pc.feature_hidden = hidden;
  pc.feature_lr = critic_lr;
  pc.buffer_capacity = static_cast<std::size_t>(buffer_capacity);
  return pc;
}

double RunMetrics::final_return(int window) const {
  if (episode_returns_gt.empty()) return 0.0;
  auto n = std::min<std::size_t>(episode_returns_gt.size(), static_cast<std::size_t>(window));
  return std::accumulate(episode_returns_gt.end() - static_cast<std::ptrdiff_t>(n), episode_returns_gt.end(), 0.0) /
         static_cast<double>(n);
}

double RunMetrics::distinguishable_ratio() const {
  return queries_issued > 0 ? static_cast<double>(queries_distinguishable) / queries_issued : 0.0;
}

namespace {

bool oracle_agrees(const Query& q, const Preference& y) {
  double r0 = q.seg0.return_gt();
  double r1 = q.seg1.return_gt();
  if (r0 == r1) return true;
  return (r0 > r1) == (y == Preference::prefer_first());
}

/// State of one online phase. Keeps run() readable.
class OnlineLoop {
 public:
  OnlineLoop(const RunConfig& config, PretrainResult start, LabelMailbox* mailbox)
      : cfg_(config),
        env_(make_env(config.env)),
        space_(config.skill_space()),
        policy_(std::move(start.policy)),
        buffer_(std::move(start.buffer)),
        ensemble_(env_->spec(), {config.ensemble_size, config.reward_hidden, config.reward_lr},
                  stream_seed(config.seed, "init.reward")),
        estimator_(space_.dim, {config.estimator_hidden, config.estimator_layers, config.critic_lr},
                   stream_seed(config.seed, "init.estimator")),
        selection_(parse_selection_method(config.selection)),
        mailbox_(mailbox),
        env_rng_(make_stream(config.seed, "env")),
        teacher_rng_(make_stream(config.seed, "teacher")),
        select_rng_(make_stream(config.seed, "selection")),
        skill_rng_(make_stream(config.seed, "skill")),
        act_rng_(make_stream(config.seed, "policy")),
        batch_rng_(make_stream(config.seed, "batch")) {
    metrics_.pretrain_intrinsic_returns = std::move(start.episode_intrinsic_returns);
    if (cfg_.teacher == "human" && (mailbox_ == nullptr || !mailbox_->is_open())) throw ServiceUnavailable();
    for (const auto& rec : buffer_.trajectories())
      if (rec.closed) recent_returns_.push_back(rec.return_gt);
    relabel(buffer_, ensemble_);
    z_task_ = sample_skill(space_, skill_rng_);
  }

  RunMetrics execute() {
    std::vector<double> state;
    SkillVector z_episode;
    bool need_reset = true;
    double ep_gt = 0.0, ep_hat = 0.0;
    std::vector<std::size_t> idx(static_cast<std::size_t>(cfg_.batch_size));

    for (long t = 0; t < cfg_.online_steps; ++t) {
      if (t % cfg_.feedback_frequency == 0 && used_ < cfg_.total_feedback) feedback_session();

      if (need_reset) {
        exploring_ = uniform01(skill_rng_) < cfg_.explore_prob;
        update_task_skill();
        z_episode = exploring_ ? sample_skill(space_, skill_rng_) : z_task_;
        buffer_.begin_trajectory(z_episode);
        state = env_->reset(env_rng_());
        ep_gt = ep_hat = 0.0;
        need_reset = false;
      }

      int action = policy_.act(env_->observe(state), z_episode, act_rng_);
      auto step = env_->step(state, action);
      Transition tr;
      tr.state = state;
      tr.action = action;
      tr.next_state = step.next_state;
      tr.r_gt = step.r_gt;
      tr.r_hat = ensemble_.mean_reward(state, action);
      ep_gt += tr.r_gt;
      ep_hat += tr.r_hat;
      buffer_.append(std::move(tr));
      state = std::move(step.next_state);

      if (step.done) {
        buffer_.end_trajectory();
        recent_returns_.push_back(ep_gt);
        if (!exploring_) {
          metrics_.episode_returns_gt.push_back(ep_gt);
          window_gt_.push_back(ep_gt);
          window_hat_.push_back(ep_hat);
        }
        last_gt_ = ep_gt;
        need_reset = true;
      }

      if (static_cast<long>(buffer_.size()) >= cfg_.warmup && t % cfg_.update_every == 0) {
        for (auto& i : idx) i = uniform_index(batch_rng_, buffer_.size());
        auto batch = make_critic_batch(buffer_, *env_, idx, &z_task_);
        successor_critic_update(policy_, batch, cfg_.gamma, batch_rng_);
      }

      if ((t + 1) % cfg_.metrics_every == 0) emit_row(t + 1);
      if (mailbox_ != nullptr && (t + 1) % 100 == 0) mailbox_->set_progress(cfg_.total_feedback, t + 1, last_gt_);
    }
    return std::move(metrics_);
  }

 private:
  void update_task_skill() {
    auto candidate = select_task_skill(estimator_, space_, cfg_.task_samples, skill_rng_);
    if (!cfg_.keep_task_skill || estimator_.predict(candidate) > estimator_.predict(z_task_)) z_task_ = std::move(candidate);
  }

  void emit_row(long step) {
    MetricsRow row;
    row.step = step;
    if (!window_gt_.empty()) {
      last_row_gt_ = std::accumulate(window_gt_.begin(), window_gt_.end(), 0.0) / static_cast<double>(window_gt_.size());
      last_row_hat_ =
          std::accumulate(window_hat_.begin(), window_hat_.end(), 0.0) / static_cast<double>(window_hat_.size());
    }
    window_gt_.clear();
    window_hat_.clear();
    row.return_gt = last_row_gt_;
    row.return_hat = last_row_hat_;
    row.feedback_used = used_;
    row.disting_ratio = metrics_.distinguishable_ratio();
    row.match_rate = used_ > 0 ? static_cast<double>(metrics_.labels_matching_oracle) / used_ : 0.0;
    metrics_.rows.push_back(row);
  }

  std::size_t context_length() const {
    return static_cast<std::size_t>(cfg_.surf ? cfg_.precrop_length : cfg_.segment_length);
  }

  void store(const Query& q, const Preference& y) {
    if (oracle_agrees(q, y)) ++metrics_.labels_matching_oracle;
    dataset_.add({q, y});
    ++used_;
    metrics_.triples_stored = used_;
  }

  void collect_outstanding() {
    std::vector<std::string> still;
    for (const auto& id : outstanding_) {
      auto d = mailbox_->await(id, std::chrono::milliseconds(0));
      if (d.resolution == LabelMailbox::Resolution::Labeled)
        store(d.query, d.y);
      else if (d.resolution == LabelMailbox::Resolution::Pending)
        still.push_back(id);
    }
    outstanding_ = std::move(still);
  }

  void feedback_session() {
    if (buffer_.eligible(context_length()).size() < 2) return;  // deferred to the next boundary
    const bool human = cfg_.teacher == "human";
    if (human) collect_outstanding();
    int budget = cfg_.total_feedback - used_ - static_cast<int>(outstanding_.size());
    int m = std::min(cfg_.queries_per_session, budget);
    if (m <= 0) return;

    std::vector<EstimatorRecord> records;
    for (const auto& rec : buffer_.trajectories())
      if (rec.closed && rec.length == static_cast<std::size_t>(env_->spec().episode_length))
        records.push_back({rec.skill, buffer_.learned_return(rec)});
    if (records.size() >= 2) train_estimator(estimator_, records, cfg_.estimator_steps);

    SelectionRequest req;
    req.method = selection_;
    req.segment_length = static_cast<std::size_t>(cfg_.segment_length);
    req.context_length = context_length();
    req.count = static_cast<std::size_t>(m);
    req.candidates = static_cast<std::size_t>(cfg_.candidate_ratio) * req.count;
    auto queries = select_queries(req, buffer_, select_rng_, ensemble_, estimator_);

    NoisyTeacherConfig noisy{cfg_.epsilon, cfg_.teacher_window};
    for (const auto& q : queries) {
      ++metrics_.queries_issued;
      if (is_distinguishable(q, recent_returns_, noisy)) ++metrics_.queries_distinguishable;
      if (cfg_.teacher == "oracle") {
        store(q, oracle_label(q, teacher_rng_).y);
      } else if (cfg_.teacher == "noisy") {
        store(q, noisy_label(q, recent_returns_, noisy, teacher_rng_).y);
      } else {
        auto res = remote_human_label(*mailbox_, q, cfg_.env, std::chrono::milliseconds(cfg_.human_timeout_ms));
        if (res.resolution == LabelMailbox::Resolution::Labeled)
          store(q, res.outcome->y);
        else if (res.resolution == LabelMailbox::Resolution::Pending)
          outstanding_.push_back(res.query_id);
      }
    }
    ++metrics_.sessions;
    if (dataset_.empty()) return;

    TrainOptions opts;
    opts.epochs = cfg_.reward_epochs;
    opts.batch_size = cfg_.reward_batch;
    if (cfg_.surf)
      opts.surf = SurfConfig{cfg_.surf_mu, cfg_.surf_threshold, cfg_.crop_min, cfg_.crop_max, cfg_.precrop_length};
    PoolSampler pool;
    if (cfg_.surf) pool = buffer_pool(buffer_, ensemble_, static_cast<std::size_t>(cfg_.precrop_length));
    train_ensemble(ensemble_, dataset_, opts, pool, stream_seed(cfg_.seed, "reward.session." + std::to_string(metrics_.sessions)));
    relabel(buffer_, ensemble_);
  }

  const RunConfig& cfg_;
  std::unique_ptr<Environment> env_;
  SkillSpace space_;
  SkillPolicy policy_;
  ReplayBuffer buffer_;
  RewardEnsemble ensemble_;
  TrajectoryEstimator estimator_;
  SelectionMethod selection_;
  LabelMailbox* mailbox_;
  Rng env_rng_, teacher_rng_, select_rng_, skill_rng_, act_rng_, batch_rng_;

  PreferenceDataset dataset_;
  std::vector<double> recent_returns_;
  std::vector<std::string> outstanding_;
  SkillVector z_task_;
  bool exploring_ = false;
  int used_ = 0;
  RunMetrics metrics_;
  std::vector<double> window_gt_, window_hat_;
  double last_row_gt_ = 0.0, last_row_hat_ = 0.0, last_gt_ = 0.0;
};

}  // namespace

RunMetrics run(const RunConfig& config, const PretrainResult* cached_pretrain, LabelMailbox* mailbox) {
  config.validate();
  auto env = make_env(config.env);
  const auto space = config.skill_space();
  PretrainResult start;
  if (config.pretrain_steps > 0) {
    start = cached_pretrain != nullptr ? *cached_pretrain
                                       : pretrain(*env, space, config.pretrain_config(), config.seed);
  } else {
    // Pretraining disabled: random policy init, empty buffer.
    start.policy = make_skill_policy(*env, space, config.pretrain_config().policy, config.seed);
    start.buffer = ReplayBuffer(static_cast<std::size_t>(config.buffer_capacity));
  }
  OnlineLoop loop(config, std::move(start), mailbox);
  return loop.execute();
}

std::vector<AblationCell> ablate(const RunConfig& base, const AblationToggles& toggles) {
  base.validate();
  std::vector<bool> pretrain_opts = toggles.vary_pretrain ? std::vector<bool>{true, false}
                                                          : std::vector<bool>{base.pretrain_steps > 0};
  std::vector<std::string> select_opts =
      toggles.vary_selection ? std::vector<std::string>{"skill", "disagreement"} : std::vector<std::string>{base.selection};
  std::vector<bool> surf_opts = toggles.vary_surf ? std::vector<bool>{true, false} : std::vector<bool>{base.surf};

  std::optional<PretrainResult> shared;
  std::vector<AblationCell> cells;
  for (bool pre : pretrain_opts)
    for (const auto& sel : select_opts)
      for (bool surf : surf_opts) {
        AblationCell cell;
        cell.config = base;
        cell.config.selection = sel;
        cell.config.surf = surf;
        if (!pre) cell.config.pretrain_steps = 0;
        else if (cell.config.pretrain_steps == 0) cell.config.pretrain_steps = RunConfig{}.pretrain_steps;
        cell.name = std::string(pre ? "pretrain" : "scratch") + "+" + sel + (surf ? "+surf" : "");
        if (pre && !shared) {
          auto env = make_env(cell.config.env);
          shared = pretrain(*env, cell.config.skill_space(), cell.config.pretrain_config(), cell.config.seed);
        }
        cell.metrics = run(cell.config, pre ? &*shared : nullptr);
        cells.push_back(std::move(cell));
      }
  return cells;
}

}  // namespace sepoa
