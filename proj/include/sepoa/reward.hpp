#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "sepoa/approx.hpp"
#include "sepoa/core.hpp"
#include "sepoa/envs.hpp"
#include "sepoa/rng.hpp"

namespace sepoa {

/// Ensemble of reward nets r(s, a) -> (-1, 1) over scaled state concatenated
/// with a one-hot action.
class RewardEnsemble {
 public:
  struct Options {
    int members = 3;
    int hidden = 64;
    double lr = 5e-4;
  };

  RewardEnsemble() = default;
  RewardEnsemble(const EnvSpec& spec, Options options, std::uint64_t seed);
  /// One member per seed; identical seeds give identical members.
  RewardEnsemble(const EnvSpec& spec, Options options, std::span<const std::uint64_t> member_seeds);

  std::size_t size() const { return members_.size(); }
  Mlp& member(std::size_t i) { return members_[i]; }
  const Mlp& member(std::size_t i) const { return members_[i]; }
  AdamState& optimizer(std::size_t i) { return adam_[i]; }
  std::uint64_t member_seed(std::size_t i) const { return seeds_[i]; }
  int input_dim() const { return static_cast<int>(bounds_.size()) + action_count_; }

  /// Network inputs for a run of transitions, one column each.
  Eigen::MatrixXd encode(std::span<const Transition> transitions) const;
  Eigen::VectorXd encode(std::span<const double> state, int action) const;

  double member_reward(std::size_t i, std::span<const double> state, int action) const;
  double mean_reward(std::span<const double> state, int action) const;
  /// Ensemble-mean reward for each encoded column.
  Eigen::RowVectorXd mean_rewards(const Eigen::MatrixXd& encoded) const;

 private:
  std::vector<double> bounds_;
  int action_count_ = 0;
  std::vector<Mlp> members_;
  std::vector<AdamState> adam_;
  std::vector<std::uint64_t> seeds_;
};

struct PreferenceDataset {
  std::vector<PreferenceTriple> labeled;

  /// Throws if y is not a valid one-hot pair.
  void add(PreferenceTriple triple);
  std::size_t size() const { return labeled.size(); }
  bool empty() const { return labeled.empty(); }
};

/// Sum of one member's per-step rewards over a segment.
double segment_return_hat(const RewardEnsemble& ens, std::size_t member, const Segment& seg);
/// Sum of ensemble-mean per-step rewards over a segment.
double segment_return_hat(const RewardEnsemble& ens, const Segment& seg);

/// P[seg1 > seg0] = sigmoid(sum1 - sum0).
double bt_probability(double sum0, double sum1);
double bt_probability(const RewardEnsemble& ens, std::size_t member, const Segment& seg0, const Segment& seg1);
/// Per-member P[seg1 > seg0], one entry per member.
std::vector<double> member_probabilities(const RewardEnsemble& ens, const Segment& seg0, const Segment& seg1);
/// Mean of member_probabilities.
double mean_bt_probability(const RewardEnsemble& ens, const Segment& seg0, const Segment& seg1);

struct CeResult {
  double loss = 0.0;
  ParamVector grad;
};

/// Mean Bradley-Terry cross-entropy over the batch for one member, with its
/// exact parameter gradient.
CeResult ce_loss_and_grad(const RewardEnsemble& ens, std::size_t member, std::span<const PreferenceTriple> batch);

struct SurfConfig {
  int mu = 4;
  double threshold = 0.999;
  int crop_min = 45;
  int crop_max = 55;
  int precrop_length = 60;
};

using SegmentPair = std::pair<Segment, Segment>;

/// Cropped copies of every labeled triple (shared random length, independent
/// offsets), plus pseudo-labeled cropped pairs from the first mu*|labeled|
/// pool pairs whose ensemble-mean preference reaches the threshold.
std::vector<PreferenceTriple> surf_augment(const RewardEnsemble& ens, std::span<const PreferenceTriple> labeled,
                                           std::span<const SegmentPair> pool, const SurfConfig& config, Rng& rng);

/// Equal-length random crop of a pair. Throws CropLongerThanSegment.
SegmentPair crop_pair(const Segment& a, const Segment& b, const SurfConfig& config, Rng& rng);

struct TrainOptions {
  int epochs = 50;
  int batch_size = 64;
  std::optional<SurfConfig> surf;
};

/// Draws one unlabeled pair of pre-crop windows, already encoded with
/// RewardEnsemble::encode (one column per step).
using PoolSampler = std::function<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>(Rng&)>;

/// Pool over a replay buffer: two `window`-step spans from distinct closed
/// trajectories. The buffer is encoded once when the sampler is built.
PoolSampler buffer_pool(const ReplayBuffer& buffer, const RewardEnsemble& ens, std::size_t window);

/// Trains every member on its own shuffle of the labeled data. With SURF on,
/// each minibatch also gets one crop per labeled triple and the pseudo-labeled
/// crops of up to mu*|batch| pool pairs; pool draws and pseudo-labels are
/// shared by all members at the same minibatch index. Returns, per member,
/// the mean batch loss of each epoch.
std::vector<std::vector<double>> train_ensemble(RewardEnsemble& ens, const PreferenceDataset& data,
                                                const TrainOptions& options, const PoolSampler& pool,
                                                std::uint64_t seed);

/// Sets every r_hat to the ensemble-mean reward. Returns the buffer size.
std::size_t relabel(ReplayBuffer& buffer, const RewardEnsemble& ens);

}  // namespace sepoa
