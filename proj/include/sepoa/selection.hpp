#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sepoa/approx.hpp"
#include "sepoa/core.hpp"
#include "sepoa/reward.hpp"
#include "sepoa/skills.hpp"

namespace sepoa {

/// R(z): skill -> expected learned trajectory return, trained on min-max
/// normalized targets.
class TrajectoryEstimator {
 public:
  struct Options {
    int hidden = 64;
    int hidden_layers = 3;
    double lr = 5e-4;
  };

  TrajectoryEstimator() = default;
  TrajectoryEstimator(int skill_dim, Options options, std::uint64_t seed);

  double predict(const SkillVector& z) const;
  Eigen::VectorXd predict(const Eigen::MatrixXd& skills) const;

  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }
  AdamState& optimizer() { return adam_; }

  double target_min() const { return lo_; }
  double target_max() const { return hi_; }
  void set_bounds(double lo, double hi) { lo_ = lo; hi_ = hi; }

 private:
  Mlp net_;
  AdamState adam_;
  double lo_ = 0.0;
  double hi_ = 0.0;
};

struct EstimatorRecord {
  SkillVector z;
  double learned_return = 0.0;
};

struct EstimatorFit {
  double loss = 0.0;
  /// All raw targets were equal; every normalized target was set to 0.5.
  bool degenerate = false;
  std::vector<double> targets;
};

/// Min-max normalizes to [0,1]; all-equal input maps to 0.5 each.
std::vector<double> normalize_targets(std::span<const double> raw, bool* degenerate = nullptr);

/// Mean squared error of R(z) against `targets` and its parameter gradient.
double estimator_loss_and_grad(const TrajectoryEstimator& est, const Eigen::MatrixXd& skills,
                               const Eigen::VectorXd& targets, ParamVector& grad);

/// Normalizes the record targets and takes `steps` full-batch Adam steps.
/// Returns the loss after the final step.
EstimatorFit train_estimator(TrajectoryEstimator& est, std::span<const EstimatorRecord> records, int steps);

/// Population variance of the members' P[seg1 > seg0].
double disagreement_score(const RewardEnsemble& ens, const Query& query);

struct CandidateBatch {
  std::vector<Query> queries;
  std::vector<double> raw_skill_gap;     // |R(z0) - R(z1)|
  std::vector<double> raw_disagreement;  // Var of member preferences
  std::vector<double> skill_gap;         // normalized to [0,1]
  std::vector<double> disagreement;      // normalized to [0,1]
  std::vector<double> criterion;         // (1 + a)(1 + b)
};

/// Min-max normalizes within the batch; all-equal input maps to 0 each.
std::vector<double> normalize_batch(std::span<const double> raw);

/// Fills the normalized terms and the criterion from the raw terms.
void combine_criterion(CandidateBatch& batch);

/// Computes both raw terms for every candidate, then combine_criterion.
void skill_criterion(CandidateBatch& batch, const RewardEnsemble& ens, const TrajectoryEstimator& est);

enum class SelectionMethod { Uniform, Disagreement, Skill };

SelectionMethod parse_selection_method(const std::string& name);
std::string to_string(SelectionMethod method);

/// Indices of the m largest scores, descending; ties keep the lower index first.
std::vector<std::size_t> top_indices(std::span<const double> scores, std::size_t m);

struct SelectionRequest {
  SelectionMethod method = SelectionMethod::Skill;
  std::size_t segment_length = 50;
  std::size_t context_length = 50;
  std::size_t candidates = 200;  // N
  std::size_t count = 20;        // M
};

/// Samples N candidate queries from distinct trajectories, scores them by
/// the requested method and returns the top M.
std::vector<Query> select_queries(const SelectionRequest& request, const ReplayBuffer& buffer, Rng& rng,
                                  const RewardEnsemble& ens, const TrajectoryEstimator& est);

/// Samples n skills and returns the one with the largest R(z) (first on ties).
SkillVector select_task_skill(const TrajectoryEstimator& est, const SkillSpace& space, int n, Rng& rng);

}  // namespace sepoa
