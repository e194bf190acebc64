#include "sepoa/selection.hpp"

#include <algorithm>
#include <numeric>

#include "sepoa/errors.hpp"

namespace sepoa {

using Eigen::MatrixXd;
using Eigen::VectorXd;

TrajectoryEstimator::TrajectoryEstimator(int skill_dim, Options options, std::uint64_t seed) {
  std::vector<int> sizes{skill_dim};
  for (int i = 0; i < options.hidden_layers; ++i) sizes.push_back(options.hidden);
  sizes.push_back(1);
  net_ = Mlp(sizes, OutputActivation::Identity, seed);
  adam_ = AdamState(net_.param_count(), options.lr);
}

double TrajectoryEstimator::predict(const SkillVector& z) const { return net_.forward(z.values)(0); }

VectorXd TrajectoryEstimator::predict(const MatrixXd& skills) const { return net_.forward(skills).row(0).transpose(); }

std::vector<double> normalize_targets(std::span<const double> raw, bool* degenerate) {
  auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  std::vector<double> out(raw.size(), 0.5);
  bool flat = raw.empty() || *hi == *lo;
  if (degenerate != nullptr) *degenerate = flat;
  if (flat) return out;
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - *lo) / (*hi - *lo);
  return out;
}

double estimator_loss_and_grad(const TrajectoryEstimator& est, const MatrixXd& skills, const VectorXd& targets,
                               ParamVector& grad) {
  MatrixXd t = targets.transpose();
  return loss_and_grad(
      est.net(), skills,
      [&](const MatrixXd& out, MatrixXd& d_out) { return losses::mean_squared_error(out, t, d_out); }, grad);
}

EstimatorFit train_estimator(TrajectoryEstimator& est, std::span<const EstimatorRecord> records, int steps) {
  if (records.size() < 2) throw Error("trajectory estimator needs at least two records");
  std::vector<double> raw;
  for (const auto& r : records) raw.push_back(r.learned_return);
  EstimatorFit fit;
  fit.targets = normalize_targets(raw, &fit.degenerate);
  auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  est.set_bounds(*lo, *hi);

  MatrixXd z(static_cast<Eigen::Index>(records.front().z.dim()), static_cast<Eigen::Index>(records.size()));
  for (std::size_t j = 0; j < records.size(); ++j)
    z.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const VectorXd>(records[j].z.values.data(), z.rows());
  VectorXd t = Eigen::Map<const VectorXd>(fit.targets.data(), static_cast<Eigen::Index>(fit.targets.size()));
  ParamVector grad;
  for (int s = 0; s < steps; ++s) {
    estimator_loss_and_grad(est, z, t, grad);
    adam_step(est.optimizer(), est.net().params(), grad);
  }
  fit.loss = estimator_loss_and_grad(est, z, t, grad);
  return fit;
}

double disagreement_score(const RewardEnsemble& ens, const Query& query) {
  auto p = member_probabilities(ens, query.seg0, query.seg1);
  double mean = std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(p.size());
  double var = 0.0;
  for (double v : p) var += (v - mean) * (v - mean);
  return var / static_cast<double>(p.size());
}

std::vector<double> normalize_batch(std::span<const double> raw) {
  std::vector<double> out(raw.size(), 0.0);
  if (raw.empty()) return out;
  auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  if (*hi == *lo) return out;
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - *lo) / (*hi - *lo);
  return out;
}

void combine_criterion(CandidateBatch& batch) {
  batch.skill_gap = normalize_batch(batch.raw_skill_gap);
  batch.disagreement = normalize_batch(batch.raw_disagreement);
  batch.criterion.resize(batch.skill_gap.size());
  for (std::size_t i = 0; i < batch.criterion.size(); ++i)
    batch.criterion[i] = (1.0 + batch.skill_gap[i]) * (1.0 + batch.disagreement[i]);
}

void skill_criterion(CandidateBatch& batch, const RewardEnsemble& ens, const TrajectoryEstimator& est) {
  batch.raw_skill_gap.clear();
  batch.raw_disagreement.clear();
  for (const auto& q : batch.queries) {
    batch.raw_skill_gap.push_back(std::abs(est.predict(q.z0) - est.predict(q.z1)));
    batch.raw_disagreement.push_back(disagreement_score(ens, q));
  }
  combine_criterion(batch);
}

SelectionMethod parse_selection_method(const std::string& name) {
  if (name == "uniform") return SelectionMethod::Uniform;
  if (name == "disagreement") return SelectionMethod::Disagreement;
  if (name == "skill") return SelectionMethod::Skill;
  throw ConfigError("unknown selection method '" + name + "'");
}

std::string to_string(SelectionMethod method) {
  switch (method) {
    case SelectionMethod::Uniform: return "uniform";
    case SelectionMethod::Disagreement: return "disagreement";
    case SelectionMethod::Skill: return "skill";
  }
  return "skill";
}

std::vector<std::size_t> top_indices(std::span<const double> scores, std::size_t m) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(std::min(m, idx.size()));
  return idx;
}

std::vector<Query> select_queries(const SelectionRequest& request, const ReplayBuffer& buffer, Rng& rng,
                                  const RewardEnsemble& ens, const TrajectoryEstimator& est) {
  const auto n = std::max(request.candidates, request.count);
  CandidateBatch batch;
  for (std::size_t i = 0; i < n; ++i)
    batch.queries.push_back(sample_query(buffer, request.segment_length, request.context_length, rng));

  std::vector<double> scores;
  switch (request.method) {
    case SelectionMethod::Uniform:
      scores.assign(n, 0.0);
      break;
    case SelectionMethod::Disagreement:
      for (const auto& q : batch.queries) scores.push_back(disagreement_score(ens, q));
      break;
    case SelectionMethod::Skill:
      skill_criterion(batch, ens, est);
      scores = batch.criterion;
      break;
  }
  std::vector<Query> out;
  for (auto i : top_indices(scores, request.count)) out.push_back(std::move(batch.queries[i]));
  return out;
}

SkillVector select_task_skill(const TrajectoryEstimator& est, const SkillSpace& space, int n, Rng& rng) {
  if (n < 1) throw Error("task-skill selection needs at least one sample");
  std::vector<SkillVector> skills;
  MatrixXd z(space.dim, n);
  for (int i = 0; i < n; ++i) {
    skills.push_back(sample_skill(space, rng));
    z.col(i) = Eigen::Map<const VectorXd>(skills.back().values.data(), space.dim);
  }
  VectorXd values = est.predict(z);
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < values.size(); ++i)
    if (values(i) > values(best)) best = i;
  return skills[static_cast<std::size_t>(best)];
}

}  // namespace sepoa
