#include <doctest.h>

#include <cmath>
#include <set>

#include "sepoa/envs.hpp"
#include "sepoa/errors.hpp"
#include "sepoa/selection.hpp"
#include "test_util.hpp"

using namespace sepoa;
using namespace sepoa::testing;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

EnvSpec runner_spec() { return make_env("point_runner")->spec(); }

/// Per-member weights giving preference probabilities `p` for a pair of
/// `length`-step segments where only seg1 takes the rewarded action.
std::vector<double> weights_for(const std::vector<double>& p, int length) {
  std::vector<double> w;
  for (double v : p) w.push_back(std::atanh(std::log(v / (1.0 - v)) / length));
  return w;
}

Query action_query(int length, Rng& rng, const EnvSpec& spec) {
  Query q;
  q.seg0 = segment_of(random_steps(length, rng, spec.bounds, 0), 0);
  q.seg1 = segment_of(random_steps(length, rng, spec.bounds, 1), 1);
  return q;
}

}  // namespace

TEST_CASE("target normalization") {
  bool degenerate = true;
  auto n = normalize_targets(std::vector<double>{2.0, 4.0, 6.0}, &degenerate);
  CHECK_FALSE(degenerate);
  CHECK(n == std::vector<double>{0.0, 0.5, 1.0});
  n = normalize_targets(std::vector<double>{3.0, 3.0, 3.0}, &degenerate);
  CHECK(degenerate);
  CHECK(n == std::vector<double>{0.5, 0.5, 0.5});

  TrajectoryEstimator est(3, {}, 1);
  std::vector<EstimatorRecord> same = {{SkillVector{{1, 0, 0}}, 7.0}, {SkillVector{{0, 1, 0}}, 7.0}};
  auto fit = train_estimator(est, same, 5);
  CHECK(fit.degenerate);
  CHECK(fit.targets == std::vector<double>{0.5, 0.5});
  CHECK(est.target_min() <= est.target_max());
  CHECK_THROWS(train_estimator(est, std::span(same).first(1), 5));
}

TEST_CASE("estimator gradient matches finite differences") {
  TrajectoryEstimator est(4, {16, 3, 1e-3}, 2);
  MatrixXd z = MatrixXd::Random(4, 6);
  VectorXd t = VectorXd::Random(6);
  ParamVector grad, scratch;
  estimator_loss_and_grad(est, z, t, grad);
  double worst = gradient_check(est.net().params(), grad, [&] { return estimator_loss_and_grad(est, z, t, scratch); });
  CHECK(worst <= 1e-4);
}

TEST_CASE("estimator learns a linear skill map") {
  const int d = 6;
  Rng rng(3);
  std::vector<double> w = {0.5, -1.0, 0.3, 0.0, 0.8, -0.2};
  std::vector<EstimatorRecord> recs;
  for (int i = 0; i < 200; ++i) {
    auto z = sample_skill(SkillSpace::continuous(d), rng);
    double v = 0.0;
    for (int k = 0; k < d; ++k) v += z.values[k] * w[k];
    recs.push_back({z, v});
  }
  TrajectoryEstimator est(d, {}, 4);
  auto fit = train_estimator(est, recs, 2000);
  CHECK(fit.loss < 0.01);
  for (double t : fit.targets) {
    CHECK(t >= 0.0);
    CHECK(t <= 1.0);
  }
}

TEST_CASE("disagreement score examples") {
  auto spec = runner_spec();
  Rng rng(5);
  RewardEnsemble ens(spec, {}, 6);
  auto q = action_query(10, rng, spec);

  make_action_reward(ens, spec.state_dim, 1, {0.03});
  CHECK(disagreement_score(ens, q) == doctest::Approx(0.0));

  make_action_reward(ens, spec.state_dim, 1, weights_for({0.2, 0.5, 0.8}, 10));
  auto p = member_probabilities(ens, q.seg0, q.seg1);
  CHECK(p[0] == doctest::Approx(0.2).epsilon(1e-9));
  CHECK(p[2] == doctest::Approx(0.8).epsilon(1e-9));
  CHECK(disagreement_score(ens, q) == doctest::Approx(0.06).epsilon(1e-9));

  Query swapped = q;
  std::swap(swapped.seg0, swapped.seg1);
  CHECK(disagreement_score(ens, swapped) == doctest::Approx(disagreement_score(ens, q)).epsilon(1e-12));

  RewardEnsemble fresh(spec, {}, 8);
  for (int i = 0; i < 50; ++i) {
    Query r;
    r.seg0 = segment_of(random_steps(20, rng, spec.bounds));
    r.seg1 = segment_of(random_steps(20, rng, spec.bounds));
    double s = disagreement_score(fresh, r);
    CHECK(s >= 0.0);
    CHECK(s <= 0.25);
  }
}

TEST_CASE("batch normalization and the combined criterion") {
  CHECK(normalize_batch(std::vector<double>{1.0, 1.0}) == std::vector<double>{0.0, 0.0});

  CandidateBatch b;
  b.raw_skill_gap = {0.0, 0.5, 1.0};
  b.raw_disagreement = {0.25, 0.25, 0.25};
  combine_criterion(b);
  CHECK(b.criterion[0] == doctest::Approx(1.0));
  CHECK(b.criterion[1] == doctest::Approx(1.5));
  CHECK(b.criterion[2] == doctest::Approx(2.0));

  b.raw_skill_gap = {0.1, 3.0, 0.2, 0.4};
  b.raw_disagreement = {0.01, 0.2, 0.05, 0.0};
  combine_criterion(b);
  CHECK(b.criterion[1] == doctest::Approx(4.0));
  CHECK(top_indices(b.criterion, 1)[0] == 1);
  for (double c : b.criterion) {
    CHECK(c >= 1.0);
    CHECK(c <= 4.0);
  }

  auto before = top_indices(b.criterion, 4);
  for (auto& a : b.raw_skill_gap) a = 3.0 * a + 2.0;
  combine_criterion(b);
  CHECK(top_indices(b.criterion, 4) == before);

  b.raw_skill_gap = {0.3, 0.3};
  b.raw_disagreement = {0.1, 0.1};
  combine_criterion(b);
  CHECK(b.criterion == std::vector<double>{1.0, 1.0});
}

TEST_CASE("top indices") {
  std::vector<double> s = {0.5, 2.0, 0.5, 3.0};
  CHECK(top_indices(s, 2) == std::vector<std::size_t>{3, 1});
  CHECK(top_indices(s, 4) == std::vector<std::size_t>{3, 1, 0, 2});
  CHECK(top_indices(s, 10).size() == 4);
  CHECK(parse_selection_method("skill") == SelectionMethod::Skill);
  CHECK(to_string(SelectionMethod::Disagreement) == "disagreement");
  CHECK_THROWS_AS(parse_selection_method("random"), ConfigError);
}

TEST_CASE("query selection over a buffer") {
  auto spec = runner_spec();
  Rng rng(9);
  ReplayBuffer buf(10000);
  for (int i = 0; i < 4; ++i)
    buf.add_trajectory(SkillVector{{1.0, 0.0}}, random_steps(60, rng, spec.bounds, i == 2 ? 1 : 0));
  RewardEnsemble ens(spec, {}, 10);
  make_action_reward(ens, spec.state_dim, 1, weights_for({0.1, 0.5, 0.9}, 50));
  TrajectoryEstimator est(2, {}, 11);

  SelectionRequest req;
  req.candidates = 12;
  req.count = 12;
  req.method = SelectionMethod::Uniform;
  auto all = select_queries(req, buf, rng, ens, est);
  CHECK(all.size() == 12);
  for (const auto& q : all) {
    CHECK(q.seg0.traj_id != q.seg1.traj_id);
    CHECK(q.seg0.length() == 50);
  }

  req.method = SelectionMethod::Disagreement;
  req.candidates = 40;
  req.count = 1;
  auto top = select_queries(req, buf, rng, ens, est);
  REQUIRE(top.size() == 1);
  const int spread = buf.trajectories()[2].traj_id;
  CHECK((top[0].seg0.traj_id == spread || top[0].seg1.traj_id == spread));
  CHECK(disagreement_score(ens, top[0]) == doctest::Approx(0.32 / 3).epsilon(1e-6));

  ReplayBuffer lonely(1000);
  lonely.add_trajectory(SkillVector{{1.0, 0.0}}, random_steps(60, rng, spec.bounds));
  CHECK_THROWS_AS(select_queries(req, lonely, rng, ens, est), NoEligibleTrajectory);
}

TEST_CASE("task skill selection") {
  TrajectoryEstimator flat_est(3, {}, 12);
  std::fill(flat_est.net().params().begin(), flat_est.net().params().end(), 0.0);
  Rng a(13), b(13);
  auto chosen = select_task_skill(flat_est, SkillSpace::continuous(3), 5, a);
  CHECK(chosen.values == sample_skill(SkillSpace::continuous(3), b).values);

  const int d = 5;
  std::vector<double> w = {1.0, 2.0, -1.0, 0.5, 0.0};
  Rng rng(14);
  std::vector<EstimatorRecord> recs;
  for (int i = 0; i < 300; ++i) {
    auto z = sample_skill(SkillSpace::continuous(d), rng);
    double v = 0.0;
    for (int k = 0; k < d; ++k) v += z.values[k] * w[k];
    recs.push_back({z, v});
  }
  TrajectoryEstimator est(d, {}, 15);
  train_estimator(est, recs, 2000);

  Rng s1(16), s2(16);
  auto best = select_task_skill(est, SkillSpace::continuous(d), 1000, s1);
  double top = -1e300;
  SkillVector brute;
  for (int i = 0; i < 1000; ++i) {
    auto z = sample_skill(SkillSpace::continuous(d), s2);
    if (est.predict(z) > top) {
      top = est.predict(z);
      brute = z;
    }
  }
  CHECK(best.values == brute.values);
  double wn = 0.0, dot = 0.0;
  for (int k = 0; k < d; ++k) {
    wn += w[k] * w[k];
    dot += w[k] * best.values[k];
  }
  CHECK(dot / std::sqrt(wn) >= 0.8);
}
