#include "sepoa/envs.hpp"

#include <algorithm>
#include <cmath>

#include "sepoa/errors.hpp"
#include "sepoa/rng.hpp"

namespace sepoa {

std::pair<int, int> grid_action(int action) {
  if (action < 0 || action >= 9) throw InvalidAction("action id " + std::to_string(action));
  return {action % 3 - 1, action / 3 - 1};
}

int grid_action_id(int ax, int ay) { return (ay + 1) * 3 + (ax + 1); }

StepResult Environment::step(std::span<const double> state, int action) {
  auto result = transition(state, action);
  ++elapsed_;
  result.done = elapsed_ >= spec().episode_length;
  return result;
}

std::vector<double> Environment::observe(std::span<const double> state) const {
  const auto& bounds = spec().bounds;
  std::vector<double> obs(state.size());
  for (std::size_t i = 0; i < state.size(); ++i) obs[i] = state[i] / bounds[i];
  return obs;
}

PointRunner::PointRunner() {
  spec_.name = "point_runner";
  spec_.state_dim = 4;
  spec_.action_count = 9;
  spec_.episode_length = kEpisodeLength;
  spec_.dt = kDt;
  double reach = kMaxSpeed * kDt * kEpisodeLength;
  spec_.bounds = {reach, reach, kMaxSpeed, kMaxSpeed};
}

std::vector<double> PointRunner::reset(std::uint64_t seed) {
  elapsed_ = 0;
  Rng rng(seed);
  std::uniform_real_distribution<double> noise(-0.01, 0.01);
  double x = noise(rng);
  double y = noise(rng);
  return {x, y, 0.0, 0.0};
}

StepResult PointRunner::transition(std::span<const double> s, int action) const {
  if (s.size() != 4) throw DimensionMismatch("point_runner state must have 4 components");
  auto [ax, ay] = grid_action(action);
  double vx = std::clamp(s[2] + ax * kAccel * kDt, -kMaxSpeed, kMaxSpeed);
  double vy = std::clamp(s[3] + ay * kAccel * kDt, -kMaxSpeed, kMaxSpeed);
  StepResult r;
  r.next_state = {s[0] + vx * kDt, s[1] + vy * kDt, vx, vy};
  r.r_gt = std::clamp(vx / kTargetSpeed, 0.0, 1.0);
  return r;
}

PointGoal::PointGoal() {
  spec_.name = "point_goal";
  spec_.state_dim = 4;
  spec_.action_count = 9;
  spec_.episode_length = kEpisodeLength;
  spec_.dt = 1.0;
  spec_.bounds = {kArenaHalfWidth, kArenaHalfWidth, 1.0, 1.0};
}

std::vector<double> PointGoal::reset(std::uint64_t seed) {
  elapsed_ = 0;
  Rng rng(seed);
  std::uniform_real_distribution<double> goal(-1.0, 1.0);
  double gx = goal(rng);
  double gy = goal(rng);
  return {0.0, 0.0, gx, gy};
}

StepResult PointGoal::transition(std::span<const double> s, int action) const {
  if (s.size() != 4) throw DimensionMismatch("point_goal state must have 4 components");
  auto [ax, ay] = grid_action(action);
  double dx = 0.0, dy = 0.0;
  if (ax != 0 || ay != 0) {
    double norm = std::hypot(ax, ay);
    dx = kSpeed * ax / norm;
    dy = kSpeed * ay / norm;
  }
  double x = std::clamp(s[0] + dx, -kArenaHalfWidth, kArenaHalfWidth);
  double y = std::clamp(s[1] + dy, -kArenaHalfWidth, kArenaHalfWidth);
  double before = std::hypot(s[0] - s[2], s[1] - s[3]);
  double after = std::hypot(x - s[2], y - s[3]);
  StepResult r;
  r.next_state = {x, y, s[2], s[3]};
  r.r_gt = (before - after) + (after < kSuccessRadius ? kBonus : 0.0);
  return r;
}

std::unique_ptr<Environment> make_env(const std::string& name) {
  if (name == "point_runner") return std::make_unique<PointRunner>();
  if (name == "point_goal") return std::make_unique<PointGoal>();
  throw ConfigError("unknown environment '" + name + "'");
}

std::vector<std::pair<double, double>> render_positions(std::span<const Transition> transitions) {
  std::vector<std::pair<double, double>> out;
  out.reserve(transitions.size());
  for (const auto& t : transitions) out.emplace_back(t.next_state[0], t.next_state[1]);
  return out;
}

}  // namespace sepoa
