#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sepoa/core.hpp"

namespace sepoa {

struct EnvSpec {
  std::string name;
  int state_dim = 0;
  int action_count = 0;
  int episode_length = 0;
  double dt = 0.0;
  /// Per-dimension magnitude used to scale raw states into network inputs.
  std::vector<double> bounds;
};

struct StepResult {
  std::vector<double> next_state;
  double r_gt = 0.0;
  bool done = false;
};

/// Deterministic toy environment. Dynamics are pure functions of
/// (state, action); the instance only tracks the elapsed step count.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual std::vector<double> reset(std::uint64_t seed) = 0;
  StepResult step(std::span<const double> state, int action);
  int elapsed() const { return elapsed_; }

  /// State scaled by spec().bounds.
  std::vector<double> observe(std::span<const double> state) const;

  /// Dynamics and reward for one step, without touching the step counter.
  virtual StepResult transition(std::span<const double> state, int action) const = 0;

 protected:
  int elapsed_ = 0;
};

/// 2D point mass rewarded for running in +x at target speed.
/// State (x, y, vx, vy); 9 actions = accelerations in {-1,0,1}^2.
class PointRunner final : public Environment {
 public:
  static constexpr double kAccel = 1.0;
  static constexpr double kDt = 0.1;
  static constexpr double kMaxSpeed = 2.0;
  static constexpr double kTargetSpeed = 1.5;
  static constexpr int kEpisodeLength = 200;

  PointRunner();
  const EnvSpec& spec() const override { return spec_; }
  std::vector<double> reset(std::uint64_t seed) override;
  StepResult transition(std::span<const double> state, int action) const override;

 private:
  EnvSpec spec_;
};

/// 2D point that moves directly toward a goal sampled in [-1,1]^2.
/// State (x, y, gx, gy).
class PointGoal final : public Environment {
 public:
  static constexpr double kSpeed = 0.15;
  static constexpr double kSuccessRadius = 0.1;
  static constexpr double kBonus = 1.0;
  static constexpr double kArenaHalfWidth = 2.0;
  static constexpr int kEpisodeLength = 100;

  PointGoal();
  const EnvSpec& spec() const override { return spec_; }
  std::vector<double> reset(std::uint64_t seed) override;
  StepResult transition(std::span<const double> state, int action) const override;

 private:
  EnvSpec spec_;
};

/// Action id -> (ax, ay) in {-1,0,1}^2. Id 4 is the null action.
std::pair<int, int> grid_action(int action);
int grid_action_id(int ax, int ay);

std::unique_ptr<Environment> make_env(const std::string& name);

/// One (x, y) per transition (post-step position), in step order.
std::vector<std::pair<double, double>> render_positions(std::span<const Transition> transitions);

}  // namespace sepoa
