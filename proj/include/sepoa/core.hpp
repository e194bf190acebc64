#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sepoa/rng.hpp"

namespace sepoa {

/// Latent skill conditioning the policy. Unit norm for continuous skill
/// spaces, one-hot for discrete ones.
struct SkillVector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  bool operator==(const SkillVector&) const = default;
};

struct Transition {
  std::vector<double> state;
  int action = 0;
  std::vector<double> next_state;
  double r_gt = 0.0;
  double r_hat = 0.0;
  SkillVector skill;
  int traj_id = -1;
  int step = 0;
};

/// Contiguous fixed-length window of one trajectory.
struct Segment {
  int traj_id = -1;
  int start = 0;
  std::vector<Transition> transitions;

  std::size_t length() const { return transitions.size(); }
  double return_gt() const;
};

struct Trajectory {
  int traj_id = -1;
  std::vector<Transition> transitions;
  double return_gt = 0.0;
  SkillVector skill;
};

/// A pair of segments shown to a teacher. `wide0`/`wide1` optionally hold the
/// longer parent windows the segments were centred in; data augmentation
/// crops from those when present.
struct Query {
  Segment seg0;
  Segment seg1;
  SkillVector z0;
  SkillVector z1;
  double traj0_return_gt = 0.0;
  double traj1_return_gt = 0.0;
  std::optional<Segment> wide0;
  std::optional<Segment> wide1;
};

/// One-hot preference: {1,0} means seg0 preferred, {0,1} means seg1.
struct Preference {
  int first = 1;
  int second = 0;

  static Preference prefer_first() { return {1, 0}; }
  static Preference prefer_second() { return {0, 1}; }
  bool valid() const { return first + second == 1 && (first == 0 || first == 1); }
  bool operator==(const Preference&) const = default;
};

struct PreferenceTriple {
  Query query;
  Preference y;
};

/// Bookkeeping for one stored trajectory. `begin` is an absolute transition
/// index that stays valid across evictions.
struct TrajectoryRecord {
  int traj_id = -1;
  std::size_t begin = 0;
  std::size_t length = 0;
  bool closed = false;
  SkillVector skill;
  double return_gt = 0.0;
};

/// Transition store with a per-trajectory index. When full, whole oldest
/// trajectories are evicted so stored spans never lose their prefix.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  int begin_trajectory(SkillVector skill);
  /// Appends to the open trajectory; fills traj_id, step and skill.
  void append(Transition t);
  void end_trajectory();
  int add_trajectory(SkillVector skill, std::vector<Transition> transitions);

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return data_.empty(); }
  bool has_open_trajectory() const { return open_; }

  const Transition& at(std::size_t i) const { return data_[i]; }
  Transition& at(std::size_t i) { return data_[i]; }

  const std::deque<TrajectoryRecord>& trajectories() const { return trajs_; }
  const TrajectoryRecord* find(int traj_id) const;
  Trajectory trajectory(int traj_id) const;
  /// Sum of the stored r_hat over a trajectory.
  double learned_return(const TrajectoryRecord& rec) const;

  /// Copies `length` transitions of a stored trajectory starting at `start`.
  Segment window(const TrajectoryRecord& rec, int start, std::size_t length) const;

  /// Indices into trajectories() of closed trajectories holding >= min_length steps.
  std::vector<std::size_t> eligible(std::size_t min_length) const;

 private:
  void evict_for(std::size_t incoming);

  std::size_t capacity_;
  std::deque<Transition> data_;
  std::size_t base_ = 0;
  std::deque<TrajectoryRecord> trajs_;
  int next_id_ = 0;
  bool open_ = false;
};

Segment sample_segment(const ReplayBuffer& buffer, std::size_t length, Rng& rng);

/// Samples two windows of `context_length` from distinct trajectories and
/// returns the centred `length`-step segments. Parent windows are attached
/// when `context_length > length`.
Query sample_query(const ReplayBuffer& buffer, std::size_t length, std::size_t context_length,
                   Rng& rng);

using StepReward = std::function<double(std::span<const double> state, int action)>;

/// Overwrites every stored r_hat with `reward(state, action)`. Returns the
/// number of transitions touched.
std::size_t relabel(ReplayBuffer& buffer, const StepReward& reward);

}  // namespace sepoa
