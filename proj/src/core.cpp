#include "sepoa/core.hpp"

#include <algorithm>
#include <numeric>

#include "sepoa/errors.hpp"

namespace sepoa {

double Segment::return_gt() const {
  double total = 0.0;
  for (const auto& t : transitions) total += t.r_gt;
  return total;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw Error("replay buffer capacity must be positive");
}

int ReplayBuffer::begin_trajectory(SkillVector skill) {
  if (open_) end_trajectory();
  TrajectoryRecord rec;
  rec.traj_id = next_id_++;
  rec.begin = base_ + data_.size();
  rec.skill = std::move(skill);
  trajs_.push_back(std::move(rec));
  open_ = true;
  return trajs_.back().traj_id;
}

void ReplayBuffer::append(Transition t) {
  if (!open_) throw Error("append without an open trajectory");
  evict_for(1);
  auto& rec = trajs_.back();
  t.traj_id = rec.traj_id;
  t.step = static_cast<int>(rec.length);
  t.skill = rec.skill;
  rec.return_gt += t.r_gt;
  ++rec.length;
  data_.push_back(std::move(t));
}

void ReplayBuffer::end_trajectory() {
  if (!open_) return;
  trajs_.back().closed = true;
  open_ = false;
  if (trajs_.back().length == 0) trajs_.pop_back();
}

int ReplayBuffer::add_trajectory(SkillVector skill, std::vector<Transition> transitions) {
  int id = begin_trajectory(std::move(skill));
  for (auto& t : transitions) append(std::move(t));
  end_trajectory();
  return id;
}

void ReplayBuffer::evict_for(std::size_t incoming) {
  while (data_.size() + incoming > capacity_) {
    // The open trajectory is always last; it may only be evicted if nothing
    // else is left, which means capacity is smaller than one episode.
    if (trajs_.size() <= 1 && open_) throw Error("replay buffer capacity below one episode");
    const auto& oldest = trajs_.front();
    for (std::size_t i = 0; i < oldest.length; ++i) data_.pop_front();
    base_ += oldest.length;
    trajs_.pop_front();
  }
}

const TrajectoryRecord* ReplayBuffer::find(int traj_id) const {
  // Trajectory ids are increasing along the deque.
  auto it = std::lower_bound(trajs_.begin(), trajs_.end(), traj_id,
                             [](const TrajectoryRecord& r, int id) { return r.traj_id < id; });
  if (it == trajs_.end() || it->traj_id != traj_id) return nullptr;
  return &*it;
}

Trajectory ReplayBuffer::trajectory(int traj_id) const {
  const auto* rec = find(traj_id);
  if (rec == nullptr) throw Error("unknown trajectory id");
  Trajectory out;
  out.traj_id = traj_id;
  out.skill = rec->skill;
  out.return_gt = rec->return_gt;
  out.transitions.assign(data_.begin() + static_cast<std::ptrdiff_t>(rec->begin - base_),
                         data_.begin() + static_cast<std::ptrdiff_t>(rec->begin - base_ + rec->length));
  return out;
}

double ReplayBuffer::learned_return(const TrajectoryRecord& rec) const {
  double total = 0.0;
  for (std::size_t i = 0; i < rec.length; ++i) total += data_[rec.begin - base_ + i].r_hat;
  return total;
}

Segment ReplayBuffer::window(const TrajectoryRecord& rec, int start, std::size_t length) const {
  if (start < 0 || static_cast<std::size_t>(start) + length > rec.length)
    throw Error("window outside trajectory");
  Segment seg;
  seg.traj_id = rec.traj_id;
  seg.start = start;
  auto first = data_.begin() + static_cast<std::ptrdiff_t>(rec.begin - base_ + start);
  seg.transitions.assign(first, first + static_cast<std::ptrdiff_t>(length));
  return seg;
}

std::vector<std::size_t> ReplayBuffer::eligible(std::size_t min_length) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < trajs_.size(); ++i)
    if (trajs_[i].closed && trajs_[i].length >= min_length) out.push_back(i);
  return out;
}

namespace {

Segment sample_window(const ReplayBuffer& buffer, const TrajectoryRecord& rec, std::size_t length,
                      Rng& rng) {
  auto offsets = rec.length - length + 1;
  auto start = static_cast<int>(uniform_index(rng, offsets));
  return buffer.window(rec, start, length);
}

}  // namespace

Segment sample_segment(const ReplayBuffer& buffer, std::size_t length, Rng& rng) {
  auto candidates = buffer.eligible(length);
  if (candidates.empty() || length == 0) throw NoEligibleTrajectory();
  const auto& rec = buffer.trajectories()[candidates[uniform_index(rng, candidates.size())]];
  return sample_window(buffer, rec, length, rng);
}

Query sample_query(const ReplayBuffer& buffer, std::size_t length, std::size_t context_length,
                   Rng& rng) {
  if (context_length < length) context_length = length;
  auto candidates = buffer.eligible(context_length);
  if (candidates.size() < 2) throw NoEligibleTrajectory();

  // Rejection sampling on the distinct-trajectory constraint.
  std::size_t i = candidates[uniform_index(rng, candidates.size())];
  std::size_t j = i;
  while (j == i) j = candidates[uniform_index(rng, candidates.size())];
  const auto& rec0 = buffer.trajectories()[i];
  const auto& rec1 = buffer.trajectories()[j];

  Query q;
  auto wide0 = sample_window(buffer, rec0, context_length, rng);
  auto wide1 = sample_window(buffer, rec1, context_length, rng);
  auto pad = static_cast<int>((context_length - length) / 2);
  q.seg0 = buffer.window(rec0, wide0.start + pad, length);
  q.seg1 = buffer.window(rec1, wide1.start + pad, length);
  if (context_length > length) {
    q.wide0 = std::move(wide0);
    q.wide1 = std::move(wide1);
  }
  q.z0 = rec0.skill;
  q.z1 = rec1.skill;
  q.traj0_return_gt = rec0.return_gt;
  q.traj1_return_gt = rec1.return_gt;
  return q;
}

std::size_t relabel(ReplayBuffer& buffer, const StepReward& reward) {
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    auto& t = buffer.at(i);
    t.r_hat = reward(t.state, t.action);
  }
  return buffer.size();
}

}  // namespace sepoa
