#include "sepoa/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sepoa/envs.hpp"
#include "sepoa/errors.hpp"

namespace sepoa {

LabelOutcome oracle_label(const Query& query, Rng& rng) {
  double r0 = query.seg0.return_gt();
  double r1 = query.seg1.return_gt();
  if (r0 > r1) return {Preference::prefer_first(), false};
  if (r1 > r0) return {Preference::prefer_second(), false};
  return {coin_flip(rng) ? Preference::prefer_first() : Preference::prefer_second(), true};
}

double recent_average(std::span<const double> recent_returns, int window) {
  if (recent_returns.empty()) throw Error("noisy teacher needs at least one recent return");
  auto n = std::min<std::size_t>(recent_returns.size(), static_cast<std::size_t>(std::max(1, window)));
  auto tail = recent_returns.subspan(recent_returns.size() - n);
  return std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(n);
}

bool is_distinguishable(const Query& query, std::span<const double> recent_returns, const NoisyTeacherConfig& config) {
  double gap = std::abs(query.traj0_return_gt - query.traj1_return_gt);
  return !(gap < config.epsilon * recent_average(recent_returns, config.window));
}

LabelOutcome noisy_label(const Query& query, std::span<const double> recent_returns, const NoisyTeacherConfig& config,
                         Rng& rng) {
  if (!is_distinguishable(query, recent_returns, config))
    return {coin_flip(rng) ? Preference::prefer_first() : Preference::prefer_second(), true};
  return oracle_label(query, rng);
}

// ---------------------------------------------------------------------------

std::optional<Choice> parse_choice(const std::string& text) {
  if (text == "left") return Choice::Left;
  if (text == "right") return Choice::Right;
  if (text == "skip") return Choice::Skip;
  return std::nullopt;
}

void LabelMailbox::open() {
  std::lock_guard lock(mu_);
  open_ = true;
}

void LabelMailbox::close() {
  {
    std::lock_guard lock(mu_);
    open_ = false;
  }
  cv_.notify_all();
}

bool LabelMailbox::is_open() const {
  std::lock_guard lock(mu_);
  return open_;
}

std::string LabelMailbox::enqueue(const Query& query, const std::string& env_name) {
  std::lock_guard lock(mu_);
  if (!open_) throw ServiceUnavailable();
  Entry e;
  e.query = query;
  e.render.query_id = "q" + std::to_string(next_id_++);
  e.render.left_positions = render_positions(query.seg0.transitions);
  e.render.right_positions = render_positions(query.seg1.transitions);
  e.render.env = env_name;
  e.render.step_count = static_cast<int>(query.seg0.length());
  e.render.created = std::chrono::system_clock::now();
  auto id = e.render.query_id;
  queue_.push_back(id);
  entries_.emplace(id, std::move(e));
  status_.queue_depth = queue_.size();
  return id;
}

std::optional<PendingQuery> LabelMailbox::oldest_pending() const {
  std::lock_guard lock(mu_);
  if (queue_.empty()) return std::nullopt;
  return entries_.at(queue_.front()).render;
}

std::size_t LabelMailbox::queue_depth() const {
  std::lock_guard lock(mu_);
  return queue_.size();
}

PostResult LabelMailbox::post(const std::string& query_id, Choice choice) {
  PostResult result = PostResult::Accepted;
  {
    std::lock_guard lock(mu_);
    auto it = entries_.find(query_id);
    if (it == entries_.end()) return PostResult::NotFound;
    auto& e = it->second;
    if (e.state != State::Pending) return PostResult::Conflict;
    std::erase(queue_, query_id);
    if (choice == Choice::Skip) {
      ++e.render.attempts;
      if (e.render.attempts > max_requeues_)
        e.state = State::Dropped;
      else
        queue_.push_back(query_id);
    } else {
      e.state = State::Labeled;
      e.y = choice == Choice::Left ? Preference::prefer_first() : Preference::prefer_second();
      ++status_.feedback_used;
    }
    status_.queue_depth = queue_.size();
  }
  cv_.notify_all();
  return result;
}

LabelMailbox::Delivery LabelMailbox::await(const std::string& query_id, std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  auto it = entries_.find(query_id);
  if (it == entries_.end()) throw Error("unknown query id " + query_id);
  cv_.wait_for(lock, timeout, [&] { return it->second.state != State::Pending || !open_; });
  Delivery d;
  switch (it->second.state) {
    case State::Labeled:
      d.resolution = Resolution::Labeled;
      d.query = it->second.query;
      d.y = it->second.y;
      it->second.state = State::Delivered;
      break;
    case State::Dropped: d.resolution = Resolution::Dropped; break;
    default: d.resolution = Resolution::Pending; break;
  }
  return d;
}

std::vector<LabelMailbox::Delivery> LabelMailbox::collect() {
  std::lock_guard lock(mu_);
  std::vector<Delivery> out;
  for (auto& [id, e] : entries_) {
    if (e.state != State::Labeled) continue;
    out.push_back({Resolution::Labeled, e.query, e.y});
    e.state = State::Delivered;
  }
  return out;
}

void LabelMailbox::set_progress(int n_total, long step, double latest_return) {
  std::lock_guard lock(mu_);
  status_.n_total = n_total;
  status_.step = step;
  status_.latest_return = latest_return;
}

ServiceStatus LabelMailbox::status() const {
  std::lock_guard lock(mu_);
  auto s = status_;
  s.queue_depth = queue_.size();
  return s;
}

HumanLabelResult remote_human_label(LabelMailbox& mailbox, const Query& query, const std::string& env_name,
                                    std::chrono::milliseconds timeout) {
  if (!mailbox.is_open()) throw ServiceUnavailable();
  HumanLabelResult out;
  out.query_id = mailbox.enqueue(query, env_name);
  auto d = mailbox.await(out.query_id, timeout);
  out.resolution = d.resolution;
  if (d.resolution == LabelMailbox::Resolution::Labeled) out.outcome = LabelOutcome{d.y, false};
  return out;
}

}  // namespace sepoa
