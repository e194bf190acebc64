#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sepoa/core.hpp"
#include "sepoa/rng.hpp"

namespace sepoa {

struct NoisyTeacherConfig {
  double epsilon = 0.0;
  int window = 10;
};

struct LabelOutcome {
  Preference y;
  bool was_random = false;
};

/// Prefers the segment with the larger ground-truth sum; exact ties are a
/// fair coin from `rng`.
LabelOutcome oracle_label(const Query& query, Rng& rng);

/// Mean of the last min(window, n) returns.
double recent_average(std::span<const double> recent_returns, int window);

/// True unless |return(traj0) - return(traj1)| < epsilon * R_avg.
bool is_distinguishable(const Query& query, std::span<const double> recent_returns, const NoisyTeacherConfig& config);

/// Random label when the trajectory returns are too close to tell apart,
/// otherwise oracle_label on the segment sums.
LabelOutcome noisy_label(const Query& query, std::span<const double> recent_returns, const NoisyTeacherConfig& config,
                         Rng& rng);

// ---------------------------------------------------------------------------
// Human teacher plumbing.

enum class Choice { Left, Right, Skip };

std::optional<Choice> parse_choice(const std::string& text);

struct PendingQuery {
  std::string query_id;
  std::vector<std::pair<double, double>> left_positions;
  std::vector<std::pair<double, double>> right_positions;
  std::string env;
  int step_count = 0;
  std::chrono::system_clock::time_point created;
  int attempts = 0;
};

enum class PostResult { Accepted, Conflict, NotFound };

struct ServiceStatus {
  int feedback_used = 0;
  int n_total = 0;
  long step = 0;
  std::size_t queue_depth = 0;
  double latest_return = 0.0;
};

/// Shared queue between the training loop (producer of queries, consumer of
/// labels) and the label service (the reverse). All operations lock.
class LabelMailbox {
 public:
  explicit LabelMailbox(int max_requeues = 2) : max_requeues_(max_requeues) {}

  void open();
  void close();
  bool is_open() const;

  /// Queues a query with rendered positions; returns its id.
  std::string enqueue(const Query& query, const std::string& env_name);

  std::optional<PendingQuery> oldest_pending() const;
  std::size_t queue_depth() const;

  /// Applies a labeler's choice. Left/right resolve the query; skip re-queues
  /// it up to max_requeues times, then drops it.
  PostResult post(const std::string& query_id, Choice choice);

  enum class Resolution { Labeled, Pending, Dropped };
  struct Delivery {
    Resolution resolution = Resolution::Pending;
    Query query;
    Preference y;
  };

  /// Blocks up to `timeout` for `query_id` to resolve. A labeled result is
  /// handed out exactly once.
  Delivery await(const std::string& query_id, std::chrono::milliseconds timeout);
  /// Takes every labeled-but-undelivered query.
  std::vector<Delivery> collect();

  void set_progress(int n_total, long step, double latest_return);
  ServiceStatus status() const;

 private:
  enum class State { Pending, Labeled, Dropped, Delivered };
  struct Entry {
    Query query;
    PendingQuery render;
    State state = State::Pending;
    Preference y;
  };

  mutable std::mutex mu_;
  std::condition_variable cv_;
  bool open_ = false;
  int max_requeues_;
  long next_id_ = 0;
  std::map<std::string, Entry> entries_;
  std::deque<std::string> queue_;
  ServiceStatus status_;
};

struct HumanLabelResult {
  LabelMailbox::Resolution resolution = LabelMailbox::Resolution::Pending;
  std::string query_id;
  std::optional<LabelOutcome> outcome;
};

/// Posts `query` to the mailbox and waits up to `timeout` for a label.
/// Throws ServiceUnavailable when the mailbox is closed.
HumanLabelResult remote_human_label(LabelMailbox& mailbox, const Query& query, const std::string& env_name,
                                    std::chrono::milliseconds timeout);

}  // namespace sepoa
