#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sepoa/analysis.hpp"
#include "sepoa/orchestrator.hpp"

namespace sepoa {

// ---------------------------------------------------------------------------
// Config files: flat `key = value` lines, '#' starts a comment.

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const RunConfig& config);
/// Applies one key/value; throws ConfigError on unknown keys or bad values.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

// ---------------------------------------------------------------------------
// CSV output.

std::string format_real(double v);

/// CSV file writer. In append mode the header is written only when the file
/// is new or empty; otherwise the file is truncated first.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header, bool append = false);
  void row(const std::vector<std::string>& cells);

 private:
  std::ofstream out_;
  std::size_t columns_;
};

inline const std::vector<std::string> kRunColumns = {"step",          "return_gt",    "return_hat", "feedback_used",
                                                     "disting_ratio", "match_rate"};
inline const std::vector<std::string> kProp1Columns = {"delta", "c", "mc_var", "probit_var"};
inline const std::vector<std::string> kMatchRateColumns = {"bucket_lo", "bucket_hi", "match_rate", "n"};

// ---------------------------------------------------------------------------
// Experiments.

/// Scripted PointRunner rollout that tracks x(t) = speed * t * dt with the
/// grid actions, so average speed is finely graded.
Trajectory scripted_runner_trajectory(double speed, std::uint64_t seed, int traj_id = 0);

struct MatchRateConfig {
  double epsilon = 0.3;
  int library_size = 121;  // scripted trajectories, speeds evenly spaced in [0, 1.5]
  std::size_t segment_length = 50;
  long samples = 10000;  // per bucket
  /// Ascending gap edges in return units; empty means multiples of the teacher threshold.
  std::vector<double> edges;
  std::uint64_t seed = 1;
};

struct MatchRateRow {
  double lo = 0.0;
  double hi = 0.0;
  double match_rate = 0.0;
  long n = 0;
};

struct MatchRateResult {
  double reference_return = 0.0;  // R_avg seen by the teacher
  double threshold = 0.0;         // epsilon * R_avg
  std::vector<MatchRateRow> rows;
};

/// Labels random segment pairs from a library of graded-speed trajectories
/// with the noisy teacher, bucketed by trajectory-return gap, and reports
/// agreement with oracle labels. Pairs with tied segment sums are skipped.
MatchRateResult matchrate_experiment(const MatchRateConfig& config);

struct DistinguishResult {
  std::vector<double> skill_ratios;  // per seed
  std::vector<double> disagreement_ratios;
  double skill_mean = 0.0;
  double disagreement_mean = 0.0;
};

/// Runs `base` with skill and with disagreement selection for each seed
/// (pretraining shared per seed) and collects distinguishable-query ratios.
DistinguishResult distinguish_experiment(const RunConfig& base, std::span<const std::uint64_t> seeds);

/// One CSV writer per metric family under a directory.
class MetricsSink {
 public:
  explicit MetricsSink(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  void write_run(const std::string& name, const RunMetrics& metrics);
  void write_prop1(const SweepResult& sweep);
  void write_matchrate(const MatchRateResult& result);

 private:
  std::filesystem::path dir_;
};

// ---------------------------------------------------------------------------

/// Entry point of the `sepoa` executable. Returns the process exit code.
int cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sepoa
