#include "sepoa/harness.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <sstream>

#include "sepoa/envs.hpp"
#include "sepoa/errors.hpp"
#include "sepoa/label_service.hpp"
#include "sepoa/teacher.hpp"

namespace sepoa {

namespace {

template <class Config, class F>
void visit_fields(Config& c, F&& f) {
  f("env", c.env);
  f("skill_method", c.skill_method);
  f("skill_dim", c.skill_dim);
  f("teacher", c.teacher);
  f("epsilon", c.epsilon);
  f("teacher_window", c.teacher_window);
  f("selection", c.selection);
  f("surf", c.surf);
  f("pretrain_steps", c.pretrain_steps);
  f("online_steps", c.online_steps);
  f("feedback_frequency", c.feedback_frequency);
  f("queries_per_session", c.queries_per_session);
  f("total_feedback", c.total_feedback);
  f("candidate_ratio", c.candidate_ratio);
  f("metrics_every", c.metrics_every);
  f("segment_length", c.segment_length);
  f("precrop_length", c.precrop_length);
  f("crop_min", c.crop_min);
  f("crop_max", c.crop_max);
  f("surf_mu", c.surf_mu);
  f("surf_threshold", c.surf_threshold);
  f("ensemble_size", c.ensemble_size);
  f("reward_hidden", c.reward_hidden);
  f("reward_lr", c.reward_lr);
  f("reward_epochs", c.reward_epochs);
  f("reward_batch", c.reward_batch);
  f("hidden", c.hidden);
  f("critic_lr", c.critic_lr);
  f("alpha", c.alpha);
  f("gamma", c.gamma);
  f("batch_size", c.batch_size);
  f("warmup", c.warmup);
  f("update_every", c.update_every);
  f("target_sync", c.target_sync);
  f("beta", c.beta);
  f("knn_k", c.knn_k);
  f("particles", c.particles);
  f("estimator_hidden", c.estimator_hidden);
  f("estimator_layers", c.estimator_layers);
  f("estimator_steps", c.estimator_steps);
  f("task_samples", c.task_samples);
  f("keep_task_skill", c.keep_task_skill);
  f("explore_prob", c.explore_prob);
  f("buffer_capacity", c.buffer_capacity);
  f("human_timeout_ms", c.human_timeout_ms);
  f("seed", c.seed);
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("bad value for " + key + ": '" + v + "'");
  return out;
}

void assign(const std::string&, const std::string& v, std::string& field) { field = v; }
void assign(const std::string& key, const std::string& v, int& field) { field = parse_number<int>(key, v); }
void assign(const std::string& key, const std::string& v, long& field) { field = parse_number<long>(key, v); }
void assign(const std::string& key, const std::string& v, std::uint64_t& field) {
  field = parse_number<std::uint64_t>(key, v);
}
void assign(const std::string& key, const std::string& v, double& field) {
  field = parse_number<double>(key, v);
}
void assign(const std::string& key, const std::string& v, bool& field) {
  if (v == "true" || v == "1")
    field = true;
  else if (v == "false" || v == "0")
    field = false;
  else
    throw ConfigError("bad value for " + key + ": '" + v + "'");
}

std::string render(const std::string& v) { return v; }
std::string render(bool v) { return v ? "true" : "false"; }
std::string render(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
template <class T>
std::string render(T v) {
  return std::to_string(v);
}

}  // namespace

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  bool found = false;
  visit_fields(config, [&](const char* name, auto& field) {
    if (key != name) return;
    assign(key, value, field);
    found = true;
  });
  if (!found) throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    set_config_value(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  visit_fields(config, [&](const char* name, const auto& field) {
    out += name;
    out += " = ";
    out += render(field);
    out += '\n';
  });
  return out;
}

// ---------------------------------------------------------------------------

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header, bool append)
    : columns_(header.size()) {
  bool fresh = !append || !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  out_.open(path, append ? std::ios::app : std::ios::trunc);
  if (!out_) throw Error("cannot write " + path.string());
  if (fresh) row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) throw Error("csv row width mismatch");
  for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
  out_ << '\n';
  out_.flush();
}

MetricsSink::MetricsSink(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

void MetricsSink::write_run(const std::string& name, const RunMetrics& metrics) {
  CsvWriter csv(dir_ / (name + ".csv"), kRunColumns);
  for (const auto& r : metrics.rows)
    csv.row({std::to_string(r.step), format_real(r.return_gt), format_real(r.return_hat),
             std::to_string(r.feedback_used), format_real(r.disting_ratio), format_real(r.match_rate)});
}

void MetricsSink::write_prop1(const SweepResult& sweep) {
  CsvWriter csv(dir_ / "prop1.csv", kProp1Columns);
  for (const auto& r : sweep.rows)
    csv.row({format_real(r.delta), format_real(sweep.c), format_real(r.mc_var), format_real(r.probit_var)});
}

void MetricsSink::write_matchrate(const MatchRateResult& result) {
  CsvWriter csv(dir_ / "matchrate.csv", kMatchRateColumns);
  for (const auto& r : result.rows)
    csv.row({format_real(r.lo), format_real(r.hi), format_real(r.match_rate), std::to_string(r.n)});
}

// ---------------------------------------------------------------------------

Trajectory scripted_runner_trajectory(double speed, std::uint64_t seed, int traj_id) {
  PointRunner env;
  auto state = env.reset(seed);
  const double x0 = state[0];
  Trajectory traj;
  traj.traj_id = traj_id;
  for (int t = 0; t < PointRunner::kEpisodeLength; ++t) {
    double target = x0 + speed * (t + 1) * PointRunner::kDt;
    int best = 0;
    double best_err = INFINITY;
    for (int ax = -1; ax <= 1; ++ax) {
      double vx = std::clamp(state[2] + ax * PointRunner::kAccel * PointRunner::kDt, -PointRunner::kMaxSpeed,
                             PointRunner::kMaxSpeed);
      double err = std::abs(state[0] + vx * PointRunner::kDt - target);
      if (err < best_err - 1e-12) {
        best_err = err;
        best = ax;
      }
    }
    int action = grid_action_id(best, 0);
    auto res = env.step(state, action);
    Transition tr;
    tr.state = state;
    tr.action = action;
    tr.next_state = res.next_state;
    tr.r_gt = res.r_gt;
    tr.traj_id = traj_id;
    tr.step = t;
    traj.return_gt += res.r_gt;
    traj.transitions.push_back(std::move(tr));
    state = std::move(res.next_state);
  }
  return traj;
}

MatchRateResult matchrate_experiment(const MatchRateConfig& config) {
  if (config.library_size < 2) throw ConfigError("matchrate library needs at least 2 trajectories");
  const std::size_t H = config.segment_length;
  std::vector<Trajectory> library;
  for (int i = 0; i < config.library_size; ++i) {
    double speed = PointRunner::kTargetSpeed * i / (config.library_size - 1);
    library.push_back(scripted_runner_trajectory(speed, stream_seed(config.seed, "matchrate.env." + std::to_string(i)), i));
  }
  const std::size_t T = library.front().transitions.size();
  if (H == 0 || H > T) throw ConfigError("segment_length must be in [1, episode length]");

  MatchRateResult result;
  for (const auto& t : library) result.reference_return += t.return_gt;
  result.reference_return /= static_cast<double>(library.size());
  result.threshold = config.epsilon * result.reference_return;

  std::vector<double> edges = config.edges;
  if (edges.empty())
    for (double m : {0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0}) edges.push_back(m * result.threshold);
  if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end()))
    throw ConfigError("matchrate bucket edges must be ascending");

  const std::vector<double> recent{result.reference_return};
  const NoisyTeacherConfig teacher{config.epsilon, 10};
  auto rng = make_stream(config.seed, "matchrate.pairs");
  auto label_rng = make_stream(config.seed, "teacher");
  Query q;

  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    MatchRateRow row{edges[b], edges[b + 1], 0.0, 0};
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < config.library_size; ++i)
      for (int j = i + 1; j < config.library_size; ++j) {
        double gap = std::abs(library[i].return_gt - library[j].return_gt);
        if (gap >= row.lo && gap < row.hi) pairs.emplace_back(i, j);
      }
    long matches = 0;
    long attempts = 0;
    while (!pairs.empty() && row.n < config.samples && attempts < 20 * config.samples) {
      ++attempts;
      auto [i, j] = pairs[uniform_index(rng, pairs.size())];
      if (coin_flip(rng)) std::swap(i, j);
      auto s0 = uniform_index(rng, T - H + 1);
      auto s1 = uniform_index(rng, T - H + 1);
      auto first0 = library[i].transitions.begin() + static_cast<std::ptrdiff_t>(s0);
      auto first1 = library[j].transitions.begin() + static_cast<std::ptrdiff_t>(s1);
      q.seg0.transitions.assign(first0, first0 + static_cast<std::ptrdiff_t>(H));
      q.seg1.transitions.assign(first1, first1 + static_cast<std::ptrdiff_t>(H));
      if (q.seg0.return_gt() == q.seg1.return_gt()) continue;
      q.traj0_return_gt = library[i].return_gt;
      q.traj1_return_gt = library[j].return_gt;
      auto noisy = noisy_label(q, recent, teacher, label_rng);
      auto oracle = oracle_label(q, label_rng);
      if (noisy.y == oracle.y) ++matches;
      ++row.n;
    }
    row.match_rate = row.n > 0 ? static_cast<double>(matches) / static_cast<double>(row.n) : 0.0;
    result.rows.push_back(row);
  }
  return result;
}

DistinguishResult distinguish_experiment(const RunConfig& base, std::span<const std::uint64_t> seeds) {
  DistinguishResult out;
  for (auto seed : seeds) {
    RunConfig cfg = base;
    cfg.seed = seed;
    cfg.validate();
    std::optional<PretrainResult> shared;
    if (cfg.pretrain_steps > 0) {
      auto env = make_env(cfg.env);
      shared = pretrain(*env, cfg.skill_space(), cfg.pretrain_config(), cfg.seed);
    }
    const PretrainResult* cache = shared ? &*shared : nullptr;
    cfg.selection = "skill";
    out.skill_ratios.push_back(run(cfg, cache).distinguishable_ratio());
    cfg.selection = "disagreement";
    out.disagreement_ratios.push_back(run(cfg, cache).distinguishable_ratio());
  }
  auto mean = [](const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  out.skill_mean = mean(out.skill_ratios);
  out.disagreement_mean = mean(out.disagreement_ratios);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

void add_common(CLI::App* sub, CommonOptions& o, bool with_config = true) {
  if (with_config) sub->add_option("--config", o.config_path, "RunConfig file (key = value)");
  sub->add_option("--seed", o.seed, "Root seed");
  sub->add_option("--out", o.out, "Output directory")->capture_default_str();
}

RunConfig resolve_config(const CommonOptions& o) {
  RunConfig cfg = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  return cfg;
}

std::vector<std::uint64_t> seed_list(std::uint64_t first, int n) {
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(n));
  std::iota(seeds.begin(), seeds.end(), first);
  return seeds;
}

}  // namespace

int cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Skill-enhanced preference-based RL lab"};
  app.require_subcommand(1);
  CommonOptions common;

  auto* run_cmd = app.add_subcommand("run", "Pretrain and run the online preference loop");
  add_common(run_cmd, common);

  auto* ablate_cmd = app.add_subcommand("ablate", "Pretrain x selection (x SURF) ablation grid");
  add_common(ablate_cmd, common);
  int ablate_seeds = 1;
  bool ablate_surf = false;
  ablate_cmd->add_option("--seeds", ablate_seeds, "Number of consecutive seeds")->check(CLI::PositiveNumber);
  ablate_cmd->add_flag("--surf", ablate_surf, "Also toggle SURF");

  auto* prop1_cmd = app.add_subcommand("prop1", "Monte-Carlo check of the probit disagreement formula");
  add_common(prop1_cmd, common, false);
  double prop1_c = 1.0;
  long prop1_trials = 200000;
  prop1_cmd->add_option("--c", prop1_c, "Estimator noise scale")->capture_default_str();
  prop1_cmd->add_option("--trials", prop1_trials, "Trials per delta")->capture_default_str();

  auto* match_cmd = app.add_subcommand("matchrate", "Noisy-teacher agreement by return gap");
  add_common(match_cmd, common, false);
  MatchRateConfig match;
  match_cmd->add_option("--epsilon", match.epsilon, "Teacher error threshold")->capture_default_str();
  match_cmd->add_option("--samples", match.samples, "Labeled pairs per bucket")->capture_default_str();

  auto* dist_cmd = app.add_subcommand("distinguish", "Distinguishable-query ratio, skill vs disagreement");
  add_common(dist_cmd, common);
  int dist_seeds = 5;
  dist_cmd->add_option("--seeds", dist_seeds, "Number of consecutive seeds")->check(CLI::PositiveNumber);

  auto* serve_cmd = app.add_subcommand("serve", "Label service plus a human-teacher run");
  add_common(serve_cmd, common);
  int port = kDefaultPort;
  std::string static_dir;
  serve_cmd->add_option("--port", port, "HTTP port, 0 picks a free one")->capture_default_str();
  serve_cmd->add_option("--static", static_dir, "Directory with the labeling UI bundle");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    MetricsSink sink(common.out);
    if (*run_cmd) {
      auto cfg = resolve_config(common);
      auto m = run(cfg);
      sink.write_run("run", m);
      out << "final_return " << format_real(m.final_return()) << "\n";
    } else if (*ablate_cmd) {
      auto base = resolve_config(common);
      CsvWriter summary(sink.dir() / "ablate_summary.csv", {"cell", "seed", "final_return", "disting_ratio"});
      for (auto seed : seed_list(base.seed, ablate_seeds)) {
        base.seed = seed;
        for (const auto& cell : ablate(base, {true, true, ablate_surf})) {
          sink.write_run("ablate_" + cell.name + "_seed" + std::to_string(seed), cell.metrics);
          summary.row({cell.name, std::to_string(seed), format_real(cell.metrics.final_return()),
                       format_real(cell.metrics.distinguishable_ratio())});
          out << cell.name << " seed " << seed << " final_return " << format_real(cell.metrics.final_return())
              << "\n";
        }
      }
    } else if (*prop1_cmd) {
      std::vector<double> deltas;
      for (int i = 0; i <= 16; ++i) deltas.push_back(0.25 * i);
      auto sweep = monotonicity_sweep(prop1_c, deltas, prop1_trials, 3, 1e-3, common.seed.value_or(1));
      sink.write_prop1(sweep);
      out << "violations " << sweep.violations.size() << "\n";
    } else if (*match_cmd) {
      match.seed = common.seed.value_or(1);
      auto res = matchrate_experiment(match);
      sink.write_matchrate(res);
      out << "threshold " << format_real(res.threshold) << "\n";
    } else if (*dist_cmd) {
      auto base = resolve_config(common);
      auto seeds = seed_list(base.seed, dist_seeds);
      auto res = distinguish_experiment(base, seeds);
      CsvWriter csv(sink.dir() / "distinguish.csv", {"seed", "skill_ratio", "disagreement_ratio"});
      for (std::size_t i = 0; i < seeds.size(); ++i)
        csv.row({std::to_string(seeds[i]), format_real(res.skill_ratios[i]), format_real(res.disagreement_ratios[i])});
      out << "skill " << format_real(res.skill_mean) << " disagreement " << format_real(res.disagreement_mean) << "\n";
    } else if (*serve_cmd) {
      auto cfg = resolve_config(common);
      cfg.teacher = "human";
      LabelMailbox mailbox;
      mailbox.open();
      mailbox.set_progress(cfg.total_feedback, 0, 0.0);
      LabelService service(mailbox, {"127.0.0.1", port, static_dir});
      service.start();
      out << "label service on http://127.0.0.1:" << service.port() << "\n" << std::flush;
      auto m = run(cfg, nullptr, &mailbox);
      mailbox.close();
      service.stop();
      sink.write_run("run", m);
      out << "final_return " << format_real(m.final_return()) << "\n";
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace sepoa
