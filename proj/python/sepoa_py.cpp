#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sepoa/analysis.hpp"
#include "sepoa/errors.hpp"
#include "sepoa/harness.hpp"
#include "sepoa/orchestrator.hpp"
#include "sepoa/reward.hpp"

namespace py = pybind11;
using namespace sepoa;

namespace {

py::dict metrics_dict(const RunMetrics& m) {
  py::list rows;
  for (const auto& r : m.rows) {
    py::dict d;
    d["step"] = r.step;
    d["return_gt"] = r.return_gt;
    d["return_hat"] = r.return_hat;
    d["feedback_used"] = r.feedback_used;
    d["disting_ratio"] = r.disting_ratio;
    d["match_rate"] = r.match_rate;
    rows.append(d);
  }
  py::dict out;
  out["rows"] = rows;
  out["final_return"] = m.final_return();
  out["distinguishable_ratio"] = m.distinguishable_ratio();
  out["triples_stored"] = m.triples_stored;
  out["queries_issued"] = m.queries_issued;
  out["sessions"] = m.sessions;
  return out;
}

}  // namespace

PYBIND11_MODULE(_sepoa, m) {
  m.doc() = "Skill-enhanced preference-based RL lab";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("probit_variance", py::overload_cast<double, double>(&probit_variance), py::arg("delta"), py::arg("c"));
  m.def(
      "mc_disagreement",
      [](double delta, double c, int members, long trials, std::uint64_t seed) {
        Rng rng(seed);
        return mc_disagreement({delta, c, members, NoiseScale::StdDev}, trials, rng);
      },
      py::arg("delta"), py::arg("c"), py::arg("members") = 3, py::arg("trials") = 200000, py::arg("seed") = 1);
  m.def("bt_probability", py::overload_cast<double, double>(&bt_probability), py::arg("sum0"), py::arg("sum1"));

  m.def(
      "parse_config", [](const std::string& text) { return serialize_config(parse_config(text)); }, py::arg("text"),
      "Validates config text and returns it in canonical form.");
  m.def("default_config", [] { return serialize_config(RunConfig{}); });
  m.def(
      "run",
      [](const std::string& config_text) {
        RunConfig c = parse_config(config_text);
        c.validate();
        RunMetrics metrics;
        {
          py::gil_scoped_release release;
          metrics = run(c);
        }
        return metrics_dict(metrics);
      },
      py::arg("config_text"));
  m.def(
      "matchrate",
      [](double epsilon, long samples, std::uint64_t seed) {
        MatchRateConfig cfg;
        cfg.epsilon = epsilon;
        cfg.samples = samples;
        cfg.seed = seed;
        auto res = matchrate_experiment(cfg);
        py::list rows;
        for (const auto& r : res.rows) {
          py::dict d;
          d["bucket_lo"] = r.lo;
          d["bucket_hi"] = r.hi;
          d["match_rate"] = r.match_rate;
          d["n"] = r.n;
          rows.append(d);
        }
        py::dict out;
        out["threshold"] = res.threshold;
        out["rows"] = rows;
        return out;
      },
      py::arg("epsilon") = 0.3, py::arg("samples") = 10000, py::arg("seed") = 1);
}
