#include "sepoa/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "sepoa/approx.hpp"
#include "sepoa/errors.hpp"

namespace sepoa {

double DisagreementModel::stddev() const { return scale == NoiseScale::StdDev ? c : std::sqrt(c); }

double DisagreementModel::t() const {
  double s = stddev();
  return std::sqrt(1.0 + 2.0 * kProbitScale * kProbitScale * s * s);
}

double DisagreementModel::mu_s() const { return losses::sigmoid(delta / t()); }

double probit_variance(const DisagreementModel& model) {
  if (model.c < 0.0) throw Error("noise scale must be non-negative");
  double t = model.t();
  double mu = model.mu_s();
  return mu * (1.0 - mu) * (1.0 - 1.0 / t);
}

double probit_variance(double delta, double c) { return probit_variance(DisagreementModel{delta, c}); }

double mc_disagreement(const DisagreementModel& model, long trials, Rng& rng) {
  if (trials < 1 || model.members < 2) throw Error("need at least one trial and two estimators");
  std::normal_distribution<double> normal(0.0, 1.0);
  const double s = model.stddev();
  const int m = model.members;
  std::vector<double> p(static_cast<std::size_t>(m));
  double total = 0.0;
  for (long trial = 0; trial < trials; ++trial) {
    double mean = 0.0;
    for (int i = 0; i < m; ++i) {
      double r1 = model.delta + s * normal(rng);
      double r2 = s * normal(rng);
      p[i] = losses::sigmoid(r1 - r2);
      mean += p[i];
    }
    mean /= m;
    double var = 0.0;
    for (double v : p) var += (v - mean) * (v - mean);
    total += var / (m - 1);
  }
  return total / static_cast<double>(trials);
}

SweepResult monotonicity_sweep(double c, std::span<const double> deltas, long trials, int members, double tolerance,
                               std::uint64_t seed) {
  if (deltas.size() < 3) throw Error("monotonicity sweep needs at least three grid points");
  if (!std::is_sorted(deltas.begin(), deltas.end())) throw Error("delta grid must be ascending");
  SweepResult out;
  out.c = c;
  for (double d : deltas) {
    DisagreementModel model{d, c, members};
    Rng rng(stream_seed(seed, "prop1.mc"));
    out.rows.push_back({d, mc_disagreement(model, trials, rng), probit_variance(model)});
  }
  for (std::size_t i = 0; i + 1 < out.rows.size(); ++i)
    if (out.rows[i + 1].mc_var > out.rows[i].mc_var + tolerance) out.violations.push_back(i);
  return out;
}

}  // namespace sepoa
