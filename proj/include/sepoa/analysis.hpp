#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "sepoa/rng.hpp"

namespace sepoa {

/// Probit input scaling that matches the logistic sigmoid, sqrt(pi/8).
inline const double kProbitScale = std::sqrt(std::numbers::pi / 8.0);

/// How the estimator noise parameter c is read.
enum class NoiseScale { StdDev, Variance };

/// Ensemble of m reward estimators whose segment returns are Gaussian around
/// the true returns r1 = delta, r2 = 0 with noise scale c.
struct DisagreementModel {
  double delta = 0.0;
  double c = 1.0;
  int members = 3;
  NoiseScale scale = NoiseScale::StdDev;

  double stddev() const;
  /// sqrt(1 + 2 lambda^2 sigma^2)
  double t() const;
  /// sigmoid(delta / t)
  double mu_s() const;
};

/// mu_s (1 - mu_s)(1 - 1/t): closed-form approximation of the variance of
/// sigmoid(r1_hat - r2_hat) across estimators.
double probit_variance(const DisagreementModel& model);
double probit_variance(double delta, double c);

/// Mean over trials of the unbiased sample variance of m estimator
/// preferences sigmoid(r1_hat - r2_hat).
double mc_disagreement(const DisagreementModel& model, long trials, Rng& rng);

struct SweepRow {
  double delta = 0.0;
  double mc_var = 0.0;
  double probit_var = 0.0;
};

struct SweepResult {
  double c = 0.0;
  std::vector<SweepRow> rows;
  /// Indices i where mc_var[i+1] exceeds mc_var[i] by more than the tolerance.
  std::vector<std::size_t> violations;
};

/// Evaluates both variances over an ascending delta grid. Every grid point
/// reuses the same random stream so neighbouring rows share their noise draws.
SweepResult monotonicity_sweep(double c, std::span<const double> deltas, long trials, int members,
                               double tolerance, std::uint64_t seed);

}  // namespace sepoa
