#include "sepoa/approx.hpp"

#include <cmath>
#include <random>
#include <string>

#include "sepoa/errors.hpp"
#include "sepoa/rng.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace sepoa {

using Eigen::MatrixXd;

namespace {

// Batched forward passes allocate multi-megabyte activations every step.
// Keep freed heap memory around instead of handing it back to the kernel.
[[maybe_unused]] const bool kHeapTuned = [] {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
  return true;
}();

}  // namespace

OutputActivation parse_output_activation(std::string_view name) {
  if (name == "identity") return OutputActivation::Identity;
  if (name == "tanh") return OutputActivation::Tanh;
  if (name == "unit_normalize") return OutputActivation::UnitNormalize;
  throw UnsupportedPrimitive("unsupported output activation '" + std::string(name) + "'");
}

std::string_view to_string(OutputActivation act) {
  switch (act) {
    case OutputActivation::Identity: return "identity";
    case OutputActivation::Tanh: return "tanh";
    case OutputActivation::UnitNormalize: return "unit_normalize";
  }
  return "identity";
}

std::size_t mlp_param_count(std::span<const int> sizes) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
    n += static_cast<std::size_t>(sizes[l] + 1) * static_cast<std::size_t>(sizes[l + 1]);
  return n;
}

Mlp::Mlp(std::vector<int> layer_sizes, OutputActivation output, std::uint64_t seed)
    : sizes_(std::move(layer_sizes)), output_(output) {
  if (sizes_.size() < 2) throw DimensionMismatch("an mlp needs at least input and output sizes");
  params_.assign(mlp_param_count(sizes_), 0.0);
  Rng rng(seed);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(off);
    const int n_in = sizes_[l];
    const int n_out = sizes_[l + 1];
    // Fan-in uniform init for weights and biases.
    double bound = 1.0 / std::sqrt(static_cast<double>(n_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (int i = 0; i < (n_in + 1) * n_out; ++i) params_[off + i] = dist(rng);
    off += static_cast<std::size_t>((n_in + 1) * n_out);
  }
}

Eigen::VectorXd Mlp::forward(std::span<const double> input) const {
  if (static_cast<int>(input.size()) != input_size())
    throw DimensionMismatch("mlp input has " + std::to_string(input.size()) + " components, expected " +
                            std::to_string(input_size()));
  MatrixXd x = Eigen::Map<const MatrixXd>(input.data(), input_size(), 1);
  return run(x, nullptr).col(0);
}

MatrixXd Mlp::forward(const MatrixXd& inputs) const { return run(inputs, nullptr); }

MatrixXd Mlp::forward(const MatrixXd& inputs, Tape& tape) const { return run(inputs, &tape); }

MatrixXd Mlp::run(const MatrixXd& inputs, Tape* tape) const {
  if (inputs.rows() != input_size())
    throw DimensionMismatch("mlp batch has " + std::to_string(inputs.rows()) + " rows, expected " +
                            std::to_string(input_size()));
  const std::size_t layers = sizes_.size() - 1;
  if (tape != nullptr) {
    tape->activations.clear();
    tape->activations.push_back(inputs);
  }
  MatrixXd a = inputs;
  for (std::size_t l = 0; l < layers; ++l) {
    const int n_in = sizes_[l];
    const int n_out = sizes_[l + 1];
    Eigen::Map<const MatrixXd> w(params_.data() + offsets_[l], n_out, n_in);
    Eigen::Map<const Eigen::VectorXd> b(params_.data() + offsets_[l] + n_in * n_out, n_out);
    MatrixXd z = w * a;
    z.colwise() += b;
    if (l + 1 < layers) {
      a = z.cwiseMax(0.0);
      if (tape != nullptr) tape->activations.push_back(a);
    } else {
      a = std::move(z);
    }
  }

  MatrixXd out;
  switch (output_) {
    case OutputActivation::Identity:
      out = a;
      break;
    case OutputActivation::Tanh:
      out = a.array().tanh().matrix();
      break;
    case OutputActivation::UnitNormalize: {
      Eigen::RowVectorXd norms = a.colwise().norm().cwiseMax(1e-12);
      out = a.array().rowwise() / norms.array();
      if (tape != nullptr) tape->norms = norms;
      break;
    }
  }
  if (tape != nullptr) {
    tape->pre_output = std::move(a);
    tape->output = out;
  }
  return out;
}

void Mlp::backward(const Tape& tape, const MatrixXd& d_output, std::span<double> grad) const {
  if (grad.size() != params_.size()) throw DimensionMismatch("gradient buffer size mismatch");
  MatrixXd dz;
  switch (output_) {
    case OutputActivation::Identity:
      dz = d_output;
      break;
    case OutputActivation::Tanh:
      dz = d_output.array() * (1.0 - tape.output.array().square());
      break;
    case OutputActivation::UnitNormalize: {
      // d(u/|u|) = (I - y y^T) / |u|
      Eigen::RowVectorXd proj = (tape.output.array() * d_output.array()).colwise().sum();
      dz = (d_output - tape.output * proj.asDiagonal()).array().rowwise() / tape.norms.array();
      break;
    }
  }

  for (std::size_t l = sizes_.size() - 1; l-- > 0;) {
    const int n_in = sizes_[l];
    const int n_out = sizes_[l + 1];
    const MatrixXd& a_in = tape.activations[l];
    Eigen::Map<MatrixXd> gw(grad.data() + offsets_[l], n_out, n_in);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + offsets_[l] + n_in * n_out, n_out);
    gw.noalias() += dz * a_in.transpose();
    gb += dz.rowwise().sum();
    if (l == 0) break;
    Eigen::Map<const MatrixXd> w(params_.data() + offsets_[l], n_out, n_in);
    MatrixXd da = w.transpose() * dz;
    dz = (a_in.array() > 0.0).select(da, 0.0);
  }
}

namespace losses {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double log_sigmoid(double x) { return -softplus(-x); }

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  double mx = logits.maxCoeff();
  double lse = mx + std::log((logits.array() - mx).exp().sum());
  return logits.array() - lse;
}

double mean_squared_error(const MatrixXd& out, const MatrixXd& target, MatrixXd& d_out) {
  MatrixXd diff = out - target;
  auto n = static_cast<double>(diff.size());
  d_out = 2.0 * diff / n;
  return diff.squaredNorm() / n;
}

double softmax_cross_entropy(const MatrixXd& logits, std::span<const int> labels, MatrixXd& d_out) {
  auto n = static_cast<double>(logits.cols());
  d_out.resize(logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    Eigen::VectorXd lp = log_softmax(logits.col(j));
    total -= lp(labels[j]);
    d_out.col(j) = lp.array().exp() / n;
    d_out(labels[j], j) -= 1.0 / n;
  }
  return total / n;
}

}  // namespace losses

void adam_step(AdamState& s, std::span<double> params, std::span<const double> grad) {
  if (params.size() != grad.size() || s.m.size() != params.size())
    throw DimensionMismatch("adam state, params and grad must share a length");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grad[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grad[i] * grad[i];
    double m_hat = s.m[i] / c1;
    double v_hat = s.v[i] / c2;
    params[i] -= s.lr * m_hat / (std::sqrt(v_hat) + s.eps);
  }
}

MatrixXd columns(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  MatrixXd out(static_cast<Eigen::Index>(rows.front().size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j)
    out.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXd>(rows[j].data(), out.rows());
  return out;
}

}  // namespace sepoa
