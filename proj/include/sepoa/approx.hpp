#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace sepoa {

/// Flat parameter storage. Over-aligned so vectorized products take the same
/// code path, and round the same way, whatever the allocation address.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

enum class OutputActivation { Identity, Tanh, UnitNormalize };

/// Throws UnsupportedPrimitive for anything outside {identity, tanh, unit_normalize}.
OutputActivation parse_output_activation(std::string_view name);
std::string_view to_string(OutputActivation act);

/// Feed-forward net with rectifier hidden layers and a single flat parameter
/// vector. Layer l stores its (n_out x n_in) column-major weight block
/// followed by n_out biases. Inputs are matrices with one sample per column.
class Mlp {
 public:
  struct Tape {
    std::vector<Eigen::MatrixXd> activations;  // [0] = inputs, then hidden outputs
    Eigen::MatrixXd pre_output;
    Eigen::MatrixXd output;
    Eigen::RowVectorXd norms;  // unit-normalize head only
  };

  Mlp() = default;
  Mlp(std::vector<int> layer_sizes, OutputActivation output, std::uint64_t seed);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  OutputActivation output_activation() const { return output_; }

  std::size_t param_count() const { return params_.size(); }
  ParamVector& params() { return params_; }
  const ParamVector& params() const { return params_; }

  Eigen::VectorXd forward(std::span<const double> input) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs, Tape& tape) const;

  /// Adds dLoss/dparams to `grad` given dLoss/doutputs for the taped batch.
  void backward(const Tape& tape, const Eigen::MatrixXd& d_output, std::span<double> grad) const;

 private:
  Eigen::MatrixXd run(const Eigen::MatrixXd& inputs, Tape* tape) const;

  std::vector<int> sizes_;
  OutputActivation output_ = OutputActivation::Identity;
  ParamVector params_;
  std::vector<std::size_t> offsets_;
};

/// Expected parameter count: sum over layers of (n_in + 1) * n_out.
std::size_t mlp_param_count(std::span<const int> layer_sizes);

/// Runs `loss(outputs, d_outputs)` on the net's batch output and
/// backpropagates. `grad` is overwritten. Returns the loss value.
template <class LossFn>
double loss_and_grad(const Mlp& net, const Eigen::MatrixXd& inputs, LossFn&& loss,
                     ParamVector& grad) {
  Mlp::Tape tape;
  Eigen::MatrixXd out = net.forward(inputs, tape);
  Eigen::MatrixXd d_out = Eigen::MatrixXd::Zero(out.rows(), out.cols());
  double value = loss(static_cast<const Eigen::MatrixXd&>(out), d_out);
  grad.assign(net.param_count(), 0.0);
  net.backward(tape, d_out, grad);
  return value;
}

namespace losses {

double sigmoid(double x);
double log_sigmoid(double x);
double softplus(double x);
Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits);

/// Mean over all entries of (out - target)^2.
double mean_squared_error(const Eigen::MatrixXd& out, const Eigen::MatrixXd& target,
                          Eigen::MatrixXd& d_out);

/// Mean over columns of -log softmax(out)[label].
double softmax_cross_entropy(const Eigen::MatrixXd& logits, std::span<const int> labels,
                             Eigen::MatrixXd& d_out);

}  // namespace losses

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(std::size_t n, double learning_rate)
      : m(n, 0.0), v(n, 0.0), lr(learning_rate) {}
};

/// One bias-corrected Adam update, in place.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad);

/// Packs a vector of equal-length rows into a (dim x n) column matrix.
Eigen::MatrixXd columns(const std::vector<std::vector<double>>& rows);

}  // namespace sepoa
