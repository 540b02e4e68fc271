#pragma once

#include "icx/numeric.hpp"

#include <cstdint>
#include <vector>

namespace icx {

// Feedforward network that is convex in its input u. The network itself
// consumes the expanded input [u; -u]; with every layer weight and every
// passthrough weight nonnegative and ReLU hidden activations, the map
// u -> output is convex, and the raw map on the 2d expanded input is
// additionally nondecreasing.
struct IcnnModel {
  int input_dim = 0;        // d; the raw network consumes 2d entries
  std::vector<Matrix> W;    // W[0]: n0 x 2d; W[i]: n_i x n_{i-1}
  std::vector<Matrix> D;    // D[i]: n_i x 2d for i >= 1; D[0] stays empty
  std::vector<Vector> b;    // unconstrained biases

  int layer_count() const { return static_cast<int>(W.size()); }
  int output_dim() const { return static_cast<int>(W.back().rows()); }

  /// Throws on inconsistent dimensions.
  void validate() const;
  /// Smallest entry over all constrained weights (W and D).
  double min_constrained_weight() const;
};

/// Feasible random init: |gaussian(0, 1/fan_in)| weights, zero biases.
IcnnModel make_icnn(int input_dim, const std::vector<int>& hidden_widths,
                    int output_dim, RngStream& rng);

/// [u; -u].
Vector expand_input(const Vector& u);

Vector icnn_forward(const IcnnModel& model, const Vector& u);

/// Raw pass on a free 2d-dimensional input (monotonicity checks use this).
Vector icnn_forward_raw(const IcnnModel& model, const Vector& u_hat);

/// d(out_weight . f(u))/du via backprop with the u/-u chain rule.
Vector icnn_grad_input(const IcnnModel& model, const Vector& u,
                       const Vector& out_weight);
/// Scalar-output convenience overload.
Vector icnn_grad_input(const IcnnModel& model, const Vector& u);

struct IcnnGrads {
  std::vector<Matrix> W, D;
  std::vector<Vector> b;
};

/// Mean-squared-error loss over a batch (columns of X are inputs of dim d,
/// columns of Y are targets) plus exact reverse-mode parameter gradients.
/// Pass grads = nullptr to get the loss only.
double icnn_loss_and_grads(const IcnnModel& model, const Matrix& X,
                           const Matrix& Y, IcnnGrads* grads);

/// Clamp every constrained weight to max(w, 0). Biases untouched. Idempotent.
void project_nonnegative(IcnnModel& model);

struct IcnnTrainConfig {
  std::vector<int> hidden_widths{16};
  int epochs = 200;
  double lr = 1e-3;
  int batch = 512;
  std::uint64_t seed = 0;
};

struct IcnnTrainResult {
  IcnnModel model;
  std::vector<double> loss_history;  // one entry per epoch
};

/// Adam with nonnegativity projection after every step.
IcnnTrainResult train_icnn(const Matrix& X, const Matrix& Y,
                           const IcnnTrainConfig& config);

/// Squared-loss classifier on {0,1} labels (logit output). Sublevel sets of
/// the logit are convex by construction. Throws on single-class data.
IcnnTrainResult classify_circles(const Matrix& X, const Vector& labels,
                                 const IcnnTrainConfig& config);

}  // namespace icx
