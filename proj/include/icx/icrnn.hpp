#pragma once

#include "icx/numeric.hpp"

#include <cstdint>
#include <vector>

namespace icx {

// Recurrent network that is convex in its input sequence. Per step:
//   z_t = relu(U x_t + W z_{t-1} + D2 x_{t-1} + bz)
//   y_t = V z_t + D1 z_{t-1} + D3 x_t + by
// x_t is a frame that already carries any input expansion (e.g. [s; u; -u]).
// With U, W, V, D1, D2, D3 elementwise nonnegative, the unrolled map from
// the frame sequence to every output is convex and nondecreasing.
struct IcrnnModel {
  int in_dim = 0;
  int hidden_dim = 0;
  int out_dim = 0;
  int n_w = 0;  // memory window used when building training windows

  Matrix U, W, V, D1, D2, D3;
  Vector bz, by;

  void validate() const;
  double min_constrained_weight() const;
};

IcrnnModel make_icrnn(int in_dim, int hidden_dim, int out_dim, int n_w,
                      RngStream& rng);

struct IcrnnPass {
  Matrix Y;  // out_dim x L
  Matrix Z;  // hidden_dim x L
};

/// frames: in_dim x L, L >= 1. z0 defaults to zeros; the frame before the
/// first one is taken as zero.
IcrnnPass icrnn_forward(const IcrnnModel& model, const Matrix& frames,
                        const Vector& z0);
IcrnnPass icrnn_forward(const IcrnnModel& model, const Matrix& frames);

struct IcrnnGrads {
  Matrix U, W, V, D1, D2, D3;
  Vector bz, by;
};

/// Reverse pass: out_weight (out_dim x L) weights each output entry of the
/// scalar cost sum(out_weight .* Y). Fills parameter grads and/or per-frame
/// input grads (in_dim x L); either pointer may be null.
void icrnn_backward(const IcrnnModel& model, const Matrix& frames,
                    const Vector& z0, const Matrix& out_weight,
                    IcrnnGrads* param_grads, Matrix* frame_grads);

struct IcrnnSequence {
  Matrix frames;   // in_dim x L
  Matrix targets;  // out_dim x L
  Vector mask;     // L entries in {0,1}; which steps contribute to the loss
};

/// MSE over masked steps, averaged over the batch; exact BPTT gradients.
/// All sequences must share one length.
double icrnn_loss_and_grads(const IcrnnModel& model,
                            const std::vector<IcrnnSequence>& batch,
                            IcrnnGrads* grads);

void project_nonnegative(IcrnnModel& model);

/// Frames [s_t; u_t; -u_t] for the control stack.
Matrix assemble_frames(const Matrix& states, const Matrix& actions);

/// Gradient of sum over all outputs w.r.t. each action u_t, states held
/// fixed (the u/-u chain rule applied to the frame layout above).
Matrix icrnn_grad_actions(const IcrnnModel& model, const Matrix& states,
                          const Matrix& actions);

struct IcrnnTrainConfig {
  int hidden_dim = 32;
  int epochs = 100;
  double lr = 1e-3;
  int batch = 64;
  std::uint64_t seed = 0;
};

struct IcrnnTrainResult {
  IcrnnModel model;
  std::vector<double> loss_history;
};

/// Adam with nonnegativity projection after every step.
IcrnnTrainResult train_icrnn(const std::vector<IcrnnSequence>& data, int n_w,
                             const IcrnnTrainConfig& config);

}  // namespace icx
