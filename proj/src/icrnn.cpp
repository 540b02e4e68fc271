#include "icx/icrnn.hpp"

#include "icx/adam.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace icx {

void IcrnnModel::validate() const {
  if (in_dim < 1 || hidden_dim < 1 || out_dim < 1)
    throw std::invalid_argument("IcrnnModel: dims must be >= 1");
  if (n_w < 1) throw std::invalid_argument("IcrnnModel: n_w must be >= 1");
  auto check = [](const Matrix& m, int r, int c, const char* name) {
    if (m.rows() != r || m.cols() != c)
      throw std::invalid_argument(std::string("IcrnnModel: bad shape for ") + name);
  };
  check(U, hidden_dim, in_dim, "U");
  check(W, hidden_dim, hidden_dim, "W");
  check(D2, hidden_dim, in_dim, "D2");
  check(V, out_dim, hidden_dim, "V");
  check(D1, out_dim, hidden_dim, "D1");
  check(D3, out_dim, in_dim, "D3");
  if (bz.size() != hidden_dim || by.size() != out_dim)
    throw std::invalid_argument("IcrnnModel: bias dim mismatch");
}

double IcrnnModel::min_constrained_weight() const {
  return std::min({U.minCoeff(), W.minCoeff(), D2.minCoeff(), V.minCoeff(),
                   D1.minCoeff(), D3.minCoeff()});
}

IcrnnModel make_icrnn(int in_dim, int hidden_dim, int out_dim, int n_w,
                      RngStream& rng) {
  IcrnnModel m;
  m.in_dim = in_dim;
  m.hidden_dim = hidden_dim;
  m.out_dim = out_dim;
  m.n_w = n_w;
  // Nonnegative weights get no cancellation, so the per-step gain is the
  // mean row sum; 1/fan_in keeps the unrolled recurrence contractive.
  auto init = [&](int r, int c) {
    return rng.gaussian_matrix(r, c, 0.0, 1.0 / c).cwiseAbs().eval();
  };
  m.U = init(hidden_dim, in_dim);
  m.W = init(hidden_dim, hidden_dim);
  m.D2 = init(hidden_dim, in_dim);
  m.V = init(out_dim, hidden_dim);
  m.D1 = init(out_dim, hidden_dim);
  m.D3 = init(out_dim, in_dim);
  m.bz = Vector::Zero(hidden_dim);
  m.by = Vector::Zero(out_dim);
  m.validate();
  return m;
}

IcrnnPass icrnn_forward(const IcrnnModel& model, const Matrix& frames,
                        const Vector& z0) {
  const Eigen::Index L = frames.cols();
  if (L == 0) throw std::invalid_argument("icrnn_forward: empty sequence");
  if (frames.rows() != model.in_dim)
    throw std::invalid_argument("icrnn_forward: frame dim mismatch");
  if (z0.size() != model.hidden_dim)
    throw std::invalid_argument("icrnn_forward: z0 dim mismatch");

  IcrnnPass pass;
  pass.Y.resize(model.out_dim, L);
  pass.Z.resize(model.hidden_dim, L);
  Vector z_prev = z0;
  Vector x_prev = Vector::Zero(model.in_dim);
  for (Eigen::Index t = 0; t < L; ++t) {
    const Vector x = frames.col(t);
    const Vector z =
        relu(model.U * x + model.W * z_prev + model.D2 * x_prev + model.bz);
    pass.Z.col(t) = z;
    pass.Y.col(t) =
        model.V * z + model.D1 * z_prev + model.D3 * x + model.by;
    z_prev = z;
    x_prev = x;
  }
  return pass;
}

IcrnnPass icrnn_forward(const IcrnnModel& model, const Matrix& frames) {
  return icrnn_forward(model, frames, Vector::Zero(model.hidden_dim));
}

void icrnn_backward(const IcrnnModel& model, const Matrix& frames,
                    const Vector& z0, const Matrix& out_weight,
                    IcrnnGrads* param_grads, Matrix* frame_grads) {
  const Eigen::Index L = frames.cols();
  if (out_weight.rows() != model.out_dim || out_weight.cols() != L)
    throw std::invalid_argument("icrnn_backward: out_weight shape mismatch");

  // Re-run the forward pass keeping preactivations for the relu mask.
  Matrix Zpre(model.hidden_dim, L), Z(model.hidden_dim, L);
  {
    Vector z_prev = z0;
    Vector x_prev = Vector::Zero(model.in_dim);
    for (Eigen::Index t = 0; t < L; ++t) {
      const Vector x = frames.col(t);
      const Vector pre =
          model.U * x + model.W * z_prev + model.D2 * x_prev + model.bz;
      Zpre.col(t) = pre;
      Z.col(t) = pre.cwiseMax(0.0);
      z_prev = Z.col(t);
      x_prev = x;
    }
  }

  if (param_grads) {
    param_grads->U = Matrix::Zero(model.hidden_dim, model.in_dim);
    param_grads->W = Matrix::Zero(model.hidden_dim, model.hidden_dim);
    param_grads->D2 = Matrix::Zero(model.hidden_dim, model.in_dim);
    param_grads->V = Matrix::Zero(model.out_dim, model.hidden_dim);
    param_grads->D1 = Matrix::Zero(model.out_dim, model.hidden_dim);
    param_grads->D3 = Matrix::Zero(model.out_dim, model.in_dim);
    param_grads->bz = Vector::Zero(model.hidden_dim);
    param_grads->by = Vector::Zero(model.out_dim);
  }
  Matrix dX = Matrix::Zero(model.in_dim, L);
  Matrix dZ = Matrix::Zero(model.hidden_dim, L);

  auto z_at = [&](Eigen::Index t) -> Vector {
    return t < 0 ? z0 : Vector(Z.col(t));
  };
  auto x_at = [&](Eigen::Index t) -> Vector {
    return t < 0 ? Vector(Vector::Zero(model.in_dim)) : Vector(frames.col(t));
  };

  for (Eigen::Index t = L - 1; t >= 0; --t) {
    const Vector dy = out_weight.col(t);
    dZ.col(t) += model.V.transpose() * dy;
    if (t >= 1) dZ.col(t - 1) += model.D1.transpose() * dy;
    dX.col(t) += model.D3.transpose() * dy;
    if (param_grads) {
      param_grads->V += dy * z_at(t).transpose();
      param_grads->D1 += dy * z_at(t - 1).transpose();
      param_grads->D3 += dy * x_at(t).transpose();
      param_grads->by += dy;
    }

    const Vector dpre =
        dZ.col(t).cwiseProduct(relu_mask(Zpre.col(t)));
    dX.col(t) += model.U.transpose() * dpre;
    if (t >= 1) {
      dZ.col(t - 1) += model.W.transpose() * dpre;
      dX.col(t - 1) += model.D2.transpose() * dpre;
    }
    if (param_grads) {
      param_grads->U += dpre * x_at(t).transpose();
      param_grads->W += dpre * z_at(t - 1).transpose();
      param_grads->D2 += dpre * x_at(t - 1).transpose();
      param_grads->bz += dpre;
    }
  }
  if (frame_grads) *frame_grads = dX;
}

double icrnn_loss_and_grads(const IcrnnModel& model,
                            const std::vector<IcrnnSequence>& batch,
                            IcrnnGrads* grads) {
  if (batch.empty()) throw std::invalid_argument("icrnn_loss_and_grads: empty batch");
  const Eigen::Index L = batch.front().frames.cols();
  double denom = 0.0;
  for (const auto& seq : batch) {
    if (seq.frames.cols() != L)
      throw std::invalid_argument("icrnn_loss_and_grads: ragged batch");
    if (seq.targets.cols() != L || seq.mask.size() != L)
      throw std::invalid_argument("icrnn_loss_and_grads: target/mask shape mismatch");
    denom += seq.mask.sum() * model.out_dim;
  }
  if (denom <= 0.0)
    throw std::invalid_argument("icrnn_loss_and_grads: empty mask");

  if (grads) {
    grads->U = Matrix::Zero(model.hidden_dim, model.in_dim);
    grads->W = Matrix::Zero(model.hidden_dim, model.hidden_dim);
    grads->D2 = Matrix::Zero(model.hidden_dim, model.in_dim);
    grads->V = Matrix::Zero(model.out_dim, model.hidden_dim);
    grads->D1 = Matrix::Zero(model.out_dim, model.hidden_dim);
    grads->D3 = Matrix::Zero(model.out_dim, model.in_dim);
    grads->bz = Vector::Zero(model.hidden_dim);
    grads->by = Vector::Zero(model.out_dim);
  }

  const Vector z0 = Vector::Zero(model.hidden_dim);
  double loss = 0.0;
  for (const auto& seq : batch) {
    const IcrnnPass pass = icrnn_forward(model, seq.frames, z0);
    Matrix R = pass.Y - seq.targets;
    for (Eigen::Index t = 0; t < L; ++t) R.col(t) *= seq.mask[t];
    loss += R.squaredNorm();
    if (grads) {
      IcrnnGrads g;
      icrnn_backward(model, seq.frames, z0, (2.0 / denom) * R, &g, nullptr);
      grads->U += g.U;
      grads->W += g.W;
      grads->D2 += g.D2;
      grads->V += g.V;
      grads->D1 += g.D1;
      grads->D3 += g.D3;
      grads->bz += g.bz;
      grads->by += g.by;
    }
  }
  return loss / denom;
}

void project_nonnegative(IcrnnModel& model) {
  model.U = model.U.cwiseMax(0.0);
  model.W = model.W.cwiseMax(0.0);
  model.D2 = model.D2.cwiseMax(0.0);
  model.V = model.V.cwiseMax(0.0);
  model.D1 = model.D1.cwiseMax(0.0);
  model.D3 = model.D3.cwiseMax(0.0);
}

Matrix assemble_frames(const Matrix& states, const Matrix& actions) {
  if (states.cols() != actions.cols())
    throw std::invalid_argument("assemble_frames: length mismatch");
  Matrix frames(states.rows() + 2 * actions.rows(), states.cols());
  frames << states, actions, -actions;
  return frames;
}

Matrix icrnn_grad_actions(const IcrnnModel& model, const Matrix& states,
                          const Matrix& actions) {
  const Matrix frames = assemble_frames(states, actions);
  if (frames.rows() != model.in_dim)
    throw std::invalid_argument("icrnn_grad_actions: frame dim mismatch");
  Matrix dX;
  icrnn_backward(model, frames, Vector::Zero(model.hidden_dim),
                 Matrix::Ones(model.out_dim, frames.cols()), nullptr, &dX);
  const Eigen::Index sd = states.rows();
  const Eigen::Index ud = actions.rows();
  return dX.middleRows(sd, ud) - dX.middleRows(sd + ud, ud);
}

IcrnnTrainResult train_icrnn(const std::vector<IcrnnSequence>& data, int n_w,
                             const IcrnnTrainConfig& config) {
  if (data.empty()) throw std::invalid_argument("train_icrnn: empty dataset");
  if (config.lr <= 0.0) throw std::invalid_argument("train_icrnn: lr must be > 0");

  RngStream rng(config.seed, 2);
  IcrnnTrainResult result;
  result.model = make_icrnn(static_cast<int>(data.front().frames.rows()),
                            config.hidden_dim,
                            static_cast<int>(data.front().targets.rows()),
                            n_w, rng);
  IcrnnModel& model = result.model;

  AdamState aU, aW, aD2, aV, aD1, aD3, abz, aby;
  const int n = static_cast<int>(data.size());
  const int batch = std::max(1, std::min(config.batch, n));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Cosine decay to zero, as in train_icnn.
    const double lr =
        config.lr * 0.5 *
        (1.0 + std::cos(std::numbers::pi * epoch / std::max(1, config.epochs)));
    const std::vector<int> order = rng.permutation(n);
    double epoch_loss = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += batch) {
      const int m = std::min(batch, n - start);
      std::vector<IcrnnSequence> mini(m);
      for (int j = 0; j < m; ++j) mini[j] = data[order[start + j]];
      IcrnnGrads g;
      epoch_loss += icrnn_loss_and_grads(model, mini, &g);
      ++batches;
      aU.update(model.U, g.U, lr);
      aW.update(model.W, g.W, lr);
      aD2.update(model.D2, g.D2, lr);
      aV.update(model.V, g.V, lr);
      aD1.update(model.D1, g.D1, lr);
      aD3.update(model.D3, g.D3, lr);
      Matrix bz = model.bz, gbz = g.bz;
      abz.update(bz, gbz, lr);
      model.bz = bz;
      Matrix by = model.by, gby = g.by;
      aby.update(by, gby, lr);
      model.by = by;
      project_nonnegative(model);
    }
    result.loss_history.push_back(epoch_loss / std::max(1, batches));
  }
  return result;
}

}  // namespace icx
