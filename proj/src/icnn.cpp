#include "icx/icnn.hpp"

#include "icx/adam.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace icx {

void IcnnModel::validate() const {
  const int k = layer_count();
  if (k < 1) throw std::invalid_argument("IcnnModel: no layers");
  if (input_dim < 1) throw std::invalid_argument("IcnnModel: input_dim < 1");
  if (static_cast<int>(D.size()) != k || static_cast<int>(b.size()) != k)
    throw std::invalid_argument("IcnnModel: W/D/b count mismatch");
  const int d2 = 2 * input_dim;
  if (W[0].cols() != d2) throw std::invalid_argument("IcnnModel: W[0] cols != 2d");
  for (int i = 0; i < k; ++i) {
    if (i > 0) {
      if (W[i].cols() != W[i - 1].rows())
        throw std::invalid_argument("IcnnModel: W chain dim mismatch");
      if (D[i].rows() != W[i].rows() || D[i].cols() != d2)
        throw std::invalid_argument("IcnnModel: D dim mismatch");
    } else if (D[0].size() != 0) {
      throw std::invalid_argument("IcnnModel: D[0] must be empty");
    }
    if (b[i].size() != W[i].rows())
      throw std::invalid_argument("IcnnModel: bias dim mismatch");
  }
}

double IcnnModel::min_constrained_weight() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& w : W)
    if (w.size() > 0) m = std::min(m, w.minCoeff());
  for (const auto& d : D)
    if (d.size() > 0) m = std::min(m, d.minCoeff());
  return m;
}

IcnnModel make_icnn(int input_dim, const std::vector<int>& hidden_widths,
                    int output_dim, RngStream& rng) {
  if (input_dim < 1 || output_dim < 1)
    throw std::invalid_argument("make_icnn: dims must be >= 1");
  IcnnModel model;
  model.input_dim = input_dim;
  std::vector<int> widths = hidden_widths;
  widths.push_back(output_dim);
  const int d2 = 2 * input_dim;
  int prev = d2;
  for (size_t i = 0; i < widths.size(); ++i) {
    const int n = widths[i];
    if (n < 1) throw std::invalid_argument("make_icnn: width must be >= 1");
    model.W.push_back(
        rng.gaussian_matrix(n, prev, 0.0, 1.0 / std::sqrt(prev)).cwiseAbs());
    if (i == 0) {
      model.D.emplace_back();
    } else {
      model.D.push_back(
          rng.gaussian_matrix(n, d2, 0.0, 1.0 / std::sqrt(d2)).cwiseAbs());
    }
    model.b.push_back(Vector::Zero(n));
    prev = n;
  }
  model.validate();
  return model;
}

Vector expand_input(const Vector& u) {
  Vector uhat(2 * u.size());
  uhat << u, -u;
  return uhat;
}

Vector icnn_forward_raw(const IcnnModel& model, const Vector& u_hat) {
  if (u_hat.size() != 2 * model.input_dim)
    throw std::invalid_argument("icnn_forward_raw: expected 2d input");
  const int k = model.layer_count();
  Vector z = model.W[0] * u_hat + model.b[0];
  if (k > 1) z = relu(z);
  for (int i = 1; i < k; ++i) {
    z = model.W[i] * z + model.D[i] * u_hat + model.b[i];
    if (i < k - 1) z = relu(z);
  }
  return z;
}

Vector icnn_forward(const IcnnModel& model, const Vector& u) {
  if (u.size() != model.input_dim)
    throw std::invalid_argument("icnn_forward: input dim mismatch");
  return icnn_forward_raw(model, expand_input(u));
}

Vector icnn_grad_input(const IcnnModel& model, const Vector& u,
                       const Vector& out_weight) {
  if (u.size() != model.input_dim)
    throw std::invalid_argument("icnn_grad_input: input dim mismatch");
  if (out_weight.size() != model.output_dim())
    throw std::invalid_argument("icnn_grad_input: output weight dim mismatch");
  const int k = model.layer_count();
  const Vector uhat = expand_input(u);

  std::vector<Vector> pre(k);
  Vector z = model.W[0] * uhat + model.b[0];
  pre[0] = z;
  if (k > 1) z = relu(z);
  for (int i = 1; i < k; ++i) {
    z = model.W[i] * z + model.D[i] * uhat + model.b[i];
    pre[i] = z;
    if (i < k - 1) z = relu(z);
  }

  Vector g_hat = Vector::Zero(2 * model.input_dim);
  Vector delta = out_weight;  // d cost / d pre[k-1], output layer is identity
  for (int i = k - 1; i >= 1; --i) {
    g_hat += model.D[i].transpose() * delta;
    Vector dz = model.W[i].transpose() * delta;
    delta = dz.cwiseProduct(relu_mask(pre[i - 1]));
  }
  g_hat += model.W[0].transpose() * delta;
  return g_hat.head(model.input_dim) - g_hat.tail(model.input_dim);
}

Vector icnn_grad_input(const IcnnModel& model, const Vector& u) {
  return icnn_grad_input(model, u, Vector::Ones(model.output_dim()));
}

double icnn_loss_and_grads(const IcnnModel& model, const Matrix& X,
                           const Matrix& Y, IcnnGrads* grads) {
  const Eigen::Index n = X.cols();
  if (n == 0) throw std::invalid_argument("icnn_loss_and_grads: empty batch");
  if (X.rows() != model.input_dim)
    throw std::invalid_argument("icnn_loss_and_grads: input dim mismatch");
  if (Y.rows() != model.output_dim() || Y.cols() != n)
    throw std::invalid_argument("icnn_loss_and_grads: target shape mismatch");

  const int k = model.layer_count();
  Matrix Uhat(2 * model.input_dim, n);
  Uhat << X, -X;

  std::vector<Matrix> pre(k), act(k);
  Matrix Z = (model.W[0] * Uhat).colwise() + model.b[0];
  pre[0] = Z;
  if (k > 1) Z = Z.cwiseMax(0.0);
  act[0] = Z;
  for (int i = 1; i < k; ++i) {
    Z = ((model.W[i] * Z + model.D[i] * Uhat).colwise() + model.b[i]).eval();
    pre[i] = Z;
    if (i < k - 1) Z = Z.cwiseMax(0.0);
    act[i] = Z;
  }

  const Matrix R = act[k - 1] - Y;
  const double denom = static_cast<double>(n) * model.output_dim();
  const double loss = R.squaredNorm() / denom;
  if (!grads) return loss;

  grads->W.assign(k, Matrix());
  grads->D.assign(k, Matrix());
  grads->b.assign(k, Vector());

  Matrix dPre = (2.0 / denom) * R;
  for (int i = k - 1; i >= 0; --i) {
    const Matrix& in = (i == 0) ? Uhat : act[i - 1];
    grads->W[i] = dPre * in.transpose();
    grads->b[i] = dPre.rowwise().sum();
    if (i > 0) {
      grads->D[i] = dPre * Uhat.transpose();
      Matrix dZ = model.W[i].transpose() * dPre;
      dPre = dZ.cwiseProduct((pre[i - 1].array() > 0.0).cast<double>().matrix());
    } else {
      grads->D[i] = Matrix();
    }
  }
  return loss;
}

void project_nonnegative(IcnnModel& model) {
  for (auto& w : model.W) w = w.cwiseMax(0.0);
  for (auto& d : model.D)
    if (d.size() > 0) d = d.cwiseMax(0.0);
}

IcnnTrainResult train_icnn(const Matrix& X, const Matrix& Y,
                           const IcnnTrainConfig& config) {
  const int n = static_cast<int>(X.cols());
  if (n == 0) throw std::invalid_argument("train_icnn: empty dataset");
  if (config.lr <= 0.0) throw std::invalid_argument("train_icnn: lr must be > 0");
  if (config.epochs < 0) throw std::invalid_argument("train_icnn: negative epochs");

  RngStream rng(config.seed, 1);
  IcnnTrainResult result;
  result.model = make_icnn(static_cast<int>(X.rows()), config.hidden_widths,
                           static_cast<int>(Y.rows()), rng);
  IcnnModel& model = result.model;

  const int k = model.layer_count();
  std::vector<AdamState> aW(k), aD(k), ab(k);
  const int batch = std::max(1, std::min(config.batch, n));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Cosine decay to zero: removes Adam's step-size noise floor near optima.
    const double lr =
        config.lr * 0.5 *
        (1.0 + std::cos(std::numbers::pi * epoch / std::max(1, config.epochs)));
    const std::vector<int> order = rng.permutation(n);
    double epoch_loss = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += batch) {
      const int m = std::min(batch, n - start);
      Matrix Xb(X.rows(), m), Yb(Y.rows(), m);
      for (int j = 0; j < m; ++j) {
        Xb.col(j) = X.col(order[start + j]);
        Yb.col(j) = Y.col(order[start + j]);
      }
      IcnnGrads g;
      epoch_loss += icnn_loss_and_grads(model, Xb, Yb, &g);
      ++batches;
      for (int i = 0; i < k; ++i) {
        aW[i].update(model.W[i], g.W[i], lr);
        if (i > 0) aD[i].update(model.D[i], g.D[i], lr);
        Matrix bi = model.b[i];
        Matrix gb = g.b[i];
        ab[i].update(bi, gb, lr);
        model.b[i] = bi;
      }
      project_nonnegative(model);
    }
    result.loss_history.push_back(epoch_loss / std::max(1, batches));
  }
  return result;
}

IcnnTrainResult classify_circles(const Matrix& X, const Vector& labels,
                                 const IcnnTrainConfig& config) {
  if (labels.size() != X.cols())
    throw std::invalid_argument("classify_circles: label count mismatch");
  const double lo = labels.minCoeff();
  const double hi = labels.maxCoeff();
  if (lo == hi)
    throw std::invalid_argument("classify_circles: degenerate single-class data");
  Matrix Y = labels.transpose();
  return train_icnn(X, Y, config);
}

}  // namespace icx
