#pragma once

#include "icx/numeric.hpp"

#include <cmath>

namespace icx {

/// Adam state for one tensor. Defaults: beta1=0.9, beta2=0.999, eps=1e-8.
struct AdamState {
  Matrix m, v;
  long step = 0;

  void init_like(const Matrix& p) {
    m = Matrix::Zero(p.rows(), p.cols());
    v = Matrix::Zero(p.rows(), p.cols());
    step = 0;
  }

  void update(Matrix& param, const Matrix& grad, double lr,
              double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    if (m.size() == 0) init_like(param);
    ++step;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    param.array() -= lr * (m.array() / bc1) /
                     ((v.array() / bc2).sqrt() + eps);
  }
};

}  // namespace icx
