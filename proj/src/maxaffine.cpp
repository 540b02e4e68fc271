#include "icx/maxaffine.hpp"

#include <cmath>
#include <stdexcept>

namespace icx {

void MaxAffine::validate() const {
  if (piece_count() < 1) throw std::invalid_argument("MaxAffine: needs K >= 1");
  if (b.size() != A.rows()) throw std::invalid_argument("MaxAffine: A/b mismatch");
  if (!A.allFinite() || !b.allFinite())
    throw std::invalid_argument("MaxAffine: non-finite coefficients");
}

double maxaffine_eval(const MaxAffine& m, const Vector& x) {
  if (x.size() != m.input_dim())
    throw std::invalid_argument("maxaffine_eval: dim mismatch");
  return (m.A * x + m.b).maxCoeff();
}

int maxaffine_argmax(const MaxAffine& m, const Vector& x) {
  if (x.size() != m.input_dim())
    throw std::invalid_argument("maxaffine_argmax: dim mismatch");
  const Vector vals = m.A * x + m.b;
  int best = 0;
  for (int i = 1; i < vals.size(); ++i)
    if (vals[i] > vals[best]) best = i;
  return best;
}

namespace {

// Nonnegative 2d row for h . x written over [x; -x].
Matrix expand_row(const Vector& h) {
  const int d = static_cast<int>(h.size());
  Matrix row = Matrix::Zero(1, 2 * d);
  for (int j = 0; j < d; ++j) {
    if (h[j] >= 0.0)
      row(0, j) = h[j];
    else
      row(0, d + j) = -h[j];
  }
  return row;
}

}  // namespace

IcnnModel compile_to_icnn(const MaxAffine& m) {
  m.validate();
  const int K = m.piece_count();
  const int d = m.input_dim();

  IcnnModel net;
  net.input_dim = d;
  if (K == 1) {
    net.W.push_back(expand_row(m.A.row(0)));
    net.D.emplace_back();
    net.b.push_back(Vector::Constant(1, m.b[0]));
    net.validate();
    return net;
  }

  // Nested-max layers: z_1 = relu((a_1-a_2).x + b_1-b_2),
  // z_i = relu(z_{i-1} + (a_i-a_{i+1}).x + b_i-b_{i+1}), out = z_{K-1} + a_K.x + b_K.
  net.W.push_back(expand_row(m.A.row(0) - m.A.row(1)));
  net.D.emplace_back();
  net.b.push_back(Vector::Constant(1, m.b[0] - m.b[1]));
  for (int i = 1; i + 1 < K; ++i) {
    net.W.push_back(Matrix::Ones(1, 1));
    net.D.push_back(expand_row(m.A.row(i) - m.A.row(i + 1)));
    net.b.push_back(Vector::Constant(1, m.b[i] - m.b[i + 1]));
  }
  net.W.push_back(Matrix::Ones(1, 1));
  net.D.push_back(expand_row(m.A.row(K - 1)));
  net.b.push_back(Vector::Constant(1, m.b[K - 1]));
  net.validate();
  return net;
}

MaxAffine enumerate_pieces(const IcnnModel& model) {
  model.validate();
  if (model.layer_count() != 2)
    throw std::invalid_argument(
        "enumerate_pieces: requires exactly one hidden layer over a linear output");
  if (model.output_dim() != 1)
    throw std::invalid_argument("enumerate_pieces: requires scalar output");
  if (model.D[1].size() > 0 && model.D[1].cwiseAbs().maxCoeff() != 0.0)
    throw std::invalid_argument(
        "enumerate_pieces: passthrough weights must be zero for this form");
  const int K = static_cast<int>(model.W[0].rows());
  if (K > 30)
    throw std::invalid_argument("enumerate_pieces: 2^K piece count too large");

  const int d = model.input_dim;
  // Effective hidden-unit weights over the un-expanded input.
  const Matrix A0 = model.W[0].leftCols(d) - model.W[0].rightCols(d);
  const Vector c0 = model.b[0];
  const Vector w1 = model.W[1].row(0);
  const double out_bias = model.b[1][0];

  const long count = 1L << K;
  MaxAffine out;
  out.A = Matrix::Zero(count, d);
  out.b = Vector::Constant(count, out_bias);
  for (long mask = 0; mask < count; ++mask) {
    for (int j = 0; j < K; ++j) {
      if (mask & (1L << j)) {
        out.A.row(mask) += w1[j] * A0.row(j);
        out.b[mask] += w1[j] * c0[j];
      }
    }
  }
  out.validate();
  return out;
}

double maxaffine_rmse(const MaxAffine& m, const Matrix& X, const Vector& y) {
  double sq = 0.0;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double e = maxaffine_eval(m, X.col(j)) - y[j];
    sq += e * e;
  }
  return std::sqrt(sq / static_cast<double>(X.cols()));
}

namespace {

// Least-squares affine fit over the selected columns; tiny ridge keeps
// degenerate cells solvable.
void fit_cell(const Matrix& X, const Vector& y, const std::vector<int>& idx,
              Vector& a, double& b) {
  const int d = static_cast<int>(X.rows());
  Matrix G = Matrix::Zero(d + 1, d + 1);
  Vector r = Vector::Zero(d + 1);
  for (int j : idx) {
    Vector phi(d + 1);
    phi << X.col(j), 1.0;
    G += phi * phi.transpose();
    r += y[j] * phi;
  }
  G.diagonal().array() += 1e-10;
  const Vector sol = G.ldlt().solve(r);
  a = sol.head(d);
  b = sol[d];
}

}  // namespace

MaxAffine fit_cpl(const Matrix& X, const Vector& y, int K,
                  const CplFitConfig& config) {
  const int n = static_cast<int>(X.cols());
  if (K < 1) throw std::invalid_argument("fit_cpl: K must be >= 1");
  if (K > n) throw std::invalid_argument("fit_cpl: K exceeds sample count");
  if (y.size() != n) throw std::invalid_argument("fit_cpl: X/y mismatch");
  const int d = static_cast<int>(X.rows());

  RngStream rng(config.seed, 3);
  MaxAffine best;
  double best_rmse = std::numeric_limits<double>::infinity();

  for (int restart = 0; restart < std::max(1, config.restarts); ++restart) {
    std::vector<int> assign(n);
    // Voronoi initial partition around K random sample points.
    const std::vector<int> perm = rng.permutation(n);
    for (int j = 0; j < n; ++j) {
      int nearest = 0;
      double dist = (X.col(j) - X.col(perm[0])).squaredNorm();
      for (int i = 1; i < K; ++i) {
        const double di = (X.col(j) - X.col(perm[i])).squaredNorm();
        if (di < dist) {
          dist = di;
          nearest = i;
        }
      }
      assign[j] = nearest;
    }

    MaxAffine m;
    m.A = Matrix::Zero(K, d);
    m.b = Vector::Zero(K);
    for (int it = 0; it < config.iterations; ++it) {
      std::vector<std::vector<int>> cells(K);
      for (int j = 0; j < n; ++j) cells[assign[j]].push_back(j);
      for (int i = 0; i < K; ++i) {
        if (!cells[i].empty()) {
          Vector a(d);
          fit_cell(X, y, cells[i], a, m.b[i]);
          m.A.row(i) = a.transpose();
        }
      }
      bool changed = false;
      for (int j = 0; j < n; ++j) {
        const int arg = maxaffine_argmax(m, X.col(j));
        if (arg != assign[j]) {
          assign[j] = arg;
          changed = true;
        }
      }
      if (!changed) break;
    }
    const double rmse = maxaffine_rmse(m, X, y);
    if (rmse < best_rmse) {
      best_rmse = rmse;
      best = m;
    }
  }
  return best;
}

}  // namespace icx
