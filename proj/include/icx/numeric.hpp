#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

namespace icx {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Throws std::invalid_argument if any entry is NaN or Inf.
void ensure_finite(const Vector& x, const char* what);
void ensure_finite(const Matrix& x, const char* what);

/// Elementwise max(x, 0). Subgradient at 0 is taken as 0 throughout.
Vector relu(const Vector& x);

/// Derivative mask of relu: 1 where x > 0, else 0.
Vector relu_mask(const Vector& x);

/// Central-difference gradient of a scalar function at x with step h.
Vector finite_difference_gradient(const std::function<double(const Vector&)>& f,
                                  const Vector& x, double h = 1e-5);

/// Scale-relative error |a-b| / max(1, |a|, |b|), elementwise max over vectors.
double rel_error(double a, double b);
double rel_error(const Vector& a, const Vector& b);

// Deterministic counter-free stream generator: a splitmix64-seeded
// xoshiro256++ keyed on (seed, stream). Identical (seed, stream) gives an
// identical sequence on every platform; distinct streams are independent.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double next_double();
  double uniform(double a, double b);
  /// Box-Muller; the spare draw is cached.
  double gaussian(double mu = 0.0, double sigma = 1.0);

  Vector uniform_vector(int n, double a, double b);
  Vector gaussian_vector(int n, double mu = 0.0, double sigma = 1.0);
  Matrix gaussian_matrix(int rows, int cols, double mu = 0.0, double sigma = 1.0);

  /// Integer in [0, n).
  std::uint64_t next_below(std::uint64_t n);
  /// Fisher-Yates permutation of 0..n-1.
  std::vector<int> permutation(int n);

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace icx
