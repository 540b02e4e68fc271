#pragma once

#include "icx/icnn.hpp"
#include "icx/numeric.hpp"

#include <cstdint>

namespace icx {

/// Pointwise maximum of K affine pieces a_i . x + b_i. Row i of A holds a_i.
struct MaxAffine {
  Matrix A;  // K x d
  Vector b;  // K

  int piece_count() const { return static_cast<int>(A.rows()); }
  int input_dim() const { return static_cast<int>(A.cols()); }
  void validate() const;
};

double maxaffine_eval(const MaxAffine& m, const Vector& x);
/// Index of the attaining piece, lowest index on ties.
int maxaffine_argmax(const MaxAffine& m, const Vector& x);

/// Exact nonnegative-weight ReLU network computing the same function:
/// K-1 width-1 hidden layers plus a linear output layer, inputs expanded
/// to [x; -x]. forward(x) == maxaffine_eval(m, x) up to float associativity.
IcnnModel compile_to_icnn(const MaxAffine& m);

/// Inverse direction for the restricted form sum_i w_i relu(a_i . x + c_i)
/// plus output bias: a one-hidden-layer IcnnModel with zero passthrough.
/// Emits all 2^K activation-pattern pieces, mask-ascending (bit j set means
/// hidden unit j active); duplicates are kept. Throws for any other
/// architecture.
MaxAffine enumerate_pieces(const IcnnModel& model);

struct CplFitConfig {
  int iterations = 50;
  int restarts = 5;
  std::uint64_t seed = 0;
};

/// Alternating partition / least-squares fit of K affine pieces to
/// (columns of X, y). Best of `restarts` initializations by RMSE.
/// Partition ties break to the lower piece index.
MaxAffine fit_cpl(const Matrix& X, const Vector& y, int K,
                  const CplFitConfig& config);

double maxaffine_rmse(const MaxAffine& m, const Matrix& X, const Vector& y);

}  // namespace icx
