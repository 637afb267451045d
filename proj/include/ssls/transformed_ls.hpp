#pragma once

// Least squares on cross-fitted transformed variables with a plug-in
// sandwich variance. The groupwise estimator is the special case where the
// regressors are (A - e_hat) times group indicators.

#include <vector>

#include "ssls/core.hpp"

namespace ssls {

struct TransformedSample {
  Vector z_hat;               // transformed response, length N
  Matrix v_hat;               // transformed regressors, N x d
  std::vector<int> fold_of;   // fold that produced each row (may be empty)
};

struct LsEstimate {
  Vector beta_hat;
  Matrix sigma_hat;  // gram^-1 * meat * gram^-1, not divided by N
  Matrix gram;       // N^-1 sum v v^T
  Vector residuals;  // z_hat - v_hat * beta_hat
};

// Solves m x = b for symmetric positive definite m by Cholesky, retrying once
// with a 1e-12 * trace jitter before giving up with NotSPD.
Matrix linear_solve_spd(const Matrix& m, const Matrix& b);
Vector linear_solve_spd(const Matrix& m, const Vector& b);

LsEstimate solve_transformed_ls(const TransformedSample& t);

}  // namespace ssls
