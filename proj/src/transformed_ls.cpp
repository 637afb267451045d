#include "ssls/transformed_ls.hpp"

#include <cmath>

namespace ssls {

Matrix linear_solve_spd(const Matrix& m, const Matrix& b) {
  if (m.rows() != m.cols() || m.rows() != b.rows()) {
    throw Error(ErrorKind::LengthMismatch, "linear_solve_spd: dimension mismatch");
  }
  if (!m.allFinite() || !b.allFinite()) throw Error(ErrorKind::NonFinite, "linear_solve_spd: non-finite input");
  const double scale = m.cwiseAbs().maxCoeff();
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw Error(ErrorKind::NotSPD, "linear_solve_spd: matrix is not symmetric");
  }
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() == Eigen::Success) return llt.solve(b);
  Matrix jittered = m;
  jittered.diagonal().array() += 1e-12 * m.trace();
  llt.compute(jittered);
  if (llt.info() != Eigen::Success || !(m.trace() > 0.0)) {
    throw Error(ErrorKind::NotSPD, "linear_solve_spd: matrix is not positive definite");
  }
  return llt.solve(b);
}

Vector linear_solve_spd(const Matrix& m, const Vector& b) {
  return linear_solve_spd(m, Matrix(b)).col(0);
}

LsEstimate solve_transformed_ls(const TransformedSample& t) {
  const Index n = t.z_hat.size();
  const Index d = t.v_hat.cols();
  if (t.v_hat.rows() != n) throw Error(ErrorKind::LengthMismatch, "z_hat and v_hat lengths differ");
  if (!t.fold_of.empty() && static_cast<Index>(t.fold_of.size()) != n) {
    throw Error(ErrorKind::LengthMismatch, "fold_of length differs from sample size");
  }
  if (n < 1 || d < 1) throw Error(ErrorKind::TooFewSamples, "empty transformed sample");
  if (!t.z_hat.allFinite() || !t.v_hat.allFinite()) {
    throw Error(ErrorKind::NonFinite, "transformed sample has non-finite entries");
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  const Matrix vtv = t.v_hat.transpose() * t.v_hat;
  LsEstimate out;
  out.gram = vtv * inv_n;

  const double trace = out.gram.trace();
  const double min_eig = Eigen::SelfAdjointEigenSolver<Matrix>(out.gram, Eigen::EigenvaluesOnly)
                             .eigenvalues()
                             .minCoeff();
  if (!(trace > 0.0) || !(min_eig > 1e-10 * trace / static_cast<double>(d))) {
    throw Error(ErrorKind::SingularGram, "transformed regressors have a singular Gram matrix");
  }

  out.beta_hat = linear_solve_spd(vtv, Vector(t.v_hat.transpose() * t.z_hat));
  out.residuals = t.z_hat - t.v_hat * out.beta_hat;

  Matrix meat = Matrix::Zero(d, d);
  for (Index i = 0; i < n; ++i) {
    const double e2 = out.residuals(i) * out.residuals(i);
    if (e2 == 0.0) continue;
    meat.noalias() += e2 * t.v_hat.row(i).transpose() * t.v_hat.row(i);
  }
  meat *= inv_n;
  const Matrix gram_inv = linear_solve_spd(out.gram, Matrix(Matrix::Identity(d, d)));
  const Matrix sandwich = gram_inv * meat * gram_inv;
  out.sigma_hat = 0.5 * (sandwich + sandwich.transpose());
  return out;
}

}  // namespace ssls
