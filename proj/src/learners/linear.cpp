#include <cmath>

#include "ssls/learners.hpp"

namespace ssls {

namespace {

Matrix with_intercept(const Matrix& x) {
  Matrix design(x.rows(), x.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;
  return design;
}

double log1pexp(double eta) {
  return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

double logistic(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double log_likelihood(const Matrix& design, const Vector& a, const Vector& beta) {
  const Vector eta = design * beta;
  double ll = 0.0;
  for (Index i = 0; i < eta.size(); ++i) ll += a(i) * eta(i) - log1pexp(eta(i));
  return ll;
}

}  // namespace

double LinearModel::predict_row(const RowRef& row) const { return intercept_ + row.dot(coef_); }

Vector LinearModel::predict(const Matrix& x) const {
  return (x * coef_).array() + intercept_;
}

LinearModel fit_ols(const Matrix& x, const Vector& y) {
  if (x.rows() != y.size()) throw Error(ErrorKind::LengthMismatch, "ols: x and y lengths differ");
  const Matrix design = with_intercept(x);
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < design.cols()) {
    throw Error(ErrorKind::SingularDesign, "ols: design matrix is rank deficient");
  }
  const Vector beta = qr.solve(y);
  return LinearModel(beta(0), beta.tail(x.cols()));
}

LinearModel fit_ridge(const Matrix& x, const Vector& y, double lambda) {
  if (!(lambda >= 0.0)) throw Error(ErrorKind::InvalidArgument, "ridge: lambda must be >= 0");
  if (lambda == 0.0) return fit_ols(x, y);
  if (x.rows() != y.size()) throw Error(ErrorKind::LengthMismatch, "ridge: x and y lengths differ");
  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  const Matrix xc = x.rowwise() - x_mean;
  const Vector yc = y.array() - y_mean;
  Matrix lhs = xc.transpose() * xc;
  lhs.diagonal().array() += lambda;
  const Vector beta = lhs.llt().solve(xc.transpose() * yc);
  return LinearModel(y_mean - x_mean.dot(beta), beta);
}

double LogisticModel::predict_row(const RowRef& row) const {
  return logistic(beta_(0) + row.dot(beta_.tail(beta_.size() - 1)));
}

Vector LogisticModel::predict(const Matrix& x) const {
  const Vector eta = (x * beta_.tail(beta_.size() - 1)).array() + beta_(0);
  return eta.unaryExpr([](double e) { return logistic(e); });
}

LogisticModel fit_logistic(const Matrix& x, const Vector& a, const LogisticSpec& spec) {
  if (x.rows() != a.size()) throw Error(ErrorKind::LengthMismatch, "logistic: x and a lengths differ");
  if (spec.max_iter < 1 || !(spec.tol > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "logistic: max_iter >= 1 and tol > 0 required");
  }
  const Matrix design = with_intercept(x);
  const auto d = design.cols();
  const double n = static_cast<double>(x.rows());
  Vector beta = Vector::Zero(d);
  double ll = log_likelihood(design, a, beta);
  std::vector<double> path{ll};

  bool converged = false;
  int iter = 0;
  for (; iter < spec.max_iter; ++iter) {
    const Vector p = (design * beta).unaryExpr([](double e) { return logistic(e); });
    const Vector grad = design.transpose() * (a - p);
    if (grad.norm() / n <= spec.tol) {
      converged = true;
      break;
    }
    const Vector w = (p.array() * (1.0 - p.array())).matrix();
    Matrix hessian = design.transpose() * w.asDiagonal() * design;
    // Separation drives the weights to zero; a tiny ridge keeps the step finite.
    hessian.diagonal().array() += 1e-12 * (hessian.trace() / static_cast<double>(d) + 1.0);
    const Vector step = hessian.ldlt().solve(grad);

    double t = 1.0;
    Vector candidate = beta + step;
    double candidate_ll = log_likelihood(design, a, candidate);
    int halvings = 0;
    while (!(candidate_ll >= ll) && halvings < 60) {
      t *= 0.5;
      candidate = beta + t * step;
      candidate_ll = log_likelihood(design, a, candidate);
      ++halvings;
    }
    if (!(candidate_ll >= ll)) break;  // no ascent direction left
    const bool stalled = candidate_ll - ll <= 1e-15 * std::fabs(ll) && (t * step).norm() <= 1e-14;
    beta = candidate;
    ll = candidate_ll;
    path.push_back(ll);
    if (stalled) break;
  }
  return LogisticModel(std::move(beta), converged, iter, std::move(path));
}

}  // namespace ssls
