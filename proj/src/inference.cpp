#include "ssls/inference.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "ssls/distributions.hpp"

namespace ssls {

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::DomainError, "alpha must lie in (0,1)");
}

double two_sided_p(double z) { return std::erfc(std::fabs(z) / std::numbers::sqrt2); }

}  // namespace

double maxt_critical(double alpha, Index family_size) {
  check_alpha(alpha);
  if (family_size < 1) throw Error(ErrorKind::DomainError, "maxT family size must be >= 1");
  // 1 - (1 - alpha)^(1/G), computed without cancellation.
  const double per_test = -std::expm1(std::log1p(-alpha) / static_cast<double>(family_size));
  return normal_quantile(1.0 - per_test / 2.0);
}

InferenceReport pointwise_tests(const GroupEffects& ge, const Vector& tau0, double alpha) {
  check_alpha(alpha);
  const int n_groups = ge.n_groups();
  if (tau0.size() != n_groups) throw Error(ErrorKind::LengthMismatch, "tau0 length differs from G");
  InferenceReport report;
  report.alpha = alpha;
  report.z_crit = normal_quantile(1.0 - alpha / 2.0);
  report.q_crit = std::numeric_limits<double>::quiet_NaN();
  report.groups.resize(static_cast<std::size_t>(n_groups));
  for (int g = 0; g < n_groups; ++g) {
    auto& t = report.groups[static_cast<std::size_t>(g)];
    const double se = ge.se(g);
    const double diff = ge.tau_hat(g) - tau0(g);
    t.t_stat = diff == 0.0 ? 0.0 : diff / se;
    t.p_value = two_sided_p(t.t_stat);
    t.ci_lo = ge.tau_hat(g) - report.z_crit * se;
    t.ci_hi = ge.tau_hat(g) + report.z_crit * se;
    t.reject_pointwise = std::fabs(t.t_stat) > report.z_crit;
  }
  return report;
}

void simultaneous_cis(const GroupEffects& ge, InferenceReport& report) {
  report.q_crit = maxt_critical(report.alpha, ge.n_groups());
  for (int g = 0; g < ge.n_groups(); ++g) {
    auto& t = report.groups[static_cast<std::size_t>(g)];
    const double se = ge.se(g);
    t.ci_simul_lo = ge.tau_hat(g) - report.q_crit * se;
    t.ci_simul_hi = ge.tau_hat(g) + report.q_crit * se;
    t.reject_simul = std::fabs(t.t_stat) > report.q_crit;
  }
}

InferenceReport infer(const GroupEffects& ge, const Vector& tau0, double alpha) {
  InferenceReport report = pointwise_tests(ge, tau0, alpha);
  simultaneous_cis(ge, report);
  return report;
}

PairwiseResult pairwise_test(const GroupEffects& ge, int g, int g2, double alpha,
                             Index family_size) {
  check_alpha(alpha);
  const int n_groups = ge.n_groups();
  if (g == g2 || g < 0 || g2 < 0 || g >= n_groups || g2 >= n_groups) {
    throw Error(ErrorKind::InvalidArgument, "pairwise test needs two distinct valid groups");
  }
  PairwiseResult r;
  r.g = g;
  r.g2 = g2;
  r.family_size = family_size > 0 ? family_size
                                  : static_cast<Index>(n_groups) * (n_groups - 1) / 2;
  const double n = static_cast<double>(ge.n_effective);
  r.diff = ge.tau_hat(g) - ge.tau_hat(g2);
  r.se = std::sqrt(ge.sigma_gg_hat(g) / n + ge.sigma_gg_hat(g2) / n);
  r.z = r.diff == 0.0 ? 0.0 : r.diff / r.se;
  r.p_value = two_sided_p(r.z);
  r.crit = normal_quantile(1.0 - alpha / 2.0);
  r.crit_simul = maxt_critical(alpha, r.family_size);
  r.reject = std::fabs(r.z) > r.crit;
  r.reject_simul = std::fabs(r.z) > r.crit_simul;
  return r;
}

std::vector<PairwiseResult> all_pairwise(const GroupEffects& ge, double alpha) {
  std::vector<PairwiseResult> out;
  for (int g = 0; g < ge.n_groups(); ++g) {
    for (int h = g + 1; h < ge.n_groups(); ++h) out.push_back(pairwise_test(ge, g, h, alpha));
  }
  return out;
}

GlhResult glh_test(const Vector& tau_hat, const Matrix& sigma, double n, const Contrast& c,
                   double alpha) {
  check_alpha(alpha);
  const Index n_groups = tau_hat.size();
  if (c.k.rows() < 1 || c.k.cols() != n_groups || c.m0.size() != c.k.rows() ||
      sigma.rows() != n_groups || sigma.cols() != n_groups) {
    throw Error(ErrorKind::LengthMismatch, "contrast dimensions do not match the estimates");
  }
  for (Index l = 0; l < c.k.rows(); ++l) {
    if (c.k.row(l).cwiseAbs().maxCoeff() == 0.0) {
      throw Error(ErrorKind::InvalidArgument, "contrast row " + std::to_string(l) + " is zero");
    }
  }
  if (!(n > 0.0)) throw Error(ErrorKind::DomainError, "sample size must be positive");

  const Matrix ksk = c.k * sigma * c.k.transpose();
  const Vector d = ksk.diagonal();
  if (!(d.array() > 0.0).all()) {
    throw Error(ErrorKind::ZeroVarianceContrast, "a contrast row has zero estimated variance");
  }
  const Vector d_inv_sqrt = d.cwiseSqrt().cwiseInverse();
  const Vector q = std::sqrt(n) * d_inv_sqrt.cwiseProduct(c.k * tau_hat - c.m0);
  const Matrix r = d_inv_sqrt.asDiagonal() * ksk * d_inv_sqrt.asDiagonal();

  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (r + r.transpose()));
  const Vector& lambda = eig.eigenvalues();
  const double cutoff = 1e-10 * lambda.maxCoeff();
  GlhResult out;
  double stat = 0.0;
  const Vector proj = eig.eigenvectors().transpose() * q;
  for (Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) > cutoff) {
      stat += proj(i) * proj(i) / lambda(i);
      ++out.df;
    }
  }
  out.statistic = stat;
  out.p_value = 1.0 - chisq_cdf(stat, out.df);
  out.critical = chisq_quantile(1.0 - alpha, out.df);
  out.reject = stat > out.critical;
  return out;
}

GlhResult glh_test(const GroupEffects& ge, const Contrast& c, double alpha) {
  return glh_test(ge.tau_hat, Matrix(ge.sigma_gg_hat.asDiagonal()),
                  static_cast<double>(ge.n_effective), c, alpha);
}

Matrix pairwise_difference_matrix(int n_groups) {
  const Index rows = static_cast<Index>(n_groups) * (n_groups - 1) / 2;
  Matrix k = Matrix::Zero(rows, n_groups);
  Index r = 0;
  for (int i = 0; i < n_groups; ++i) {
    for (int j = i + 1; j < n_groups; ++j, ++r) {
      k(r, i) = 1.0;
      k(r, j) = -1.0;
    }
  }
  return k;
}

Index power_min_n(double z_tilde, double alpha, double power) {
  check_alpha(alpha);
  if (!(z_tilde > 0.0) || !std::isfinite(z_tilde)) {
    throw Error(ErrorKind::DomainError, "z_tilde must be positive");
  }
  if (!(power > 0.0 && power < 1.0)) throw Error(ErrorKind::DomainError, "power must lie in (0,1)");
  const double num = normal_quantile(power) + normal_quantile(1.0 - alpha / 2.0);
  return static_cast<Index>(std::ceil(num * num / (z_tilde * z_tilde)));
}

}  // namespace ssls
