#pragma once

namespace ssls {

/// Standard normal CDF.
double normal_cdf(double x);

/// Standard normal density.
double normal_pdf(double x);

/// Inverse of normal_cdf on (0, 1). Throws DomainError outside.
double normal_quantile(double p);

/// Chi-square CDF with k degrees of freedom (regularized lower incomplete
/// gamma P(k/2, x/2)). Throws DomainError for x < 0 or k < 1.
double chisq_cdf(double x, int k);

/// Inverse of chisq_cdf in x for p in [0, 1).
double chisq_quantile(double p, int k);

/// Regularized lower incomplete gamma P(a, x).
double regularized_gamma_p(double a, double x);

}  // namespace ssls
