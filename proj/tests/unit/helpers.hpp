#pragma once

#include <cmath>
#include <functional>
#include <optional>

#include <doctest.h>

#include "ssls/core.hpp"
#include "ssls/error.hpp"
#include "ssls/rng.hpp"

namespace testing {

// Kind of the ssls::Error thrown by f, or nullopt when nothing is thrown.
inline std::optional<ssls::ErrorKind> error_kind(const std::function<void()>& f) {
  try {
    f();
  } catch (const ssls::Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

// Marsaglia's series, in long double: Phi(x) = 1/2 + phi(x) sum x^(2k+1) / (2k+1)!!.
inline double normal_cdf_series(double x) {
  const long double xl = x;
  long double term = xl;
  long double sum = xl;
  for (int k = 1; k < 400; ++k) {
    term *= xl * xl / (2.0L * k + 1.0L);
    sum += term;
    if (std::fabs(static_cast<double>(term)) < 1e-30) break;
  }
  const long double pdf = std::exp(-xl * xl / 2.0L) / std::sqrt(2.0L * 3.14159265358979323846264338327950288L);
  return static_cast<double>(0.5L + pdf * sum);
}

inline double normal_cdf_oracle(double x) {
  if (x < 0) return 1.0 - normal_cdf_series(-x);
  return normal_cdf_series(x);
}

inline double bisect(const std::function<double(double)>& f, double target, double lo, double hi) {
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline double normal_quantile_oracle(double p) { return bisect(normal_cdf_oracle, p, -10.0, 10.0); }

inline ssls::Vector random_vector(ssls::Rng& rng, ssls::Index n) {
  ssls::Vector v(n);
  for (ssls::Index i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

inline ssls::Matrix random_matrix(ssls::Rng& rng, ssls::Index r, ssls::Index c) {
  ssls::Matrix m(r, c);
  for (ssls::Index i = 0; i < r; ++i)
    for (ssls::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

}  // namespace testing
