#pragma once

// Residual diagnostics for the grouping function: per-arm residuals against
// one covariate with a Gaussian-kernel Nadaraya-Watson trend. Under a
// correct grouping the trend stays near zero.

#include <array>
#include <vector>

#include "ssls/core.hpp"

namespace ssls {

struct ResidualSeries {
  int arm = 0;
  Index covariate = 0;
  double bandwidth = 0.05;
  Vector x;
  Vector residuals;
  std::vector<int> labels;
  std::vector<Index> rows;
  Vector grid;         // ascending
  Vector smooth;       // NaN where no observation lies within 8 bandwidths
  Vector local_n;      // Kish effective sample size of the kernel weights
  double pooled_sd = 0.0;
};

struct FlaggedInterval {
  double lo = 0.0;
  double hi = 0.0;
  int first = 0;  // grid indices, inclusive
  int last = 0;
};

// Normalized Gaussian kernel weights of every point at `at`.
Vector kernel_weights(const Vector& x, double at, double h);

// Nadaraya-Watson fit on `grid`; `local_n` (optional) receives the Kish
// effective sample size at each grid point.
Vector nadaraya_watson(const Vector& x, const Vector& y, const Vector& grid, double h,
                       Vector* local_n = nullptr);

// Index 0: control arm, index 1: treated arm.
std::array<ResidualSeries, 2> residual_series(const GroupEffects& ge, const Dataset& d,
                                              Index covariate, double h, int grid_size = 200);

// Maximal runs of grid points where |smooth| > multiplier * pooled_sd / sqrt(local_n).
std::vector<FlaggedInterval> flag_regions(const ResidualSeries& rs, double multiplier = 2.0);

double flagged_fraction(const ResidualSeries& rs, const std::vector<FlaggedInterval>& flags);

}  // namespace ssls
