#include "ssls/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ssls {

namespace {

constexpr double kWindow = 8.0;  // bandwidths; weights beyond are below 1.3e-14

}  // namespace

Vector kernel_weights(const Vector& x, double at, double h) {
  if (!(h > 0.0)) throw Error(ErrorKind::DomainError, "bandwidth must be positive");
  Vector w(x.size());
  // Shift by the nearest point so at least one weight is exactly 1.
  double nearest = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < x.size(); ++i) nearest = std::min(nearest, std::fabs(x(i) - at) / h);
  for (Index i = 0; i < x.size(); ++i) {
    const double u = std::fabs(x(i) - at) / h;
    w(i) = std::exp(-0.5 * (u * u - nearest * nearest));
  }
  const double total = w.sum();
  return total > 0.0 ? Vector(w / total) : w;
}

Vector nadaraya_watson(const Vector& x, const Vector& y, const Vector& grid, double h,
                       Vector* local_n) {
  if (!(h > 0.0)) throw Error(ErrorKind::DomainError, "bandwidth must be positive");
  if (x.size() != y.size()) throw Error(ErrorKind::LengthMismatch, "smoother x and y differ in length");
  std::vector<Index> order(static_cast<std::size_t>(x.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) { return x(i) < x(j); });
  std::vector<double> xs(order.size());
  std::vector<double> ys(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    xs[k] = x(order[k]);
    ys[k] = y(order[k]);
  }

  Vector out(grid.size());
  if (local_n != nullptr) local_n->resize(grid.size());
  for (Index j = 0; j < grid.size(); ++j) {
    const double g = grid(j);
    const auto lo = std::lower_bound(xs.begin(), xs.end(), g - kWindow * h);
    const auto hi = std::upper_bound(xs.begin(), xs.end(), g + kWindow * h);
    if (lo == hi) {
      out(j) = std::numeric_limits<double>::quiet_NaN();
      if (local_n != nullptr) (*local_n)(j) = 0.0;
      continue;
    }
    double nearest = std::numeric_limits<double>::infinity();
    for (auto it = lo; it != hi; ++it) nearest = std::min(nearest, std::fabs(*it - g) / h);
    double sw = 0.0;
    double sw2 = 0.0;
    double swy = 0.0;
    for (auto it = lo; it != hi; ++it) {
      const double u = (*it - g) / h;
      const double w = std::exp(-0.5 * (u * u - nearest * nearest));
      sw += w;
      sw2 += w * w;
      swy += w * ys[static_cast<std::size_t>(it - xs.begin())];
    }
    out(j) = swy / sw;
    if (local_n != nullptr) (*local_n)(j) = sw * sw / sw2;
  }
  return out;
}

std::array<ResidualSeries, 2> residual_series(const GroupEffects& ge, const Dataset& d,
                                              Index covariate, double h, int grid_size) {
  if (!(h > 0.0)) throw Error(ErrorKind::DomainError, "bandwidth must be positive");
  if (covariate < 0 || covariate >= d.n_covariates()) {
    throw Error(ErrorKind::InvalidArgument, "covariate index out of range", -1, covariate);
  }
  if (grid_size < 2) throw Error(ErrorKind::InvalidArgument, "grid needs at least 2 points");
  if (static_cast<Index>(ge.rows.size()) != ge.residuals.size()) {
    throw Error(ErrorKind::LengthMismatch, "residual rows and values differ in length");
  }

  double x_min = std::numeric_limits<double>::infinity();
  double x_max = -std::numeric_limits<double>::infinity();
  for (Index r : ge.rows) {
    x_min = std::min(x_min, d.x(r, covariate));
    x_max = std::max(x_max, d.x(r, covariate));
  }
  const Vector grid = Vector::LinSpaced(grid_size, x_min, x_max);

  std::array<ResidualSeries, 2> out;
  for (int arm = 0; arm < 2; ++arm) {
    auto& rs = out[static_cast<std::size_t>(arm)];
    rs.arm = arm;
    rs.covariate = covariate;
    rs.bandwidth = h;
    std::vector<double> xs;
    std::vector<double> es;
    for (std::size_t k = 0; k < ge.rows.size(); ++k) {
      const Index r = ge.rows[k];
      if (static_cast<int>(d.a(r)) != arm) continue;
      xs.push_back(d.x(r, covariate));
      es.push_back(ge.residuals(static_cast<Index>(k)));
      rs.labels.push_back(ge.labels.empty() ? 1 : ge.labels[k]);
      rs.rows.push_back(r);
    }
    if (xs.empty()) {
      throw Error(ErrorKind::EmptyArm, arm == 0 ? "no control observations" : "no treated observations");
    }
    rs.x = Eigen::Map<const Vector>(xs.data(), static_cast<Index>(xs.size()));
    rs.residuals = Eigen::Map<const Vector>(es.data(), static_cast<Index>(es.size()));
    rs.grid = grid;
    rs.smooth = nadaraya_watson(rs.x, rs.residuals, grid, h, &rs.local_n);
    const double mean = rs.residuals.mean();
    const double ss = (rs.residuals.array() - mean).square().sum();
    rs.pooled_sd = rs.residuals.size() > 1 ? std::sqrt(ss / static_cast<double>(rs.residuals.size() - 1)) : 0.0;
  }
  return out;
}

std::vector<FlaggedInterval> flag_regions(const ResidualSeries& rs, double multiplier) {
  std::vector<FlaggedInterval> out;
  const Index m = rs.grid.size();
  auto flagged = [&](Index j) {
    const double n = rs.local_n(j);
    if (!(n > 0.0) || std::isnan(rs.smooth(j))) return false;
    return std::fabs(rs.smooth(j)) > multiplier * rs.pooled_sd / std::sqrt(n);
  };
  Index j = 0;
  while (j < m) {
    if (!flagged(j)) {
      ++j;
      continue;
    }
    Index k = j;
    while (k + 1 < m && flagged(k + 1)) ++k;
    out.push_back({rs.grid(j), rs.grid(k), static_cast<int>(j), static_cast<int>(k)});
    j = k + 1;
  }
  return out;
}

double flagged_fraction(const ResidualSeries& rs, const std::vector<FlaggedInterval>& flags) {
  if (rs.grid.size() == 0) return 0.0;
  Index count = 0;
  for (const auto& f : flags) count += f.last - f.first + 1;
  return static_cast<double>(count) / static_cast<double>(rs.grid.size());
}

}  // namespace ssls
