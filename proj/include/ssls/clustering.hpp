#pragma once

#include <cstdint>
#include <vector>

#include "ssls/core.hpp"
#include "ssls/learners.hpp"

namespace ssls {

struct KMeansSpec {
  int n_clusters = 2;
  int max_iter = 100;
  int n_restarts = 10;
  Index min_group_size = 32;  // power_min_n(0.5, 0.05, 0.8)
  std::uint64_t seed = 0;
  bool standardize = true;  // per-column mean 0 / sd 1 on the fitting rows
};

// Nearest-centroid grouping with labels 1..G. Centroids live in the
// standardized space when standardization was requested.
struct FittedClusterer {
  Matrix centroids;
  Eigen::RowVectorXd center;
  Eigen::RowVectorXd scale;
  double inertia = 0.0;
  std::vector<int> train_labels;
  std::vector<double> inertia_path;  // per Lloyd iteration of the winning restart

  int n_clusters() const noexcept { return static_cast<int>(centroids.rows()); }
  int assign_row(const RowRef& row) const;
  std::vector<int> assign(const Matrix& x) const;
  Matrix raw_centroids() const;  // centroids mapped back to covariate units
};

FittedClusterer fit_kmeans(const Matrix& x, const KMeansSpec& spec);

// Renumbers clusters 1..G by ascending norm of the centroid in covariate
// units (ties keep the old order).
FittedClusterer relabel_by_centroid_norm(const FittedClusterer& fc);

// Assigns d's rows with the norm-ordered labels and enforces the minimum
// group size and two-arm overlap gates.
Grouping gate_grouping(const FittedClusterer& fc, const Dataset& d, const KMeansSpec& spec);

Index default_min_group_size(double z_tilde = 0.5, double alpha = 0.05, double power = 0.8);

}  // namespace ssls
