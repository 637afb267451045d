#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ssls/error.hpp"

namespace ssls {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Observed sample: outcome, binary treatment, covariates and an optional
// known propensity column (e.g. a randomized design).
struct Dataset {
  Vector y;
  Vector a;  // 0/1
  Matrix x;  // N x p
  std::optional<Vector> known_propensity;

  Index size() const noexcept { return y.size(); }
  Index n_covariates() const noexcept { return x.cols(); }

  Dataset subset(std::span<const Index> rows) const;
};

enum class GroupingSource { FixedRule, Fitted };

// Dense labels 1..G, one per observation.
struct Grouping {
  std::vector<int> labels;
  int n_groups = 0;
  GroupingSource source = GroupingSource::FixedRule;

  Index size() const noexcept { return static_cast<Index>(labels.size()); }
  std::vector<Index> counts() const;
  Grouping subset(std::span<const Index> rows) const;
};

// Cross-fitting configuration. Folds are materialized by make_crossfit_plan.
struct CrossFitPlan {
  int n_folds = 2;
  bool stratified = false;
  int repeats = 1;
  std::uint64_t seed = 0;
};

struct FoldAssignment {
  std::vector<int> fold_of;  // 0-based fold per observation
  int n_folds = 0;

  std::vector<std::vector<Index>> members() const;
  std::vector<Index> complement(int fold) const;
};

// Per-group estimates with the plug-in variance (before division by the
// effective sample size).
struct GroupEffects {
  Vector tau_hat;
  Vector sigma_gg_hat;
  std::vector<Index> n_g;
  Index n_effective = 0;
  Vector residuals;     // one per estimation row
  Vector denominators;  // sum over group of (A - e_hat)^2
  std::vector<Index> rows;  // original dataset row of each residual
  std::vector<int> labels;  // group label of each residual
  double outcome_oof_mse = 0.0;  // mean of (Y - m_hat)^2 over estimation rows

  int n_groups() const noexcept { return static_cast<int>(tau_hat.size()); }
  double se(int g) const;  // 0-based group index
  Vector standard_errors() const;
};

void validate_dataset(const Dataset& d, const Grouping& g);
void validate_dataset(const Dataset& d);

FoldAssignment make_crossfit_plan(Index n, const CrossFitPlan& plan,
                                  const Grouping* grouping = nullptr,
                                  std::uint64_t repeat = 0);

}  // namespace ssls
