#pragma once

// Cross-fitted groupwise treatment effects: nuisance cross-fitting, the
// closed-form groupwise estimator with its plug-in variance, repeated-split
// median aggregation and the three-way-split data-driven variant.

#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "ssls/clustering.hpp"
#include "ssls/core.hpp"
#include "ssls/learners.hpp"
#include "ssls/transformed_ls.hpp"

namespace ssls {

struct SslsConfig {
  RegressionLearnerSpec regression = GbmSpec{};
  PropensityLearnerSpec propensity{};
  CrossFitPlan plan{};
  double alpha = 0.05;
  int workers = 1;  // threads for repeated splits
};

// Out-of-fold nuisance predictions.
struct NuisanceFit {
  Vector m_hat;
  Vector e_hat;
  FoldAssignment folds;
  bool propensity_converged = true;
};

NuisanceFit crossfit_nuisance(const Dataset& d, const SslsConfig& cfg, const FoldAssignment& folds);

// Materializes the folds from cfg.plan (stratified by `grouping` when asked).
NuisanceFit crossfit_nuisance(const Dataset& d, const SslsConfig& cfg,
                              const Grouping* grouping = nullptr, std::uint64_t repeat = 0);

// Y - m_hat as response and (A - e_hat) * group indicators as regressors.
TransformedSample robinson_transform(const Dataset& d, const Grouping& g, const NuisanceFit& nf);

GroupEffects estimate_ssls(const Dataset& d, const Grouping& g, const NuisanceFit& nf);

// One split: folds, nuisances, estimate.
GroupEffects run_ssls(const Dataset& d, const Grouping& g, const SslsConfig& cfg,
                      std::uint64_t repeat = 0);

// Component-wise median of tau_hat and sigma_gg_hat; everything else is
// taken from the first run.
GroupEffects aggregate_median(std::span<const GroupEffects> runs);

// cfg.plan.repeats independent splits aggregated by median.
GroupEffects repeated_ssls(const Dataset& d, const Grouping& g, const SslsConfig& cfg);

struct FixedGrouping {
  Grouping grouping;  // labels for every row of the full dataset
};

using ClusterSpec = std::variant<KMeansSpec, FixedGrouping>;

struct DsslsResult {
  GroupEffects effects;  // rows refer to the full dataset
  Grouping grouping;     // labels of the estimation rows
  std::vector<Index> clustering_rows;
  std::vector<Index> estimation_rows;
  std::optional<FittedClusterer> clusterer;  // norm-ordered labels
};

DsslsResult estimate_dssls(const Dataset& d, const ClusterSpec& cluster, const SslsConfig& cfg);

}  // namespace ssls
