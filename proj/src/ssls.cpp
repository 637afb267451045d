#include "ssls/ssls.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "ssls/parallel.hpp"
#include "ssls/rng.hpp"

namespace ssls {

namespace {

constexpr double kDegenerateDenominator = 1e-12;

bool learns_propensity(const PropensityLearnerSpec& spec) {
  return std::holds_alternative<LogisticSpec>(spec.kind) ||
         std::holds_alternative<CartProbSpec>(spec.kind) ||
         std::holds_alternative<GbmProbSpec>(spec.kind);
}

bool propensity_from_column(const PropensityLearnerSpec& spec) {
  const auto* known = std::get_if<KnownPropensitySpec>(&spec.kind);
  return known != nullptr && !known->constant;
}

double median_of(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  if (v.size() % 2 == 1) return v[mid];
  const double upper = v[mid];
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace

NuisanceFit crossfit_nuisance(const Dataset& d, const SslsConfig& cfg, const FoldAssignment& folds) {
  const Index n = d.size();
  if (static_cast<Index>(folds.fold_of.size()) != n) {
    throw Error(ErrorKind::LengthMismatch, "fold assignment length differs from dataset");
  }
  validate_spec(cfg.regression);
  validate_spec(cfg.propensity);

  NuisanceFit nf;
  nf.m_hat.resize(n);
  nf.e_hat.resize(n);
  nf.folds = folds;

  if (propensity_from_column(cfg.propensity)) {
    if (!d.known_propensity) {
      throw Error(ErrorKind::InvalidArgument, "known propensity requested but no column supplied");
    }
    nf.e_hat = d.known_propensity->cwiseMax(cfg.propensity.clip).cwiseMin(1.0 - cfg.propensity.clip);
  }

  const auto members = folds.members();
  for (int k = 0; k < folds.n_folds; ++k) {
    const auto& test = members[static_cast<std::size_t>(k)];
    if (test.empty()) throw Error(ErrorKind::TooFewSamples, "fold " + std::to_string(k) + " is empty");
    const auto train = folds.complement(k);
    if (train.empty()) throw Error(ErrorKind::TooFewSamples, "training fold is empty");

    const Matrix x_train = d.x(train, Eigen::all);
    const Matrix x_test = d.x(test, Eigen::all);
    const Vector y_train = d.y(train);
    const Vector a_train = d.a(train);

    const ModelPtr m_model = fit_regression(cfg.regression, x_train, y_train);
    nf.m_hat(test) = m_model->predict(x_test);

    if (propensity_from_column(cfg.propensity)) continue;
    if (learns_propensity(cfg.propensity)) {
      const Index treated = static_cast<Index>(a_train.sum());
      if (treated == 0 || treated == a_train.size()) {
        throw Error(ErrorKind::OneArmOnly,
                    "training data for fold " + std::to_string(k) + " contains a single arm");
      }
    }
    const ModelPtr e_model = fit_propensity(cfg.propensity, x_train, a_train);
    nf.e_hat(test) = e_model->predict(x_test);
    nf.propensity_converged = nf.propensity_converged && e_model->converged();
  }
  return nf;
}

NuisanceFit crossfit_nuisance(const Dataset& d, const SslsConfig& cfg, const Grouping* grouping,
                              std::uint64_t repeat) {
  const FoldAssignment folds =
      make_crossfit_plan(d.size(), cfg.plan, cfg.plan.stratified ? grouping : nullptr, repeat);
  return crossfit_nuisance(d, cfg, folds);
}

TransformedSample robinson_transform(const Dataset& d, const Grouping& g, const NuisanceFit& nf) {
  const Index n = d.size();
  TransformedSample t;
  t.z_hat = d.y - nf.m_hat;
  t.v_hat = Matrix::Zero(n, g.n_groups);
  for (Index i = 0; i < n; ++i) {
    t.v_hat(i, g.labels[static_cast<std::size_t>(i)] - 1) = d.a(i) - nf.e_hat(i);
  }
  t.fold_of = nf.folds.fold_of;
  return t;
}

GroupEffects estimate_ssls(const Dataset& d, const Grouping& g, const NuisanceFit& nf) {
  const Index n = d.size();
  if (g.size() != n || nf.m_hat.size() != n || nf.e_hat.size() != n) {
    throw Error(ErrorKind::LengthMismatch, "dataset, grouping and nuisances differ in length");
  }
  const int n_groups = g.n_groups;
  if (n < 2 * static_cast<Index>(n_groups)) {
    throw Error(ErrorKind::TooFewSamples, "need at least 2 observations per group on average");
  }
  GroupEffects ge;
  ge.tau_hat = Vector::Zero(n_groups);
  ge.sigma_gg_hat = Vector::Zero(n_groups);
  ge.denominators = Vector::Zero(n_groups);
  ge.n_g.assign(static_cast<std::size_t>(n_groups), 0);
  ge.n_effective = n;
  ge.residuals.resize(n);
  ge.rows.resize(static_cast<std::size_t>(n));
  std::iota(ge.rows.begin(), ge.rows.end(), Index{0});
  ge.labels = g.labels;

  Vector numerators = Vector::Zero(n_groups);
  for (Index i = 0; i < n; ++i) {
    const int k = g.labels[static_cast<std::size_t>(i)] - 1;
    const double v = d.a(i) - nf.e_hat(i);
    numerators(k) += (d.y(i) - nf.m_hat(i)) * v;
    ge.denominators(k) += v * v;
    ++ge.n_g[static_cast<std::size_t>(k)];
  }
  for (int k = 0; k < n_groups; ++k) {
    if (!(ge.denominators(k) > kDegenerateDenominator)) {
      throw Error(ErrorKind::DegenerateGroup,
                  "group " + std::to_string(k + 1) + " has no residual treatment variation", -1, -1,
                  k + 1);
    }
    ge.tau_hat(k) = numerators(k) / ge.denominators(k);
  }

  Vector meat = Vector::Zero(n_groups);
  for (Index i = 0; i < n; ++i) {
    const int k = g.labels[static_cast<std::size_t>(i)] - 1;
    const double v = d.a(i) - nf.e_hat(i);
    const double e = (d.y(i) - nf.m_hat(i)) - v * ge.tau_hat(k);
    ge.residuals(i) = e;
    ge.outcome_oof_mse += (d.y(i) - nf.m_hat(i)) * (d.y(i) - nf.m_hat(i));
    meat(k) += e * e * v * v;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  ge.outcome_oof_mse *= inv_n;
  for (int k = 0; k < n_groups; ++k) {
    const double bread = ge.denominators(k) * inv_n;
    ge.sigma_gg_hat(k) = (meat(k) * inv_n) / (bread * bread);
  }
  return ge;
}

GroupEffects run_ssls(const Dataset& d, const Grouping& g, const SslsConfig& cfg,
                      std::uint64_t repeat) {
  validate_dataset(d, g);
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw Error(ErrorKind::DomainError, "alpha must lie in (0,1)");
  if (d.size() < 2 * static_cast<Index>(g.n_groups)) {
    throw Error(ErrorKind::TooFewSamples, "need at least 2 observations per group on average");
  }
  const NuisanceFit nf = crossfit_nuisance(d, cfg, &g, repeat);
  return estimate_ssls(d, g, nf);
}

GroupEffects aggregate_median(std::span<const GroupEffects> runs) {
  if (runs.empty()) throw Error(ErrorKind::InvalidArgument, "nothing to aggregate");
  GroupEffects out = runs.front();
  if (runs.size() == 1) return out;
  const int n_groups = out.n_groups();
  for (int k = 0; k < n_groups; ++k) {
    std::vector<double> tau;
    std::vector<double> sigma;
    tau.reserve(runs.size());
    sigma.reserve(runs.size());
    for (const auto& r : runs) {
      if (r.n_groups() != n_groups) throw Error(ErrorKind::LengthMismatch, "runs differ in G");
      tau.push_back(r.tau_hat(k));
      sigma.push_back(r.sigma_gg_hat(k));
    }
    out.tau_hat(k) = median_of(std::move(tau));
    out.sigma_gg_hat(k) = median_of(std::move(sigma));
  }
  return out;
}

GroupEffects repeated_ssls(const Dataset& d, const Grouping& g, const SslsConfig& cfg) {
  const int repeats = cfg.plan.repeats;
  if (repeats < 1) throw Error(ErrorKind::InvalidArgument, "repeats must be >= 1");
  validate_dataset(d, g);
  std::vector<GroupEffects> runs(static_cast<std::size_t>(repeats));
  parallel_for(runs.size(), cfg.workers, [&](std::size_t s) {
    runs[s] = run_ssls(d, g, cfg, static_cast<std::uint64_t>(s));
  });
  return aggregate_median(runs);
}

DsslsResult estimate_dssls(const Dataset& d, const ClusterSpec& cluster, const SslsConfig& cfg) {
  validate_dataset(d);
  const Index n = d.size();
  if (n < 3 * static_cast<Index>(cfg.plan.n_folds)) {
    throw Error(ErrorKind::TooFewSamples, "three-way split needs N >= 3 * n_folds");
  }

  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng = Rng(cfg.plan.seed).split(0xD3u);
  rng.shuffle(std::span<Index>(perm));
  const auto n_cluster = static_cast<std::size_t>(n / 3);

  DsslsResult out;
  out.clustering_rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_cluster));
  out.estimation_rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_cluster), perm.end());
  std::sort(out.clustering_rows.begin(), out.clustering_rows.end());
  std::sort(out.estimation_rows.begin(), out.estimation_rows.end());

  const Dataset est = d.subset(out.estimation_rows);
  if (const auto* fixed = std::get_if<FixedGrouping>(&cluster)) {
    if (fixed->grouping.size() != n) {
      throw Error(ErrorKind::LengthMismatch, "fixed grouping length differs from dataset");
    }
    out.grouping = fixed->grouping.subset(out.estimation_rows);
  } else {
    const auto& spec = std::get<KMeansSpec>(cluster);
    const Matrix x_cluster = d.x(out.clustering_rows, Eigen::all);
    const FittedClusterer fc = fit_kmeans(x_cluster, spec);
    out.grouping = gate_grouping(fc, est, spec);
    out.clusterer = relabel_by_centroid_norm(fc);
  }

  out.effects = repeated_ssls(est, out.grouping, cfg);
  for (auto& r : out.effects.rows) r = out.estimation_rows[static_cast<std::size_t>(r)];
  return out;
}

}  // namespace ssls
