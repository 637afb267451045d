#include "ssls/core.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "ssls/rng.hpp"

namespace ssls {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::NonBinaryTreatment: return "NonBinaryTreatment";
    case ErrorKind::EmptyGroup: return "EmptyGroup";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::PropensityOutOfRange: return "PropensityOutOfRange";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::SingularDesign: return "SingularDesign";
    case ErrorKind::OneArmOnly: return "OneArmOnly";
    case ErrorKind::SingularGram: return "SingularGram";
    case ErrorKind::NotSPD: return "NotSPD";
    case ErrorKind::DegenerateGroup: return "DegenerateGroup";
    case ErrorKind::ClusteringDegenerate: return "ClusteringDegenerate";
    case ErrorKind::GroupTooSmall: return "GroupTooSmall";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::ZeroVarianceContrast: return "ZeroVarianceContrast";
    case ErrorKind::EmptyArm: return "EmptyArm";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Dataset Dataset::subset(std::span<const Index> rows) const {
  Dataset out;
  const auto n = static_cast<Index>(rows.size());
  out.y.resize(n);
  out.a.resize(n);
  out.x.resize(n, x.cols());
  if (known_propensity) out.known_propensity = Vector(n);
  for (Index i = 0; i < n; ++i) {
    const Index r = rows[static_cast<std::size_t>(i)];
    out.y(i) = y(r);
    out.a(i) = a(r);
    out.x.row(i) = x.row(r);
    if (known_propensity) (*out.known_propensity)(i) = (*known_propensity)(r);
  }
  return out;
}

std::vector<Index> Grouping::counts() const {
  std::vector<Index> c(static_cast<std::size_t>(std::max(n_groups, 0)), 0);
  for (int l : labels) {
    if (l >= 1 && l <= n_groups) ++c[static_cast<std::size_t>(l - 1)];
  }
  return c;
}

Grouping Grouping::subset(std::span<const Index> rows) const {
  Grouping out;
  out.n_groups = n_groups;
  out.source = source;
  out.labels.reserve(rows.size());
  for (Index r : rows) out.labels.push_back(labels[static_cast<std::size_t>(r)]);
  return out;
}

std::vector<std::vector<Index>> FoldAssignment::members() const {
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(n_folds));
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    out[static_cast<std::size_t>(fold_of[i])].push_back(static_cast<Index>(i));
  }
  return out;
}

std::vector<Index> FoldAssignment::complement(int fold) const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] != fold) out.push_back(static_cast<Index>(i));
  }
  return out;
}

double GroupEffects::se(int g) const {
  return std::sqrt(sigma_gg_hat(g) / static_cast<double>(n_effective));
}

Vector GroupEffects::standard_errors() const {
  Vector out(tau_hat.size());
  for (int g = 0; g < n_groups(); ++g) out(g) = se(g);
  return out;
}

void validate_dataset(const Dataset& d) {
  const Index n = d.y.size();
  if (n < 1) throw Error(ErrorKind::LengthMismatch, "dataset is empty");
  if (d.a.size() != n || d.x.rows() != n) {
    throw Error(ErrorKind::LengthMismatch,
                "outcome, treatment and covariate lengths differ (" + std::to_string(n) + ", " +
                    std::to_string(d.a.size()) + ", " + std::to_string(d.x.rows()) + ")");
  }
  if (d.known_propensity && d.known_propensity->size() != n) {
    throw Error(ErrorKind::LengthMismatch, "known propensity length differs from outcome length");
  }
  for (Index i = 0; i < n; ++i) {
    if (!std::isfinite(d.y(i))) {
      throw Error(ErrorKind::NonFinite, "non-finite outcome at row " + std::to_string(i), i, -1);
    }
    if (d.a(i) != 0.0 && d.a(i) != 1.0) {
      throw Error(ErrorKind::NonBinaryTreatment,
                  "treatment must be 0 or 1, row " + std::to_string(i) + " has " +
                      std::to_string(d.a(i)),
                  i);
    }
  }
  for (Index j = 0; j < d.x.cols(); ++j) {
    for (Index i = 0; i < n; ++i) {
      if (!std::isfinite(d.x(i, j))) {
        throw Error(ErrorKind::NonFinite,
                    "non-finite covariate at row " + std::to_string(i) + ", column " +
                        std::to_string(j),
                    i, j);
      }
    }
  }
  if (d.known_propensity) {
    for (Index i = 0; i < n; ++i) {
      const double p = (*d.known_propensity)(i);
      if (!(p > 0.0 && p < 1.0)) {
        throw Error(ErrorKind::PropensityOutOfRange,
                    "known propensity outside (0,1) at row " + std::to_string(i), i);
      }
    }
  }
}

void validate_dataset(const Dataset& d, const Grouping& g) {
  validate_dataset(d);
  if (g.size() != d.size()) {
    throw Error(ErrorKind::LengthMismatch, "grouping length differs from dataset length");
  }
  if (g.n_groups < 1) throw Error(ErrorKind::InvalidArgument, "grouping needs G >= 1");
  for (std::size_t i = 0; i < g.labels.size(); ++i) {
    const int l = g.labels[i];
    if (l < 1 || l > g.n_groups) {
      throw Error(ErrorKind::InvalidArgument,
                  "group label " + std::to_string(l) + " outside 1.." + std::to_string(g.n_groups),
                  static_cast<long>(i));
    }
  }
  const auto counts = g.counts();
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0) {
      throw Error(ErrorKind::EmptyGroup, "group " + std::to_string(k + 1) + " has no members", -1,
                  -1, static_cast<long>(k + 1));
    }
  }
}

FoldAssignment make_crossfit_plan(Index n, const CrossFitPlan& plan, const Grouping* grouping,
                                  std::uint64_t repeat) {
  if (plan.n_folds < 2) throw Error(ErrorKind::InvalidArgument, "need at least 2 folds");
  if (n < plan.n_folds) {
    throw Error(ErrorKind::TooFewSamples, "cannot split " + std::to_string(n) + " rows into " +
                                              std::to_string(plan.n_folds) + " folds");
  }
  FoldAssignment out;
  out.n_folds = plan.n_folds;
  out.fold_of.assign(static_cast<std::size_t>(n), 0);

  Rng rng = Rng(plan.seed).split(0x51u).split(repeat);
  const auto k = static_cast<std::size_t>(plan.n_folds);

  if (!plan.stratified) {
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    rng.shuffle(std::span<Index>(perm));
    for (std::size_t pos = 0; pos < perm.size(); ++pos) {
      out.fold_of[static_cast<std::size_t>(perm[pos])] = static_cast<int>(pos % k);
    }
    return out;
  }

  if (grouping == nullptr) {
    throw Error(ErrorKind::InvalidArgument, "stratified splitting requires a grouping");
  }
  if (grouping->size() != n) {
    throw Error(ErrorKind::LengthMismatch, "grouping length differs from sample size");
  }
  std::vector<std::vector<Index>> by_group(static_cast<std::size_t>(grouping->n_groups));
  for (Index i = 0; i < n; ++i) {
    by_group[static_cast<std::size_t>(grouping->labels[static_cast<std::size_t>(i)] - 1)]
        .push_back(i);
  }
  // Each group is dealt round-robin from where the previous one stopped, so
  // per-group and overall fold sizes both stay within one of each other.
  std::size_t offset = 0;
  for (auto& members : by_group) {
    rng.shuffle(std::span<Index>(members));
    for (std::size_t pos = 0; pos < members.size(); ++pos) {
      out.fold_of[static_cast<std::size_t>(members[pos])] = static_cast<int>((offset + pos) % k);
    }
    offset = (offset + members.size()) % k;
  }
  return out;
}

}  // namespace ssls
