#pragma once

// Data-generating processes and Monte-Carlo studies: the four-group logistic
// design with intra-group random effects, the one-covariate diagnostic
// design, a two-blob design for data-driven grouping, and the studies built
// on them.

#include <cstdint>
#include <string>
#include <vector>

#include "ssls/core.hpp"
#include "ssls/learners.hpp"
#include "ssls/ssls.hpp"

namespace ssls {

double logistic(double t);

// ---- four-group design -----------------------------------------------------

struct Dgp1Config {
  Index n = 1000;
  double sigma_a = 0.0;  // SD of the group random effect in the treatment model
  double sigma_y = 0.0;  // SD of the group random effect in the outcome model
  Vector tau = (Vector(4) << 1.0, 2.0, 3.0, 4.0).finished();
  std::uint64_t seed = 0;
};

// M(x) = 1 + I(x5 = 1) + 2 I(x1 >= 0).
int dgp1_group(const RowRef& x);

struct Dgp1Truth {
  Vector tau;
  Vector nu;  // per-group random effects, treatment model
  Vector xi;  // per-group random effects, outcome model
  Vector e;   // true propensity at each row
  Vector m;   // true E(Y | X) at each row
  RowFunction propensity;
  RowFunction outcome_mean;
};

struct Dgp1Draw {
  Dataset data;
  Grouping grouping;
  Dgp1Truth truth;
};

void validate(const Dgp1Config& cfg);
Dgp1Draw draw_dgp1(const Dgp1Config& cfg);

// ---- diagnostic design -----------------------------------------------------

struct DgpDiagConfig {
  Index n = 10000;
  bool use_misspecified_m = false;
  std::uint64_t seed = 0;
};

int diag_group_m(double x);   // 1 + I(x > 0.5)
int diag_group_mw(double x);  // 1 + I(x > 0.25) + I(x > 0.75)

struct DiagDraw {
  Dataset data;  // one covariate; known propensity 0.5
  Grouping grouping;
};

DiagDraw draw_dgp_diag(const DgpDiagConfig& cfg);
Grouping diag_grouping(const Dataset& d, bool misspecified);

// ---- two-blob design ------------------------------------------------------

// Two equally likely Gaussian blobs in the plane centred at (0,0) and
// (sep,sep) with unit SD. tau is 1 in the first blob and 3 in the second;
// e(x) = logistic(0.25 (x1 + x2 - sep)), Y = x1 + sin(x2) + tau A + N(0,1).
struct BlobConfig {
  Index n = 1500;
  double separation = 6.0;
  std::uint64_t seed = 0;
};

struct BlobDraw {
  Dataset data;
  std::vector<int> blob;  // 1-based true blob per row
  Vector tau_row;         // true effect per row
};

BlobDraw draw_blobs(const BlobConfig& cfg);

// ---- studies ----------------------------------------------------------------

// Nuisance learners for a study; oracle = true replaces both with the truth.
struct NuisanceChoice {
  std::string name;
  bool oracle = false;
  RegressionLearnerSpec regression = GbmSpec{};
  PropensityLearnerSpec propensity{};
};

NuisanceChoice oracle_choice();
NuisanceChoice cart_choice();
NuisanceChoice gbm_choice();

struct StudyResult {
  std::string learner;
  double sigma_a = 0.0;
  double sigma_y = 0.0;
  Index n = 0;
  int reps = 0;
  Vector bias;      // mean(tau_hat) - tau per group
  Vector ese;       // SD of tau_hat across reps
  Vector ase;       // mean of sqrt(Sigma_gg / n)
  Vector ratio;     // ese / ase
  double coverage = 0.0;  // all simultaneous CIs cover
  double runtime_seconds = 0.0;
};

struct Table1Config {
  std::vector<NuisanceChoice> learners;
  std::vector<std::pair<double, double>> sigmas{{0.0, 0.0}};  // (sigma_a, sigma_y)
  Index n = 1000;
  int reps = 500;
  double alpha = 0.05;
  CrossFitPlan plan{};
  std::uint64_t seed = 0;
  int workers = 1;
};

std::vector<StudyResult> run_table1_study(const Table1Config& cfg);

struct PowerConfig {
  Vector tau0 = (Vector(4) << 1.0, 2.0, 3.0, 4.0).finished();
  std::vector<double> distances;  // empty: k / 25 for k = 0..50
  int reps = 200;
  Index n = 1000;
  NuisanceChoice learner = oracle_choice();
  double alpha = 0.05;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct PowerPoint {
  double distance = 0.0;
  double power = 0.0;
  int reps = 0;
};

std::vector<PowerPoint> run_power_study(const PowerConfig& cfg);

// Largest amount by which a sequence has to move to become non-decreasing
// under a least-squares isotonic fit.
double isotonic_violation(const std::vector<double>& v);

// Four-group design with effect heterogeneity inside each group:
// Y = 5 + (tau_g + delta(X)) A + f(X) + eps, delta = x1 - E[x1 | group].
// Constant propensity per group unless negative_control, in which case
// e(x) = logistic(1.5 x1). Nuisances are the truth.
struct Theorem5Config {
  std::vector<Index> n_grid{5000};
  int reps = 500;
  Vector tau = (Vector(4) << 1.0, 2.0, 3.0, 4.0).finished();
  Vector group_propensity = (Vector(4) << 0.3, 0.5, 0.6, 0.7).finished();
  bool heterogeneity = true;
  bool negative_control = false;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct Theorem5Row {
  Index n = 0;
  int reps = 0;
  Vector bias;
  Vector mc_se;  // SD of tau_hat / sqrt(reps)
};

Dgp1Draw draw_theorem5(const Theorem5Config& cfg, Index n, std::uint64_t seed);
std::vector<Theorem5Row> run_theorem5_study(const Theorem5Config& cfg);

struct DiagStudyConfig {
  Index n = 10000;
  double bandwidth = 0.05;
  int grid_size = 200;
  double multiplier = 2.0;
  int reps = 50;
  RegressionLearnerSpec regression = GbmSpec{};
  PropensityLearnerSpec propensity{};
  std::uint64_t seed = 0;
  int workers = 1;
};

struct DiagRep {
  bool misspecified_overlaps = false;   // some flag of M_w intersects (0.25, 0.75)
  double correct_flagged_fraction = 0;  // union over arms, correct M
  double misspecified_flagged_fraction = 0;
};

struct DiagStudyResult {
  std::vector<DiagRep> reps;
  double overlap_rate = 0.0;     // share of reps with misspecified_overlaps
  double clean_rate = 0.0;       // share of reps with correct fraction < 0.05
  double runtime_seconds = 0.0;
};

DiagStudyResult run_diag_study(const DiagStudyConfig& cfg);

struct DsslsStudyConfig {
  BlobConfig blob{};
  int reps = 300;
  KMeansSpec kmeans{};
  SslsConfig ssls{GbmSpec{}, PropensityLearnerSpec{LogisticSpec{}}};
  std::uint64_t seed = 0;
  int workers = 1;
};

struct DsslsStudyResult {
  int reps = 0;
  double coverage = 0.0;  // all simultaneous CIs cover the member-averaged truth
  Vector bias;
  double runtime_seconds = 0.0;
};

DsslsStudyResult run_dssls_study(const DsslsStudyConfig& cfg);

}  // namespace ssls
