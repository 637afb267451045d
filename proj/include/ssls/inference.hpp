#pragma once

#include <vector>

#include "ssls/core.hpp"

namespace ssls {

struct GroupTest {
  double t_stat = 0.0;
  double p_value = 1.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double ci_simul_lo = 0.0;
  double ci_simul_hi = 0.0;
  bool reject_pointwise = false;
  bool reject_simul = false;
};

struct InferenceReport {
  std::vector<GroupTest> groups;
  double alpha = 0.05;
  double z_crit = 0.0;  // z_{1 - alpha/2}
  double q_crit = 0.0;  // maxT critical value for G groups
};

// Critical value of the maximum of |Z| over family_size independent standard
// normals (Sidak): z_{1 - (1 - (1 - alpha)^(1/G)) / 2}.
double maxt_critical(double alpha, Index family_size);

InferenceReport pointwise_tests(const GroupEffects& ge, const Vector& tau0, double alpha);

// Fills the simultaneous CI and maxT rejection fields of a pointwise report.
void simultaneous_cis(const GroupEffects& ge, InferenceReport& report);

InferenceReport infer(const GroupEffects& ge, const Vector& tau0, double alpha);

struct PairwiseResult {
  int g = 0;
  int g2 = 0;
  double diff = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p_value = 1.0;
  double crit = 0.0;
  double crit_simul = 0.0;
  Index family_size = 1;
  bool reject = false;
  bool reject_simul = false;
};

// Two-group comparison (0-based indices). family_size 0 means all C(G,2) pairs.
PairwiseResult pairwise_test(const GroupEffects& ge, int g, int g2, double alpha,
                             Index family_size = 0);
std::vector<PairwiseResult> all_pairwise(const GroupEffects& ge, double alpha);

// H0: K tau = m0.
struct Contrast {
  Matrix k;   // L x G
  Vector m0;  // L
};

struct GlhResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  double critical = 0.0;
  bool reject = false;
};

GlhResult glh_test(const Vector& tau_hat, const Matrix& sigma, double n, const Contrast& c,
                   double alpha);
GlhResult glh_test(const GroupEffects& ge, const Contrast& c, double alpha);

// Rows e_i - e_j for all i < j.
Matrix pairwise_difference_matrix(int n_groups);

// Smallest per-group n giving the requested power for a two-sided level-alpha
// t-test at standardized effect z_tilde.
Index power_min_n(double z_tilde, double alpha = 0.05, double power = 0.8);

}  // namespace ssls
