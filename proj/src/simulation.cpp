#include "ssls/simulation.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <set>

#include "ssls/diagnostics.hpp"
#include "ssls/inference.hpp"
#include "ssls/parallel.hpp"
#include "ssls/rng.hpp"

namespace ssls {

namespace {

// Stream tags so that studies sharing a seed do not share draws.
constexpr std::uint64_t kTable1Tag = 0x7A1;
constexpr std::uint64_t kPowerTag = 0x90E;
constexpr std::uint64_t kTheorem5Tag = 0x7E5;
constexpr std::uint64_t kDiagTag = 0xD1A;
constexpr std::uint64_t kBlobTag = 0xB10;

std::uint64_t rep_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t cell, std::uint64_t rep) {
  return Rng(seed).split(tag).split(cell).split(rep).key();
}

class KahanSum {
 public:
  void add(double v) {
    const double y = v - c_;
    const double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const { return s_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double baseline(const RowRef& x) {
  return x(0) * x(0) - 2.0 * x(0) * x(1) - 2.0 * x(2) - 2.0 * x(3) + 4.0 * x(4);
}

Matrix draw_dgp1_covariates(Rng& rng, Index n) {
  Matrix x(n, 5);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
    for (int j = 2; j < 5; ++j) x(i, j) = rng.bernoulli(0.5) ? 1.0 : 0.0;
  }
  return x;
}

Grouping dgp1_grouping(const Matrix& x) {
  Grouping g;
  g.n_groups = 4;
  g.labels.resize(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i) g.labels[static_cast<std::size_t>(i)] = dgp1_group(x.row(i));
  return g;
}

SslsConfig study_config(const NuisanceChoice& choice, const Dgp1Truth* truth, const CrossFitPlan& plan,
                        double alpha) {
  SslsConfig cfg;
  cfg.plan = plan;
  cfg.alpha = alpha;
  if (choice.oracle) {
    cfg.regression = OracleSpec{truth->outcome_mean};
    cfg.propensity.kind = OraclePropensitySpec{truth->propensity};
    cfg.propensity.clip = choice.propensity.clip;
  } else {
    cfg.regression = choice.regression;
    cfg.propensity = choice.propensity;
  }
  return cfg;
}

bool all_covered(const GroupEffects& ge, const Vector& truth, double alpha) {
  const InferenceReport r = infer(ge, truth, alpha);
  for (int g = 0; g < ge.n_groups(); ++g) {
    const auto& t = r.groups[static_cast<std::size_t>(g)];
    if (!(t.ci_simul_lo <= truth(g) && truth(g) <= t.ci_simul_hi)) return false;
  }
  return true;
}

// Mean and SD (n - 1 denominator) of each column of per-rep rows.
std::pair<Vector, Vector> column_moments(const std::vector<Vector>& rows) {
  const Index g = rows.front().size();
  Vector mean(g);
  Vector sd(g);
  const double n = static_cast<double>(rows.size());
  for (Index k = 0; k < g; ++k) {
    KahanSum s;
    for (const auto& r : rows) s.add(r(k));
    mean(k) = s.value() / n;
    KahanSum ss;
    for (const auto& r : rows) ss.add((r(k) - mean(k)) * (r(k) - mean(k)));
    sd(k) = rows.size() > 1 ? std::sqrt(ss.value() / (n - 1.0)) : 0.0;
  }
  return {mean, sd};
}

}  // namespace

double logistic(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

int dgp1_group(const RowRef& x) {
  return 1 + (x(4) == 1.0 ? 1 : 0) + (x(0) >= 0.0 ? 2 : 0);
}

void validate(const Dgp1Config& cfg) {
  if (cfg.n < 8) throw Error(ErrorKind::TooFewSamples, "the four-group design needs N >= 8");
  if (!(cfg.sigma_a >= 0.0) || !(cfg.sigma_y >= 0.0)) {
    throw Error(ErrorKind::DomainError, "random-effect SDs must be non-negative");
  }
  if (cfg.tau.size() != 4) throw Error(ErrorKind::LengthMismatch, "tau must have 4 entries");
}

Dgp1Draw draw_dgp1(const Dgp1Config& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  Rng effects = rng.split(1);
  Rng cov = rng.split(2);
  Rng noise = rng.split(3);

  Dgp1Draw out;
  auto& t = out.truth;
  t.tau = cfg.tau;
  t.nu = Vector::Zero(4);
  t.xi = Vector::Zero(4);
  // Skipped entirely when the SD is zero so the effects are exactly 0.
  if (cfg.sigma_a > 0.0) {
    for (int g = 0; g < 4; ++g) t.nu(g) = effects.normal(0.0, cfg.sigma_a);
  }
  if (cfg.sigma_y > 0.0) {
    Rng xi_rng = effects.split(7);
    for (int g = 0; g < 4; ++g) t.xi(g) = xi_rng.normal(0.0, cfg.sigma_y);
  }

  const Vector nu = t.nu;
  const Vector xi = t.xi;
  const Vector tau = t.tau;
  t.propensity = [nu](const RowRef& x) {
    const int g = dgp1_group(x);
    return logistic(0.5 + 0.5 * x(0) + 0.5 * x(1) - 0.5 * x(2) - x(3) + x(4) + nu(g - 1));
  };
  const RowFunction e_fn = t.propensity;
  t.outcome_mean = [tau, xi, e_fn](const RowRef& x) {
    const int g = dgp1_group(x);
    return 5.0 + tau(g - 1) * e_fn(x) + baseline(x) + xi(g - 1);
  };

  const Index n = cfg.n;
  auto& d = out.data;
  d.x = draw_dgp1_covariates(cov, n);
  out.grouping = dgp1_grouping(d.x);
  d.y.resize(n);
  d.a.resize(n);
  t.e.resize(n);
  t.m.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto row = d.x.row(i);
    const int g = out.grouping.labels[static_cast<std::size_t>(i)];
    t.e(i) = t.propensity(row);
    t.m(i) = t.outcome_mean(row);
    d.a(i) = noise.bernoulli(t.e(i)) ? 1.0 : 0.0;
    d.y(i) = 5.0 + tau(g - 1) * d.a(i) + baseline(row) + xi(g - 1) + noise.normal();
  }
  d.known_propensity = t.e;
  return out;
}

int diag_group_m(double x) { return 1 + (x > 0.5 ? 1 : 0); }

int diag_group_mw(double x) { return 1 + (x > 0.25 ? 1 : 0) + (x > 0.75 ? 1 : 0); }

Grouping diag_grouping(const Dataset& d, bool misspecified) {
  Grouping g;
  g.n_groups = misspecified ? 3 : 2;
  g.labels.resize(static_cast<std::size_t>(d.size()));
  for (Index i = 0; i < d.size(); ++i) {
    g.labels[static_cast<std::size_t>(i)] = misspecified ? diag_group_mw(d.x(i, 0)) : diag_group_m(d.x(i, 0));
  }
  return g;
}

DiagDraw draw_dgp_diag(const DgpDiagConfig& cfg) {
  if (cfg.n < 4) throw Error(ErrorKind::TooFewSamples, "the diagnostic design needs N >= 4");
  Rng rng(cfg.seed);
  DiagDraw out;
  auto& d = out.data;
  const Index n = cfg.n;
  d.x.resize(n, 1);
  d.a.resize(n);
  d.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double x = rng.uniform();
    const double a = rng.bernoulli(0.5) ? 1.0 : 0.0;
    d.x(i, 0) = x;
    d.a(i) = a;
    d.y(i) = static_cast<double>(diag_group_m(x)) * a + x * x + rng.normal(0.0, 0.1);
  }
  d.known_propensity = Vector::Constant(n, 0.5);
  out.grouping = diag_grouping(d, cfg.use_misspecified_m);
  return out;
}

BlobDraw draw_blobs(const BlobConfig& cfg) {
  if (cfg.n < 4) throw Error(ErrorKind::TooFewSamples, "the blob design needs N >= 4");
  Rng rng(cfg.seed);
  BlobDraw out;
  auto& d = out.data;
  const Index n = cfg.n;
  d.x.resize(n, 2);
  d.a.resize(n);
  d.y.resize(n);
  out.tau_row.resize(n);
  out.blob.resize(static_cast<std::size_t>(n));
  Vector e(n);
  for (Index i = 0; i < n; ++i) {
    const int b = rng.bernoulli(0.5) ? 2 : 1;
    const double c = b == 2 ? cfg.separation : 0.0;
    const double x1 = rng.normal(c, 1.0);
    const double x2 = rng.normal(c, 1.0);
    const double tau = b == 2 ? 3.0 : 1.0;
    e(i) = logistic(0.25 * (x1 + x2 - cfg.separation));
    d.x(i, 0) = x1;
    d.x(i, 1) = x2;
    d.a(i) = rng.bernoulli(e(i)) ? 1.0 : 0.0;
    d.y(i) = x1 + std::sin(x2) + tau * d.a(i) + rng.normal();
    out.tau_row(i) = tau;
    out.blob[static_cast<std::size_t>(i)] = b;
  }
  d.known_propensity = e;
  return out;
}

NuisanceChoice oracle_choice() {
  NuisanceChoice c;
  c.name = "oracle";
  c.oracle = true;
  return c;
}

NuisanceChoice cart_choice() {
  NuisanceChoice c;
  c.name = "cart";
  c.regression = CartSpec{};
  c.propensity.kind = CartProbSpec{};
  return c;
}

NuisanceChoice gbm_choice() {
  NuisanceChoice c;
  c.name = "gbm";
  c.regression = GbmSpec{};
  c.propensity.kind = GbmProbSpec{};
  return c;
}

std::vector<StudyResult> run_table1_study(const Table1Config& cfg) {
  if (cfg.reps < 2) throw Error(ErrorKind::InvalidArgument, "a study needs at least 2 reps");
  std::vector<StudyResult> out;
  std::uint64_t cell = 0;
  for (const auto& [sigma_a, sigma_y] : cfg.sigmas) {
    for (const auto& learner : cfg.learners) {
      const auto t0 = std::chrono::steady_clock::now();
      std::vector<Vector> tau_hat(static_cast<std::size_t>(cfg.reps));
      std::vector<Vector> se(static_cast<std::size_t>(cfg.reps));
      std::vector<char> covered(static_cast<std::size_t>(cfg.reps), 0);
      // Learners share datasets within a sigma cell, as in a paired comparison.
      const std::uint64_t data_cell = cell / std::max<std::size_t>(cfg.learners.size(), 1);
      parallel_for(static_cast<std::size_t>(cfg.reps), cfg.workers, [&](std::size_t r) {
        Dgp1Config dc;
        dc.n = cfg.n;
        dc.sigma_a = sigma_a;
        dc.sigma_y = sigma_y;
        dc.seed = rep_seed(cfg.seed, kTable1Tag, data_cell, r);
        const Dgp1Draw draw = draw_dgp1(dc);
        CrossFitPlan plan = cfg.plan;
        plan.seed = dc.seed;
        const SslsConfig sc = study_config(learner, &draw.truth, plan, cfg.alpha);
        const GroupEffects ge = repeated_ssls(draw.data, draw.grouping, sc);
        tau_hat[r] = ge.tau_hat;
        se[r] = ge.standard_errors();
        covered[r] = all_covered(ge, draw.truth.tau, cfg.alpha) ? 1 : 0;
      });

      StudyResult res;
      res.learner = learner.name;
      res.sigma_a = sigma_a;
      res.sigma_y = sigma_y;
      res.n = cfg.n;
      res.reps = cfg.reps;
      auto [mean, sd] = column_moments(tau_hat);
      res.bias = mean - Dgp1Config{}.tau;
      res.ese = sd;
      res.ase = column_moments(se).first;
      res.ratio = res.ese.cwiseQuotient(res.ase);
      Index hits = 0;
      for (char c : covered) hits += c;
      res.coverage = static_cast<double>(hits) / static_cast<double>(cfg.reps);
      res.runtime_seconds = seconds_since(t0);
      out.push_back(std::move(res));
      ++cell;
    }
  }
  return out;
}

double isotonic_violation(const std::vector<double>& v) {
  // Pool-adjacent-violators with unit weights.
  std::vector<double> level;
  std::vector<double> weight;
  for (double x : v) {
    level.push_back(x);
    weight.push_back(1.0);
    while (level.size() > 1 && level[level.size() - 2] > level.back()) {
      const double w = weight[weight.size() - 2] + weight.back();
      const double m = (level[level.size() - 2] * weight[weight.size() - 2] + level.back() * weight.back()) / w;
      level.pop_back();
      weight.pop_back();
      level.back() = m;
      weight.back() = w;
    }
  }
  double worst = 0.0;
  std::size_t i = 0;
  for (std::size_t b = 0; b < level.size(); ++b) {
    for (int k = 0; k < static_cast<int>(weight[b]); ++k, ++i) worst = std::max(worst, std::fabs(v[i] - level[b]));
  }
  return worst;
}

std::vector<PowerPoint> run_power_study(const PowerConfig& cfg) {
  if (cfg.reps < 2) throw Error(ErrorKind::InvalidArgument, "a study needs at least 2 reps");
  if (cfg.tau0.size() != 4) throw Error(ErrorKind::LengthMismatch, "tau0 must have 4 entries");
  std::vector<double> distances = cfg.distances;
  if (distances.empty()) {
    for (int k = 0; k <= 50; ++k) distances.push_back(k / 25.0);
  }
  const Index g = cfg.tau0.size();
  const double q = maxt_critical(cfg.alpha, g);

  std::vector<PowerPoint> out;
  for (std::size_t k = 0; k < distances.size(); ++k) {
    std::vector<char> reject(static_cast<std::size_t>(cfg.reps), 0);
    parallel_for(static_cast<std::size_t>(cfg.reps), cfg.workers, [&](std::size_t r) {
      const std::uint64_t seed = rep_seed(cfg.seed, kPowerTag, k, r);
      Rng dir_rng = Rng(seed).split(0xA17);
      Vector u(g);
      do {
        for (Index j = 0; j < g; ++j) u(j) = dir_rng.normal();
      } while (u.norm() == 0.0);
      Dgp1Config dc;
      dc.n = cfg.n;
      dc.tau = cfg.tau0 + distances[k] * u / u.norm();
      dc.seed = seed;
      const Dgp1Draw draw = draw_dgp1(dc);
      CrossFitPlan plan;
      plan.seed = seed;
      const SslsConfig sc = study_config(cfg.learner, &draw.truth, plan, cfg.alpha);
      const GroupEffects ge = repeated_ssls(draw.data, draw.grouping, sc);
      double max_t = 0.0;
      for (int j = 0; j < ge.n_groups(); ++j) {
        max_t = std::max(max_t, std::fabs((ge.tau_hat(j) - cfg.tau0(j)) / ge.se(j)));
      }
      reject[r] = max_t > q ? 1 : 0;
    });
    Index hits = 0;
    for (char c : reject) hits += c;
    out.push_back({distances[k], static_cast<double>(hits) / static_cast<double>(cfg.reps), cfg.reps});
  }
  return out;
}

Dgp1Draw draw_theorem5(const Theorem5Config& cfg, Index n, std::uint64_t seed) {
  if (n < 8) throw Error(ErrorKind::TooFewSamples, "the four-group design needs N >= 8");
  if (cfg.tau.size() != 4 || cfg.group_propensity.size() != 4) {
    throw Error(ErrorKind::LengthMismatch, "tau and group_propensity must have 4 entries");
  }
  Rng rng(seed);
  Rng cov = rng.split(2);
  Rng noise = rng.split(3);

  // E[x1 | x1 >= 0] = sqrt(2 / pi).
  const double half_mean = std::sqrt(2.0 / std::numbers::pi);
  const bool het = cfg.heterogeneity;
  auto delta = [half_mean, het](const RowRef& x) {
    if (!het) return 0.0;
    return x(0) - (x(0) >= 0.0 ? half_mean : -half_mean);
  };
  const Vector pg = cfg.group_propensity;
  const bool neg = cfg.negative_control;
  const Vector tau = cfg.tau;

  Dgp1Draw out;
  auto& t = out.truth;
  t.tau = tau;
  t.nu = Vector::Zero(4);
  t.xi = Vector::Zero(4);
  t.propensity = [pg, neg](const RowRef& x) {
    return neg ? logistic(1.5 * x(0)) : pg(dgp1_group(x) - 1);
  };
  const RowFunction e_fn = t.propensity;
  t.outcome_mean = [tau, e_fn, delta](const RowRef& x) {
    return 5.0 + baseline(x) + e_fn(x) * (tau(dgp1_group(x) - 1) + delta(x));
  };

  auto& d = out.data;
  d.x = draw_dgp1_covariates(cov, n);
  out.grouping = dgp1_grouping(d.x);
  d.y.resize(n);
  d.a.resize(n);
  t.e.resize(n);
  t.m.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto row = d.x.row(i);
    const int g = out.grouping.labels[static_cast<std::size_t>(i)];
    t.e(i) = t.propensity(row);
    t.m(i) = t.outcome_mean(row);
    d.a(i) = noise.bernoulli(t.e(i)) ? 1.0 : 0.0;
    d.y(i) = 5.0 + baseline(row) + (tau(g - 1) + delta(row)) * d.a(i) + noise.normal();
  }
  d.known_propensity = t.e;
  return out;
}

std::vector<Theorem5Row> run_theorem5_study(const Theorem5Config& cfg) {
  if (cfg.reps < 2) throw Error(ErrorKind::InvalidArgument, "a study needs at least 2 reps");
  std::vector<Theorem5Row> out;
  for (std::size_t k = 0; k < cfg.n_grid.size(); ++k) {
    const Index n = cfg.n_grid[k];
    std::vector<Vector> tau_hat(static_cast<std::size_t>(cfg.reps));
    parallel_for(static_cast<std::size_t>(cfg.reps), cfg.workers, [&](std::size_t r) {
      const std::uint64_t seed = rep_seed(cfg.seed, kTheorem5Tag, k, r);
      const Dgp1Draw draw = draw_theorem5(cfg, n, seed);
      SslsConfig sc;
      sc.regression = OracleSpec{draw.truth.outcome_mean};
      sc.propensity.kind = KnownPropensitySpec{};
      sc.plan.seed = seed;
      tau_hat[r] = repeated_ssls(draw.data, draw.grouping, sc).tau_hat;
    });
    auto [mean, sd] = column_moments(tau_hat);
    Theorem5Row row;
    row.n = n;
    row.reps = cfg.reps;
    row.bias = mean - cfg.tau;
    row.mc_se = sd / std::sqrt(static_cast<double>(cfg.reps));
    out.push_back(std::move(row));
  }
  return out;
}

DiagStudyResult run_diag_study(const DiagStudyConfig& cfg) {
  if (cfg.reps < 1) throw Error(ErrorKind::InvalidArgument, "a study needs at least 1 rep");
  const auto t0 = std::chrono::steady_clock::now();
  DiagStudyResult out;
  out.reps.resize(static_cast<std::size_t>(cfg.reps));
  parallel_for(out.reps.size(), cfg.workers, [&](std::size_t r) {
    DgpDiagConfig dc;
    dc.n = cfg.n;
    dc.seed = rep_seed(cfg.seed, kDiagTag, 0, r);
    const DiagDraw draw = draw_dgp_diag(dc);
    SslsConfig sc;
    sc.regression = cfg.regression;
    sc.propensity = cfg.propensity;
    sc.plan.seed = dc.seed;
    // Nuisances do not depend on the grouping, so both fits share them.
    const NuisanceFit nf = crossfit_nuisance(draw.data, sc);

    auto flagged_points = [&](bool misspecified, bool* overlaps) {
      const Grouping g = diag_grouping(draw.data, misspecified);
      const GroupEffects ge = estimate_ssls(draw.data, g, nf);
      const auto series = residual_series(ge, draw.data, 0, cfg.bandwidth, cfg.grid_size);
      std::set<int> points;
      for (const auto& rs : series) {
        for (const auto& f : flag_regions(rs, cfg.multiplier)) {
          for (int j = f.first; j <= f.last; ++j) points.insert(j);
          if (overlaps != nullptr && f.hi > 0.25 && f.lo < 0.75) *overlaps = true;
        }
      }
      return static_cast<double>(points.size()) / static_cast<double>(cfg.grid_size);
    };
    DiagRep& rep = out.reps[r];
    rep.correct_flagged_fraction = flagged_points(false, nullptr);
    rep.misspecified_flagged_fraction = flagged_points(true, &rep.misspecified_overlaps);
  });
  Index overlap = 0;
  Index clean = 0;
  for (const auto& rep : out.reps) {
    overlap += rep.misspecified_overlaps ? 1 : 0;
    clean += rep.correct_flagged_fraction < 0.05 ? 1 : 0;
  }
  out.overlap_rate = static_cast<double>(overlap) / static_cast<double>(cfg.reps);
  out.clean_rate = static_cast<double>(clean) / static_cast<double>(cfg.reps);
  out.runtime_seconds = seconds_since(t0);
  return out;
}

DsslsStudyResult run_dssls_study(const DsslsStudyConfig& cfg) {
  if (cfg.reps < 2) throw Error(ErrorKind::InvalidArgument, "a study needs at least 2 reps");
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<char> covered(static_cast<std::size_t>(cfg.reps), 0);
  std::vector<Vector> err(static_cast<std::size_t>(cfg.reps));
  parallel_for(covered.size(), cfg.workers, [&](std::size_t r) {
    const std::uint64_t seed = rep_seed(cfg.seed, kBlobTag, 0, r);
    BlobConfig bc = cfg.blob;
    bc.seed = seed;
    const BlobDraw draw = draw_blobs(bc);
    KMeansSpec ks = cfg.kmeans;
    ks.seed = seed;
    SslsConfig sc = cfg.ssls;
    sc.plan.seed = seed;
    const DsslsResult res = estimate_dssls(draw.data, ks, sc);

    // Target: average true effect over each fitted group's estimation rows.
    const int g = res.grouping.n_groups;
    Vector truth = Vector::Zero(g);
    Vector count = Vector::Zero(g);
    for (std::size_t i = 0; i < res.estimation_rows.size(); ++i) {
      const int k = res.grouping.labels[i] - 1;
      truth(k) += draw.tau_row(res.estimation_rows[i]);
      count(k) += 1.0;
    }
    truth = truth.cwiseQuotient(count);
    covered[r] = all_covered(res.effects, truth, sc.alpha) ? 1 : 0;
    err[r] = res.effects.tau_hat - truth;
  });
  DsslsStudyResult out;
  out.reps = cfg.reps;
  Index hits = 0;
  for (char c : covered) hits += c;
  out.coverage = static_cast<double>(hits) / static_cast<double>(cfg.reps);
  out.bias = column_moments(err).first;
  out.runtime_seconds = seconds_since(t0);
  return out;
}

}  // namespace ssls
