#include <cmath>

#include "helpers.hpp"
#include "ssls/diagnostics.hpp"
#include "ssls/simulation.hpp"
#include "ssls/ssls.hpp"

using namespace ssls;
using testing::error_kind;

namespace {

// Residual bookkeeping for n rows with x uniform on a grid and alternating arms.
struct Fixture {
  Dataset d;
  GroupEffects ge;
};

Fixture fixture(Index n, const std::function<double(double, int)>& residual) {
  Fixture f;
  f.d.x.resize(n, 1);
  f.d.a.resize(n);
  f.d.y = Vector::Zero(n);
  f.ge.residuals.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(n - 1);
    const int arm = static_cast<int>(i % 2);
    f.d.x(i, 0) = x;
    f.d.a(i) = arm;
    f.ge.rows.push_back(i);
    f.ge.labels.push_back(1);
    f.ge.residuals(i) = residual(x, arm);
  }
  f.ge.tau_hat = Vector::Zero(1);
  f.ge.sigma_gg_hat = Vector::Ones(1);
  f.ge.n_effective = n;
  return f;
}

}  // namespace

TEST_SUITE("diagnostics") {
  TEST_CASE("kernel weights sum to one") {
    Rng rng(61);
    const Vector x = testing::random_vector(rng, 300);
    for (double at : {-3.0, 0.0, 0.7, 2.5}) {
      for (double h : {0.01, 0.05, 0.5}) {
        const Vector w = kernel_weights(x, at, h);
        CHECK(std::abs(w.sum() - 1.0) <= 1e-12);
        CHECK(w.minCoeff() >= 0.0);
      }
    }
    // Far from every point the weights still normalize.
    CHECK(std::abs(kernel_weights(x, 50.0, 0.05).sum() - 1.0) <= 1e-12);
  }

  TEST_CASE("smoother is linear and local") {
    Rng rng(62);
    const Vector x = Vector::LinSpaced(101, 0.0, 1.0);
    const Vector y = testing::random_vector(rng, 101);
    const Vector grid = Vector::LinSpaced(40, 0.0, 1.0);
    const Vector base = nadaraya_watson(x, y, grid, 0.05);
    const Vector shifted = nadaraya_watson(x, (y.array() + 3.5).matrix(), grid, 0.05);
    CHECK(((shifted - base).array() - 3.5).abs().maxCoeff() < 1e-12);
    const Vector doubled = nadaraya_watson(x, 2.0 * y, grid, 0.05);
    CHECK((doubled - 2.0 * base).cwiseAbs().maxCoeff() < 1e-12);

    const Vector exact = nadaraya_watson(x, y, x, 1e-6);
    CHECK((exact - y).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("local n is the Kish effective size") {
    const Vector x = Vector::Zero(25);
    Vector local;
    nadaraya_watson(x, Vector::Ones(25), Vector::Zero(1), 0.1, &local);
    CHECK(local(0) == doctest::Approx(25.0));

    const Vector x2 = (Vector(2) << 0.0, 0.1).finished();
    nadaraya_watson(x2, Vector::Zero(2), Vector::Zero(1), 0.1, &local);
    const double w = std::exp(-0.5);
    CHECK(local(0) == doctest::Approx((1 + w) * (1 + w) / (1 + w * w)));
  }

  TEST_CASE("no support gives NaN") {
    const Vector x = (Vector(2) << 0.0, 0.01).finished();
    const Vector grid = (Vector(2) << 0.0, 5.0).finished();
    const Vector s = nadaraya_watson(x, Vector::Ones(2), grid, 0.05);
    CHECK(s(0) == doctest::Approx(1.0));
    CHECK(std::isnan(s(1)));
  }

  TEST_CASE("zero and constant residuals") {
    const Fixture zero = fixture(200, [](double, int) { return 0.0; });
    for (const auto& rs : residual_series(zero.ge, zero.d, 0, 0.05, 50)) {
      CHECK(rs.smooth.cwiseAbs().maxCoeff() == 0.0);
      CHECK(flag_regions(rs, 2.0).empty());
      CHECK(flagged_fraction(rs, flag_regions(rs, 2.0)) == 0.0);
    }
    const Fixture constant = fixture(200, [](double, int) { return 0.7; });
    for (const auto& rs : residual_series(constant.ge, constant.d, 0, 0.05, 50)) {
      CHECK((rs.smooth.array() - 0.7).abs().maxCoeff() < 1e-12);
      CHECK(rs.grid.size() == 50);
      for (Index j = 1; j < rs.grid.size(); ++j) CHECK(rs.grid(j) > rs.grid(j - 1));
      CHECK(rs.grid(0) == 0.0);
      CHECK(rs.grid(49) == 1.0);
    }
  }

  TEST_CASE("residuals are split by arm") {
    const Fixture f = fixture(100, [](double, int arm) { return arm == 1 ? 1.0 : -1.0; });
    const auto series = residual_series(f.ge, f.d, 0, 0.05, 20);
    CHECK(series[0].arm == 0);
    CHECK(series[1].arm == 1);
    CHECK(series[0].x.size() == 50);
    CHECK((series[0].smooth.array() + 1.0).abs().maxCoeff() < 1e-12);
    CHECK((series[1].smooth.array() - 1.0).abs().maxCoeff() < 1e-12);
  }

  TEST_CASE("flags cover a bump and nothing else") {
    Rng rng(63);
    const Fixture f = fixture(4000, [&](double x, int) { return (x > 0.4 && x < 0.6 ? 1.0 : 0.0) + 0.1 * rng.normal(); });
    const auto series = residual_series(f.ge, f.d, 0, 0.02, 200);
    for (const auto& rs : series) {
      const auto flags = flag_regions(rs, 4.0);
      REQUIRE(flags.size() == 1);
      CHECK(flags[0].lo > 0.3);
      CHECK(flags[0].hi < 0.7);
      CHECK(flags[0].first <= flags[0].last);
      const double frac = flagged_fraction(rs, flags);
      CHECK(frac == doctest::Approx((flags[0].last - flags[0].first + 1) / 200.0));
    }
  }

  TEST_CASE("misspecified grouping shows off-centered residuals in the middle") {
    DgpDiagConfig cfg;
    cfg.seed = 64;
    const DiagDraw draw = draw_dgp_diag(cfg);
    SslsConfig sc;
    sc.regression = OracleSpec{[](const RowRef& r) { return r(0) * r(0) + 0.5 * diag_group_m(r(0)); }};
    sc.propensity.kind = KnownPropensitySpec{};
    const NuisanceFit nf = crossfit_nuisance(draw.data, sc);
    const GroupEffects ge = estimate_ssls(draw.data, diag_grouping(draw.data, true), nf);
    for (const auto& rs : residual_series(ge, draw.data, 0, 0.05, 200)) {
      double inner = 0.0;
      double outer = 0.0;
      for (Index j = 0; j < rs.grid.size(); ++j) {
        const double x = rs.grid(j);
        const double v = std::abs(rs.smooth(j));
        if (x > 0.3 && x < 0.7) inner = std::max(inner, v);
        if ((x > 0.0 && x < 0.2) || (x > 0.8 && x < 1.0)) outer = std::max(outer, v);
      }
      CHECK(inner > 3.0 * outer);
    }
  }

  TEST_CASE("errors") {
    const Fixture f = fixture(20, [](double, int) { return 0.0; });
    CHECK(error_kind([&] { residual_series(f.ge, f.d, 0, 0.0, 10); }).has_value());
    CHECK(error_kind([&] { residual_series(f.ge, f.d, 3, 0.05, 10); }).has_value());
    Fixture one_arm = f;
    one_arm.d.a.setOnes();
    CHECK(error_kind([&] { residual_series(one_arm.ge, one_arm.d, 0, 0.05, 10); }) == ErrorKind::EmptyArm);
  }
}
