#include <cmath>
#include <map>

#include "helpers.hpp"
#include "ssls/learners.hpp"
#include "ssls/simulation.hpp"

using namespace ssls;
using testing::error_kind;

namespace {

double variance(const Vector& v) { return (v.array() - v.mean()).square().mean(); }

Matrix column(std::initializer_list<double> values) {
  Matrix x(static_cast<Index>(values.size()), 1);
  Index i = 0;
  for (double v : values) x(i++, 0) = v;
  return x;
}

}  // namespace

TEST_SUITE("learners") {
  TEST_CASE("ols recovers an exact linear fit") {
    const Matrix x = column({-2, -1, 0, 1, 3, 5});
    const Vector y = 2.0 * x.col(0);
    const LinearModel m = fit_ols(x, y);
    CHECK(m.coefficients()(0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(std::abs(m.intercept()) < 1e-12);
    CHECK(m.predict_row(Eigen::RowVectorXd::Constant(1, 10.0)) == doctest::Approx(20.0));
  }

  TEST_CASE("ols residual satisfies the normal equations") {
    Rng rng(11);
    const Matrix x = testing::random_matrix(rng, 50, 4);
    const Vector y = testing::random_vector(rng, 50);
    const LinearModel m = fit_ols(x, y);
    const Vector r = y - m.predict(x);
    CHECK(std::abs(r.sum()) < 1e-8 * 50);
    CHECK((x.transpose() * r).norm() < 1e-8 * 50);
  }

  TEST_CASE("ols rejects a rank-deficient design") {
    Matrix x(6, 2);
    x.col(0) << 1, 2, 3, 4, 5, 6;
    x.col(1) = 2.0 * x.col(0);
    CHECK(error_kind([&] { fit_ols(x, Vector::Ones(6)); }) == ErrorKind::SingularDesign);
  }

  TEST_CASE("ridge with a tiny penalty matches ols") {
    Rng rng(12);
    const Matrix x = testing::random_matrix(rng, 40, 3);
    const Vector y = testing::random_vector(rng, 40);
    const LinearModel ols = fit_ols(x, y);
    const LinearModel ridge = fit_ridge(x, y, 1e-10);
    CHECK((ols.coefficients() - ridge.coefficients()).norm() < 1e-6);
    CHECK(std::abs(ols.intercept() - ridge.intercept()) < 1e-6);
  }

  TEST_CASE("ridge shrinks the slope but not the intercept") {
    const Matrix x = column({-1, 0, 1});
    const Vector y = (Vector(3) << 9, 10, 11).finished();
    const LinearModel m = fit_ridge(x, y, 2.0);
    // Centered: slope = sum(xy) / (sum(x^2) + lambda) = 2 / 4.
    CHECK(m.coefficients()(0) == doctest::Approx(0.5));
    CHECK(m.intercept() == doctest::Approx(10.0));
  }

  TEST_CASE("cart finds the single split") {
    const Matrix x = column({-1, -1, -1, 1, 1, 1});
    const Vector y = (Vector(6) << 0, 0, 0, 1, 1, 1).finished();
    const RegressionTree t = fit_cart(x, y, CartSpec{1, 1});
    REQUIRE(t.nodes().size() == 3);
    CHECK(t.nodes()[0].feature == 0);
    CHECK(t.nodes()[0].threshold == 0.0);
    CHECK(t.predict(x).isApprox(y));
  }

  TEST_CASE("cart ties go to the lowest feature") {
    Matrix x(6, 2);
    x.col(0) << -1, -1, -1, 1, 1, 1;
    x.col(1) = x.col(0);
    const Vector y = (Vector(6) << 0, 0, 0, 1, 1, 1).finished();
    const RegressionTree t = fit_cart(x, y, CartSpec{1, 1});
    CHECK(t.nodes()[0].feature == 0);
  }

  TEST_CASE("cart predictions are leaf means") {
    Rng rng(13);
    const Matrix x = testing::random_matrix(rng, 300, 3);
    Vector y(300);
    for (Index i = 0; i < 300; ++i) y(i) = x(i, 0) * x(i, 1) + rng.normal();
    const RegressionTree t = fit_cart(x, y, CartSpec{5, 7});
    std::map<int, std::pair<double, int>> leaves;
    for (Index i = 0; i < 300; ++i) {
      auto& [sum, n] = leaves[t.leaf_of(x, i)];
      sum += y(i);
      ++n;
    }
    for (const auto& [leaf, sn] : leaves) CHECK(sn.second >= 7);
    const Vector pred = t.predict(x);
    for (Index i = 0; i < 300; ++i) {
      const auto& [sum, n] = leaves[t.leaf_of(x, i)];
      CHECK(pred(i) == doctest::Approx(sum / n).epsilon(1e-12));
    }
    CHECK(t.depth() <= 5);
  }

  TEST_CASE("cart complexity threshold prunes weak splits") {
    Rng rng(14);
    const Matrix x = testing::random_matrix(rng, 400, 2);
    const Vector y = testing::random_vector(rng, 400);
    const RegressionTree full = fit_cart(x, y, CartSpec{6, 10, 0.0});
    const RegressionTree pruned = fit_cart(x, y, CartSpec{6, 10, 0.05});
    CHECK(pruned.nodes().size() < full.nodes().size());
  }

  TEST_CASE("gbm beats the mean and its training error never rises") {
    Dgp1Config cfg;
    cfg.seed = 15;
    const Dgp1Draw draw = draw_dgp1(cfg);
    const GbmModel m = fit_gbm(draw.data.x, draw.data.y, GbmSpec{});
    const Vector pred = m.predict(draw.data.x);
    const double mse = (draw.data.y - pred).squaredNorm() / static_cast<double>(pred.size());
    CHECK(mse < variance(draw.data.y));
    REQUIRE(m.training_mse().size() == 101);
    CHECK(m.training_mse().front() == doctest::Approx(variance(draw.data.y)));
    for (std::size_t t = 1; t < m.training_mse().size(); ++t) {
      CHECK(m.training_mse()[t] <= m.training_mse()[t - 1] + 1e-12);
    }
    CHECK(m.training_mse().back() == doctest::Approx(mse).epsilon(1e-9));
  }

  TEST_CASE("known propensity passes through") {
    PropensityLearnerSpec spec;
    spec.kind = KnownPropensitySpec{0.9};
    const ModelPtr m = fit_propensity(spec, Matrix::Zero(5, 1), Vector::Zero(5));
    CHECK(m->predict(Matrix::Zero(3, 1)).isApprox(Vector::Constant(3, 0.9)));
  }

  TEST_CASE("logistic on uninformative covariates predicts the mean") {
    // Each covariate value appears once in each arm, so the slope MLE is 0.
    Matrix x(20, 1);
    Vector a(20);
    for (Index i = 0; i < 10; ++i) {
      x(2 * i, 0) = x(2 * i + 1, 0) = static_cast<double>(i) - 4.5;
      a(2 * i) = 0.0;
      a(2 * i + 1) = 1.0;
    }
    const LogisticModel m = fit_logistic(x, a, LogisticSpec{});
    CHECK(m.converged());
    CHECK(std::abs(m.coefficients()(1)) < 1e-6);
    for (Index i = 0; i < 20; ++i) CHECK(std::abs(m.predict_row(x.row(i)) - 0.5) < 1e-6);

    // Same idea with one treated in three at every covariate value.
    Matrix x3(30, 1);
    Vector a3(30);
    for (Index i = 0; i < 10; ++i) {
      for (Index r = 0; r < 3; ++r) {
        x3(3 * i + r, 0) = static_cast<double>(i);
        a3(3 * i + r) = r == 0 ? 1.0 : 0.0;
      }
    }
    const LogisticModel m3 = fit_logistic(x3, a3, LogisticSpec{});
    for (Index i = 0; i < 30; ++i) CHECK(std::abs(m3.predict_row(x3.row(i)) - 1.0 / 3.0) < 1e-6);
  }

  TEST_CASE("logistic is consistent on the four-group design") {
    Dgp1Config cfg;
    cfg.n = 10000;
    cfg.seed = 16;
    const Dgp1Draw draw = draw_dgp1(cfg);
    const LogisticModel m = fit_logistic(draw.data.x, draw.data.a, LogisticSpec{});
    const Vector truth = (Vector(6) << 0.5, 0.5, 0.5, -0.5, -1.0, 1.0).finished();
    CHECK((m.coefficients() - truth).cwiseAbs().maxCoeff() < 0.1);
    const auto& path = m.loglik_path();
    for (std::size_t i = 1; i < path.size(); ++i) CHECK(path[i] >= path[i - 1] - 1e-12);
  }

  TEST_CASE("logistic on separable data stops at max_iter") {
    const Matrix x = column({-3, -2, -1, 1, 2, 3});
    const Vector a = (Vector(6) << 0, 0, 0, 1, 1, 1).finished();
    const LogisticModel m = fit_logistic(x, a, LogisticSpec{5, 1e-8});
    CHECK_FALSE(m.converged());
    CHECK(m.iterations() == 5);
  }

  TEST_CASE("propensity predictions are clipped") {
    Rng rng(17);
    Matrix x = testing::random_matrix(rng, 200, 2);
    Vector a(200);
    for (Index i = 0; i < 200; ++i) a(i) = x(i, 0) > 0 ? 1.0 : 0.0;
    a(0) = 1.0 - a(0);
    for (double clip : {0.01, 0.1}) {
      for (const PropensityLearnerSpec& spec :
           {PropensityLearnerSpec{LogisticSpec{}, clip}, PropensityLearnerSpec{CartProbSpec{}, clip},
            PropensityLearnerSpec{GbmProbSpec{}, clip}}) {
        const Vector p = fit_propensity(spec, x, a)->predict(x);
        CHECK(p.minCoeff() >= clip);
        CHECK(p.maxCoeff() <= 1.0 - clip);
      }
    }
  }

  TEST_CASE("learned propensities need both arms") {
    const Matrix x = column({1, 2, 3, 4, 5, 6});
    for (const PropensityLearnerSpec& spec :
         {PropensityLearnerSpec{LogisticSpec{}}, PropensityLearnerSpec{CartProbSpec{CartSpec{2, 1}}},
          PropensityLearnerSpec{GbmProbSpec{GbmSpec{5, 1, 0.1, 1}}}}) {
      CHECK(error_kind([&] { fit_propensity(spec, x, Vector::Ones(6)); }) == ErrorKind::OneArmOnly);
    }
  }

  TEST_CASE("oracle learners evaluate the supplied function") {
    const RegressionLearnerSpec spec = OracleSpec{[](const RowRef& r) { return 3.0 * r(0) + 1.0; }};
    const ModelPtr m = fit_regression(spec, Matrix::Zero(1, 1), Vector::Zero(1));
    CHECK(m->predict(column({0, 1, 2})).isApprox((Vector(3) << 1, 4, 7).finished()));
  }

  TEST_CASE("spec validation") {
    CHECK(error_kind([] { validate_spec(RegressionLearnerSpec{GbmSpec{100, 2, 0.0, 10}}); }) ==
          ErrorKind::InvalidArgument);
    CHECK_NOTHROW(validate_spec(RegressionLearnerSpec{GbmSpec{100, 2, 1.0, 10}}));
    CHECK(error_kind([] { validate_spec(RegressionLearnerSpec{GbmSpec{100, 2, 1.5, 10}}); }).has_value());
    CHECK(error_kind([] { validate_spec(RegressionLearnerSpec{CartSpec{0, 10}}); }).has_value());
    CHECK(error_kind([] { validate_spec(RegressionLearnerSpec{RidgeSpec{-1.0}}); }).has_value());
    CHECK(error_kind([] { validate_spec(PropensityLearnerSpec{LogisticSpec{}, 0.5}); }).has_value());
    CHECK(error_kind([] { validate_spec(PropensityLearnerSpec{LogisticSpec{}, 0.0}); }).has_value());
    CHECK(error_kind([] { validate_spec(PropensityLearnerSpec{KnownPropensitySpec{1.2}}); }).has_value());
  }

  TEST_CASE("regression learners need enough rows") {
    CHECK(error_kind([] { fit_regression(CartSpec{}, Matrix::Zero(19, 1), Vector::Zero(19)); }) ==
          ErrorKind::TooFewSamples);
  }

  TEST_CASE("describe names the hyperparameters") {
    CHECK(describe(RegressionLearnerSpec{GbmSpec{}}) == "gbm(n_trees=100,max_depth=2,shrinkage=0.1,min_leaf=10)");
    CHECK(describe(RegressionLearnerSpec{CartSpec{}}) == "cart(max_depth=6,min_leaf=10,cp=0)");
    CHECK(describe(PropensityLearnerSpec{CartProbSpec{}}).find("cp=0") != std::string::npos);
  }
}
