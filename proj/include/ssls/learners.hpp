#pragma once

// Nuisance learners: regression learners for E(Y|X) and probability learners
// for the propensity score e(X). All fitted models are immutable.

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ssls/core.hpp"

namespace ssls {

using RowRef = Eigen::Ref<const Eigen::RowVectorXd>;
using RowFunction = std::function<double(const RowRef&)>;

struct OlsSpec {};
struct RidgeSpec {
  double lambda = 1.0;  // penalty on the sum of squares; intercept unpenalized
};
struct CartSpec {
  int max_depth = 6;
  int min_leaf = 10;
  double cp = 0.0;  // minimum SSE reduction per split, relative to the root SSE
};
struct GbmSpec {
  int n_trees = 100;
  int max_depth = 2;
  double shrinkage = 0.1;
  int min_leaf = 10;
};
struct OracleSpec {
  RowFunction f;
};

using RegressionLearnerSpec = std::variant<OlsSpec, RidgeSpec, CartSpec, GbmSpec, OracleSpec>;

struct LogisticSpec {
  int max_iter = 100;
  double tol = 1e-8;  // on the gradient of the mean log-likelihood
};
struct CartProbSpec {
  CartSpec tree;
};
struct GbmProbSpec {
  GbmSpec gbm;
};
// Supplied propensity: a constant, or (when empty) the dataset's
// known_propensity column.
struct KnownPropensitySpec {
  std::optional<double> constant;
};
struct OraclePropensitySpec {
  RowFunction f;
};

struct PropensityLearnerSpec {
  std::variant<LogisticSpec, CartProbSpec, GbmProbSpec, KnownPropensitySpec, OraclePropensitySpec>
      kind = GbmProbSpec{};
  double clip = 0.01;
};

std::string describe(const RegressionLearnerSpec& spec);
std::string describe(const PropensityLearnerSpec& spec);

class FittedModel {
 public:
  virtual ~FittedModel() = default;
  virtual double predict_row(const RowRef& row) const = 0;
  virtual Vector predict(const Matrix& x) const;
  // False when an iterative fit stopped at max_iter; the last iterate is kept.
  virtual bool converged() const { return true; }
};

using ModelPtr = std::shared_ptr<const FittedModel>;

class ConstantModel final : public FittedModel {
 public:
  explicit ConstantModel(double value) : value_(value) {}
  double predict_row(const RowRef&) const override { return value_; }
  Vector predict(const Matrix& x) const override;
  double value() const { return value_; }

 private:
  double value_;
};

class OracleModel final : public FittedModel {
 public:
  explicit OracleModel(RowFunction f) : f_(std::move(f)) {}
  double predict_row(const RowRef& row) const override { return f_(row); }

 private:
  RowFunction f_;
};

class LinearModel final : public FittedModel {
 public:
  LinearModel(double intercept, Vector coef) : intercept_(intercept), coef_(std::move(coef)) {}
  double predict_row(const RowRef& row) const override;
  Vector predict(const Matrix& x) const override;
  double intercept() const { return intercept_; }
  const Vector& coefficients() const { return coef_; }

 private:
  double intercept_;
  Vector coef_;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
  Index n = 0;
};

// Binary regression tree; rows with x[feature] <= threshold go left.
class RegressionTree final : public FittedModel {
 public:
  explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}
  double predict_row(const RowRef& row) const override;
  Vector predict(const Matrix& x) const override;
  int leaf_of(const Matrix& x, Index i) const;
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  int depth() const;

 private:
  std::vector<TreeNode> nodes_;
};

class GbmModel final : public FittedModel {
 public:
  GbmModel(double init, double shrinkage, std::vector<RegressionTree> trees,
           std::vector<double> training_mse)
      : init_(init),
        shrinkage_(shrinkage),
        trees_(std::move(trees)),
        training_mse_(std::move(training_mse)) {}
  double predict_row(const RowRef& row) const override;
  Vector predict(const Matrix& x) const override;
  // Entry t is the training MSE after t trees (entry 0: mean-only fit).
  const std::vector<double>& training_mse() const { return training_mse_; }
  std::size_t n_trees() const { return trees_.size(); }

 private:
  double init_;
  double shrinkage_;
  std::vector<RegressionTree> trees_;
  std::vector<double> training_mse_;
};

class LogisticModel final : public FittedModel {
 public:
  LogisticModel(Vector beta, bool converged, int iterations, std::vector<double> loglik)
      : beta_(std::move(beta)),
        converged_(converged),
        iterations_(iterations),
        loglik_(std::move(loglik)) {}
  double predict_row(const RowRef& row) const override;
  Vector predict(const Matrix& x) const override;
  bool converged() const override { return converged_; }
  // beta(0) is the intercept.
  const Vector& coefficients() const { return beta_; }
  int iterations() const { return iterations_; }
  // Log-likelihood after each accepted Newton step (entry 0: starting point).
  const std::vector<double>& loglik_path() const { return loglik_; }

 private:
  Vector beta_;
  bool converged_;
  int iterations_;
  std::vector<double> loglik_;
};

class ClippedModel final : public FittedModel {
 public:
  ClippedModel(ModelPtr inner, double clip) : inner_(std::move(inner)), clip_(clip) {}
  double predict_row(const RowRef& row) const override;
  Vector predict(const Matrix& x) const override;
  bool converged() const override { return inner_->converged(); }
  const FittedModel& inner() const { return *inner_; }

 private:
  ModelPtr inner_;
  double clip_;
};

LinearModel fit_ols(const Matrix& x, const Vector& y);
LinearModel fit_ridge(const Matrix& x, const Vector& y, double lambda);
RegressionTree fit_cart(const Matrix& x, const Vector& y, const CartSpec& spec);
GbmModel fit_gbm(const Matrix& x, const Vector& y, const GbmSpec& spec);
LogisticModel fit_logistic(const Matrix& x, const Vector& a, const LogisticSpec& spec);

ModelPtr fit_regression(const RegressionLearnerSpec& spec, const Matrix& x, const Vector& y);

// Known propensity with no constant cannot be fit from (x, a) alone; the
// cross-fitting layer reads the dataset column directly in that case.
ModelPtr fit_propensity(const PropensityLearnerSpec& spec, const Matrix& x, const Vector& a);

void validate_spec(const RegressionLearnerSpec& spec);
void validate_spec(const PropensityLearnerSpec& spec);

}  // namespace ssls
