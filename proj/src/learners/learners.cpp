#include <algorithm>
#include <sstream>

#include "ssls/learners.hpp"

namespace ssls {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_cart(const CartSpec& s) {
  if (s.max_depth < 1 || s.min_leaf < 1) {
    throw Error(ErrorKind::InvalidArgument, "cart: max_depth and min_leaf must be >= 1");
  }
  if (!(s.cp >= 0.0 && s.cp < 1.0)) throw Error(ErrorKind::InvalidArgument, "cart: cp must lie in [0,1)");
}

void check_gbm(const GbmSpec& s) {
  if (s.n_trees < 1 || s.max_depth < 1 || s.min_leaf < 1) {
    throw Error(ErrorKind::InvalidArgument, "gbm: n_trees, max_depth and min_leaf must be >= 1");
  }
  if (!(s.shrinkage > 0.0 && s.shrinkage <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "gbm: shrinkage must lie in (0,1]");
  }
}

Index min_rows(const RegressionLearnerSpec& spec) {
  return std::visit(Overloaded{
                        [](const CartSpec& s) { return 2 * static_cast<Index>(s.min_leaf); },
                        [](const GbmSpec& s) { return 2 * static_cast<Index>(s.min_leaf); },
                        [](const OracleSpec&) { return Index{1}; },
                        [](const auto&) { return Index{4}; },
                    },
                    spec);
}

bool both_arms(const Vector& a) {
  bool zero = false;
  bool one = false;
  for (Index i = 0; i < a.size(); ++i) (a(i) == 1.0 ? one : zero) = true;
  return zero && one;
}

}  // namespace

Vector FittedModel::predict(const Matrix& x) const {
  Vector out(x.rows());
  Eigen::RowVectorXd row(x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    row = x.row(i);
    out(i) = predict_row(row);
  }
  return out;
}

Vector ConstantModel::predict(const Matrix& x) const { return Vector::Constant(x.rows(), value_); }

double ClippedModel::predict_row(const RowRef& row) const {
  return std::clamp(inner_->predict_row(row), clip_, 1.0 - clip_);
}

Vector ClippedModel::predict(const Matrix& x) const {
  return inner_->predict(x).cwiseMax(clip_).cwiseMin(1.0 - clip_);
}

std::string describe(const RegressionLearnerSpec& spec) {
  std::ostringstream os;
  std::visit(Overloaded{
                 [&](const OlsSpec&) { os << "ols"; },
                 [&](const RidgeSpec& s) { os << "ridge(lambda=" << s.lambda << ")"; },
                 [&](const CartSpec& s) {
                   os << "cart(max_depth=" << s.max_depth << ",min_leaf=" << s.min_leaf << ",cp=" << s.cp << ")";
                 },
                 [&](const GbmSpec& s) {
                   os << "gbm(n_trees=" << s.n_trees << ",max_depth=" << s.max_depth
                      << ",shrinkage=" << s.shrinkage << ",min_leaf=" << s.min_leaf << ")";
                 },
                 [&](const OracleSpec&) { os << "oracle"; },
             },
             spec);
  return os.str();
}

std::string describe(const PropensityLearnerSpec& spec) {
  std::ostringstream os;
  std::visit(Overloaded{
                 [&](const LogisticSpec& s) {
                   os << "logistic(max_iter=" << s.max_iter << ",tol=" << s.tol << ")";
                 },
                 [&](const CartProbSpec& s) {
                   os << "cart(max_depth=" << s.tree.max_depth << ",min_leaf=" << s.tree.min_leaf
                      << ",cp=" << s.tree.cp << ")";
                 },
                 [&](const GbmProbSpec& s) {
                   os << "gbm(n_trees=" << s.gbm.n_trees << ",max_depth=" << s.gbm.max_depth
                      << ",shrinkage=" << s.gbm.shrinkage << ",min_leaf=" << s.gbm.min_leaf << ")";
                 },
                 [&](const KnownPropensitySpec& s) {
                   if (s.constant) {
                     os << "known(" << *s.constant << ")";
                   } else {
                     os << "known(column)";
                   }
                 },
                 [&](const OraclePropensitySpec&) { os << "oracle"; },
             },
             spec.kind);
  os << ",clip=" << spec.clip;
  return os.str();
}

void validate_spec(const RegressionLearnerSpec& spec) {
  std::visit(Overloaded{
                 [](const RidgeSpec& s) {
                   if (!(s.lambda >= 0.0)) {
                     throw Error(ErrorKind::InvalidArgument, "ridge: lambda must be >= 0");
                   }
                 },
                 [](const CartSpec& s) { check_cart(s); },
                 [](const GbmSpec& s) { check_gbm(s); },
                 [](const OracleSpec& s) {
                   if (!s.f) throw Error(ErrorKind::InvalidArgument, "oracle: missing function");
                 },
                 [](const OlsSpec&) {},
             },
             spec);
}

void validate_spec(const PropensityLearnerSpec& spec) {
  if (!(spec.clip > 0.0 && spec.clip < 0.5)) {
    throw Error(ErrorKind::InvalidArgument, "propensity clip must lie in (0, 0.5)");
  }
  std::visit(Overloaded{
                 [](const LogisticSpec& s) {
                   if (s.max_iter < 1 || !(s.tol > 0.0)) {
                     throw Error(ErrorKind::InvalidArgument, "logistic: bad max_iter or tol");
                   }
                 },
                 [](const CartProbSpec& s) { check_cart(s.tree); },
                 [](const GbmProbSpec& s) { check_gbm(s.gbm); },
                 [](const KnownPropensitySpec& s) {
                   if (s.constant && !(*s.constant > 0.0 && *s.constant < 1.0)) {
                     throw Error(ErrorKind::PropensityOutOfRange,
                                 "known propensity constant outside (0,1)");
                   }
                 },
                 [](const OraclePropensitySpec& s) {
                   if (!s.f) throw Error(ErrorKind::InvalidArgument, "oracle: missing function");
                 },
             },
             spec.kind);
}

ModelPtr fit_regression(const RegressionLearnerSpec& spec, const Matrix& x, const Vector& y) {
  validate_spec(spec);
  if (x.rows() != y.size()) throw Error(ErrorKind::LengthMismatch, "x and y lengths differ");
  if (y.size() < min_rows(spec)) {
    throw Error(ErrorKind::TooFewSamples, "too few rows to fit " + describe(spec));
  }
  return std::visit(
      Overloaded{
          [&](const OlsSpec&) -> ModelPtr { return std::make_shared<LinearModel>(fit_ols(x, y)); },
          [&](const RidgeSpec& s) -> ModelPtr {
            return std::make_shared<LinearModel>(fit_ridge(x, y, s.lambda));
          },
          [&](const CartSpec& s) -> ModelPtr {
            return std::make_shared<RegressionTree>(fit_cart(x, y, s));
          },
          [&](const GbmSpec& s) -> ModelPtr {
            return std::make_shared<GbmModel>(fit_gbm(x, y, s));
          },
          [&](const OracleSpec& s) -> ModelPtr { return std::make_shared<OracleModel>(s.f); },
      },
      spec);
}

ModelPtr fit_propensity(const PropensityLearnerSpec& spec, const Matrix& x, const Vector& a) {
  validate_spec(spec);
  if (x.rows() != a.size()) throw Error(ErrorKind::LengthMismatch, "x and a lengths differ");
  const bool needs_both = std::holds_alternative<LogisticSpec>(spec.kind) ||
                          std::holds_alternative<CartProbSpec>(spec.kind) ||
                          std::holds_alternative<GbmProbSpec>(spec.kind);
  if (needs_both && !both_arms(a)) {
    throw Error(ErrorKind::OneArmOnly, "propensity training data contains a single arm");
  }
  ModelPtr inner = std::visit(
      Overloaded{
          [&](const LogisticSpec& s) -> ModelPtr {
            return std::make_shared<LogisticModel>(fit_logistic(x, a, s));
          },
          [&](const CartProbSpec& s) -> ModelPtr {
            return std::make_shared<RegressionTree>(fit_cart(x, a, s.tree));
          },
          [&](const GbmProbSpec& s) -> ModelPtr {
            return std::make_shared<GbmModel>(fit_gbm(x, a, s.gbm));
          },
          [&](const KnownPropensitySpec& s) -> ModelPtr {
            if (!s.constant) {
              throw Error(ErrorKind::InvalidArgument,
                          "known propensity column cannot be fit from covariates");
            }
            return std::make_shared<ConstantModel>(*s.constant);
          },
          [&](const OraclePropensitySpec& s) -> ModelPtr {
            return std::make_shared<OracleModel>(s.f);
          },
      },
      spec.kind);
  return std::make_shared<ClippedModel>(std::move(inner), spec.clip);
}

}  // namespace ssls
