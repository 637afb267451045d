#include <charconv>
#include <set>

#include "ssls/cli.hpp"

namespace ssls::cli {

namespace {

using nlohmann::json;

double number(const json& obj, const std::string& key, double fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number()) throw Error(ErrorKind::InvalidArgument, "learner parameter " + key + " must be a number");
  return v.get<double>();
}

int integer(const json& obj, const std::string& key, int fallback) {
  const double v = number(obj, key, fallback);
  if (v != static_cast<double>(static_cast<int>(v))) {
    throw Error(ErrorKind::InvalidArgument, "learner parameter " + key + " must be an integer");
  }
  return static_cast<int>(v);
}

void allow_only(const json& obj, std::set<std::string> keys) {
  keys.insert("kind");
  for (const auto& [k, v] : obj.items()) {
    if (!keys.count(k)) {
      throw Error(ErrorKind::InvalidArgument, "unknown parameter \"" + k + "\" for learner " +
                                                  obj.at("kind").get<std::string>());
    }
  }
}

json as_object(const json& j) {
  if (j.is_string()) return learner_json(j.get<std::string>());
  if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string()) {
    throw Error(ErrorKind::InvalidArgument, "learner must be a string or an object with a \"kind\"");
  }
  return j;
}

CartSpec cart(const json& o) {
  allow_only(o, {"max_depth", "min_leaf", "cp"});
  CartSpec s;
  s.max_depth = integer(o, "max_depth", s.max_depth);
  s.min_leaf = integer(o, "min_leaf", s.min_leaf);
  s.cp = number(o, "cp", s.cp);
  return s;
}

GbmSpec gbm(const json& o) {
  allow_only(o, {"n_trees", "max_depth", "shrinkage", "min_leaf"});
  GbmSpec s;
  s.n_trees = integer(o, "n_trees", s.n_trees);
  s.max_depth = integer(o, "max_depth", s.max_depth);
  s.shrinkage = number(o, "shrinkage", s.shrinkage);
  s.min_leaf = integer(o, "min_leaf", s.min_leaf);
  return s;
}

}  // namespace

json learner_json(const std::string& text) {
  json out = json::object();
  const auto colon = text.find(':');
  out["kind"] = text.substr(0, colon);
  if (colon == std::string::npos) return out;
  std::size_t pos = colon + 1;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    const std::string item = text.substr(pos, comma - pos);
    pos = comma + 1;
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::InvalidArgument, "learner parameter \"" + item + "\" is not key=value");
    }
    const std::string key = item.substr(0, eq);
    const std::string val = item.substr(eq + 1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(val.data(), val.data() + val.size(), v);
    if (ec != std::errc() || ptr != val.data() + val.size()) {
      throw Error(ErrorKind::InvalidArgument, "learner parameter " + key + " is not a number: " + val);
    }
    out[key] = v;
  }
  return out;
}

RegressionLearnerSpec parse_regression_learner(const json& j) {
  const json o = as_object(j);
  const auto kind = o.at("kind").get<std::string>();
  RegressionLearnerSpec spec;
  if (kind == "ols") {
    allow_only(o, {});
    spec = OlsSpec{};
  } else if (kind == "ridge") {
    allow_only(o, {"lambda"});
    spec = RidgeSpec{number(o, "lambda", RidgeSpec{}.lambda)};
  } else if (kind == "cart") {
    spec = cart(o);
  } else if (kind == "gbm") {
    spec = gbm(o);
  } else {
    throw Error(ErrorKind::InvalidArgument, "unknown outcome learner \"" + kind + "\" (ols, ridge, cart, gbm)");
  }
  validate_spec(spec);
  return spec;
}

PropensityLearnerSpec parse_propensity_learner(const json& j, double clip) {
  const json o = as_object(j);
  const auto kind = o.at("kind").get<std::string>();
  PropensityLearnerSpec spec;
  spec.clip = clip;
  if (kind == "logistic") {
    allow_only(o, {"max_iter", "tol"});
    LogisticSpec s;
    s.max_iter = integer(o, "max_iter", s.max_iter);
    s.tol = number(o, "tol", s.tol);
    spec.kind = s;
  } else if (kind == "cart") {
    spec.kind = CartProbSpec{cart(o)};
  } else if (kind == "gbm") {
    spec.kind = GbmProbSpec{gbm(o)};
  } else if (kind == "known") {
    allow_only(o, {"constant"});
    KnownPropensitySpec s;
    if (o.contains("constant")) s.constant = number(o, "constant", 0.5);
    spec.kind = s;
  } else {
    throw Error(ErrorKind::InvalidArgument,
                "unknown propensity learner \"" + kind + "\" (logistic, cart, gbm, known)");
  }
  validate_spec(spec);
  return spec;
}

}  // namespace ssls::cli
