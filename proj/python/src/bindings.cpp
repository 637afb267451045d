#include <map>
#include <optional>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ssls/cli.hpp"
#include "ssls/distributions.hpp"
#include "ssls/inference.hpp"
#include "ssls/simulation.hpp"
#include "ssls/ssls.hpp"

namespace py = pybind11;
using namespace ssls;

namespace {

// Dense 1..G labels from arbitrary integers, in ascending order.
Grouping dense_grouping(const std::vector<long>& raw, std::vector<long>* levels) {
  std::map<long, int> index;
  for (long v : raw) index.emplace(v, 0);
  int next = 1;
  for (auto& [v, label] : index) {
    label = next++;
    levels->push_back(v);
  }
  Grouping g;
  g.n_groups = static_cast<int>(index.size());
  for (long v : raw) g.labels.push_back(index.at(v));
  return g;
}

py::dict estimate(const Vector& y, const Vector& a, const Matrix& x, const std::vector<long>& groups,
                  const std::string& learner_y, const std::string& learner_e, std::optional<Vector> propensity,
                  int folds, int repeats, bool stratified, std::uint64_t seed, double alpha, double clip,
                  int workers) {
  Dataset d;
  d.y = y;
  d.a = a;
  d.x = x;
  std::vector<long> levels;
  const Grouping g = dense_grouping(groups, &levels);
  SslsConfig cfg;
  cfg.regression = cli::parse_regression_learner(nlohmann::json(learner_y));
  if (propensity) {
    d.known_propensity = *propensity;
    cfg.propensity.kind = KnownPropensitySpec{};
    cfg.propensity.clip = clip;
  } else {
    cfg.propensity = cli::parse_propensity_learner(nlohmann::json(learner_e), clip);
  }
  cfg.plan.n_folds = folds;
  cfg.plan.repeats = repeats;
  cfg.plan.stratified = stratified;
  cfg.plan.seed = seed;
  cfg.alpha = alpha;
  cfg.workers = workers;

  GroupEffects ge;
  {
    py::gil_scoped_release release;
    ge = repeated_ssls(d, g, cfg);
  }
  const InferenceReport rep = infer(ge, Vector::Zero(ge.n_groups()), alpha);
  Vector ci_lo(ge.n_groups()), ci_hi(ge.n_groups()), sim_lo(ge.n_groups()), sim_hi(ge.n_groups()),
      p(ge.n_groups());
  for (int k = 0; k < ge.n_groups(); ++k) {
    const auto& t = rep.groups[static_cast<std::size_t>(k)];
    ci_lo(k) = t.ci_lo;
    ci_hi(k) = t.ci_hi;
    sim_lo(k) = t.ci_simul_lo;
    sim_hi(k) = t.ci_simul_hi;
    p(k) = t.p_value;
  }
  py::dict out;
  out["groups"] = levels;
  out["tau_hat"] = ge.tau_hat;
  out["se"] = ge.standard_errors();
  out["sigma_gg_hat"] = ge.sigma_gg_hat;
  out["n_g"] = ge.n_g;
  out["n_effective"] = ge.n_effective;
  out["p_value"] = p;
  out["ci_lo"] = ci_lo;
  out["ci_hi"] = ci_hi;
  out["ci_simul_lo"] = sim_lo;
  out["ci_simul_hi"] = sim_hi;
  out["q_crit"] = rep.q_crit;
  return out;
}

py::dict dgp1(Index n, double sigma_a, double sigma_y, std::uint64_t seed) {
  Dgp1Config cfg;
  cfg.n = n;
  cfg.sigma_a = sigma_a;
  cfg.sigma_y = sigma_y;
  cfg.seed = seed;
  const Dgp1Draw draw = draw_dgp1(cfg);
  py::dict out;
  out["y"] = draw.data.y;
  out["a"] = draw.data.a;
  out["x"] = draw.data.x;
  out["group"] = draw.grouping.labels;
  out["tau"] = draw.truth.tau;
  out["propensity"] = draw.truth.e;
  out["outcome_mean"] = draw.truth.m;
  return out;
}

py::dict glh(const Vector& tau_hat, const Matrix& sigma, double n, const Matrix& k, const Vector& m0, double alpha) {
  const GlhResult r = glh_test(tau_hat, sigma, n, Contrast{k, m0}, alpha);
  py::dict out;
  out["statistic"] = r.statistic;
  out["df"] = r.df;
  out["p_value"] = r.p_value;
  out["critical"] = r.critical;
  out["reject"] = r.reject;
  return out;
}

}  // namespace

PYBIND11_MODULE(_ssls, m) {
  m.doc() = "Groupwise treatment effects by sample splitting least squares";

  static py::exception<Error> error(m, "SslsError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
    }
  });

  m.def("normal_cdf", &normal_cdf, py::arg("x"));
  m.def("normal_quantile", &normal_quantile, py::arg("p"));
  m.def("chisq_cdf", &chisq_cdf, py::arg("x"), py::arg("k"));
  m.def("maxt_critical", &maxt_critical, py::arg("alpha"), py::arg("n_groups"));
  m.def("power_min_n", &power_min_n, py::arg("z_tilde"), py::arg("alpha") = 0.05, py::arg("power") = 0.8);
  m.def("estimate", &estimate, py::arg("y"), py::arg("a"), py::arg("x"), py::arg("groups"),
        py::arg("learner_y") = "gbm", py::arg("learner_e") = "gbm", py::arg("propensity") = py::none(),
        py::arg("folds") = 2, py::arg("repeats") = 1, py::arg("stratified") = true, py::arg("seed") = 0,
        py::arg("alpha") = 0.05, py::arg("clip") = 0.01, py::arg("workers") = 1,
        "Cross-fitted groupwise effects with pointwise and simultaneous intervals.");
  m.def("draw_dgp1", &dgp1, py::arg("n") = 1000, py::arg("sigma_a") = 0.0, py::arg("sigma_y") = 0.0,
        py::arg("seed") = 0, "Four-group logistic design with optional group random effects.");
  m.def("glh_test", &glh, py::arg("tau_hat"), py::arg("sigma"), py::arg("n"), py::arg("k"), py::arg("m0"),
        py::arg("alpha") = 0.05);
}
