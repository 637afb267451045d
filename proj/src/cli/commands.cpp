#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "ssls/cli.hpp"
#include "ssls/clustering.hpp"
#include "ssls/diagnostics.hpp"
#include "ssls/inference.hpp"
#include "ssls/simulation.hpp"
#include "ssls/ssls.hpp"

namespace ssls::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- settings: defaults <- JSON config file <- flags ------------------------

json defaults() {
  return json{
      {"data", ""},          {"outcome", ""},      {"treatment", ""},      {"group", ""},
      {"covariates", ""},    {"propensity", ""},   {"learner_y", "gbm"},   {"learner_e", "gbm"},
      {"clip", 0.01},        {"folds", 2},         {"repeats", 1},         {"stratified", true},
      {"alpha", 0.05},       {"seed", 0},          {"out_dir", "."},       {"contrast", ""},
      {"workers", 1},        {"bandwidth", 0.05},  {"grid_size", 200},     {"multiplier", 2.0},
      {"diag_covariates", ""},
      {"clusters", 2},       {"min_group_size", default_min_group_size()}, {"restarts", 10},
      {"kmeans_max_iter", 100}, {"standardize", true},
      {"study", ""},         {"reps", 0},          {"n", 0},               {"learners", "oracle,cart,gbm"},
      {"sigmas", "0:0"},     {"distances", ""},    {"n_grid", "5000"},
      {"ztilde", 0.0},       {"power", 0.8},
  };
}

class Flags {
 public:
  explicit Flags(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* add(const std::string& names, const std::string& key, const std::string& help) {
    auto store = std::make_shared<T>();
    CLI::Option* opt = app_->add_option(names, *store, help);
    setters_.push_back([opt, store, key](json& j) {
      if (opt->count() > 0) j[key] = *store;
    });
    return opt;
  }

  void add_bool(const std::string& names, const std::string& key, const std::string& help) {
    auto store = std::make_shared<bool>(true);
    CLI::Option* opt = app_->add_flag(names, *store, help);
    setters_.push_back([opt, store, key](json& j) {
      if (opt->count() > 0) j[key] = *store;
    });
  }

  json collect() const {
    json j = json::object();
    for (const auto& s : setters_) s(j);
    return j;
  }

 private:
  CLI::App* app_;
  std::vector<std::function<void(json&)>> setters_;
};

struct Settings {
  json merged;
  json user;  // config file and flags only

  template <class T>
  T get(const std::string& key) const {
    try {
      return merged.at(key).get<T>();
    } catch (const json::exception&) {
      throw Error(ErrorKind::InvalidArgument, "setting \"" + key + "\" has the wrong type");
    }
  }
  bool given(const std::string& key) const { return user.contains(key); }
};

Settings resolve(const std::string& config_path, const json& flags) {
  Settings s;
  s.user = json::object();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw Error(ErrorKind::InvalidArgument, "cannot open config \"" + config_path + "\"");
    try {
      s.user = json::parse(in);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::InvalidArgument, std::string("config is not valid JSON: ") + e.what());
    }
    if (!s.user.is_object()) throw Error(ErrorKind::InvalidArgument, "config must be a JSON object");
    const json known = defaults();
    for (const auto& [k, v] : s.user.items()) {
      if (!known.contains(k)) throw Error(ErrorKind::InvalidArgument, "unknown config key \"" + k + "\"");
    }
  }
  s.user.merge_patch(flags);
  s.merged = defaults();
  s.merged.merge_patch(s.user);
  return s;
}

std::vector<std::string> split_list(const json& v) {
  std::vector<std::string> out;
  if (v.is_array()) {
    for (const auto& e : v) out.push_back(e.is_string() ? e.get<std::string>() : e.dump());
    return out;
  }
  const std::string s = v.is_string() ? v.get<std::string>() : v.dump();
  std::size_t pos = 0;
  while (pos <= s.size()) {
    auto comma = s.find(',', pos);
    if (comma == std::string::npos) comma = s.size();
    std::string item = s.substr(pos, comma - pos);
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    pos = comma + 1;
  }
  return out;
}

std::vector<double> number_list(const json& v, const std::string& what) {
  std::vector<double> out;
  for (const auto& s : split_list(v)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(s, &used));
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidArgument, what + ": \"" + s + "\" is not a number");
    }
  }
  return out;
}

double check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::DomainError, "alpha must lie in (0,1)");
  return alpha;
}

// ---- output helpers -----------------------------------------------------------

class CsvWriter {
 public:
  explicit CsvWriter(const fs::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw Error(ErrorKind::InvalidArgument, "cannot write \"" + path.string() + "\"");
  }
  CsvWriter& row(std::initializer_list<std::string> cells) {
    bool first = true;
    for (const auto& c : cells) {
      if (!first) out_ << ',';
      out_ << quote(c);
      first = false;
    }
    out_ << '\n';
    return *this;
  }

 private:
  static std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  }
  std::ofstream out_;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write \"" + path.string() + "\"");
  out << j.dump(2) << '\n';
}

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

fs::path prepare_out_dir(const Settings& s) {
  const fs::path dir = s.get<std::string>("out_dir");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::InvalidArgument, "cannot create output directory \"" + dir.string() + "\"");
  return dir;
}

// Effective settings echoed into reports; fields that must not change output
// bytes (paths, worker count) are left out.
json echo(const Settings& s, std::initializer_list<const char*> keys) {
  json out = json::object();
  for (const char* k : keys) out[k] = s.merged.at(k);
  return out;
}

// ---- estimation pipeline shared by estimate / diagnose / discover ----------------

struct Inputs {
  BoundData bound;
  SslsConfig cfg;
};

Inputs load_inputs(const Settings& s, bool with_group) {
  const std::string data = s.get<std::string>("data");
  if (data.empty()) throw Error(ErrorKind::InvalidArgument, "no input data given (--data)");
  const Table table = read_csv(data);

  Bindings b;
  b.outcome = s.get<std::string>("outcome");
  b.treatment = s.get<std::string>("treatment");
  if (with_group) b.group = s.get<std::string>("group");
  b.covariates = split_list(s.merged.at("covariates"));

  const std::string prop = s.get<std::string>("propensity");
  std::optional<double> prop_constant;
  if (!prop.empty()) {
    try {
      std::size_t used = 0;
      const double v = std::stod(prop, &used);
      if (used == prop.size()) prop_constant = v;
    } catch (const std::exception&) {
    }
    if (!prop_constant) b.propensity_column = prop;
  }

  Inputs in;
  in.bound = bind(table, b);
  if (in.bound.data.n_covariates() == 0) {
    throw Error(ErrorKind::InvalidArgument, "no covariate columns (--covariates)");
  }

  SslsConfig& cfg = in.cfg;
  cfg.regression = parse_regression_learner(s.merged.at("learner_y"));
  const double clip = s.get<double>("clip");
  if (!prop.empty()) {
    if (s.given("learner_e") &&
        !std::holds_alternative<KnownPropensitySpec>(parse_propensity_learner(s.merged.at("learner_e"), clip).kind)) {
      throw Error(ErrorKind::InvalidArgument,
                  "--propensity supplies the propensity; drop --learner-e or set it to known");
    }
    cfg.propensity.kind = KnownPropensitySpec{prop_constant};
    cfg.propensity.clip = clip;
    validate_spec(cfg.propensity);
  } else {
    cfg.propensity = parse_propensity_learner(s.merged.at("learner_e"), clip);
    if (const auto* k = std::get_if<KnownPropensitySpec>(&cfg.propensity.kind); k && !k->constant) {
      throw Error(ErrorKind::InvalidArgument, "known propensity needs --propensity (column or constant)");
    }
  }
  cfg.plan.n_folds = s.get<int>("folds");
  cfg.plan.repeats = s.get<int>("repeats");
  cfg.plan.stratified = s.get<bool>("stratified") && !b.group.empty();
  cfg.plan.seed = s.get<std::uint64_t>("seed");
  cfg.alpha = check_alpha(s.get<double>("alpha"));
  cfg.workers = s.get<int>("workers");
  if (cfg.plan.n_folds < 2) throw Error(ErrorKind::InvalidArgument, "--folds must be >= 2");
  if (cfg.plan.repeats < 1) throw Error(ErrorKind::InvalidArgument, "--repeats must be >= 1");
  if (cfg.workers < 1) throw Error(ErrorKind::InvalidArgument, "--workers must be >= 1");
  return in;
}

json residual_summary(const GroupEffects& ge, int g) {
  double sum = 0.0;
  double sq = 0.0;
  double lo = INFINITY;
  double hi = -INFINITY;
  Index n = 0;
  for (std::size_t i = 0; i < ge.labels.size(); ++i) {
    if (ge.labels[i] != g + 1) continue;
    const double e = ge.residuals(static_cast<Index>(i));
    sum += e;
    sq += e * e;
    lo = std::min(lo, e);
    hi = std::max(hi, e);
    ++n;
  }
  const double mean = n > 0 ? sum / static_cast<double>(n) : NAN;
  const double var = n > 1 ? (sq - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1) : NAN;
  return json{{"mean", num(mean)}, {"sd", num(var > 0.0 ? std::sqrt(var) : 0.0)}, {"min", num(lo)}, {"max", num(hi)}};
}

json effects_json(const GroupEffects& ge, const std::vector<std::string>& names, double alpha,
                  const std::optional<ContrastFile>& contrast) {
  const InferenceReport rep = infer(ge, Vector::Zero(ge.n_groups()), alpha);
  json groups = json::array();
  for (int g = 0; g < ge.n_groups(); ++g) {
    const auto& t = rep.groups[static_cast<std::size_t>(g)];
    groups.push_back(json{
        {"g", g + 1},
        {"label", names[static_cast<std::size_t>(g)]},
        {"n_g", ge.n_g[static_cast<std::size_t>(g)]},
        {"tau_hat", num(ge.tau_hat(g))},
        {"sigma_gg_hat", num(ge.sigma_gg_hat(g))},
        {"se", num(ge.se(g))},
        {"t_stat", num(t.t_stat)},
        {"p_value", num(t.p_value)},
        {"ci", {num(t.ci_lo), num(t.ci_hi)}},
        {"ci_simultaneous", {num(t.ci_simul_lo), num(t.ci_simul_hi)}},
        {"reject", t.reject_pointwise},
        {"reject_simultaneous", t.reject_simul},
        {"residual_summary", residual_summary(ge, g)},
    });
  }
  json out{{"n_effective", ge.n_effective},
           {"n_groups", ge.n_groups()},
           {"alpha", alpha},
           {"z_crit", num(rep.z_crit)},
           {"q_crit", num(rep.q_crit)},
           {"outcome_oof_mse", num(ge.outcome_oof_mse)},
           {"groups", groups}};
  if (ge.n_groups() >= 2) {
    json pairs = json::array();
    for (const auto& p : all_pairwise(ge, alpha)) {
      pairs.push_back(json{{"g", p.g + 1},
                           {"g2", p.g2 + 1},
                           {"diff", num(p.diff)},
                           {"se", num(p.se)},
                           {"z", num(p.z)},
                           {"p_value", num(p.p_value)},
                           {"crit_simultaneous", num(p.crit_simul)},
                           {"reject", p.reject},
                           {"reject_simultaneous", p.reject_simul}});
    }
    out["pairwise"] = pairs;
  }
  if (contrast) {
    const GlhResult r = glh_test(ge, Contrast{contrast->k, contrast->m0}, alpha);
    out["glh"] = json{{"statistic", num(r.statistic)},
                      {"df", r.df},
                      {"p_value", num(r.p_value)},
                      {"critical", num(r.critical)},
                      {"reject", r.reject}};
  }
  return out;
}

void write_groups_csv(const fs::path& path, const GroupEffects& ge, const std::vector<std::string>& names,
                      double alpha) {
  const InferenceReport rep = infer(ge, Vector::Zero(ge.n_groups()), alpha);
  CsvWriter w(path);
  w.row({"g", "label", "n_g", "tau_hat", "se", "t_stat", "p_value", "ci_lo", "ci_hi", "ci_simul_lo",
         "ci_simul_hi", "reject", "reject_simul"});
  for (int g = 0; g < ge.n_groups(); ++g) {
    const auto& t = rep.groups[static_cast<std::size_t>(g)];
    w.row({std::to_string(g + 1), names[static_cast<std::size_t>(g)],
           std::to_string(ge.n_g[static_cast<std::size_t>(g)]), g6(ge.tau_hat(g)), g6(ge.se(g)), g6(t.t_stat),
           g6(t.p_value), g6(t.ci_lo), g6(t.ci_hi), g6(t.ci_simul_lo), g6(t.ci_simul_hi),
           t.reject_pointwise ? "1" : "0", t.reject_simul ? "1" : "0"});
  }
}

// Residual CSVs for the chosen covariates; returns the flag summary.
json write_residuals(const fs::path& dir, const std::string& stem, const GroupEffects& ge, const BoundData& b,
                     const std::vector<std::string>& covariates, const Settings& s) {
  const double h = s.get<double>("bandwidth");
  const int grid = s.get<int>("grid_size");
  const double mult = s.get<double>("multiplier");
  CsvWriter raw(dir / (stem + "_raw.csv"));
  CsvWriter smooth(dir / (stem + "_smooth.csv"));
  raw.row({"row", "covariate", "x", "residual", "arm", "group"});
  smooth.row({"covariate", "arm", "x_grid", "curve", "local_n", "flagged"});
  json summary = json::array();
  for (const auto& name : covariates) {
    const auto it = std::find(b.covariates.begin(), b.covariates.end(), name);
    if (it == b.covariates.end()) {
      throw Error(ErrorKind::InvalidArgument, "diagnostic covariate \"" + name + "\" is not a bound covariate");
    }
    const Index col = static_cast<Index>(it - b.covariates.begin());
    const auto series = residual_series(ge, b.data, col, h, grid);
    json arms = json::array();
    for (const auto& rs : series) {
      for (Index i = 0; i < rs.x.size(); ++i) {
        raw.row({std::to_string(rs.rows[static_cast<std::size_t>(i)] + 1), name, g6(rs.x(i)), g6(rs.residuals(i)),
                 std::to_string(rs.arm), std::to_string(rs.labels[static_cast<std::size_t>(i)])});
      }
      const auto flags = flag_regions(rs, mult);
      std::vector<char> flagged(static_cast<std::size_t>(rs.grid.size()), 0);
      json intervals = json::array();
      for (const auto& f : flags) {
        for (int j = f.first; j <= f.last; ++j) flagged[static_cast<std::size_t>(j)] = 1;
        intervals.push_back({num(f.lo), num(f.hi)});
      }
      for (Index j = 0; j < rs.grid.size(); ++j) {
        smooth.row({name, std::to_string(rs.arm), g6(rs.grid(j)), g6(rs.smooth(j)), g6(rs.local_n(j)),
                    flagged[static_cast<std::size_t>(j)] ? "1" : "0"});
      }
      arms.push_back(json{{"arm", rs.arm},
                          {"pooled_sd", num(rs.pooled_sd)},
                          {"flagged", intervals},
                          {"flagged_fraction", num(flagged_fraction(rs, flags))}});
    }
    summary.push_back(json{{"covariate", name}, {"bandwidth", h}, {"multiplier", mult}, {"arms", arms}});
  }
  return summary;
}

std::optional<ContrastFile> load_contrast(const Settings& s, int n_groups) {
  const std::string path = s.get<std::string>("contrast");
  if (path.empty()) return std::nullopt;
  return read_contrast(path, n_groups);
}

int cmd_estimate(const Settings& s, bool diagnose) {
  const Inputs in = load_inputs(s, true);
  const auto contrast = load_contrast(s, in.bound.grouping.n_groups);
  const fs::path dir = prepare_out_dir(s);
  const GroupEffects ge = repeated_ssls(in.bound.data, in.bound.grouping, in.cfg);

  std::vector<std::string> diag_covs = split_list(s.merged.at("diag_covariates"));
  if (diag_covs.empty()) {
    if (diagnose) {
      diag_covs = in.bound.covariates;
    } else {
      diag_covs = {in.bound.covariates.front()};
    }
  }
  json report{{"command", diagnose ? "diagnose" : "estimate"},
              {"settings", echo(s, {"outcome", "treatment", "group", "propensity", "clip", "folds", "repeats",
                                    "stratified", "alpha", "seed", "bandwidth", "grid_size", "multiplier"})},
              {"n", in.bound.data.size()},
              {"covariates", in.bound.covariates},
              {"group_labels", in.bound.group_values},
              {"learners", {{"outcome", describe(in.cfg.regression)}, {"propensity", describe(in.cfg.propensity)}}},
              {"stratified", in.cfg.plan.stratified}};
  report["effects"] = effects_json(ge, in.bound.group_values, in.cfg.alpha, contrast);
  report["diagnostics"] = write_residuals(dir, "residuals", ge, in.bound, diag_covs, s);
  write_groups_csv(dir / "groups.csv", ge, in.bound.group_values, in.cfg.alpha);
  write_json(dir / "report.json", report);
  if (diagnose) write_json(dir / "flags.json", report["diagnostics"]);

  for (int g = 0; g < ge.n_groups(); ++g) {
    std::printf("group %s: tau_hat=%s se=%s\n", in.bound.group_values[static_cast<std::size_t>(g)].c_str(),
                g6(ge.tau_hat(g)).c_str(), g6(ge.se(g)).c_str());
  }
  return kOk;
}

int cmd_discover(const Settings& s) {
  const Inputs in = load_inputs(s, false);
  const fs::path dir = prepare_out_dir(s);
  KMeansSpec ks;
  ks.n_clusters = s.get<int>("clusters");
  ks.max_iter = s.get<int>("kmeans_max_iter");
  ks.n_restarts = s.get<int>("restarts");
  ks.min_group_size = s.get<Index>("min_group_size");
  ks.standardize = s.get<bool>("standardize");
  ks.seed = in.cfg.plan.seed;
  SslsConfig cfg = in.cfg;
  cfg.plan.stratified = s.get<bool>("stratified");
  const DsslsResult res = estimate_dssls(in.bound.data, ks, cfg);

  std::vector<std::string> names;
  for (int g = 1; g <= res.grouping.n_groups; ++g) names.push_back(std::to_string(g));

  {
    CsvWriter w(dir / "grouping.csv");
    w.row({"row", "role", "group"});
    std::vector<std::pair<Index, std::pair<std::string, int>>> rows;
    for (std::size_t i = 0; i < res.clustering_rows.size(); ++i) {
      rows.push_back({res.clustering_rows[i], {"cluster", res.clusterer->train_labels[i]}});
    }
    for (std::size_t i = 0; i < res.estimation_rows.size(); ++i) {
      rows.push_back({res.estimation_rows[i], {"estimate", res.grouping.labels[i]}});
    }
    std::sort(rows.begin(), rows.end());
    for (const auto& [r, rg] : rows) w.row({std::to_string(r + 1), rg.first, std::to_string(rg.second)});
  }
  const Matrix centroids = res.clusterer->raw_centroids();
  {
    std::vector<std::string> cells{"group"};
    for (const auto& c : in.bound.covariates) cells.push_back(c);
    std::ofstream out(dir / "centroids.csv", std::ios::binary);
    for (std::size_t j = 0; j < cells.size(); ++j) out << (j ? "," : "") << cells[j];
    out << '\n';
    for (Index g = 0; g < centroids.rows(); ++g) {
      out << g + 1;
      for (Index j = 0; j < centroids.cols(); ++j) out << ',' << g6(centroids(g, j));
      out << '\n';
    }
  }
  json cents = json::array();
  for (Index g = 0; g < centroids.rows(); ++g) {
    json row = json::array();
    for (Index j = 0; j < centroids.cols(); ++j) row.push_back(num(centroids(g, j)));
    cents.push_back(row);
  }
  std::vector<std::string> diag_covs = split_list(s.merged.at("diag_covariates"));
  if (diag_covs.empty()) diag_covs = {in.bound.covariates.front()};

  json report{{"command", "discover"},
              {"settings", echo(s, {"outcome", "treatment", "propensity", "clip", "folds", "repeats", "stratified",
                                    "alpha", "seed", "clusters", "min_group_size", "restarts", "standardize"})},
              {"n", in.bound.data.size()},
              {"n_clustering", res.clustering_rows.size()},
              {"n_estimation", res.estimation_rows.size()},
              {"covariates", in.bound.covariates},
              {"learners", {{"outcome", describe(cfg.regression)}, {"propensity", describe(cfg.propensity)}}},
              {"centroids", cents},
              {"kmeans_inertia", num(res.clusterer->inertia)}};
  report["effects"] = effects_json(res.effects, names, cfg.alpha, load_contrast(s, res.grouping.n_groups));
  report["diagnostics"] = write_residuals(dir, "residuals", res.effects, in.bound, diag_covs, s);
  write_groups_csv(dir / "groups.csv", res.effects, names, cfg.alpha);
  write_json(dir / "report.json", report);
  for (int g = 0; g < res.effects.n_groups(); ++g) {
    std::printf("group %d: n=%ld tau_hat=%s se=%s\n", g + 1,
                static_cast<long>(res.effects.n_g[static_cast<std::size_t>(g)]), g6(res.effects.tau_hat(g)).c_str(),
                g6(res.effects.se(g)).c_str());
  }
  return kOk;
}

NuisanceChoice choice_named(const std::string& name) {
  if (name == "oracle") return oracle_choice();
  if (name == "cart") return cart_choice();
  if (name == "gbm") return gbm_choice();
  throw Error(ErrorKind::InvalidArgument, "unknown study learner \"" + name + "\" (oracle, cart, gbm)");
}

int reps_or(const Settings& s, int fallback) {
  const int r = s.get<int>("reps");
  return r > 0 ? r : fallback;
}

Index n_or(const Settings& s, Index fallback) {
  const Index n = s.get<Index>("n");
  return n > 0 ? n : fallback;
}

void write_series(const fs::path& dir, const std::string& tag, const GroupEffects& ge, const Dataset& d,
                  double h, int grid) {
  const auto series = residual_series(ge, d, 0, h, grid);
  for (const auto& rs : series) {
    CsvWriter raw(dir / ("residuals_" + tag + "_a" + std::to_string(rs.arm) + ".csv"));
    raw.row({"x", "residual", "arm", "group"});
    for (Index i = 0; i < rs.x.size(); ++i) {
      raw.row({g6(rs.x(i)), g6(rs.residuals(i)), std::to_string(rs.arm),
               std::to_string(rs.labels[static_cast<std::size_t>(i)])});
    }
    CsvWriter sm(dir / ("smooth_" + tag + "_a" + std::to_string(rs.arm) + ".csv"));
    sm.row({"x_grid", "curve", "arm"});
    for (Index j = 0; j < rs.grid.size(); ++j) sm.row({g6(rs.grid(j)), g6(rs.smooth(j)), std::to_string(rs.arm)});
  }
}

int cmd_simulate(const Settings& s) {
  const std::string study = s.get<std::string>("study");
  const std::uint64_t seed = s.get<std::uint64_t>("seed");
  const int workers = s.get<int>("workers");
  const double alpha = check_alpha(s.get<double>("alpha"));
  if (workers < 1) throw Error(ErrorKind::InvalidArgument, "--workers must be >= 1");
  if (study != "table1" && study != "power" && study != "theorem5" && study != "diagnostic" && study != "dssls") {
    throw Error(ErrorKind::InvalidArgument,
                "unknown study \"" + study + "\" (table1, power, theorem5, diagnostic, dssls)");
  }
  const fs::path dir = prepare_out_dir(s);

  if (study == "table1") {
    Table1Config cfg;
    for (const auto& l : split_list(s.merged.at("learners"))) cfg.learners.push_back(choice_named(l));
    cfg.sigmas.clear();
    for (const auto& pair : split_list(s.merged.at("sigmas"))) {
      const auto colon = pair.find(':');
      if (colon == std::string::npos) {
        throw Error(ErrorKind::InvalidArgument, "--sigmas entries look like sigma_a:sigma_y, got \"" + pair + "\"");
      }
      const auto a = number_list(json(pair.substr(0, colon)), "--sigmas");
      const auto y = number_list(json(pair.substr(colon + 1)), "--sigmas");
      cfg.sigmas.emplace_back(a.at(0), y.at(0));
    }
    cfg.n = n_or(s, 1000);
    cfg.reps = reps_or(s, 500);
    cfg.alpha = alpha;
    cfg.seed = seed;
    cfg.workers = workers;
    const auto results = run_table1_study(cfg);
    CsvWriter w(dir / "table1.csv");
    w.row({"learner", "sigma_a", "sigma_y", "n", "reps", "bias_x10", "ese_ase", "coverage"});
    CsvWriter wg(dir / "table1_groups.csv");
    wg.row({"learner", "sigma_a", "sigma_y", "group", "bias", "ese", "ase", "ese_ase"});
    for (const auto& r : results) {
      w.row({r.learner, g6(r.sigma_a), g6(r.sigma_y), std::to_string(r.n), std::to_string(r.reps),
             g6(10.0 * r.bias(0)), g6(r.ratio(0)), g6(r.coverage)});
      for (Index g = 0; g < r.bias.size(); ++g) {
        wg.row({r.learner, g6(r.sigma_a), g6(r.sigma_y), std::to_string(g + 1), g6(r.bias(g)), g6(r.ese(g)),
                g6(r.ase(g)), g6(r.ratio(g))});
      }
      std::printf("%s sigma_a=%s sigma_y=%s: 10xbias=%s ese/ase=%s coverage=%s\n", r.learner.c_str(),
                  g6(r.sigma_a).c_str(), g6(r.sigma_y).c_str(), g6(10.0 * r.bias(0)).c_str(), g6(r.ratio(0)).c_str(),
                  g6(r.coverage).c_str());
    }
  } else if (study == "power") {
    PowerConfig cfg;
    cfg.distances = number_list(s.merged.at("distances"), "--distances");
    cfg.reps = reps_or(s, 200);
    cfg.n = n_or(s, 1000);
    const auto learners = split_list(s.merged.at("learners"));
    cfg.learner = choice_named(s.given("learners") ? learners.at(0) : "oracle");
    cfg.alpha = alpha;
    cfg.seed = seed;
    cfg.workers = workers;
    CsvWriter w(dir / "power.csv");
    w.row({"distance", "power", "reps"});
    for (const auto& p : run_power_study(cfg)) {
      w.row({g6(p.distance), g6(p.power), std::to_string(p.reps)});
      std::printf("distance=%s power=%s\n", g6(p.distance).c_str(), g6(p.power).c_str());
    }
  } else if (study == "theorem5") {
    Theorem5Config cfg;
    cfg.n_grid.clear();
    for (double n : number_list(s.merged.at("n_grid"), "--n-grid")) cfg.n_grid.push_back(static_cast<Index>(n));
    cfg.reps = reps_or(s, 500);
    cfg.seed = seed;
    cfg.workers = workers;
    CsvWriter w(dir / "theorem5.csv");
    w.row({"propensity", "n", "group", "bias", "mc_se", "bias_over_mc_se"});
    for (bool negative : {false, true}) {
      cfg.negative_control = negative;
      for (const auto& row : run_theorem5_study(cfg)) {
        for (Index g = 0; g < row.bias.size(); ++g) {
          w.row({negative ? "non_constant" : "constant", std::to_string(row.n), std::to_string(g + 1),
                 g6(row.bias(g)), g6(row.mc_se(g)), g6(row.bias(g) / row.mc_se(g))});
        }
        std::printf("%s propensity, n=%ld: bias(tau_1)=%s (%s MC SE)\n", negative ? "non-constant" : "constant",
                    static_cast<long>(row.n), g6(row.bias(0)).c_str(), g6(row.bias(0) / row.mc_se(0)).c_str());
      }
    }
  } else if (study == "diagnostic") {
    DiagStudyConfig cfg;
    cfg.n = n_or(s, 10000);
    cfg.bandwidth = s.get<double>("bandwidth");
    cfg.grid_size = s.get<int>("grid_size");
    cfg.multiplier = s.get<double>("multiplier");
    cfg.reps = reps_or(s, 1);
    cfg.seed = seed;
    cfg.workers = workers;

    // One illustrative draw for the four residual files.
    DgpDiagConfig dc;
    dc.n = cfg.n;
    dc.seed = seed;
    const DiagDraw draw = draw_dgp_diag(dc);
    SslsConfig sc;
    sc.regression = cfg.regression;
    sc.propensity = cfg.propensity;
    sc.plan.seed = seed;
    const NuisanceFit nf = crossfit_nuisance(draw.data, sc);
    for (bool mis : {false, true}) {
      const GroupEffects ge = estimate_ssls(draw.data, diag_grouping(draw.data, mis), nf);
      write_series(dir, mis ? "Mw" : "M", ge, draw.data, cfg.bandwidth, cfg.grid_size);
    }
    const DiagStudyResult r = run_diag_study(cfg);
    CsvWriter w(dir / "diagnostic_study.csv");
    w.row({"rep", "correct_flagged_fraction", "misspecified_flagged_fraction", "misspecified_overlaps"});
    for (std::size_t i = 0; i < r.reps.size(); ++i) {
      w.row({std::to_string(i + 1), g6(r.reps[i].correct_flagged_fraction),
             g6(r.reps[i].misspecified_flagged_fraction), r.reps[i].misspecified_overlaps ? "1" : "0"});
    }
    std::printf("M_w flags overlap (0.25,0.75) in %s of reps; correct M flags < 5%% of the grid in %s of reps\n",
                g6(r.overlap_rate).c_str(), g6(r.clean_rate).c_str());
  } else {
    DsslsStudyConfig cfg;
    cfg.blob.n = n_or(s, 1500);
    cfg.reps = reps_or(s, 300);
    cfg.ssls.alpha = alpha;
    cfg.seed = seed;
    cfg.workers = workers;
    const DsslsStudyResult r = run_dssls_study(cfg);
    CsvWriter w(dir / "dssls.csv");
    w.row({"n", "reps", "coverage", "bias_g1", "bias_g2"});
    w.row({std::to_string(cfg.blob.n), std::to_string(r.reps), g6(r.coverage), g6(r.bias(0)),
           g6(r.bias.size() > 1 ? r.bias(1) : NAN)});
    std::printf("coverage=%s\n", g6(r.coverage).c_str());
  }
  return kOk;
}

int cmd_power(const Settings& s) {
  const double z = s.get<double>("ztilde");
  const double alpha = s.get<double>("alpha");
  const double power = s.get<double>("power");
  if (!(z > 0.0)) throw Error(ErrorKind::DomainError, "--ztilde must be > 0");
  if (!(power > 0.0 && power < 1.0)) throw Error(ErrorKind::DomainError, "--power must lie in (0,1)");
  check_alpha(alpha);
  const Index n = power_min_n(z, alpha, power);
  std::printf("min_n=%ld ztilde=%s alpha=%s power=%s\n", static_cast<long>(n), g6(z).c_str(), g6(alpha).c_str(),
              g6(power).c_str());
  return kOk;
}

void add_data_flags(Flags& f, bool with_group) {
  f.add<std::string>("--data", "data", "input CSV with a header row");
  f.add<std::string>("--outcome", "outcome", "outcome column");
  f.add<std::string>("--treatment", "treatment", "0/1 treatment column");
  if (with_group) f.add<std::string>("--group", "group", "group column (any labels; relabeled to 1..G)");
  f.add<std::string>("--covariates", "covariates", "comma-separated covariate columns (default: all others)");
  f.add<std::string>("--propensity", "propensity", "known propensity: column name or constant");
  f.add<std::string>("--learner-y", "learner_y", "outcome learner, e.g. gbm:n_trees=100,shrinkage=0.1");
  f.add<std::string>("--learner-e", "learner_e", "propensity learner: logistic, cart, gbm, known");
  f.add<double>("--clip", "clip", "propensity clipping level");
  f.add<int>("--folds", "folds", "cross-fitting folds");
  f.add<int>("--repeats", "repeats", "repeated splits (median aggregation)");
  f.add_bool("--stratified,!--no-stratified", "stratified", "stratify folds by group (default on)");
  f.add<std::string>("--contrast", "contrast", "CSV of contrast rows K with a trailing m0 column");
  f.add<std::string>("--diag-covariates", "diag_covariates", "covariates for residual diagnostics");
  f.add<double>("--bandwidth", "bandwidth", "diagnostic kernel bandwidth");
  f.add<int>("--grid-size", "grid_size", "diagnostic grid points");
  f.add<double>("--multiplier", "multiplier", "flag threshold in local standard errors");
}

void add_common_flags(Flags& f) {
  f.add<double>("--alpha", "alpha", "significance level");
  f.add<std::uint64_t>("--seed", "seed", "random seed");
  f.add<std::string>("--out-dir", "out_dir", "output directory");
  f.add<int>("--workers", "workers", "worker threads");
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Groupwise treatment effects by sample splitting least squares"};
  app.name("ssls");
  app.require_subcommand(1);
  std::string config_path;

  struct Sub {
    CLI::App* app;
    std::unique_ptr<Flags> flags;
  };
  std::map<std::string, Sub> subs;
  auto make = [&](const std::string& name, const std::string& help) -> Flags& {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON settings file (flags take precedence)");
    auto& entry = subs[name];
    entry.app = sub;
    entry.flags = std::make_unique<Flags>(sub);
    return *entry.flags;
  };

  {
    Flags& f = make("estimate", "estimate groupwise effects for a given grouping");
    add_data_flags(f, true);
    add_common_flags(f);
  }
  {
    Flags& f = make("diagnose", "estimate, then residual diagnostics for every covariate");
    add_data_flags(f, true);
    add_common_flags(f);
  }
  {
    Flags& f = make("discover", "fit groups by k-means on a third of the data, estimate on the rest");
    add_data_flags(f, false);
    add_common_flags(f);
    f.add<int>("--clusters", "clusters", "number of groups");
    f.add<Index>("--min-group-size", "min_group_size", "smallest admissible group");
    f.add<int>("--restarts", "restarts", "k-means restarts");
    f.add<int>("--kmeans-max-iter", "kmeans_max_iter", "Lloyd iterations per restart");
    f.add_bool("--standardize,!--no-standardize", "standardize", "standardize covariates before clustering");
  }
  {
    Flags& f = make("simulate", "run a simulation study");
    add_common_flags(f);
    f.add<std::string>("--study", "study", "table1, power, theorem5, diagnostic or dssls")->required();
    f.add<int>("--reps", "reps", "Monte-Carlo repetitions");
    f.add<Index>("--n", "n", "sample size per dataset");
    f.add<std::string>("--learners", "learners", "comma-separated: oracle, cart, gbm");
    f.add<std::string>("--sigmas", "sigmas", "random-effect cells, e.g. 0:0,1:0");
    f.add<std::string>("--distances", "distances", "power-curve distances (default k/25, k=0..50)");
    f.add<std::string>("--n-grid", "n_grid", "sample sizes for the theorem5 study");
    f.add<double>("--bandwidth", "bandwidth", "diagnostic kernel bandwidth");
    f.add<int>("--grid-size", "grid_size", "diagnostic grid points");
    f.add<double>("--multiplier", "multiplier", "flag threshold in local standard errors");
  }
  {
    Flags& f = make("power", "minimum per-group size for a t-test");
    f.add<double>("--ztilde", "ztilde", "standardized effect tau_g / sqrt(Sigma_gg)")->required();
    f.add<double>("--alpha", "alpha", "significance level");
    f.add<double>("--power", "power", "target power");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  try {
    for (auto& [name, sub] : subs) {
      if (!sub.app->parsed()) continue;
      const Settings s = resolve(config_path, sub.flags->collect());
      if (name == "estimate") return cmd_estimate(s, false);
      if (name == "diagnose") return cmd_estimate(s, true);
      if (name == "discover") return cmd_discover(s);
      if (name == "simulate") return cmd_simulate(s);
      if (name == "power") return cmd_power(s);
    }
    return kInputError;
  } catch (const Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", to_string(e.kind()), e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kInternal;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args);
}

}  // namespace ssls::cli
