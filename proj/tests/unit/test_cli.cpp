#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <json.hpp>

#include "helpers.hpp"
#include "ssls/cli.hpp"
#include "ssls/simulation.hpp"

using namespace ssls;
using testing::error_kind;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("ssls_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

void write(const std::string& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "ssls");
  return cli::run(args);
}

std::size_t lines(const std::string& path) {
  const std::string s = slurp(path);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

void write_dgp1_csv(const std::string& path, Index n, std::uint64_t seed) {
  Dgp1Config cfg;
  cfg.n = n;
  cfg.seed = seed;
  const Dgp1Draw draw = draw_dgp1(cfg);
  std::ofstream out(path);
  out.precision(17);
  out << "y,a,g,x1,x2,x3,x4,x5\n";
  for (Index i = 0; i < n; ++i) {
    out << draw.data.y(i) << ',' << draw.data.a(i) << ",grp" << draw.grouping.labels[static_cast<std::size_t>(i)];
    for (Index j = 0; j < 5; ++j) out << ',' << draw.data.x(i, j);
    out << '\n';
  }
}

void write_blob_csv(const std::string& path, std::uint64_t seed) {
  BlobConfig cfg;
  cfg.n = 600;
  cfg.separation = 10.0;
  cfg.seed = seed;
  const BlobDraw draw = draw_blobs(cfg);
  std::ofstream out(path);
  out.precision(17);
  out << "y,a,x1,x2\n";
  for (Index i = 0; i < cfg.n; ++i) {
    out << draw.data.y(i) << ',' << draw.data.a(i) << ',' << draw.data.x(i, 0) << ',' << draw.data.x(i, 1) << '\n';
  }
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("csv parsing") {
    std::istringstream in("a,\"b,c\",d\r\n1,\"say \"\"hi\"\"\",3\r\n\r\n4,5,6");
    const cli::Table t = cli::parse_csv(in);
    CHECK(t.header == std::vector<std::string>{"a", "b,c", "d"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][1] == "say \"hi\"");
    CHECK(t.rows[1][2] == "6");
    CHECK(t.column("d") == 2);
    CHECK(error_kind([&] { t.column("zz"); }) == ErrorKind::InvalidArgument);

    std::istringstream ragged("a,b\n1\n");
    CHECK(error_kind([&] { cli::parse_csv(ragged); }) == ErrorKind::LengthMismatch);
    std::istringstream open("a\n\"x\n");
    CHECK(error_kind([&] { cli::parse_csv(open); }).has_value());
  }

  TEST_CASE("binding reports the row and column of bad cells") {
    std::istringstream in("y,a,x,g\n1,0,0.5,a\n2,,0.1,b\n");
    const cli::Table t = cli::parse_csv(in);
    try {
      cli::bind(t, {"y", "a", "g", {}, {}});
      FAIL("expected an error");
    } catch (const Error& e) {
      const std::string msg = e.what();
      CHECK(msg.find("row 2") != std::string::npos);
      CHECK(msg.find("\"a\"") != std::string::npos);
    }
    std::istringstream in2("y,a,x\n1,0,0.5\n2,3,0.1\n");
    CHECK(error_kind([&] { cli::bind(cli::parse_csv(in2), {"y", "a", "", {}, {}}); }) ==
          ErrorKind::NonBinaryTreatment);
    std::istringstream in3("y,a,x,p\n1,0,0.5,0.5\n2,1,0.1,1\n");
    CHECK(error_kind([&] { cli::bind(cli::parse_csv(in3), {"y", "a", "", {"x"}, "p"}); }) ==
          ErrorKind::PropensityOutOfRange);
  }

  TEST_CASE("binding relabels groups densely") {
    std::istringstream in("y,a,g,x\n1,0,10,1\n2,1,2,2\n3,0,10,3\n4,1,2,4\n");
    const cli::BoundData b = cli::bind(cli::parse_csv(in), {"y", "a", "g", {}, {}});
    CHECK(b.group_values == std::vector<std::string>{"2", "10"});
    CHECK(b.grouping.labels == std::vector<int>{2, 1, 2, 1});
    CHECK(b.covariates == std::vector<std::string>{"x"});
    CHECK(cli::dense_levels({"b", "a", "c", "a"}) == std::vector<std::string>{"a", "b", "c"});
  }

  TEST_CASE("learner specifications") {
    const auto gbm = cli::parse_regression_learner(nlohmann::json("gbm:n_trees=50,shrinkage=0.2"));
    REQUIRE(std::holds_alternative<GbmSpec>(gbm));
    CHECK(std::get<GbmSpec>(gbm).n_trees == 50);
    CHECK(std::get<GbmSpec>(gbm).shrinkage == 0.2);
    CHECK(std::get<GbmSpec>(gbm).max_depth == 2);

    const auto ridge = cli::parse_regression_learner(nlohmann::json{{"kind", "ridge"}, {"lambda", 3}});
    CHECK(std::get<RidgeSpec>(ridge).lambda == 3.0);

    const auto known = cli::parse_propensity_learner(nlohmann::json("known:constant=0.4"), 0.05);
    CHECK(std::get<KnownPropensitySpec>(known.kind).constant == 0.4);
    CHECK(known.clip == 0.05);

    CHECK(error_kind([] { cli::parse_regression_learner(nlohmann::json("gbm:depth=3")); }) ==
          ErrorKind::InvalidArgument);
    CHECK(error_kind([] { cli::parse_regression_learner(nlohmann::json("forest")); }) == ErrorKind::InvalidArgument);
    CHECK(error_kind([] { cli::parse_regression_learner(nlohmann::json("cart:max_depth=2.5")); }).has_value());
    CHECK(error_kind([] { cli::parse_regression_learner(nlohmann::json("gbm:shrinkage=0")); }).has_value());
  }

  TEST_CASE("contrast files") {
    TempDir dir;
    write(dir / "k.csv", "k1,k2,m0\n1,-1,0\n0,1,2\n");
    const cli::ContrastFile c = cli::read_contrast(dir / "k.csv", 2);
    CHECK(c.k.rows() == 2);
    CHECK(c.k(0, 1) == -1.0);
    CHECK(c.m0(1) == 2.0);
    write(dir / "k2.csv", "1,-1,0\n");
    CHECK(cli::read_contrast(dir / "k2.csv", 2).k.rows() == 1);
    CHECK(error_kind([&] { cli::read_contrast(dir / "k2.csv", 3); }) == ErrorKind::LengthMismatch);
  }

  TEST_CASE("estimate on an eight-row fixture") {
    TempDir dir;
    const std::vector<double> y{1.0, 2.5, 0.3, 4.0, 2.2, 3.1, 0.9, 5.0};
    const std::vector<double> a{1, 0, 0, 1, 1, 0, 1, 0};
    const std::vector<double> x{0.1, 0.7, 0.2, 0.9, 0.4, 0.5, 0.3, 0.8};
    std::ostringstream csv;
    csv << "y,a,x,p\n";
    for (int i = 0; i < 8; ++i) csv << y[i] << ',' << a[i] << ',' << x[i] << ",0.5\n";
    write(dir / "toy.csv", csv.str());

    REQUIRE(run({"estimate", "--data", dir / "toy.csv", "--outcome", "y", "--treatment", "a", "--covariates", "x",
                 "--propensity", "p", "--learner-y", "ols", "--seed", "3", "--out-dir", dir / "out"}) == cli::kOk);
    for (const char* f : {"report.json", "groups.csv", "residuals_raw.csv", "residuals_smooth.csv"}) {
      CHECK(fs::exists(dir.path / "out" / f));
    }
    const auto report = nlohmann::json::parse(slurp(dir / "out/report.json"));
    const double tau = report["effects"]["groups"][0]["tau_hat"].get<double>();

    // Independent oracle: simple-regression fits on each training fold.
    CrossFitPlan plan;
    plan.seed = 3;
    const FoldAssignment folds = make_crossfit_plan(8, plan);
    std::vector<double> resid(8);
    for (int k = 0; k < 2; ++k) {
      double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
      for (int i = 0; i < 8; ++i) {
        if (folds.fold_of[static_cast<std::size_t>(i)] == k) continue;
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
        n += 1;
      }
      const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
      const double icpt = (sy - slope * sx) / n;
      for (int i = 0; i < 8; ++i) {
        if (folds.fold_of[static_cast<std::size_t>(i)] == k) resid[i] = y[i] - icpt - slope * x[i];
      }
    }
    double treated = 0, control = 0;
    for (int i = 0; i < 8; ++i) (a[i] == 1 ? treated : control) += resid[i] / 4.0;
    CHECK(tau == doctest::Approx(treated - control).epsilon(1e-10));
    CHECK(report["effects"]["groups"][0]["n_g"] == 8);
    CHECK(report["stratified"] == false);
  }

  TEST_CASE("estimate errors map to exit codes") {
    TempDir dir;
    write_dgp1_csv(dir / "d.csv", 200, 1);
    CHECK(run({"estimate", "--data", dir / "d.csv", "--outcome", "y", "--treatment", "nope", "--out-dir", dir / "o"}) ==
          cli::kInputError);
    CHECK(run({"estimate", "--data", dir / "missing.csv", "--outcome", "y", "--treatment", "a"}) == cli::kInputError);
    CHECK(run({"estimate", "--data", dir / "d.csv", "--outcome", "y", "--treatment", "a", "--group", "g", "--alpha", "1.5"}) ==
          cli::kInputError);
    CHECK(run({"estimate", "--bogus"}) == cli::kInputError);
    CHECK(run({}) == cli::kInputError);
  }

  TEST_CASE("repeated estimates are byte-identical") {
    TempDir dir;
    write_dgp1_csv(dir / "d.csv", 400, 2);
    write(dir / "k.csv", "1,-1,0,0,0\n0,0,1,-1,0\n");
    for (const char* out : {"r1", "r2"}) {
      REQUIRE(run({"estimate", "--data", dir / "d.csv", "--outcome", "y", "--treatment", "a", "--group", "g",
                   "--learner-e", "logistic", "--repeats", "5", "--seed", "7", "--contrast", dir / "k.csv",
                   "--out-dir", dir / out}) == cli::kOk);
    }
    CHECK(slurp(dir / "r1/report.json") == slurp(dir / "r2/report.json"));
    CHECK(slurp(dir / "r1/groups.csv") == slurp(dir / "r2/groups.csv"));
    const auto report = nlohmann::json::parse(slurp(dir / "r1/report.json"));
    CHECK(report["effects"]["glh"]["df"] == 2);
    CHECK(report["effects"]["pairwise"].size() == 6);
    CHECK(report["group_labels"][0] == "grp1");
    CHECK(lines(dir / "r1/groups.csv") == 5);
  }

  TEST_CASE("config file precedence") {
    TempDir dir;
    write_dgp1_csv(dir / "d.csv", 300, 3);
    write(dir / "c.json", R"({"folds": 3, "learner_y": {"kind": "ridge", "lambda": 2}, "learner_e": "logistic"})");
    const std::vector<std::string> base{"estimate", "--config", dir / "c.json", "--data", dir / "d.csv", "--outcome",
                                        "y", "--treatment", "a", "--group", "g"};
    auto with = [&](std::vector<std::string> extra, const std::string& out) {
      std::vector<std::string> args = base;
      args.insert(args.end(), extra.begin(), extra.end());
      args.push_back("--out-dir");
      args.push_back(dir / out);
      return run(args);
    };
    REQUIRE(with({}, "c") == cli::kOk);
    auto report = nlohmann::json::parse(slurp(dir / "c/report.json"));
    CHECK(report["settings"]["folds"] == 3);
    CHECK(report["learners"]["outcome"] == "ridge(lambda=2)");
    REQUIRE(with({"--folds", "4"}, "f") == cli::kOk);
    report = nlohmann::json::parse(slurp(dir / "f/report.json"));
    CHECK(report["settings"]["folds"] == 4);

    write(dir / "bad.json", R"({"fold": 3})");
    CHECK(run({"estimate", "--config", dir / "bad.json", "--data", dir / "d.csv", "--outcome", "y", "--treatment",
               "a"}) == cli::kInputError);
  }

  TEST_CASE("diagnose writes flags for every covariate") {
    TempDir dir;
    write_dgp1_csv(dir / "d.csv", 300, 4);
    REQUIRE(run({"diagnose", "--data", dir / "d.csv", "--outcome", "y", "--treatment", "a", "--group", "g",
                 "--learner-e", "logistic", "--out-dir", dir / "o"}) == cli::kOk);
    const auto flags = nlohmann::json::parse(slurp(dir / "o/flags.json"));
    CHECK(flags.size() == 5);
    CHECK(flags[0]["arms"].size() == 2);
  }

  TEST_CASE("discover") {
    TempDir dir;
    write_blob_csv(dir / "b.csv", 5);
    for (const char* out : {"d1", "d2"}) {
      REQUIRE(run({"discover", "--data", dir / "b.csv", "--outcome", "y", "--treatment", "a", "--learner-e",
                   "logistic", "--seed", "3", "--out-dir", dir / out}) == cli::kOk);
    }
    CHECK(slurp(dir / "d1/grouping.csv") == slurp(dir / "d2/grouping.csv"));
    CHECK(lines(dir / "d1/grouping.csv") == 601);
    CHECK(lines(dir / "d1/centroids.csv") == 3);
    const auto report = nlohmann::json::parse(slurp(dir / "d1/report.json"));
    CHECK(report["n_estimation"] == 400);
    CHECK(report["effects"]["n_effective"] == 400);

    CHECK(run({"discover", "--data", dir / "b.csv", "--outcome", "y", "--treatment", "a", "--clusters", "6",
               "--min-group-size", "60", "--out-dir", dir / "d3"}) == cli::kGateFailure);
  }

  TEST_CASE("simulate") {
    TempDir dir;
    REQUIRE(run({"simulate", "--study", "table1", "--learners", "oracle", "--reps", "2", "--n", "200", "--out-dir",
                 dir / "t"}) == cli::kOk);
    CHECK(lines(dir / "t/table1.csv") == 2);
    REQUIRE(run({"simulate", "--study", "power", "--distances", "0,1,2", "--reps", "4", "--n", "200", "--out-dir",
                 dir / "p"}) == cli::kOk);
    CHECK(lines(dir / "p/power.csv") == 4);
    REQUIRE(run({"simulate", "--study", "diagnostic", "--reps", "1", "--n", "1000", "--out-dir", dir / "d"}) ==
            cli::kOk);
    for (const char* f : {"residuals_M_a0.csv", "residuals_M_a1.csv", "residuals_Mw_a0.csv", "residuals_Mw_a1.csv"}) {
      CHECK(fs::exists(dir.path / "d" / f));
    }
    CHECK(run({"simulate", "--study", "nope", "--out-dir", dir / "x"}) == cli::kInputError);
    CHECK(run({"simulate", "--study", "table1", "--learners", "forest", "--out-dir", dir / "x"}) == cli::kInputError);
  }

  TEST_CASE("power") {
    CHECK(run({"power", "--ztilde", "1"}) == cli::kOk);
    CHECK(run({"power", "--ztilde", "0"}) == cli::kInputError);
    CHECK(run({"power", "--ztilde", "1", "--power", "1"}) == cli::kInputError);
  }

  TEST_CASE("exit codes by error kind") {
    CHECK(cli::exit_code_for(ErrorKind::GroupTooSmall) == cli::kGateFailure);
    CHECK(cli::exit_code_for(ErrorKind::OneArmOnly) == cli::kGateFailure);
    CHECK(cli::exit_code_for(ErrorKind::NonBinaryTreatment) == cli::kInputError);
    CHECK(cli::exit_code_for(ErrorKind::NotSPD) == cli::kInternal);
    CHECK(cli::g6(1.0 / 3.0) == "0.333333");
    CHECK(cli::g6(std::nan("")) == "NA");
  }
}
