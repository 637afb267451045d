#pragma once

// Command-line front end. Subcommands: estimate, discover, simulate,
// diagnose, power. Exit codes: 0 ok, 1 internal error, 2 input or config
// error, 3 statistical gate failure.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssls/core.hpp"
#include "ssls/learners.hpp"

namespace ssls::cli {

enum ExitCode { kOk = 0, kInternal = 1, kInputError = 2, kGateFailure = 3 };

int exit_code_for(ErrorKind kind);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header name; throws InvalidArgument naming the column.
  std::size_t column(const std::string& name) const;
};

// RFC 4180-style: comma separated, optional double quotes, "" escapes a quote.
Table parse_csv(std::istream& in);
Table read_csv(const std::string& path);

struct Bindings {
  std::string outcome;
  std::string treatment;
  std::string group;                    // empty: no group column (one group)
  std::vector<std::string> covariates;  // empty: every unbound column
  std::string propensity_column;        // empty: none
};

struct BoundData {
  Dataset data;
  Grouping grouping;
  std::vector<std::string> group_values;  // original value of dense label g at [g-1]
  std::vector<std::string> covariates;
};

// Parses and validates the bound columns. Missing or unparsable cells are
// errors naming the (1-based) data row and the column.
BoundData bind(const Table& t, const Bindings& b);

// Dense relabeling: numeric sort when every value parses as a number,
// lexicographic otherwise.
std::vector<std::string> dense_levels(const std::vector<std::string>& values);

// "gbm:n_trees=200,shrinkage=0.05" or {"kind": "gbm", "n_trees": 200}.
RegressionLearnerSpec parse_regression_learner(const nlohmann::json& j);
PropensityLearnerSpec parse_propensity_learner(const nlohmann::json& j, double clip);
nlohmann::json learner_json(const std::string& text);

// Rows of K followed by m0; a non-numeric first row is treated as a header.
struct ContrastFile {
  Matrix k;
  Vector m0;
};
ContrastFile read_contrast(const std::string& path, int n_groups);

// %.6g
std::string g6(double v);

int run(int argc, char** argv);
int run(const std::vector<std::string>& args);

}  // namespace ssls::cli
