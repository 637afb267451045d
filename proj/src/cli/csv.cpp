#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ssls/cli.hpp"

namespace ssls::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::optional<double> parse_number(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string where(std::size_t row, const std::string& col) {
  return " (row " + std::to_string(row + 1) + ", column \"" + col + "\")";
}

Vector numeric_column(const Table& t, const std::string& name) {
  const std::size_t c = t.column(name);
  Vector out(static_cast<Index>(t.rows.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const std::string& cell = t.rows[i][c];
    if (trim(cell).empty()) {
      throw Error(ErrorKind::NonFinite, "missing value" + where(i, name), static_cast<long>(i),
                  static_cast<long>(c));
    }
    const auto v = parse_number(cell);
    if (!v || !std::isfinite(*v)) {
      throw Error(ErrorKind::NonFinite, "not a finite number: \"" + cell + "\"" + where(i, name),
                  static_cast<long>(i), static_cast<long>(c));
    }
    out(static_cast<Index>(i)) = *v;
  }
  return out;
}

}  // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::GroupTooSmall:
    case ErrorKind::OneArmOnly:
    case ErrorKind::ClusteringDegenerate:
    case ErrorKind::DegenerateGroup:
      return kGateFailure;
    case ErrorKind::SingularGram:
    case ErrorKind::NotSPD:
      return kInternal;
    default:
      return kInputError;
  }
}

std::size_t Table::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    throw Error(ErrorKind::InvalidArgument, "column \"" + name + "\" not found in header");
  }
  return static_cast<std::size_t>(it - header.begin());
}

Table parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool any = false;
  char ch = 0;
  auto end_record = [&] {
    record.push_back(field);
    field.clear();
    const bool blank = record.size() == 1 && trim(record[0]).empty();
    if (!blank) records.push_back(std::move(record));
    record.clear();
    any = false;
  };
  while (in.get(ch)) {
    any = true;
    if (quoted) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get(ch);
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      record.push_back(field);
      field.clear();
    } else if (ch == '\n') {
      end_record();
    } else if (ch != '\r') {
      field.push_back(ch);
    }
  }
  if (quoted) throw Error(ErrorKind::InvalidArgument, "unterminated quoted field");
  if (any || !field.empty() || !record.empty()) end_record();
  if (records.empty()) throw Error(ErrorKind::InvalidArgument, "CSV has no header row");

  Table t;
  for (auto& h : records.front()) t.header.push_back(trim(h));
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != t.header.size()) {
      throw Error(ErrorKind::LengthMismatch,
                  "row " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                      " fields, header has " + std::to_string(t.header.size()),
                  static_cast<long>(r - 1));
    }
    t.rows.push_back(std::move(records[r]));
  }
  return t;
}

Table read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::InvalidArgument, "cannot open \"" + path + "\"");
  return parse_csv(in);
}

std::vector<std::string> dense_levels(const std::vector<std::string>& values) {
  std::set<std::string> unique;
  for (const auto& v : values) unique.insert(trim(v));
  std::vector<std::string> levels(unique.begin(), unique.end());
  const bool numeric = std::all_of(levels.begin(), levels.end(),
                                   [](const std::string& s) { return parse_number(s).has_value(); });
  if (numeric) {
    std::stable_sort(levels.begin(), levels.end(), [](const std::string& a, const std::string& b) {
      return *parse_number(a) < *parse_number(b);
    });
  }
  return levels;
}

BoundData bind(const Table& t, const Bindings& b) {
  if (t.rows.empty()) throw Error(ErrorKind::TooFewSamples, "CSV has a header but no data rows");
  if (b.outcome.empty()) throw Error(ErrorKind::InvalidArgument, "no outcome column given (--outcome)");
  if (b.treatment.empty()) throw Error(ErrorKind::InvalidArgument, "no treatment column given (--treatment)");

  BoundData out;
  out.covariates = b.covariates;
  if (out.covariates.empty()) {
    for (const auto& h : t.header) {
      if (h != b.outcome && h != b.treatment && h != b.group && h != b.propensity_column) {
        out.covariates.push_back(h);
      }
    }
  }
  const Index n = static_cast<Index>(t.rows.size());
  auto& d = out.data;
  d.y = numeric_column(t, b.outcome);
  d.a = numeric_column(t, b.treatment);
  for (Index i = 0; i < n; ++i) {
    if (d.a(i) != 0.0 && d.a(i) != 1.0) {
      throw Error(ErrorKind::NonBinaryTreatment,
                  "treatment must be 0 or 1, got " + t.rows[static_cast<std::size_t>(i)][t.column(b.treatment)] +
                      where(static_cast<std::size_t>(i), b.treatment),
                  static_cast<long>(i), static_cast<long>(t.column(b.treatment)));
    }
  }
  d.x.resize(n, static_cast<Index>(out.covariates.size()));
  for (std::size_t j = 0; j < out.covariates.size(); ++j) {
    d.x.col(static_cast<Index>(j)) = numeric_column(t, out.covariates[j]);
  }
  if (!b.propensity_column.empty()) {
    const Vector p = numeric_column(t, b.propensity_column);
    for (Index i = 0; i < n; ++i) {
      if (!(p(i) > 0.0 && p(i) < 1.0)) {
        throw Error(ErrorKind::PropensityOutOfRange,
                    "propensity must lie strictly in (0,1)" + where(static_cast<std::size_t>(i), b.propensity_column),
                    static_cast<long>(i), static_cast<long>(t.column(b.propensity_column)));
      }
    }
    d.known_propensity = p;
  }

  auto& g = out.grouping;
  g.source = GroupingSource::FixedRule;
  g.labels.assign(static_cast<std::size_t>(n), 1);
  if (b.group.empty()) {
    g.n_groups = 1;
    out.group_values = {"all"};
  } else {
    const std::size_t c = t.column(b.group);
    std::vector<std::string> raw;
    raw.reserve(t.rows.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      if (trim(t.rows[i][c]).empty()) {
        throw Error(ErrorKind::InvalidArgument, "missing group label" + where(i, b.group), static_cast<long>(i),
                    static_cast<long>(c));
      }
      raw.push_back(trim(t.rows[i][c]));
    }
    out.group_values = dense_levels(raw);
    std::map<std::string, int> index;
    for (std::size_t k = 0; k < out.group_values.size(); ++k) index[out.group_values[k]] = static_cast<int>(k) + 1;
    for (std::size_t i = 0; i < raw.size(); ++i) g.labels[i] = index.at(raw[i]);
    g.n_groups = static_cast<int>(out.group_values.size());
  }
  validate_dataset(d, g);
  return out;
}

ContrastFile read_contrast(const std::string& path, int n_groups) {
  const std::string text = [&] {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::InvalidArgument, "cannot open contrast file \"" + path + "\"");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }();
  std::istringstream in(text);
  Table t = parse_csv(in);
  // parse_csv treats the first line as a header; put it back when it is numeric.
  std::vector<std::vector<std::string>> rows;
  const bool header_numeric = std::all_of(t.header.begin(), t.header.end(),
                                          [](const std::string& s) { return parse_number(s).has_value(); });
  if (header_numeric) rows.push_back(t.header);
  for (auto& r : t.rows) rows.push_back(r);
  if (rows.empty()) throw Error(ErrorKind::InvalidArgument, "contrast file has no rows");

  ContrastFile c;
  c.k.resize(static_cast<Index>(rows.size()), n_groups);
  c.m0.resize(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != static_cast<std::size_t>(n_groups) + 1) {
      throw Error(ErrorKind::LengthMismatch,
                  "contrast row " + std::to_string(r + 1) + " needs " + std::to_string(n_groups + 1) +
                      " values (G coefficients and m0)",
                  static_cast<long>(r));
    }
    for (std::size_t j = 0; j < rows[r].size(); ++j) {
      const auto v = parse_number(rows[r][j]);
      if (!v || !std::isfinite(*v)) {
        throw Error(ErrorKind::NonFinite, "contrast row " + std::to_string(r + 1) + " has a non-numeric entry",
                    static_cast<long>(r), static_cast<long>(j));
      }
      if (j < static_cast<std::size_t>(n_groups)) {
        c.k(static_cast<Index>(r), static_cast<Index>(j)) = *v;
      } else {
        c.m0(static_cast<Index>(r)) = *v;
      }
    }
  }
  return c;
}

std::string g6(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace ssls::cli
