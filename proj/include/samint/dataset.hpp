#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "samint/util.hpp"

namespace samint {

// In-memory design: covariate matrix plus response, with column names and
// per-row identifiers carried through for prediction exports.
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::string> feature_names;
  std::vector<std::string> row_ids;

  Eigen::Index n() const { return X.rows(); }
  int p() const { return static_cast<int>(X.cols()); }

  Dataset take_rows(const std::vector<Eigen::Index>& idx) const {
    Dataset out;
    out.feature_names = feature_names;
    out.X.resize(static_cast<Eigen::Index>(idx.size()), X.cols());
    out.y.resize(static_cast<Eigen::Index>(idx.size()));
    out.row_ids.reserve(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      out.X.row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
      out.y[static_cast<Eigen::Index>(i)] = y[idx[i]];
      out.row_ids.push_back(row_ids[static_cast<std::size_t>(idx[i])]);
    }
    return out;
  }
};

// Ingestion summary: what was dropped, imputed, or excluded.
struct LoadReport {
  long rows_total = 0;
  long rows_kept = 0;
  long rows_dropped_missing_response = 0;
  long cells_imputed = 0;
  std::vector<std::string> excluded_columns;
  std::map<std::string, long> imputed_by_column;

  std::string to_text() const {
    std::ostringstream os;
    os << "rows_total " << rows_total << "\n";
    os << "rows_kept " << rows_kept << "\n";
    os << "rows_dropped_missing_response " << rows_dropped_missing_response << "\n";
    os << "cells_imputed " << cells_imputed << "\n";
    os << "columns_excluded";
    for (const auto& c : excluded_columns) os << " " << c;
    os << "\n";
    for (const auto& [col, cnt] : imputed_by_column)
      os << "imputed " << col << " " << cnt << "\n";
    return os.str();
  }
};

namespace detail {

// Minimal RFC-4180 record reader: quoted fields may contain commas, doubled
// quotes escape a quote. Multi-line quoted fields are not supported.
inline std::vector<std::string> split_csv_record(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline bool is_missing_token(const std::string& s) { return s.empty() || s == "NA"; }

}  // namespace detail

// Loads a headered CSV. Rows with a missing response are dropped; missing
// covariate cells are imputed with the column mean over the loaded rows.
// Every kept column must parse as a finite number.
inline Dataset load_csv(const std::string& path, const std::string& response_column,
                        const std::vector<std::string>& exclude_columns,
                        LoadReport* report = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open data file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw DataError("empty data file: " + path);
  std::vector<std::string> header = detail::split_csv_record(line);
  if (!header.empty() && header[0].size() >= 3 &&
      static_cast<unsigned char>(header[0][0]) == 0xEF)
    header[0] = header[0].substr(3);  // strip UTF-8 BOM

  std::set<std::string> exclude(exclude_columns.begin(), exclude_columns.end());
  int response_idx = -1;
  std::vector<int> feature_idx;
  std::vector<std::string> feature_names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == response_column) {
      if (response_idx >= 0)
        throw DataError("duplicate response column '" + response_column + "'");
      response_idx = static_cast<int>(c);
    } else if (!exclude.count(header[c])) {
      feature_idx.push_back(static_cast<int>(c));
      feature_names.push_back(header[c]);
    }
  }
  if (response_idx < 0)
    throw DataError("response column '" + response_column + "' not found in " + path);
  if (feature_names.empty()) throw DataError("no covariate columns left after exclusion");

  LoadReport rep;
  rep.excluded_columns = exclude_columns;

  std::vector<double> ybuf;
  std::vector<std::vector<double>> cols(feature_names.size());
  std::vector<std::vector<std::pair<std::size_t, std::string>>> missing(feature_names.size());
  std::vector<std::string> row_ids;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    ++rep.rows_total;
    std::vector<std::string> fields = detail::split_csv_record(line);
    if (fields.size() != header.size())
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    const std::string& ytok = fields[static_cast<std::size_t>(response_idx)];
    if (detail::is_missing_token(ytok)) {
      ++rep.rows_dropped_missing_response;
      continue;
    }
    double yv;
    if (!parse_double_strict(ytok, &yv) || !std::isfinite(yv))
      throw DataError("line " + std::to_string(line_no) + ": bad response value '" +
                      ytok + "'");
    std::size_t r = ybuf.size();
    ybuf.push_back(yv);
    row_ids.push_back(std::to_string(line_no - 1));  // 1-based data row index
    for (std::size_t f = 0; f < feature_idx.size(); ++f) {
      const std::string& tok = fields[static_cast<std::size_t>(feature_idx[f])];
      if (detail::is_missing_token(tok)) {
        cols[f].push_back(0.0);
        missing[f].emplace_back(r, header[static_cast<std::size_t>(feature_idx[f])]);
      } else {
        double v;
        if (!parse_double_strict(tok, &v) || !std::isfinite(v))
          throw DataError("line " + std::to_string(line_no) + ", column '" +
                          feature_names[f] + "': bad value '" + tok + "'");
        cols[f].push_back(v);
      }
    }
  }
  if (ybuf.empty()) throw DataError("no usable rows in " + path);

  // Mean-impute missing covariate cells from the observed entries.
  for (std::size_t f = 0; f < cols.size(); ++f) {
    if (missing[f].empty()) continue;
    const auto n_obs = cols[f].size() - missing[f].size();
    if (n_obs == 0)
      throw DataError("column '" + feature_names[f] + "' has no observed values");
    double sum = 0.0;
    for (double v : cols[f]) sum += v;
    double mean = sum / static_cast<double>(n_obs);
    for (const auto& [r, name] : missing[f]) {
      cols[f][r] = mean;
      ++rep.cells_imputed;
      ++rep.imputed_by_column[name];
    }
  }

  Dataset data;
  data.feature_names = std::move(feature_names);
  data.row_ids = std::move(row_ids);
  data.y = Eigen::Map<Eigen::VectorXd>(ybuf.data(), static_cast<Eigen::Index>(ybuf.size()));
  data.X.resize(static_cast<Eigen::Index>(ybuf.size()),
                static_cast<Eigen::Index>(cols.size()));
  for (std::size_t f = 0; f < cols.size(); ++f)
    data.X.col(static_cast<Eigen::Index>(f)) =
        Eigen::Map<Eigen::VectorXd>(cols[f].data(), static_cast<Eigen::Index>(cols[f].size()));

  rep.rows_kept = static_cast<long>(ybuf.size());
  if (report) *report = rep;
  return data;
}

struct PredictionFrame {
  Eigen::MatrixXd X;  // columns in the requested feature order
  Eigen::VectorXd y;  // empty unless a response column was requested
  std::vector<std::string> row_ids;
  long rows_dropped_missing_response = 0;
  long cells_imputed = 0;
};

// Loads covariates by name (in the given order) for prediction-time use.
// Missing cells are imputed with the caller-supplied fill values (typically
// the training means); extra columns in the file are ignored. When
// response_column is nonempty it is extracted too, and rows missing it are
// dropped — matching training ingestion.
inline PredictionFrame load_prediction_frame(const std::string& path,
                                             const std::vector<std::string>& feature_names,
                                             const Eigen::VectorXd& fill_values,
                                             const std::string& response_column = "") {
  if (fill_values.size() != static_cast<Eigen::Index>(feature_names.size()))
    throw UsageError("fill value count does not match feature count");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open data file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw DataError("empty data file: " + path);
  std::vector<std::string> header = detail::split_csv_record(line);
  if (!header.empty() && header[0].size() >= 3 &&
      static_cast<unsigned char>(header[0][0]) == 0xEF)
    header[0] = header[0].substr(3);

  std::map<std::string, int> col_of;
  for (std::size_t c = 0; c < header.size(); ++c)
    col_of.emplace(header[c], static_cast<int>(c));

  std::vector<int> feature_idx;
  for (const std::string& name : feature_names) {
    auto it = col_of.find(name);
    if (it == col_of.end())
      throw DataError("column '" + name + "' (required by the model) not found in " +
                      path);
    feature_idx.push_back(it->second);
  }
  int response_idx = -1;
  if (!response_column.empty()) {
    auto it = col_of.find(response_column);
    if (it == col_of.end())
      throw DataError("response column '" + response_column + "' not found in " + path);
    response_idx = it->second;
  }

  PredictionFrame frame;
  std::vector<double> xbuf, ybuf;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    std::vector<std::string> fields = detail::split_csv_record(line);
    if (fields.size() != header.size())
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    if (response_idx >= 0) {
      const std::string& ytok = fields[static_cast<std::size_t>(response_idx)];
      if (detail::is_missing_token(ytok)) {
        ++frame.rows_dropped_missing_response;
        continue;
      }
      double yv;
      if (!parse_double_strict(ytok, &yv) || !std::isfinite(yv))
        throw DataError("line " + std::to_string(line_no) + ": bad response value '" +
                        ytok + "'");
      ybuf.push_back(yv);
    }
    for (std::size_t f = 0; f < feature_idx.size(); ++f) {
      const std::string& tok = fields[static_cast<std::size_t>(feature_idx[f])];
      if (detail::is_missing_token(tok)) {
        xbuf.push_back(fill_values[static_cast<Eigen::Index>(f)]);
        ++frame.cells_imputed;
      } else {
        double v;
        if (!parse_double_strict(tok, &v) || !std::isfinite(v))
          throw DataError("line " + std::to_string(line_no) + ", column '" +
                          feature_names[f] + "': bad value '" + tok + "'");
        xbuf.push_back(v);
      }
    }
    frame.row_ids.push_back(std::to_string(line_no - 1));
  }
  if (frame.row_ids.empty()) throw DataError("no usable rows in " + path);

  const auto n = static_cast<Eigen::Index>(frame.row_ids.size());
  const auto p = static_cast<Eigen::Index>(feature_names.size());
  frame.X.resize(n, p);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < p; ++c)
      frame.X(r, c) = xbuf[static_cast<std::size_t>(r * p + c)];
  if (response_idx >= 0)
    frame.y = Eigen::Map<Eigen::VectorXd>(ybuf.data(), static_cast<Eigen::Index>(ybuf.size()));
  return frame;
}

// Column-wise location/scale transform fit on training data (sample standard
// deviation, n - 1 denominator).
struct Standardizer {
  Eigen::VectorXd means;
  Eigen::VectorXd stdevs;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    if (x.cols() != means.size()) throw DataError("standardize: column count mismatch");
    return (x.rowwise() - means.transpose()).array().rowwise() /
           stdevs.transpose().array();
  }

  Eigen::MatrixXd invert(const Eigen::MatrixXd& z) const {
    return (z.array().rowwise() * stdevs.transpose().array()).rowwise() +
           means.transpose().array();
  }
};

inline std::pair<Standardizer, Dataset> standardize(const Dataset& train,
                                                    const std::vector<std::string>* names = nullptr) {
  const Eigen::Index n = train.n();
  if (n < 2) throw DataError("standardize: need at least two rows");
  Standardizer s;
  s.means = train.X.colwise().mean();
  Eigen::MatrixXd centered = train.X.rowwise() - s.means.transpose();
  s.stdevs = (centered.array().square().colwise().sum() / static_cast<double>(n - 1))
                 .sqrt()
                 .matrix()
                 .transpose();
  for (int j = 0; j < train.p(); ++j)
    if (!(s.stdevs[j] > 0.0)) {
      std::string nm;
      if (names && static_cast<std::size_t>(j) < names->size())
        nm = (*names)[static_cast<std::size_t>(j)];
      else if (static_cast<std::size_t>(j) < train.feature_names.size())
        nm = train.feature_names[static_cast<std::size_t>(j)];
      else
        nm = "column " + std::to_string(j);
      throw DataError("zero-variance column '" + nm + "'");
    }
  Dataset out = train;
  out.X = centered.array().rowwise() / s.stdevs.transpose().array();
  return {std::move(s), std::move(out)};
}

namespace detail {

// Explicit Fisher-Yates with mt19937_64 so the permutation depends only on
// the seed, not on standard-library internals of shuffle/distributions.
inline std::vector<Eigen::Index> seeded_permutation(Eigen::Index n, std::uint64_t seed) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(seed);
  for (Eigen::Index i = 0; i < n - 1; ++i) {
    auto span = static_cast<std::uint64_t>(n - i);
    auto j = i + static_cast<Eigen::Index>(rng() % span);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

}  // namespace detail

// Deterministic train/validation/test partition. Fractions must sum to one;
// every part must be nonempty.
inline std::array<Dataset, 3> split(const Dataset& data,
                                    const std::array<double, 3>& fractions,
                                    std::uint64_t seed) {
  double total = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total - 1.0) > 1e-8)
    throw UsageError("split fractions must sum to 1");
  const Eigen::Index n = data.n();
  auto n_train = static_cast<Eigen::Index>(std::llround(fractions[0] * static_cast<double>(n)));
  auto n_val = static_cast<Eigen::Index>(std::llround(fractions[1] * static_cast<double>(n)));
  Eigen::Index n_test = n - n_train - n_val;
  if (n_train <= 0 || n_val <= 0 || n_test <= 0)
    throw DataError("dataset too small for requested split");

  std::vector<Eigen::Index> perm = detail::seeded_permutation(n, seed);
  std::vector<Eigen::Index> a(perm.begin(), perm.begin() + n_train);
  std::vector<Eigen::Index> b(perm.begin() + n_train, perm.begin() + n_train + n_val);
  std::vector<Eigen::Index> c(perm.begin() + n_train + n_val, perm.end());
  return {data.take_rows(a), data.take_rows(b), data.take_rows(c)};
}

}  // namespace samint
