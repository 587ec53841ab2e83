#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rope/log.hpp"
#include "rope/rules_model.hpp"  // format_double
#include "rope/vec.hpp"

namespace rope {

// Per-feature affine transform fitted at ingestion. Zero-variance columns
// of the raw data are dropped (their index is simply absent from `kept`).
struct Standardizer {
  std::size_t raw_width = 0;
  std::vector<std::size_t> kept;  // raw column index per retained feature
  Vec mean;                       // per retained feature
  Vec stddev;                     // per retained feature, > 0

  Vec apply(const Vec& raw) const {
    if (raw.size() != raw_width)
      throw std::invalid_argument("standardizer: raw row width mismatch");
    Vec out(kept.size());
    for (std::size_t j = 0; j < kept.size(); ++j)
      out[j] = (raw[kept[j]] - mean[j]) / stddev[j];
    return out;
  }

  // Inverse transform, one raw-unit entry per retained feature.
  Vec invert(const Vec& standardized) const {
    if (standardized.size() != kept.size())
      throw std::invalid_argument("standardizer: standardized width mismatch");
    Vec out(kept.size());
    for (std::size_t j = 0; j < kept.size(); ++j)
      out[j] = standardized[j] * stddev[j] + mean[j];
    return out;
  }
};

// Rows are stored standardized; the fitted transform makes raw values
// recoverable. Labels and group tags are optional passengers from CSV or
// the synthetic generator.
class Dataset {
 public:
  static Dataset from_raw(const Matrix& raw,
                          std::vector<std::string> feature_names,
                          std::optional<std::vector<int>> labels = std::nullopt) {
    Standardizer st = fit_standardizer(raw, feature_names);
    return assemble(raw, st, std::move(feature_names), std::move(labels));
  }

  // Standardizes with a transform fitted elsewhere (e.g. evaluation data in
  // the frame of the training data).
  static Dataset from_raw_with(const Matrix& raw, const Standardizer& st,
                               std::vector<std::string> feature_names,
                               std::optional<std::vector<int>> labels =
                                   std::nullopt) {
    return assemble(raw, st, std::move(feature_names), std::move(labels));
  }

  // For data already in standardized units (tests, perturbed copies).
  static Dataset from_standardized(Matrix rows,
                                   std::vector<std::string> feature_names,
                                   std::optional<std::vector<int>> labels =
                                       std::nullopt) {
    Dataset d;
    const std::size_t width = rows.empty() ? feature_names.size() : rows[0].size();
    d.std_.raw_width = width;
    d.std_.kept.resize(width);
    d.std_.mean.assign(width, 0.0);
    d.std_.stddev.assign(width, 1.0);
    for (std::size_t j = 0; j < width; ++j) d.std_.kept[j] = j;
    for (const Vec& r : rows)
      if (r.size() != width)
        throw std::invalid_argument("dataset: ragged rows");
    d.rows_ = std::move(rows);
    d.feature_names_ = std::move(feature_names);
    d.labels_ = std::move(labels);
    return d;
  }

  const Matrix& rows() const { return rows_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const Standardizer& standardizer() const { return std_; }
  bool has_labels() const { return labels_.has_value(); }
  const std::vector<int>& labels() const {
    if (!labels_) throw std::logic_error("dataset has no labels");
    return *labels_;
  }
  std::size_t n() const { return rows_.size(); }
  int dim() const { return static_cast<int>(feature_names_.size()); }

  Dataset with_rows(Matrix rows) const {
    Dataset d = *this;
    for (const Vec& r : rows)
      if (static_cast<int>(r.size()) != dim())
        throw std::invalid_argument("dataset: row width mismatch");
    d.rows_ = std::move(rows);
    return d;
  }

  Dataset subset(const std::vector<std::size_t>& indices) const {
    Dataset d = *this;
    d.rows_.clear();
    d.rows_.reserve(indices.size());
    std::optional<std::vector<int>> labels;
    if (labels_) labels.emplace();
    for (std::size_t i : indices) {
      d.rows_.push_back(rows_.at(i));
      if (labels_) labels->push_back((*labels_).at(i));
    }
    d.labels_ = std::move(labels);
    return d;
  }

 private:
  static Standardizer fit_standardizer(const Matrix& raw,
                                       std::vector<std::string>& names) {
    if (raw.empty()) throw std::invalid_argument("dataset: empty raw matrix");
    const std::size_t width = raw[0].size();
    for (const Vec& r : raw) {
      if (r.size() != width) throw std::invalid_argument("dataset: ragged rows");
      if (!all_finite(r))
        throw std::invalid_argument("dataset: non-finite entry");
    }
    const double n = static_cast<double>(raw.size());
    Standardizer st;
    st.raw_width = width;
    std::vector<std::string> kept_names;
    for (std::size_t j = 0; j < width; ++j) {
      double mean = 0.0;
      for (const Vec& r : raw) mean += r[j];
      mean /= n;
      double var = 0.0;
      for (const Vec& r : raw) {
        const double d = r[j] - mean;
        var += d * d;
      }
      var /= n;
      const double sd = std::sqrt(var);
      if (sd < 1e-12) {
        log_warn("dataset: dropping zero-variance feature '" +
                 (j < names.size() ? names[j] : "x" + std::to_string(j)) + "'");
        continue;
      }
      st.kept.push_back(j);
      st.mean.push_back(mean);
      st.stddev.push_back(sd);
      if (j < names.size()) kept_names.push_back(names[j]);
    }
    if (st.kept.empty())
      throw std::invalid_argument("dataset: all features have zero variance");
    names = std::move(kept_names);
    return st;
  }

  static Dataset assemble(const Matrix& raw, const Standardizer& st,
                          std::vector<std::string> feature_names,
                          std::optional<std::vector<int>> labels) {
    if (labels && labels->size() != raw.size())
      throw std::invalid_argument("dataset: label count mismatch");
    Dataset d;
    d.std_ = st;
    // Keep only the retained names when the caller passed raw-width names.
    if (feature_names.size() == st.raw_width && st.kept.size() != st.raw_width) {
      std::vector<std::string> kept_names;
      for (std::size_t j : st.kept) kept_names.push_back(feature_names[j]);
      feature_names = std::move(kept_names);
    }
    d.feature_names_ = std::move(feature_names);
    d.rows_.reserve(raw.size());
    for (const Vec& r : raw) d.rows_.push_back(st.apply(r));
    d.labels_ = std::move(labels);
    return d;
  }

  Matrix rows_;
  std::vector<std::string> feature_names_;
  Standardizer std_;
  std::optional<std::vector<int>> labels_;
};

// --- CSV ---------------------------------------------------------------
//
// Format: header row of feature names; an optional `label` column (by
// convention last) and an optional `group` column are recognized by name.
// Lines starting with '#' are skipped, which is where generated files embed
// their provenance config. UTF-8, '.' decimal.

struct CsvData {
  Matrix raw;
  std::vector<std::string> feature_names;
  std::optional<std::vector<int>> labels;
  std::optional<std::vector<std::string>> groups;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

inline double parse_double_field(const std::string& s, std::size_t line_no) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() )
    throw std::runtime_error("csv: malformed numeric field '" + s +
                             "' at line " + std::to_string(line_no));
  return v;
}

}  // namespace detail

inline CsvData read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv: cannot open " + path);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    header = detail::split_csv_line(line);
    break;
  }
  if (header.empty()) throw std::runtime_error("csv: missing header in " + path);

  int label_col = -1, group_col = -1;
  CsvData out;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == "label" && label_col < 0)
      label_col = static_cast<int>(j);
    else if (header[j] == "group" && group_col < 0)
      group_col = static_cast<int>(j);
    else
      out.feature_names.push_back(header[j]);
  }
  if (label_col >= 0) out.labels.emplace();
  if (group_col >= 0) out.groups.emplace();

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size())
      throw std::runtime_error("csv: wrong field count at line " +
                               std::to_string(line_no) + " of " + path);
    Vec row;
    row.reserve(out.feature_names.size());
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (static_cast<int>(j) == label_col) {
        const double v = detail::parse_double_field(fields[j], line_no);
        out.labels->push_back(static_cast<int>(std::lround(v)));
      } else if (static_cast<int>(j) == group_col) {
        out.groups->push_back(fields[j]);
      } else {
        row.push_back(detail::parse_double_field(fields[j], line_no));
      }
    }
    out.raw.push_back(std::move(row));
  }
  if (out.raw.empty()) throw std::runtime_error("csv: no data rows in " + path);
  return out;
}

inline void write_csv(std::ostream& os, const CsvData& data,
                      const std::string& config_comment = "") {
  if (!config_comment.empty()) os << "# " << config_comment << "\n";
  for (std::size_t j = 0; j < data.feature_names.size(); ++j) {
    if (j > 0) os << ",";
    os << data.feature_names[j];
  }
  if (data.groups) os << ",group";
  if (data.labels) os << ",label";
  os << "\n";
  for (std::size_t i = 0; i < data.raw.size(); ++i) {
    const Vec& row = data.raw[i];
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j > 0) os << ",";
      os << format_double(row[j]);
    }
    if (data.groups) os << "," << (*data.groups)[i];
    if (data.labels) os << "," << (*data.labels)[i];
    os << "\n";
  }
}

// Row indices whose group tag equals `value`.
inline std::vector<std::size_t> group_indices(const CsvData& data,
                                              const std::string& value) {
  if (!data.groups) throw std::runtime_error("csv: no group column present");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < data.groups->size(); ++i)
    if ((*data.groups)[i] == value) idx.push_back(i);
  return idx;
}

}  // namespace rope
