#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rope/rules_model.hpp"  // format_double

namespace rope {

// Percentage drop in fidelity from training to shifted data. Undefined when
// the training fidelity is not positive; a negative drop (shift better than
// train) is allowed and reported as-is.
inline double pct_drop(double train, double shift) {
  return 100.0 * (train - shift) / train;
}

struct ReportRow {
  std::string experiment;
  std::string method;
  std::string kind;
  double alpha = 0.0;
  int replicate = 0;
  double train_fidelity = 0.0;
  double shift_fidelity = 0.0;
  bool drop_defined = false;
  double drop = 0.0;
  std::vector<std::pair<std::string, double>> aux;
  std::string error;  // nonempty when this row's training failed

  void set_fidelities(double train, double shift) {
    train_fidelity = train;
    shift_fidelity = shift;
    drop_defined = train > 0.0;
    drop = drop_defined ? pct_drop(train, shift) : 0.0;
  }
};

struct Aggregate {
  std::string method;
  double alpha = 0.0;
  int n = 0;
  double mean_train_fidelity = 0.0;
  double mean_shift_fidelity = 0.0;
  double mean_drop = 0.0;
  double stderr_drop = 0.0;
};

class Report {
 public:
  std::vector<ReportRow> rows;
  std::vector<std::string> aux_columns;

  void sort_rows() {
    std::sort(rows.begin(), rows.end(),
              [](const ReportRow& a, const ReportRow& b) {
                if (a.method != b.method) return a.method < b.method;
                if (a.alpha != b.alpha) return a.alpha < b.alpha;
                return a.replicate < b.replicate;
              });
  }

  // Mean and standard error per (method, alpha), over rows with a defined
  // drop. Failed rows are excluded.
  std::vector<Aggregate> aggregates() const {
    std::map<std::pair<std::string, double>, std::vector<const ReportRow*>> by;
    for (const ReportRow& r : rows) {
      if (!r.error.empty()) continue;
      by[{r.method, r.alpha}].push_back(&r);
    }
    std::vector<Aggregate> out;
    for (const auto& [key, group] : by) {
      Aggregate a;
      a.method = key.first;
      a.alpha = key.second;
      double drops = 0.0, drops_sq = 0.0;
      int n_drop = 0;
      for (const ReportRow* r : group) {
        a.mean_train_fidelity += r->train_fidelity;
        a.mean_shift_fidelity += r->shift_fidelity;
        if (r->drop_defined) {
          drops += r->drop;
          drops_sq += r->drop * r->drop;
          ++n_drop;
        }
      }
      a.n = static_cast<int>(group.size());
      a.mean_train_fidelity /= static_cast<double>(a.n);
      a.mean_shift_fidelity /= static_cast<double>(a.n);
      if (n_drop > 0) {
        a.mean_drop = drops / static_cast<double>(n_drop);
        if (n_drop > 1) {
          const double var =
              (drops_sq - drops * drops / static_cast<double>(n_drop)) /
              static_cast<double>(n_drop - 1);
          a.stderr_drop = std::sqrt(std::max(0.0, var) /
                                    static_cast<double>(n_drop));
        }
      }
      out.push_back(a);
    }
    return out;
  }

  // Fixed column order; unknown drops are written as NA. A nonempty config
  // string is embedded as a leading '#' comment, which the CSV reader skips.
  void write_csv(std::ostream& os, const std::string& config_comment = "") const {
    if (!config_comment.empty()) os << "# " << config_comment << "\n";
    os << "experiment,method,kind,alpha,replicate,train_fidelity,"
          "shift_fidelity,pct_drop";
    for (const std::string& c : aux_columns) os << "," << c;
    os << ",error\n";
    for (const ReportRow& r : rows) {
      os << r.experiment << "," << r.method << "," << r.kind << ","
         << format_double(r.alpha) << "," << r.replicate << ","
         << format_double(r.train_fidelity) << ","
         << format_double(r.shift_fidelity) << ","
         << (r.drop_defined ? format_double(r.drop) : std::string("NA"));
      for (const std::string& c : aux_columns) {
        os << ",";
        for (const auto& [name, value] : r.aux) {
          if (name == c) {
            os << format_double(value);
            break;
          }
        }
      }
      os << "," << r.error << "\n";
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json jrows = nlohmann::json::array();
    for (const ReportRow& r : rows) {
      nlohmann::json jr{{"experiment", r.experiment}, {"method", r.method},
                        {"kind", r.kind},             {"alpha", r.alpha},
                        {"replicate", r.replicate},
                        {"train_fidelity", r.train_fidelity},
                        {"shift_fidelity", r.shift_fidelity}};
      if (r.drop_defined)
        jr["pct_drop"] = r.drop;
      else
        jr["pct_drop"] = nullptr;
      for (const auto& [name, value] : r.aux) jr[name] = value;
      if (!r.error.empty()) jr["error"] = r.error;
      jrows.push_back(std::move(jr));
    }
    nlohmann::json jagg = nlohmann::json::array();
    for (const Aggregate& a : aggregates()) {
      jagg.push_back({{"method", a.method},
                      {"alpha", a.alpha},
                      {"n", a.n},
                      {"mean_train_fidelity", a.mean_train_fidelity},
                      {"mean_shift_fidelity", a.mean_shift_fidelity},
                      {"mean_pct_drop", a.mean_drop},
                      {"stderr_pct_drop", a.stderr_drop}});
    }
    return nlohmann::json{
        {"format_version", 1}, {"rows", jrows}, {"aggregates", jagg}};
  }
};

}  // namespace rope
