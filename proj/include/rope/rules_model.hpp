#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rope/vec.hpp"

namespace rope {

enum class PredOp { LE, GT, EQ };

inline const char* pred_op_name(PredOp op) {
  switch (op) {
    case PredOp::LE: return "<=";
    case PredOp::GT: return ">";
    case PredOp::EQ: return "==";
  }
  return "?";
}

inline PredOp pred_op_from_name(const std::string& name) {
  if (name == "<=") return PredOp::LE;
  if (name == ">") return PredOp::GT;
  if (name == "==") return PredOp::EQ;
  throw std::invalid_argument("unknown predicate operator: " + name);
}

struct Predicate {
  int feature = 0;
  PredOp op = PredOp::LE;
  double value = 0.0;

  bool eval(const Vec& x) const {
    const double v = x.at(static_cast<std::size_t>(feature));
    switch (op) {
      case PredOp::LE: return v <= value;
      case PredOp::GT: return v > value;
      case PredOp::EQ: return v == value;
    }
    return false;
  }
};

// A rule is a conjunction of predicates paired with a class label.
// support and precision are measured on the training data the rule was
// mined from; precision drives conflict resolution at prediction time.
struct Rule {
  std::vector<Predicate> condition;
  int label = 0;
  int support = 0;
  double precision = 0.0;

  bool fires(const Vec& x) const {
    for (const Predicate& p : condition)
      if (!p.eval(x)) return false;
    return true;
  }
};

// Shortest round-trip decimal rendering, deterministic across runs.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Unordered rule collection with a total predict: among fired rules the
// highest-training-precision one wins, exact ties go to the lower rule
// index, and uncovered inputs get the default label.
struct DecisionSet {
  std::vector<Rule> rules;
  int default_label = 0;

  int predict(const Vec& x) const {
    int best = -1;
    for (std::size_t i = 0; i < rules.size(); ++i) {
      if (!rules[i].fires(x)) continue;
      if (best < 0 ||
          rules[i].precision > rules[static_cast<std::size_t>(best)].precision)
        best = static_cast<int>(i);
    }
    return best < 0 ? default_label : rules[static_cast<std::size_t>(best)].label;
  }

  // One rule per line, e.g. "IF x3 > 0.25 AND x1 <= -0.5 THEN 1".
  std::string render(const std::vector<std::string>& feature_names = {}) const {
    std::string out;
    for (const Rule& r : rules) {
      out += "IF ";
      for (std::size_t i = 0; i < r.condition.size(); ++i) {
        const Predicate& p = r.condition[i];
        if (i > 0) out += " AND ";
        if (static_cast<std::size_t>(p.feature) < feature_names.size())
          out += feature_names[static_cast<std::size_t>(p.feature)];
        else
          out += "x" + std::to_string(p.feature);
        out += " ";
        out += pred_op_name(p.op);
        out += " ";
        out += format_double(p.value);
      }
      out += " THEN " + std::to_string(r.label) + "\n";
    }
    out += "ELSE " + std::to_string(default_label) + "\n";
    return out;
  }
};

inline nlohmann::json to_json(const DecisionSet& ds) {
  nlohmann::json rules = nlohmann::json::array();
  for (const Rule& r : ds.rules) {
    nlohmann::json preds = nlohmann::json::array();
    for (const Predicate& p : r.condition) {
      preds.push_back({{"feature", p.feature},
                       {"op", pred_op_name(p.op)},
                       {"value", p.value}});
    }
    rules.push_back({{"predicates", preds},
                     {"label", r.label},
                     {"precision", r.precision}});
  }
  return nlohmann::json{{"format_version", 1},
                        {"default_label", ds.default_label},
                        {"rules", rules}};
}

inline DecisionSet decision_set_from_json(const nlohmann::json& j) {
  if (j.at("format_version").get<int>() != 1)
    throw std::invalid_argument("decision set: unsupported format_version");
  DecisionSet ds;
  ds.default_label = j.at("default_label").get<int>();
  for (const auto& jr : j.at("rules")) {
    Rule r;
    for (const auto& jp : jr.at("predicates")) {
      Predicate p;
      p.feature = jp.at("feature").get<int>();
      p.op = pred_op_from_name(jp.at("op").get<std::string>());
      p.value = jp.at("value").get<double>();
      r.condition.push_back(p);
    }
    r.label = jr.at("label").get<int>();
    r.precision = jr.at("precision").get<double>();
    ds.rules.push_back(std::move(r));
  }
  return ds;
}

}  // namespace rope
