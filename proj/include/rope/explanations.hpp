#pragma once

#include <stdexcept>
#include <string>
#include <variant>

#include <json.hpp>

#include "rope/multiexp.hpp"

namespace rope {

// Any explanation this library can emit or evaluate.
using AnyExplanation =
    std::variant<LinearExplanation, DecisionSet, ClusteredExplanation>;

inline int predict_any(const AnyExplanation& e, const Vec& x) {
  if (std::holds_alternative<LinearExplanation>(e))
    return std::get<LinearExplanation>(e).predict(x);
  if (std::holds_alternative<DecisionSet>(e))
    return std::get<DecisionSet>(e).predict(x);
  return route(std::get<ClusteredExplanation>(e), x).second;
}

inline nlohmann::json to_json(const AnyExplanation& e) {
  if (std::holds_alternative<LinearExplanation>(e)) {
    nlohmann::json j = to_json(std::get<LinearExplanation>(e));
    j["family"] = "linear";
    return j;
  }
  if (std::holds_alternative<DecisionSet>(e)) {
    nlohmann::json j = to_json(std::get<DecisionSet>(e));
    j["family"] = "decision_set";
    return j;
  }
  nlohmann::json j = to_json(std::get<ClusteredExplanation>(e));
  j["family"] = "clustered";
  return j;
}

inline AnyExplanation any_from_json(const nlohmann::json& j) {
  std::string family;
  if (j.contains("family")) {
    family = j.at("family").get<std::string>();
  } else if (j.contains("entries")) {
    family = "clustered";
  } else if (j.contains("rules")) {
    family = "decision_set";
  } else if (j.contains("weights")) {
    family = "linear";
  } else {
    throw std::invalid_argument("explanation JSON: unrecognized family");
  }
  if (family == "linear") return linear_from_json(j);
  if (family == "decision_set") return decision_set_from_json(j);
  if (family == "clustered") return clustered_from_json(j);
  throw std::invalid_argument("explanation JSON: unknown family " + family);
}

}  // namespace rope
