#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rope/vec.hpp"

namespace rope {

enum class Link { identity, logistic };

inline double sigmoid(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Linear / logistic explanation. Weights are in standardized-feature units.
// Prediction is a pure function of (weights, bias, link, threshold, x); the
// boundary tie score == threshold resolves to label 1.
struct LinearExplanation {
  Vec weights;
  double bias = 0.0;
  Link link = Link::logistic;
  double threshold = 0.5;  // 0.5 for logistic, 0 for identity
  std::vector<std::string> feature_names;

  int dim() const { return static_cast<int>(weights.size()); }

  double raw(const Vec& x) const { return dot(weights, x) + bias; }

  // Model output on the link scale (probability for logistic, raw margin
  // for identity).
  double score(const Vec& x) const {
    const double r = raw(x);
    return link == Link::logistic ? sigmoid(r) : r;
  }

  // Real-valued output in [0, 1] for loss and audit purposes. The identity
  // link degenerates to the hard label.
  double score01(const Vec& x) const {
    if (link == Link::logistic) return sigmoid(raw(x));
    return raw(x) >= threshold ? 1.0 : 0.0;
  }

  int predict(const Vec& x) const { return score(x) >= threshold ? 1 : 0; }
};

inline LinearExplanation make_identity_linear(Vec weights, double bias = 0.0) {
  LinearExplanation e;
  e.weights = std::move(weights);
  e.bias = bias;
  e.link = Link::identity;
  e.threshold = 0.0;
  return e;
}

inline const char* link_name(Link link) {
  return link == Link::logistic ? "logistic" : "identity";
}

inline Link link_from_name(const std::string& name) {
  if (name == "logistic") return Link::logistic;
  if (name == "identity") return Link::identity;
  throw std::invalid_argument("unknown link: " + name);
}

inline nlohmann::json to_json(const LinearExplanation& e) {
  return nlohmann::json{{"format_version", 1},
                        {"link", link_name(e.link)},
                        {"threshold", e.threshold},
                        {"bias", e.bias},
                        {"weights", e.weights},
                        {"feature_names", e.feature_names}};
}

inline LinearExplanation linear_from_json(const nlohmann::json& j) {
  if (j.at("format_version").get<int>() != 1)
    throw std::invalid_argument("linear explanation: unsupported format_version");
  LinearExplanation e;
  e.link = link_from_name(j.at("link").get<std::string>());
  e.threshold = j.at("threshold").get<double>();
  e.bias = j.at("bias").get<double>();
  e.weights = j.at("weights").get<Vec>();
  if (j.contains("feature_names"))
    e.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  return e;
}

}  // namespace rope
