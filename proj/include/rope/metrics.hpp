#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <vector>

#include "rope/blackbox.hpp"
#include "rope/explanations.hpp"
#include "rope/vec.hpp"

namespace rope {

// Fraction of inputs on which the explanation and the black box agree.
// Clustered explanations are evaluated through nearest-representative
// routing.
inline double fidelity(const AnyExplanation& e, const Matrix& rows,
                       const BlackBoxHandle& blackbox) {
  if (rows.empty()) throw std::invalid_argument("fidelity: empty data");
  const std::vector<int> bb = blackbox.query_batch(rows);
  long long agree = 0;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (predict_any(e, rows[i]) == bb[i]) ++agree;
  return static_cast<double>(agree) / static_cast<double>(rows.size());
}

// L2 distance over the concatenated (weights, bias) vectors.
inline double coefficient_mismatch(const LinearExplanation& a,
                                   const LinearExplanation& b) {
  if (a.weights.size() != b.weights.size())
    throw std::invalid_argument("coefficient_mismatch: dimension mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < a.weights.size(); ++j) {
    const double d = a.weights[j] - b.weights[j];
    s += d * d;
  }
  const double db = a.bias - b.bias;
  return std::sqrt(s + db * db);
}

namespace detail {

inline const LinearExplanation& require_linear(const ExplanationVariant& e) {
  if (!std::holds_alternative<LinearExplanation>(e))
    throw std::invalid_argument(
        "coefficient_mismatch: clustered entry is not a linear explanation");
  return std::get<LinearExplanation>(e);
}

}  // namespace detail

// Weighted mismatch of a clustered explanation against one target model:
// sum of w_i * ||E_i - target||.
inline double coefficient_mismatch(const ClusteredExplanation& ce,
                                   const LinearExplanation& target) {
  double total = 0.0;
  for (const auto& entry : ce.entries)
    total += entry.weight *
             coefficient_mismatch(detail::require_linear(entry.explanation),
                                  target);
  return total;
}

// Target for the multiple-model case: per-subgroup linear models with their
// subgroup representatives.
struct LinearTargetGroup {
  Vec representative;
  LinearExplanation model;
};

// Weighted mismatch against multiple targets: each entry pairs with the
// target of the subgroup its representative is closest to.
inline double coefficient_mismatch(const ClusteredExplanation& ce,
                                   const std::vector<LinearTargetGroup>& targets) {
  if (targets.empty())
    throw std::invalid_argument("coefficient_mismatch: no targets");
  double total = 0.0;
  for (const auto& entry : ce.entries) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < targets.size(); ++t) {
      const double d = sq_dist(entry.representative, targets[t].representative);
      if (d < best_d) {
        best_d = d;
        best = t;
      }
    }
    total += entry.weight *
             coefficient_mismatch(detail::require_linear(entry.explanation),
                                  targets[best].model);
  }
  return total;
}

namespace detail {

inline bool predicates_equal(const Predicate& a, const Predicate& b,
                             double tol) {
  return a.feature == b.feature && a.op == b.op &&
         std::fabs(a.value - b.value) <= tol;
}

// Structural rule identity: same label, same predicate multiset up to
// reordering, values within tolerance.
inline bool rules_equal(const Rule& a, const Rule& b, double tol) {
  if (a.label != b.label) return false;
  if (a.condition.size() != b.condition.size()) return false;
  std::vector<bool> used(b.condition.size(), false);
  for (const Predicate& pa : a.condition) {
    bool found = false;
    for (std::size_t j = 0; j < b.condition.size(); ++j) {
      if (used[j]) continue;
      if (predicates_equal(pa, b.condition[j], tol)) {
        used[j] = true;
        found = true;
        break;
      }
    }
    if (!found) return false;
  }
  return true;
}

}  // namespace detail

inline constexpr double kRuleMatchTol = 1e-9;

// Number of rules present in both decision sets.
inline int rule_match(const DecisionSet& a, const DecisionSet& b) {
  int count = 0;
  for (const Rule& ra : a.rules) {
    for (const Rule& rb : b.rules) {
      if (detail::rules_equal(ra, rb, kRuleMatchTol)) {
        ++count;
        break;
      }
    }
  }
  return count;
}

// Number of features referenced by both decision sets.
inline int feature_match(const DecisionSet& a, const DecisionSet& b) {
  std::set<int> fa, fb;
  for (const Rule& r : a.rules)
    for (const Predicate& p : r.condition) fa.insert(p.feature);
  for (const Rule& r : b.rules)
    for (const Predicate& p : r.condition) fb.insert(p.feature);
  int count = 0;
  for (int f : fa)
    if (fb.count(f)) ++count;
  return count;
}

// Score adapters for the audit operations.
inline ScoreFn score_fn(const BlackBoxHandle& blackbox) {
  if (blackbox.has_score())
    return [blackbox](const Vec& x) { return blackbox.score(x); };
  return [blackbox](const Vec& x) {
    return static_cast<double>(blackbox.query(x));
  };
}

inline ScoreFn score_fn(const LinearExplanation& e) {
  return [e](const Vec& x) { return e.score01(x); };
}

inline ScoreFn score_fn(const AnyExplanation& e) {
  if (std::holds_alternative<LinearExplanation>(e)) {
    return score_fn(std::get<LinearExplanation>(e));
  }
  return [e](const Vec& x) { return static_cast<double>(predict_any(e, x)); };
}

}  // namespace rope
