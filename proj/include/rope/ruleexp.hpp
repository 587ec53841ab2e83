#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "rope/blackbox.hpp"
#include "rope/rng.hpp"
#include "rope/rules_model.hpp"
#include "rope/shiftset.hpp"
#include "rope/vec.hpp"

namespace rope {

struct MiningConfig {
  int max_depth = 2;       // predicates per conjunction
  int quantiles = 4;       // threshold cut points per feature
  double min_support = 0.01;
};

namespace detail {

// Nearest-rank quantile cut points, deduplicated.
inline Vec quantile_cuts(Vec values, int quantiles) {
  std::sort(values.begin(), values.end());
  Vec cuts;
  const std::size_t n = values.size();
  for (int q = 1; q <= quantiles; ++q) {
    const double level =
        static_cast<double>(q) / static_cast<double>(quantiles + 1);
    std::size_t idx = static_cast<std::size_t>(
        std::llround(level * static_cast<double>(n - 1)));
    idx = std::min(idx, n - 1);
    const double v = values[idx];
    if (cuts.empty() || cuts.back() != v) cuts.push_back(v);
  }
  return cuts;
}

}  // namespace detail

// Builds the candidate rule universe: per-feature quantile thresholds with
// {<=, >} predicates, conjunctions over distinct features up to max_depth,
// each condition paired with every observed class label. Rules covering
// fewer than min_support of the data are dropped. Ordering is deterministic:
// depth, then (feature, value, op) per predicate, then label.
inline std::vector<Rule> mine_candidate_rules(const Matrix& rows,
                                              const std::vector<int>& bb_labels,
                                              const MiningConfig& cfg = {}) {
  if (rows.empty()) throw std::invalid_argument("mine_candidate_rules: empty data");
  if (bb_labels.size() != rows.size())
    throw std::invalid_argument("mine_candidate_rules: label count mismatch");
  if (cfg.max_depth < 1 || cfg.quantiles < 1)
    throw std::invalid_argument("mine_candidate_rules: bad config");

  const std::size_t n = rows.size();
  const std::size_t dim = rows[0].size();

  std::vector<int> classes = bb_labels;
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

  // Per-feature predicate pool, ordered by (value, LE before GT).
  std::vector<std::vector<Predicate>> pool(dim);
  for (std::size_t f = 0; f < dim; ++f) {
    Vec col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = rows[i][f];
    for (double cut : detail::quantile_cuts(std::move(col), cfg.quantiles)) {
      pool[f].push_back(Predicate{static_cast<int>(f), PredOp::LE, cut});
      pool[f].push_back(Predicate{static_cast<int>(f), PredOp::GT, cut});
    }
    std::sort(pool[f].begin(), pool[f].end(),
              [](const Predicate& a, const Predicate& b) {
                if (a.value != b.value) return a.value < b.value;
                return a.op == PredOp::LE && b.op == PredOp::GT;
              });
  }

  const int min_count = static_cast<int>(
      std::ceil(cfg.min_support * static_cast<double>(n) - 1e-9));

  std::vector<Rule> universe;
  std::vector<Predicate> current;
  // Conjunctions use at most one predicate per feature; features appear in
  // increasing index order so each condition is generated exactly once.
  std::function<void(std::size_t)> extend = [&](std::size_t first_feature) {
    if (!current.empty()) {
      int support = 0;
      std::vector<int> class_hits(classes.size(), 0);
      for (std::size_t i = 0; i < n; ++i) {
        bool fired = true;
        for (const Predicate& p : current)
          if (!p.eval(rows[i])) {
            fired = false;
            break;
          }
        if (!fired) continue;
        ++support;
        for (std::size_t c = 0; c < classes.size(); ++c)
          if (bb_labels[i] == classes[c]) ++class_hits[c];
      }
      if (support >= std::max(1, min_count)) {
        for (std::size_t c = 0; c < classes.size(); ++c) {
          Rule r;
          r.condition = current;
          r.label = classes[c];
          r.support = support;
          r.precision = static_cast<double>(class_hits[c]) /
                        static_cast<double>(support);
          universe.push_back(std::move(r));
        }
      }
    }
    if (static_cast<int>(current.size()) >= cfg.max_depth) return;
    for (std::size_t f = first_feature; f < dim; ++f) {
      for (const Predicate& p : pool[f]) {
        current.push_back(p);
        extend(f + 1);
        current.pop_back();
      }
    }
  };
  extend(0);

  if (universe.empty())
    throw std::runtime_error(
        "mine_candidate_rules: universe empty after min_support pruning; "
        "lower min_support");
  return universe;
}

// --- Objective pieces ----------------------------------------------------

struct RuleObjectiveConfig {
  double lambda = 5.0;
  int alpha = 5;             // cardinality cap on |E|
  double C = -1.0;           // < 0 means auto: |universe| * N
  std::vector<Shift> shifts; // sampled shifts; the zero shift is always added
  double eps_ls = 0.1;       // local-search improvement slack
};

namespace detail {

inline bool has_zero_shift(const std::vector<Shift>& shifts, std::size_t dim) {
  for (const Shift& s : shifts) {
    if (s.delta.size() != dim) continue;
    bool zero = true;
    for (double v : s.delta)
      if (v != 0.0) {
        zero = false;
        break;
      }
    if (zero) return true;
  }
  return false;
}

// The zero shift is always part of the robust disagreement so that it
// upper-bounds the nominal one.
inline std::vector<Shift> with_zero_shift(std::vector<Shift> shifts,
                                          std::size_t dim) {
  if (!has_zero_shift(shifts, dim))
    shifts.insert(shifts.begin(), Shift{Vec(dim, 0.0)});
  return shifts;
}

}  // namespace detail

// Robust disagreement: for each rule, the number of training points that
// satisfy its condition (checked at the unperturbed input) while the black
// box disagrees with the rule label at some sampled shift. Counted per rule
// rather than per point; that double counting is what makes the term
// modular.
inline long long disagree(const std::vector<Rule>& rules, const Matrix& rows,
                          const BlackBoxHandle& blackbox,
                          const std::vector<Shift>& shifts) {
  if (rows.empty()) return 0;
  const auto all = detail::with_zero_shift(shifts, rows[0].size());
  long long total = 0;
  for (const Rule& r : rules) {
    for (const Vec& x : rows) {
      if (!r.fires(x)) continue;
      for (const Shift& s : all) {
        if (blackbox.query(add(x, s.delta)) != r.label) {
          ++total;
          break;
        }
      }
    }
  }
  return total;
}

inline long long disagree(const DecisionSet& ds, const Matrix& rows,
                          const BlackBoxHandle& blackbox,
                          const std::vector<Shift>& shifts) {
  return disagree(ds.rules, rows, blackbox, shifts);
}

// Number of points satisfied by at least one rule condition.
inline long long cover(const std::vector<Rule>& rules, const Matrix& rows) {
  long long covered = 0;
  for (const Vec& x : rows) {
    for (const Rule& r : rules) {
      if (r.fires(x)) {
        ++covered;
        break;
      }
    }
  }
  return covered;
}

inline long long cover(const DecisionSet& ds, const Matrix& rows) {
  return cover(ds.rules, rows);
}

inline double resolve_C(const RuleObjectiveConfig& cfg, std::size_t universe_size,
                        std::size_t n) {
  if (cfg.C >= 0.0) return cfg.C;
  return static_cast<double>(universe_size) * static_cast<double>(n);
}

// C - disagree + lambda * cover, on counts. Sets larger than the
// cardinality cap are rejected outright rather than penalized.
inline double objective(const std::vector<Rule>& rules, const Matrix& rows,
                        const BlackBoxHandle& blackbox,
                        const RuleObjectiveConfig& cfg,
                        std::size_t universe_size) {
  if (static_cast<int>(rules.size()) > cfg.alpha)
    throw std::invalid_argument("objective: |E| exceeds the cardinality cap");
  const double c = resolve_C(cfg, universe_size, rows.size());
  return c - static_cast<double>(disagree(rules, rows, blackbox, cfg.shifts)) +
         cfg.lambda * static_cast<double>(cover(rules, rows));
}

// --- Search --------------------------------------------------------------

namespace detail {

// Precomputed per-rule statistics so the search evaluates the objective in
// O(alpha * N / 64) without touching the black box again.
struct ObjectiveContext {
  std::size_t n = 0;
  double lambda = 5.0;
  double C = 0.0;
  std::vector<std::vector<std::uint64_t>> fire_bits;  // per rule
  std::vector<long long> rule_disagree;               // per rule

  double eval(const std::vector<int>& subset) const {
    long long dis = 0;
    const std::size_t words = (n + 63) / 64;
    std::vector<std::uint64_t> covered(words, 0);
    for (int r : subset) {
      dis += rule_disagree[static_cast<std::size_t>(r)];
      const auto& bits = fire_bits[static_cast<std::size_t>(r)];
      for (std::size_t w = 0; w < words; ++w) covered[w] |= bits[w];
    }
    long long cov = 0;
    for (std::size_t w = 0; w < words; ++w)
      cov += __builtin_popcountll(covered[w]);
    return C - static_cast<double>(dis) +
           lambda * static_cast<double>(cov);
  }
};

// Shifted black-box labels are fetched once per (shift, point).
inline ObjectiveContext build_context(const std::vector<Rule>& universe,
                                      const Matrix& rows,
                                      const BlackBoxHandle& blackbox,
                                      const RuleObjectiveConfig& cfg) {
  ObjectiveContext ctx;
  ctx.n = rows.size();
  ctx.lambda = cfg.lambda;
  ctx.C = resolve_C(cfg, universe.size(), rows.size());

  const auto shifts = with_zero_shift(cfg.shifts, rows.empty() ? 0 : rows[0].size());
  std::vector<std::vector<int>> shifted_labels;
  shifted_labels.reserve(shifts.size());
  for (const Shift& s : shifts) {
    Matrix shifted_rows;
    shifted_rows.reserve(rows.size());
    for (const Vec& x : rows) shifted_rows.push_back(add(x, s.delta));
    shifted_labels.push_back(blackbox.query_batch(shifted_rows));
  }

  const std::size_t words = (ctx.n + 63) / 64;
  ctx.fire_bits.assign(universe.size(), std::vector<std::uint64_t>(words, 0));
  ctx.rule_disagree.assign(universe.size(), 0);
  for (std::size_t r = 0; r < universe.size(); ++r) {
    for (std::size_t i = 0; i < ctx.n; ++i) {
      if (!universe[r].fires(rows[i])) continue;
      ctx.fire_bits[r][i / 64] |= (std::uint64_t{1} << (i % 64));
      for (const auto& labels : shifted_labels) {
        if (labels[i] != universe[r].label) {
          ++ctx.rule_disagree[r];
          break;
        }
      }
    }
  }
  return ctx;
}

inline int majority_label(const std::vector<int>& labels) {
  std::vector<int> classes = labels;
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  int best = classes.empty() ? 0 : classes[0];
  long long best_count = -1;
  for (int c : classes) {
    const long long count =
        std::count(labels.begin(), labels.end(), c);
    if (count > best_count) {  // ties keep the smaller label
      best_count = count;
      best = c;
    }
  }
  return best;
}

inline DecisionSet make_decision_set(const std::vector<Rule>& universe,
                                     const std::vector<int>& subset,
                                     int default_label) {
  DecisionSet ds;
  ds.default_label = default_label;
  for (int r : subset) ds.rules.push_back(universe[static_cast<std::size_t>(r)]);
  return ds;
}

// One pass of approximate local search over the given candidate indices:
// start from the best singleton, then greedily apply the best add, delete
// or swap whose value beats the current one by the improvement factor.
inline std::vector<int> local_search_pass(const ObjectiveContext& ctx,
                                          const std::vector<int>& candidates,
                                          int alpha, double factor,
                                          const std::vector<int>& tie_rank) {
  std::vector<int> current;
  if (candidates.empty()) return current;

  const double empty_value = ctx.eval(current);
  int best_single = -1;
  double best_single_value = -std::numeric_limits<double>::infinity();
  for (int v : candidates) {
    const double val = ctx.eval({v});
    if (val > best_single_value ||
        (val == best_single_value && best_single >= 0 &&
         tie_rank[static_cast<std::size_t>(v)] <
             tie_rank[static_cast<std::size_t>(best_single)])) {
      best_single_value = val;
      best_single = v;
    }
  }
  if (best_single < 0 || !(best_single_value > empty_value)) return current;
  current = {best_single};
  double current_value = best_single_value;

  std::vector<char> in_set(tie_rank.size(), 0);
  in_set[static_cast<std::size_t>(best_single)] = 1;

  const int max_iters = 100000;
  for (int iter = 0; iter < max_iters; ++iter) {
    double best_value = -std::numeric_limits<double>::infinity();
    long long best_key = 0;
    std::vector<int> best_set;

    auto consider = [&](std::vector<int>&& next, long long key) {
      const double val = ctx.eval(next);
      if (val > best_value || (val == best_value && key < best_key)) {
        best_value = val;
        best_key = key;
        best_set = std::move(next);
      }
    };

    const long long u = static_cast<long long>(tie_rank.size());
    // Adds.
    if (static_cast<int>(current.size()) < alpha) {
      for (int v : candidates) {
        if (in_set[static_cast<std::size_t>(v)]) continue;
        std::vector<int> next = current;
        next.push_back(v);
        std::sort(next.begin(), next.end());
        consider(std::move(next), tie_rank[static_cast<std::size_t>(v)]);
      }
    }
    // Deletes.
    for (int v : current) {
      std::vector<int> next;
      for (int w : current)
        if (w != v) next.push_back(w);
      consider(std::move(next), u + tie_rank[static_cast<std::size_t>(v)]);
    }
    // Swaps.
    for (int out : current) {
      for (int v : candidates) {
        if (in_set[static_cast<std::size_t>(v)]) continue;
        std::vector<int> next;
        for (int w : current)
          if (w != out) next.push_back(w);
        next.push_back(v);
        std::sort(next.begin(), next.end());
        consider(std::move(next),
                 2 * u + tie_rank[static_cast<std::size_t>(v)] * u +
                     tie_rank[static_cast<std::size_t>(out)]);
      }
    }

    if (!(best_value >= current_value * factor) ||
        !(best_value > current_value))
      break;
    current = best_set;
    current_value = best_value;
    std::fill(in_set.begin(), in_set.end(), 0);
    for (int v : current) in_set[static_cast<std::size_t>(v)] = 1;
  }
  return current;
}

}  // namespace detail

// Approximate local search for the non-monotone submodular objective under
// one cardinality constraint. Runs one pass over the universe, a second
// pass over the universe minus the first solution, and returns the better
// of the two. The seed only breaks exact objective ties, so runs are fully
// deterministic.
inline DecisionSet local_search_optimize(const std::vector<Rule>& universe,
                                         const Matrix& rows,
                                         const BlackBoxHandle& blackbox,
                                         const RuleObjectiveConfig& cfg,
                                         std::uint64_t seed) {
  if (universe.empty())
    throw std::invalid_argument("local_search_optimize: empty universe");
  if (cfg.alpha < 1)
    throw std::invalid_argument("local_search_optimize: alpha must be >= 1");

  const auto ctx = detail::build_context(universe, rows, blackbox, cfg);
  const double u2 = static_cast<double>(universe.size()) *
                    static_cast<double>(universe.size());
  const double factor = 1.0 + cfg.eps_ls / u2;

  Rng rng(seed);
  std::vector<int> perm = rng.permutation(static_cast<int>(universe.size()));
  std::vector<int> tie_rank(universe.size());
  for (std::size_t i = 0; i < perm.size(); ++i)
    tie_rank[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);

  std::vector<int> all(universe.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);

  const std::vector<int> first =
      detail::local_search_pass(ctx, all, cfg.alpha, factor, tie_rank);

  std::vector<int> rest;
  {
    std::vector<char> used(universe.size(), 0);
    for (int v : first) used[static_cast<std::size_t>(v)] = 1;
    for (int v : all)
      if (!used[static_cast<std::size_t>(v)]) rest.push_back(v);
  }
  const std::vector<int> second =
      detail::local_search_pass(ctx, rest, cfg.alpha, factor, tie_rank);

  const std::vector<int>& winner =
      ctx.eval(second) > ctx.eval(first) ? second : first;

  const int default_label = detail::majority_label(
      blackbox.query_batch(rows));
  return detail::make_decision_set(universe, winner, default_label);
}

// Exhaustive enumeration of all subsets of size <= alpha; exact argmax with
// ties resolved toward the lexicographically smallest index sequence.
// Test oracle; refuses universes larger than 15 rules.
inline DecisionSet brute_force_optimize(const std::vector<Rule>& universe,
                                        const Matrix& rows,
                                        const BlackBoxHandle& blackbox,
                                        const RuleObjectiveConfig& cfg) {
  if (universe.size() > 15)
    throw std::invalid_argument("brute_force_optimize: universe too large (> 15)");
  const auto ctx = detail::build_context(universe, rows, blackbox, cfg);

  std::vector<int> best;
  double best_value = ctx.eval(best);

  std::vector<int> current;
  // Lexicographic depth-first enumeration: {} then {0}, {0,1}, ... so the
  // first subset achieving the maximum is the lexicographically smallest.
  std::function<void(int)> rec = [&](int next) {
    if (static_cast<int>(current.size()) < cfg.alpha) {
      for (int v = next; v < static_cast<int>(universe.size()); ++v) {
        current.push_back(v);
        const double val = ctx.eval(current);
        if (val > best_value) {
          best_value = val;
          best = current;
        }
        rec(v + 1);
        current.pop_back();
      }
    }
  };
  rec(0);

  const int default_label = detail::majority_label(blackbox.query_batch(rows));
  return detail::make_decision_set(universe, best, default_label);
}

}  // namespace rope
