#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "rope/log.hpp"
#include "rope/rng.hpp"
#include "rope/vec.hpp"

namespace rope {

// Polytope of admissible covariate shifts:
//   { d in R^dim : ||d||_1 <= s0  and  ||d||_inf <= delta_max }.
// Budgets are expressed in standardized-feature units. The set is convex
// and symmetric about the origin.
struct ShiftSet {
  double s0 = 0.0;
  double delta_max = 0.0;
  int dim = 1;

  ShiftSet(double s0_, double delta_max_, int dim_)
      : s0(s0_), delta_max(delta_max_), dim(dim_) {
    if (!(s0 >= 0.0)) throw std::invalid_argument("ShiftSet: s0 must be >= 0");
    if (!(delta_max >= 0.0))
      throw std::invalid_argument("ShiftSet: delta_max must be >= 0");
    if (dim < 1) throw std::invalid_argument("ShiftSet: dim must be >= 1");
  }
};

struct Shift {
  Vec delta;
};

inline constexpr double kMembershipTol = 1e-9;

inline bool contains(const ShiftSet& set, const Shift& shift) {
  if (static_cast<int>(shift.delta.size()) != set.dim)
    throw std::invalid_argument("contains: shift dimension mismatch");
  return l1_norm(shift.delta) <= set.s0 + kMembershipTol &&
         linf_norm(shift.delta) <= set.delta_max + kMembershipTol;
}

// Solves max_{d in set} g.d in closed form. The LP optimum is attained by a
// greedy fill: coordinates in decreasing |g_i| each take
// sign(g_i) * min(delta_max, remaining L1 budget) until the budget runs out.
// Exact-|g_i| ties break toward the lower index; zero-gradient coordinates
// stay at 0, so g = 0 maps to the origin.
inline Shift worst_case_shift(const Vec& gradient, const ShiftSet& set) {
  if (static_cast<int>(gradient.size()) != set.dim)
    throw std::invalid_argument("worst_case_shift: gradient dimension mismatch");
  if (!all_finite(gradient))
    throw std::invalid_argument("worst_case_shift: non-finite gradient entry");

  Shift result{Vec(gradient.size(), 0.0)};
  if (set.s0 <= 0.0 || set.delta_max <= 0.0) return result;

  std::vector<int> order(gradient.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double fa = std::fabs(gradient[static_cast<std::size_t>(a)]);
    const double fb = std::fabs(gradient[static_cast<std::size_t>(b)]);
    if (fa != fb) return fa > fb;
    return a < b;
  });

  double remaining = set.s0;
  for (int idx : order) {
    const double g = gradient[static_cast<std::size_t>(idx)];
    if (g == 0.0) break;  // remaining coordinates are all zero-gradient
    const double take = std::min(set.delta_max, remaining);
    if (take <= 0.0) break;
    result.delta[static_cast<std::size_t>(idx)] = (g > 0.0 ? take : -take);
    remaining -= take;
  }
  return result;
}

// Draws k independent shifts concentrated on extreme feasible points: a
// uniformly random support of size m = min(dim, floor(s0/delta_max)) takes
// +-delta_max with random signs; any leftover L1 budget goes to one extra
// coordinate. Every returned shift is a member of the set.
//
// delta_max = 0 with s0 > 0 leaves only the origin representable; in that
// case k zero shifts are returned and a warning is emitted.
inline std::vector<Shift> sample_shifts(const ShiftSet& set, int k, Rng& rng) {
  if (k < 0) throw std::invalid_argument("sample_shifts: k must be >= 0");
  std::vector<Shift> out;
  out.reserve(static_cast<std::size_t>(k));

  const std::size_t dim = static_cast<std::size_t>(set.dim);
  if (set.delta_max <= 0.0) {
    if (set.s0 > 0.0)
      log_warn("sample_shifts: delta_max = 0 with s0 > 0; only the zero shift "
               "is representable");
    for (int i = 0; i < k; ++i) out.push_back(Shift{Vec(dim, 0.0)});
    return out;
  }

  const int m = std::min(set.dim,
                         static_cast<int>(std::floor(set.s0 / set.delta_max)));
  const double remainder = set.s0 - static_cast<double>(m) * set.delta_max;

  std::vector<int> indices(dim);
  for (int draw = 0; draw < k; ++draw) {
    std::iota(indices.begin(), indices.end(), 0);
    // Partial Fisher-Yates: the first m + 1 slots are a random sample
    // without replacement. Draw count per shift is fixed so that prefixes
    // of the stream stay aligned across different k.
    const int picks = std::min(set.dim, m + 1);
    for (int i = 0; i < picks; ++i) {
      const std::size_t j =
          static_cast<std::size_t>(i) +
          static_cast<std::size_t>(rng.below(dim - static_cast<std::size_t>(i)));
      std::swap(indices[static_cast<std::size_t>(i)], indices[j]);
    }
    Shift s{Vec(dim, 0.0)};
    for (int i = 0; i < m; ++i) {
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      s.delta[static_cast<std::size_t>(indices[static_cast<std::size_t>(i)])] =
          sign * set.delta_max;
    }
    const double extra_sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    if (remainder > 0.0 && m < set.dim) {
      s.delta[static_cast<std::size_t>(indices[static_cast<std::size_t>(m)])] =
          extra_sign * remainder;
    }
    out.push_back(std::move(s));
  }
  return out;
}

// Real-valued output of an explanation or black box, mapped into [0, 1].
using ScoreFn = std::function<double(const Vec&)>;

// Empirical check of the marginal-dependence guarantee: mean over the data
// of |(E(x + c a) - E(x)) - (B(x + c a) - B(x))| with a the one-hot of
// `feature`. Requires |c| <= delta_max and |c| <= s0 so that c a lies in
// the shift set.
inline double marginal_dependence_audit(const ScoreFn& explanation,
                                        const ScoreFn& blackbox,
                                        const Matrix& rows, int feature,
                                        double c, const ShiftSet& set) {
  if (rows.empty())
    throw std::invalid_argument("marginal_dependence_audit: empty data");
  if (feature < 0 || feature >= set.dim)
    throw std::out_of_range("marginal_dependence_audit: feature index");
  if (std::fabs(c) > set.delta_max + kMembershipTol ||
      std::fabs(c) > set.s0 + kMembershipTol)
    throw std::invalid_argument(
        "marginal_dependence_audit: |c| exceeds the shift budget");

  double total = 0.0;
  for (const Vec& x : rows) {
    Vec shifted = x;
    shifted[static_cast<std::size_t>(feature)] += c;
    const double de = explanation(shifted) - explanation(x);
    const double db = blackbox(shifted) - blackbox(x);
    total += std::fabs(de - db);
  }
  return total / static_cast<double>(rows.size());
}

struct SurrogateBounds {
  double lhs = 0.0;  // max over shifts of the mean loss (distributional form)
  double rhs = 0.0;  // mean over points of the per-point max loss (surrogate)
};

namespace detail {

// Enumerates the grid {i * step : |i * step| <= delta_max}^dim pruned to
// ||d||_1 <= s0. The origin is always a grid point.
inline void for_each_grid_shift(const ShiftSet& set, double step,
                                const std::function<void(const Vec&)>& fn) {
  const int radius =
      step > 0.0 ? static_cast<int>(std::floor(set.delta_max / step + 1e-12))
                 : 0;
  Vec delta(static_cast<std::size_t>(set.dim), 0.0);
  std::function<void(int, double)> rec = [&](int coord, double l1_used) {
    if (coord == set.dim) {
      fn(delta);
      return;
    }
    for (int i = -radius; i <= radius; ++i) {
      const double v = static_cast<double>(i) * step;
      const double used = l1_used + std::fabs(v);
      if (used > set.s0 + kMembershipTol) continue;
      delta[static_cast<std::size_t>(coord)] = v;
      rec(coord + 1, used);
    }
    delta[static_cast<std::size_t>(coord)] = 0.0;
  };
  rec(0, 0.0);
}

}  // namespace detail

// Exhaustive-grid audit of the surrogate ordering: lhs is the empirical
// distributionally-robust loss (max over shifts of the shifted-data mean),
// rhs the empirical adversarial surrogate (mean of per-point maxima). On
// identical grids lhs <= rhs always. The loss is |E(x+d) - B(x+d)| on the
// real-valued outputs. Audit-only tool; capped at dim <= 4 because the grid
// is exponential in the dimension.
inline SurrogateBounds surrogate_bound_audit(const ScoreFn& explanation,
                                             const ScoreFn& blackbox,
                                             const Matrix& rows,
                                             const ShiftSet& set,
                                             double grid_step = 0.05) {
  if (set.dim > 4)
    throw std::invalid_argument(
        "surrogate_bound_audit: grid audit supports dim <= 4 only");
  if (!(grid_step > 0.0))
    throw std::invalid_argument("surrogate_bound_audit: grid_step must be > 0");
  if (rows.empty())
    throw std::invalid_argument("surrogate_bound_audit: empty data");

  const std::size_t n = rows.size();
  std::vector<double> per_point_max(n, 0.0);
  double lhs = 0.0;  // losses are nonnegative and the grid contains 0

  detail::for_each_grid_shift(set, grid_step, [&](const Vec& delta) {
    double mean_loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      Vec shifted = add(rows[i], delta);
      const double loss = std::fabs(explanation(shifted) - blackbox(shifted));
      mean_loss += loss;
      per_point_max[i] = std::max(per_point_max[i], loss);
    }
    lhs = std::max(lhs, mean_loss / static_cast<double>(n));
  });

  SurrogateBounds bounds;
  bounds.lhs = lhs;
  bounds.rhs = std::accumulate(per_point_max.begin(), per_point_max.end(), 0.0) /
               static_cast<double>(n);
  return bounds;
}

}  // namespace rope
