#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "rope/linear_model.hpp"
#include "rope/shiftset.hpp"

using namespace rope;

namespace {

// Independent LP oracle: enumerates every vertex of the polytope
// {||d||_1 <= s0, ||d||_inf <= delta_max} (support + magnitudes + signs)
// and maximizes g.d directly. Shares no code with the greedy fill.
double lp_vertex_oracle(const Vec& g, const ShiftSet& s) {
  const int n = static_cast<int>(g.size());
  double best = 0.0;  // origin is always feasible
  if (s.delta_max <= 0.0 || s.s0 <= 0.0) return best;

  for (int mask = 1; mask < (1 << n); ++mask) {
    std::vector<int> support;
    for (int i = 0; i < n; ++i)
      if (mask & (1 << i)) support.push_back(i);
    const int t = static_cast<int>(support.size());

    std::vector<Vec> magnitude_patterns;
    if (static_cast<double>(t) * s.delta_max <= s.s0 + 1e-12)
      magnitude_patterns.push_back(Vec(support.size(), s.delta_max));
    const double rem = s.s0 - static_cast<double>(t - 1) * s.delta_max;
    if (rem > 1e-12 && rem <= s.delta_max + 1e-12) {
      for (int frac = 0; frac < t; ++frac) {
        Vec mags(support.size(), s.delta_max);
        mags[static_cast<std::size_t>(frac)] = std::min(rem, s.delta_max);
        magnitude_patterns.push_back(std::move(mags));
      }
    }

    for (const Vec& mags : magnitude_patterns) {
      for (int signs = 0; signs < (1 << t); ++signs) {
        double value = 0.0;
        for (int j = 0; j < t; ++j) {
          const double sign = (signs & (1 << j)) ? -1.0 : 1.0;
          value += sign * mags[static_cast<std::size_t>(j)] *
                   g[static_cast<std::size_t>(support[static_cast<std::size_t>(j)])];
        }
        best = std::max(best, value);
      }
    }
  }
  return best;
}

ShiftSet random_set(Rng& rng, int dim) {
  const double s0 = rng.uniform(0.0, 3.0);
  const double dmax = rng.uniform(0.0, 1.5);
  return ShiftSet(s0, dmax, dim);
}

Vec random_gradient(Rng& rng, int dim) {
  Vec g(static_cast<std::size_t>(dim));
  for (double& v : g) {
    const double r = rng.uniform();
    if (r < 0.15) {
      v = 0.0;
    } else {
      v = rng.uniform(-3.0, 3.0);
    }
  }
  // Occasionally force an exact |g| tie to exercise the tie-break.
  if (dim >= 2 && rng.uniform() < 0.2) g[1] = -g[0];
  return g;
}

}  // namespace

TEST_CASE("contains: boundary, violation, origin") {
  const ShiftSet s(1.5, 1.0, 3);
  CHECK(contains(s, Shift{{1.0, 0.0, 0.5}}));

  const ShiftSet s2(1.0, 1.0, 2);
  CHECK_FALSE(contains(s2, Shift{{0.8, 0.8}}));

  CHECK(contains(s, Shift{{0.0, 0.0, 0.0}}));
  CHECK(contains(s2, Shift{{0.0, 0.0}}));

  CHECK_THROWS_AS(contains(s, Shift{{0.0, 0.0}}), std::invalid_argument);
}

TEST_CASE("ShiftSet constructor validates its invariants") {
  CHECK_THROWS_AS(ShiftSet(-0.1, 1.0, 2), std::invalid_argument);
  CHECK_THROWS_AS(ShiftSet(1.0, -1.0, 2), std::invalid_argument);
  CHECK_THROWS_AS(ShiftSet(1.0, 1.0, 0), std::invalid_argument);
}

TEST_CASE("worst_case_shift: pinned examples") {
  const ShiftSet s(1.5, 1.0, 3);
  const Shift d = worst_case_shift({3.0, -1.0, 2.0}, s);
  CHECK(d.delta[0] == doctest::Approx(1.0));
  CHECK(d.delta[1] == doctest::Approx(0.0));
  CHECK(d.delta[2] == doctest::Approx(0.5));
  CHECK(dot({3.0, -1.0, 2.0}, d.delta) == doctest::Approx(4.0));
  CHECK(dot({3.0, -1.0, 2.0}, d.delta) ==
        doctest::Approx(lp_vertex_oracle({3.0, -1.0, 2.0}, s)));

  const Shift zero = worst_case_shift({0.0, 0.0, 0.0}, s);
  for (double v : zero.delta) CHECK(v == 0.0);

  const ShiftSet s1(1.0, 1.0, 1);
  const Shift neg = worst_case_shift({-2.0}, s1);
  CHECK(neg.delta[0] == doctest::Approx(-1.0));
  CHECK(dot({-2.0}, neg.delta) == doctest::Approx(2.0));
}

TEST_CASE("worst_case_shift: rejects bad gradients") {
  const ShiftSet s(1.0, 1.0, 2);
  CHECK_THROWS_AS(worst_case_shift({1.0}, s), std::invalid_argument);
  CHECK_THROWS_AS(worst_case_shift({1.0, std::nan("")}, s),
                  std::invalid_argument);
}

TEST_CASE("worst_case_shift equals the vertex-enumeration optimum") {
  Rng rng(20240811);
  for (int trial = 0; trial < 2000; ++trial) {
    const int dim = rng.uniform_int(1, 6);
    const ShiftSet s = random_set(rng, dim);
    const Vec g = random_gradient(rng, dim);
    const Shift d = worst_case_shift(g, s);
    CHECK(contains(s, d));
    CHECK(dot(g, d.delta) == doctest::Approx(lp_vertex_oracle(g, s)).epsilon(1e-9));
  }
}

TEST_CASE("worst_case_shift symmetry and scale equivariance") {
  Rng rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const int dim = rng.uniform_int(1, 6);
    const ShiftSet s = random_set(rng, dim);
    const Vec g = random_gradient(rng, dim);

    Vec neg_g(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) neg_g[i] = -g[i];
    const Shift d = worst_case_shift(g, s);
    const Shift dn = worst_case_shift(neg_g, s);
    for (std::size_t i = 0; i < g.size(); ++i)
      CHECK(dn.delta[i] == doctest::Approx(-d.delta[i]));

    const double t = rng.uniform(0.1, 10.0);
    Vec scaled(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) scaled[i] = t * g[i];
    const Shift ds = worst_case_shift(scaled, s);
    for (std::size_t i = 0; i < g.size(); ++i)
      CHECK(ds.delta[i] == doctest::Approx(d.delta[i]));
  }
}

TEST_CASE("sample_shifts: k=0, one-hot case, membership property") {
  Rng rng(3);
  const ShiftSet s(1.0, 1.0, 4);
  CHECK(sample_shifts(s, 0, rng).empty());

  auto shifts = sample_shifts(s, 5, rng);
  REQUIRE(shifts.size() == 5);
  for (const Shift& d : shifts) {
    int nonzero = 0;
    for (double v : d.delta) {
      if (v != 0.0) {
        ++nonzero;
        CHECK(std::fabs(v) == doctest::Approx(1.0));
      }
    }
    CHECK(nonzero == 1);  // m = 1, no remainder
    CHECK(contains(s, d));
  }

  // Property: every draw is a member, over many random (S, k, seed) triples.
  Rng meta(99);
  for (int trial = 0; trial < 10000; ++trial) {
    const int dim = meta.uniform_int(1, 8);
    const ShiftSet set(meta.uniform(0.0, 4.0), meta.uniform(0.01, 2.0), dim);
    Rng draw(meta.next());
    const int k = meta.uniform_int(0, 3);
    for (const Shift& d : sample_shifts(set, k, draw)) CHECK(contains(set, d));
  }
}

TEST_CASE("sample_shifts: degenerate delta_max = 0 yields zero shifts") {
  Rng rng(5);
  const ShiftSet s(2.0, 0.0, 3);
  const auto shifts = sample_shifts(s, 4, rng);
  REQUIRE(shifts.size() == 4);
  for (const Shift& d : shifts)
    for (double v : d.delta) CHECK(v == 0.0);
}

TEST_CASE("sample_shifts: prefixes agree across different k (nested sets)") {
  const ShiftSet s(1.7, 0.8, 5);
  Rng a(42), b(42);
  const auto five = sample_shifts(s, 5, a);
  const auto ten = sample_shifts(s, 10, b);
  for (std::size_t i = 0; i < five.size(); ++i)
    CHECK(five[i].delta == ten[i].delta);
}

TEST_CASE("marginal_dependence_audit: identical models and zero c") {
  const LinearExplanation model = [] {
    LinearExplanation e;
    e.weights = {0.7, -0.3};
    e.bias = 0.1;
    return e;
  }();
  const ScoreFn f = [&](const Vec& x) { return model.score01(x); };
  const Matrix rows = {{0.0, 0.1}, {1.0, -0.5}, {-2.0, 0.4}};
  const ShiftSet s(1.0, 1.0, 2);

  CHECK(marginal_dependence_audit(f, f, rows, 0, 0.5, s) == doctest::Approx(0.0));
  const ScoreFn g = [](const Vec& x) { return x[0] > 0 ? 1.0 : 0.0; };
  CHECK(marginal_dependence_audit(f, g, rows, 1, 0.0, s) == doctest::Approx(0.0));

  CHECK_THROWS_AS(marginal_dependence_audit(f, g, rows, 5, 0.5, s),
                  std::out_of_range);
  CHECK_THROWS_AS(marginal_dependence_audit(f, g, rows, 0, 2.0, s),
                  std::invalid_argument);
}

TEST_CASE("surrogate_bound_audit: degenerate cases and the ordering") {
  LinearExplanation e;
  e.weights = {0.9, -0.4};
  e.bias = 0.05;
  LinearExplanation b;
  b.weights = {-0.2, 0.6};
  b.bias = -0.3;
  const ScoreFn fe = [&](const Vec& x) { return e.score01(x); };
  const ScoreFn fb = [&](const Vec& x) { return b.score01(x); };

  Rng rng(11);
  Matrix rows;
  for (int i = 0; i < 20; ++i) rows.push_back({rng.gaussian(), rng.gaussian()});

  // E = B: both bounds vanish.
  const auto same = surrogate_bound_audit(fe, fe, rows, ShiftSet(1.0, 0.5, 2));
  CHECK(same.lhs == doctest::Approx(0.0));
  CHECK(same.rhs == doctest::Approx(0.0));

  // s0 = 0 collapses both sides to the plain empirical loss.
  const auto plain = surrogate_bound_audit(fe, fb, rows, ShiftSet(0.0, 1.0, 2));
  double expect = 0.0;
  for (const Vec& x : rows) expect += std::fabs(fe(x) - fb(x));
  expect /= static_cast<double>(rows.size());
  CHECK(plain.lhs == doctest::Approx(expect));
  CHECK(plain.rhs == doctest::Approx(expect));

  // Random instances: lhs <= rhs on identical grids.
  Rng meta(13);
  for (int trial = 0; trial < 30; ++trial) {
    LinearExplanation re;
    re.weights = {meta.uniform(-2, 2), meta.uniform(-2, 2)};
    re.bias = meta.uniform(-1, 1);
    LinearExplanation rb;
    rb.weights = {meta.uniform(-2, 2), meta.uniform(-2, 2)};
    rb.bias = meta.uniform(-1, 1);
    Matrix data;
    for (int i = 0; i < 15; ++i) data.push_back({meta.gaussian(), meta.gaussian()});
    const ShiftSet set(meta.uniform(0.1, 2.0), meta.uniform(0.05, 1.0), 2);
    const auto bounds = surrogate_bound_audit(
        [&](const Vec& x) { return re.score01(x); },
        [&](const Vec& x) { return rb.score01(x); }, data, set);
    CHECK(bounds.lhs <= bounds.rhs + 1e-9);
  }

  CHECK_THROWS_AS(
      surrogate_bound_audit(fe, fb, Matrix{{0.0, 0.0, 0.0, 0.0, 0.0}},
                            ShiftSet(1.0, 1.0, 5)),
      std::invalid_argument);
}

TEST_CASE("marginal dependence stays within twice the surrogate loss") {
  // Grid-resolution form of the 2-epsilon guarantee: c is a grid multiple so
  // both c*onehot and 0 are grid points.
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    LinearExplanation e;
    e.weights = {rng.uniform(-2, 2), rng.uniform(-2, 2)};
    e.bias = rng.uniform(-1, 1);
    LinearExplanation b;
    b.weights = {rng.uniform(-2, 2), rng.uniform(-2, 2)};
    b.bias = rng.uniform(-1, 1);
    const ScoreFn fe = [&](const Vec& x) { return e.score01(x); };
    const ScoreFn fb = [&](const Vec& x) { return b.score01(x); };

    Matrix rows;
    for (int i = 0; i < 12; ++i) rows.push_back({rng.gaussian(), rng.gaussian()});

    const double step = 0.05;
    const ShiftSet set(1.0, 0.5, 2);
    const double eps = surrogate_bound_audit(fe, fb, rows, set, step).rhs;
    const int feature = rng.uniform_int(0, 1);
    const double c = step * static_cast<double>(rng.uniform_int(-10, 10));
    const double audit =
        marginal_dependence_audit(fe, fb, rows, feature, c, set);
    CHECK(audit <= 2.0 * eps + 1e-9);
  }
}
