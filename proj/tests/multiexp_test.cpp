#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "rope/blackbox.hpp"
#include "rope/dataset.hpp"
#include "rope/metrics.hpp"
#include "rope/multiexp.hpp"

using namespace rope;

namespace {

Matrix two_blobs(Rng& rng, int per_blob, int dim, double center) {
  Matrix rows;
  for (int b = 0; b < 2; ++b) {
    const double c = b == 0 ? -center : center;
    for (int i = 0; i < per_blob; ++i) {
      Vec x(static_cast<std::size_t>(dim));
      for (double& v : x) v = c + rng.gaussian();
      rows.push_back(std::move(x));
    }
  }
  return rows;
}

std::vector<std::string> names(int dim) {
  std::vector<std::string> out;
  for (int j = 0; j < dim; ++j) out.push_back("x" + std::to_string(j));
  return out;
}

}  // namespace

TEST_CASE("kmeans: determinism and non-increasing inertia") {
  Rng rng(5);
  const Matrix rows = two_blobs(rng, 100, 3, 4.0);

  const KMeansResult a = kmeans(rows, 3, 77);
  const KMeansResult b = kmeans(rows, 3, 77);
  CHECK(a.assignment == b.assignment);
  CHECK(a.centroids == b.centroids);
  CHECK(a.inertia == b.inertia);

  for (std::size_t i = 1; i < a.inertia_history.size(); ++i)
    CHECK(a.inertia_history[i] <= a.inertia_history[i - 1] + 1e-9);

  CHECK_THROWS_AS(kmeans(rows, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(kmeans(Matrix{{1.0}}, 2, 1), std::invalid_argument);
}

TEST_CASE("select_k_bic: two well-separated blobs give K = 2") {
  int hits = 0;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(static_cast<std::uint64_t>(1000 + seed));
    const Matrix rows = two_blobs(rng, 250, 2, 5.0);
    if (select_k_bic(rows, 6, static_cast<std::uint64_t>(seed)) == 2) ++hits;
  }
  CHECK(hits >= 18);
}

TEST_CASE("select_k_bic: degenerate and boundary cases") {
  // Single point.
  CHECK(select_k_bic(Matrix{{0.5, 1.0}}, 5, 3) == 1);
  // k_max = 1.
  Rng rng(9);
  const Matrix rows = two_blobs(rng, 50, 2, 5.0);
  CHECK(select_k_bic(rows, 1, 3) == 1);
  // Duplicated data: zero variance at K = 1 already; smallest K wins.
  const Matrix dup(40, Vec{1.0, 2.0});
  CHECK(select_k_bic(dup, 5, 3) == 1);
}

TEST_CASE("route: single entry, exact representative, tie to lower index") {
  ClusteredExplanation ce;
  LinearExplanation pos = make_identity_linear({1.0}, 0.0);
  ce.entries.push_back({{-1.0}, 0.5, pos});

  CHECK(route(ce, {5.0}).first == 0);  // K = 1: always entry 0

  LinearExplanation neg = make_identity_linear({-1.0}, 0.0);
  ce.entries.push_back({{1.0}, 0.5, neg});

  CHECK(route(ce, {-1.0}).first == 0);  // exact representative
  CHECK(route(ce, {1.0}).first == 1);
  CHECK(route(ce, {0.0}).first == 0);  // equidistant: lower index
  CHECK(route(ce, {0.5}).second == neg.predict({0.5}));
}

TEST_CASE("train_multi: K = 1 equals the global fit; weights sum to one") {
  Rng rng(21);
  Matrix rows;
  for (int i = 0; i < 150; ++i) rows.push_back({rng.gaussian(), rng.gaussian()});
  const Dataset data = Dataset::from_standardized(rows, names(2));
  const BlackBoxHandle bb = make_function_blackbox(
      2, [](const Vec& x) { return x[0] - x[1] >= 0.0 ? 1 : 0; });
  const ShiftSet s(1.0, 1.0, 2);
  ExplainConfig cfg;
  cfg.epochs = 10;

  const std::uint64_t seed = 424242;
  const ClusteredExplanation ce =
      train_multi(data, bb, s, 1, Family::linear, cfg, seed);
  REQUIRE(ce.K() == 1);
  CHECK(ce.entries[0].weight == doctest::Approx(1.0));

  const LinearExplanation global = fit_robust_linear(
      data, bb, s, cfg, derive_seed(seed, 0x434cu, 0));
  const auto& entry = std::get<LinearExplanation>(ce.entries[0].explanation);
  CHECK(entry.weights == global.weights);
  CHECK(entry.bias == global.bias);

  for (int k : {2, 3, 5}) {
    const ClusteredExplanation multi =
        train_multi(data, bb, s, k, Family::linear, cfg, seed);
    double total = 0.0;
    for (const auto& e : multi.entries) {
      CHECK(e.weight > 0.0);
      total += e.weight;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("train_multi: per-cluster weights track per-blob black-box behavior") {
  // Two mean-separated groups; the black box reads x1 with opposite signs
  // on the two groups.
  Rng rng(31);
  const Matrix rows = two_blobs(rng, 200, 2, 5.0);
  const Dataset data = Dataset::from_standardized(rows, names(2));
  const BlackBoxHandle bb = make_function_blackbox(2, [](const Vec& x) {
    return x[0] < 0.0 ? (x[1] >= 0.0 ? 1 : 0) : (x[1] < 0.0 ? 1 : 0);
  });
  const ShiftSet s(1.0, 1.0, 2);
  ExplainConfig cfg;

  const ClusteredExplanation ce =
      train_multi(data, bb, s, 2, Family::linear, cfg, 777);
  REQUIRE(ce.K() == 2);

  // Identify clusters by representative sign on x0.
  const auto& e0 = std::get<LinearExplanation>(ce.entries[0].explanation);
  const auto& e1 = std::get<LinearExplanation>(ce.entries[1].explanation);
  const bool first_is_left = ce.entries[0].representative[0] < 0.0;
  const LinearExplanation& left = first_is_left ? e0 : e1;
  const LinearExplanation& right = first_is_left ? e1 : e0;
  CHECK(left.weights[1] > 0.0);
  CHECK(right.weights[1] < 0.0);

  // Each blob is predicted with high fidelity through routing.
  Matrix left_rows, right_rows;
  for (const Vec& x : data.rows())
    (x[0] < 0.0 ? left_rows : right_rows).push_back(x);
  const AnyExplanation any{ce};
  CHECK(fidelity(any, left_rows, bb) >= 0.9);
  CHECK(fidelity(any, right_rows, bb) >= 0.9);
}

TEST_CASE("clustered explanation JSON round-trip") {
  ClusteredExplanation ce;
  LinearExplanation lin = make_identity_linear({0.25, -1.5}, 0.75);
  DecisionSet ds;
  ds.default_label = 1;
  Rule r;
  r.condition = {Predicate{0, PredOp::LE, 0.125}};
  r.label = 0;
  r.precision = 0.5;
  ds.rules = {r};
  ce.entries.push_back({{0.1, 0.2}, 0.25, lin});
  ce.entries.push_back({{-0.3, 0.4}, 0.75, ds});

  const ClusteredExplanation back = clustered_from_json(to_json(ce));
  REQUIRE(back.K() == 2);
  CHECK(back.entries[0].representative == ce.entries[0].representative);
  CHECK(back.entries[0].weight == 0.25);
  const auto& lin_back = std::get<LinearExplanation>(back.entries[0].explanation);
  CHECK(lin_back.weights == lin.weights);
  CHECK(lin_back.bias == lin.bias);
  const auto& ds_back = std::get<DecisionSet>(back.entries[1].explanation);
  CHECK(ds_back.rules[0].condition[0].value == 0.125);
}
