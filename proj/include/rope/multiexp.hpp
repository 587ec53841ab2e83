#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "rope/explain.hpp"
#include "rope/rng.hpp"
#include "rope/vec.hpp"

namespace rope {

// --- K-means ---------------------------------------------------------------

struct KMeansResult {
  Matrix centroids;
  std::vector<int> assignment;
  double inertia = 0.0;
  Vec inertia_history;  // per Lloyd iteration of the winning restart
};

namespace detail {

inline int nearest_centroid(const Vec& x, const Matrix& centroids) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = sq_dist(x, centroids[c]);
    if (d < best_d) {  // ties keep the lower index
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

inline KMeansResult lloyd_once(const Matrix& rows, int k, Rng& rng,
                               int max_iter) {
  const std::size_t n = rows.size();
  const std::size_t dim = rows[0].size();

  // k-means++ seeding.
  Matrix centroids;
  centroids.push_back(rows[rng.below(n)]);
  Vec dist2(n);
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec& c : centroids) best = std::min(best, sq_dist(rows[i], c));
      dist2[i] = best;
      total += best;
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += dist2[i];
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.below(n);  // duplicated data: any point works
    }
    centroids.push_back(rows[pick]);
  }

  KMeansResult res;
  res.assignment.assign(n, -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const int a = nearest_centroid(rows[i], centroids);
      if (a != res.assignment[i]) {
        res.assignment[i] = a;
        changed = true;
      }
    }
    Matrix sums(static_cast<std::size_t>(k), Vec(dim, 0.0));
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = static_cast<std::size_t>(res.assignment[i]);
      ++counts[c];
      for (std::size_t j = 0; j < dim; ++j) sums[c][j] += rows[i][j];
    }
    for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
      if (counts[c] == 0) {
        // Re-seed an empty cluster with the point farthest from its
        // centroid, deterministically.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = sq_dist(
              rows[i],
              centroids[static_cast<std::size_t>(res.assignment[i])]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centroids[c] = rows[far];
        res.assignment[far] = static_cast<int>(c);
        changed = true;
        continue;
      }
      for (std::size_t j = 0; j < dim; ++j)
        centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
    }
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      inertia += sq_dist(rows[i],
                         centroids[static_cast<std::size_t>(res.assignment[i])]);
    res.inertia_history.push_back(inertia);
    res.inertia = inertia;
    if (!changed) break;
  }
  res.centroids = std::move(centroids);
  return res;
}

}  // namespace detail

// Lloyd's algorithm with k-means++ initialization; best inertia over the
// given restarts wins. Deterministic given the seed.
inline KMeansResult kmeans(const Matrix& rows, int k, std::uint64_t seed,
                           int restarts = 10, int max_iter = 100) {
  if (rows.empty()) throw std::invalid_argument("kmeans: empty data");
  if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
  if (static_cast<std::size_t>(k) > rows.size())
    throw std::invalid_argument("kmeans: k exceeds the number of points");

  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    KMeansResult cur = detail::lloyd_once(rows, k, rng, max_iter);
    if (cur.inertia < best.inertia) best = std::move(cur);
  }
  return best;
}

// Chooses K by the spherical-Gaussian-mixture Bayesian Information
// Criterion. With pooled per-coordinate within-cluster variance s2 and
// cluster sizes n_k:
//   BIC(K) = N d ln(s2) - 2 sum_k n_k ln(n_k / N) + K (d + 1) ln N,
// dropping K-independent constants. Ties and the degenerate s2 = 0 case
// resolve to the smallest K.
inline int select_k_bic(const Matrix& rows, int k_max, std::uint64_t seed) {
  if (k_max < 1) throw std::invalid_argument("select_k_bic: k_max must be >= 1");
  if (rows.empty()) throw std::invalid_argument("select_k_bic: empty data");
  const double n = static_cast<double>(rows.size());
  const double d = static_cast<double>(rows[0].size());
  const int cap = std::min<int>(k_max, static_cast<int>(rows.size()));

  int best_k = 1;
  double best_bic = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= cap; ++k) {
    const KMeansResult km =
        kmeans(rows, k, derive_seed(seed, 0x4249u, static_cast<std::uint64_t>(k)));
    const double s2 = km.inertia / (n * d);
    double bic;
    if (s2 < 1e-15) {
      bic = -std::numeric_limits<double>::infinity();
    } else {
      std::vector<int> counts(static_cast<std::size_t>(k), 0);
      for (int a : km.assignment) ++counts[static_cast<std::size_t>(a)];
      double mix = 0.0;
      for (int c : counts)
        if (c > 0) mix += static_cast<double>(c) * std::log(static_cast<double>(c) / n);
      bic = n * d * std::log(s2) - 2.0 * mix +
            static_cast<double>(k) * (d + 1.0) * std::log(n);
    }
    if (bic < best_bic) {  // strict: ties keep the smaller K
      best_bic = bic;
      best_k = k;
      if (bic == -std::numeric_limits<double>::infinity()) break;
    }
  }
  return best_k;
}

// --- Clustered explanations --------------------------------------------------

enum class Family { linear, decision_set };

inline const char* family_name(Family f) {
  return f == Family::linear ? "linear" : "decision_set";
}

using ExplanationVariant = std::variant<LinearExplanation, DecisionSet>;

// K representatives with per-cluster explanations; weights are cluster
// fractions and sum to one.
struct ClusteredExplanation {
  struct Entry {
    Vec representative;
    double weight = 0.0;
    ExplanationVariant explanation;
  };
  std::vector<Entry> entries;

  int K() const { return static_cast<int>(entries.size()); }
};

inline int predict_variant(const ExplanationVariant& e, const Vec& x) {
  if (std::holds_alternative<LinearExplanation>(e))
    return std::get<LinearExplanation>(e).predict(x);
  return std::get<DecisionSet>(e).predict(x);
}

// Nearest-representative routing by Euclidean distance, ties to the lower
// index. Returns (entry index, label).
inline std::pair<int, int> route(const ClusteredExplanation& ce, const Vec& x) {
  if (ce.entries.empty())
    throw std::invalid_argument("route: empty clustered explanation");
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ce.entries.size(); ++i) {
    const double d = sq_dist(x, ce.entries[i].representative);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return {best, predict_variant(ce.entries[static_cast<std::size_t>(best)].explanation, x)};
}

// Clusters the data, fits one robust explanation per cluster against the
// same black box and shift set, and uses centroids as representatives.
// Per-cluster jobs run concurrently on independent derived RNG streams, so
// the result does not depend on scheduling.
inline ClusteredExplanation train_multi(const Dataset& data,
                                        const BlackBoxHandle& blackbox,
                                        const ShiftSet& shift_set, int k,
                                        Family family,
                                        const ExplainConfig& cfg,
                                        std::uint64_t seed) {
  const Matrix& rows = data.rows();
  if (static_cast<std::size_t>(k) > rows.size())
    throw std::invalid_argument("train_multi: K exceeds the number of points");
  const KMeansResult km = kmeans(rows, k, derive_seed(seed, 0x4b4du));

  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < rows.size(); ++i)
    members[static_cast<std::size_t>(km.assignment[i])].push_back(i);

  // Never emit an empty entry: an empty cluster steals its nearest point
  // from a cluster that can spare one.
  for (std::size_t c = 0; c < members.size(); ++c) {
    if (!members[c].empty()) continue;
    std::size_t best_i = rows.size();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t o = 0; o < members.size(); ++o) {
      if (members[o].size() < 2) continue;
      for (std::size_t i : members[o]) {
        const double d = sq_dist(rows[i], km.centroids[c]);
        if (d < best_d) {
          best_d = d;
          best_i = i;
        }
      }
    }
    if (best_i == rows.size())
      throw std::runtime_error("train_multi: cannot populate empty cluster");
    for (auto& m : members)
      m.erase(std::remove(m.begin(), m.end(), best_i), m.end());
    members[c].push_back(best_i);
  }

  ClusteredExplanation ce;
  ce.entries.resize(static_cast<std::size_t>(k));

  std::vector<std::string> errors(static_cast<std::size_t>(k));
  auto fit_cluster = [&](std::size_t c) {
    try {
      const Dataset cluster_data = data.subset(members[c]);
      const std::uint64_t cluster_seed = derive_seed(seed, 0x434cu, c);
      ClusteredExplanation::Entry entry;
      entry.representative = km.centroids[c];
      entry.weight = static_cast<double>(members[c].size()) /
                     static_cast<double>(rows.size());
      if (family == Family::linear)
        entry.explanation =
            fit_robust_linear(cluster_data, blackbox, shift_set, cfg, cluster_seed);
      else
        entry.explanation =
            train_robust_dset(cluster_data, blackbox, shift_set, cfg, cluster_seed);
      ce.entries[c] = std::move(entry);
    } catch (const std::exception& ex) {
      errors[c] = ex.what();
    }
  };

  const unsigned workers =
      std::min<unsigned>(std::max(1u, std::thread::hardware_concurrency()),
                         static_cast<unsigned>(k));
  if (workers <= 1) {
    for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) fit_cluster(c);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t c = w; c < static_cast<std::size_t>(k); c += workers)
          fit_cluster(c);
      });
    }
    for (std::thread& t : pool) t.join();
  }
  for (std::size_t c = 0; c < errors.size(); ++c)
    if (!errors[c].empty())
      throw std::runtime_error("train_multi: cluster " + std::to_string(c) +
                               " failed: " + errors[c]);
  return ce;
}

// --- Serialization -----------------------------------------------------------

inline nlohmann::json to_json(const ExplanationVariant& e) {
  if (std::holds_alternative<LinearExplanation>(e)) {
    nlohmann::json j = to_json(std::get<LinearExplanation>(e));
    j["family"] = "linear";
    return j;
  }
  nlohmann::json j = to_json(std::get<DecisionSet>(e));
  j["family"] = "decision_set";
  return j;
}

inline ExplanationVariant variant_from_json(const nlohmann::json& j) {
  const std::string family =
      j.contains("family") ? j.at("family").get<std::string>()
                           : (j.contains("weights") ? "linear" : "decision_set");
  if (family == "linear") return linear_from_json(j);
  return decision_set_from_json(j);
}

inline nlohmann::json to_json(const ClusteredExplanation& ce) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : ce.entries) {
    entries.push_back({{"representative", e.representative},
                       {"weight", e.weight},
                       {"explanation", to_json(e.explanation)}});
  }
  return nlohmann::json{
      {"format_version", 1}, {"K", ce.K()}, {"entries", entries}};
}

inline ClusteredExplanation clustered_from_json(const nlohmann::json& j) {
  if (j.at("format_version").get<int>() != 1)
    throw std::invalid_argument(
        "clustered explanation: unsupported format_version");
  ClusteredExplanation ce;
  for (const auto& je : j.at("entries")) {
    ClusteredExplanation::Entry e;
    e.representative = je.at("representative").get<Vec>();
    e.weight = je.at("weight").get<double>();
    e.explanation = variant_from_json(je.at("explanation"));
    ce.entries.push_back(std::move(e));
  }
  if (ce.K() != j.at("K").get<int>())
    throw std::invalid_argument("clustered explanation: K mismatch");
  return ce;
}

}  // namespace rope
