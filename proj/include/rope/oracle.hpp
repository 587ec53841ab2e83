#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "rope/blackbox.hpp"
#include "rope/linear_model.hpp"
#include "rope/rng.hpp"
#include "rope/ruleexp.hpp"
#include "rope/vec.hpp"

namespace rope {

// --- Multilayer perceptron ------------------------------------------------

struct MlpConfig {
  std::vector<int> layers = {16, 16, 16, 16, 16};  // hidden widths
  int epochs = 30;
  double learning_rate = 0.1;
  int batch_size = 32;
};

namespace detail {

// Fully connected network, tanh hidden activations, logistic output unit.
struct MlpModel {
  // weights[l] has rows = width of layer l+1, cols = width of layer l.
  std::vector<Matrix> weights;
  std::vector<Vec> biases;
  int input_dim = 0;

  double forward(const Vec& x, std::vector<Vec>* activations = nullptr) const {
    Vec cur = x;
    if (activations) activations->push_back(cur);
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Vec next(weights[l].size());
      for (std::size_t r = 0; r < weights[l].size(); ++r) {
        double s = biases[l][r];
        for (std::size_t c = 0; c < cur.size(); ++c)
          s += weights[l][r][c] * cur[c];
        next[r] = l + 1 == weights.size() ? s : std::tanh(s);
      }
      cur = std::move(next);
      if (activations) activations->push_back(cur);
    }
    return sigmoid(cur[0]);
  }
};

class MlpBlackBox final : public BlackBoxHandle::Impl {
 public:
  explicit MlpBlackBox(MlpModel model) : model_(std::move(model)) {}
  int query(const Vec& x) const override {
    return model_.forward(x) >= 0.5 ? 1 : 0;
  }
  bool has_score() const override { return true; }
  double score(const Vec& x) const override { return model_.forward(x); }
  int dim() const override { return model_.input_dim; }
  std::string kind() const override { return "mlp"; }

 private:
  MlpModel model_;
};

}  // namespace detail

// Trains the stand-in deep black box: tanh MLP with a logistic output unit,
// cross-entropy loss, plain SGD. Deterministic given the seed.
inline BlackBoxHandle train_mlp(const Matrix& rows,
                                const std::vector<int>& labels,
                                const MlpConfig& cfg, std::uint64_t seed) {
  if (rows.empty()) throw std::invalid_argument("train_mlp: empty data");
  if (labels.size() != rows.size())
    throw std::invalid_argument("train_mlp: label count mismatch");
  for (int w : cfg.layers)
    if (w < 1) throw std::invalid_argument("train_mlp: layer width >= 1");

  const int input_dim = static_cast<int>(rows[0].size());
  detail::MlpModel model;
  model.input_dim = input_dim;

  std::vector<int> widths;
  widths.push_back(input_dim);
  for (int w : cfg.layers) widths.push_back(w);
  widths.push_back(1);

  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int fan_in = widths[l];
    const int fan_out = widths[l + 1];
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(static_cast<std::size_t>(fan_out), Vec(static_cast<std::size_t>(fan_in)));
    for (auto& row : w)
      for (double& v : row) v = rng.uniform(-a, a);
    model.weights.push_back(std::move(w));
    model.biases.push_back(Vec(static_cast<std::size_t>(fan_out), 0.0));
  }

  const std::size_t n = rows.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  // Gradient buffers mirror the parameter shapes.
  auto zero_like_w = [&] {
    std::vector<Matrix> g;
    for (const Matrix& w : model.weights)
      g.push_back(Matrix(w.size(), Vec(w[0].size(), 0.0)));
    return g;
  };
  auto zero_like_b = [&] {
    std::vector<Vec> g;
    for (const Vec& b : model.biases) g.push_back(Vec(b.size(), 0.0));
    return g;
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < n;
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      auto gw = zero_like_w();
      auto gb = zero_like_b();
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t i = static_cast<std::size_t>(order[k]);
        std::vector<Vec> acts;
        const double p = model.forward(rows[i], &acts);
        // Output delta for sigmoid + cross-entropy.
        Vec delta{p - static_cast<double>(labels[i])};
        for (std::size_t l = model.weights.size(); l-- > 0;) {
          const Vec& input = acts[l];
          for (std::size_t r = 0; r < delta.size(); ++r) {
            gb[l][r] += delta[r];
            for (std::size_t c = 0; c < input.size(); ++c)
              gw[l][r][c] += delta[r] * input[c];
          }
          if (l == 0) break;
          Vec prev(model.weights[l][0].size(), 0.0);
          for (std::size_t c = 0; c < prev.size(); ++c) {
            double s = 0.0;
            for (std::size_t r = 0; r < delta.size(); ++r)
              s += model.weights[l][r][c] * delta[r];
            const double a = acts[l][c];  // tanh activation of layer l
            prev[c] = s * (1.0 - a * a);
          }
          delta = std::move(prev);
        }
      }
      const double scale =
          cfg.learning_rate / static_cast<double>(stop - start);
      for (std::size_t l = 0; l < model.weights.size(); ++l) {
        for (std::size_t r = 0; r < model.weights[l].size(); ++r) {
          model.biases[l][r] -= scale * gb[l][r];
          for (std::size_t c = 0; c < model.weights[l][r].size(); ++c)
            model.weights[l][r][c] -= scale * gw[l][r][c];
        }
      }
    }
    for (const Matrix& w : model.weights)
      for (const Vec& row : w)
        if (!all_finite(row))
          throw std::runtime_error("train_mlp: training diverged at epoch " +
                                   std::to_string(epoch));
  }
  return BlackBoxHandle(std::make_shared<detail::MlpBlackBox>(std::move(model)));
}

// --- Gradient-boosted stumps ----------------------------------------------

namespace detail {

struct Stump {
  int feature = -1;  // -1 means a constant adjustment (both leaves equal)
  double threshold = 0.0;
  double left_value = 0.0;   // x[feature] <= threshold
  double right_value = 0.0;

  double value(const Vec& x) const {
    if (feature < 0) return left_value;
    return x[static_cast<std::size_t>(feature)] <= threshold ? left_value
                                                             : right_value;
  }
};

struct GbModel {
  double f0 = 0.0;
  double shrinkage = 0.1;
  std::vector<Stump> stumps;
  int input_dim = 0;

  double margin(const Vec& x) const {
    double f = f0;
    for (const Stump& s : stumps) f += shrinkage * s.value(x);
    return f;
  }
};

class GbBlackBox final : public BlackBoxHandle::Impl {
 public:
  explicit GbBlackBox(GbModel model) : model_(std::move(model)) {}
  int query(const Vec& x) const override {
    return sigmoid(model_.margin(x)) >= 0.5 ? 1 : 0;
  }
  bool has_score() const override { return true; }
  double score(const Vec& x) const override {
    return sigmoid(model_.margin(x));
  }
  int dim() const override { return model_.input_dim; }
  std::string kind() const override { return "gb_stumps"; }

 private:
  GbModel model_;
};

}  // namespace detail

// Gradient boosting with logistic loss and depth-1 regression stumps.
// Leaf values are Newton steps; shrinkage 0.1. rounds = 0 yields the
// constant majority predictor. Fitting is deterministic; the seed parameter
// is part of the uniform trainer interface.
inline BlackBoxHandle train_gb_stumps(const Matrix& rows,
                                      const std::vector<int>& labels,
                                      int rounds, std::uint64_t /*seed*/ = 0) {
  if (rows.empty()) throw std::invalid_argument("train_gb_stumps: empty data");
  if (labels.size() != rows.size())
    throw std::invalid_argument("train_gb_stumps: label count mismatch");
  if (rounds < 0) throw std::invalid_argument("train_gb_stumps: rounds >= 0");

  const std::size_t n = rows.size();
  const std::size_t dim = rows[0].size();

  detail::GbModel model;
  model.input_dim = static_cast<int>(dim);
  double mean_y = 0.0;
  for (int y : labels) mean_y += static_cast<double>(y);
  mean_y /= static_cast<double>(n);
  const double p0 = std::min(1.0 - 1e-6, std::max(1e-6, mean_y));
  model.f0 = std::log(p0 / (1.0 - p0));

  // Pre-sorted row indices per feature for threshold scans.
  std::vector<std::vector<std::size_t>> sorted(dim);
  for (std::size_t f = 0; f < dim; ++f) {
    sorted[f].resize(n);
    std::iota(sorted[f].begin(), sorted[f].end(), 0);
    std::sort(sorted[f].begin(), sorted[f].end(),
              [&](std::size_t a, std::size_t b) {
                if (rows[a][f] != rows[b][f]) return rows[a][f] < rows[b][f];
                return a < b;
              });
  }

  Vec margin(n, model.f0);
  const double eps = 1e-12;
  for (int round = 0; round < rounds; ++round) {
    Vec residual(n), hess(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(margin[i]);
      residual[i] = static_cast<double>(labels[i]) - p;
      hess[i] = std::max(p * (1.0 - p), eps);
    }
    double total_r = std::accumulate(residual.begin(), residual.end(), 0.0);
    double total_h = std::accumulate(hess.begin(), hess.end(), 0.0);

    detail::Stump best;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < dim; ++f) {
      double left_r = 0.0, left_h = 0.0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        const std::size_t i = sorted[f][k];
        left_r += residual[i];
        left_h += hess[i];
        const double v = rows[i][f];
        const double v_next = rows[sorted[f][k + 1]][f];
        if (v == v_next) continue;
        const double right_r = total_r - left_r;
        const double right_h = total_h - left_h;
        const double score = left_r * left_r / std::max(left_h, eps) +
                             right_r * right_r / std::max(right_h, eps);
        if (score > best_score) {  // ties keep the first (lowest f, lowest cut)
          best_score = score;
          best.feature = static_cast<int>(f);
          best.threshold = 0.5 * (v + v_next);
          best.left_value = left_r / std::max(left_h, eps);
          best.right_value = right_r / std::max(right_h, eps);
        }
      }
    }
    if (best.feature < 0) {
      // No usable split (constant features); fall back to a global Newton
      // adjustment, which still reduces the loss.
      best.left_value = best.right_value = total_r / std::max(total_h, eps);
    }
    model.stumps.push_back(best);
    for (std::size_t i = 0; i < n; ++i)
      margin[i] += model.shrinkage * best.value(rows[i]);
  }
  return BlackBoxHandle(std::make_shared<detail::GbBlackBox>(std::move(model)));
}

// Logistic training loss of a boosted model on its own training data,
// exposed for the per-round monotonicity check.
inline Vec gb_stumps_loss_curve(const Matrix& rows,
                                const std::vector<int>& labels, int rounds) {
  // Refits round by round; cheap at test scale.
  Vec losses;
  for (int r = 0; r <= rounds; ++r) {
    BlackBoxHandle h = train_gb_stumps(rows, labels, r);
    double loss = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double p =
          std::min(1.0 - 1e-12, std::max(1e-12, h.score(rows[i])));
      loss += labels[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
    }
    losses.push_back(loss / static_cast<double>(rows.size()));
  }
  return losses;
}

// --- Plain logistic black box ----------------------------------------------

// Simple SGD logistic regression on observed labels. This is the trainer
// for interpretable "black boxes" in the correctness and stability
// experiments; it does not share the robust-explanation training path.
inline BlackBoxHandle train_logistic_blackbox(const Matrix& rows,
                                              const std::vector<int>& labels,
                                              int epochs, double learning_rate,
                                              double l2_penalty,
                                              std::uint64_t seed,
                                              LinearExplanation* out_model =
                                                  nullptr) {
  if (rows.empty())
    throw std::invalid_argument("train_logistic_blackbox: empty data");
  if (labels.size() != rows.size())
    throw std::invalid_argument("train_logistic_blackbox: label count mismatch");
  const std::size_t n = rows.size();
  const std::size_t dim = rows[0].size();

  Vec w(dim, 0.0);
  double b = 0.0;
  Rng rng(seed);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  const int batch = 32;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      Vec gw(dim, 0.0);
      double gb = 0.0;
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t i = static_cast<std::size_t>(order[k]);
        const double p = sigmoid(dot(w, rows[i]) + b);
        const double d = p - static_cast<double>(labels[i]);
        for (std::size_t j = 0; j < dim; ++j) gw[j] += d * rows[i][j];
        gb += d;
      }
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (std::size_t j = 0; j < dim; ++j)
        w[j] -= learning_rate * (gw[j] * scale + l2_penalty * w[j]);
      b -= learning_rate * gb * scale;
    }
  }
  LinearExplanation model;
  model.weights = std::move(w);
  model.bias = b;
  model.link = Link::logistic;
  model.threshold = 0.5;
  if (out_model) *out_model = model;
  return wrap_interpretable(model, "logistic");
}

// --- Decision-set black box -------------------------------------------------

// Mines rules against the observed labels and optimizes the nominal (zero
// shift) objective, yielding an interpretable decision-set black box.
inline BlackBoxHandle train_decision_set_blackbox(
    const Matrix& rows, const std::vector<int>& labels,
    const MiningConfig& mining, double lambda, int alpha, std::uint64_t seed,
    DecisionSet* out_model = nullptr) {
  const std::vector<Rule> universe = mine_candidate_rules(rows, labels, mining);
  RuleObjectiveConfig cfg;
  cfg.lambda = lambda;
  cfg.alpha = alpha;
  cfg.shifts.clear();  // zero shift only: nominal objective

  // The label-backed handle is only queried at unperturbed training rows
  // while optimizing (the shift list is just {0}). Keys normalize -0.0 so
  // the x + 0 round trip inside the objective cannot miss.
  auto table = std::make_shared<std::unordered_map<std::string, int>>();
  const auto key_of = [](const Vec& x) {
    std::string key;
    key.resize(x.size() * sizeof(double));
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double v = x[j] == 0.0 ? 0.0 : x[j];
      std::memcpy(key.data() + j * sizeof(double), &v, sizeof(double));
    }
    return key;
  };
  for (std::size_t i = 0; i < rows.size(); ++i)
    table->emplace(key_of(rows[i]), labels[i]);
  BlackBoxHandle label_handle = make_function_blackbox(
      static_cast<int>(rows[0].size()),
      [table, key_of](const Vec& x) {
        const auto it = table->find(key_of(x));
        if (it == table->end())
          throw std::logic_error("label handle queried off the training rows");
        return it->second;
      },
      nullptr, "labels");

  DecisionSet ds = local_search_optimize(universe, rows, label_handle, cfg, seed);
  if (out_model) *out_model = ds;
  return wrap_interpretable(ds, static_cast<int>(rows[0].size()));
}

}  // namespace rope
