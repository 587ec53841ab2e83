#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rope/blackbox.hpp"
#include "rope/dataset.hpp"
#include "rope/linear_model.hpp"
#include "rope/rng.hpp"
#include "rope/shiftset.hpp"
#include "rope/vec.hpp"

namespace rope {

enum class LossKind { logistic_loss, squared };

struct TrainConfig {
  // Seed must be given explicitly; there is no entropy default anywhere in
  // this library.
  explicit TrainConfig(std::uint64_t seed_) : seed(seed_) {}

  int epochs = 30;
  double learning_rate = 0.1;
  int batch_size = 32;
  double l2_penalty = 1e-4;
  std::uint64_t seed;
  LossKind loss = LossKind::logistic_loss;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs >= 1");
    if (!(learning_rate > 0.0))
      throw std::invalid_argument("TrainConfig: learning_rate > 0");
    if (batch_size < 1)
      throw std::invalid_argument("TrainConfig: batch_size >= 1");
    if (l2_penalty < 0.0)
      throw std::invalid_argument("TrainConfig: l2_penalty >= 0");
  }
};

namespace detail {

inline double clamp_prob(double p) {
  return std::min(1.0 - 1e-12, std::max(1e-12, p));
}

}  // namespace detail

// Loss of the explanation at x against a fixed hard label y.
inline double pointwise_loss(const LinearExplanation& e, const Vec& x, int y,
                             LossKind loss) {
  const double yd = static_cast<double>(y);
  if (loss == LossKind::logistic_loss) {
    if (e.link != Link::logistic)
      throw std::invalid_argument("logistic_loss requires the logistic link");
    const double p = detail::clamp_prob(e.score(x));
    return -(yd * std::log(p) + (1.0 - yd) * std::log(1.0 - p));
  }
  const double s = e.score(x);
  return (s - yd) * (s - yd);
}

struct ThetaGrad {
  double loss = 0.0;
  Vec dw;
  double db = 0.0;
};

// Analytic gradient of pointwise_loss with respect to (weights, bias).
inline ThetaGrad pointwise_loss_grad(const LinearExplanation& e, const Vec& x,
                                     int y, LossKind loss) {
  ThetaGrad g;
  g.loss = pointwise_loss(e, x, y, loss);
  const double yd = static_cast<double>(y);
  double dl_draw;  // d loss / d raw
  if (loss == LossKind::logistic_loss) {
    const double p = sigmoid(e.raw(x));
    dl_draw = p - yd;
  } else if (e.link == Link::logistic) {
    const double p = sigmoid(e.raw(x));
    dl_draw = 2.0 * (p - yd) * p * (1.0 - p);
  } else {
    dl_draw = 2.0 * (e.raw(x) - yd);
  }
  g.dw.resize(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) g.dw[j] = dl_draw * x[j];
  g.db = dl_draw;
  return g;
}

// Gradient of the loss with respect to the input x, holding the label
// fixed. This is what feeds the inner linear program.
inline Vec input_gradient(const LinearExplanation& e, const Vec& x, int y,
                          LossKind loss) {
  const double yd = static_cast<double>(y);
  double dl_draw;
  if (loss == LossKind::logistic_loss) {
    dl_draw = sigmoid(e.raw(x)) - yd;
  } else if (e.link == Link::logistic) {
    const double p = sigmoid(e.raw(x));
    dl_draw = 2.0 * (p - yd) * p * (1.0 - p);
  } else {
    dl_draw = 2.0 * (e.raw(x) - yd);
  }
  Vec g(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) g[j] = dl_draw * e.weights[j];
  return g;
}

// Adversarial stochastic gradient descent. Each step linearizes the inner
// maximization around the sample: the input gradient (with the black-box
// label frozen at B(x)) picks the worst-case shift from the polytope, the
// black box is re-queried at the shifted point, and the parameter gradient
// is taken there. With s0 = 0 this reduces exactly to plain SGD on
// (x, B(x)). Deterministic given cfg.seed.
inline LinearExplanation train_robust_linear(const Dataset& data,
                                             const BlackBoxHandle& blackbox,
                                             const ShiftSet& shift_set,
                                             const TrainConfig& cfg) {
  cfg.validate();
  const Matrix& rows = data.rows();
  if (rows.empty()) throw std::invalid_argument("train_robust_linear: empty data");
  const std::size_t n = rows.size();
  const std::size_t dim = rows[0].size();
  if (static_cast<int>(dim) != shift_set.dim)
    throw std::invalid_argument("train_robust_linear: ShiftSet dim mismatch");

  // Both losses train the logistic link; squared loss is Brier-style on the
  // probability output. Identity-link explanations are constructed directly,
  // not trained here.
  LinearExplanation e;
  e.weights.assign(dim, 0.0);
  e.bias = 0.0;
  e.link = Link::logistic;
  e.threshold = 0.5;
  e.feature_names = data.feature_names();

  std::vector<int> base_labels;
  try {
    // B is deterministic, so the unperturbed labels can be fetched once.
    base_labels = blackbox.query_batch(rows);
  } catch (const std::exception& ex) {
    throw std::runtime_error(
        std::string("train_robust_linear: black-box query failed on the "
                    "training rows: ") +
        ex.what());
  }

  Rng rng(cfg.seed);
  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);

  Vec grad_w(dim);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < n;
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      std::fill(grad_w.begin(), grad_w.end(), 0.0);
      double grad_b = 0.0;
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t i = static_cast<std::size_t>(order[k]);
        const Vec& x = rows[i];
        const int y = base_labels[i];
        const Vec gx = input_gradient(e, x, y, cfg.loss);
        const Shift adv = worst_case_shift(gx, shift_set);
        Vec shifted = add(x, adv.delta);
        int y_shift;
        try {
          y_shift = blackbox.query(shifted);
        } catch (const std::exception& ex) {
          throw std::runtime_error("train_robust_linear: black-box query failed "
                                   "at sample " + std::to_string(i) + ": " +
                                   ex.what());
        }
        const ThetaGrad tg = pointwise_loss_grad(e, shifted, y_shift, cfg.loss);
        for (std::size_t j = 0; j < dim; ++j) grad_w[j] += tg.dw[j];
        grad_b += tg.db;
      }
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (std::size_t j = 0; j < dim; ++j) {
        e.weights[j] -= cfg.learning_rate *
                        (grad_w[j] * scale + cfg.l2_penalty * e.weights[j]);
      }
      e.bias -= cfg.learning_rate * grad_b * scale;
    }
    if (!all_finite(e.weights) || !std::isfinite(e.bias))
      throw std::runtime_error(
          "train_robust_linear: parameters diverged (non-finite) at epoch " +
          std::to_string(epoch));
  }
  return e;
}

// Mode for robust_empirical_loss. The per-point maximum always includes the
// unperturbed point, so the robust loss dominates the plain empirical loss
// for any explanation.
struct RobustLossMode {
  enum class Kind { linearized, sampled } kind = Kind::linearized;
  int k = 0;
  std::uint64_t seed = 0;

  static RobustLossMode linearized() { return RobustLossMode{}; }
  static RobustLossMode sampled(int k, std::uint64_t seed) {
    RobustLossMode m;
    m.kind = Kind::sampled;
    m.k = k;
    m.seed = seed;
    return m;
  }
};

inline double robust_empirical_loss(const LinearExplanation& e,
                                    const Dataset& data,
                                    const BlackBoxHandle& blackbox,
                                    const ShiftSet& shift_set,
                                    const RobustLossMode& mode,
                                    LossKind loss = LossKind::logistic_loss) {
  const Matrix& rows = data.rows();
  if (rows.empty())
    throw std::invalid_argument("robust_empirical_loss: empty data");

  std::vector<Shift> shifts;
  if (mode.kind == RobustLossMode::Kind::sampled) {
    Rng rng(mode.seed);
    shifts = sample_shifts(shift_set, mode.k, rng);
  }

  double total = 0.0;
  for (const Vec& x : rows) {
    const int y0 = blackbox.query(x);
    double worst = pointwise_loss(e, x, y0, loss);
    if (mode.kind == RobustLossMode::Kind::linearized) {
      const Vec gx = input_gradient(e, x, y0, loss);
      const Shift adv = worst_case_shift(gx, shift_set);
      const Vec shifted = add(x, adv.delta);
      worst = std::max(worst,
                       pointwise_loss(e, shifted, blackbox.query(shifted), loss));
    } else {
      for (const Shift& s : shifts) {
        const Vec shifted = add(x, s.delta);
        worst = std::max(
            worst, pointwise_loss(e, shifted, blackbox.query(shifted), loss));
      }
    }
    total += worst;
  }
  return total / static_cast<double>(rows.size());
}

}  // namespace rope
