#pragma once

#include <cstdint>
#include <vector>

#include "rope/blackbox.hpp"
#include "rope/dataset.hpp"
#include "rope/linexp.hpp"
#include "rope/rng.hpp"
#include "rope/ruleexp.hpp"
#include "rope/shiftset.hpp"

namespace rope {

// One bag of knobs for both explanation families; the CLI and benchmark
// drivers fill it from flags. Seeds are never stored here, they are passed
// per fit so derived streams stay independent.
struct ExplainConfig {
  // linear family
  int epochs = 30;
  double learning_rate = 0.1;
  int batch_size = 32;
  double l2_penalty = 1e-4;
  LossKind loss = LossKind::logistic_loss;
  // rule family
  MiningConfig mining;
  double lambda = 5.0;
  int alpha_rules = 5;
  double eps_ls = 0.1;
  int k_shifts = 10;

  TrainConfig to_train_config(std::uint64_t seed) const {
    TrainConfig cfg(seed);
    cfg.epochs = epochs;
    cfg.learning_rate = learning_rate;
    cfg.batch_size = batch_size;
    cfg.l2_penalty = l2_penalty;
    cfg.loss = loss;
    return cfg;
  }
};

inline LinearExplanation fit_robust_linear(const Dataset& data,
                                           const BlackBoxHandle& blackbox,
                                           const ShiftSet& shift_set,
                                           const ExplainConfig& cfg,
                                           std::uint64_t seed) {
  return train_robust_linear(data, blackbox, shift_set,
                             cfg.to_train_config(seed));
}

// Robust decision-set explanation: mines candidates against the black-box
// labels, draws k shifts from the polytope (the zero shift is always part
// of the disagreement), and optimizes with approximate local search.
inline DecisionSet train_robust_dset(const Dataset& data,
                                     const BlackBoxHandle& blackbox,
                                     const ShiftSet& shift_set,
                                     const ExplainConfig& cfg,
                                     std::uint64_t seed) {
  const Matrix& rows = data.rows();
  const std::vector<int> bb_labels = blackbox.query_batch(rows);
  const std::vector<Rule> universe =
      mine_candidate_rules(rows, bb_labels, cfg.mining);

  Rng shift_rng(derive_seed(seed, 0x5348u));
  RuleObjectiveConfig rcfg;
  rcfg.lambda = cfg.lambda;
  rcfg.alpha = cfg.alpha_rules;
  rcfg.eps_ls = cfg.eps_ls;
  rcfg.shifts = sample_shifts(shift_set, cfg.k_shifts, shift_rng);

  return local_search_optimize(universe, rows, blackbox, rcfg,
                               derive_seed(seed, 0x4c53u));
}

}  // namespace rope
