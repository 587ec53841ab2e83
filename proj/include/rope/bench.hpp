#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "rope/dataset.hpp"
#include "rope/explain.hpp"
#include "rope/explanations.hpp"
#include "rope/log.hpp"
#include "rope/metrics.hpp"
#include "rope/multiexp.hpp"
#include "rope/oracle.hpp"
#include "rope/report.hpp"
#include "rope/synthetic.hpp"

namespace rope {

// Method identifiers accepted by the drivers:
//   {rope,base}-{linear,dset}[-multi]
// base-* are the non-robust internal baselines, i.e. the same trainers with
// an s0 = 0 shift budget.
struct MethodId {
  std::string name;
  Family family = Family::linear;
  bool multi = false;
  bool robust = true;
};

inline MethodId parse_method(const std::string& name) {
  MethodId m;
  m.name = name;
  std::string rest = name;
  if (rest.rfind("rope-", 0) == 0) {
    m.robust = true;
    rest = rest.substr(5);
  } else if (rest.rfind("base-", 0) == 0) {
    m.robust = false;
    rest = rest.substr(5);
  } else {
    throw std::invalid_argument("unknown method (expected rope-*/base-*): " +
                                name);
  }
  if (rest == "linear") {
    m.family = Family::linear;
  } else if (rest == "dset") {
    m.family = Family::decision_set;
  } else if (rest == "linear-multi") {
    m.family = Family::linear;
    m.multi = true;
  } else if (rest == "dset-multi") {
    m.family = Family::decision_set;
    m.multi = true;
  } else {
    throw std::invalid_argument("unknown method family: " + name);
  }
  return m;
}

inline std::vector<MethodId> parse_methods(const std::vector<std::string>& names) {
  std::vector<MethodId> out;
  out.reserve(names.size());
  for (const std::string& n : names) out.push_back(parse_method(n));
  return out;
}

struct SweepConfig {
  int dim_min = 2;
  int dim_max = 10;
  int n_samples = 5000;
  double s0 = 1.0;
  double delta_max = 1.0;
  int k_max_clusters = 6;
  MlpConfig mlp;
  ExplainConfig explain;
  int threads = 0;  // 0 = hardware concurrency
};

namespace detail {

inline AnyExplanation fit_method(const MethodId& method, const Dataset& data,
                                 const BlackBoxHandle& blackbox,
                                 const ShiftSet& shift_set,
                                 const SweepConfig& cfg, int k_clusters,
                                 std::uint64_t seed) {
  if (method.multi) {
    return train_multi(data, blackbox, shift_set, k_clusters, method.family,
                       cfg.explain, seed);
  }
  if (method.family == Family::linear)
    return fit_robust_linear(data, blackbox, shift_set, cfg.explain, seed);
  return train_robust_dset(data, blackbox, shift_set, cfg.explain, seed);
}

// Replicates run concurrently; each writes into its own preallocated slice,
// so assembly is an order-independent merge.
inline void parallel_replicates(int replicates, int threads,
                                const std::function<void(int)>& body) {
  unsigned workers = threads > 0
                         ? static_cast<unsigned>(threads)
                         : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(replicates));
  if (workers <= 1) {
    for (int r = 0; r < replicates; ++r) body(r);
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int r = static_cast<int>(w); r < replicates;
           r += static_cast<int>(workers))
        body(r);
    });
  }
  for (std::thread& t : pool) t.join();
}

// Base-distribution parameters for one replicate of a sweep of the given
// kind. Correlation sweeps draw beta in the PSD range; mean and variance
// sweeps use uncorrelated covariates per their protocols. Sigma spans
// [1, sqrt(10)] so the variances cover [1, 10].
inline SyntheticSpec sample_base_spec(ShiftKind kind, int dim, int n_samples,
                                      Rng& rng) {
  SyntheticSpec spec;
  spec.dim = dim;
  spec.n_samples = n_samples;
  switch (kind) {
    case ShiftKind::correlation:
      spec.beta = clamp_beta(dim, rng.uniform(-1.0, 1.0));
      spec.mu = 0.0;
      spec.sigma = 1.0;
      break;
    case ShiftKind::mean:
      spec.beta = 0.0;
      spec.mu = rng.uniform(-5.0, 5.0);
      spec.sigma = 1.0;
      break;
    case ShiftKind::variance:
      spec.beta = 0.0;
      spec.mu = 0.0;
      spec.sigma = rng.uniform(1.0, std::sqrt(10.0));
      break;
  }
  return spec;
}

}  // namespace detail

// Synthetic distribution-shift sweep. Per replicate: sample a base
// distribution, train the MLP black box on coin-flip labels, fit every
// method, then measure fidelity on freshly sampled data from each shifted
// distribution (standardized in the training frame). One row per
// (method, alpha, replicate); training failures are recorded on their row
// and the sweep continues.
inline Report run_shift_sweep(const std::vector<MethodId>& methods,
                              ShiftKind kind, const Vec& alpha_grid,
                              int replicates, std::uint64_t seed,
                              const SweepConfig& cfg = {}) {
  if (methods.empty()) throw std::invalid_argument("run_shift_sweep: no methods");
  if (alpha_grid.empty())
    throw std::invalid_argument("run_shift_sweep: empty alpha grid");
  if (replicates < 1)
    throw std::invalid_argument("run_shift_sweep: replicates >= 1");

  const std::string experiment =
      std::string("sweep-") + shift_kind_name(kind);
  Report report;
  report.rows.resize(static_cast<std::size_t>(replicates) * methods.size() *
                     alpha_grid.size());

  detail::parallel_replicates(replicates, cfg.threads, [&](int rep) {
    const std::uint64_t rep_seed = derive_seed(seed, static_cast<std::uint64_t>(rep));
    Rng rng(derive_seed(rep_seed, 0));
    const int dim = rng.uniform_int(cfg.dim_min, cfg.dim_max);
    SyntheticSpec spec = detail::sample_base_spec(kind, dim, cfg.n_samples, rng);
    spec.seed = derive_seed(rep_seed, 1);

    SyntheticSample train = gen_synthetic_raw(spec);
    const Dataset data = Dataset::from_raw(train.raw, train.feature_names,
                                           train.labels);
    const BlackBoxHandle blackbox =
        train_mlp(data.rows(), data.labels(), cfg.mlp, derive_seed(rep_seed, 2));

    // Shifted evaluation sets are shared across methods within a replicate.
    std::vector<Matrix> shifted_rows(alpha_grid.size());
    for (std::size_t a = 0; a < alpha_grid.size(); ++a) {
      SyntheticSpec sspec = shift_spec(spec, kind, alpha_grid[a]);
      sspec.seed = derive_seed(rep_seed, 100 + a);
      const SyntheticSample shifted = gen_synthetic_raw(sspec);
      Matrix rows;
      rows.reserve(shifted.raw.size());
      for (const Vec& raw : shifted.raw)
        rows.push_back(data.standardizer().apply(raw));
      shifted_rows[a] = std::move(rows);
    }

    int k_clusters = 1;
    bool k_resolved = false;

    for (std::size_t m = 0; m < methods.size(); ++m) {
      const MethodId& method = methods[m];
      const std::size_t base_index =
          (static_cast<std::size_t>(rep) * methods.size() + m) *
          alpha_grid.size();
      try {
        if (method.multi && !k_resolved) {
          k_clusters = select_k_bic(data.rows(), cfg.k_max_clusters,
                                    derive_seed(rep_seed, 3));
          k_resolved = true;
        }
        const ShiftSet shift_set(method.robust ? cfg.s0 : 0.0, cfg.delta_max,
                                 data.dim());
        const AnyExplanation e = detail::fit_method(
            method, data, blackbox, shift_set, cfg, k_clusters,
            derive_seed(rep_seed, 10 + m));
        const double train_fid = fidelity(e, data.rows(), blackbox);
        for (std::size_t a = 0; a < alpha_grid.size(); ++a) {
          ReportRow& row = report.rows[base_index + a];
          row.experiment = experiment;
          row.method = method.name;
          row.kind = shift_kind_name(kind);
          row.alpha = alpha_grid[a];
          row.replicate = rep;
          row.set_fidelities(train_fid, fidelity(e, shifted_rows[a], blackbox));
        }
      } catch (const std::exception& ex) {
        log_error("sweep replicate " + std::to_string(rep) + " method " +
                  method.name + " failed: " + ex.what());
        for (std::size_t a = 0; a < alpha_grid.size(); ++a) {
          ReportRow& row = report.rows[base_index + a];
          row.experiment = experiment;
          row.method = method.name;
          row.kind = shift_kind_name(kind);
          row.alpha = alpha_grid[a];
          row.replicate = rep;
          row.error = ex.what();
        }
      }
    }
  });

  report.sort_rows();
  return report;
}

struct StabilityConfig {
  double s0 = 1.0;
  double delta_max = 1.0;
  ExplainConfig explain;
  int blackbox_epochs = 30;
  int threads = 0;
};

namespace detail {

inline double clustered_rule_metric(const ClusteredExplanation& a,
                                    const ClusteredExplanation& b,
                                    bool features) {
  double total = 0.0;
  for (const auto& entry : a.entries) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < b.entries.size(); ++j) {
      const double d = sq_dist(entry.representative, b.entries[j].representative);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    const auto& ea = std::get<DecisionSet>(entry.explanation);
    const auto& eb = std::get<DecisionSet>(b.entries[best].explanation);
    total += entry.weight * static_cast<double>(features ? feature_match(ea, eb)
                                                         : rule_match(ea, eb));
  }
  return total;
}

}  // namespace detail

// Stability protocol: build an explanation from D and another from
// D' = D + Gaussian noise (std noise_std, in standardized units), against
// the same interpretable black box, and report their structural similarity.
// Linear-family rows report coefficient mismatch; decision-set rows report
// rule and feature match.
inline Report run_stability(const SyntheticSpec& spec, double noise_std,
                            const std::vector<MethodId>& methods,
                            std::uint64_t seed, int replicates = 20,
                            const StabilityConfig& cfg = {}) {
  if (methods.empty()) throw std::invalid_argument("run_stability: no methods");
  if (noise_std < 0.0)
    throw std::invalid_argument("run_stability: noise_std >= 0");

  Report report;
  report.aux_columns = {"coefficient_mismatch", "rule_match", "feature_match"};
  report.rows.resize(static_cast<std::size_t>(replicates) * methods.size());

  detail::parallel_replicates(replicates, cfg.threads, [&](int rep) {
    const std::uint64_t rep_seed = derive_seed(seed, static_cast<std::uint64_t>(rep));
    SyntheticSpec rspec = spec;
    rspec.seed = derive_seed(rep_seed, 1);
    const Dataset data = gen_synthetic(rspec);

    // One perturbed copy per replicate, shared by all methods.
    Matrix noisy_rows = data.rows();
    {
      Rng noise(derive_seed(rep_seed, 2));
      for (Vec& row : noisy_rows)
        for (double& v : row) v += noise_std * noise.gaussian();
    }
    const Dataset noisy = data.with_rows(std::move(noisy_rows));

    // Interpretable black boxes, one per family, trained on D's labels.
    BlackBoxHandle linear_bb, dset_bb;
    bool need_linear = false, need_dset = false;
    for (const MethodId& m : methods)
      (m.family == Family::linear ? need_linear : need_dset) = true;
    if (need_linear)
      linear_bb = train_logistic_blackbox(data.rows(), data.labels(),
                                          cfg.blackbox_epochs, 0.1, 1e-4,
                                          derive_seed(rep_seed, 3));
    if (need_dset)
      dset_bb = train_decision_set_blackbox(data.rows(), data.labels(),
                                            cfg.explain.mining,
                                            cfg.explain.lambda,
                                            cfg.explain.alpha_rules,
                                            derive_seed(rep_seed, 4));

    for (std::size_t m = 0; m < methods.size(); ++m) {
      const MethodId& method = methods[m];
      ReportRow& row =
          report.rows[static_cast<std::size_t>(rep) * methods.size() + m];
      row.experiment = "stability";
      row.method = method.name;
      row.kind = "noise";
      row.alpha = noise_std;
      row.replicate = rep;
      try {
        const BlackBoxHandle& blackbox =
            method.family == Family::linear ? linear_bb : dset_bb;
        const ShiftSet shift_set(method.robust ? cfg.s0 : 0.0, cfg.delta_max,
                                 data.dim());
        const std::uint64_t fit_seed = derive_seed(rep_seed, 10 + m);

        SweepConfig fit_cfg;
        fit_cfg.explain = cfg.explain;
        int k_clusters = 1;
        if (method.multi)
          k_clusters = select_k_bic(data.rows(), fit_cfg.k_max_clusters,
                                    derive_seed(rep_seed, 5));

        // The same fit seed on both datasets: with zero noise the two
        // explanations are bit-identical.
        const AnyExplanation e = detail::fit_method(
            method, data, blackbox, shift_set, fit_cfg, k_clusters, fit_seed);
        const AnyExplanation e_noisy = detail::fit_method(
            method, noisy, blackbox, shift_set, fit_cfg, k_clusters, fit_seed);

        row.set_fidelities(fidelity(e, data.rows(), blackbox),
                           fidelity(e_noisy, data.rows(), blackbox));
        if (method.family == Family::linear) {
          double mismatch;
          if (method.multi) {
            const auto& ce = std::get<ClusteredExplanation>(e);
            const auto& cen = std::get<ClusteredExplanation>(e_noisy);
            std::vector<LinearTargetGroup> targets;
            for (const auto& entry : cen.entries)
              targets.push_back(
                  {entry.representative,
                   std::get<LinearExplanation>(entry.explanation)});
            mismatch = coefficient_mismatch(ce, targets);
          } else {
            mismatch = coefficient_mismatch(std::get<LinearExplanation>(e),
                                            std::get<LinearExplanation>(e_noisy));
          }
          row.aux.emplace_back("coefficient_mismatch", mismatch);
        } else {
          double rmatch, fmatch;
          if (method.multi) {
            const auto& ce = std::get<ClusteredExplanation>(e);
            const auto& cen = std::get<ClusteredExplanation>(e_noisy);
            rmatch = detail::clustered_rule_metric(ce, cen, false);
            fmatch = detail::clustered_rule_metric(ce, cen, true);
          } else {
            const auto& da = std::get<DecisionSet>(e);
            const auto& db = std::get<DecisionSet>(e_noisy);
            rmatch = static_cast<double>(rule_match(da, db));
            fmatch = static_cast<double>(feature_match(da, db));
          }
          row.aux.emplace_back("rule_match", rmatch);
          row.aux.emplace_back("feature_match", fmatch);
        }
      } catch (const std::exception& ex) {
        log_error("stability replicate " + std::to_string(rep) + " method " +
                  method.name + " failed: " + ex.what());
        row.error = ex.what();
      }
    }
  });

  report.sort_rows();
  return report;
}

}  // namespace rope
