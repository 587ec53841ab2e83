#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rope/dataset.hpp"
#include "rope/log.hpp"
#include "rope/rng.hpp"
#include "rope/vec.hpp"

namespace rope {

// Equicorrelated Gaussian generator: covariance has sigma^2 on the diagonal
// and beta * sigma^2 off it. Labels are an i.i.d. fair coin, which is the
// regime the shift benchmarks train their black boxes in.
struct SyntheticSpec {
  int dim = 2;  // valid range [2, 10]
  double beta = 0.0;
  double mu = 0.0;
  double sigma = 1.0;
  int n_samples = 5000;
  std::uint64_t seed = 0;
};

enum class ShiftKind { correlation, mean, variance };

inline const char* shift_kind_name(ShiftKind kind) {
  switch (kind) {
    case ShiftKind::correlation: return "correlation";
    case ShiftKind::mean: return "mean";
    case ShiftKind::variance: return "variance";
  }
  return "?";
}

inline ShiftKind shift_kind_from_name(const std::string& name) {
  if (name == "correlation") return ShiftKind::correlation;
  if (name == "mean") return ShiftKind::mean;
  if (name == "variance") return ShiftKind::variance;
  throw std::invalid_argument("unknown shift kind: " + name);
}

// The equicorrelation matrix is PSD exactly for beta in [-1/(dim-1), 1].
inline double clamp_beta(int dim, double beta) {
  const double lo = dim > 1 ? -1.0 / static_cast<double>(dim - 1) : 0.0;
  if (beta < lo) {
    log_warn("synthetic: beta " + std::to_string(beta) +
             " below the PSD range; clamped to " + std::to_string(lo));
    return lo;
  }
  if (beta > 1.0) {
    log_warn("synthetic: beta " + std::to_string(beta) +
             " above 1; clamped to 1");
    return 1.0;
  }
  return beta;
}

namespace detail {

// Cholesky factor of a PSD matrix; near-zero pivots produce zero columns so
// singular equicorrelation (beta = 1) works.
inline Matrix cholesky_psd(const Matrix& a) {
  const std::size_t n = a.size();
  Matrix l(n, Vec(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a[i][j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
      if (i == j) {
        if (s < -1e-9)
          throw std::runtime_error("cholesky: matrix not PSD");
        l[i][j] = s > 1e-12 ? std::sqrt(s) : 0.0;
      } else {
        l[i][j] = l[j][j] > 0.0 ? s / l[j][j] : 0.0;
      }
    }
  }
  return l;
}

}  // namespace detail

struct SyntheticSample {
  Matrix raw;
  std::vector<int> labels;
  std::vector<std::string> feature_names;
};

inline SyntheticSample gen_synthetic_raw(const SyntheticSpec& spec) {
  if (spec.dim < 1) throw std::invalid_argument("synthetic: dim must be >= 1");
  if (!(spec.sigma > 0.0))
    throw std::invalid_argument("synthetic: sigma must be > 0");
  if (spec.n_samples < 1)
    throw std::invalid_argument("synthetic: n_samples must be >= 1");

  const double beta = clamp_beta(spec.dim, spec.beta);
  const std::size_t d = static_cast<std::size_t>(spec.dim);
  Matrix cov(d, Vec(d, beta * spec.sigma * spec.sigma));
  for (std::size_t i = 0; i < d; ++i) cov[i][i] = spec.sigma * spec.sigma;
  const Matrix chol = detail::cholesky_psd(cov);

  SyntheticSample out;
  Rng xs(derive_seed(spec.seed, 0x6461u));
  Rng ys(derive_seed(spec.seed, 0x6c61u));
  out.raw.reserve(static_cast<std::size_t>(spec.n_samples));
  Vec z(d);
  for (int i = 0; i < spec.n_samples; ++i) {
    for (std::size_t j = 0; j < d; ++j) z[j] = xs.gaussian();
    Vec x(d, spec.mu);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c <= r; ++c) x[r] += chol[r][c] * z[c];
    out.raw.push_back(std::move(x));
    out.labels.push_back(ys.uniform() < 0.5 ? 0 : 1);
  }
  for (std::size_t j = 0; j < d; ++j)
    out.feature_names.push_back("x" + std::to_string(j));
  return out;
}

inline Dataset gen_synthetic(const SyntheticSpec& spec) {
  SyntheticSample s = gen_synthetic_raw(spec);
  return Dataset::from_raw(s.raw, std::move(s.feature_names),
                           std::move(s.labels));
}

// Shifted-distribution parameters for the three benchmark protocols. Mean
// and variance shifts operate on uncorrelated covariates, so those kinds
// reset beta to 0.
inline SyntheticSpec shift_spec(const SyntheticSpec& spec, ShiftKind kind,
                                double alpha) {
  SyntheticSpec shifted = spec;
  switch (kind) {
    case ShiftKind::correlation:
      shifted.beta = clamp_beta(spec.dim, spec.beta + alpha);
      break;
    case ShiftKind::mean:
      shifted.beta = 0.0;
      shifted.mu = spec.mu + alpha;
      break;
    case ShiftKind::variance:
      shifted.beta = 0.0;
      shifted.sigma = spec.sigma + alpha;
      if (!(shifted.sigma > 0.0)) {
        log_warn("shift_spec: shifted sigma clamped to 1e-6");
        shifted.sigma = 1e-6;
      }
      break;
  }
  return shifted;
}

}  // namespace rope
