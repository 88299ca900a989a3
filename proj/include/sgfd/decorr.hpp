#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "sgfd/mat.hpp"
#include "sgfd/nn.hpp"
#include "sgfd/rff.hpp"
#include "sgfd/rng.hpp"

namespace sgfd {

// n samples of d feature values plus one-hot environment labels (n x K).
struct FeatureBatch {
  Mat values;
  Mat env_labels;

  std::size_t n() const { return values.rows; }
  std::size_t d() const { return values.cols; }
  std::size_t num_envs() const { return env_labels.cols; }
};

inline void validate_feature_batch(const FeatureBatch& batch) {
  if (!all_finite(batch.values)) throw std::invalid_argument("FeatureBatch: non-finite values");
  if (batch.env_labels.rows != batch.values.rows)
    throw std::invalid_argument("FeatureBatch: label/value row mismatch");
  for (std::size_t k = 0; k < batch.env_labels.rows; ++k) {
    int ones = 0;
    for (std::size_t j = 0; j < batch.env_labels.cols; ++j) {
      const double v = batch.env_labels.at(k, j);
      if (v == 1.0) ++ones;
      else if (v != 0.0) throw std::invalid_argument("FeatureBatch: label entries must be 0 or 1");
    }
    if (ones != 1) throw std::invalid_argument("FeatureBatch: labels must be exactly one-hot");
  }
}

// How sample weights enter the weighted cross-covariance.
//  kSampleMeasure: w weights each sample's outer product (a reweighted
//    empirical measure); minimizing it decorrelates the weighted distribution.
//  kScaledFeatures: w multiplies the feature vectors inside both factors.
//    Kept as an ablation arm; optimizing it barely moves weighted correlations
//    because it changes the statistic rather than the measure.
enum class WeightMode { kSampleMeasure, kScaledFeatures };

struct DecorrConfig {
  std::size_t M = 5;
  std::size_t inner_iters = 10;
  double lr = 1e-2;
  double momentum = 0.9;
  double weight_decay = 1e-4;  // applied to the deviation w - 1
  bool standardize_features = true;
  WeightMode weight_mode = WeightMode::kSampleMeasure;
  bool allow_negative_weights = false;  // ablation: skip the clamp in projection
};

inline bool weights_feasible(const Vec& w, double tol = 1e-9) {
  double sum = 0.0;
  for (double x : w) {
    if (!std::isfinite(x) || x < 0.0) return false;
    sum += x;
  }
  return std::abs(sum - static_cast<double>(w.size())) <= tol * static_cast<double>(w.size());
}

// Weighted cross-covariance of two RFF feature blocks (n x M each).
// Both modes use mean_w(u) = (1/n) sum_k w_k u_k and reduce to the unweighted
// cross-covariance exactly when w == 1. Summation is sample-major and the
// order is fixed: the bit-exact identity tests depend on it.
inline Mat weighted_cross_cov(const Mat& u_feats, const Mat& v_feats, const Vec& w,
                              WeightMode mode = WeightMode::kSampleMeasure) {
  const std::size_t n = u_feats.rows;
  if (v_feats.rows != n || w.size() != n)
    throw std::invalid_argument("weighted_cross_cov: row count mismatch");
  if (n < 2) throw std::invalid_argument("weighted_cross_cov: need at least two samples");
  const std::size_t Mu = u_feats.cols;
  const std::size_t Mv = v_feats.cols;

  Vec mean_u(Mu, 0.0), mean_v(Mv, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t a = 0; a < Mu; ++a) mean_u[a] += w[k] * u_feats.at(k, a);
    for (std::size_t b = 0; b < Mv; ++b) mean_v[b] += w[k] * v_feats.at(k, b);
  }
  for (double& x : mean_u) x /= static_cast<double>(n);
  for (double& x : mean_v) x /= static_cast<double>(n);

  Mat cov(Mu, Mv);
  Vec du(Mu), dv(Mv);
  for (std::size_t k = 0; k < n; ++k) {
    if (mode == WeightMode::kSampleMeasure) {
      for (std::size_t a = 0; a < Mu; ++a) du[a] = u_feats.at(k, a) - mean_u[a];
      for (std::size_t b = 0; b < Mv; ++b) dv[b] = v_feats.at(k, b) - mean_v[b];
      for (std::size_t a = 0; a < Mu; ++a)
        for (std::size_t b = 0; b < Mv; ++b) cov.at(a, b) += w[k] * du[a] * dv[b];
    } else {
      for (std::size_t a = 0; a < Mu; ++a) du[a] = w[k] * u_feats.at(k, a) - mean_u[a];
      for (std::size_t b = 0; b < Mv; ++b) dv[b] = w[k] * v_feats.at(k, b) - mean_v[b];
      for (std::size_t a = 0; a < Mu; ++a)
        for (std::size_t b = 0; b < Mv; ++b) cov.at(a, b) += du[a] * dv[b];
    }
  }
  const double scale = 1.0 / static_cast<double>(n - 1);
  for (double& x : cov.a) x *= scale;
  return cov;
}

inline double frob_norm_sq(const Mat& m) {
  double s = 0.0;
  for (double x : m.a) {
    if (!std::isfinite(x)) throw std::invalid_argument("frob_norm_sq: non-finite entry");
    s += x * x;
  }
  return s;
}

// Column standardization to mean 0 / variance 1. Columns whose variance falls
// below the floor are numerically constant and map to exact zeros.
inline Vec standardize_column(const Vec& column, double variance_floor = 1e-8) {
  const std::size_t n = column.size();
  double mean = 0.0;
  for (double x : column) mean += x;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double x : column) var += (x - mean) * (x - mean);
  var /= static_cast<double>(n);
  if (var <= variance_floor) return Vec(n, 0.0);
  const double denom = std::sqrt(var);
  Vec out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = (column[k] - mean) / denom;
  return out;
}

inline Vec batch_column(const FeatureBatch& batch, std::size_t j) {
  Vec col(batch.n());
  for (std::size_t k = 0; k < batch.n(); ++k) col[k] = batch.values.at(k, j);
  return col;
}

namespace detail {

// Per-pair objective value and (optionally) its gradient in w, for RFF blocks
// that do not themselves depend on w.
struct PairResult {
  double value = 0.0;
  Vec grad;
};

inline PairResult pair_value_grad(const Mat& U, const Mat& V, const Vec& w, WeightMode mode,
                                  bool want_grad) {
  const std::size_t n = U.rows;
  const std::size_t Mu = U.cols, Mv = V.cols;
  const double inv_n = 1.0 / static_cast<double>(n);
  const double scale = 1.0 / static_cast<double>(n - 1);

  Vec mean_u(Mu, 0.0), mean_v(Mv, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t a = 0; a < Mu; ++a) mean_u[a] += w[k] * U.at(k, a);
    for (std::size_t b = 0; b < Mv; ++b) mean_v[b] += w[k] * V.at(k, b);
  }
  for (double& x : mean_u) x *= inv_n;
  for (double& x : mean_v) x *= inv_n;

  PairResult out;
  Mat S(Mu, Mv);

  if (mode == WeightMode::kSampleMeasure) {
    // S = (1/(n-1)) sum_k w_k (u_k - mu)(v_k - mv)^T
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t a = 0; a < Mu; ++a) {
        const double du = U.at(k, a) - mean_u[a];
        for (std::size_t b = 0; b < Mv; ++b)
          S.at(a, b) += w[k] * du * (V.at(k, b) - mean_v[b]);
      }
    for (double& x : S.a) x *= scale;
    out.value = frob_norm_sq(S);
    if (!want_grad) return out;

    // dF/dw_t = (2/(n-1)) [ Du_t' S Dv_t - (1/n) u_t' S swDv - (1/n) swDu' S v_t ]
    // with swDu = sum_k w_k (u_k - mu), swDv analogous.
    Vec swDu(Mu, 0.0), swDv(Mv, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t a = 0; a < Mu; ++a) swDu[a] += w[k] * (U.at(k, a) - mean_u[a]);
      for (std::size_t b = 0; b < Mv; ++b) swDv[b] += w[k] * (V.at(k, b) - mean_v[b]);
    }
    Vec S_swDv(Mu, 0.0), ST_swDu(Mv, 0.0);
    for (std::size_t a = 0; a < Mu; ++a)
      for (std::size_t b = 0; b < Mv; ++b) {
        S_swDv[a] += S.at(a, b) * swDv[b];
        ST_swDu[b] += S.at(a, b) * swDu[a];
      }
    out.grad.assign(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      double du_S_dv = 0.0, u_S_swDv = 0.0, swDu_S_v = 0.0;
      for (std::size_t a = 0; a < Mu; ++a) {
        const double du = U.at(k, a) - mean_u[a];
        double s_dv = 0.0;
        for (std::size_t b = 0; b < Mv; ++b) s_dv += S.at(a, b) * (V.at(k, b) - mean_v[b]);
        du_S_dv += du * s_dv;
        u_S_swDv += U.at(k, a) * S_swDv[a];
      }
      for (std::size_t b = 0; b < Mv; ++b) swDu_S_v += ST_swDu[b] * V.at(k, b);
      out.grad[k] = 2.0 * scale * (du_S_dv - inv_n * u_S_swDv - inv_n * swDu_S_v);
    }
    return out;
  }

  // kScaledFeatures: S = (1/(n-1)) sum_k (w_k u_k - mu)(w_k v_k - mv)^T.
  // The columns of A = w u - mu and B = w v - mv each sum to zero, which
  // collapses the gradient to dF/dw_t = (2/(n-1)) [ u_t' S B_t + A_t' S v_t ].
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t a = 0; a < Mu; ++a) {
      const double au = w[k] * U.at(k, a) - mean_u[a];
      for (std::size_t b = 0; b < Mv; ++b)
        S.at(a, b) += au * (w[k] * V.at(k, b) - mean_v[b]);
    }
  for (double& x : S.a) x *= scale;
  out.value = frob_norm_sq(S);
  if (!want_grad) return out;

  out.grad.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double u_S_B = 0.0, A_S_v = 0.0;
    for (std::size_t a = 0; a < Mu; ++a) {
      double s_B = 0.0, s_v = 0.0;
      for (std::size_t b = 0; b < Mv; ++b) {
        s_B += S.at(a, b) * (w[k] * V.at(k, b) - mean_v[b]);
        s_v += S.at(a, b) * V.at(k, b);
      }
      u_S_B += U.at(k, a) * s_B;
      A_S_v += (w[k] * U.at(k, a) - mean_u[a]) * s_v;
    }
    out.grad[k] = 2.0 * scale * (u_S_B + A_S_v);
  }
  return out;
}

// RFF blocks for every feature column, computed once per batch.
inline std::vector<Mat> feature_blocks(const FeatureBatch& batch,
                                       const std::vector<RffFeatureMap>& maps,
                                       const DecorrConfig& cfg) {
  if (maps.size() != batch.d())
    throw std::invalid_argument("decorrelation: need one RFF map per feature");
  std::vector<Mat> blocks;
  blocks.reserve(batch.d());
  for (std::size_t j = 0; j < batch.d(); ++j) {
    Vec col = batch_column(batch, j);
    if (cfg.standardize_features) col = standardize_column(col);
    blocks.push_back(rff_apply_column(maps[j], col));
  }
  return blocks;
}

}  // namespace detail

// Dependence score for one feature pair: RFF-embed both columns, then squared
// Frobenius norm of their weighted cross-covariance.
inline double pair_independence(const FeatureBatch& batch, std::size_t i, std::size_t j,
                                const std::vector<RffFeatureMap>& maps, const Vec& w,
                                const DecorrConfig& cfg = {}) {
  if (i == j) throw std::invalid_argument("pair_independence: i and j must differ");
  if (i >= batch.d() || j >= batch.d())
    throw std::invalid_argument("pair_independence: feature index out of range");
  if (maps.size() != batch.d())
    throw std::invalid_argument("pair_independence: need one RFF map per feature");
  Vec ci = batch_column(batch, i), cj = batch_column(batch, j);
  if (cfg.standardize_features) {
    ci = standardize_column(ci);
    cj = standardize_column(cj);
  }
  const Mat U = rff_apply_column(maps[i], ci);
  const Mat V = rff_apply_column(maps[j], cj);
  return frob_norm_sq(weighted_cross_cov(U, V, w, cfg.weight_mode));
}

inline void validate_feature_probs(const Vec& p, std::size_t d) {
  if (p.size() != d) throw std::invalid_argument("feature probabilities: size mismatch");
  double sum = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) throw std::invalid_argument("feature probabilities: negative entry");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("feature probabilities: must sum to 1");
}

// sum_{i<j} p_i p_j ||weighted cross-cov of pair (i,j)||_F^2, pair-index order.
inline double decorrelation_objective(const FeatureBatch& batch, const Vec& w,
                                      const std::vector<RffFeatureMap>& maps, const Vec& p,
                                      const DecorrConfig& cfg = {}) {
  if (batch.d() < 2) throw std::invalid_argument("decorrelation_objective: need d >= 2");
  validate_feature_probs(p, batch.d());
  const std::vector<Mat> blocks = detail::feature_blocks(batch, maps, cfg);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.d(); ++i)
    for (std::size_t j = i + 1; j < batch.d(); ++j) {
      const double pij = p[i] * p[j];
      if (pij == 0.0) continue;
      total += pij * detail::pair_value_grad(blocks[i], blocks[j], w, cfg.weight_mode, false).value;
    }
  return total;
}

// Exact gradient of decorrelation_objective in w (maps and p held fixed).
inline Vec objective_grad_w(const FeatureBatch& batch, const Vec& w,
                            const std::vector<RffFeatureMap>& maps, const Vec& p,
                            const DecorrConfig& cfg = {}) {
  if (batch.d() < 2) throw std::invalid_argument("objective_grad_w: need d >= 2");
  validate_feature_probs(p, batch.d());
  const std::vector<Mat> blocks = detail::feature_blocks(batch, maps, cfg);
  Vec grad(batch.n(), 0.0);
  for (std::size_t i = 0; i < batch.d(); ++i)
    for (std::size_t j = i + 1; j < batch.d(); ++j) {
      const double pij = p[i] * p[j];
      if (pij == 0.0) continue;
      const auto pr = detail::pair_value_grad(blocks[i], blocks[j], w, cfg.weight_mode, true);
      for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += pij * pr.grad[k];
    }
  return grad;
}

// Clamp negatives to zero, rescale to sum n; all-clamped falls back to uniform.
// With allow_negative the clamp is skipped and only the rescale applies.
inline Vec project_weights(const Vec& w_raw, bool allow_negative = false) {
  if (w_raw.empty()) throw std::invalid_argument("project_weights: empty weights");
  Vec w = w_raw;
  if (!allow_negative)
    for (double& x : w) x = std::max(x, 0.0);
  double sum = 0.0;
  for (double x : w) sum += x;
  if (sum <= 0.0 || !std::isfinite(sum)) return Vec(w.size(), 1.0);
  const double scale = static_cast<double>(w.size()) / sum;
  for (double& x : w) x *= scale;
  return w;
}

struct WeightOptReport {
  Vec w;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  Vec trajectory;  // objective after each iteration
};

// SGD-momentum on objective_grad_w from w == 1, projecting after every step.
// Weight decay pulls toward the feasible uniform point (decays w - 1, not w).
inline WeightOptReport optimize_weights(const FeatureBatch& batch,
                                        const std::vector<RffFeatureMap>& maps, const Vec& p,
                                        const DecorrConfig& cfg = {}) {
  if (batch.n() < 2) throw std::invalid_argument("optimize_weights: need n >= 2");
  if (batch.d() < 2) throw std::invalid_argument("optimize_weights: need d >= 2");
  if (cfg.inner_iters < 1) throw std::invalid_argument("optimize_weights: inner_iters must be >= 1");
  validate_feature_probs(p, batch.d());

  const std::vector<Mat> blocks = detail::feature_blocks(batch, maps, cfg);
  const std::size_t n = batch.n();

  auto objective_at = [&](const Vec& w, Vec* grad) {
    double total = 0.0;
    if (grad) grad->assign(n, 0.0);
    for (std::size_t i = 0; i < batch.d(); ++i)
      for (std::size_t j = i + 1; j < batch.d(); ++j) {
        const double pij = p[i] * p[j];
        if (pij == 0.0) continue;
        const auto pr =
            detail::pair_value_grad(blocks[i], blocks[j], w, cfg.weight_mode, grad != nullptr);
        total += pij * pr.value;
        if (grad)
          for (std::size_t k = 0; k < n; ++k) (*grad)[k] += pij * pr.grad[k];
      }
    return total;
  };

  WeightOptReport report;
  report.w.assign(n, 1.0);
  Vec grad;
  report.initial_objective = objective_at(report.w, &grad);
  report.final_objective = report.initial_objective;
  if (!std::isfinite(report.initial_objective))
    throw DivergenceError("optimize_weights: non-finite objective");

  OptimizerState opt = make_sgd_momentum(cfg.lr, cfg.momentum, 0.0);
  for (std::size_t it = 0; it < cfg.inner_iters; ++it) {
    if (it > 0) objective_at(report.w, &grad);
    for (std::size_t k = 0; k < n; ++k) grad[k] += cfg.weight_decay * (report.w[k] - 1.0);
    optimizer_step(report.w, grad, opt, 0);
    report.w = project_weights(report.w, cfg.allow_negative_weights);
    const double obj = objective_at(report.w, nullptr);
    if (!std::isfinite(obj)) throw DivergenceError("optimize_weights: non-finite objective");
    report.trajectory.push_back(obj);
    report.final_objective = obj;
  }
  return report;
}

// Null distribution for one pair's dependence score: shuffle y's rows,
// unweighted score per shuffle. Standardization happens once (it is
// permutation-invariant), the RFF block rows are then permuted directly.
inline Vec rff_dependence_null(const Vec& x, const Vec& y, const RffFeatureMap& map_x,
                               const RffFeatureMap& map_y, std::size_t shuffles, Rng& rng,
                               const DecorrConfig& cfg = {}) {
  if (x.size() != y.size()) throw std::invalid_argument("rff_dependence_null: size mismatch");
  const std::size_t n = x.size();
  Vec cx = x, cy = y;
  if (cfg.standardize_features) {
    cx = standardize_column(cx);
    cy = standardize_column(cy);
  }
  const Mat U = rff_apply_column(map_x, cx);
  const Mat V = rff_apply_column(map_y, cy);
  const Vec ones(n, 1.0);

  std::vector<std::size_t> perm(n);
  Vec null_values(shuffles);
  Mat Vp(n, V.cols);
  for (std::size_t s = 0; s < shuffles; ++s) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t k = n; k > 1; --k) std::swap(perm[k - 1], perm[rng.below(k)]);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t m = 0; m < V.cols; ++m) Vp.at(k, m) = V.at(perm[k], m);
    null_values[s] = frob_norm_sq(weighted_cross_cov(U, Vp, ones, cfg.weight_mode));
  }
  return null_values;
}

inline double dependence_score(const Vec& x, const Vec& y, const RffFeatureMap& map_x,
                               const RffFeatureMap& map_y, const DecorrConfig& cfg = {}) {
  if (x.size() != y.size()) throw std::invalid_argument("dependence_score: size mismatch");
  Vec cx = x, cy = y;
  if (cfg.standardize_features) {
    cx = standardize_column(cx);
    cy = standardize_column(cy);
  }
  const Mat U = rff_apply_column(map_x, cx);
  const Mat V = rff_apply_column(map_y, cy);
  return frob_norm_sq(weighted_cross_cov(U, V, Vec(x.size(), 1.0), cfg.weight_mode));
}

// Nearest-rank percentile (pct in (0, 100]).
inline double percentile_nearest_rank(Vec values, double pct) {
  if (values.empty()) throw std::invalid_argument("percentile_nearest_rank: empty sample");
  if (!(pct > 0.0 && pct <= 100.0))
    throw std::invalid_argument("percentile_nearest_rank: pct out of range");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(
      std::ceil(pct / 100.0 * static_cast<double>(values.size())));
  return values[std::min(values.size() - 1, rank == 0 ? 0 : rank - 1)];
}

}  // namespace sgfd
