#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sgfd/decorr.hpp"
#include "sgfd/envs.hpp"
#include "sgfd/mat.hpp"
#include "sgfd/rng.hpp"

namespace sgfd {

struct UndefinedCorrelationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr double kCorrVarianceFloor = 1e-12;

namespace detail {

inline void check_pair_sizes(const Vec& x, const Vec& y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("pearson: need at least two samples");
  if (!all_finite(x) || !all_finite(y)) throw std::invalid_argument("pearson: non-finite input");
}

}  // namespace detail

inline double pearson(const Vec& x, const Vec& y) {
  detail::check_pair_sizes(x, y);
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double dx = x[k] - mx;
    const double dy = y[k] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  const double denom = static_cast<double>(n - 1);
  if (sxx / denom < kCorrVarianceFloor || syy / denom < kCorrVarianceFloor)
    throw UndefinedCorrelationError("pearson: variance below floor");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// Pearson of weighted central moments: means and (co)variances use sum-of-w
// denominators, so zeroing a sample's weight removes it from the statistic.
inline double weighted_pearson(const Vec& x, const Vec& y, const Vec& w) {
  detail::check_pair_sizes(x, y);
  if (w.size() != x.size()) throw std::invalid_argument("weighted_pearson: weight length mismatch");
  if (!weights_feasible(w)) throw std::invalid_argument("weighted_pearson: infeasible weights");
  const std::size_t n = x.size();
  double sw = 0.0, mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sw += w[k];
    mx += w[k] * x[k];
    my += w[k] * y[k];
  }
  mx /= sw;
  my /= sw;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double dx = x[k] - mx;
    const double dy = y[k] - my;
    sxx += w[k] * dx * dx;
    syy += w[k] * dy * dy;
    sxy += w[k] * dx * dy;
  }
  if (sxx / sw < kCorrVarianceFloor || syy / sw < kCorrVarianceFloor)
    throw UndefinedCorrelationError("weighted_pearson: weighted variance below floor");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// Pairwise (weighted) Pearson matrix. Undefined entries render as 0 with the
// defined flag cleared, never silently. summary is the mean |rho| between the
// changed feature and every other feature when an index is supplied.
struct CorrelationReport {
  Mat matrix;
  std::vector<std::uint8_t> defined;  // row-major d*d flags
  bool weighted = false;
  int changed_feature_index = -1;
  double summary = 0.0;

  bool defined_at(std::size_t i, std::size_t j) const { return defined[i * matrix.cols + j] != 0; }
};

namespace detail {

inline CorrelationReport correlation_matrix_impl(const FeatureBatch& batch, const Vec* w,
                                                 int changed_feature_index) {
  if (batch.n() < 2) throw std::invalid_argument("correlation_matrix: need at least two samples");
  if (changed_feature_index >= static_cast<int>(batch.d()))
    throw std::invalid_argument("correlation_matrix: changed feature index out of range");
  const std::size_t d = batch.d();
  CorrelationReport report;
  report.matrix = Mat(d, d);
  report.defined.assign(d * d, 0);
  report.weighted = w != nullptr;
  report.changed_feature_index = changed_feature_index;

  std::vector<Vec> cols(d);
  for (std::size_t j = 0; j < d; ++j) cols[j] = batch_column(batch, j);

  auto corr = [&](std::size_t i, std::size_t j) {
    return w ? weighted_pearson(cols[i], cols[j], *w) : pearson(cols[i], cols[j]);
  };
  for (std::size_t i = 0; i < d; ++i) {
    try {
      corr(i, i);
      report.matrix.at(i, i) = 1.0;
      report.defined[i * d + i] = 1;
    } catch (const UndefinedCorrelationError&) {
    }
    for (std::size_t j = i + 1; j < d; ++j) {
      double rho = 0.0;
      std::uint8_t ok = 1;
      try {
        rho = corr(i, j);
      } catch (const UndefinedCorrelationError&) {
        rho = 0.0;
        ok = 0;
      }
      report.matrix.at(i, j) = rho;
      report.matrix.at(j, i) = rho;
      report.defined[i * d + j] = ok;
      report.defined[j * d + i] = ok;
    }
  }
  if (changed_feature_index >= 0) {
    const auto c = static_cast<std::size_t>(changed_feature_index);
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j)
      if (j != c) acc += std::abs(report.matrix.at(c, j));
    report.summary = d > 1 ? acc / static_cast<double>(d - 1) : 0.0;
  }
  return report;
}

}  // namespace detail

inline CorrelationReport correlation_matrix(const FeatureBatch& batch, int changed_feature_index = -1) {
  return detail::correlation_matrix_impl(batch, nullptr, changed_feature_index);
}

inline CorrelationReport correlation_matrix(const FeatureBatch& batch, const Vec& w,
                                            int changed_feature_index = -1) {
  if (w.size() != batch.n()) throw std::invalid_argument("correlation_matrix: weight length mismatch");
  return detail::correlation_matrix_impl(batch, &w, changed_feature_index);
}

struct ReturnStats {
  std::vector<double> episode_returns;
  double mean = 0.0;
  double stddev = 0.0;
};

// Rolls out a (deterministic) policy callable state -> action for a fixed
// number of episodes with per-episode derived reset seeds.
template <typename Policy>
ReturnStats evaluate_return(Env& env, Policy&& policy, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("evaluate_return: need episodes >= 1");
  ReturnStats stats;
  Rng reset_seeds(splitmix64(seed ^ fnv1a64("eval-episodes")));
  for (int e = 0; e < episodes; ++e) {
    Vec s = env_reset(env, reset_seeds.next_u64());
    double ret = 0.0;
    while (true) {
      const EnvStep step = env_step(env, policy(s));
      ret += step.reward;
      if (step.done) break;
      s = step.state;
    }
    stats.episode_returns.push_back(ret);
  }
  for (double r : stats.episode_returns) stats.mean += r;
  stats.mean /= static_cast<double>(episodes);
  if (episodes > 1) {
    double acc = 0.0;
    for (double r : stats.episode_returns) acc += (r - stats.mean) * (r - stats.mean);
    stats.stddev = std::sqrt(acc / static_cast<double>(episodes - 1));
  }
  return stats;
}

}  // namespace sgfd
