#pragma once

#include <cmath>
#include <stdexcept>

#include "sgfd/mat.hpp"
#include "sgfd/rng.hpp"

namespace sgfd {

// M random cosine functions x -> sqrt(2)*cos(omega*x + phi), omega ~ N(0,1),
// phi ~ Uniform[0, 2pi). Immutable once sampled; one map per feature per run.
struct RffFeatureMap {
  Vec omegas;
  Vec phis;

  std::size_t size() const { return omegas.size(); }
};

inline RffFeatureMap rff_sample(std::size_t M, Rng& rng) {
  if (M == 0) throw std::invalid_argument("rff_sample: M must be positive");
  RffFeatureMap map;
  map.omegas.resize(M);
  map.phis.resize(M);
  for (std::size_t m = 0; m < M; ++m) map.omegas[m] = rng.normal();
  for (std::size_t m = 0; m < M; ++m) map.phis[m] = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  return map;
}

inline RffFeatureMap rff_sample(std::size_t M, std::uint64_t seed) {
  Rng rng(seed);
  return rff_sample(M, rng);
}

// One map per feature column, all drawn from the same stream.
inline std::vector<RffFeatureMap> sample_feature_maps(std::size_t d, std::size_t M, Rng& rng) {
  if (d == 0) throw std::invalid_argument("sample_feature_maps: d must be positive");
  std::vector<RffFeatureMap> maps;
  maps.reserve(d);
  for (std::size_t j = 0; j < d; ++j) maps.push_back(rff_sample(M, rng));
  return maps;
}

inline constexpr double kSqrt2 = 1.4142135623730950488;

inline Vec rff_apply(const RffFeatureMap& map, double x) {
  if (!std::isfinite(x)) throw std::invalid_argument("rff_apply: non-finite input");
  Vec out(map.size());
  for (std::size_t m = 0; m < map.size(); ++m)
    out[m] = kSqrt2 * std::cos(map.omegas[m] * x + map.phis[m]);
  return out;
}

// n x M matrix of the map applied to each entry of a column.
inline Mat rff_apply_column(const RffFeatureMap& map, const Vec& column) {
  Mat out(column.size(), map.size());
  for (std::size_t k = 0; k < column.size(); ++k) {
    if (!std::isfinite(column[k])) throw std::invalid_argument("rff_apply_column: non-finite input");
    for (std::size_t m = 0; m < map.size(); ++m)
      out.at(k, m) = kSqrt2 * std::cos(map.omegas[m] * column[k] + map.phis[m]);
  }
  return out;
}

}  // namespace sgfd
