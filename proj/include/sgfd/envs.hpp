#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgfd/decorr.hpp"
#include "sgfd/mat.hpp"
#include "sgfd/rng.hpp"

namespace sgfd {

enum class EnvKind { kSpuriousBandit, kPointmass };
enum class EvalMode { kInterpolation, kExtrapolation };

inline const char* env_kind_tag(EnvKind kind) {
  return kind == EnvKind::kSpuriousBandit ? "spurious_bandit" : "pointmass";
}

inline EnvKind env_kind_from_tag(const std::string& tag) {
  if (tag == "spurious_bandit") return EnvKind::kSpuriousBandit;
  if (tag == "pointmass") return EnvKind::kPointmass;
  throw std::invalid_argument("env_kind_from_tag: unknown kind '" + tag + "'");
}

// Held-out values of the per-environment variation parameter. Interpolation
// values lie strictly inside the training envelope, extrapolation values
// strictly outside it; the partition is validated at generation time.
struct EvalSuite {
  EvalMode mode = EvalMode::kInterpolation;
  double train_lo = 0.0;
  double train_hi = 0.0;
  std::vector<double> test_values;
};

// One environment instance's parameters. The changed feature is the state
// entry whose distribution varies across environments (mean variation_value);
// in bandit training environments a nuisance feature is coupled to it through
// a shared Gaussian so their pooled Pearson correlation hits nuisance_rho.
struct EnvSpec {
  EnvKind kind = EnvKind::kSpuriousBandit;
  int d = 6;
  int changed_feature_index = 1;
  int nuisance_index = 2;
  double variation_value = 3.0;
  bool task_relevant = true;
  double noise_std = 0.1;
  std::uint64_t seed = 0;
  int horizon = 1;

  // bandit
  double changed_std = 0.25;
  double nuisance_rho = 0.8;  // 0 breaks the correlation (test environments)
  double pooled_mean = 3.0;   // pooled changed-feature moments of the training mix
  double pooled_std = 1.0;

  // pointmass
  double dt = 0.05;
};

struct EnvStep {
  Vec state;
  double reward = 0.0;
  bool done = false;
};

struct Env {
  EnvSpec spec;
  Rng rng{0};
  int t = 0;
  Vec state;
  int clip_events = 0;

  // pointmass dynamic state
  double x = 0.0;
  double v = 0.0;
  double goal = 0.0;
};

namespace detail {

constexpr double kBanditRelGain = 1.0;
constexpr double kBanditChangedGain = 0.8;

// Optimal bandit action for a context.
inline double bandit_target(const EnvSpec& spec, const Vec& z) {
  double arg = kBanditRelGain * z[0];
  if (spec.task_relevant)
    arg += kBanditChangedGain * (z[static_cast<std::size_t>(spec.changed_feature_index)] - spec.pooled_mean);
  return std::tanh(arg);
}

inline Vec bandit_context(Env& env) {
  const EnvSpec& spec = env.spec;
  Vec z(static_cast<std::size_t>(spec.d), 0.0);
  z[0] = env.rng.normal();
  const double changed = spec.variation_value + spec.changed_std * env.rng.normal();
  z[static_cast<std::size_t>(spec.changed_feature_index)] = changed;
  const double rho = spec.nuisance_rho;
  double nui = env.rng.normal();
  if (rho != 0.0)
    nui = rho * (changed - spec.pooled_mean) / spec.pooled_std +
          std::sqrt(1.0 - rho * rho) * nui;
  z[static_cast<std::size_t>(spec.nuisance_index)] = nui;
  for (int j = 0; j < spec.d; ++j) {
    if (j == 0 || j == spec.changed_feature_index || j == spec.nuisance_index) continue;
    z[static_cast<std::size_t>(j)] = env.rng.normal();
  }
  return z;
}

// Pointmass state layout: [x, v, goal, mass encoding, nuisance...].
inline Vec pointmass_state(Env& env) {
  const EnvSpec& spec = env.spec;
  Vec z(static_cast<std::size_t>(spec.d), 0.0);
  z[0] = env.x;
  z[1] = env.v;
  z[2] = env.goal;
  z[3] = spec.variation_value;
  for (int j = 4; j < spec.d; ++j) z[static_cast<std::size_t>(j)] = env.rng.normal();
  return z;
}

inline double clip_action(Env& env, double a) {
  if (a >= -1.0 && a <= 1.0) return a;
  if (env.clip_events++ == 0)
    std::cerr << "warning: action " << a << " outside [-1,1], clipped\n";
  return std::clamp(a, -1.0, 1.0);
}

}  // namespace detail

inline void validate_env_spec(const EnvSpec& spec) {
  if (spec.kind == EnvKind::kSpuriousBandit) {
    if (spec.d < 3) throw std::invalid_argument("EnvSpec: bandit needs d >= 3");
    if (spec.changed_feature_index <= 0 || spec.changed_feature_index >= spec.d ||
        spec.nuisance_index <= 0 || spec.nuisance_index >= spec.d ||
        spec.changed_feature_index == spec.nuisance_index)
      throw std::invalid_argument("EnvSpec: feature indices must be distinct and inside [1, d)");
    if (std::abs(spec.nuisance_rho) >= 1.0)
      throw std::invalid_argument("EnvSpec: correlation target must satisfy |rho| < 1");
    if (spec.changed_std <= 0.0) throw std::invalid_argument("EnvSpec: changed_std must be positive");
    if (spec.pooled_std <= 0.0) throw std::invalid_argument("EnvSpec: pooled_std must be positive");
  } else {
    if (spec.d < 4) throw std::invalid_argument("EnvSpec: pointmass needs d >= 4");
    if (spec.variation_value <= 0.0) throw std::invalid_argument("EnvSpec: mass must be positive");
    if (spec.dt <= 0.0) throw std::invalid_argument("EnvSpec: dt must be positive");
    if (spec.changed_feature_index != 3)
      throw std::invalid_argument("EnvSpec: pointmass encodes mass at index 3");
  }
  if (spec.noise_std < 0.0) throw std::invalid_argument("EnvSpec: noise_std must be nonnegative");
  if (spec.horizon < 1) throw std::invalid_argument("EnvSpec: horizon must be positive");
}

inline Env make_env(const EnvSpec& spec) {
  validate_env_spec(spec);
  Env env;
  env.spec = spec;
  env.rng = Rng(spec.seed);
  return env;
}

inline int env_action_dim(const Env&) { return 1; }

inline Vec env_reset(Env& env, std::uint64_t seed) {
  env.rng = Rng(seed);
  env.t = 0;
  if (env.spec.kind == EnvKind::kSpuriousBandit) {
    env.state = detail::bandit_context(env);
  } else {
    env.x = env.rng.uniform(-1.0, 1.0);
    env.v = 0.0;
    env.goal = env.rng.uniform(-1.0, 1.0);
    env.state = detail::pointmass_state(env);
  }
  return env.state;
}

inline EnvStep env_step(Env& env, const Vec& action) {
  if (action.size() != 1) throw std::invalid_argument("env_step: action must be one-dimensional");
  if (!std::isfinite(action[0])) throw std::invalid_argument("env_step: non-finite action");
  const double a = detail::clip_action(env, action[0]);
  const EnvSpec& spec = env.spec;

  EnvStep out;
  if (spec.kind == EnvKind::kSpuriousBandit) {
    const double target = detail::bandit_target(spec, env.state);
    const double miss = a - target;
    out.reward = -miss * miss;
    if (spec.noise_std > 0.0) out.reward += spec.noise_std * env.rng.normal();
    env.state = detail::bandit_context(env);
  } else {
    env.x = env.x + env.v * spec.dt;
    env.v = env.v + (a / spec.variation_value) * spec.dt;
    const double miss = env.x - env.goal;
    out.reward = -miss * miss;
    if (spec.noise_std > 0.0) out.reward += spec.noise_std * env.rng.normal();
    env.state = detail::pointmass_state(env);
  }
  env.t += 1;
  out.done = env.t >= spec.horizon;
  out.state = env.state;
  return out;
}

// Training environments plus held-out evaluation grids.
struct EnvSuite {
  EnvKind kind = EnvKind::kSpuriousBandit;
  std::vector<EnvSpec> train;
  std::vector<EnvSpec> interp_test;
  std::vector<EnvSpec> extrap_test;
  EvalSuite interpolation;
  EvalSuite extrapolation;
};

struct EnvConfig {
  int d = 6;
  double rho = 0.8;
  double noise_std = 0.1;
  double changed_std = 0.25;
  double base_lo = 1.5;  // variation values of the training environments
  double base_hi = 4.5;
  double envelope_lo = 1.0;  // declared training range for the eval partition
  double envelope_hi = 5.0;
  std::vector<double> interp_values = {2.0, 3.0, 4.0};
  std::vector<double> extrap_values = {0.0, 0.5, 5.5, 6.0};
  bool task_relevant = true;
  int horizon = 1;
  double dt = 0.05;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::uint64_t env_seed(std::uint64_t base, const std::string& name) {
  return splitmix64(base ^ fnv1a64(name));
}

inline std::vector<double> linspace(double lo, double hi, int k) {
  std::vector<double> out(static_cast<std::size_t>(k));
  if (k == 1) {
    out[0] = 0.5 * (lo + hi);
    return out;
  }
  for (int i = 0; i < k; ++i)
    out[static_cast<std::size_t>(i)] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(k - 1);
  return out;
}

inline void validate_eval_partition(const EnvSuite& suite) {
  for (double v : suite.interpolation.test_values)
    if (!(v > suite.interpolation.train_lo && v < suite.interpolation.train_hi))
      throw std::invalid_argument("EnvSuite: interpolation value " + std::to_string(v) +
                                  " not strictly inside the training range");
  for (double v : suite.extrapolation.test_values)
    if (!(v < suite.extrapolation.train_lo || v > suite.extrapolation.train_hi))
      throw std::invalid_argument("EnvSuite: extrapolation value " + std::to_string(v) +
                                  " not strictly outside the training range");
}

// Empirical certificate that the changed feature separates the training
// environments: every pair of environment means differs by at least two
// pooled standard deviations.
inline void validate_distribution_shift(const EnvSuite& suite) {
  constexpr int kSamples = 512;
  const std::size_t K = suite.train.size();
  std::vector<double> means(K, 0.0), vars(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    Env env = make_env(suite.train[k]);
    const auto j = static_cast<std::size_t>(suite.train[k].changed_feature_index);
    Vec xs(kSamples);
    for (int i = 0; i < kSamples; ++i)
      xs[static_cast<std::size_t>(i)] = env_reset(env, env_seed(suite.train[k].seed, "shift-" + std::to_string(i)))[j];
    for (double x : xs) means[k] += x;
    means[k] /= kSamples;
    for (double x : xs) vars[k] += (x - means[k]) * (x - means[k]);
    vars[k] /= kSamples - 1;
  }
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = i + 1; j < K; ++j) {
      const double pooled = std::sqrt(0.5 * (vars[i] + vars[j]));
      const double gap = std::abs(means[i] - means[j]);
      if (gap < 2.0 * pooled || gap == 0.0)
        throw std::invalid_argument("EnvSuite: changed-feature shift below two pooled stddevs between environments " +
                                    std::to_string(i) + " and " + std::to_string(j));
    }
}

}  // namespace detail

inline EnvSuite make_spurious_bandit(int K, int d, const EnvConfig& cfg) {
  if (K < 2) throw std::invalid_argument("make_spurious_bandit: need K >= 2");
  if (d < 3) throw std::invalid_argument("make_spurious_bandit: need d >= 3");
  if (std::abs(cfg.rho) >= 1.0)
    throw std::invalid_argument("make_spurious_bandit: correlation target must satisfy |rho| < 1");
  if (!(cfg.base_lo < cfg.base_hi))
    throw std::invalid_argument("make_spurious_bandit: base_lo must be below base_hi");

  const std::vector<double> bases = detail::linspace(cfg.base_lo, cfg.base_hi, K);
  double pooled_mean = 0.0;
  for (double b : bases) pooled_mean += b;
  pooled_mean /= static_cast<double>(K);
  double base_var = 0.0;
  for (double b : bases) base_var += (b - pooled_mean) * (b - pooled_mean);
  base_var /= static_cast<double>(K);
  const double pooled_std = std::sqrt(cfg.changed_std * cfg.changed_std + base_var);

  EnvSuite suite;
  suite.kind = EnvKind::kSpuriousBandit;
  EnvSpec proto;
  proto.kind = EnvKind::kSpuriousBandit;
  proto.d = d;
  proto.task_relevant = cfg.task_relevant;
  proto.noise_std = cfg.noise_std;
  proto.horizon = cfg.horizon;
  proto.changed_std = cfg.changed_std;
  proto.pooled_mean = pooled_mean;
  proto.pooled_std = pooled_std;

  for (int k = 0; k < K; ++k) {
    EnvSpec spec = proto;
    spec.variation_value = bases[static_cast<std::size_t>(k)];
    spec.nuisance_rho = cfg.rho;
    spec.seed = detail::env_seed(cfg.seed, "train-env-" + std::to_string(k));
    validate_env_spec(spec);
    suite.train.push_back(spec);
  }
  auto make_test = [&](double value, const std::string& name) {
    EnvSpec spec = proto;
    spec.variation_value = value;
    spec.nuisance_rho = 0.0;
    spec.seed = detail::env_seed(cfg.seed, name);
    validate_env_spec(spec);
    return spec;
  };
  for (std::size_t i = 0; i < cfg.interp_values.size(); ++i)
    suite.interp_test.push_back(make_test(cfg.interp_values[i], "interp-env-" + std::to_string(i)));
  for (std::size_t i = 0; i < cfg.extrap_values.size(); ++i)
    suite.extrap_test.push_back(make_test(cfg.extrap_values[i], "extrap-env-" + std::to_string(i)));

  suite.interpolation = {EvalMode::kInterpolation, cfg.envelope_lo, cfg.envelope_hi, cfg.interp_values};
  suite.extrapolation = {EvalMode::kExtrapolation, cfg.envelope_lo, cfg.envelope_hi, cfg.extrap_values};
  detail::validate_eval_partition(suite);
  detail::validate_distribution_shift(suite);
  return suite;
}

inline EnvSuite make_pointmass(int K, const EnvConfig& cfg) {
  if (K < 2) throw std::invalid_argument("make_pointmass: need K >= 2");
  const int d = std::max(cfg.d, 4);
  if (!(cfg.base_lo < cfg.base_hi) || cfg.base_lo <= 0.0)
    throw std::invalid_argument("make_pointmass: masses must be positive and base_lo < base_hi");

  const std::vector<double> masses = detail::linspace(cfg.base_lo, cfg.base_hi, K);
  EnvSuite suite;
  suite.kind = EnvKind::kPointmass;
  EnvSpec proto;
  proto.kind = EnvKind::kPointmass;
  proto.d = d;
  proto.changed_feature_index = 3;
  proto.nuisance_index = 4 < d ? 4 : 3;
  proto.noise_std = cfg.noise_std;
  proto.horizon = cfg.horizon > 1 ? cfg.horizon : 100;
  proto.dt = cfg.dt;
  proto.task_relevant = true;

  for (int k = 0; k < K; ++k) {
    EnvSpec spec = proto;
    spec.variation_value = masses[static_cast<std::size_t>(k)];
    spec.seed = detail::env_seed(cfg.seed, "train-env-" + std::to_string(k));
    validate_env_spec(spec);
    suite.train.push_back(spec);
  }
  auto make_test = [&](double value, const std::string& name) {
    EnvSpec spec = proto;
    spec.variation_value = value;
    spec.seed = detail::env_seed(cfg.seed, name);
    validate_env_spec(spec);
    return spec;
  };
  for (std::size_t i = 0; i < cfg.interp_values.size(); ++i)
    suite.interp_test.push_back(make_test(cfg.interp_values[i], "interp-env-" + std::to_string(i)));
  for (std::size_t i = 0; i < cfg.extrap_values.size(); ++i)
    suite.extrap_test.push_back(make_test(cfg.extrap_values[i], "extrap-env-" + std::to_string(i)));

  suite.interpolation = {EvalMode::kInterpolation, cfg.envelope_lo, cfg.envelope_hi, cfg.interp_values};
  suite.extrapolation = {EvalMode::kExtrapolation, cfg.envelope_lo, cfg.envelope_hi, cfg.extrap_values};
  detail::validate_eval_partition(suite);
  detail::validate_distribution_shift(suite);
  return suite;
}

// Initial states drawn round-robin from the training environments, with
// one-hot environment labels; the sampling unit for classifier and
// decorrelation experiments on fixed datasets.
inline FeatureBatch make_feature_dataset(const std::vector<EnvSpec>& envs, int n, std::uint64_t seed) {
  if (envs.empty()) throw std::invalid_argument("make_feature_dataset: no environments");
  if (n < 1) throw std::invalid_argument("make_feature_dataset: need n >= 1");
  const std::size_t K = envs.size();
  const auto d = static_cast<std::size_t>(envs[0].d);
  std::vector<Env> instances;
  for (const auto& spec : envs) instances.push_back(make_env(spec));

  FeatureBatch batch;
  batch.values = Mat(static_cast<std::size_t>(n), d);
  batch.env_labels = Mat(static_cast<std::size_t>(n), K);
  for (int i = 0; i < n; ++i) {
    const std::size_t k = static_cast<std::size_t>(i) % K;
    const Vec state = env_reset(instances[k], detail::env_seed(seed, "dataset-" + std::to_string(i)));
    for (std::size_t j = 0; j < d; ++j) batch.values.at(static_cast<std::size_t>(i), j) = state[j];
    batch.env_labels.at(static_cast<std::size_t>(i), k) = 1.0;
  }
  return batch;
}

}  // namespace sgfd
