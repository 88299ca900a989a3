#pragma once

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgfd/agent.hpp"
#include "sgfd/decorr.hpp"
#include "sgfd/envs.hpp"
#include "sgfd/saliency.hpp"

extern "C" char** environ;

namespace sgfd {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// section -> key -> raw value, both lowercase; std::map keeps serialization stable.
using ConfigMap = std::map<std::string, std::map<std::string, std::string>>;

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace detail

inline ConfigMap parse_config_text(const std::string& text) {
  ConfigMap map;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(line_no) + ": unterminated section header");
      section = detail::lower(detail::trim(line.substr(1, line.size() - 2)));
      if (section.empty())
        throw ConfigError("config line " + std::to_string(line_no) + ": empty section name");
      map[section];
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    if (section.empty())
      throw ConfigError("config line " + std::to_string(line_no) + ": key outside any [section]");
    const std::string key = detail::lower(detail::trim(line.substr(0, eq)));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    map[section][key] = detail::trim(line.substr(eq + 1));
  }
  return map;
}

inline ConfigMap load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

inline std::string serialize_config(const ConfigMap& map) {
  std::ostringstream out;
  bool first = true;
  for (const auto& [section, kv] : map) {
    if (!first) out << '\n';
    first = false;
    out << '[' << section << "]\n";
    for (const auto& [key, value] : kv) out << key << " = " << value << '\n';
  }
  return out.str();
}

// Every run parameter, defaults mirroring the published hyperparameter tables
// where a desk-scale value is not forced (deviations carry a comment).
struct RunConfig {
  // [run]
  std::uint64_t seed = 1;
  Method method = Method::kSgfd;
  long total_steps = 20000;
  long eval_every = 2000;
  int eval_episodes = 10;
  std::string output_dir = "out";
  bool trace = false;
  // [env]
  EnvKind kind = EnvKind::kSpuriousBandit;
  int num_envs = 2;
  EnvConfig env;        // d, rho, noise_std, ranges, eval values, horizon, dt
  long dataset_n = 2000;
  // [policy]  (SAC arm)
  double policy_learning_rate = 1e-3;
  std::size_t batch_size = 128;
  double tau = 0.01;
  int actor_update_frequency = 2;
  std::size_t replay_capacity = 100000;  // table value 1e6, scaled to desk runs
  std::size_t policy_hidden = 64;        // table value 1024, scaled to desk runs
  std::size_t policy_layers = 2;
  double gamma = 0.99;
  double alpha = 0.1;
  // [reweight]
  double reweight_learning_rate = 1e-2;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t num_rff = 5;
  int inner_iters = 10;
  WeightMode weight_mode = WeightMode::kSampleMeasure;
  bool standardize_features = true;
  // [classifier]
  std::size_t classifier_hidden = 128;
  std::size_t classifier_layers = 2;
  double classifier_learning_rate = 1e-3;
  long warmup_steps = 1000;
  double accuracy_threshold = 0.9;
  int max_inner_iters = 10;
};

namespace detail {

struct FieldRef {
  const ConfigMap& map;
  std::string section, key;

  std::string where() const { return "[" + section + "] " + key; }
  const std::string* raw() const {
    auto s = map.find(section);
    if (s == map.end()) return nullptr;
    auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  }
};

inline double parse_double(const FieldRef& f, double fallback) {
  const std::string* raw = f.raw();
  if (!raw) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(*raw, &used);
    if (used != raw->size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(f.where() + ": not a number: '" + *raw + "'");
  }
}

inline long parse_long(const FieldRef& f, long fallback) {
  const std::string* raw = f.raw();
  if (!raw) return fallback;
  try {
    std::size_t used = 0;
    const long v = std::stol(*raw, &used);
    if (used != raw->size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(f.where() + ": not an integer: '" + *raw + "'");
  }
}

inline std::uint64_t parse_u64(const FieldRef& f, std::uint64_t fallback) {
  const std::string* raw = f.raw();
  if (!raw) return fallback;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(*raw, &used);
    if (used != raw->size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(f.where() + ": not an unsigned integer: '" + *raw + "'");
  }
}

inline bool parse_bool(const FieldRef& f, bool fallback) {
  const std::string* raw = f.raw();
  if (!raw) return fallback;
  const std::string v = lower(*raw);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(f.where() + ": not a boolean: '" + *raw + "'");
}

inline std::string parse_string(const FieldRef& f, const std::string& fallback) {
  const std::string* raw = f.raw();
  return raw ? *raw : fallback;
}

inline std::vector<double> parse_double_list(const FieldRef& f, const std::vector<double>& fallback) {
  const std::string* raw = f.raw();
  if (!raw) return fallback;
  std::vector<double> out;
  std::istringstream in(*raw);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError(f.where() + ": empty list entry");
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ConfigError(f.where() + ": not a number: '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError(f.where() + ": empty list");
  return out;
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_double_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += format_double(v[i]);
  }
  return out;
}

template <typename T>
void require(bool ok, const std::string& section, const std::string& key, const T& value,
             const std::string& rule) {
  if (ok) return;
  std::ostringstream msg;
  msg << "[" << section << "] " << key << ": value " << value << " " << rule;
  throw ConfigError(msg.str());
}

}  // namespace detail

inline void validate_run_config(const RunConfig& c) {
  using detail::require;
  require(c.total_steps >= 1, "run", "total_steps", c.total_steps, "must be >= 1");
  require(c.eval_every >= 1, "run", "eval_every", c.eval_every, "must be >= 1");
  require(c.eval_episodes >= 1, "run", "eval_episodes", c.eval_episodes, "must be >= 1");
  require(!c.output_dir.empty(), "run", "output_dir", std::string("(empty)"), "must be set");

  require(c.num_envs >= 2, "env", "num_envs", c.num_envs, "must be >= 2");
  require(c.env.d >= 3, "env", "d", c.env.d, "must be >= 3");
  require(std::abs(c.env.rho) < 1.0, "env", "rho", c.env.rho, "must satisfy |rho| < 1");
  require(c.env.noise_std >= 0.0, "env", "noise_std", c.env.noise_std, "must be >= 0");
  require(c.env.changed_std > 0.0, "env", "changed_std", c.env.changed_std, "must be > 0");
  require(c.env.base_lo < c.env.base_hi, "env", "base_lo", c.env.base_lo,
          "must be below base_hi");
  require(c.env.horizon >= 1, "env", "horizon", c.env.horizon, "must be >= 1");
  require(c.env.dt > 0.0, "env", "dt", c.env.dt, "must be > 0");
  require(c.dataset_n >= 2, "env", "dataset_n", c.dataset_n, "must be >= 2");

  require(c.policy_learning_rate > 0.0, "policy", "learning_rate", c.policy_learning_rate,
          "must be > 0");
  require(c.batch_size >= 2, "policy", "batch_size", c.batch_size, "must be >= 2");
  require(c.tau > 0.0 && c.tau <= 1.0, "policy", "tau", c.tau, "must be in (0, 1]");
  require(c.actor_update_frequency >= 1, "policy", "actor_update_frequency",
          c.actor_update_frequency, "must be >= 1");
  require(c.replay_capacity >= c.batch_size, "policy", "replay_capacity", c.replay_capacity,
          "must be >= batch_size");
  require(c.policy_hidden >= 1, "policy", "hidden", c.policy_hidden, "must be >= 1");
  require(c.policy_layers >= 1, "policy", "layers", c.policy_layers, "must be >= 1");
  require(c.gamma >= 0.0 && c.gamma < 1.0, "policy", "gamma", c.gamma, "must be in [0, 1)");
  require(c.alpha >= 0.0, "policy", "alpha", c.alpha, "must be >= 0");

  require(c.reweight_learning_rate > 0.0, "reweight", "learning_rate", c.reweight_learning_rate,
          "must be > 0");
  require(c.momentum >= 0.0 && c.momentum < 1.0, "reweight", "momentum", c.momentum,
          "must be in [0, 1)");
  require(c.weight_decay >= 0.0, "reweight", "weight_decay", c.weight_decay, "must be >= 0");
  require(c.num_rff >= 1, "reweight", "num_rff", c.num_rff, "must be >= 1");
  require(c.inner_iters >= 1, "reweight", "inner_iters", c.inner_iters, "must be >= 1");

  require(c.classifier_hidden >= 1, "classifier", "hidden", c.classifier_hidden, "must be >= 1");
  require(c.classifier_layers >= 1, "classifier", "layers", c.classifier_layers, "must be >= 1");
  require(c.classifier_learning_rate > 0.0, "classifier", "learning_rate",
          c.classifier_learning_rate, "must be > 0");
  require(c.warmup_steps >= 0, "classifier", "warmup_steps", c.warmup_steps, "must be >= 0");
  require(c.accuracy_threshold > 0.0 && c.accuracy_threshold <= 1.0, "classifier",
          "accuracy_threshold", c.accuracy_threshold, "must be in (0, 1]");
  require(c.max_inner_iters >= 1, "classifier", "max_inner_iters", c.max_inner_iters,
          "must be >= 1");
}

inline RunConfig run_config_from_map(const ConfigMap& map) {
  using detail::FieldRef;
  static const std::map<std::string, std::vector<std::string>> known = {
      {"run", {"seed", "method", "total_steps", "eval_every", "eval_episodes", "output_dir", "trace"}},
      {"env",
       {"kind", "num_envs", "d", "rho", "noise_std", "changed_std", "base_lo", "base_hi",
        "envelope_lo", "envelope_hi", "interp_values", "extrap_values", "task_relevant", "horizon",
        "dt", "dataset_n"}},
      {"policy",
       {"learning_rate", "batch_size", "tau", "actor_update_frequency", "replay_capacity", "hidden",
        "layers", "gamma", "alpha"}},
      {"reweight",
       {"learning_rate", "momentum", "weight_decay", "num_rff", "inner_iters", "weight_mode",
        "standardize_features"}},
      {"classifier",
       {"hidden", "layers", "learning_rate", "warmup_steps", "accuracy_threshold",
        "max_inner_iters"}},
  };
  for (const auto& [section, kv] : map) {
    auto s = known.find(section);
    if (s == known.end()) throw ConfigError("unknown config section [" + section + "]");
    for (const auto& [key, value] : kv) {
      (void)value;
      if (std::find(s->second.begin(), s->second.end(), key) == s->second.end())
        throw ConfigError("unknown config key [" + section + "] " + key);
    }
  }

  RunConfig c;
  c.seed = detail::parse_u64({map, "run", "seed"}, c.seed);
  const std::string method = detail::parse_string({map, "run", "method"}, method_tag(c.method));
  try {
    c.method = method_from_tag(method);
  } catch (const std::invalid_argument&) {
    throw ConfigError("[run] method: must be one of sgfd, uniform_decorr, no_decorr; got '" +
                      method + "'");
  }
  c.total_steps = detail::parse_long({map, "run", "total_steps"}, c.total_steps);
  c.eval_every = detail::parse_long({map, "run", "eval_every"}, c.eval_every);
  c.eval_episodes = static_cast<int>(detail::parse_long({map, "run", "eval_episodes"}, c.eval_episodes));
  c.output_dir = detail::parse_string({map, "run", "output_dir"}, c.output_dir);
  c.trace = detail::parse_bool({map, "run", "trace"}, c.trace);

  const std::string kind = detail::parse_string({map, "env", "kind"}, env_kind_tag(c.kind));
  try {
    c.kind = env_kind_from_tag(kind);
  } catch (const std::invalid_argument&) {
    throw ConfigError("[env] kind: must be one of spurious_bandit, pointmass; got '" + kind + "'");
  }
  c.num_envs = static_cast<int>(detail::parse_long({map, "env", "num_envs"}, c.num_envs));
  c.env.d = static_cast<int>(detail::parse_long({map, "env", "d"}, c.env.d));
  c.env.rho = detail::parse_double({map, "env", "rho"}, c.env.rho);
  c.env.noise_std = detail::parse_double({map, "env", "noise_std"}, c.env.noise_std);
  c.env.changed_std = detail::parse_double({map, "env", "changed_std"}, c.env.changed_std);
  c.env.base_lo = detail::parse_double({map, "env", "base_lo"}, c.env.base_lo);
  c.env.base_hi = detail::parse_double({map, "env", "base_hi"}, c.env.base_hi);
  c.env.envelope_lo = detail::parse_double({map, "env", "envelope_lo"}, c.env.envelope_lo);
  c.env.envelope_hi = detail::parse_double({map, "env", "envelope_hi"}, c.env.envelope_hi);
  c.env.interp_values = detail::parse_double_list({map, "env", "interp_values"}, c.env.interp_values);
  c.env.extrap_values = detail::parse_double_list({map, "env", "extrap_values"}, c.env.extrap_values);
  c.env.task_relevant = detail::parse_bool({map, "env", "task_relevant"}, c.env.task_relevant);
  c.env.horizon = static_cast<int>(detail::parse_long({map, "env", "horizon"}, c.env.horizon));
  c.env.dt = detail::parse_double({map, "env", "dt"}, c.env.dt);
  c.dataset_n = detail::parse_long({map, "env", "dataset_n"}, c.dataset_n);

  c.policy_learning_rate = detail::parse_double({map, "policy", "learning_rate"}, c.policy_learning_rate);
  c.batch_size = static_cast<std::size_t>(detail::parse_long({map, "policy", "batch_size"},
                                                             static_cast<long>(c.batch_size)));
  c.tau = detail::parse_double({map, "policy", "tau"}, c.tau);
  c.actor_update_frequency = static_cast<int>(
      detail::parse_long({map, "policy", "actor_update_frequency"}, c.actor_update_frequency));
  c.replay_capacity = static_cast<std::size_t>(detail::parse_long(
      {map, "policy", "replay_capacity"}, static_cast<long>(c.replay_capacity)));
  c.policy_hidden = static_cast<std::size_t>(
      detail::parse_long({map, "policy", "hidden"}, static_cast<long>(c.policy_hidden)));
  c.policy_layers = static_cast<std::size_t>(
      detail::parse_long({map, "policy", "layers"}, static_cast<long>(c.policy_layers)));
  c.gamma = detail::parse_double({map, "policy", "gamma"}, c.gamma);
  c.alpha = detail::parse_double({map, "policy", "alpha"}, c.alpha);

  c.reweight_learning_rate =
      detail::parse_double({map, "reweight", "learning_rate"}, c.reweight_learning_rate);
  c.momentum = detail::parse_double({map, "reweight", "momentum"}, c.momentum);
  c.weight_decay = detail::parse_double({map, "reweight", "weight_decay"}, c.weight_decay);
  c.num_rff = static_cast<std::size_t>(
      detail::parse_long({map, "reweight", "num_rff"}, static_cast<long>(c.num_rff)));
  c.inner_iters = static_cast<int>(detail::parse_long({map, "reweight", "inner_iters"}, c.inner_iters));
  const std::string mode = detail::parse_string(
      {map, "reweight", "weight_mode"},
      c.weight_mode == WeightMode::kSampleMeasure ? "sample_measure" : "scaled_features");
  if (mode == "sample_measure") c.weight_mode = WeightMode::kSampleMeasure;
  else if (mode == "scaled_features") c.weight_mode = WeightMode::kScaledFeatures;
  else
    throw ConfigError("[reweight] weight_mode: must be sample_measure or scaled_features; got '" +
                      mode + "'");
  c.standardize_features =
      detail::parse_bool({map, "reweight", "standardize_features"}, c.standardize_features);

  c.classifier_hidden = static_cast<std::size_t>(
      detail::parse_long({map, "classifier", "hidden"}, static_cast<long>(c.classifier_hidden)));
  c.classifier_layers = static_cast<std::size_t>(
      detail::parse_long({map, "classifier", "layers"}, static_cast<long>(c.classifier_layers)));
  c.classifier_learning_rate =
      detail::parse_double({map, "classifier", "learning_rate"}, c.classifier_learning_rate);
  c.warmup_steps = detail::parse_long({map, "classifier", "warmup_steps"}, c.warmup_steps);
  c.accuracy_threshold =
      detail::parse_double({map, "classifier", "accuracy_threshold"}, c.accuracy_threshold);
  c.max_inner_iters =
      static_cast<int>(detail::parse_long({map, "classifier", "max_inner_iters"}, c.max_inner_iters));

  validate_run_config(c);
  return c;
}

// Fully resolved (defaults filled in) mirror of the config, for manifests and
// determinism checks.
inline ConfigMap config_to_map(const RunConfig& c) {
  using detail::format_double;
  ConfigMap m;
  m["run"]["seed"] = std::to_string(c.seed);
  m["run"]["method"] = method_tag(c.method);
  m["run"]["total_steps"] = std::to_string(c.total_steps);
  m["run"]["eval_every"] = std::to_string(c.eval_every);
  m["run"]["eval_episodes"] = std::to_string(c.eval_episodes);
  m["run"]["output_dir"] = c.output_dir;
  m["run"]["trace"] = c.trace ? "true" : "false";

  m["env"]["kind"] = env_kind_tag(c.kind);
  m["env"]["num_envs"] = std::to_string(c.num_envs);
  m["env"]["d"] = std::to_string(c.env.d);
  m["env"]["rho"] = format_double(c.env.rho);
  m["env"]["noise_std"] = format_double(c.env.noise_std);
  m["env"]["changed_std"] = format_double(c.env.changed_std);
  m["env"]["base_lo"] = format_double(c.env.base_lo);
  m["env"]["base_hi"] = format_double(c.env.base_hi);
  m["env"]["envelope_lo"] = format_double(c.env.envelope_lo);
  m["env"]["envelope_hi"] = format_double(c.env.envelope_hi);
  m["env"]["interp_values"] = detail::format_double_list(c.env.interp_values);
  m["env"]["extrap_values"] = detail::format_double_list(c.env.extrap_values);
  m["env"]["task_relevant"] = c.env.task_relevant ? "true" : "false";
  m["env"]["horizon"] = std::to_string(c.env.horizon);
  m["env"]["dt"] = format_double(c.env.dt);
  m["env"]["dataset_n"] = std::to_string(c.dataset_n);

  m["policy"]["learning_rate"] = format_double(c.policy_learning_rate);
  m["policy"]["batch_size"] = std::to_string(c.batch_size);
  m["policy"]["tau"] = format_double(c.tau);
  m["policy"]["actor_update_frequency"] = std::to_string(c.actor_update_frequency);
  m["policy"]["replay_capacity"] = std::to_string(c.replay_capacity);
  m["policy"]["hidden"] = std::to_string(c.policy_hidden);
  m["policy"]["layers"] = std::to_string(c.policy_layers);
  m["policy"]["gamma"] = format_double(c.gamma);
  m["policy"]["alpha"] = format_double(c.alpha);

  m["reweight"]["learning_rate"] = format_double(c.reweight_learning_rate);
  m["reweight"]["momentum"] = format_double(c.momentum);
  m["reweight"]["weight_decay"] = format_double(c.weight_decay);
  m["reweight"]["num_rff"] = std::to_string(c.num_rff);
  m["reweight"]["inner_iters"] = std::to_string(c.inner_iters);
  m["reweight"]["weight_mode"] =
      c.weight_mode == WeightMode::kSampleMeasure ? "sample_measure" : "scaled_features";
  m["reweight"]["standardize_features"] = c.standardize_features ? "true" : "false";

  m["classifier"]["hidden"] = std::to_string(c.classifier_hidden);
  m["classifier"]["layers"] = std::to_string(c.classifier_layers);
  m["classifier"]["learning_rate"] = format_double(c.classifier_learning_rate);
  m["classifier"]["warmup_steps"] = std::to_string(c.warmup_steps);
  m["classifier"]["accuracy_threshold"] = format_double(c.accuracy_threshold);
  m["classifier"]["max_inner_iters"] = std::to_string(c.max_inner_iters);
  return m;
}

// SGFD_<SECTION>_<KEY> environment variables override config values; the first
// token after the prefix is the section, the rest is the key.
inline void apply_env_overrides(ConfigMap& map) {
  for (char** env = environ; env && *env; ++env) {
    const std::string entry(*env);
    if (entry.rfind("SGFD_", 0) != 0) continue;
    const std::size_t eq = entry.find('=');
    if (eq == std::string::npos) continue;
    const std::string name = entry.substr(5, eq - 5);
    const std::string value = entry.substr(eq + 1);
    const std::size_t sep = name.find('_');
    if (sep == std::string::npos || sep == 0 || sep + 1 >= name.size())
      throw ConfigError("environment override SGFD_" + name +
                        ": expected SGFD_<SECTION>_<KEY> with nonempty section and key");
    map[detail::lower(name.substr(0, sep))][detail::lower(name.substr(sep + 1))] = value;
  }
}

}  // namespace sgfd
