#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgfd/decorr.hpp"
#include "sgfd/mat.hpp"
#include "sgfd/nn.hpp"
#include "sgfd/rff.hpp"
#include "sgfd/rng.hpp"
#include "sgfd/saliency.hpp"

namespace sgfd {

struct Transition {
  Vec s;
  Vec a;
  double r = 0.0;
  Vec s_next;
  bool done = false;
  Vec env_label;
};

inline void validate_transition(const Transition& t) {
  if (t.s.empty() || t.s.size() != t.s_next.size())
    throw std::invalid_argument("Transition: state size mismatch");
  if (t.a.empty()) throw std::invalid_argument("Transition: empty action");
  if (!all_finite(t.s) || !all_finite(t.a) || !all_finite(t.s_next) || !std::isfinite(t.r))
    throw std::invalid_argument("Transition: non-finite field");
  for (double x : t.a)
    if (x < -1.0 || x > 1.0) throw std::invalid_argument("Transition: action outside [-1, 1]");
  int ones = 0;
  for (double v : t.env_label) {
    if (v == 1.0) ++ones;
    else if (v != 0.0) throw std::invalid_argument("Transition: label entries must be 0 or 1");
  }
  if (ones != 1) throw std::invalid_argument("Transition: env label must be one-hot");
}

// Bounded FIFO store with a seeded uniform-with-replacement sampler.
struct ReplayBuffer {
  std::size_t capacity = 0;
  std::vector<Transition> storage;
  std::size_t next_slot = 0;
  Rng rng{0};
};

inline ReplayBuffer make_buffer(std::size_t capacity, std::uint64_t sample_seed) {
  if (capacity == 0) throw std::invalid_argument("make_buffer: capacity must be positive");
  ReplayBuffer buf;
  buf.capacity = capacity;
  buf.rng = Rng(sample_seed);
  return buf;
}

inline std::size_t buffer_size(const ReplayBuffer& buf) { return buf.storage.size(); }

inline void buffer_push(ReplayBuffer& buf, const Transition& t) {
  validate_transition(t);
  if (!buf.storage.empty()) {
    const Transition& first = buf.storage.front();
    if (t.s.size() != first.s.size() || t.a.size() != first.a.size() ||
        t.env_label.size() != first.env_label.size())
      throw std::invalid_argument("buffer_push: transition shape mismatch");
  }
  if (buf.storage.size() < buf.capacity) {
    buf.storage.push_back(t);
  } else {
    buf.storage[buf.next_slot] = t;
    buf.next_slot = (buf.next_slot + 1) % buf.capacity;
  }
}

struct SampleBatch {
  Mat states;
  Mat actions;
  Vec rewards;
  Mat next_states;
  Vec dones;  // 1.0 terminal, 0.0 otherwise
  Mat env_labels;

  std::size_t n() const { return states.rows; }

  FeatureBatch features() const { return FeatureBatch{states, env_labels}; }
};

inline SampleBatch buffer_sample(ReplayBuffer& buf, std::size_t n) {
  if (n == 0) throw std::invalid_argument("buffer_sample: need n >= 1");
  if (buf.storage.size() < n)
    throw std::runtime_error("buffer_sample: insufficient data (" +
                             std::to_string(buf.storage.size()) + " < " + std::to_string(n) + ")");
  const Transition& first = buf.storage.front();
  SampleBatch batch;
  batch.states = Mat(n, first.s.size());
  batch.actions = Mat(n, first.a.size());
  batch.rewards = Vec(n, 0.0);
  batch.next_states = Mat(n, first.s.size());
  batch.dones = Vec(n, 0.0);
  batch.env_labels = Mat(n, first.env_label.size());
  for (std::size_t k = 0; k < n; ++k) {
    const Transition& t = buf.storage[buf.rng.below(buf.storage.size())];
    for (std::size_t j = 0; j < t.s.size(); ++j) {
      batch.states.at(k, j) = t.s[j];
      batch.next_states.at(k, j) = t.s_next[j];
    }
    for (std::size_t j = 0; j < t.a.size(); ++j) batch.actions.at(k, j) = t.a[j];
    for (std::size_t j = 0; j < t.env_label.size(); ++j) batch.env_labels.at(k, j) = t.env_label[j];
    batch.rewards[k] = t.r;
    batch.dones[k] = t.done ? 1.0 : 0.0;
  }
  return batch;
}

constexpr double kLogStdMin = -10.0;
constexpr double kLogStdMax = 2.0;

struct SacConfig {
  std::size_t state_dim = 0;
  std::size_t action_dim = 1;
  std::size_t hidden = 64;
  std::size_t layers = 2;
  double learning_rate = 3e-4;
  double gamma = 0.99;
  double tau = 0.01;
  double alpha = 0.1;
  int actor_update_frequency = 2;
};

inline void validate_sac_config(const SacConfig& cfg) {
  if (cfg.state_dim == 0 || cfg.action_dim == 0 || cfg.hidden == 0 || cfg.layers == 0)
    throw std::invalid_argument("SacConfig: dimensions must be positive");
  if (cfg.learning_rate <= 0.0) throw std::invalid_argument("SacConfig: learning rate must be positive");
  if (!(cfg.gamma >= 0.0 && cfg.gamma < 1.0)) throw std::invalid_argument("SacConfig: gamma must be in [0, 1)");
  if (!(cfg.tau > 0.0 && cfg.tau <= 1.0)) throw std::invalid_argument("SacConfig: tau must be in (0, 1]");
  if (cfg.alpha < 0.0) throw std::invalid_argument("SacConfig: alpha must be nonnegative");
  if (cfg.actor_update_frequency < 1)
    throw std::invalid_argument("SacConfig: actor update frequency must be positive");
}

// Tanh-squashed Gaussian policy and clipped double-Q critics with target
// copies. Target nets equal the main nets at construction.
struct SacAgent {
  Mlp policy;  // outputs [mean, log-std] per action dimension
  Mlp q1, q2, q1_target, q2_target;
  OptimizerState policy_opt, q1_opt, q2_opt;
  double alpha = 0.1;
  double gamma = 0.99;
  double tau = 0.01;
  int actor_update_frequency = 2;
  std::size_t action_dim = 1;
  Rng noise{0};
};

inline SacAgent make_sac_agent(const SacConfig& cfg, Rng& init_rng, std::uint64_t noise_seed) {
  validate_sac_config(cfg);
  std::vector<std::size_t> policy_sizes{cfg.state_dim};
  std::vector<std::size_t> q_sizes{cfg.state_dim + cfg.action_dim};
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    policy_sizes.push_back(cfg.hidden);
    q_sizes.push_back(cfg.hidden);
  }
  policy_sizes.push_back(2 * cfg.action_dim);
  q_sizes.push_back(1);

  SacAgent agent;
  agent.policy = mlp_init(policy_sizes, Activation::kRelu, Activation::kIdentity, init_rng);
  agent.q1 = mlp_init(q_sizes, Activation::kRelu, Activation::kIdentity, init_rng);
  agent.q2 = mlp_init(q_sizes, Activation::kRelu, Activation::kIdentity, init_rng);
  agent.q1_target = agent.q1;
  agent.q2_target = agent.q2;
  agent.policy_opt = make_adam(cfg.learning_rate);
  agent.q1_opt = make_adam(cfg.learning_rate);
  agent.q2_opt = make_adam(cfg.learning_rate);
  agent.alpha = cfg.alpha;
  agent.gamma = cfg.gamma;
  agent.tau = cfg.tau;
  agent.actor_update_frequency = cfg.actor_update_frequency;
  agent.action_dim = cfg.action_dim;
  agent.noise = Rng(noise_seed);
  return agent;
}

namespace detail {

inline double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

// log(1 - tanh(u)^2) without catastrophic cancellation at large |u|.
inline double log_one_minus_tanh_sq(double u) {
  return 2.0 * (std::log(2.0) - u - softplus(-2.0 * u));
}

constexpr double kHalfLog2Pi = 0.9189385332046727;  // log(2*pi)/2

struct PolicyEval {
  MlpCache cache;
  Vec mean, log_std, std_dev;  // log_std after clamping
  std::vector<bool> clamped;   // per-dimension log-std clamp indicator
  Vec u, a;                    // pre-squash and squashed action
  double log_prob = 0.0;
};

inline PolicyEval policy_eval(const SacAgent& agent, const Vec& s, const double* eps) {
  PolicyEval pe;
  const Vec out = mlp_forward_cached(agent.policy, s, pe.cache);
  const std::size_t A = agent.action_dim;
  pe.mean.resize(A);
  pe.log_std.resize(A);
  pe.std_dev.resize(A);
  pe.clamped.resize(A);
  pe.u.resize(A);
  pe.a.resize(A);
  for (std::size_t j = 0; j < A; ++j) {
    pe.mean[j] = out[j];
    const double raw = out[A + j];
    const double l = std::clamp(raw, kLogStdMin, kLogStdMax);
    pe.clamped[j] = raw != l;
    pe.log_std[j] = l;
    pe.std_dev[j] = std::exp(l);
    pe.u[j] = pe.mean[j] + pe.std_dev[j] * eps[j];
    pe.a[j] = std::tanh(pe.u[j]);
    pe.log_prob += -0.5 * eps[j] * eps[j] - l - kHalfLog2Pi - log_one_minus_tanh_sq(pe.u[j]);
  }
  return pe;
}

inline Vec state_action(const Vec& s, const Vec& a) {
  Vec sa = s;
  sa.insert(sa.end(), a.begin(), a.end());
  return sa;
}

inline Vec sample_row(const Mat& m, std::size_t i) {
  Vec row(m.cols);
  for (std::size_t j = 0; j < m.cols; ++j) row[j] = m.at(i, j);
  return row;
}

}  // namespace detail

// Gaussian action noise for one batch, one row per sample, drawn in sample
// then dimension order from the agent's noise stream.
inline Mat draw_action_noise(SacAgent& agent, std::size_t n) {
  Mat eps(n, agent.action_dim);
  for (double& x : eps.a) x = agent.noise.normal();
  return eps;
}

enum class ActMode { kStochastic, kDeterministic };

inline Vec act(SacAgent& agent, const Vec& s, ActMode mode) {
  if (!all_finite(s)) throw std::invalid_argument("act: non-finite state");
  if (mode == ActMode::kDeterministic) {
    const Vec out = mlp_forward(agent.policy, s);
    Vec a(agent.action_dim);
    for (std::size_t j = 0; j < agent.action_dim; ++j) a[j] = std::tanh(out[j]);
    return a;
  }
  Vec eps(agent.action_dim);
  for (double& x : eps) x = agent.noise.normal();
  return detail::policy_eval(agent, s, eps.data()).a;
}

struct QLossReport {
  double q1_loss = 0.0;
  double q2_loss = 0.0;
  MlpGrads q1_grads, q2_grads;
  double total() const { return q1_loss + q2_loss; }
};

// Soft Bellman residual with a gradient-stopped target:
//   y = r + gamma * (1 - done) * (min target Q(s', a') - alpha * log pi(a'|s')),
// a' reparameterized from the policy with the supplied noise. Each critic's
// loss is the batch mean of (Q(s,a) - y)^2 / 2; the critic update is
// unweighted by design (ablation flags live at the experiment layer).
inline QLossReport q_loss(SacAgent& agent, const SampleBatch& batch, const Mat& eps_next) {
  const std::size_t n = batch.n();
  if (n == 0) throw std::invalid_argument("q_loss: empty batch");
  if (eps_next.rows != n || eps_next.cols != agent.action_dim)
    throw std::invalid_argument("q_loss: noise shape mismatch");

  QLossReport report;
  report.q1_grads = make_zero_grads(agent.q1);
  report.q2_grads = make_zero_grads(agent.q2);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Vec s = detail::sample_row(batch.states, k);
    const Vec a = detail::sample_row(batch.actions, k);
    const Vec s_next = detail::sample_row(batch.next_states, k);
    const detail::PolicyEval pe = detail::policy_eval(agent, s_next, &eps_next.a[k * eps_next.cols]);
    const Vec sa_next = detail::state_action(s_next, pe.a);
    const double q1t = mlp_forward(agent.q1_target, sa_next)[0];
    const double q2t = mlp_forward(agent.q2_target, sa_next)[0];
    const double value = std::min(q1t, q2t) - agent.alpha * pe.log_prob;
    const double y = batch.rewards[k] + agent.gamma * (1.0 - batch.dones[k]) * value;

    const Vec sa = detail::state_action(s, a);
    MlpCache c1, c2;
    const double q1v = mlp_forward_cached(agent.q1, sa, c1)[0];
    const double q2v = mlp_forward_cached(agent.q2, sa, c2)[0];
    report.q1_loss += 0.5 * (q1v - y) * (q1v - y) * inv_n;
    report.q2_loss += 0.5 * (q2v - y) * (q2v - y) * inv_n;
    mlp_backward_cached(agent.q1, c1, Vec{(q1v - y) * inv_n}, report.q1_grads);
    mlp_backward_cached(agent.q2, c2, Vec{(q2v - y) * inv_n}, report.q2_grads);
  }
  if (!std::isfinite(report.q1_loss) || !std::isfinite(report.q2_loss))
    throw DivergenceError("q_loss: non-finite loss");
  return report;
}

inline QLossReport q_loss(SacAgent& agent, const SampleBatch& batch) {
  const Mat eps = draw_action_noise(agent, batch.n());
  return q_loss(agent, batch, eps);
}

struct PolicyLossReport {
  double loss = 0.0;
  MlpGrads grads;
};

// (1/n) sum_k w_k (alpha * log pi(a_k|s_k) - min Q(s_k, a_k)), a_k
// reparameterized with the supplied noise. The 1/n normalization makes w == 1
// reproduce the unweighted expectation loss bit-for-bit under shared noise.
inline PolicyLossReport policy_loss_weighted(SacAgent& agent, const SampleBatch& batch,
                                             const Vec& w, const Mat& eps) {
  const std::size_t n = batch.n();
  if (n == 0) throw std::invalid_argument("policy_loss_weighted: empty batch");
  if (w.size() != n) throw std::invalid_argument("policy_loss_weighted: weight length mismatch");
  if (!weights_feasible(w)) throw std::invalid_argument("policy_loss_weighted: infeasible weights");
  if (eps.rows != n || eps.cols != agent.action_dim)
    throw std::invalid_argument("policy_loss_weighted: noise shape mismatch");

  PolicyLossReport report;
  report.grads = make_zero_grads(agent.policy);
  const std::size_t A = agent.action_dim;
  const double inv_n = 1.0 / static_cast<double>(n);
  MlpGrads q_scratch = make_zero_grads(agent.q1);
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const Vec s = detail::sample_row(batch.states, k);
    detail::PolicyEval pe = detail::policy_eval(agent, s, &eps.a[k * eps.cols]);
    const Vec sa = detail::state_action(s, pe.a);
    MlpCache c1, c2;
    const double q1v = mlp_forward_cached(agent.q1, sa, c1)[0];
    const double q2v = mlp_forward_cached(agent.q2, sa, c2)[0];
    const bool use_q1 = q1v <= q2v;
    const double qmin = use_q1 ? q1v : q2v;
    acc += w[k] * (agent.alpha * pe.log_prob - qmin);

    // dQ/da of the active critic, action slice of its input gradient.
    const Vec q_input_grad = use_q1 ? mlp_backward_cached(agent.q1, c1, Vec{1.0}, q_scratch)
                                    : mlp_backward_cached(agent.q2, c2, Vec{1.0}, q_scratch);
    const double scale = w[k] * inv_n;
    Vec upstream(2 * A, 0.0);
    for (std::size_t j = 0; j < A; ++j) {
      const double t = std::tanh(pe.u[j]);
      const double da_du = 1.0 - t * t;
      const double dq_da = q_input_grad[s.size() + j];
      const double du_dlog_std = pe.std_dev[j] * eps.at(k, j);
      upstream[j] = scale * (agent.alpha * 2.0 * t - dq_da * da_du);
      if (!pe.clamped[j])
        upstream[A + j] =
            scale * (agent.alpha * (-1.0 + 2.0 * t * du_dlog_std) - dq_da * da_du * du_dlog_std);
    }
    mlp_backward_cached(agent.policy, pe.cache, upstream, report.grads);
  }
  report.loss = acc * inv_n;
  if (!std::isfinite(report.loss)) throw DivergenceError("policy_loss_weighted: non-finite loss");
  return report;
}

inline PolicyLossReport policy_loss_weighted(SacAgent& agent, const SampleBatch& batch, const Vec& w) {
  const Mat eps = draw_action_noise(agent, batch.n());
  return policy_loss_weighted(agent, batch, w, eps);
}

inline void soft_update(SacAgent& agent) {
  const double tau = agent.tau;
  auto blend = [tau](const Mlp& main, Mlp& target) {
    for (std::size_t l = 0; l < main.num_layers(); ++l) {
      for (std::size_t i = 0; i < main.weights[l].a.size(); ++i)
        target.weights[l].a[i] = tau * main.weights[l].a[i] + (1.0 - tau) * target.weights[l].a[i];
      for (std::size_t i = 0; i < main.biases[l].size(); ++i)
        target.biases[l][i] = tau * main.biases[l][i] + (1.0 - tau) * target.biases[l][i];
    }
  };
  blend(agent.q1, agent.q1_target);
  blend(agent.q2, agent.q2_target);
}

enum class Method { kSgfd, kUniformDecorr, kNoDecorr };

inline const char* method_tag(Method m) {
  switch (m) {
    case Method::kSgfd: return "sgfd";
    case Method::kUniformDecorr: return "uniform_decorr";
    default: return "no_decorr";
  }
}

inline Method method_from_tag(const std::string& tag) {
  if (tag == "sgfd") return Method::kSgfd;
  if (tag == "uniform_decorr") return Method::kUniformDecorr;
  if (tag == "no_decorr") return Method::kNoDecorr;
  throw std::invalid_argument("method_from_tag: unknown method '" + tag + "'");
}

struct TrainStepConfig {
  std::size_t batch_size = 128;
  Method method = Method::kSgfd;
  DecorrConfig decorr;
  ClassifierGate gate;
  bool trace = false;
};

struct StepReport {
  long step = 0;
  double q1_loss = 0.0;
  double q2_loss = 0.0;
  bool policy_updated = false;
  double policy_loss = 0.0;
  double objective_initial = 0.0;
  double objective_final = 0.0;
  bool classifier_active = false;
  bool classifier_updated = false;
  double classifier_accuracy = -1.0;  // -1 when the classifier never ran
  Vec p;
  Vec w;
  Vec objective_trajectory;  // populated when tracing
};

// One outer training step: sample, gated classifier refresh, feature
// probabilities (uniform until the classifier first clears the gate, uniform
// always for the uniform_decorr arm), weight optimization (skipped for
// no_decorr, which records the uniform-weight objective unused), unweighted
// critic update, weighted policy update every actor_update_frequency steps,
// then a target soft update.
inline StepReport train_step(SacAgent& agent, ReplayBuffer& buffer, EnvClassifier& clf,
                             const std::vector<RffFeatureMap>& maps, const TrainStepConfig& cfg,
                             long global_step) {
  StepReport report;
  report.step = global_step;
  const SampleBatch batch = buffer_sample(buffer, cfg.batch_size);
  const FeatureBatch feats = batch.features();
  const std::size_t d = feats.d();
  const std::size_t K = feats.num_envs();

  if (cfg.method == Method::kSgfd && K > 1) {
    auto sampler = [&] { return buffer_sample(buffer, cfg.batch_size).features(); };
    const ClassifierUpdateReport cr = classifier_update(clf, sampler, cfg.gate, global_step);
    report.classifier_active = true;
    report.classifier_updated = cr.did_update;
    report.classifier_accuracy = cr.accuracy;
  }

  report.p = Vec(d, 1.0 / static_cast<double>(d));
  if (cfg.method == Method::kSgfd && K > 1 && clf.gate_passed)
    report.p = compute_feature_saliency(clf, feats).p;

  if (cfg.method == Method::kNoDecorr) {
    report.w = Vec(feats.n(), 1.0);
    report.objective_initial = decorrelation_objective(feats, report.w, maps, report.p, cfg.decorr);
    report.objective_final = report.objective_initial;
  } else {
    const WeightOptReport wr = optimize_weights(feats, maps, report.p, cfg.decorr);
    report.w = wr.w;
    report.objective_initial = wr.initial_objective;
    report.objective_final = wr.final_objective;
    if (cfg.trace) report.objective_trajectory = wr.trajectory;
  }

  const QLossReport ql = q_loss(agent, batch);
  mlp_optimizer_step(agent.q1, ql.q1_grads, agent.q1_opt);
  mlp_optimizer_step(agent.q2, ql.q2_grads, agent.q2_opt);
  report.q1_loss = ql.q1_loss;
  report.q2_loss = ql.q2_loss;

  if (global_step % agent.actor_update_frequency == 0) {
    const PolicyLossReport pl = policy_loss_weighted(agent, batch, report.w);
    mlp_optimizer_step(agent.policy, pl.grads, agent.policy_opt);
    report.policy_updated = true;
    report.policy_loss = pl.loss;
  }

  soft_update(agent);
  return report;
}

}  // namespace sgfd
