#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sgfd/decorr.hpp"
#include "sgfd/mat.hpp"
#include "sgfd/nn.hpp"
#include "sgfd/rng.hpp"

namespace sgfd {

// Predicts which training environment a state came from. gate_passed latches
// once a measured accuracy first exceeds the gate threshold; until then the
// training pipeline keeps uniform feature probabilities.
struct EnvClassifier {
  Mlp net;
  OptimizerState opt;
  bool gate_passed = false;
};

struct ClassifierConfig {
  std::size_t hidden = 128;
  std::size_t layers = 2;
  double learning_rate = 1e-3;
};

inline EnvClassifier make_classifier(std::size_t d, std::size_t num_envs,
                                     const ClassifierConfig& cfg, Rng& rng) {
  if (d == 0 || num_envs == 0)
    throw std::invalid_argument("make_classifier: dimensions must be positive");
  if (cfg.hidden == 0 || cfg.layers == 0)
    throw std::invalid_argument("make_classifier: architecture sizes must be positive");
  if (cfg.learning_rate <= 0.0)
    throw std::invalid_argument("make_classifier: learning rate must be positive");
  std::vector<std::size_t> sizes{d};
  for (std::size_t l = 0; l < cfg.layers; ++l) sizes.push_back(cfg.hidden);
  sizes.push_back(num_envs);
  EnvClassifier clf;
  clf.net = mlp_init(sizes, Activation::kRelu, Activation::kIdentity, rng);
  clf.opt = make_adam(cfg.learning_rate);
  return clf;
}

// No classifier update before warmup or whenever measured accuracy already
// exceeds the threshold; otherwise at most max_inner_iters batches per call.
struct ClassifierGate {
  int warmup_steps = 1000;
  double accuracy_threshold = 0.9;
  int max_inner_iters = 10;
};

inline void validate_gate(const ClassifierGate& gate) {
  if (!(gate.accuracy_threshold > 0.0 && gate.accuracy_threshold <= 1.0))
    throw std::invalid_argument("ClassifierGate: accuracy threshold must be in (0, 1]");
  if (gate.warmup_steps < 0) throw std::invalid_argument("ClassifierGate: warmup must be nonnegative");
  if (gate.max_inner_iters < 1) throw std::invalid_argument("ClassifierGate: need at least one inner iteration");
}

namespace detail {

inline Vec value_row(const FeatureBatch& batch, std::size_t i) {
  Vec x(batch.d());
  for (std::size_t j = 0; j < batch.d(); ++j) x[j] = batch.values.at(i, j);
  return x;
}

inline std::size_t label_index(const FeatureBatch& batch, std::size_t i) {
  for (std::size_t k = 0; k < batch.num_envs(); ++k)
    if (batch.env_labels.at(i, k) == 1.0) return k;
  throw std::invalid_argument("label_index: row is not one-hot");
}

inline void check_classifier_batch(const EnvClassifier& clf, const FeatureBatch& batch) {
  if (batch.n() == 0) throw std::invalid_argument("classifier: empty batch");
  if (batch.d() != clf.net.input_dim())
    throw std::invalid_argument("classifier: feature dimension mismatch");
  if (batch.num_envs() != clf.net.output_dim())
    throw std::invalid_argument("classifier: environment count mismatch");
}

}  // namespace detail

inline double classifier_accuracy(const EnvClassifier& clf, const FeatureBatch& batch) {
  detail::check_classifier_batch(clf, batch);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < batch.n(); ++i) {
    const Vec logits = mlp_forward(clf.net, detail::value_row(batch, i));
    if (argmax(logits) == detail::label_index(batch, i)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(batch.n());
}

struct ClassifierUpdateReport {
  double accuracy = 0.0;
  bool did_update = false;
  int inner_iters = 0;
  double last_loss = 0.0;
};

// One gated classifier refresh: before warmup only the accuracy is measured;
// afterwards each inner iteration samples a fresh batch, re-measures, and
// either breaks (accuracy above threshold) or takes one adam step on the mean
// cross-entropy of that batch.
template <typename Sampler>
ClassifierUpdateReport classifier_update(EnvClassifier& clf, Sampler&& sampler,
                                         const ClassifierGate& gate, long global_step) {
  validate_gate(gate);
  ClassifierUpdateReport report;
  if (global_step < gate.warmup_steps) {
    report.accuracy = classifier_accuracy(clf, sampler());
    if (report.accuracy > gate.accuracy_threshold) clf.gate_passed = true;
    return report;
  }
  for (int it = 0; it < gate.max_inner_iters; ++it) {
    const FeatureBatch batch = sampler();
    report.accuracy = classifier_accuracy(clf, batch);
    if (report.accuracy > gate.accuracy_threshold) {
      clf.gate_passed = true;
      break;
    }
    const double inv_n = 1.0 / static_cast<double>(batch.n());
    MlpGrads grads = make_zero_grads(clf.net);
    double loss = 0.0;
    for (std::size_t i = 0; i < batch.n(); ++i) {
      MlpCache cache;
      const Vec logits = mlp_forward_cached(clf.net, detail::value_row(batch, i), cache);
      const Vec probs = softmax(logits);
      Vec label(batch.num_envs(), 0.0);
      label[detail::label_index(batch, i)] = 1.0;
      loss += cross_entropy(probs, label) * inv_n;
      Vec upstream = cross_entropy_logit_grad(probs, label);
      for (double& g : upstream) g *= inv_n;
      mlp_backward_cached(clf.net, cache, upstream, grads);
    }
    if (!std::isfinite(loss)) throw DivergenceError("classifier_update: non-finite loss");
    mlp_optimizer_step(clf.net, grads, clf.opt);
    report.did_update = true;
    report.inner_iters = it + 1;
    report.last_loss = loss;
  }
  return report;
}

// Mean magnitude of the input gradient of the labeled class's log-probability,
// per feature. The signed variant averages raw gradients instead.
inline Vec saliency_map(const EnvClassifier& clf, const FeatureBatch& batch, bool absolute = true) {
  detail::check_classifier_batch(clf, batch);
  const std::size_t d = batch.d();
  Vec m(d, 0.0);
  MlpGrads scratch = make_zero_grads(clf.net);
  for (std::size_t i = 0; i < batch.n(); ++i) {
    MlpCache cache;
    const Vec logits = mlp_forward_cached(clf.net, detail::value_row(batch, i), cache);
    const Vec probs = softmax(logits);
    Vec upstream(probs.size());
    for (std::size_t k = 0; k < probs.size(); ++k) upstream[k] = -probs[k];
    upstream[detail::label_index(batch, i)] += 1.0;
    const Vec input_grad = mlp_backward_cached(clf.net, cache, upstream, scratch);
    for (std::size_t j = 0; j < d; ++j)
      m[j] += absolute ? std::abs(input_grad[j]) : input_grad[j];
  }
  for (double& x : m) x /= static_cast<double>(batch.n());
  return m;
}

inline Vec feature_probs(const Vec& m) {
  if (m.empty()) throw std::invalid_argument("feature_probs: empty saliency vector");
  return softmax(m);
}

struct FeatureSaliency {
  Vec m;
  Vec p;
};

inline FeatureSaliency compute_feature_saliency(const EnvClassifier& clf, const FeatureBatch& batch,
                                                bool absolute = true) {
  FeatureSaliency out;
  out.m = saliency_map(clf, batch, absolute);
  out.p = feature_probs(out.m);
  return out;
}

}  // namespace sgfd
