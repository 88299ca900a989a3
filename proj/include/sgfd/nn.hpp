#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgfd/mat.hpp"
#include "sgfd/rng.hpp"

namespace sgfd {

// Raised when a loss or gradient goes non-finite; callers abort or fall back.
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

enum class Activation { kRelu, kTanh, kIdentity };

inline const char* activation_tag(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kIdentity: return "identity";
  }
  throw std::invalid_argument("activation_tag: unknown activation");
}

inline Activation activation_from_tag(const std::string& tag) {
  if (tag == "relu") return Activation::kRelu;
  if (tag == "tanh") return Activation::kTanh;
  if (tag == "identity") return Activation::kIdentity;
  throw std::invalid_argument("activation_from_tag: unknown tag '" + tag + "'");
}

inline double apply_activation(Activation a, double z) {
  switch (a) {
    case Activation::kRelu: return z > 0.0 ? z : 0.0;
    case Activation::kTanh: return std::tanh(z);
    case Activation::kIdentity: return z;
  }
  return z;
}

inline double activation_derivative(Activation a, double z) {
  switch (a) {
    case Activation::kRelu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::kIdentity: return 1.0;
  }
  return 1.0;
}

// Dense feedforward net. weights[l] has shape (layer_sizes[l+1] x layer_sizes[l]).
struct Mlp {
  std::vector<std::size_t> layer_sizes;
  std::vector<Mat> weights;
  std::vector<Vec> biases;
  Activation hidden_activation = Activation::kRelu;
  Activation output_activation = Activation::kIdentity;

  std::size_t num_layers() const { return weights.size(); }
  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }
};

inline Mlp mlp_init(const std::vector<std::size_t>& layer_sizes, Activation hidden,
                    Activation output, Rng& rng) {
  if (layer_sizes.size() < 2)
    throw std::invalid_argument("mlp_init: need at least input and output layer sizes");
  for (std::size_t s : layer_sizes)
    if (s == 0) throw std::invalid_argument("mlp_init: layer sizes must be positive");

  Mlp net;
  net.layer_sizes = layer_sizes;
  net.hidden_activation = hidden;
  net.output_activation = output;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const std::size_t fan_in = layer_sizes[l];
    const std::size_t fan_out = layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Mat w(fan_out, fan_in);
    for (double& x : w.a) x = rng.uniform(-bound, bound);
    net.weights.push_back(std::move(w));
    net.biases.emplace_back(fan_out, 0.0);
  }
  return net;
}

struct MlpCache {
  std::vector<Vec> pre;   // pre-activations z_l, l = 1..L
  std::vector<Vec> post;  // activations a_l, with post[0] = input x
};

inline Vec mlp_forward_cached(const Mlp& net, const Vec& x, MlpCache& cache) {
  if (x.size() != net.input_dim())
    throw std::invalid_argument("mlp_forward: input dimension mismatch");
  cache.pre.clear();
  cache.post.clear();
  cache.post.push_back(x);
  Vec a = x;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    Vec z = matvec(net.weights[l], a);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += net.biases[l][i];
    const Activation act =
        (l + 1 == net.num_layers()) ? net.output_activation : net.hidden_activation;
    a.assign(z.size(), 0.0);
    for (std::size_t i = 0; i < z.size(); ++i) a[i] = apply_activation(act, z[i]);
    cache.pre.push_back(std::move(z));
    cache.post.push_back(a);
  }
  return a;
}

inline Vec mlp_forward(const Mlp& net, const Vec& x) {
  MlpCache cache;
  return mlp_forward_cached(net, x, cache);
}

struct MlpGrads {
  std::vector<Mat> d_weights;
  std::vector<Vec> d_biases;
};

inline MlpGrads make_zero_grads(const Mlp& net) {
  MlpGrads g;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    g.d_weights.emplace_back(net.weights[l].rows, net.weights[l].cols);
    g.d_biases.emplace_back(net.biases[l].size(), 0.0);
  }
  return g;
}

// Accumulates d<upstream, output>/dparams into grads; returns the input gradient.
inline Vec mlp_backward_cached(const Mlp& net, const MlpCache& cache, const Vec& upstream,
                               MlpGrads& grads) {
  if (upstream.size() != net.output_dim())
    throw std::invalid_argument("mlp_backward: upstream dimension mismatch");
  const std::size_t L = net.num_layers();
  Vec delta(upstream.size());
  for (std::size_t i = 0; i < delta.size(); ++i)
    delta[i] = upstream[i] * activation_derivative(net.output_activation, cache.pre[L - 1][i]);

  for (std::size_t l = L; l-- > 0;) {
    const Vec& a_prev = cache.post[l];
    Mat& dW = grads.d_weights[l];
    for (std::size_t i = 0; i < dW.rows; ++i)
      for (std::size_t j = 0; j < dW.cols; ++j) dW.at(i, j) += delta[i] * a_prev[j];
    for (std::size_t i = 0; i < delta.size(); ++i) grads.d_biases[l][i] += delta[i];
    Vec back = matTvec(net.weights[l], delta);
    if (l == 0) return back;
    delta.assign(back.size(), 0.0);
    for (std::size_t i = 0; i < back.size(); ++i)
      delta[i] = back[i] * activation_derivative(net.hidden_activation, cache.pre[l - 1][i]);
  }
  return {};
}

inline std::pair<MlpGrads, Vec> mlp_backward(const Mlp& net, const Vec& x, const Vec& upstream) {
  MlpCache cache;
  mlp_forward_cached(net, x, cache);
  MlpGrads grads = make_zero_grads(net);
  Vec input_grad = mlp_backward_cached(net, cache, upstream, grads);
  return {std::move(grads), std::move(input_grad)};
}

inline Vec softmax(const Vec& v) {
  if (v.empty()) throw std::invalid_argument("softmax: empty input");
  if (!all_finite(v)) throw std::invalid_argument("softmax: non-finite input");
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  Vec p(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    p[i] = std::exp(v[i] - m);
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  return p;
}

inline constexpr double kLogProbClamp = 1e-12;

inline double cross_entropy(const Vec& probs, const Vec& one_hot_label) {
  if (probs.size() != one_hot_label.size())
    throw std::invalid_argument("cross_entropy: size mismatch");
  double p_true = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (one_hot_label[i] != 0.0) p_true += probs[i];
  return -std::log(std::max(p_true, kLogProbClamp));
}

// d cross_entropy / d logits for probs = softmax(logits): p - y.
inline Vec cross_entropy_logit_grad(const Vec& probs, const Vec& one_hot_label) {
  if (probs.size() != one_hot_label.size())
    throw std::invalid_argument("cross_entropy_logit_grad: size mismatch");
  Vec g(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) g[i] = probs[i] - one_hot_label[i];
  return g;
}

// Ties break toward the lowest index.
inline std::size_t argmax(const Vec& v) {
  if (v.empty()) throw std::invalid_argument("argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

enum class OptimizerKind { kSgdMomentum, kAdam };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kSgdMomentum;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step_count = 0;
  std::vector<Vec> buf1;  // momentum buffer / first moment, one slot per tensor
  std::vector<Vec> buf2;  // second moment (adam only)
};

inline OptimizerState make_sgd_momentum(double lr, double momentum, double weight_decay) {
  OptimizerState st;
  st.kind = OptimizerKind::kSgdMomentum;
  st.learning_rate = lr;
  st.momentum = momentum;
  st.weight_decay = weight_decay;
  return st;
}

inline OptimizerState make_adam(double lr, double weight_decay = 0.0) {
  OptimizerState st;
  st.kind = OptimizerKind::kAdam;
  st.learning_rate = lr;
  st.weight_decay = weight_decay;
  return st;
}

namespace detail {
inline Vec& slot_buffer(std::vector<Vec>& bufs, std::size_t slot, std::size_t size) {
  if (bufs.size() <= slot) bufs.resize(slot + 1);
  if (bufs[slot].empty()) bufs[slot].assign(size, 0.0);
  if (bufs[slot].size() != size)
    throw std::invalid_argument("optimizer_step: accumulator shape mismatch");
  return bufs[slot];
}
}  // namespace detail

// One tensor update. `slot` selects the accumulator; callers keep slots stable.
// Adam consumers must advance st.step_count once per optimization step (see
// optimizer_begin_step) so bias correction is shared across tensors.
inline void optimizer_step(Vec& param, const Vec& grad, OptimizerState& st, std::size_t slot) {
  if (param.size() != grad.size())
    throw std::invalid_argument("optimizer_step: param/grad size mismatch");
  if (!all_finite(grad)) throw DivergenceError("optimizer_step: non-finite gradient");

  if (st.kind == OptimizerKind::kSgdMomentum) {
    Vec& buf = detail::slot_buffer(st.buf1, slot, param.size());
    for (std::size_t i = 0; i < param.size(); ++i) {
      buf[i] = st.momentum * buf[i] + grad[i] + st.weight_decay * param[i];
      param[i] -= st.learning_rate * buf[i];
    }
    return;
  }

  Vec& m = detail::slot_buffer(st.buf1, slot, param.size());
  Vec& v = detail::slot_buffer(st.buf2, slot, param.size());
  if (st.step_count < 1)
    throw std::invalid_argument("optimizer_step: adam requires optimizer_begin_step first");
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i] + st.weight_decay * param[i];
    m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g;
    v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g * g;
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    param[i] -= st.learning_rate * mhat / (std::sqrt(vhat) + st.epsilon);
  }
}

inline void optimizer_begin_step(OptimizerState& st) { ++st.step_count; }

inline void mlp_optimizer_step(Mlp& net, const MlpGrads& grads, OptimizerState& st) {
  if (st.kind == OptimizerKind::kAdam) optimizer_begin_step(st);
  std::size_t slot = 0;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    optimizer_step(net.weights[l].a, grads.d_weights[l].a, st, slot++);
    optimizer_step(net.biases[l], grads.d_biases[l], st, slot++);
  }
}

// Flat text checkpoint, 17 significant digits, bit-exact round trip.
inline void save_mlp(const Mlp& net, std::ostream& out) {
  out << "sgfd-mlp 1\n";
  out << "layers";
  for (std::size_t s : net.layer_sizes) out << ' ' << s;
  out << '\n';
  out << "activations " << activation_tag(net.hidden_activation) << ' '
      << activation_tag(net.output_activation) << '\n';
  out << std::setprecision(17);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    for (double x : net.weights[l].a) out << x << '\n';
    for (double x : net.biases[l]) out << x << '\n';
  }
}

inline Mlp load_mlp(std::istream& in) {
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "sgfd-mlp" || version != 1)
    throw std::invalid_argument("load_mlp: unrecognized checkpoint header");
  std::string key;
  in >> key;
  if (key != "layers") throw std::invalid_argument("load_mlp: expected layer sizes");
  std::string rest;
  std::getline(in, rest);
  std::istringstream size_line(rest);
  std::vector<std::size_t> sizes;
  std::size_t s;
  while (size_line >> s) sizes.push_back(s);
  in >> key;
  if (key != "activations") throw std::invalid_argument("load_mlp: expected activations");
  std::string hidden_tag, output_tag;
  in >> hidden_tag >> output_tag;

  Mlp net;
  net.layer_sizes = sizes;
  net.hidden_activation = activation_from_tag(hidden_tag);
  net.output_activation = activation_from_tag(output_tag);
  if (sizes.size() < 2) throw std::invalid_argument("load_mlp: bad layer list");
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Mat w(sizes[l + 1], sizes[l]);
    for (double& x : w.a)
      if (!(in >> x)) throw std::invalid_argument("load_mlp: truncated parameters");
    Vec b(sizes[l + 1]);
    for (double& x : b)
      if (!(in >> x)) throw std::invalid_argument("load_mlp: truncated parameters");
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
  }
  return net;
}

inline void save_mlp_file(const Mlp& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_mlp_file: cannot open " + path);
  save_mlp(net, out);
}

inline Mlp load_mlp_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_mlp_file: cannot open " + path);
  return load_mlp(in);
}

inline bool mlp_params_equal(const Mlp& a, const Mlp& b) {
  if (a.layer_sizes != b.layer_sizes) return false;
  for (std::size_t l = 0; l < a.num_layers(); ++l) {
    if (a.weights[l].a != b.weights[l].a) return false;
    if (a.biases[l] != b.biases[l]) return false;
  }
  return true;
}

}  // namespace sgfd
