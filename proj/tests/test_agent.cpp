#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "sgfd/agent.hpp"
#include "sgfd/envs.hpp"

using namespace sgfd;

namespace {

Transition make_transition(double r = 0.5, double state_fill = 0.1, std::size_t d = 3,
                           std::size_t num_envs = 2, std::size_t env = 0) {
  Transition t;
  t.s = Vec(d, state_fill);
  t.a = Vec{0.25};
  t.r = r;
  t.s_next = Vec(d, state_fill + 0.1);
  t.done = true;
  t.env_label = Vec(num_envs, 0.0);
  t.env_label[env] = 1.0;
  return t;
}

ReplayBuffer bandit_buffer(const EnvSuite& suite, std::size_t n, std::uint64_t seed) {
  ReplayBuffer buf = make_buffer(n, splitmix64(seed ^ 0x5eedULL));
  Rng action_rng(seed);
  std::vector<Env> envs;
  for (const EnvSpec& spec : suite.train) envs.push_back(make_env(spec));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % envs.size();
    Env& env = envs[k];
    const Vec s = env_reset(env, splitmix64(seed + 31 * i));
    Transition t;
    t.s = s;
    t.a = Vec{action_rng.uniform(-1.0, 1.0)};
    const EnvStep step = env_step(env, t.a);
    t.r = step.reward;
    t.s_next = step.state;
    t.done = step.done;
    t.env_label = Vec(suite.train.size(), 0.0);
    t.env_label[k] = 1.0;
    buffer_push(buf, t);
  }
  return buf;
}

void fill_params(Mlp& net, double value) {
  for (Mat& w : net.weights) std::fill(w.a.begin(), w.a.end(), value);
  for (Vec& b : net.biases) std::fill(b.begin(), b.end(), value);
}

SacAgent small_agent(std::size_t state_dim, std::uint64_t seed, double alpha = 0.1) {
  SacConfig cfg;
  cfg.state_dim = state_dim;
  cfg.hidden = 6;
  cfg.layers = 2;
  cfg.alpha = alpha;
  Rng init(seed);
  return make_sac_agent(cfg, init, splitmix64(seed));
}

SampleBatch random_batch(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  SampleBatch b;
  b.states = Mat(n, d);
  b.actions = Mat(n, 1);
  b.rewards = Vec(n, 0.0);
  b.next_states = Mat(n, d);
  b.dones = Vec(n, 0.0);
  b.env_labels = Mat(n, 2);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < d; ++j) {
      b.states.at(k, j) = rng.uniform(-1.0, 1.0);
      b.next_states.at(k, j) = rng.uniform(-1.0, 1.0);
    }
    b.actions.at(k, 0) = rng.uniform(-0.9, 0.9);
    b.rewards[k] = rng.uniform(-1.0, 1.0);
    b.dones[k] = (k % 3 == 0) ? 1.0 : 0.0;
    b.env_labels.at(k, k % 2) = 1.0;
  }
  return b;
}

// Max relative error between analytic MLP grads and central differences of f().
template <typename F>
double grads_fd_max_rel_err(Mlp& net, const MlpGrads& analytic, F f, double h = 1e-6) {
  double max_rel = 0.0;
  auto check = [&](double a, double numeric) {
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-7});
    max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
  };
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    for (std::size_t k = 0; k < net.weights[l].a.size(); ++k) {
      double& p = net.weights[l].a[k];
      const double orig = p;
      p = orig + h;
      const double up = f();
      p = orig - h;
      const double down = f();
      p = orig;
      check(analytic.d_weights[l].a[k], (up - down) / (2 * h));
    }
    for (std::size_t k = 0; k < net.biases[l].size(); ++k) {
      double& p = net.biases[l][k];
      const double orig = p;
      p = orig + h;
      const double up = f();
      p = orig - h;
      const double down = f();
      p = orig;
      check(analytic.d_biases[l][k], (up - down) / (2 * h));
    }
  }
  return max_rel;
}

EnvConfig quiet_bandit_config(double rho) {
  EnvConfig cfg;
  cfg.rho = rho;
  cfg.noise_std = 0.05;
  cfg.seed = 99;
  return cfg;
}

}  // namespace

TEST_CASE("transition validation rejects malformed fields") {
  REQUIRE_NOTHROW(validate_transition(make_transition()));

  Transition bad = make_transition();
  bad.s[1] = std::nan("");
  REQUIRE_THROWS_AS(validate_transition(bad), std::invalid_argument);

  bad = make_transition();
  bad.a[0] = 1.5;
  REQUIRE_THROWS_AS(validate_transition(bad), std::invalid_argument);

  bad = make_transition();
  bad.r = std::numeric_limits<double>::infinity();
  REQUIRE_THROWS_AS(validate_transition(bad), std::invalid_argument);

  bad = make_transition();
  bad.env_label = Vec{1.0, 1.0};
  REQUIRE_THROWS_AS(validate_transition(bad), std::invalid_argument);

  bad = make_transition();
  bad.env_label = Vec{0.5, 0.5};
  REQUIRE_THROWS_AS(validate_transition(bad), std::invalid_argument);

  bad = make_transition();
  bad.s_next = Vec{0.0, 0.0};
  REQUIRE_THROWS_AS(validate_transition(bad), std::invalid_argument);
}

TEST_CASE("replay buffer keeps the most recent transitions once full") {
  ReplayBuffer buf = make_buffer(2, 7);
  buffer_push(buf, make_transition(1.0));
  buffer_push(buf, make_transition(2.0));
  buffer_push(buf, make_transition(3.0));
  REQUIRE(buffer_size(buf) == 2);
  std::vector<double> rewards{buf.storage[0].r, buf.storage[1].r};
  std::sort(rewards.begin(), rewards.end());
  REQUIRE(rewards == std::vector<double>{2.0, 3.0});

  buffer_push(buf, make_transition(4.0));
  rewards = {buf.storage[0].r, buf.storage[1].r};
  std::sort(rewards.begin(), rewards.end());
  REQUIRE(rewards == std::vector<double>{3.0, 4.0});

  REQUIRE_THROWS_AS(make_buffer(0, 1), std::invalid_argument);
  Transition mismatched = make_transition(0.0, 0.1, 5);
  REQUIRE_THROWS_AS(buffer_push(buf, mismatched), std::invalid_argument);
}

TEST_CASE("buffer sampling is seeded, shaped, and with replacement") {
  ReplayBuffer a = make_buffer(64, 123);
  ReplayBuffer b = make_buffer(64, 123);
  for (int i = 0; i < 10; ++i) {
    const Transition t = make_transition(static_cast<double>(i));
    buffer_push(a, t);
    buffer_push(b, t);
  }
  REQUIRE_THROWS_AS(buffer_sample(a, 11), std::runtime_error);
  REQUIRE_THROWS_AS(buffer_sample(a, 0), std::invalid_argument);

  const SampleBatch ba = buffer_sample(a, 6);
  const SampleBatch bb = buffer_sample(b, 6);
  REQUIRE(ba.n() == 6);
  REQUIRE(ba.states.cols == 3);
  REQUIRE(ba.actions.cols == 1);
  REQUIRE(ba.env_labels.cols == 2);
  REQUIRE(ba.rewards == bb.rewards);
  REQUIRE(ba.states.a == bb.states.a);

  const FeatureBatch feats = ba.features();
  REQUIRE(feats.n() == 6);
  REQUIRE(feats.d() == 3);
  REQUIRE(feats.num_envs() == 2);

  // With replacement: a full-size sample is not a permutation of the storage,
  // so across many batches some batch must contain a duplicated item.
  ReplayBuffer tiny = make_buffer(4, 5);
  for (int i = 0; i < 4; ++i) buffer_push(tiny, make_transition(static_cast<double>(i)));
  bool repeated = false;
  for (int trial = 0; trial < 50 && !repeated; ++trial) {
    SampleBatch batch = buffer_sample(tiny, 4);
    Vec r = batch.rewards;
    std::sort(r.begin(), r.end());
    repeated = std::adjacent_find(r.begin(), r.end()) != r.end();
  }
  REQUIRE(repeated);
}

TEST_CASE("sac agent targets start equal to the main critics") {
  SacAgent agent = small_agent(4, 11);
  REQUIRE(mlp_params_equal(agent.q1, agent.q1_target));
  REQUIRE(mlp_params_equal(agent.q2, agent.q2_target));
  REQUIRE_FALSE(mlp_params_equal(agent.q1, agent.q2));
  REQUIRE(agent.policy.input_dim() == 4);
  REQUIRE(agent.policy.output_dim() == 2);
  REQUIRE(agent.q1.input_dim() == 5);
  REQUIRE(agent.q1.output_dim() == 1);

  SacConfig bad;
  bad.state_dim = 4;
  bad.gamma = 1.0;
  Rng rng(1);
  REQUIRE_THROWS_AS(make_sac_agent(bad, rng, 0), std::invalid_argument);
  bad = SacConfig{};
  bad.state_dim = 4;
  bad.tau = 0.0;
  REQUIRE_THROWS_AS(make_sac_agent(bad, rng, 0), std::invalid_argument);
  bad = SacConfig{};
  bad.state_dim = 0;
  REQUIRE_THROWS_AS(make_sac_agent(bad, rng, 0), std::invalid_argument);
}

TEST_CASE("act squashes into the open action interval") {
  SacAgent agent = small_agent(3, 21);
  fill_params(agent.policy, 0.0);
  const Vec det = act(agent, Vec{0.3, -0.2, 0.9}, ActMode::kDeterministic);
  REQUIRE(det.size() == 1);
  REQUIRE(det[0] == 0.0);

  // Zero net: mean 0 and unit std, so the stochastic action is tanh(noise).
  Rng expected(splitmix64(21));
  const Vec stoch = act(agent, Vec{0.3, -0.2, 0.9}, ActMode::kStochastic);
  REQUIRE(stoch[0] == std::tanh(expected.normal()));

  SacAgent c = small_agent(3, 33);
  SacAgent d = small_agent(3, 33);
  for (int i = 0; i < 20; ++i) {
    const Vec ac = act(c, Vec{0.1, 0.2, -0.4}, ActMode::kStochastic);
    const Vec ad = act(d, Vec{0.1, 0.2, -0.4}, ActMode::kStochastic);
    REQUIRE(ac[0] == ad[0]);
    REQUIRE(ac[0] > -1.0);
    REQUIRE(ac[0] < 1.0);
  }
  REQUIRE_THROWS_AS(act(c, Vec{std::nan(""), 0.0, 0.0}, ActMode::kDeterministic),
                    std::invalid_argument);
}

TEST_CASE("soft update blends main parameters into the targets") {
  SacAgent agent = small_agent(3, 5);
  fill_params(agent.q1, 1.0);
  fill_params(agent.q2, 1.0);
  fill_params(agent.q1_target, 0.0);
  fill_params(agent.q2_target, 0.0);

  agent.tau = 0.5;
  soft_update(agent);
  for (const Mat& w : agent.q1_target.weights)
    for (double v : w.a) REQUIRE(v == 0.5);
  for (const Vec& b : agent.q2_target.biases)
    for (double v : b) REQUIRE(v == 0.5);

  agent.tau = 1.0;
  soft_update(agent);
  REQUIRE(mlp_params_equal(agent.q1, agent.q1_target));
  REQUIRE(mlp_params_equal(agent.q2, agent.q2_target));

  fill_params(agent.q1_target, 0.25);
  agent.tau = 0.0;
  soft_update(agent);
  for (const Mat& w : agent.q1_target.weights)
    for (double v : w.a) REQUIRE(v == 0.25);
}

TEST_CASE("critic loss matches a hand-built bootstrap target") {
  SacAgent agent = small_agent(3, 17, /*alpha=*/0.0);
  fill_params(agent.policy, 0.0);
  fill_params(agent.q1, 0.0);
  fill_params(agent.q2, 0.0);
  fill_params(agent.q1_target, 0.0);
  fill_params(agent.q2_target, 0.0);
  agent.q1_target.biases.back()[0] = 2.0;
  agent.q2_target.biases.back()[0] = 2.0;
  agent.gamma = 0.5;

  SampleBatch batch = random_batch(4, 3, 3);
  std::fill(batch.rewards.begin(), batch.rewards.end(), 1.0);
  std::fill(batch.dones.begin(), batch.dones.end(), 0.0);
  const Mat eps(4, 1, 0.3);

  // y = 1 + 0.5 * 2 = 2 and Q = 0, so each critic loss is (0 - 2)^2 / 2 = 2.
  QLossReport report = q_loss(agent, batch, eps);
  REQUIRE(report.q1_loss == 2.0);
  REQUIRE(report.q2_loss == 2.0);

  // Terminal transitions drop the bootstrap term: y = r = 1, loss = 1/2.
  std::fill(batch.dones.begin(), batch.dones.end(), 1.0);
  report = q_loss(agent, batch, eps);
  REQUIRE(report.q1_loss == 0.5);

  // A critic already at the target value has zero loss and zero gradient.
  std::fill(batch.dones.begin(), batch.dones.end(), 0.0);
  agent.q1.biases.back()[0] = 2.0;
  report = q_loss(agent, batch, eps);
  REQUIRE(report.q1_loss == 0.0);
  for (const Mat& dw : report.q1_grads.d_weights)
    for (double v : dw.a) REQUIRE(v == 0.0);

  Mat bad_eps(3, 1, 0.0);
  REQUIRE_THROWS_AS(q_loss(agent, batch, bad_eps), std::invalid_argument);
}

TEST_CASE("critic gradients match central differences") {
  SacAgent agent = small_agent(3, 29);
  SampleBatch batch = random_batch(5, 3, 41);
  Rng noise(77);
  Mat eps(5, 1);
  for (double& x : eps.a) x = noise.normal();

  const QLossReport report = q_loss(agent, batch, eps);
  auto q1_value = [&] { return q_loss(agent, batch, eps).q1_loss; };
  auto q2_value = [&] { return q_loss(agent, batch, eps).q2_loss; };
  REQUIRE(grads_fd_max_rel_err(agent.q1, report.q1_grads, q1_value) < 1e-4);
  REQUIRE(grads_fd_max_rel_err(agent.q2, report.q2_grads, q2_value) < 1e-4);
}

TEST_CASE("unit weights reproduce the unweighted policy loss bitwise") {
  SacAgent agent = small_agent(3, 53);
  SampleBatch batch = random_batch(8, 3, 61);
  Rng noise(91);
  Mat eps(8, 1);
  for (double& x : eps.a) x = noise.normal();

  // Independent recomputation of the plain expectation loss.
  const double inv_n = 1.0 / 8.0;
  double acc = 0.0;
  for (std::size_t k = 0; k < 8; ++k) {
    Vec s(3);
    for (std::size_t j = 0; j < 3; ++j) s[j] = batch.states.at(k, j);
    const detail::PolicyEval pe = detail::policy_eval(agent, s, &eps.a[k]);
    const Vec sa = detail::state_action(s, pe.a);
    const double q1v = mlp_forward(agent.q1, sa)[0];
    const double q2v = mlp_forward(agent.q2, sa)[0];
    acc += 1.0 * (agent.alpha * pe.log_prob - std::min(q1v, q2v));
  }
  const double unweighted = acc * inv_n;

  const PolicyLossReport report = policy_loss_weighted(agent, batch, Vec(8, 1.0), eps);
  REQUIRE(report.loss == unweighted);
}

TEST_CASE("concentrating the weight budget isolates one sample's loss term") {
  SacAgent agent = small_agent(3, 59);
  SampleBatch batch = random_batch(4, 3, 67);
  Mat eps(4, 1, 0.0);
  Rng noise(13);
  for (double& x : eps.a) x = noise.normal();

  for (std::size_t target : {std::size_t{0}, std::size_t{2}}) {
    Vec w(4, 0.0);
    w[target] = 4.0;
    const PolicyLossReport report = policy_loss_weighted(agent, batch, w, eps);

    Vec s(3);
    for (std::size_t j = 0; j < 3; ++j) s[j] = batch.states.at(target, j);
    const detail::PolicyEval pe = detail::policy_eval(agent, s, &eps.a[target]);
    const Vec sa = detail::state_action(s, pe.a);
    const double qmin =
        std::min(mlp_forward(agent.q1, sa)[0], mlp_forward(agent.q2, sa)[0]);
    REQUIRE(report.loss == agent.alpha * pe.log_prob - qmin);
  }
}

TEST_CASE("adding a constant to both critics shifts the policy loss by its negative") {
  SacAgent agent = small_agent(3, 71);
  SampleBatch batch = random_batch(6, 3, 73);
  Mat eps(6, 1, 0.0);
  Rng noise(17);
  for (double& x : eps.a) x = noise.normal();
  Vec w = project_weights(Vec{0.5, 1.5, 2.0, 0.5, 0.8, 0.7});

  const double before = policy_loss_weighted(agent, batch, w, eps).loss;
  const double c = 1.0;
  agent.q1.biases.back()[0] += c;
  agent.q2.biases.back()[0] += c;
  const double after = policy_loss_weighted(agent, batch, w, eps).loss;
  double mean_w = 0.0;
  for (double v : w) mean_w += v / 6.0;
  REQUIRE_THAT(after, Catch::Matchers::WithinAbs(before - c * mean_w, 1e-12));

  REQUIRE_THROWS_AS(policy_loss_weighted(agent, batch, Vec(5, 1.0), eps),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(policy_loss_weighted(agent, batch, Vec(6, -1.0), eps),
                    std::invalid_argument);
}

TEST_CASE("policy gradients match central differences") {
  SacAgent agent = small_agent(3, 83);
  SampleBatch batch = random_batch(5, 3, 89);
  Rng noise(19);
  Mat eps(5, 1);
  for (double& x : eps.a) x = noise.normal();
  const Vec w = project_weights(Vec{1.2, 0.4, 0.9, 1.6, 0.9});

  const PolicyLossReport report = policy_loss_weighted(agent, batch, w, eps);
  auto value = [&] { return policy_loss_weighted(agent, batch, w, eps).loss; };
  REQUIRE(grads_fd_max_rel_err(agent.policy, report.grads, value) < 1e-3);
}

TEST_CASE("method tags round trip") {
  REQUIRE(method_from_tag("sgfd") == Method::kSgfd);
  REQUIRE(method_from_tag("uniform_decorr") == Method::kUniformDecorr);
  REQUIRE(method_from_tag("no_decorr") == Method::kNoDecorr);
  REQUIRE(std::string(method_tag(Method::kSgfd)) == "sgfd");
  REQUIRE(std::string(method_tag(Method::kUniformDecorr)) == "uniform_decorr");
  REQUIRE(std::string(method_tag(Method::kNoDecorr)) == "no_decorr");
  REQUIRE_THROWS_AS(method_from_tag("banana"), std::invalid_argument);
}

TEST_CASE("train_step updates the policy only on its schedule") {
  const EnvSuite suite = make_spurious_bandit(2, 5, quiet_bandit_config(0.8));
  ReplayBuffer buffer = bandit_buffer(suite, 256, 7);
  Rng init(3);
  SacConfig sac;
  sac.state_dim = 5;
  sac.hidden = 16;
  SacAgent agent = make_sac_agent(sac, init, 55);
  Rng clf_rng(4);
  EnvClassifier clf = make_classifier(5, 2, ClassifierConfig{32, 2, 1e-3}, clf_rng);
  Rng map_rng(8);
  std::vector<RffFeatureMap> maps = sample_feature_maps(5, 5, map_rng);

  TrainStepConfig cfg;
  cfg.batch_size = 32;
  cfg.method = Method::kNoDecorr;

  const Mlp policy_before = agent.policy;
  const Mlp q1_before = agent.q1;
  const StepReport odd = train_step(agent, buffer, clf, maps, cfg, 1);
  REQUIRE_FALSE(odd.policy_updated);
  REQUIRE(mlp_params_equal(agent.policy, policy_before));
  REQUIRE_FALSE(mlp_params_equal(agent.q1, q1_before));
  REQUIRE_FALSE(mlp_params_equal(agent.q1, agent.q1_target));

  const StepReport even = train_step(agent, buffer, clf, maps, cfg, 2);
  REQUIRE(even.policy_updated);
  REQUIRE_FALSE(mlp_params_equal(agent.policy, policy_before));
  REQUIRE(std::isfinite(even.policy_loss));
}

TEST_CASE("train_step arms: objectives recorded and weights shaped per method") {
  const EnvSuite suite = make_spurious_bandit(2, 5, quiet_bandit_config(0.8));
  ReplayBuffer buffer = bandit_buffer(suite, 512, 23);
  Rng init(9);
  SacConfig sac;
  sac.state_dim = 5;
  sac.hidden = 16;
  SacAgent agent = make_sac_agent(sac, init, 77);
  Rng clf_rng(10);
  EnvClassifier clf = make_classifier(5, 2, ClassifierConfig{32, 2, 1e-3}, clf_rng);
  Rng map_rng(12);
  std::vector<RffFeatureMap> maps = sample_feature_maps(5, 5, map_rng);

  TrainStepConfig cfg;
  cfg.batch_size = 64;
  cfg.decorr.inner_iters = 20;
  cfg.decorr.lr = 20.0;

  SECTION("no_decorr keeps unit weights and skips optimization") {
    cfg.method = Method::kNoDecorr;
    const StepReport r = train_step(agent, buffer, clf, maps, cfg, 2);
    REQUIRE(r.w.size() == 64);
    for (double v : r.w) REQUIRE(v == 1.0);
    REQUIRE(r.objective_initial == r.objective_final);
    REQUIRE(r.objective_initial > 0.0);
    REQUIRE_FALSE(r.classifier_active);
    REQUIRE(r.classifier_accuracy == -1.0);
  }

  SECTION("uniform_decorr optimizes weights under uniform feature probabilities") {
    cfg.method = Method::kUniformDecorr;
    const StepReport r = train_step(agent, buffer, clf, maps, cfg, 2);
    REQUIRE(r.p == Vec(5, 0.2));
    REQUIRE_FALSE(r.classifier_active);
    REQUIRE(weights_feasible(r.w));
    REQUIRE(r.objective_final <= r.objective_initial);
  }

  SECTION("sgfd before the gate passes uses uniform probabilities") {
    cfg.method = Method::kSgfd;
    cfg.gate.warmup_steps = 1000;
    const StepReport r = train_step(agent, buffer, clf, maps, cfg, 2);
    REQUIRE(r.classifier_active);
    REQUIRE_FALSE(clf.gate_passed);
    REQUIRE(r.p == Vec(5, 0.2));
    REQUIRE(r.classifier_accuracy >= 0.0);
    REQUIRE(weights_feasible(r.w));
  }

  SECTION("weight optimization reduces the dependence objective") {
    cfg.method = Method::kUniformDecorr;
    cfg.decorr.inner_iters = 40;
    cfg.decorr.lr = 30.0;
    int reduced = 0;
    for (long step = 1; step <= 10; ++step) {
      const StepReport r = train_step(agent, buffer, clf, maps, cfg, step);
      if (r.objective_final < r.objective_initial) ++reduced;
    }
    REQUIRE(reduced >= 8);
  }
}

TEST_CASE("train_step with a single environment stays uniform") {
  EnvConfig env_cfg = quiet_bandit_config(0.8);
  const EnvSuite suite = make_spurious_bandit(2, 5, env_cfg);
  ReplayBuffer buffer = make_buffer(128, 3);
  Env env = make_env(suite.train[0]);
  Rng action_rng(2);
  for (int i = 0; i < 128; ++i) {
    Transition t;
    t.s = env_reset(env, splitmix64(900 + i));
    t.a = Vec{action_rng.uniform(-1.0, 1.0)};
    const EnvStep step = env_step(env, t.a);
    t.r = step.reward;
    t.s_next = step.state;
    t.done = step.done;
    t.env_label = Vec{1.0};
    buffer_push(buffer, t);
  }

  Rng init(14);
  SacConfig sac;
  sac.state_dim = 5;
  sac.hidden = 16;
  SacAgent agent = make_sac_agent(sac, init, 31);
  Rng clf_rng(15);
  EnvClassifier clf = make_classifier(5, 2, ClassifierConfig{16, 2, 1e-3}, clf_rng);
  Rng map_rng(16);
  std::vector<RffFeatureMap> maps = sample_feature_maps(5, 5, map_rng);

  TrainStepConfig cfg;
  cfg.batch_size = 32;
  cfg.method = Method::kSgfd;
  const StepReport r = train_step(agent, buffer, clf, maps, cfg, 2);
  REQUIRE_FALSE(r.classifier_active);
  REQUIRE(r.p == Vec(5, 0.2));
}
