#include <cmath>
#include <limits>
#include <numeric>

#include <gtest/gtest.h>

#include "rsm/sac/agent.hpp"
#include "test_support.hpp"

using namespace rsm;
using namespace rsm::sac;

namespace {

SacConfig small_config() {
  SacConfig c;
  c.hidden = {4};
  c.batch_size = 8;
  c.buffer_capacity = 1000;
  c.delay = 1;
  return c;
}

Minibatch random_batch(int obs, int act, int n, Rng& rng, bool terminal = false) {
  std::vector<Transition> items;
  for (int i = 0; i < n; ++i) {
    Transition t;
    t.s = standard_normal(obs, rng);
    t.a = (standard_normal(act, rng).array().tanh() * 0.9).matrix();
    t.r = 2.0 * uniform01(rng) - 1.0;
    t.s_next = standard_normal(obs, rng);
    t.done = terminal || uniform01(rng) < 0.2;
    items.push_back(t);
  }
  return Minibatch::from(items);
}

// Critic whose output is the constant `c` everywhere.
ParamVector constant_critic(const nn::MlpSpec& spec, double c) {
  ParamVector p = ParamVector::Zero(static_cast<Eigen::Index>(spec.param_count()));
  p[p.size() - 1] = c;
  return p;
}

}  // namespace

TEST(QTarget, TerminalTransitionsReturnReward) {
  Rng rng(1);
  auto agent = make_agent(2, 1, small_config(), rng);
  const auto batch = random_batch(2, 1, 16, rng, true);
  const auto y = q_target(agent, batch, rng);
  EXPECT_NEAR((y - batch.r).cwiseAbs().maxCoeff(), 0.0, 0.0);
}

TEST(QTarget, ConstantTargetsGiveClosedForm) {
  Rng rng(2);
  auto agent = make_agent(2, 1, small_config(), rng);
  agent.target1 = constant_critic(agent.critic_spec, 3.0);
  agent.target2 = constant_critic(agent.critic_spec, 5.0);
  agent.log_alpha = std::log(0.5);
  auto batch = random_batch(2, 1, 12, rng);
  const Eigen::MatrixXd noise = standard_normal(1, 12, rng);
  const auto y = q_target(agent, batch, noise);
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    const auto smp = nn::sample_action(agent.policy_spec, agent.theta, batch.s_next.col(i), noise.col(i));
    const double expected = batch.r[i] + (batch.done[i] > 0 ? 0.0 : agent.config.gamma * (3.0 - 0.5 * smp.logp));
    EXPECT_NEAR(y[i], expected, 1e-12);
  }
}

TEST(QTarget, MatchesPerSampleOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto agent = make_agent(3, 2, small_config(), rng);
    agent.target1 = standard_normal(agent.target1.size(), rng);
    agent.target2 = standard_normal(agent.target2.size(), rng);
    const auto batch = random_batch(3, 2, 10, rng);
    const Eigen::MatrixXd noise = standard_normal(2, 10, rng);
    const auto y = q_target(agent, batch, noise);
    for (Eigen::Index i = 0; i < batch.size(); ++i) {
      const auto smp = nn::sample_action(agent.policy_spec, agent.theta, batch.s_next.col(i), noise.col(i));
      Eigen::VectorXd x(5);
      x << batch.s_next.col(i), smp.action;
      const double q = std::min(nn::forward(agent.critic_spec, agent.target1, x)[0],
                                nn::forward(agent.critic_spec, agent.target2, x)[0]);
      const double expected =
          batch.r[i] + (1.0 - batch.done[i]) * agent.config.gamma * (q - agent.alpha() * smp.logp);
      EXPECT_NEAR(y[i], expected, 1e-10);
    }
  }
}

TEST(CriticLoss, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  auto agent = make_agent(2, 1, small_config(), rng);
  ASSERT_LE(agent.critic_spec.param_count(), 50u);
  for (int trial = 0; trial < 100; ++trial) {
    const ParamVector w = standard_normal(static_cast<Eigen::Index>(agent.critic_spec.param_count()), rng);
    const auto batch = random_batch(2, 1, 8, rng);
    const Eigen::VectorXd targets = standard_normal(8, rng);
    const auto lg = critic_loss_and_grad(agent.critic_spec, w, batch, targets);
    auto f = [&](const Eigen::VectorXd& p) { return critic_loss_and_grad(agent.critic_spec, p, batch, targets).loss; };
    EXPECT_TRUE(test::gradients_match(lg.grad, test::numeric_grad(f, w))) << "trial " << trial;
  }
}

TEST(CriticLoss, ZeroWhenPredictionsEqualTargets) {
  Rng rng(5);
  auto agent = make_agent(2, 1, small_config(), rng);
  const auto batch = random_batch(2, 1, 8, rng);
  const auto w = constant_critic(agent.critic_spec, 1.5);
  const auto lg = critic_loss_and_grad(agent.critic_spec, w, batch, Eigen::VectorXd::Constant(8, 1.5));
  EXPECT_DOUBLE_EQ(lg.loss, 0.0);
  EXPECT_TRUE(lg.grad.isZero(0.0));
}

TEST(PolicyLoss, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  auto agent = make_agent(2, 1, small_config(), rng);
  ASSERT_LE(agent.policy_spec.param_count(), 50u);
  for (int trial = 0; trial < 100; ++trial) {
    const ParamVector theta = 0.7 * standard_normal(static_cast<Eigen::Index>(agent.policy_spec.param_count()), rng);
    const ParamVector c1 = standard_normal(agent.critic1.size(), rng);
    const ParamVector c2 = standard_normal(agent.critic2.size(), rng);
    const double alpha = 0.05 + uniform01(rng);
    const Eigen::MatrixXd states = standard_normal(2, 6, rng);
    const Eigen::MatrixXd noise = standard_normal(1, 6, rng);
    auto f = [&](const Eigen::VectorXd& t) {
      return policy_loss_and_grad(agent.policy_spec, t, agent.critic_spec, c1, c2, alpha, states, noise).loss;
    };
    const auto lg = policy_loss_and_grad(agent.policy_spec, theta, agent.critic_spec, c1, c2, alpha, states, noise);
    EXPECT_TRUE(test::gradients_match(lg.grad, test::numeric_grad(f, theta))) << "trial " << trial;
  }
}

TEST(PolicyLoss, MatchesPerSampleDefinition) {
  Rng rng(7);
  auto agent = make_agent(2, 1, small_config(), rng);
  const Eigen::MatrixXd states = standard_normal(2, 5, rng);
  const Eigen::MatrixXd noise = standard_normal(1, 5, rng);
  const double alpha = 0.3;
  double expected = 0.0;
  for (Eigen::Index i = 0; i < 5; ++i) {
    const auto smp = nn::sample_action(agent.policy_spec, agent.theta, states.col(i), noise.col(i));
    Eigen::VectorXd x(3);
    x << states.col(i), smp.action;
    const double q = std::min(nn::forward(agent.critic_spec, agent.critic1, x)[0],
                              nn::forward(agent.critic_spec, agent.critic2, x)[0]);
    expected += (alpha * smp.logp - q) / 5.0;
  }
  const auto lg = policy_loss_and_grad(agent.policy_spec, agent.theta, agent.critic_spec, agent.critic1,
                                       agent.critic2, alpha, states, noise);
  EXPECT_NEAR(lg.loss, expected, 1e-12);
}

TEST(Temperature, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd logp = standard_normal(16, rng);
    const double target = -1.0 + 2.0 * uniform01(rng);
    Eigen::VectorXd la(1);
    la[0] = -2.0 + 3.0 * uniform01(rng);
    auto f = [&](const Eigen::VectorXd& x) { return (-std::exp(x[0]) * (logp.array() + target)).mean(); };
    Eigen::VectorXd g(1);
    g[0] = temperature_grad(la[0], logp, target);
    EXPECT_TRUE(test::gradients_match(g, test::numeric_grad(f, la)));
  }
}

TEST(Temperature, SignFollowsEntropyGap) {
  // entropy above target (mean -log pi > target) lowers alpha, below raises it
  const Eigen::VectorXd logp = Eigen::VectorXd::Constant(4, -2.0);
  EXPECT_GT(temperature_grad(0.0, logp, -1.0), 0.0);
  EXPECT_LT(temperature_grad(0.0, logp, 3.0), 0.0);
  EXPECT_DOUBLE_EQ(temperature_grad(0.0, logp, 2.0), 0.0);
}

TEST(Temperature, AlphaStaysPositive) {
  Rng rng(9);
  auto cfg = small_config();
  cfg.lr_alpha = 0.5;
  auto agent = make_agent(2, 1, cfg, rng);
  const auto batch = random_batch(2, 1, 8, rng);
  for (int i = 0; i < 200; ++i) {
    EXPECT_GT(update_temperature(agent, batch, rng), 0.0);
  }
}

TEST(Polyak, ExampleValues) {
  Rng rng(10);
  auto cfg = small_config();
  cfg.tau = 0.25;
  auto agent = make_agent(2, 1, cfg, rng);
  agent.critic1.setConstant(1.0);
  agent.target1.setConstant(0.0);
  agent.critic2.setConstant(-4.0);
  agent.target2.setConstant(4.0);
  polyak_update(agent);
  EXPECT_TRUE(agent.target1.isApproxToConstant(0.25));
  EXPECT_TRUE(agent.target2.isApproxToConstant(2.0));
}

TEST(Polyak, TargetLagsOnlineWeights) {
  Rng rng(11);
  auto cfg = small_config();
  cfg.tau = 0.1;
  auto agent = make_agent(2, 1, cfg, rng);
  agent.critic1.setConstant(1.0);
  agent.target1.setZero();
  for (int k = 1; k <= 20; ++k) {
    polyak_update(agent);
    EXPECT_NEAR(agent.target1[0], 1.0 - std::pow(0.9, k), 1e-12);
  }
}

TEST(Critics, TwinsAreInitializedIndependently) {
  Rng rng(12);
  const auto agent = make_agent(6, 1, SacConfig{}, rng);
  EXPECT_NE(agent.critic1, agent.critic2);
  EXPECT_EQ(agent.critic1, agent.target1);
  EXPECT_EQ(agent.critic2, agent.target2);
}

TEST(Critics, SwappingTwinsLeavesTargetUnchanged) {
  Rng rng(13);
  auto agent = make_agent(2, 1, small_config(), rng);
  const auto batch = random_batch(2, 1, 8, rng);
  const Eigen::MatrixXd noise = standard_normal(1, 8, rng);
  const auto y = q_target(agent, batch, noise);
  std::swap(agent.target1, agent.target2);
  EXPECT_EQ(y, q_target(agent, batch, noise));
}

namespace {

Transition dummy_transition(Rng& rng) {
  Transition t;
  t.s = standard_normal(2, rng);
  t.a = Eigen::VectorXd::Constant(1, 0.1);
  t.r = 0.5;
  t.s_next = standard_normal(2, rng);
  return t;
}

}  // namespace

TEST(Learn, WarmupSkipsUpdatesUntilBatchIsAvailable) {
  Rng rng(14);
  auto agent = make_agent(2, 1, small_config(), rng);
  for (std::size_t i = 1; i < agent.config.batch_size; ++i) {
    const auto rep = learn(agent, dummy_transition(rng), false, rng);
    EXPECT_FALSE(rep.critic_updated);
  }
  EXPECT_TRUE(learn(agent, dummy_transition(rng), false, rng).critic_updated);
}

TEST(Learn, DelayOneUpdatesPolicyEveryStep) {
  Rng rng(15);
  auto agent = make_agent(2, 1, small_config(), rng);
  for (int i = 0; i < 30; ++i) learn(agent, dummy_transition(rng), false, rng);
  EXPECT_EQ(agent.critic_updates, 23);
  EXPECT_EQ(agent.policy_updates, 23);
}

TEST(Learn, DelayedPolicyCadence) {
  Rng rng(16);
  auto cfg = small_config();
  cfg.delay = 10;
  auto agent = make_agent(2, 1, cfg, rng);
  for (int i = 0; i < 7; ++i) learn(agent, dummy_transition(rng), false, rng);
  int policy_steps = 0;
  for (int n = 0; n < 100; ++n) policy_steps += learn(agent, dummy_transition(rng), false, rng).policy_updated;
  EXPECT_EQ(agent.critic_updates, 100);
  EXPECT_EQ(policy_steps, 10);
  EXPECT_EQ(agent.policy_updates, 10);
  // an episode boundary forces the delayed block
  EXPECT_TRUE(learn(agent, dummy_transition(rng), true, rng).policy_updated);
}

TEST(ReplayBuffer, FifoEviction) {
  ReplayBuffer buf(3);
  for (int i = 0; i < 5; ++i) {
    Transition t;
    t.r = i;
    buf.push(t);
  }
  ASSERT_EQ(buf.size(), 3u);
  EXPECT_EQ(buf.oldest(0).r, 2.0);
  EXPECT_EQ(buf.oldest(1).r, 3.0);
  EXPECT_EQ(buf.oldest(2).r, 4.0);
  EXPECT_THROW(ReplayBuffer(0), std::invalid_argument);
}

TEST(ReplayBuffer, SamplesAreDistinctAndUniform) {
  ReplayBuffer buf(20);
  for (int i = 0; i < 20; ++i) {
    Transition t;
    t.r = i;
    buf.push(t);
  }
  Rng rng(17);
  std::vector<int> counts(20, 0);
  const int draws = 20000;
  for (int d = 0; d < draws; ++d) {
    auto idx = buf.sample_indices(5, rng);
    std::sort(idx.begin(), idx.end());
    EXPECT_EQ(std::adjacent_find(idx.begin(), idx.end()), idx.end());
    for (auto i : idx) ++counts[i];
  }
  const double expected = draws * 5.0 / 20.0;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 43.8);  // 0.999 quantile, 19 degrees of freedom
  EXPECT_EQ(buf.sample_indices(50, rng).size(), 20u);
}

TEST(Training, CriticRegressesToConstantReward) {
  Rng rng(18);
  auto cfg = small_config();
  cfg.hidden = {16};
  cfg.lr_critic = 1e-2;
  auto agent = make_agent(2, 1, cfg, rng);
  std::vector<Transition> items;
  for (int i = 0; i < 64; ++i) {
    auto t = dummy_transition(rng);
    t.r = 0.7;
    t.done = true;
    items.push_back(t);
  }
  const auto batch = Minibatch::from(items);
  CriticLosses last{};
  for (int i = 0; i < 2000; ++i) last = update_critics(agent, batch, rng);
  EXPECT_LT(last.loss1, 1e-4);
  EXPECT_LT(last.loss2, 1e-4);
}

namespace {

// One-step bandit: reward -(a - 0.5)^2, every step terminal.
struct Bandit {
  Eigen::VectorXd obs = Eigen::VectorXd::Constant(1, 1.0);
  Eigen::VectorXd observation() const { return obs; }
  StepOutcome step(const Eigen::VectorXd& a) {
    return {obs, -std::pow(a[0] - 0.5, 2), true, false};
  }
  void reset(Rng&) {}
};

}  // namespace

TEST(Training, BanditPolicyConvergesToOptimum) {
  Rng rng(19);
  SacConfig cfg;
  cfg.hidden = {16, 16};
  cfg.batch_size = 64;
  cfg.lr_policy = 3e-3;
  cfg.lr_critic = 3e-3;
  cfg.lr_alpha = 3e-3;
  cfg.delay = 1;
  cfg.tau = 0.05;
  cfg.init_alpha = 0.05;
  cfg.target_entropy = -3.0;
  auto agent = make_agent(1, 1, cfg, rng);
  Bandit env;
  for (int i = 0; i < 3000; ++i) local_step(agent, env, rng);
  EXPECT_NEAR(act_greedy(agent, env.obs)[0], 0.5, 0.1);
}

TEST(Training, NonFiniteRewardRaisesDivergence) {
  Rng rng(20);
  auto agent = make_agent(2, 1, small_config(), rng);
  std::vector<Transition> items;
  for (int i = 0; i < 8; ++i) items.push_back(dummy_transition(rng));
  items[3].r = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(update_critics(agent, Minibatch::from(items), rng), DivergenceError);
}

TEST(Config, RejectsInvalidSettings) {
  Rng rng(21);
  auto cfg = small_config();
  cfg.delay = 0;
  EXPECT_THROW(make_agent(2, 1, cfg, rng), std::invalid_argument);
  cfg = small_config();
  cfg.init_alpha = 0.0;
  EXPECT_THROW(make_agent(2, 1, cfg, rng), std::invalid_argument);
}
