#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "rsm/nn/autodiff.hpp"
#include "rsm/nn/gaussian_policy.hpp"
#include "rsm/nn/mlp.hpp"
#include "rsm/nn/optim.hpp"
#include "test_support.hpp"

using namespace rsm;
using namespace rsm::nn;

namespace {

MlpSpec tiny_spec(std::vector<int> widths, OutputHead head = OutputHead::scalar_q) {
  MlpSpec s{std::move(widths), Activation::relu, head};
  s.validate();
  return s;
}

// Straight-line evaluation with explicit loops over the documented layout.
Eigen::VectorXd reference_forward(const MlpSpec& spec, const ParamVector& p, Eigen::VectorXd x) {
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < spec.layer_widths.size(); ++l) {
    const int in = spec.layer_widths[l], out = spec.layer_widths[l + 1];
    Eigen::VectorXd y(out);
    for (int o = 0; o < out; ++o) {
      double z = p[static_cast<Eigen::Index>(off + static_cast<std::size_t>(in) * out + o)];
      for (int i = 0; i < in; ++i) z += p[static_cast<Eigen::Index>(off + static_cast<std::size_t>(o) * in + i)] * x[i];
      y[o] = (l + 2 < spec.layer_widths.size()) ? std::max(z, 0.0) : z;
    }
    off += static_cast<std::size_t>(in) * out + out;
    x = y;
  }
  return x;
}

}  // namespace

TEST(Mlp, ParamCountFollowsLayerSizes) {
  const auto spec = tiny_spec({6, 256, 256, 4}, OutputHead::gaussian_mean_logstd);
  EXPECT_EQ(spec.param_count(), 6u * 256 + 256 + 256u * 256 + 256 + 256u * 4 + 4);
}

TEST(Mlp, RejectsSpecWithoutHiddenLayer) {
  MlpSpec s{{3, 1}, Activation::relu, OutputHead::scalar_q};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  MlpSpec odd{{3, 4, 3}, Activation::relu, OutputHead::gaussian_mean_logstd};
  EXPECT_THROW(odd.validate(), std::invalid_argument);
}

TEST(Mlp, ZeroWeightsGiveZeroOutput) {
  const auto spec = tiny_spec({3, 5, 2}, OutputHead::gaussian_mean_logstd);
  const ParamVector p = ParamVector::Zero(static_cast<Eigen::Index>(spec.param_count()));
  EXPECT_TRUE(forward(spec, p, Eigen::VectorXd(Eigen::VectorXd::Constant(3, 7.0))).isZero(0.0));
}

TEST(Mlp, IdentityLikeNetwork) {
  const auto spec = tiny_spec({1, 1, 1});
  ParamVector p(4);
  p << 1.0, 0.0, 1.0, 0.0;
  Eigen::VectorXd x(1);
  x << 2.75;
  EXPECT_DOUBLE_EQ(forward(spec, p, x)[0], 2.75);
}

TEST(Mlp, MatchesStraightLineEvaluation) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    MlpSpec s{{4, 7, 5, 1}, Activation::relu, OutputHead::scalar_q};
    const ParamVector p = standard_normal(static_cast<Eigen::Index>(s.param_count()), rng);
    const Eigen::VectorXd x = standard_normal(4, rng);
    EXPECT_NEAR((forward(s, p, x) - reference_forward(s, p, x)).cwiseAbs().maxCoeff(), 0.0, 1e-12);
  }
}

TEST(Mlp, DimensionMismatchIsAnError) {
  const auto spec = tiny_spec({3, 4, 1});
  const ParamVector p = ParamVector::Zero(static_cast<Eigen::Index>(spec.param_count()));
  EXPECT_THROW(forward(spec, p, Eigen::VectorXd(Eigen::VectorXd::Zero(2))), std::invalid_argument);
  EXPECT_THROW(forward(spec, ParamVector(ParamVector::Zero(3)), Eigen::VectorXd(Eigen::VectorXd::Zero(3))), std::invalid_argument);
}

TEST(Mlp, InitIsDeterministicAndBounded) {
  const auto spec = policy_spec(6, {64, 64}, 1);
  Rng a(3), b(3);
  const auto pa = init_params(spec, a);
  EXPECT_EQ(pa, init_params(spec, b));
  const auto slots = layer_slots(spec);
  for (const auto& s : slots) {
    const double limit = std::sqrt(6.0 / (s.in + s.out));
    EXPECT_LE(pa.segment(static_cast<Eigen::Index>(s.weight_offset), s.in * s.out).cwiseAbs().maxCoeff(), limit);
    EXPECT_TRUE(pa.segment(static_cast<Eigen::Index>(s.bias_offset), s.out).isZero(0.0));
  }
}

TEST(Mlp, BackwardMatchesFiniteDifferences) {
  Rng rng(5);
  const auto spec = tiny_spec({3, 5, 4, 2}, OutputHead::gaussian_mean_logstd);
  for (int trial = 0; trial < 100; ++trial) {
    const ParamVector p = standard_normal(static_cast<Eigen::Index>(spec.param_count()), rng);
    const Batch x = standard_normal(3, 4, rng);
    const Batch w = standard_normal(2, 4, rng);
    auto loss = [&](const Eigen::VectorXd& q) { return forward(spec, q, x).cwiseProduct(w).sum(); };
    const auto g = backward(spec, p, forward_cached(spec, p, x), w).param_grad;
    EXPECT_TRUE(test::gradients_match(g, test::numeric_grad(loss, p))) << "trial " << trial;
  }
}

// ---------------------------------------------------------------------------
// Tape gradients

TEST(Autodiff, ConstantLossHasZeroGradient) {
  const auto spec = tiny_spec({2, 3, 1});
  const ParamVector p = ParamVector::LinSpaced(static_cast<Eigen::Index>(spec.param_count()), -1, 1);
  const auto g = grad(spec, p, [](Tape& t, std::span<const Var>) { return t.constant(4.2); });
  EXPECT_TRUE(g.isZero(0.0));
}

TEST(Autodiff, HalfSquaredNormGradientIsParams) {
  const auto spec = tiny_spec({2, 3, 1});
  const ParamVector p = ParamVector::LinSpaced(static_cast<Eigen::Index>(spec.param_count()), -1, 1);
  const auto g = grad(spec, p, [](Tape& t, std::span<const Var> v) {
    Var acc = t.constant(0.0);
    for (const auto& x : v) acc = acc + 0.5 * square(x);
    return acc;
  });
  EXPECT_NEAR((g - p).cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(Autodiff, TapeNetworkMatchesBatchedBackprop) {
  Rng rng(8);
  const auto spec = tiny_spec({3, 4, 1});
  for (int trial = 0; trial < 100; ++trial) {
    const ParamVector p = standard_normal(static_cast<Eigen::Index>(spec.param_count()), rng);
    const Eigen::VectorXd x = standard_normal(3, rng);
    const double target = uniform01(rng);
    const auto g = grad(spec, p, [&](Tape& t, std::span<const Var> v) {
      std::vector<Var> in;
      for (int i = 0; i < 3; ++i) in.push_back(t.constant(x[i]));
      return 0.5 * square(forward_expr(spec, v, in)[0] - target);
    });
    auto loss = [&](const Eigen::VectorXd& q) { return 0.5 * std::pow(forward(spec, q, x)[0] - target, 2); };
    EXPECT_TRUE(test::gradients_match(g, test::numeric_grad(loss, p)));
    const auto cache = forward_cached(spec, p, Batch(x));
    Batch d(1, 1);
    d(0, 0) = cache.output()(0, 0) - target;
    EXPECT_NEAR((backward(spec, p, cache, d).param_grad - g).cwiseAbs().maxCoeff(), 0.0, 1e-12);
  }
}

TEST(Autodiff, ElementaryOpsMatchFiniteDifferences) {
  MlpSpec spec{{1, 1, 1}, Activation::relu, OutputHead::scalar_q};
  ParamVector p(4);
  p << 0.3, -0.2, 0.7, 0.4;
  const auto g = grad(spec, p, [](Tape&, std::span<const Var> v) {
    return exp(v[0]) * tanh(v[1]) + log(v[2] + 2.0) / (v[3] + 1.5) - clamp(v[0], -1.0, 1.0) + min(v[1], v[2]);
  });
  auto f = [](const Eigen::VectorXd& q) {
    return std::exp(q[0]) * std::tanh(q[1]) + std::log(q[2] + 2.0) / (q[3] + 1.5) - std::clamp(q[0], -1.0, 1.0) +
           std::min(q[1], q[2]);
  };
  EXPECT_TRUE(test::gradients_match(g, test::numeric_grad(f, p)));
}

// ---------------------------------------------------------------------------
// Squashed Gaussian policy

namespace {

GaussianPolicyOutput head1(double mean, double log_std) {
  GaussianPolicyOutput h;
  h.mean = Eigen::VectorXd::Constant(1, mean);
  h.log_std = Eigen::VectorXd::Constant(1, log_std);
  return h;
}

}  // namespace

TEST(GaussianPolicy, ZeroNoiseAtZeroMean) {
  GaussianPolicyOutput h;
  h.mean = Eigen::VectorXd::Zero(2);
  h.log_std = (Eigen::VectorXd(2) << 0.3, -0.7).finished();
  const auto s = sample_action(h, Eigen::VectorXd::Zero(2));
  EXPECT_TRUE(s.action.isZero(0.0));
  const double expected = -(0.3 + kLogSqrtTwoPi) - (-0.7 + kLogSqrtTwoPi) - 2.0 * std::log1p(kTanhEps);
  EXPECT_NEAR(s.logp, expected, 1e-12);
}

TEST(GaussianPolicy, StandardNormalModeLogprob) {
  EXPECT_NEAR(logprob(head1(0.0, 0.0), Eigen::VectorXd::Zero(1)), -std::log(std::sqrt(2.0 * std::numbers::pi)) - std::log1p(kTanhEps), 1e-12);
}

TEST(GaussianPolicy, LogStdIsClamped) {
  Eigen::VectorXd raw(4);
  raw << 0.1, -0.2, -40.0, 9.0;
  const auto h = split_head(raw);
  EXPECT_DOUBLE_EQ(h.log_std[0], kLogStdMin);
  EXPECT_DOUBLE_EQ(h.log_std[1], kLogStdMax);
}

TEST(GaussianPolicy, SampleIsDeterministicGivenNoise) {
  Rng rng(2);
  const auto spec = policy_spec(3, {8}, 2);
  const auto theta = init_params(spec, rng);
  const Eigen::VectorXd s = standard_normal(3, rng), d = standard_normal(2, rng);
  const auto a = sample_action(spec, theta, s, d), b = sample_action(spec, theta, s, d);
  EXPECT_EQ(a.action, b.action);
  EXPECT_EQ(a.logp, b.logp);
}

TEST(GaussianPolicy, LogprobRoundTripsSampledActions) {
  Rng rng(4);
  const auto spec = policy_spec(3, {8, 8}, 2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto theta = init_params(spec, rng);
    const Eigen::VectorXd s = standard_normal(3, rng);
    const auto smp = sample_action(spec, theta, s, standard_normal(2, rng));
    EXPECT_NEAR(logprob(spec, theta, s, smp.action), smp.logp, 1e-9 * (1.0 + std::abs(smp.logp)));
  }
}

TEST(GaussianPolicy, LogprobMatchesIndependentFormula) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const double mu = 2.0 * uniform01(rng) - 1.0, ls = 2.0 * uniform01(rng) - 1.5;
    const double a = 1.8 * uniform01(rng) - 0.9;
    // density of a = tanh(u), u ~ N(mu, sigma^2): N(atanh a) / (1 - a^2), with the numerical floor
    const double sigma = std::exp(ls);
    const double u = 0.5 * std::log((1 + a) / (1 - a));
    const double expected = -0.5 * std::pow((u - mu) / sigma, 2) - std::log(sigma * std::sqrt(2 * std::numbers::pi)) -
                            std::log(1 - a * a + 1e-6);
    EXPECT_NEAR(logprob(head1(mu, ls), Eigen::VectorXd::Constant(1, a)), expected, 1e-10);
  }
}

TEST(GaussianPolicy, LogprobRejectsSaturatedActions) {
  EXPECT_THROW(logprob(head1(0, 0), Eigen::VectorXd::Constant(1, 1.0)), std::domain_error);
  EXPECT_THROW(logprob(head1(0, 0), Eigen::VectorXd::Constant(1, -1.5)), std::domain_error);
}

TEST(GaussianPolicy, DensityIntegratesToOne) {
  for (double mu : {0.0, 0.8}) {
    for (double ls : {0.0, -1.0}) {
      const auto h = head1(mu, ls);
      const int n = 100000;
      const double lo = -1 + 1e-6, hi = 1 - 1e-6, step = (hi - lo) / (n - 1);
      double integral = 0.0, prev = std::exp(logprob(h, Eigen::VectorXd::Constant(1, lo)));
      for (int i = 1; i < n; ++i) {
        const double cur = std::exp(logprob(h, Eigen::VectorXd::Constant(1, lo + i * step)));
        integral += 0.5 * (prev + cur) * step;
        prev = cur;
      }
      EXPECT_NEAR(integral, 1.0, 1e-3) << "mu=" << mu << " log_std=" << ls;
    }
  }
}

TEST(GaussianPolicy, EntropyWithSingleZeroNoiseDraw) {
  // K = 1, delta = 0, sigma = 1: -log p(mode) = log sqrt(2 pi)
  const auto s = sample_action(head1(0, 0), Eigen::VectorXd::Zero(1));
  EXPECT_NEAR(-s.logp, kLogSqrtTwoPi + std::log1p(kTanhEps), 1e-12);
}

namespace {

// Policy network whose output is exactly (mean, log_std) given through the output bias.
std::pair<MlpSpec, ParamVector> constant_head(double mean, double log_std) {
  MlpSpec spec{{1, 1, 2}, Activation::relu, OutputHead::gaussian_mean_logstd};
  ParamVector p = ParamVector::Zero(static_cast<Eigen::Index>(spec.param_count()));
  p[p.size() - 2] = mean;
  p[p.size() - 1] = log_std;
  return {spec, p};
}

}  // namespace

TEST(GaussianPolicy, EntropyEstimateIncreasesWithSigma) {
  Rng rng(9);
  double prev = -1e300;
  for (double ls : {-4.0, -3.0, -2.0, -1.0, 0.0}) {
    const auto [spec, p] = constant_head(0.0, ls);
    const double h = entropy_estimate(spec, p, Eigen::VectorXd::Zero(1), 10000, rng);
    EXPECT_GT(h, prev) << "log_std=" << ls;
    prev = h;
  }
}

TEST(GaussianPolicy, EntropyBelowUnsquashedGaussian) {
  Rng rng(10);
  for (double ls : {-1.0, 0.0, 1.0}) {
    const auto [spec, p] = constant_head(0.3, ls);
    const int k = 10000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < k; ++i) {
      const double v = -sample_action(spec, p, Eigen::VectorXd::Zero(1), standard_normal(1, rng)).logp;
      sum += v;
      sum_sq += v * v;
    }
    const double mean = sum / k, se = std::sqrt((sum_sq / k - mean * mean) / k);
    const double gaussian = ls + 0.5 * std::log(2 * std::numbers::pi * std::numbers::e);
    EXPECT_LE(mean, gaussian + 3 * se);
  }
}

TEST(GaussianPolicy, ScoreMatchesFiniteDifferences) {
  Rng rng(12);
  const auto spec = policy_spec(2, {4}, 1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto theta = init_params(spec, rng);
    const Eigen::VectorXd s = standard_normal(2, rng);
    const auto a = sample_action(spec, theta, s, standard_normal(1, rng)).action;
    auto f = [&](const Eigen::VectorXd& t) { return logprob(spec, t, s, a); };
    EXPECT_TRUE(test::gradients_match(logprob_grad(spec, theta, s, a), test::numeric_grad(f, theta)));
  }
}

TEST(GaussianPolicy, ScoreHasZeroMean) {
  Rng rng(13);
  const auto spec = policy_spec(2, {4}, 1);
  const auto theta = init_params(spec, rng);
  const Eigen::VectorXd s = standard_normal(2, rng);
  const int m = 10000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(theta.size()), sum_sq = sum;
  for (int i = 0; i < m; ++i) {
    const auto a = sample_action(spec, theta, s, standard_normal(1, rng)).action;
    const auto g = logprob_grad(spec, theta, s, a);
    sum += g;
    sum_sq += g.cwiseAbs2();
  }
  const Eigen::VectorXd mean = sum / m;
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double se = std::sqrt(std::max(0.0, sum_sq[i] / m - mean[i] * mean[i]) / m);
    EXPECT_LE(std::abs(mean[i]), 4 * se + 1e-12) << "coordinate " << i;
  }
}

TEST(GaussianPolicy, IdenticalSeedsGiveIdenticalParams) {
  const auto spec = policy_spec(6, {16, 16}, 1);
  Rng a(99), b(99);
  auto pa = init_params(spec, a), pb = init_params(spec, b);
  AdamState sa, sb;
  for (int i = 0; i < 10; ++i) {
    const Eigen::VectorXd g = standard_normal(pa.size(), a);
    const Eigen::VectorXd h = standard_normal(pb.size(), b);
    descend(pa, g, 1e-3, OptimizerKind::adam, sa);
    descend(pb, h, 1e-3, OptimizerKind::adam, sb);
  }
  EXPECT_EQ(pa, pb);
}

TEST(Optim, ClipGlobalNorm) {
  Eigen::VectorXd g(2);
  g << 3.0, 4.0;
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g.norm(), 1.0, 1e-15);
  EXPECT_EQ(parse_optimizer("sgd"), OptimizerKind::sgd);
  EXPECT_THROW(parse_optimizer("rmsprop"), std::invalid_argument);
}
