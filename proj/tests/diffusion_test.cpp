// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "dmq/checkpoint.hpp"
#include "dmq/diffusion.hpp"
#include "dmq/error.hpp"

namespace dmq {
namespace {

class ZeroNoise final : public NoisePredictor {
 public:
  std::size_t data_dim() const override { return 2; }
  Tensor2D predict_noise(const Tensor2D& x, int, std::span<const double>,
                         ActivationSink*) const override {
    return Tensor2D(x.rows(), x.cols());
  }
};

class CountingSink final : public ActivationSink {
 public:
  void offer(std::size_t, const std::string&, int, std::span<const double>) override { ++calls; }
  std::size_t calls = 0;
};

ModelShape tiny_shape(std::vector<std::size_t> hidden) {
  ModelShape s;
  s.data_dim = 2;
  s.time_embed_dim = 4;
  s.cond_embed_dim = 3;
  s.hidden = std::move(hidden);
  return s;
}

double loss_of(const DenoiserModel& m, const Tensor2D& input, const Tensor2D& target) {
  const Tensor2D y = m.forward(input, 1, nullptr);
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += std::pow(y.values()[i] - target.values()[i], 2);
  return acc / static_cast<double>(y.size());
}

double rel_err(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-7});
  return std::abs(a - b) / denom;
}

TEST(Gradients, MatchCentralDifferencesOnTwoLayerModel) {
  RngStream rng(31, 0);
  DenoiserModel m = DenoiserModel::create(tiny_shape({5}), rng, true);
  // Non-zero biases so their gradients are exercised away from the origin.
  for (AffineLayer& l : m.mutable_layers())
    for (double& b : l.bias) b = 0.3 * rng.normal();
  ASSERT_EQ(m.num_layers(), 2u);
  const Tensor2D input = gaussian_sample(rng, 6, m.input_dim());
  const Tensor2D target = gaussian_sample(rng, 6, 2);
  const LossAndGradients lg = loss_and_gradients(m, input, target);
  EXPECT_NEAR(lg.loss, loss_of(m, input, target), 1e-14);

  const double h = 1e-5;
  for (std::size_t li = 0; li < m.num_layers(); ++li) {
    for (std::size_t k = 0; k < m.layers()[li].weight.size(); ++k) {
      DenoiserModel p = m, q = m;
      p.mutable_layers()[li].weight.values()[k] += h;
      q.mutable_layers()[li].weight.values()[k] -= h;
      const double fd = (loss_of(p, input, target) - loss_of(q, input, target)) / (2 * h);
      EXPECT_LT(rel_err(lg.grads.weight[li].values()[k], fd), 1e-4) << "layer " << li << " w" << k;
    }
    for (std::size_t k = 0; k < m.layers()[li].bias.size(); ++k) {
      DenoiserModel p = m, q = m;
      p.mutable_layers()[li].bias[k] += h;
      q.mutable_layers()[li].bias[k] -= h;
      const double fd = (loss_of(p, input, target) - loss_of(q, input, target)) / (2 * h);
      EXPECT_LT(rel_err(lg.grads.bias[li][k], fd), 1e-4) << "layer " << li << " b" << k;
    }
  }
  for (std::size_t k = 0; k < input.size(); ++k) {
    Tensor2D p = input, q = input;
    p.values()[k] += h;
    q.values()[k] -= h;
    const double fd = (loss_of(m, p, target) - loss_of(m, q, target)) / (2 * h);
    EXPECT_LT(rel_err(lg.grads.input.values()[k], fd), 1e-4) << "input " << k;
  }
}

TEST(Schedule, LinearBetaIsDecreasing) {
  const NoiseSchedule s = NoiseSchedule::linear_beta(50);
  EXPECT_EQ(s.T(), 50);
  EXPECT_EQ(s.alpha_bar_at(0), 1.0);
  EXPECT_NEAR(s.beta_at(1), 1e-3, 1e-15);
  EXPECT_NEAR(s.beta_at(50), 0.2, 1e-12);
  for (int t = 1; t <= 50; ++t) EXPECT_LT(s.alpha_bar_at(t), s.alpha_bar_at(t - 1));
  EXPECT_THROW(s.alpha_bar_at(51), ArgumentError);
}

TEST(Schedule, RejectsNonMonotone) {
  EXPECT_THROW(NoiseSchedule(ScheduleKind::kLinearBeta, {0.9, 0.95}), ArgumentError);
  EXPECT_THROW(NoiseSchedule(ScheduleKind::kLinearBeta, {1.0, 0.5}), ArgumentError);
  EXPECT_THROW(NoiseSchedule(ScheduleKind::kLinearBeta, {}), ArgumentError);
  EXPECT_NO_THROW(NoiseSchedule::cosine(20));
}

TEST(ForwardDiffuse, VarianceMatchesSchedule) {
  const NoiseSchedule s = NoiseSchedule::linear_beta(50);
  for (int t : {1, 10, 50}) {
    RngStream rng(32, static_cast<std::uint64_t>(t));
    const LatentState z = forward_diffuse(Tensor2D(100000, 1), t, s, rng);
    EXPECT_EQ(z.t, t);
    double acc = 0.0;
    for (double v : z.value.values()) acc += v * v;
    const double expected = 1.0 - s.alpha_bar_at(t);
    EXPECT_NEAR(acc / 100000.0, expected, 0.02 * expected) << "t=" << t;
  }
}

TEST(ForwardDiffuse, ZeroNoiseLimitAndRange) {
  RngStream rng(33, 0);
  const Tensor2D x0(3, 2, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(diffuse_to(x0, 1.0, rng), x0);
  const NoiseSchedule s = NoiseSchedule::linear_beta(5);
  EXPECT_THROW(forward_diffuse(x0, 0, s, rng), ArgumentError);
  EXPECT_THROW(forward_diffuse(x0, 6, s, rng), ArgumentError);
  RngStream a(34, 1), b(34, 1);
  EXPECT_EQ(forward_diffuse(x0, 3, s, a).value, forward_diffuse(x0, 3, s, b).value);
}

TEST(DenoiseStep, FinalStepWithZeroNoiseIsClosedForm) {
  const NoiseSchedule s = NoiseSchedule::linear_beta(10);
  RngStream rng(35, 0);
  const LatentState z{1, Tensor2D(1, 2, {0.4, -1.2})};
  const LatentState out = denoise_step(ZeroNoise(), z, {{0.0}}, s, rng);
  EXPECT_EQ(out.t, 0);
  // mean = (x - beta / sqrt(1 - a_bar) * 0) / sqrt(alpha) with alpha = a_bar_1.
  const double alpha = s.alpha_bar_at(1);
  EXPECT_NEAR(out.value(0, 0), 0.4 / std::sqrt(alpha), 1e-15);
  EXPECT_NEAR(out.value(0, 1), -1.2 / std::sqrt(alpha), 1e-15);
}

TEST(DenoiseStep, IntermediateStepAddsPosteriorNoise) {
  const NoiseSchedule s = NoiseSchedule::linear_beta(10);
  RngStream rng(36, 0);
  const int t = 5;
  const LatentState out = denoise_step(ZeroNoise(), {t, Tensor2D(50000, 2)}, {{0.0}}, s, rng);
  const double beta = s.beta_at(t);
  const double tilde = (1 - s.alpha_bar_at(t - 1)) / (1 - s.alpha_bar_at(t)) * beta;
  double acc = 0.0;
  for (double v : out.value.values()) acc += v * v;
  EXPECT_NEAR(acc / 100000.0, tilde, 0.03 * tilde);
}

TEST(DenoiseStep, TerminalStateIsAnError) {
  const NoiseSchedule s = NoiseSchedule::linear_beta(10);
  RngStream rng(37, 0);
  EXPECT_THROW(denoise_step(ZeroNoise(), {0, Tensor2D(1, 2)}, {{0.0}}, s, rng), StateError);
}

TEST(Generate, EmptyAndTapCounts) {
  RngStream init(38, 0);
  const DenoiserModel m = DenoiserModel::create(tiny_shape({6, 6, 6}), init);
  const NoiseSchedule s = NoiseSchedule::linear_beta(7);
  const ConditionEmbedding cond{{0.6, 0.0, 0.8}};
  CountingSink sink;
  RngStream rng(38, 1);
  const Tensor2D none = generate(m, cond, s, 0, rng, &sink);
  EXPECT_EQ(none.rows(), 0u);
  EXPECT_EQ(sink.calls, 0u);
  const Tensor2D out = generate(m, cond, s, 5, rng, &sink);
  EXPECT_EQ(out.rows(), 5u);
  EXPECT_EQ(sink.calls, 5u * 7u * 4u);
  RngStream a(39, 0), b(39, 0);
  EXPECT_EQ(generate(m, cond, s, 4, a), generate(m, cond, s, 4, b));
}

TEST(ConditionEmbedding, UnitNormAndDeterministic) {
  const AspectSet aspects = AspectSet::defaults();
  const auto a = embed_condition("a dog barking in the rain", aspects, 16);
  const auto b = embed_condition("a dog barking in the rain", aspects, 16);
  EXPECT_EQ(a.vector, b.vector);
  double n = 0.0;
  for (double v : a.vector) n += v * v;
  EXPECT_NEAR(n, 1.0, 1e-12);
}

TEST(Training, ZeroEpochsLeavesModelUnchanged) {
  RngStream init(40, 0);
  const DenoiserModel m = DenoiserModel::create(tiny_shape({8, 8, 8}), init);
  RngStream rng(40, 1);
  const Tensor2D data = gaussian_sample(rng, 64, 2);
  const std::vector<ConditionEmbedding> conds(64, ConditionEmbedding{{1.0, 0.0, 0.0}});
  const TrainResult r = train(m, data, conds, NoiseSchedule::linear_beta(10), {0.05, 0, 16}, rng);
  EXPECT_EQ(r.model, m);
  EXPECT_TRUE(r.loss_trace.empty());
}

TEST(Training, DivergenceNamesTheEpoch) {
  RngStream init(41, 0);
  const DenoiserModel m = DenoiserModel::create(tiny_shape({8, 8, 8}), init);
  RngStream rng(41, 1);
  Tensor2D data = gaussian_sample(rng, 32, 2);
  for (double& v : data.values()) v *= 1e6;
  const std::vector<ConditionEmbedding> conds(32, ConditionEmbedding{{1.0, 0.0, 0.0}});
  try {
    train(m, data, conds, NoiseSchedule::linear_beta(10), {1e6, 50, 16}, rng);
    FAIL() << "expected divergence";
  } catch (const TrainingDivergenceError& e) {
    EXPECT_GE(e.epoch(), 1);
  }
}

// Trains on one condition whose data is a two-mode mixture and checks that
// generated points land near a mode.
TEST(Training, LearnsTwoModeMixture) {
  const ConditionEmbedding cond{{0.6, 0.0, 0.8}};
  const MixtureSpec spec = mixture_for(cond, 2);
  RngStream data_rng(42, 0);
  const Tensor2D data = sample_mixture(spec, 4096, data_rng);
  const std::vector<ConditionEmbedding> conds(data.rows(), cond);
  RngStream init(42, 1);
  ModelShape shape = tiny_shape({64, 64, 64});
  shape.time_embed_dim = 16;
  const DenoiserModel m = DenoiserModel::create(shape, init);
  const NoiseSchedule sched = NoiseSchedule::linear_beta(50);
  RngStream train_rng(42, 2);
  const TrainResult r = train(m, data, conds, sched, {0.05, 150, 64}, train_rng);
  EXPECT_LT(r.loss_trace.back(), r.loss_trace.front());

  RngStream gen_rng(42, 3);
  const Tensor2D out = generate(r.model, cond, sched, 1000, gen_rng);
  std::size_t inside = 0;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    const double da = std::hypot(out(i, 0) - spec.mode_a[0], out(i, 1) - spec.mode_a[1]);
    const double db = std::hypot(out(i, 0) - spec.mode_b[0], out(i, 1) - spec.mode_b[1]);
    if (std::min(da, db) <= 3 * spec.stddev) ++inside;
  }
  EXPECT_GE(inside, 950u) << "points within 3 sigma of a mode";
}

TEST(Checkpoint, RoundTripIsExact) {
  RngStream init(43, 0);
  const DenoiserModel m = DenoiserModel::create(tiny_shape({8, 8, 8}), init);
  const NoiseSchedule s = NoiseSchedule::cosine(12);
  const Checkpoint back = checkpoint_from_json(checkpoint_to_json(m, s));
  EXPECT_EQ(back.model, m);
  EXPECT_EQ(back.schedule.alpha_bar(), s.alpha_bar());
  EXPECT_EQ(model_hash(back.model, back.schedule), model_hash(m, s));

  auto doc = checkpoint_to_json(m, s);
  doc["format_version"] = kCheckpointFormatVersion + 1;
  EXPECT_THROW(checkpoint_from_json(doc), DataError);
  EXPECT_THROW(load_checkpoint("/nonexistent/model.json"), DataError);
}

}  // namespace
}  // namespace dmq
