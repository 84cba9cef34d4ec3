// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

// A small conditional DDPM used as the model under quantization.
//
// The denoiser is an MLP over [x_t, sinusoidal time embedding, condition
// embedding] that predicts the added noise. Training uses plain SGD on the
// mean squared noise-prediction error with hand-written backpropagation.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dmq/numeric.hpp"
#include "dmq/prompts.hpp"

namespace dmq {

enum class ScheduleKind { kLinearBeta, kCosine };

std::string_view to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(std::string_view s);

// Cumulative signal retention alpha_bar for timesteps 1..T. Timestep t maps to
// alpha_bar()[t - 1]; alpha_bar at t = 0 is 1 by convention.
class NoiseSchedule {
 public:
  // Throws ArgumentError unless 1 > a[0] > a[1] > ... > a[T-1] > 0.
  NoiseSchedule(ScheduleKind kind, std::vector<double> alpha_bar);

  static NoiseSchedule linear_beta(int T, double beta_start = 1e-3, double beta_end = 0.2);
  static NoiseSchedule cosine(int T, double offset = 0.008);

  int T() const noexcept { return static_cast<int>(alpha_bar_.size()); }
  ScheduleKind kind() const noexcept { return kind_; }
  const std::vector<double>& alpha_bar() const noexcept { return alpha_bar_; }

  // alpha_bar at timestep t in [0, T].
  double alpha_bar_at(int t) const;
  // beta_t = 1 - alpha_bar_t / alpha_bar_{t-1}, t in [1, T].
  double beta_at(int t) const;

 private:
  ScheduleKind kind_;
  std::vector<double> alpha_bar_;
};

struct LatentState {
  int t = 0;
  Tensor2D value;  // batch x data_dim
};

enum class Activation { kSiLU, kNone };

struct AffineLayer {
  std::string name;
  Tensor2D weight;  // in x out
  std::vector<double> bias;
  Activation activation = Activation::kSiLU;

  std::size_t in_dim() const noexcept { return weight.rows(); }
  std::size_t out_dim() const noexcept { return weight.cols(); }
  std::size_t param_count() const noexcept { return weight.size() + bias.size(); }

  friend bool operator==(const AffineLayer&, const AffineLayer&) = default;
};

// Receives every layer input during a forward pass. `values` is one row (one
// chain) of the layer input.
class ActivationSink {
 public:
  virtual ~ActivationSink() = default;
  virtual void offer(std::size_t layer_index, const std::string& layer, int t,
                     std::span<const double> values) = 0;
};

// Rewrites a layer's input in place before the layer is applied. Used for
// simulated activation quantization.
class LayerInputHook {
 public:
  virtual ~LayerInputHook() = default;
  virtual void transform(std::size_t layer_index, Tensor2D& input) const = 0;
};

// Anything that predicts the noise component of x_t.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  virtual std::size_t data_dim() const = 0;
  // x: batch x data_dim. cond: condition embedding shared by the batch.
  virtual Tensor2D predict_noise(const Tensor2D& x, int t, std::span<const double> cond,
                                 ActivationSink* tap) const = 0;
};

struct ModelShape {
  std::size_t data_dim = 2;
  std::size_t time_embed_dim = 16;
  std::size_t cond_embed_dim = 16;
  std::vector<std::size_t> hidden = {64, 64, 64};
};

class DenoiserModel final : public NoisePredictor {
 public:
  DenoiserModel() = default;
  // Validates the invariants: >= 3 layers (unless allow_shallow), chained
  // shapes, unique names, last layer linear with data_dim outputs.
  DenoiserModel(std::size_t data_dim, std::size_t time_embed_dim, std::size_t cond_embed_dim,
                std::vector<AffineLayer> layers, bool allow_shallow = false);

  // Weights ~ N(0, 1/fan_in), last layer scaled by 0.1, zero biases.
  // Layer names are fc0, fc1, ...
  static DenoiserModel create(const ModelShape& shape, RngStream& rng,
                              bool allow_shallow = false);

  std::size_t data_dim() const override { return data_dim_; }
  std::size_t time_embed_dim() const noexcept { return time_embed_dim_; }
  std::size_t cond_embed_dim() const noexcept { return cond_embed_dim_; }
  std::size_t input_dim() const noexcept { return data_dim_ + time_embed_dim_ + cond_embed_dim_; }
  std::size_t num_layers() const noexcept { return layers_.size(); }
  const std::vector<AffineLayer>& layers() const noexcept { return layers_; }
  std::vector<AffineLayer>& mutable_layers() noexcept { return layers_; }
  std::vector<std::string> layer_names() const;
  std::size_t layer_index(std::string_view name) const;
  std::size_t param_count() const noexcept;

  Tensor2D predict_noise(const Tensor2D& x, int t, std::span<const double> cond,
                         ActivationSink* tap) const override;
  Tensor2D predict_noise(const Tensor2D& x, int t, std::span<const double> cond,
                         ActivationSink* tap, const LayerInputHook* hook) const;

  // Runs the layers on an already assembled input matrix.
  Tensor2D forward(const Tensor2D& input, int t, ActivationSink* tap,
                   const LayerInputHook* hook = nullptr) const;

  friend bool operator==(const DenoiserModel& a, const DenoiserModel& b) {
    return a.data_dim_ == b.data_dim_ && a.time_embed_dim_ == b.time_embed_dim_ &&
           a.cond_embed_dim_ == b.cond_embed_dim_ && a.layers_ == b.layers_;
  }

 private:
  std::size_t data_dim_ = 0;
  std::size_t time_embed_dim_ = 0;
  std::size_t cond_embed_dim_ = 0;
  std::vector<AffineLayer> layers_;
};

// [sin(t w_0), cos(t w_0), sin(t w_1), ...] with w_i = 10000^(-i / (dim/2)).
std::vector<double> time_embedding(int t, std::size_t dim);

// Assembles rows [x_i, time_embedding(t_i), cond_i].
Tensor2D assemble_input(const Tensor2D& x, std::span<const int> ts,
                        std::span<const std::vector<double>> conds, std::size_t time_embed_dim);

struct ConditionEmbedding {
  std::vector<double> vector;
};

// Deterministic text-encoder stand-in: each covered aspect b adds 1 to
// component b mod dim, each normalized token adds +-0.25 to a hashed
// component, and the result is scaled to unit L2 norm.
ConditionEmbedding embed_condition(std::string_view text, const AspectSet& aspects,
                                   std::size_t dim);

// sqrt(alpha_bar) x0 + sqrt(1 - alpha_bar) eps, eps ~ N(0, I).
Tensor2D diffuse_to(const Tensor2D& x0, double alpha_bar, RngStream& rng);

// Samples q(x_t | x_0). Throws ArgumentError unless 1 <= t <= T.
LatentState forward_diffuse(const Tensor2D& x0, int t, const NoiseSchedule& sched,
                            RngStream& rng);

// One ancestral step with the fixed posterior variance
// beta~_t = (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t.
// The t = 1 step adds no noise. Throws StateError when state.t == 0.
LatentState denoise_step(const NoisePredictor& model, const LatentState& state,
                         const ConditionEmbedding& cond, const NoiseSchedule& sched,
                         RngStream& rng, ActivationSink* tap = nullptr);

// Full reverse chain from N(0, I) over T steps; n rows. The tap sees each
// layer input of every chain at every timestep.
Tensor2D generate(const NoisePredictor& model, const ConditionEmbedding& cond,
                  const NoiseSchedule& sched, std::size_t n, RngStream& rng,
                  ActivationSink* tap = nullptr);

// Runs the reverse chain from x_T down to `stop_t`, returning x_{stop_t}
// before the step at stop_t is taken.
LatentState run_chain_to(const NoisePredictor& model, const ConditionEmbedding& cond,
                         const NoiseSchedule& sched, std::size_t n, int stop_t,
                         RngStream& rng);

// ---------------------------------------------------------------------------
// Training

struct Gradients {
  std::vector<Tensor2D> weight;
  std::vector<std::vector<double>> bias;
  Tensor2D input;  // d loss / d input, batch x input_dim
};

struct LossAndGradients {
  double loss;
  Gradients grads;
};

// loss = mean over all entries of (forward(input) - target)^2.
LossAndGradients loss_and_gradients(const DenoiserModel& model, const Tensor2D& input,
                                    const Tensor2D& target);

struct TrainConfig {
  double learning_rate = 0.05;
  int epochs = 100;
  std::size_t batch_size = 64;
};

struct TrainResult {
  DenoiserModel model;
  std::vector<double> loss_trace;  // mean batch loss per epoch
};

// Throws TrainingDivergenceError (naming the epoch) on a non-finite loss and
// ArgumentError if the dataset has fewer rows than one batch.
TrainResult train(const DenoiserModel& model, const Tensor2D& dataset,
                  const std::vector<ConditionEmbedding>& conds, const NoiseSchedule& sched,
                  const TrainConfig& config, RngStream& rng);

// ---------------------------------------------------------------------------
// Synthetic conditional data

// Two equal-weight isotropic components per condition. The centre and the
// axis between the modes are fixed linear functions of the embedding.
struct MixtureSpec {
  std::vector<double> mode_a;
  std::vector<double> mode_b;
  double stddev;
};

MixtureSpec mixture_for(const ConditionEmbedding& cond, std::size_t data_dim);
Tensor2D sample_mixture(const MixtureSpec& spec, std::size_t n, RngStream& rng);

}  // namespace dmq
