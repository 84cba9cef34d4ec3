// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmq/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "dmq/error.hpp"
#include "dmq/hash.hpp"

namespace dmq {

std::string_view to_string(ScheduleKind kind) {
  return kind == ScheduleKind::kLinearBeta ? "linear_beta" : "cosine";
}

ScheduleKind parse_schedule_kind(std::string_view s) {
  if (s == "linear_beta") return ScheduleKind::kLinearBeta;
  if (s == "cosine") return ScheduleKind::kCosine;
  throw ArgumentError("unknown schedule kind: " + std::string(s));
}

// ---------------------------------------------------------------------------
// NoiseSchedule

NoiseSchedule::NoiseSchedule(ScheduleKind kind, std::vector<double> alpha_bar)
    : kind_(kind), alpha_bar_(std::move(alpha_bar)) {
  if (alpha_bar_.empty()) throw ArgumentError("noise schedule needs at least one timestep");
  double prev = 1.0;
  for (std::size_t i = 0; i < alpha_bar_.size(); ++i) {
    const double a = alpha_bar_[i];
    if (!(a > 0.0 && a < prev))
      throw ArgumentError("alpha_bar must be strictly decreasing in (0, 1); violated at index " +
                          std::to_string(i));
    prev = a;
  }
}

NoiseSchedule NoiseSchedule::linear_beta(int T, double beta_start, double beta_end) {
  if (T < 1) throw ArgumentError("T must be >= 1");
  std::vector<double> ab(static_cast<std::size_t>(T));
  double acc = 1.0;
  for (int i = 0; i < T; ++i) {
    const double beta =
        T == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / static_cast<double>(T - 1);
    acc *= 1.0 - beta;
    ab[static_cast<std::size_t>(i)] = acc;
  }
  return {ScheduleKind::kLinearBeta, std::move(ab)};
}

NoiseSchedule NoiseSchedule::cosine(int T, double offset) {
  if (T < 1) throw ArgumentError("T must be >= 1");
  auto f = [&](double t) {
    const double c = std::cos((t / T + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
    return c * c;
  };
  std::vector<double> ab(static_cast<std::size_t>(T));
  double acc = 1.0;
  for (int t = 1; t <= T; ++t) {
    const double beta = std::min(1.0 - f(t) / f(t - 1), 0.999);
    acc *= 1.0 - beta;
    ab[static_cast<std::size_t>(t - 1)] = acc;
  }
  return {ScheduleKind::kCosine, std::move(ab)};
}

double NoiseSchedule::alpha_bar_at(int t) const {
  if (t < 0 || t > T()) throw ArgumentError("timestep out of range: " + std::to_string(t));
  return t == 0 ? 1.0 : alpha_bar_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::beta_at(int t) const {
  if (t < 1 || t > T()) throw ArgumentError("timestep out of range: " + std::to_string(t));
  return 1.0 - alpha_bar_at(t) / alpha_bar_at(t - 1);
}

// ---------------------------------------------------------------------------
// DenoiserModel

DenoiserModel::DenoiserModel(std::size_t data_dim, std::size_t time_embed_dim,
                             std::size_t cond_embed_dim, std::vector<AffineLayer> layers,
                             bool allow_shallow)
    : data_dim_(data_dim),
      time_embed_dim_(time_embed_dim),
      cond_embed_dim_(cond_embed_dim),
      layers_(std::move(layers)) {
  if (data_dim_ == 0) throw ArgumentError("data_dim must be >= 1");
  if (time_embed_dim_ % 2 != 0) throw ArgumentError("time_embed_dim must be even");
  if (layers_.size() < (allow_shallow ? 1u : 3u))
    throw ArgumentError("denoiser needs at least 3 layers");
  std::set<std::string> names;
  std::size_t expect_in = input_dim();
  for (const AffineLayer& l : layers_) {
    if (!names.insert(l.name).second) throw ArgumentError("duplicate layer name: " + l.name);
    if (l.in_dim() != expect_in)
      throw ArgumentError("layer '" + l.name + "' input dim " + std::to_string(l.in_dim()) +
                          " does not chain (expected " + std::to_string(expect_in) + ")");
    if (l.bias.size() != l.out_dim())
      throw ArgumentError("layer '" + l.name + "' bias length mismatch");
    expect_in = l.out_dim();
  }
  if (expect_in != data_dim_) throw ArgumentError("last layer must output data_dim values");
  if (layers_.back().activation != Activation::kNone)
    throw ArgumentError("last layer must be linear");
}

DenoiserModel DenoiserModel::create(const ModelShape& shape, RngStream& rng, bool allow_shallow) {
  std::vector<std::size_t> dims;
  dims.push_back(shape.data_dim + shape.time_embed_dim + shape.cond_embed_dim);
  for (std::size_t h : shape.hidden) dims.push_back(h);
  dims.push_back(shape.data_dim);
  std::vector<AffineLayer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const bool last = i + 2 == dims.size();
    AffineLayer l;
    l.name = "fc" + std::to_string(i);
    l.weight = Tensor2D(dims[i], dims[i + 1]);
    const double scale = (last ? 0.1 : 1.0) / std::sqrt(static_cast<double>(dims[i]));
    for (double& w : l.weight.values()) w = scale * rng.normal();
    l.bias.assign(dims[i + 1], 0.0);
    l.activation = last ? Activation::kNone : Activation::kSiLU;
    layers.push_back(std::move(l));
  }
  return DenoiserModel(shape.data_dim, shape.time_embed_dim, shape.cond_embed_dim,
                       std::move(layers), allow_shallow);
}

std::vector<std::string> DenoiserModel::layer_names() const {
  std::vector<std::string> out;
  for (const auto& l : layers_) out.push_back(l.name);
  return out;
}

std::size_t DenoiserModel::layer_index(std::string_view name) const {
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i].name == name) return i;
  throw ArgumentError("unknown layer: " + std::string(name));
}

std::size_t DenoiserModel::param_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.param_count();
  return n;
}

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void affine_inplace(const Tensor2D& in, const AffineLayer& l, Tensor2D& out) {
  out = matmul(in, l.weight);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += l.bias[c];
  }
}

void apply_activation(Tensor2D& t, Activation act) {
  if (act == Activation::kNone) return;
  for (double& v : t.values()) v = v * sigmoid(v);
}

}  // namespace

Tensor2D DenoiserModel::forward(const Tensor2D& input, int t, ActivationSink* tap,
                                const LayerInputHook* hook) const {
  if (input.cols() != input_dim())
    throw ArgumentError("forward: input has " + std::to_string(input.cols()) +
                        " columns, expected " + std::to_string(input_dim()));
  Tensor2D h = input;
  Tensor2D next;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (hook) hook->transform(i, h);
    if (tap)
      for (std::size_t r = 0; r < h.rows(); ++r) tap->offer(i, layers_[i].name, t, h.row(r));
    affine_inplace(h, layers_[i], next);
    apply_activation(next, layers_[i].activation);
    std::swap(h, next);
  }
  return h;
}

Tensor2D DenoiserModel::predict_noise(const Tensor2D& x, int t, std::span<const double> cond,
                                      ActivationSink* tap) const {
  return predict_noise(x, t, cond, tap, nullptr);
}

Tensor2D DenoiserModel::predict_noise(const Tensor2D& x, int t, std::span<const double> cond,
                                      ActivationSink* tap, const LayerInputHook* hook) const {
  if (cond.size() != cond_embed_dim_)
    throw ArgumentError("condition embedding has wrong dimension");
  std::vector<int> ts(x.rows(), t);
  std::vector<std::vector<double>> conds(x.rows(), std::vector<double>(cond.begin(), cond.end()));
  return forward(assemble_input(x, ts, conds, time_embed_dim_), t, tap, hook);
}

std::vector<double> time_embedding(int t, std::size_t dim) {
  std::vector<double> out(dim);
  const std::size_t half = dim / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double w = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
    out[2 * i] = std::sin(t * w);
    out[2 * i + 1] = std::cos(t * w);
  }
  return out;
}

Tensor2D assemble_input(const Tensor2D& x, std::span<const int> ts,
                        std::span<const std::vector<double>> conds, std::size_t time_embed_dim) {
  if (ts.size() != x.rows() || conds.size() != x.rows())
    throw ArgumentError("assemble_input: per-row timestep/condition count mismatch");
  const std::size_t cond_dim = conds.empty() ? 0 : conds[0].size();
  Tensor2D in(x.rows(), x.cols() + time_embed_dim + cond_dim);
  int cached_t = -1;
  std::vector<double> temb;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    if (ts[r] != cached_t) {
      temb = time_embedding(ts[r], time_embed_dim);
      cached_t = ts[r];
    }
    if (conds[r].size() != cond_dim) throw ArgumentError("assemble_input: ragged conditions");
    auto row = in.row(r);
    std::copy(x.row(r).begin(), x.row(r).end(), row.begin());
    std::copy(temb.begin(), temb.end(), row.begin() + static_cast<std::ptrdiff_t>(x.cols()));
    std::copy(conds[r].begin(), conds[r].end(),
              row.begin() + static_cast<std::ptrdiff_t>(x.cols() + time_embed_dim));
  }
  return in;
}

ConditionEmbedding embed_condition(std::string_view text, const AspectSet& aspects,
                                   std::size_t dim) {
  if (dim == 0) throw ArgumentError("condition embedding dim must be >= 1");
  const CoverageVector cov = compute_coverage_vector(text, aspects);
  std::vector<double> v(dim, 0.0);
  for (std::size_t b = 0; b < cov.size(); ++b)
    if (cov.test(b)) v[b % dim] += 1.0;
  for (const std::string& tok : normalize_tokens(text)) {
    const std::uint64_t h = fnv1a64(tok);
    v[h % dim] += ((h >> 32) & 1u) ? 0.25 : -0.25;
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    v[0] = 1.0;
  } else {
    for (double& x : v) x /= norm;
  }
  return {std::move(v)};
}

// ---------------------------------------------------------------------------
// Forward and reverse processes

Tensor2D diffuse_to(const Tensor2D& x0, double alpha_bar, RngStream& rng) {
  const double a = std::sqrt(alpha_bar);
  const double b = std::sqrt(1.0 - alpha_bar);
  Tensor2D out(x0.rows(), x0.cols());
  auto src = x0.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = a * src[i] + b * rng.normal();
  return out;
}

LatentState forward_diffuse(const Tensor2D& x0, int t, const NoiseSchedule& sched,
                            RngStream& rng) {
  if (t < 1 || t > sched.T())
    throw ArgumentError("forward_diffuse: t = " + std::to_string(t) + " outside [1, " +
                        std::to_string(sched.T()) + "]");
  return {t, diffuse_to(x0, sched.alpha_bar_at(t), rng)};
}

LatentState denoise_step(const NoisePredictor& model, const LatentState& state,
                         const ConditionEmbedding& cond, const NoiseSchedule& sched,
                         RngStream& rng, ActivationSink* tap) {
  const int t = state.t;
  if (t <= 0) throw StateError("denoise_step called on a fully denoised state (t = 0)");
  if (t > sched.T()) throw ArgumentError("denoise_step: t beyond schedule length");
  const Tensor2D eps = model.predict_noise(state.value, t, cond.vector, tap);
  const double ab_t = sched.alpha_bar_at(t);
  const double ab_prev = sched.alpha_bar_at(t - 1);
  const double beta = sched.beta_at(t);
  const double alpha = 1.0 - beta;
  const double coef = beta / std::sqrt(1.0 - ab_t);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
  const double sigma = t > 1 ? std::sqrt((1.0 - ab_prev) / (1.0 - ab_t) * beta) : 0.0;

  LatentState out{t - 1, Tensor2D(state.value.rows(), state.value.cols())};
  auto x = state.value.values();
  auto e = eps.values();
  auto dst = out.value.values();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = inv_sqrt_alpha * (x[i] - coef * e[i]);
    if (t > 1) dst[i] += sigma * rng.normal();
  }
  return out;
}

LatentState run_chain_to(const NoisePredictor& model, const ConditionEmbedding& cond,
                         const NoiseSchedule& sched, std::size_t n, int stop_t,
                         RngStream& rng) {
  if (stop_t < 0 || stop_t > sched.T()) throw ArgumentError("run_chain_to: stop_t out of range");
  LatentState state{sched.T(), Tensor2D(n, model.data_dim())};
  if (n == 0) {
    state.t = stop_t;
    return state;
  }
  state.value = gaussian_sample(rng, n, model.data_dim());
  while (state.t > stop_t) state = denoise_step(model, state, cond, sched, rng);
  return state;
}

Tensor2D generate(const NoisePredictor& model, const ConditionEmbedding& cond,
                  const NoiseSchedule& sched, std::size_t n, RngStream& rng,
                  ActivationSink* tap) {
  if (n == 0) return Tensor2D(0, model.data_dim());
  LatentState state{sched.T(), gaussian_sample(rng, n, model.data_dim())};
  while (state.t > 0) state = denoise_step(model, state, cond, sched, rng, tap);
  return std::move(state.value);
}

// ---------------------------------------------------------------------------
// Training

LossAndGradients loss_and_gradients(const DenoiserModel& model, const Tensor2D& input,
                                    const Tensor2D& target) {
  const auto& layers = model.layers();
  const std::size_t L = layers.size();
  // pre[i]: pre-activation of layer i; acts[i]: input of layer i.
  std::vector<Tensor2D> acts(L + 1), pre(L);
  acts[0] = input;
  for (std::size_t i = 0; i < L; ++i) {
    affine_inplace(acts[i], layers[i], pre[i]);
    acts[i + 1] = pre[i];
    apply_activation(acts[i + 1], layers[i].activation);
  }
  const Tensor2D& out = acts[L];
  if (out.rows() != target.rows() || out.cols() != target.cols())
    throw ArgumentError("loss_and_gradients: target shape mismatch");

  const double inv_n = 1.0 / static_cast<double>(out.size());
  Tensor2D delta(out.rows(), out.cols());
  double loss = 0.0;
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double d = out.values()[k] - target.values()[k];
    loss += d * d;
    delta.values()[k] = 2.0 * d * inv_n;
  }
  loss *= inv_n;

  Gradients g;
  g.weight.resize(L);
  g.bias.resize(L);
  for (std::size_t i = L; i-- > 0;) {
    if (layers[i].activation == Activation::kSiLU) {
      auto z = pre[i].values();
      auto d = delta.values();
      for (std::size_t k = 0; k < d.size(); ++k) {
        const double s = sigmoid(z[k]);
        d[k] *= s * (1.0 + z[k] * (1.0 - s));
      }
    }
    g.weight[i] = matmul_tn(acts[i], delta);
    g.bias[i].assign(delta.cols(), 0.0);
    for (std::size_t r = 0; r < delta.rows(); ++r)
      for (std::size_t c = 0; c < delta.cols(); ++c) g.bias[i][c] += delta(r, c);
    delta = matmul_nt(delta, layers[i].weight);
  }
  g.input = std::move(delta);
  return {loss, std::move(g)};
}

TrainResult train(const DenoiserModel& model, const Tensor2D& dataset,
                  const std::vector<ConditionEmbedding>& conds, const NoiseSchedule& sched,
                  const TrainConfig& config, RngStream& rng) {
  if (config.batch_size == 0) throw ArgumentError("batch size must be >= 1");
  if (dataset.rows() < config.batch_size)
    throw ArgumentError("dataset has fewer rows than one batch");
  if (conds.size() != dataset.rows())
    throw ArgumentError("one condition embedding per dataset row is required");
  if (dataset.cols() != model.data_dim()) throw ArgumentError("dataset width != data_dim");

  TrainResult result{model, {}};
  DenoiserModel& m = result.model;
  const std::size_t n = dataset.rows();
  const std::size_t d = dataset.cols();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_index(i + 1)]);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start + config.batch_size <= n; start += config.batch_size) {
      const std::size_t bs = config.batch_size;
      Tensor2D xt(bs, d), eps(bs, d);
      std::vector<int> ts(bs);
      std::vector<std::vector<double>> cs(bs);
      for (std::size_t r = 0; r < bs; ++r) {
        const std::size_t row = order[start + r];
        ts[r] = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(sched.T())));
        const double ab = sched.alpha_bar_at(ts[r]);
        const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
        for (std::size_t c = 0; c < d; ++c) {
          eps(r, c) = rng.normal();
          xt(r, c) = a * dataset(row, c) + b * eps(r, c);
        }
        cs[r] = conds[row].vector;
      }
      const Tensor2D input = assemble_input(xt, ts, cs, m.time_embed_dim());
      const LossAndGradients lg = loss_and_gradients(m, input, eps);
      if (!std::isfinite(lg.loss))
        throw TrainingDivergenceError(epoch, "training diverged at epoch " +
                                                 std::to_string(epoch) + " (non-finite loss)");
      auto& layers = m.mutable_layers();
      for (std::size_t i = 0; i < layers.size(); ++i) {
        auto w = layers[i].weight.values();
        auto gw = lg.grads.weight[i].values();
        for (std::size_t k = 0; k < w.size(); ++k) w[k] -= config.learning_rate * gw[k];
        for (std::size_t k = 0; k < layers[i].bias.size(); ++k)
          layers[i].bias[k] -= config.learning_rate * lg.grads.bias[i][k];
      }
      epoch_loss += lg.loss;
      ++batches;
    }
    const double mean_loss = epoch_loss / static_cast<double>(batches);
    if (!std::isfinite(mean_loss))
      throw TrainingDivergenceError(epoch, "training diverged at epoch " + std::to_string(epoch));
    result.loss_trace.push_back(mean_loss);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace {

constexpr std::uint64_t kMixtureProjectionSeed = 0x6d6978747572ULL;
constexpr double kCentreScale = 1.2;
constexpr double kHalfSeparation = 0.8;
constexpr double kModeStddev = 0.15;

}  // namespace

MixtureSpec mixture_for(const ConditionEmbedding& cond, std::size_t data_dim) {
  const std::size_t k = cond.vector.size();
  RngStream proj(kMixtureProjectionSeed, k);
  std::vector<double> centre(data_dim, 0.0);
  for (std::size_t r = 0; r < data_dim; ++r)
    for (std::size_t c = 0; c < k; ++c) centre[r] += kCentreScale * proj.normal() * cond.vector[c];
  double angle_proj = 0.0;
  for (std::size_t c = 0; c < k; ++c) angle_proj += proj.normal() * cond.vector[c];
  const double theta = std::numbers::pi * angle_proj;
  std::vector<double> axis(data_dim, 0.0);
  axis[0] = std::cos(theta);
  if (data_dim > 1) axis[1] = std::sin(theta);
  MixtureSpec spec{centre, centre, kModeStddev};
  for (std::size_t r = 0; r < data_dim; ++r) {
    spec.mode_a[r] += kHalfSeparation * axis[r];
    spec.mode_b[r] -= kHalfSeparation * axis[r];
  }
  return spec;
}

Tensor2D sample_mixture(const MixtureSpec& spec, std::size_t n, RngStream& rng) {
  const std::size_t d = spec.mode_a.size();
  Tensor2D out(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& mode = rng.uniform() < 0.5 ? spec.mode_a : spec.mode_b;
    for (std::size_t c = 0; c < d; ++c) out(r, c) = mode[c] + spec.stddev * rng.normal();
  }
  return out;
}

}  // namespace dmq
