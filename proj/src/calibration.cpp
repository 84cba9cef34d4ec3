// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmq/calibration.hpp"

#include <algorithm>
#include <cmath>

#include "dmq/checkpoint.hpp"
#include "dmq/error.hpp"
#include "dmq/hash.hpp"

namespace dmq {

using json = nlohmann::ordered_json;

std::string_view to_string(SamplingStrategy s) {
  switch (s) {
    case SamplingStrategy::kVarianceAware: return "variance_aware";
    case SamplingStrategy::kRandomUniform: return "random_uniform";
    case SamplingStrategy::kNormalTimestep: return "normal_timestep";
  }
  return "?";
}

SamplingStrategy parse_sampling_strategy(std::string_view s) {
  if (s == "variance_aware") return SamplingStrategy::kVarianceAware;
  if (s == "random_uniform") return SamplingStrategy::kRandomUniform;
  if (s == "normal_timestep") return SamplingStrategy::kNormalTimestep;
  throw ArgumentError("unknown sampling strategy: " + std::string(s));
}

std::vector<ConditionedPrompt> condition_prompts(const PromptSet& prompts,
                                                 const AspectSet& aspects, std::size_t dim) {
  std::vector<ConditionedPrompt> out;
  out.reserve(prompts.size());
  for (const Prompt& p : prompts.prompts)
    out.push_back({p.id, embed_condition(p.text, aspects, dim)});
  return out;
}

// ---------------------------------------------------------------------------
// Cell draws

VarianceAwareDraws draw_variance_aware(const LayerVarianceProfile& profile, std::size_t K,
                                       RngStream& rng) {
  if (K == 0) throw ArgumentError("calibration set size K must be >= 1");
  if (profile.empty()) throw ArgumentError("variance profile is empty");

  VarianceAwareDraws out;
  out.tau_var = profile.tau_var();
  const double max_var = profile.max_variance();
  while (max_var < out.tau_var) {
    if (out.halvings == kMaxTauHalvings)
      throw DegenerateProfileError("no profile cell reaches tau_var after " +
                                   std::to_string(kMaxTauHalvings) + " halvings");
    out.tau_var *= 0.5;
    ++out.halvings;
  }

  const auto& cells = profile.cells();
  std::vector<double> cdf(cells.size());
  double acc = 0.0;
  double eligible_mass = 0.0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    acc += cells[i].probability;
    cdf[i] = acc;
    if (cells[i].variance >= out.tau_var) eligible_mass += cells[i].probability;
  }
  if (!(eligible_mass > 0.0))
    throw DegenerateProfileError("cells above tau_var carry no probability mass");

  out.cells.reserve(K);
  while (out.cells.size() < K) {
    const double u = rng.uniform() * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    std::size_t idx = static_cast<std::size_t>(it - cdf.begin());
    if (idx >= cells.size()) idx = cells.size() - 1;
    // Zero-probability cells are never chosen on purpose; upper_bound can
    // only land on one through a tie at the cdf boundary.
    while (cells[idx].probability == 0.0 && idx + 1 < cells.size()) ++idx;
    if (cells[idx].variance < out.tau_var) {
      ++out.rejected;
      continue;
    }
    out.cells.push_back({cells[idx].layer, cells[idx].t});
  }
  return out;
}

std::vector<CellDraw> draw_random_uniform(const std::vector<std::string>& layers, int T,
                                          std::size_t K, RngStream& rng) {
  if (K == 0) throw ArgumentError("calibration set size K must be >= 1");
  if (layers.empty() || T < 1) throw ArgumentError("random_uniform needs layers and T >= 1");
  const std::uint64_t n_cells = layers.size() * static_cast<std::uint64_t>(T);
  std::vector<CellDraw> out;
  out.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    const std::uint64_t c = rng.uniform_index(n_cells);
    out.push_back({layers[c / static_cast<std::uint64_t>(T)],
                   1 + static_cast<int>(c % static_cast<std::uint64_t>(T))});
  }
  return out;
}

std::vector<CellDraw> draw_normal_timestep(const std::vector<std::string>& layers, int T,
                                           std::size_t K, RngStream& rng, double mu_frac,
                                           double sigma_frac) {
  if (K == 0) throw ArgumentError("calibration set size K must be >= 1");
  if (layers.empty() || T < 1) throw ArgumentError("normal_timestep needs layers and T >= 1");
  if (!(mu_frac > 0.0 && mu_frac < 1.0)) throw ArgumentError("mu_frac must lie in (0, 1)");
  if (!(sigma_frac >= 0.0) || !std::isfinite(sigma_frac))
    throw ArgumentError("sigma_frac must be finite and >= 0");
  std::vector<CellDraw> out;
  out.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    const std::string& layer = layers[rng.uniform_index(layers.size())];
    const double z = rng.normal();
    const double raw = std::round(mu_frac * T + sigma_frac * T * z);
    const int t = static_cast<int>(std::clamp(raw, 1.0, static_cast<double>(T)));
    out.push_back({layer, t});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Capture

namespace {

class CellCapture final : public ActivationSink {
 public:
  explicit CellCapture(std::size_t layer) : layer_(layer) {}
  void offer(std::size_t layer_index, const std::string&, int,
             std::span<const double> values) override {
    if (layer_index == layer_ && !captured_) {
      values_.assign(values.begin(), values.end());
      captured_ = true;
    }
  }
  std::vector<double> take() { return std::move(values_); }

 private:
  std::size_t layer_;
  bool captured_ = false;
  std::vector<double> values_;
};

std::uint64_t capture_stream_base(const RngStream& rng) {
  return splitmix64(rng.stream_id() ^ 0x6361707475726500ULL);
}

}  // namespace

std::vector<CalibrationSample> capture_samples(const DenoiserModel& model,
                                               const NoiseSchedule& sched,
                                               const std::vector<ConditionedPrompt>& prompts,
                                               const std::vector<CellDraw>& draws,
                                               const RngStream& rng) {
  if (prompts.empty()) throw ArgumentError("calibration needs at least one prompt");
  const std::uint64_t base = capture_stream_base(rng);
  std::vector<CalibrationSample> out;
  out.reserve(draws.size());
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const CellDraw& d = draws[i];
    if (d.t < 1 || d.t > sched.T())
      throw ArgumentError("cell timestep " + std::to_string(d.t) + " outside the schedule");
    const std::size_t layer = model.layer_index(d.layer);
    const ConditionedPrompt& prompt = prompts[i % prompts.size()];
    RngStream stream = rng.fork(base + i);
    LatentState state = run_chain_to(model, prompt.cond, sched, 1, d.t, stream);
    CellCapture sink(layer);
    (void)model.predict_noise(state.value, d.t, prompt.cond.vector, &sink);
    std::vector<double> act = sink.take();
    const std::size_t width = act.size();

    CalibrationSample s;
    s.draw_index = i;
    s.prompt_id = prompt.id;
    s.timestep = d.t;
    s.layer = d.layer;
    s.activation = Tensor2D(1, width, std::move(act));
    s.latent = std::move(state.value);
    s.cond = prompt.cond.vector;
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

CalibrationSet assemble(const DenoiserModel& model, const NoiseSchedule& sched,
                        const std::vector<ConditionedPrompt>& prompts,
                        const std::vector<CellDraw>& draws, const RngStream& rng,
                        SamplingStrategy strategy, std::string profile_hash) {
  CalibrationSet set;
  set.samples = capture_samples(model, sched, prompts, draws, rng);
  set.K = draws.size();
  set.strategy = strategy;
  set.seed = rng.seed();
  set.profile_hash = std::move(profile_hash);
  set.model_hash = hex64(model_hash(model, sched));
  return set;
}

}  // namespace

CalibrationSet sample_calibration_set(const DenoiserModel& model, const NoiseSchedule& sched,
                                      const LayerVarianceProfile& profile,
                                      const std::vector<ConditionedPrompt>& prompts,
                                      std::size_t K, RngStream& rng) {
  if (prompts.empty()) throw ArgumentError("calibration needs at least one prompt");
  for (const CellStats& c : profile.cells()) {
    (void)model.layer_index(c.layer);
    if (c.t < 1 || c.t > sched.T())
      throw ArgumentError("profile cell timestep " + std::to_string(c.t) +
                          " outside the schedule");
  }
  const VarianceAwareDraws draws = draw_variance_aware(profile, K, rng);
  return assemble(model, sched, prompts, draws.cells, rng, SamplingStrategy::kVarianceAware,
                  hex64(profile.hash()));
}

CalibrationSet sample_random_uniform(const DenoiserModel& model, const NoiseSchedule& sched,
                                     const std::vector<ConditionedPrompt>& prompts,
                                     std::size_t K, RngStream& rng) {
  if (prompts.empty()) throw ArgumentError("calibration needs at least one prompt");
  const auto draws = draw_random_uniform(model.layer_names(), sched.T(), K, rng);
  return assemble(model, sched, prompts, draws, rng, SamplingStrategy::kRandomUniform, "");
}

CalibrationSet sample_normal_timestep(const DenoiserModel& model, const NoiseSchedule& sched,
                                      const std::vector<ConditionedPrompt>& prompts,
                                      std::size_t K, RngStream& rng, double mu_frac,
                                      double sigma_frac) {
  if (prompts.empty()) throw ArgumentError("calibration needs at least one prompt");
  const auto draws =
      draw_normal_timestep(model.layer_names(), sched.T(), K, rng, mu_frac, sigma_frac);
  return assemble(model, sched, prompts, draws, rng, SamplingStrategy::kNormalTimestep, "");
}

// ---------------------------------------------------------------------------
// Files

json calibration_set_to_json(const CalibrationSet& set) {
  json doc;
  doc["format"] = "dmq-calibset";
  doc["format_version"] = kCalibSetFormatVersion;
  doc["strategy"] = std::string(to_string(set.strategy));
  doc["K"] = set.K;
  doc["seed"] = set.seed;
  doc["profile_hash"] = set.profile_hash;
  doc["model_hash"] = set.model_hash;
  json samples = json::array();
  for (const CalibrationSample& s : set.samples) {
    samples.push_back({{"draw", s.draw_index},
                       {"prompt_id", s.prompt_id},
                       {"layer", s.layer},
                       {"timestep", s.timestep},
                       {"latent", s.latent.data()},
                       {"activation", s.activation.data()},
                       {"cond", s.cond}});
  }
  doc["samples"] = std::move(samples);
  return doc;
}

CalibrationSet calibration_set_from_json(const json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "dmq-calibset")
      throw DataError("not a dmq calibration set");
    const int version = doc.at("format_version").get<int>();
    if (version < 1 || version > kCalibSetFormatVersion)
      throw DataError("unsupported calibration set format_version " + std::to_string(version));
    CalibrationSet set;
    set.strategy = parse_sampling_strategy(doc.at("strategy").get<std::string>());
    set.K = doc.at("K").get<std::size_t>();
    set.seed = doc.at("seed").get<std::uint64_t>();
    set.profile_hash = doc.at("profile_hash").get<std::string>();
    set.model_hash = doc.at("model_hash").get<std::string>();
    for (const json& js : doc.at("samples")) {
      CalibrationSample s;
      s.draw_index = js.at("draw").get<std::uint64_t>();
      s.prompt_id = js.at("prompt_id").get<std::string>();
      s.layer = js.at("layer").get<std::string>();
      s.timestep = js.at("timestep").get<int>();
      auto latent = js.at("latent").get<std::vector<double>>();
      auto act = js.at("activation").get<std::vector<double>>();
      const std::size_t lw = latent.size(), aw = act.size();
      s.latent = Tensor2D(1, lw, std::move(latent));
      s.activation = Tensor2D(1, aw, std::move(act));
      s.cond = js.at("cond").get<std::vector<double>>();
      set.samples.push_back(std::move(s));
    }
    if (set.samples.size() != set.K)
      throw DataError("calibration set holds " + std::to_string(set.samples.size()) +
                      " samples but declares K = " + std::to_string(set.K));
    return set;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed calibration set: ") + e.what());
  } catch (const ArgumentError& e) {
    throw DataError(std::string("invalid calibration set: ") + e.what());
  }
}

void save_calibration_set(const std::string& path, const CalibrationSet& set) {
  write_file(path, calibration_set_to_json(set).dump(1) + "\n");
}

CalibrationSet load_calibration_set(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DataError("calibration set " + path + " is not valid JSON: " + e.what());
  }
  return calibration_set_from_json(doc);
}

}  // namespace dmq
