// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmq/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <limits>

#include "dmq/calibration.hpp"
#include "dmq/checkpoint.hpp"
#include "dmq/error.hpp"

namespace dmq {

using json = nlohmann::ordered_json;

std::string_view to_string(QuantMode mode) {
  return mode == QuantMode::kSymmetric ? "symmetric" : "asymmetric";
}

namespace {

QuantMode parse_mode(std::string_view s) {
  if (s == "symmetric") return QuantMode::kSymmetric;
  if (s == "asymmetric") return QuantMode::kAsymmetric;
  throw DataError("unknown quantization mode: " + std::string(s));
}

bool valid_bitwidth(int b) { return b == 4 || b == 8 || b == 16; }

}  // namespace

std::int32_t grid_min(int bitwidth) { return -(std::int32_t{1} << (bitwidth - 1)); }
std::int32_t grid_max(int bitwidth) { return (std::int32_t{1} << (bitwidth - 1)) - 1; }

QuantParams QuantParams::make(double scale, std::int32_t zero_point, int bitwidth,
                              QuantMode mode) {
  if (!valid_bitwidth(bitwidth))
    throw ArgumentError("bitwidth must be 4, 8 or 16, got " + std::to_string(bitwidth));
  QuantParams p{scale, zero_point, grid_min(bitwidth), grid_max(bitwidth), bitwidth, mode};
  p.validate();
  return p;
}

void QuantParams::validate() const {
  if (!valid_bitwidth(bitwidth))
    throw ArgumentError("bitwidth must be 4, 8 or 16, got " + std::to_string(bitwidth));
  if (c_min != grid_min(bitwidth) || c_max != grid_max(bitwidth))
    throw ArgumentError("clip bounds do not match the signed grid for the bitwidth");
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw ArgumentError("quantization scale must be finite and positive");
  if (zero_point < c_min || zero_point > c_max)
    throw ArgumentError("zero point outside the grid");
  if (mode == QuantMode::kSymmetric && zero_point != 0)
    throw ArgumentError("symmetric quantization requires a zero point of 0");
}

// ---------------------------------------------------------------------------
// Range estimation

RangeMethod RangeMethod::central(double p) {
  if (!(p > 0.0 && p <= 100.0)) throw ArgumentError("percentile must lie in (0, 100]");
  return {Kind::kPercentile, p};
}

RangeMethod RangeMethod::parse(std::string_view s) {
  if (s == "minmax") return minmax();
  constexpr std::string_view prefix = "percentile:";
  if (s.substr(0, prefix.size()) == prefix) {
    try {
      return central(std::stod(std::string(s.substr(prefix.size()))));
    } catch (const std::invalid_argument&) {
    }
  }
  throw ArgumentError("range method must be 'minmax' or 'percentile:<p>', got '" +
                      std::string(s) + "'");
}

std::string RangeMethod::to_string() const {
  if (kind == Kind::kMinMax) return "minmax";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "percentile:%g", percentile);
  return buf;
}

double percentile_of(std::span<const double> xs, double q) {
  if (xs.empty()) throw ArgumentError("percentile of empty data");
  std::vector<double> v(xs.begin(), xs.end());
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

QuantParams fit_params(std::span<const double> samples, int bitwidth, QuantMode mode,
                       RangeMethod method) {
  if (samples.empty()) throw ArgumentError("fit_params: no samples");
  if (!valid_bitwidth(bitwidth))
    throw ArgumentError("bitwidth must be 4, 8 or 16, got " + std::to_string(bitwidth));
  for (double x : samples)
    if (!std::isfinite(x)) throw ArgumentError("fit_params: non-finite sample");

  double lo, hi;
  if (method.kind == RangeMethod::Kind::kMinMax || method.percentile >= 100.0) {
    const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
    lo = *mn;
    hi = *mx;
  } else {
    const double tail = (100.0 - method.percentile) / 2.0;
    lo = percentile_of(samples, tail);
    hi = percentile_of(samples, 100.0 - tail);
  }

  const std::int32_t cmin = grid_min(bitwidth), cmax = grid_max(bitwidth);
  if (mode == QuantMode::kSymmetric) {
    const double amax = std::max(std::abs(lo), std::abs(hi));
    const double s = amax > 0.0 ? amax / cmax : kDegenerateScale;
    return QuantParams::make(std::max(s, kDegenerateScale), 0, bitwidth, mode);
  }
  if (!(hi > lo)) return QuantParams::make(kDegenerateScale, 0, bitwidth, mode);
  const double s = std::max((hi - lo) / static_cast<double>(cmax - cmin), kDegenerateScale);
  const double z = std::round(static_cast<double>(cmin) - lo / s);
  const auto zp = static_cast<std::int32_t>(
      std::clamp(z, static_cast<double>(cmin), static_cast<double>(cmax)));
  return QuantParams::make(s, zp, bitwidth, mode);
}

// ---------------------------------------------------------------------------
// Quantize / dequantize

std::int32_t quantize_value(double w, const QuantParams& p) {
  // std::round rounds halfway cases away from zero.
  const double code = std::round(w / p.scale) + p.zero_point;
  return static_cast<std::int32_t>(
      std::clamp(code, static_cast<double>(p.c_min), static_cast<double>(p.c_max)));
}

double dequantize_value(std::int32_t code, const QuantParams& p) {
  return p.scale * static_cast<double>(code - p.zero_point);
}

QuantizedTensor quantize(const Tensor2D& w, const QuantParams& p) {
  p.validate();
  QuantizedTensor q{std::vector<std::int32_t>(w.size()), p, w.rows(), w.cols()};
  auto vals = w.values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (!std::isfinite(vals[i])) throw ArgumentError("quantize: non-finite entry");
    q.codes[i] = quantize_value(vals[i], p);
  }
  return q;
}

Tensor2D dequantize(const QuantizedTensor& q) {
  Tensor2D out(q.rows, q.cols);
  auto vals = out.values();
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = dequantize_value(q.codes[i], q.params);
  return out;
}

void fake_quantize_inplace(std::span<double> values, const QuantParams& p) {
  for (double& v : values) v = dequantize_value(quantize_value(v, p), p);
}

// ---------------------------------------------------------------------------
// Precision policies

namespace {

BitSpec parse_bits(std::string_view s, bool weight, std::string_view whole) {
  if (s == "full" || s == "32" || s == "fp32") return std::nullopt;
  int v = 0;
  for (char c : s) {
    if (c < '0' || c > '9' || s.size() > 2)
      throw ArgumentError("bad precision notation '" + std::string(whole) + "'");
    v = v * 10 + (c - '0');
  }
  const bool ok = weight ? (v == 4 || v == 8 || v == 16) : (v == 8 || v == 16);
  if (s.empty() || !ok)
    throw ArgumentError("unsupported " + std::string(weight ? "weight" : "activation") +
                        " bitwidth in '" + std::string(whole) + "'");
  return v;
}

std::string bits_str(const BitSpec& b) { return b ? std::to_string(*b) : "32"; }

}  // namespace

LayerPrecision parse_precision_notation(std::string_view notation) {
  const auto w = notation.find('W');
  if (w == std::string_view::npos || notation.empty() || notation.back() != 'A')
    throw ArgumentError("precision notation must look like '<w>W<a>A', got '" +
                        std::string(notation) + "'");
  return {parse_bits(notation.substr(0, w), true, notation),
          parse_bits(notation.substr(w + 1, notation.size() - w - 2), false, notation)};
}

std::string precision_notation(const LayerPrecision& p) {
  return bits_str(p.weight_bits) + "W" + bits_str(p.act_bits) + "A";
}

PrecisionPolicy::PrecisionPolicy(std::string notation,
                                 std::map<std::string, LayerPrecision> layers)
    : notation_(std::move(notation)), layers_(std::move(layers)) {}

PrecisionPolicy PrecisionPolicy::uniform(const DenoiserModel& model, std::string_view notation) {
  return with_preserved(model, notation, {});
}

PrecisionPolicy PrecisionPolicy::with_preserved(const DenoiserModel& model,
                                                std::string_view notation,
                                                const std::vector<std::string>& preserved) {
  const LayerPrecision p = parse_precision_notation(notation);
  std::map<std::string, LayerPrecision> layers;
  for (const auto& name : model.layer_names()) layers[name] = p;
  for (const auto& name : preserved) {
    (void)model.layer_index(name);
    layers[name] = LayerPrecision{};
  }
  return PrecisionPolicy(precision_notation(p), std::move(layers));
}

PrecisionPolicy PrecisionPolicy::sensitive_preserved(const DenoiserModel& model,
                                                     std::string_view notation) {
  const auto names = model.layer_names();
  return with_preserved(model, notation, {names.front(), names.back()});
}

const LayerPrecision& PrecisionPolicy::at(const std::string& layer) const {
  auto it = layers_.find(layer);
  if (it == layers_.end()) throw ArgumentError("policy has no entry for layer " + layer);
  return it->second;
}

bool PrecisionPolicy::any_activation_quantized() const {
  for (const auto& [name, p] : layers_)
    if (p.act_bits) return true;
  return false;
}

void PrecisionPolicy::validate(const DenoiserModel& model) const {
  for (const auto& [name, p] : layers_) (void)model.layer_index(name);
  for (const auto& name : model.layer_names())
    if (!layers_.contains(name)) throw ArgumentError("policy does not cover layer " + name);
}

// ---------------------------------------------------------------------------
// QuantizedModel

namespace {

class ActivationFakeQuant final : public LayerInputHook {
 public:
  explicit ActivationFakeQuant(const std::vector<LayerQuantization>& layers) : layers_(layers) {}
  void transform(std::size_t layer_index, Tensor2D& input) const override {
    const auto& a = layers_[layer_index].activation;
    if (a) fake_quantize_inplace(input.values(), *a);
  }

 private:
  const std::vector<LayerQuantization>& layers_;
};

DenoiserModel substitute_weights(const DenoiserModel& model,
                                 const std::vector<LayerQuantization>& q) {
  std::vector<AffineLayer> layers = model.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (q[i].weight) layers[i].weight = dequantize(*q[i].weight);
    if (q[i].bias) {
      const Tensor2D b = dequantize(*q[i].bias);
      layers[i].bias.assign(b.values().begin(), b.values().end());
    }
  }
  return DenoiserModel(model.data_dim(), model.time_embed_dim(), model.cond_embed_dim(),
                       std::move(layers), /*allow_shallow=*/true);
}

}  // namespace

QuantizedModel::QuantizedModel(DenoiserModel original, PrecisionPolicy policy,
                               std::vector<LayerQuantization> layers)
    : original_(std::move(original)), policy_(std::move(policy)), layers_(std::move(layers)) {
  if (layers_.size() != original_.num_layers())
    throw ArgumentError("one LayerQuantization per model layer is required");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].layer != original_.layers()[i].name)
      throw ArgumentError("layer quantization order does not match the model");
    any_act_ = any_act_ || layers_[i].activation.has_value();
  }
  effective_ = substitute_weights(original_, layers_);
}

Tensor2D QuantizedModel::predict_noise(const Tensor2D& x, int t, std::span<const double> cond,
                                       ActivationSink* tap) const {
  if (!any_act_) return effective_.predict_noise(x, t, cond, tap);
  const ActivationFakeQuant hook(layers_);
  return effective_.predict_noise(x, t, cond, tap, &hook);
}

namespace {

QuantizedTensor quantize_symmetric(const Tensor2D& t, int bits) {
  return quantize(t, fit_params(t.values(), bits, QuantMode::kSymmetric));
}

}  // namespace

QuantizedModel quantize_model(const DenoiserModel& model, const PrecisionPolicy& policy,
                              const CalibrationSet& calib, RangeMethod act_method) {
  policy.validate(model);
  const auto& layers = model.layers();

  // Each sample calibrates only the layer it was drawn for.
  std::vector<std::vector<double>> recorded(layers.size());
  for (const CalibrationSample& s : calib.samples) {
    const auto it = std::find_if(layers.begin(), layers.end(),
                                 [&](const AffineLayer& l) { return l.name == s.layer; });
    if (it == layers.end())
      throw CalibrationCoverageError(s.layer, "calibration sample names unknown layer " + s.layer);
    if (s.activation.cols() != it->in_dim())
      throw ArgumentError("calibration sample " + std::to_string(s.draw_index) +
                          " has the wrong width for layer " + s.layer);
    auto& bucket = recorded[static_cast<std::size_t>(it - layers.begin())];
    const auto v = s.activation.values();
    bucket.insert(bucket.end(), v.begin(), v.end());
  }

  std::vector<LayerQuantization> q;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const AffineLayer& l = layers[i];
    LayerQuantization lq;
    lq.layer = l.name;
    lq.precision = policy.at(l.name);
    if (lq.precision.weight_bits) {
      lq.weight = quantize_symmetric(l.weight, *lq.precision.weight_bits);
      lq.bias = quantize_symmetric(Tensor2D(1, l.bias.size(), l.bias), *lq.precision.weight_bits);
    }
    if (lq.precision.act_bits) {
      if (recorded[i].empty())
        throw CalibrationCoverageError(
            l.name, "no calibration activations recorded for layer " + l.name);
      lq.activation =
          fit_params(recorded[i], *lq.precision.act_bits, QuantMode::kAsymmetric, act_method);
    }
    q.push_back(std::move(lq));
  }
  return QuantizedModel(model, policy, std::move(q));
}

// ---------------------------------------------------------------------------
// Quantized checkpoint

namespace {

json params_json(const QuantParams& p) {
  return {{"scale", p.scale},     {"zero_point", p.zero_point}, {"c_min", p.c_min},
          {"c_max", p.c_max},     {"bitwidth", p.bitwidth},
          {"mode", std::string(to_string(p.mode))}};
}

QuantParams params_from(const json& j) {
  QuantParams p;
  p.scale = j.at("scale").get<double>();
  p.zero_point = j.at("zero_point").get<std::int32_t>();
  p.c_min = j.at("c_min").get<std::int32_t>();
  p.c_max = j.at("c_max").get<std::int32_t>();
  p.bitwidth = j.at("bitwidth").get<int>();
  p.mode = parse_mode(j.at("mode").get<std::string>());
  p.validate();
  return p;
}

json bits_json(const BitSpec& b) { return b ? json(*b) : json("full"); }

BitSpec bits_from(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() != "full") throw DataError("bad bit spec");
    return std::nullopt;
  }
  return j.get<int>();
}

}  // namespace

json quantized_to_json(const QuantizedModel& qm, const NoiseSchedule& sched) {
  json doc = checkpoint_to_json(qm.original(), sched);
  doc["format"] = "dmq-quantized-checkpoint";
  doc["policy"] = qm.policy().notation();
  json arr = json::array();
  for (const LayerQuantization& lq : qm.layers()) {
    json j;
    j["layer"] = lq.layer;
    j["weight_bits"] = bits_json(lq.precision.weight_bits);
    j["act_bits"] = bits_json(lq.precision.act_bits);
    j["weight"] = lq.weight ? params_json(lq.weight->params) : json(nullptr);
    j["bias"] = lq.bias ? params_json(lq.bias->params) : json(nullptr);
    j["activation"] = lq.activation ? params_json(*lq.activation) : json(nullptr);
    j["weight_codes"] = lq.weight ? json(lq.weight->codes) : json(nullptr);
    j["bias_codes"] = lq.bias ? json(lq.bias->codes) : json(nullptr);
    arr.push_back(std::move(j));
  }
  doc["quant"] = std::move(arr);
  return doc;
}

QuantizedModel quantized_from_json(const json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "dmq-quantized-checkpoint")
      throw DataError("not a dmq quantized checkpoint");
    json base = doc;
    base["format"] = "dmq-checkpoint";
    Checkpoint ck = checkpoint_from_json(base);
    std::map<std::string, LayerPrecision> policy_layers;
    std::vector<LayerQuantization> layers;
    const auto& model_layers = ck.model.layers();
    const json& arr = doc.at("quant");
    if (arr.size() != model_layers.size()) throw DataError("quant array length mismatch");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const json& j = arr[i];
      LayerQuantization lq;
      lq.layer = j.at("layer").get<std::string>();
      lq.precision = {bits_from(j.at("weight_bits")), bits_from(j.at("act_bits"))};
      const AffineLayer& l = model_layers[i];
      if (!j.at("weight").is_null()) {
        lq.weight = quantize(l.weight, params_from(j.at("weight")));
        lq.bias = quantize(Tensor2D(1, l.bias.size(), l.bias), params_from(j.at("bias")));
        if (j.at("weight_codes").get<std::vector<std::int32_t>>() != lq.weight->codes ||
            j.at("bias_codes").get<std::vector<std::int32_t>>() != lq.bias->codes)
          throw DataError("stored codes for layer " + lq.layer + " do not match its weights");
      }
      if (!j.at("activation").is_null()) lq.activation = params_from(j.at("activation"));
      policy_layers[lq.layer] = lq.precision;
      layers.push_back(std::move(lq));
    }
    PrecisionPolicy policy(doc.at("policy").get<std::string>(), std::move(policy_layers));
    return QuantizedModel(std::move(ck.model), std::move(policy), std::move(layers));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed quantized checkpoint: ") + e.what());
  } catch (const ArgumentError& e) {
    throw DataError(std::string("invalid quantized checkpoint: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Size accounting

SizeReport model_size_bytes(const DenoiserModel& model, const PrecisionPolicy& policy,
                            bool include_overhead) {
  policy.validate(model);
  SizeReport r;
  auto bytes_at = [](std::size_t count, int bits) {
    return (static_cast<std::uint64_t>(count) * static_cast<std::uint64_t>(bits) + 7) / 8;
  };
  // Layers left at full precision are stored as FP16 next to quantized
  // layers; a policy that quantizes nothing is the fp32 baseline.
  bool any_weights = false;
  for (const auto& [name, p] : policy.layers()) any_weights = any_weights || p.weight_bits;
  const int full_bits = any_weights ? 16 : 32;
  for (const AffineLayer& l : model.layers()) {
    r.full_bytes += 4 * static_cast<std::uint64_t>(l.param_count());
    const LayerPrecision& p = policy.at(l.name);
    const int bits = p.weight_bits ? *p.weight_bits : full_bits;
    r.quantized_bytes += bytes_at(l.weight.size(), bits) + bytes_at(l.bias.size(), bits);
    if (include_overhead) {
      if (p.weight_bits) r.quantized_bytes += 2 * kQuantParamsRecordBytes;
      if (p.act_bits) r.quantized_bytes += kQuantParamsRecordBytes;
    }
  }
  r.reduction_pct = r.full_bytes
                        ? 100.0 * (1.0 - static_cast<double>(r.quantized_bytes) /
                                             static_cast<double>(r.full_bytes))
                        : 0.0;
  return r;
}

}  // namespace dmq
