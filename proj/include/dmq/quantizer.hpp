// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

// Affine post-training quantization.
//
//   code = clip(round(w / s) + Z, c_min, c_max)
//   w^   = s * (code - Z)
//
// Grids are signed: for b bits, c_min = -2^(b-1) and c_max = 2^(b-1) - 1.
// round() is half-away-from-zero. Weights use per-tensor symmetric grids
// (Z = 0), activations per-tensor asymmetric grids. The forward pass of a
// QuantizedModel is simulated: weights are quantized and dequantized once,
// layer inputs at every call.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dmq/diffusion.hpp"
#include "dmq/numeric.hpp"
#include "vendor_json.hpp"

namespace dmq {

struct CalibrationSet;

enum class QuantMode { kSymmetric, kAsymmetric };

std::string_view to_string(QuantMode mode);

// Scale used when the fitted range is empty (constant or all-zero tensor).
inline constexpr double kDegenerateScale = 1e-8;

struct QuantParams {
  double scale = 1.0;
  std::int32_t zero_point = 0;
  std::int32_t c_min = -128;
  std::int32_t c_max = 127;
  int bitwidth = 8;
  QuantMode mode = QuantMode::kSymmetric;

  // Throws ArgumentError for bitwidths other than 4, 8, 16, a non-positive or
  // non-finite scale, Z outside the grid, or Z != 0 in symmetric mode.
  static QuantParams make(double scale, std::int32_t zero_point, int bitwidth, QuantMode mode);
  void validate() const;

  friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

std::int32_t grid_min(int bitwidth);
std::int32_t grid_max(int bitwidth);

struct RangeMethod {
  enum class Kind { kMinMax, kPercentile };
  Kind kind = Kind::kMinMax;
  // Central coverage in percent for kPercentile: the range runs from the
  // (100 - p) / 2 to the 100 - (100 - p) / 2 percentile.
  double percentile = 100.0;

  static RangeMethod minmax() { return {}; }
  static RangeMethod central(double p);
  // "minmax" or "percentile:<p>".
  static RangeMethod parse(std::string_view s);
  std::string to_string() const;
};

// Linear-interpolated percentile (q in [0, 100]) of unsorted data.
double percentile_of(std::span<const double> xs, double q);

// Throws ArgumentError on empty or non-finite samples.
QuantParams fit_params(std::span<const double> samples, int bitwidth, QuantMode mode,
                       RangeMethod method = RangeMethod::minmax());

std::int32_t quantize_value(double w, const QuantParams& p);
double dequantize_value(std::int32_t code, const QuantParams& p);

struct QuantizedTensor {
  std::vector<std::int32_t> codes;
  QuantParams params;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

// Throws ArgumentError on non-finite entries.
QuantizedTensor quantize(const Tensor2D& w, const QuantParams& p);
Tensor2D dequantize(const QuantizedTensor& q);
void fake_quantize_inplace(std::span<double> values, const QuantParams& p);

// ---------------------------------------------------------------------------
// Precision policies

// std::nullopt means full precision.
using BitSpec = std::optional<int>;

struct LayerPrecision {
  BitSpec weight_bits;
  BitSpec act_bits;
  friend bool operator==(const LayerPrecision&, const LayerPrecision&) = default;
};

// "<w>W<a>A" with w in {4, 8, 16, 32, full} and a in {8, 16, 32, full};
// 32 and "full" both mean unquantized. Canonical output writes full as 32.
LayerPrecision parse_precision_notation(std::string_view notation);
std::string precision_notation(const LayerPrecision& p);

class PrecisionPolicy {
 public:
  PrecisionPolicy() = default;
  PrecisionPolicy(std::string notation, std::map<std::string, LayerPrecision> layers);

  // Every layer gets the notation's precision.
  static PrecisionPolicy uniform(const DenoiserModel& model, std::string_view notation);
  // Like uniform, but the named layers stay at full precision.
  static PrecisionPolicy with_preserved(const DenoiserModel& model, std::string_view notation,
                                        const std::vector<std::string>& preserved);
  // First and last layer preserved.
  static PrecisionPolicy sensitive_preserved(const DenoiserModel& model,
                                             std::string_view notation);

  const std::string& notation() const noexcept { return notation_; }
  const std::map<std::string, LayerPrecision>& layers() const noexcept { return layers_; }
  // Throws ArgumentError for layers absent from the policy.
  const LayerPrecision& at(const std::string& layer) const;
  bool any_activation_quantized() const;

  // Throws ArgumentError unless the policy names exactly the model's layers.
  void validate(const DenoiserModel& model) const;

 private:
  std::string notation_;
  std::map<std::string, LayerPrecision> layers_;
};

// ---------------------------------------------------------------------------
// Quantized model

struct LayerQuantization {
  std::string layer;
  LayerPrecision precision;
  std::optional<QuantizedTensor> weight;
  std::optional<QuantizedTensor> bias;
  std::optional<QuantParams> activation;
};

class QuantizedModel final : public NoisePredictor {
 public:
  QuantizedModel(DenoiserModel original, PrecisionPolicy policy,
                 std::vector<LayerQuantization> layers);

  std::size_t data_dim() const override { return effective_.data_dim(); }
  Tensor2D predict_noise(const Tensor2D& x, int t, std::span<const double> cond,
                         ActivationSink* tap) const override;

  const DenoiserModel& original() const noexcept { return original_; }
  // The model with dequantized weights substituted.
  const DenoiserModel& effective() const noexcept { return effective_; }
  const PrecisionPolicy& policy() const noexcept { return policy_; }
  const std::vector<LayerQuantization>& layers() const noexcept { return layers_; }

 private:
  DenoiserModel original_;
  DenoiserModel effective_;
  PrecisionPolicy policy_;
  std::vector<LayerQuantization> layers_;
  bool any_act_ = false;
};

// Weight and bias params are fitted per tensor (symmetric, minmax) from the
// layer's own parameters. Activation params are fitted per layer
// (asymmetric, `act_method`) from the captured inputs of the calibration
// samples drawn for that layer. Throws CalibrationCoverageError naming the
// first activation-quantized layer without samples, or a sample's layer when
// the model has no such layer.
QuantizedModel quantize_model(const DenoiserModel& model, const PrecisionPolicy& policy,
                              const CalibrationSet& calib,
                              RangeMethod act_method = RangeMethod::minmax());

// Quantized checkpoint: the model checkpoint plus "policy" and a "quant"
// array with per-layer params and integer weight codes.
nlohmann::ordered_json quantized_to_json(const QuantizedModel& qm, const NoiseSchedule& sched);
QuantizedModel quantized_from_json(const nlohmann::ordered_json& doc);

// ---------------------------------------------------------------------------
// Size accounting

// Bytes per QuantParams record: fp32 scale + int32 zero-point.
inline constexpr std::uint64_t kQuantParamsRecordBytes = 8;

struct SizeReport {
  std::uint64_t full_bytes = 0;       // every parameter at 4 bytes
  std::uint64_t quantized_bytes = 0;  // at policy bits; preserved layers at 2 bytes
  double reduction_pct = 0.0;         // 100 * (1 - quantized / full)
};

// Each weight and bias tensor is stored in ceil(count * bits / 8) bytes.
// Full-precision layers count as FP16 when any other layer is quantized and
// as fp32 when none is (the unquantized baseline). With
// `include_overhead`, one record is added per quantized tensor (weight, bias,
// and activation when quantized).
SizeReport model_size_bytes(const DenoiserModel& model, const PrecisionPolicy& policy,
                            bool include_overhead = true);

}  // namespace dmq
