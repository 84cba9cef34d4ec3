// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

// Per-(layer, timestep) activation statistics.
//
// An ActivationTap is handed to generate() and accumulates exact streaming
// moments (Welford) plus a bounded uniform reservoir of raw values for every
// cell. build_profile() turns the moments into the variance profile that
// drives variance-aware calibration sampling:
//
//   sigma_hat_c = var_c / sum(var)      P_c = sigma_hat_c / sum(sigma_hat)
//
// The second normalization is the identity once the first has been applied;
// both maps are kept so the equality can be checked.

#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "dmq/diffusion.hpp"
#include "dmq/numeric.hpp"

namespace dmq {

struct CellKey {
  std::string layer;
  int t = 0;
  friend auto operator<=>(const CellKey&, const CellKey&) = default;
};

struct CellAccumulator {
  std::uint64_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;
  std::uint64_t offered = 0;  // values seen by the reservoir
  std::vector<double> reservoir;

  // Population variance m2 / count.
  double variance() const noexcept { return count ? m2 / static_cast<double>(count) : 0.0; }
};

// Single writer. Values offered for layers outside `monitored_layers` are
// ignored without error.
class ActivationTap final : public ActivationSink {
 public:
  ActivationTap(std::vector<std::string> monitored_layers, std::size_t reservoir_size,
                std::uint64_t seed);

  void record(const std::string& layer, int t, std::span<const double> values);
  void offer(std::size_t, const std::string& layer, int t,
             std::span<const double> values) override {
    record(layer, t, values);
  }

  const std::map<CellKey, CellAccumulator>& cells() const noexcept { return cells_; }
  const std::set<std::string>& monitored_layers() const noexcept { return monitored_; }
  std::size_t reservoir_size() const noexcept { return reservoir_size_; }
  std::uint64_t offers() const noexcept { return offers_; }

 private:
  std::set<std::string> monitored_;
  std::size_t reservoir_size_;
  RngStream rng_;
  std::map<CellKey, CellAccumulator> cells_;
  std::uint64_t offers_ = 0;
};

struct CellStats {
  std::string layer;
  int t = 0;
  std::uint64_t count = 0;
  double mean = 0.0;
  double variance = 0.0;
  double sigma_hat = 0.0;
  double probability = 0.0;
  std::vector<double> reservoir;
};

class LayerVarianceProfile {
 public:
  LayerVarianceProfile() = default;
  // Fills sigma_hat and probability from the variances and sets
  // tau_var = tau_fraction * max variance. Throws DegenerateProfileError when
  // the variances sum to zero, ArgumentError on empty or negative input or
  // duplicate cells.
  static LayerVarianceProfile from_cells(std::vector<CellStats> cells, double tau_fraction);

  const std::vector<CellStats>& cells() const noexcept { return cells_; }
  std::size_t size() const noexcept { return cells_.size(); }
  bool empty() const noexcept { return cells_.empty(); }
  double tau_var() const noexcept { return tau_var_; }
  double tau_fraction() const noexcept { return tau_fraction_; }
  double max_variance() const noexcept;
  // Overrides the threshold (the sampler's fallback still applies).
  void set_tau_var(double tau) { tau_var_ = tau; }
  // Index of the cell, or size() when absent.
  std::size_t find(const std::string& layer, int t) const;

  // Tab-separated export, header
  //   layer timestep count mean variance sigma_hat P
  // preceded by one "# dmq-profile v1 tau_fraction=<f> tau_var=<v>" line.
  std::string to_tsv() const;
  // Reservoirs are not part of the file and come back empty.
  static LayerVarianceProfile parse_tsv(std::string_view text);

  // Hash of to_tsv(); the profile's provenance identifier.
  std::uint64_t hash() const;

 private:
  std::vector<CellStats> cells_;
  double tau_var_ = 0.0;
  double tau_fraction_ = 0.0;
};

inline constexpr double kDefaultTauFraction = 0.10;

// Throws InsufficientDataError naming the first cell with count < 2, or when
// the tap holds no cells at all.
LayerVarianceProfile build_profile(const ActivationTap& tap,
                                   double tau_fraction = kDefaultTauFraction);

struct CellDivergence {
  std::string layer;
  int t = 0;
  double variance_a = 0.0;
  double variance_b = 0.0;
  double abs_gap = 0.0;
  double rel_gap = 0.0;  // abs_gap / max(var_a, var_b); 0 when both are 0
  double symmetric_kl = 0.0;
};

// Symmetric KL uses 1-D Gaussian fits of the reservoirs when both hold at
// least two values, and the exact cell moments otherwise. Throws
// ArgumentError when the profiles do not cover the same cells.
std::vector<CellDivergence> activation_divergence(const LayerVarianceProfile& a,
                                                  const LayerVarianceProfile& b);

}  // namespace dmq
