// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmq/profiler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <tuple>

#include "dmq/error.hpp"
#include "dmq/hash.hpp"
#include "dmq/metrics.hpp"

namespace dmq {

ActivationTap::ActivationTap(std::vector<std::string> monitored_layers,
                             std::size_t reservoir_size, std::uint64_t seed)
    : monitored_(monitored_layers.begin(), monitored_layers.end()),
      reservoir_size_(reservoir_size),
      rng_(seed, 0x7265736572766f69ULL) {}

void ActivationTap::record(const std::string& layer, int t, std::span<const double> values) {
  if (!monitored_.contains(layer)) return;
  ++offers_;
  CellAccumulator& cell = cells_[CellKey{layer, t}];
  for (double x : values) {
    ++cell.count;
    const double delta = x - cell.mean;
    cell.mean += delta / static_cast<double>(cell.count);
    cell.m2 += delta * (x - cell.mean);

    // Algorithm R.
    ++cell.offered;
    if (cell.reservoir.size() < reservoir_size_) {
      cell.reservoir.push_back(x);
    } else if (reservoir_size_ > 0) {
      const std::uint64_t j = rng_.uniform_index(cell.offered);
      if (j < reservoir_size_) cell.reservoir[j] = x;
    }
  }
}

// ---------------------------------------------------------------------------

LayerVarianceProfile LayerVarianceProfile::from_cells(std::vector<CellStats> cells,
                                                      double tau_fraction) {
  if (cells.empty()) throw ArgumentError("variance profile needs at least one cell");
  if (!(tau_fraction >= 0.0) || !std::isfinite(tau_fraction))
    throw ArgumentError("tau_fraction must be a finite non-negative number");
  std::sort(cells.begin(), cells.end(), [](const CellStats& x, const CellStats& y) {
    return std::tie(x.layer, x.t) < std::tie(y.layer, y.t);
  });
  double total = 0.0, max_var = 0.0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const CellStats& c = cells[i];
    if (i > 0 && c.layer == cells[i - 1].layer && c.t == cells[i - 1].t)
      throw ArgumentError("duplicate profile cell " + c.layer + "@" + std::to_string(c.t));
    if (!(c.variance >= 0.0) || !std::isfinite(c.variance))
      throw ArgumentError("profile variances must be finite and non-negative");
    total += c.variance;
    max_var = std::max(max_var, c.variance);
  }
  if (total <= 0.0)
    throw DegenerateProfileError("all activation variances are zero; no sampling distribution");

  double hat_total = 0.0;
  for (CellStats& c : cells) {
    c.sigma_hat = c.variance / total;
    hat_total += c.sigma_hat;
  }
  for (CellStats& c : cells) c.probability = c.sigma_hat / hat_total;

  LayerVarianceProfile p;
  p.cells_ = std::move(cells);
  p.tau_fraction_ = tau_fraction;
  p.tau_var_ = tau_fraction * max_var;
  return p;
}

double LayerVarianceProfile::max_variance() const noexcept {
  double m = 0.0;
  for (const auto& c : cells_) m = std::max(m, c.variance);
  return m;
}

std::size_t LayerVarianceProfile::find(const std::string& layer, int t) const {
  for (std::size_t i = 0; i < cells_.size(); ++i)
    if (cells_[i].layer == layer && cells_[i].t == t) return i;
  return cells_.size();
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string LayerVarianceProfile::to_tsv() const {
  std::string out = "# dmq-profile v1 tau_fraction=" + fmt_double(tau_fraction_) +
                    " tau_var=" + fmt_double(tau_var_) + "\n";
  out += "layer\ttimestep\tcount\tmean\tvariance\tsigma_hat\tP\n";
  for (const auto& c : cells_) {
    out += c.layer + "\t" + std::to_string(c.t) + "\t" + std::to_string(c.count) + "\t" +
           fmt_double(c.mean) + "\t" + fmt_double(c.variance) + "\t" + fmt_double(c.sigma_hat) +
           "\t" + fmt_double(c.probability) + "\n";
  }
  return out;
}

LayerVarianceProfile LayerVarianceProfile::parse_tsv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  double tau_fraction = kDefaultTauFraction;
  double tau_var = -1.0;
  std::vector<CellStats> cells;
  bool header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto tf = line.find("tau_fraction=");
      if (tf != std::string::npos) tau_fraction = std::stod(line.substr(tf + 13));
      const auto tv = line.find("tau_var=");
      if (tv != std::string::npos) tau_var = std::stod(line.substr(tv + 8));
      continue;
    }
    if (!header) {
      if (line.rfind("layer\t", 0) != 0) throw DataError("profile file lacks a header row");
      header = true;
      continue;
    }
    std::istringstream row(line);
    CellStats c;
    std::string t, count, mean, var, hat, p;
    if (!std::getline(row, c.layer, '\t') || !std::getline(row, t, '\t') ||
        !std::getline(row, count, '\t') || !std::getline(row, mean, '\t') ||
        !std::getline(row, var, '\t') || !std::getline(row, hat, '\t') ||
        !std::getline(row, p, '\t'))
      throw DataError("profile row has fewer than 7 columns: " + line);
    try {
      c.t = std::stoi(t);
      c.count = std::stoull(count);
      c.mean = std::stod(mean);
      c.variance = std::stod(var);
    } catch (const std::exception&) {
      throw DataError("unparseable profile row: " + line);
    }
    cells.push_back(std::move(c));
  }
  LayerVarianceProfile prof = from_cells(std::move(cells), tau_fraction);
  if (tau_var >= 0.0) prof.tau_var_ = tau_var;
  return prof;
}

std::uint64_t LayerVarianceProfile::hash() const { return fnv1a64(to_tsv()); }

LayerVarianceProfile build_profile(const ActivationTap& tap, double tau_fraction) {
  if (tap.cells().empty()) throw InsufficientDataError("activation tap recorded no cells");
  std::vector<CellStats> cells;
  for (const auto& [key, acc] : tap.cells()) {
    if (acc.count < 2)
      throw InsufficientDataError("cell " + key.layer + "@" + std::to_string(key.t) + " has " +
                                  std::to_string(acc.count) + " value(s); need at least 2");
    CellStats c;
    c.layer = key.layer;
    c.t = key.t;
    c.count = acc.count;
    c.mean = acc.mean;
    c.variance = acc.variance();
    c.reservoir = acc.reservoir;
    cells.push_back(std::move(c));
  }
  return LayerVarianceProfile::from_cells(std::move(cells), tau_fraction);
}

std::vector<CellDivergence> activation_divergence(const LayerVarianceProfile& a,
                                                  const LayerVarianceProfile& b) {
  if (a.size() != b.size())
    throw ArgumentError("profiles cover different numbers of cells");
  std::vector<CellDivergence> out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const CellStats& ca = a.cells()[i];
    const CellStats& cb = b.cells()[i];
    if (ca.layer != cb.layer || ca.t != cb.t)
      throw ArgumentError("profiles cover different cells (" + ca.layer + "@" +
                          std::to_string(ca.t) + " vs " + cb.layer + "@" +
                          std::to_string(cb.t) + ")");
    CellDivergence d;
    d.layer = ca.layer;
    d.t = ca.t;
    d.variance_a = ca.variance;
    d.variance_b = cb.variance;
    d.abs_gap = std::abs(ca.variance - cb.variance);
    const double denom = std::max(ca.variance, cb.variance);
    d.rel_gap = denom > 0.0 ? d.abs_gap / denom : 0.0;

    double ma = ca.mean, va = ca.variance, mb = cb.mean, vb = cb.variance;
    if (ca.reservoir.size() >= 2 && cb.reservoir.size() >= 2) {
      const auto fa = mean_and_variance(ca.reservoir);
      const auto fb = mean_and_variance(cb.reservoir);
      ma = fa.mean, va = fa.variance, mb = fb.mean, vb = fb.variance;
    }
    d.symmetric_kl = kl_gaussian_1d(ma, va, mb, vb) + kl_gaussian_1d(mb, vb, ma, va);
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace dmq
