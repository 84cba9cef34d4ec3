// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

// Dense row-major matrices, reductions and the seeded random stream used by
// every stochastic operation in the toolkit.

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace dmq {

class Tensor2D {
 public:
  Tensor2D() = default;
  Tensor2D(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  // Throws ArgumentError unless data.size() == rows * cols.
  Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor2D identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor2D&, const Tensor2D&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Tensor2D matmul(const Tensor2D& a, const Tensor2D& b);
// a^T * b without materializing the transpose.
Tensor2D matmul_tn(const Tensor2D& a, const Tensor2D& b);
// a * b^T without materializing the transpose.
Tensor2D matmul_nt(const Tensor2D& a, const Tensor2D& b);
Tensor2D transpose(const Tensor2D& a);

// Deterministic random stream.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. It is seeded with splitmix64(seed) xor splitmix64(stream_id + c),
// so (seed, stream_id) pins the sequence on every platform. Uniform doubles
// take the top 53 bits of one engine draw. Standard normals use the
// Box-Muller transform; both outputs of each pair are used, cos branch first.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform();
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();

  // A new stream sharing this seed. Does not advance this stream.
  RngStream fork(std::uint64_t stream_id) const { return {seed_, stream_id}; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

Tensor2D gaussian_sample(RngStream& rng, std::size_t rows, std::size_t cols);

struct MeanVariance {
  double mean;
  // Population variance (divides by N, not N - 1).
  double variance;
};

// Two-pass mean and population variance. Throws ArgumentError on empty input.
MeanVariance mean_and_variance(std::span<const double> xs);

}  // namespace dmq
