// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

// Gaussian-fit sample metrics: Frechet distance and KL divergence.

#pragma once

#include <cstddef>
#include <vector>

#include "dmq/numeric.hpp"

namespace dmq {

struct GaussianFit {
  std::vector<double> mu;
  Tensor2D sigma;  // d x d, symmetric
  std::size_t n = 0;

  std::size_t dim() const noexcept { return mu.size(); }
};

// Sample mean and unbiased (n - 1) covariance, symmetrized. Throws
// ArgumentError for fewer than two rows.
GaussianFit fit_gaussian(const Tensor2D& samples);

// Throws ArgumentError unless sigma is d x d and symmetric within 1e-12.
GaussianFit make_gaussian_fit(std::vector<double> mu, Tensor2D sigma, std::size_t n = 0);

struct EigenDecomposition {
  std::vector<double> values;  // ascending
  Tensor2D vectors;            // column k pairs with values[k]
  int sweeps = 0;
};

// Cyclic Jacobi rotations on a symmetric matrix. Stops when the off-diagonal
// Frobenius norm drops below tol * ||A||_F or after max_sweeps sweeps.
EigenDecomposition jacobi_eigen(const Tensor2D& sym, double tol = 1e-12, int max_sweeps = 100);

// Principal square root of a symmetric PSD matrix; negative eigenvalues are
// clamped to zero.
Tensor2D sqrtm_psd(const Tensor2D& sym);

// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2).
double frechet_distance(const GaussianFit& a, const GaussianFit& b);

// KL(a || b) in closed form. A singular covariance (smallest eigenvalue below
// 1e-12 of the largest) gets a ridge of 1e-6 * trace / d added to its
// diagonal, or 1e-12 when the trace is zero.
double kl_gaussian(const GaussianFit& a, const GaussianFit& b);

double kl_gaussian_1d(double mean_a, double var_a, double mean_b, double var_b);

}  // namespace dmq
