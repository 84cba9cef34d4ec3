// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dmq/error.hpp"

namespace dmq {

GaussianFit fit_gaussian(const Tensor2D& samples) {
  const std::size_t n = samples.rows();
  const std::size_t d = samples.cols();
  if (n < 2) throw ArgumentError("fit_gaussian needs at least 2 samples");
  GaussianFit fit{std::vector<double>(d, 0.0), Tensor2D(d, d), n};
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) fit.mu[c] += samples(r, c);
  for (double& m : fit.mu) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      const double di = samples(r, i) - fit.mu[i];
      for (std::size_t j = i; j < d; ++j) fit.sigma(i, j) += di * (samples(r, j) - fit.mu[j]);
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      fit.sigma(i, j) /= static_cast<double>(n - 1);
      fit.sigma(j, i) = fit.sigma(i, j);
    }
  }
  return fit;
}

GaussianFit make_gaussian_fit(std::vector<double> mu, Tensor2D sigma, std::size_t n) {
  const std::size_t d = mu.size();
  if (sigma.rows() != d || sigma.cols() != d)
    throw ArgumentError("covariance shape does not match mean dimension");
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(sigma(i, j) - sigma(j, i)) > 1e-12)
        throw ArgumentError("covariance is not symmetric");
  return {std::move(mu), std::move(sigma), n};
}

EigenDecomposition jacobi_eigen(const Tensor2D& sym, double tol, int max_sweeps) {
  const std::size_t n = sym.rows();
  if (sym.cols() != n) throw ArgumentError("jacobi_eigen needs a square matrix");
  Tensor2D a = sym;
  Tensor2D v = Tensor2D::identity(n);
  double norm = 0.0;
  for (double x : a.values()) norm += x * x;
  norm = std::sqrt(norm);

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  int sweeps = 0;
  while (sweeps < max_sweeps && off_norm() > tol * norm) {
    ++sweeps;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });
  EigenDecomposition out{std::vector<double>(n), Tensor2D(n, n), sweeps};
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = v(r, order[k]);
  }
  return out;
}

namespace {

// V diag(f(lambda)) V^T
template <typename F>
Tensor2D spectral_map(const EigenDecomposition& e, F f) {
  const std::size_t n = e.values.size();
  Tensor2D out(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const double fk = f(e.values[k]);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) out(i, j) += fk * e.vectors(i, k) * e.vectors(j, k);
  }
  return out;
}

void symmetrize(Tensor2D& m) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double avg = 0.5 * (m(i, j) + m(j, i));
      m(i, j) = m(j, i) = avg;
    }
}

double trace(const Tensor2D& m) {
  double t = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) t += m(i, i);
  return t;
}

void check_dims(const GaussianFit& a, const GaussianFit& b) {
  if (a.dim() != b.dim() || a.sigma.rows() != a.dim() || b.sigma.rows() != b.dim())
    throw ArgumentError("Gaussian fits have different dimensions");
}

// Eigendecomposition with the ridge rule applied when the matrix is singular.
EigenDecomposition regularized_eigen(const Tensor2D& sigma) {
  EigenDecomposition e = jacobi_eigen(sigma);
  if (e.values.empty()) return e;
  const double lo = e.values.front();
  const double hi = e.values.back();
  if (hi <= 0.0 || lo <= 1e-12 * hi) {
    const double tr = trace(sigma);
    const double ridge = tr > 0.0 ? 1e-6 * tr / static_cast<double>(sigma.rows()) : 1e-12;
    for (double& v : e.values) v = std::max(v, 0.0) + ridge;
  }
  return e;
}

}  // namespace

Tensor2D sqrtm_psd(const Tensor2D& sym) {
  Tensor2D s = spectral_map(jacobi_eigen(sym),
                            [](double l) { return std::sqrt(std::max(l, 0.0)); });
  symmetrize(s);
  return s;
}

double frechet_distance(const GaussianFit& a, const GaussianFit& b) {
  check_dims(a, b);
  double mean_term = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double d = a.mu[i] - b.mu[i];
    mean_term += d * d;
  }
  const Tensor2D root_a = sqrtm_psd(a.sigma);
  Tensor2D inner = matmul(matmul(root_a, b.sigma), root_a);
  symmetrize(inner);
  const double cross = trace(sqrtm_psd(inner));
  const double trace_term = trace(a.sigma) + trace(b.sigma) - 2.0 * cross;
  return mean_term + std::max(0.0, trace_term);
}

double kl_gaussian(const GaussianFit& a, const GaussianFit& b) {
  check_dims(a, b);
  const std::size_t d = a.dim();
  const EigenDecomposition ea = regularized_eigen(a.sigma);
  const EigenDecomposition eb = regularized_eigen(b.sigma);
  const Tensor2D b_inv = spectral_map(eb, [](double l) { return 1.0 / l; });
  // Rebuild a's covariance from its (possibly ridged) spectrum.
  const Tensor2D sa = spectral_map(ea, [](double l) { return l; });

  const double tr_term = trace(matmul(b_inv, sa));
  double quad = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      quad += (b.mu[i] - a.mu[i]) * b_inv(i, j) * (b.mu[j] - a.mu[j]);
  double logdet_a = 0.0, logdet_b = 0.0;
  for (double l : ea.values) logdet_a += std::log(l);
  for (double l : eb.values) logdet_b += std::log(l);
  const double kl = 0.5 * (tr_term + quad - static_cast<double>(d) + logdet_b - logdet_a);
  return std::max(0.0, kl);
}

double kl_gaussian_1d(double mean_a, double var_a, double mean_b, double var_b) {
  GaussianFit a{{mean_a}, Tensor2D(1, 1, var_a), 0};
  GaussianFit b{{mean_b}, Tensor2D(1, 1, var_b), 0};
  return kl_gaussian(a, b);
}

}  // namespace dmq
