#include "npksd/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace npksd {

KernelConfig KernelConfig::fixed(double sigma) {
  if (!std::isfinite(sigma) || sigma <= 0.0) {
    throw std::invalid_argument("kernel bandwidth must be finite and > 0, got " +
                                std::to_string(sigma));
  }
  KernelConfig cfg;
  cfg.bandwidth = sigma;
  return cfg;
}

double KernelConfig::sigma() const {
  if (!bandwidth) {
    throw std::logic_error(
        "kernel bandwidth not resolved; resolve() against a sample set first");
  }
  return *bandwidth;
}

KernelConfig KernelConfig::resolve(const SampleMatrix& samples) const {
  if (bandwidth) return *this;
  return fixed(median_heuristic(samples));
}

namespace {

void check_same_dim(const Vector& x, const Vector& y) {
  if (x.size() != y.size()) {
    throw std::invalid_argument("kernel arguments disagree in dimension: x has " +
                                std::to_string(x.size()) + " entries, y has " +
                                std::to_string(y.size()));
  }
}

}  // namespace

double eval_kernel(const Vector& x, const Vector& y, const KernelConfig& cfg) {
  check_same_dim(x, y);
  const double s2 = cfg.sigma() * cfg.sigma();
  return std::exp(-(x - y).squaredNorm() / (2.0 * s2));
}

KernelPartials kernel_partials(const Vector& x, const Vector& y, int i, int j,
                               const KernelConfig& cfg) {
  check_same_dim(x, y);
  const int m = static_cast<int>(x.size());
  if (i < 0 || i >= m || j < 0 || j >= m) {
    throw std::out_of_range("coordinate index out of range: i=" + std::to_string(i) +
                            ", j=" + std::to_string(j) + ", dimension " +
                            std::to_string(m));
  }
  const double s2 = cfg.sigma() * cfg.sigma();
  const double k = std::exp(-(x - y).squaredNorm() / (2.0 * s2));
  const double di = x[i] - y[i];
  const double dj = x[j] - y[j];
  KernelPartials p;
  p.k = k;
  p.dxi = -di / s2 * k;
  p.dyj = dj / s2 * k;
  p.dxi_dyj = ((i == j ? 1.0 / s2 : 0.0) - di * dj / (s2 * s2)) * k;
  return p;
}

double median_heuristic(const SampleMatrix& samples) {
  const Eigen::Index n = samples.rows();
  if (n < 2) {
    throw std::invalid_argument("median heuristic needs at least 2 samples, got " +
                                std::to_string(n));
  }
  std::vector<double> sq;
  sq.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1) / 2);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = a + 1; b < n; ++b) {
      sq.push_back((samples.row(a) - samples.row(b)).squaredNorm());
    }
  }
  const std::size_t half = sq.size() / 2;
  std::nth_element(sq.begin(), sq.begin() + half, sq.end());
  double med = sq[half];
  if (sq.size() % 2 == 0) {
    const double lower = *std::max_element(sq.begin(), sq.begin() + half);
    med = 0.5 * (lower + med);
  }
  if (med <= 0.0) return 1.0;
  return std::sqrt(med / 2.0);
}

Eigen::MatrixXd kernel_gram(const SampleMatrix& samples, const KernelConfig& cfg,
                            Execution exec) {
  const KernelConfig res = cfg.resolve(samples);
  const double inv_2s2 = 1.0 / (2.0 * res.sigma() * res.sigma());
  const Eigen::Index n = samples.rows();
  Eigen::MatrixXd gram(n, n);
  auto fill_row = [&](Eigen::Index a) {
    gram(a, a) = 1.0;
    for (Eigen::Index b = a + 1; b < n; ++b) {
      const double k =
          std::exp(-(samples.row(a) - samples.row(b)).squaredNorm() * inv_2s2);
      gram(a, b) = k;
      gram(b, a) = k;
    }
  };
  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(dynamic, 8)
    for (Eigen::Index a = 0; a < n; ++a) fill_row(a);
  } else {
    for (Eigen::Index a = 0; a < n; ++a) fill_row(a);
  }
  return gram;
}

}  // namespace npksd
