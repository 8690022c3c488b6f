#pragma once

#include <optional>

#include "npksd/types.hpp"

namespace npksd {

enum class KernelFamily { Gaussian };

/// Gaussian RKHS kernel k(x, y) = exp(-|x - y|^2 / (2 sigma^2)).
/// The bandwidth is either an explicit sigma > 0 or left empty, in which
/// case it is resolved with the median heuristic on a sample set. Tests
/// always resolve on the observed sample set, never on generator draws,
/// and the resolved value is echoed in every TestReport.
struct KernelConfig {
  KernelFamily family = KernelFamily::Gaussian;
  std::optional<double> bandwidth;  // empty = median heuristic

  static KernelConfig fixed(double sigma);
  static KernelConfig median() { return KernelConfig{}; }

  bool resolved() const { return bandwidth.has_value(); }
  double sigma() const;  // throws unless resolved
  KernelConfig resolve(const SampleMatrix& samples) const;
};

/// Kernel value in (0, 1]; symmetric in x and y.
double eval_kernel(const Vector& x, const Vector& y, const KernelConfig& cfg);

/// Analytic partial derivatives of the Gaussian kernel:
///   dxi     = d k / d x_i   = -(x_i - y_i) / sigma^2 * k
///   dyj     = d k / d y_j   =  (x_j - y_j) / sigma^2 * k
///   dxi_dyj = d^2 k / d x_i d y_j
///           = [1{i==j} / sigma^2 - (x_i - y_i)(x_j - y_j) / sigma^4] * k
struct KernelPartials {
  double k = 0.0;
  double dxi = 0.0;
  double dyj = 0.0;
  double dxi_dyj = 0.0;
};

KernelPartials kernel_partials(const Vector& x, const Vector& y, int i, int j,
                               const KernelConfig& cfg);

/// sigma = sqrt(median of squared pairwise distances / 2); returns 1.0 when
/// the median distance is zero (all points coincide). Needs >= 2 rows.
double median_heuristic(const SampleMatrix& samples);

/// Symmetric Gram matrix K[a][b] = k(x_a, x_b). Parallel assembly is over
/// rows of the upper triangle and is bit-identical to the serial order.
Eigen::MatrixXd kernel_gram(const SampleMatrix& samples, const KernelConfig& cfg,
                            Execution exec = Execution::Parallel);

}  // namespace npksd
