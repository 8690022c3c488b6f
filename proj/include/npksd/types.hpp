#pragma once

#include <Eigen/Dense>

namespace npksd {

/// n x m matrix of samples, one sample per row.
using SampleMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Execution policy for data-parallel kernels. Serial is the reference
/// implementation; Parallel must produce bit-identical results (every
/// entry is computed independently, there is no shared reduction).
enum class Execution { Serial, Parallel };

}  // namespace npksd
