#pragma once

#include <cstdint>
#include <vector>

#include "npksd/generator.hpp"
#include "npksd/kernel.hpp"
#include "npksd/rng.hpp"
#include "npksd/score.hpp"
#include "npksd/types.hpp"

namespace npksd {

/// B coordinate indices drawn with replacement from [m], kept as counts.
struct IndexDraw {
  int dim = 0;              // m
  int draw_size = 0;        // B
  std::vector<int> counts;  // k_i, sum(k_i) == B
};

IndexDraw draw_indices(int m, int draw_size, Rng& rng);

/// Nonnegative coordinate weights summing to 1. Uniform gives w_i = 1/m;
/// FromDraw gives w_i = k_i / B, the exact weight profile of averaging the
/// per-coordinate operators over a replacement draw.
struct CoordinateWeights {
  Vector w;

  static CoordinateWeights uniform(int m);
  static CoordinateWeights from_draw(const IndexDraw& draw);
};

/// Quadratic form of the Stein kernel. ScalarCross is the full (i, j)
/// double sum — the inner product of scalar-valued operator images — and
/// is the default for the coordinate-weighted statistics. Diagonal keeps
/// only i == j terms (the vector-valued, classic form). The two coincide
/// at m = 1.
enum class QuadForm { ScalarCross, Diagonal };

/// Stein kernel of the coordinate-weighted score operator
/// A g = sum_i w_i (d_i g + g s^(i)):
///   u(x, y) = sum_{i,j} w_i w_j [ d_{x_i} d_{y_j} k
///                                + s^(i)(x) d_{y_j} k + s^(j)(y) d_{x_i} k
///                                + s^(i)(x) s^(j)(y) k ].
double stein_kernel(const Vector& x, const Vector& y, const ScoreField& field,
                    const CoordinateWeights& weights, const KernelConfig& cfg,
                    QuadForm form = QuadForm::ScalarCross);

/// Unweighted Stein kernel of the joint score operator. Diagonal is the
/// classic form used by the exact-score KSD statistics; ScalarCross is the
/// cross-term expansion, which equals m^2 times the Uniform-weighted
/// kernel above.
double joint_stein_kernel(const Vector& x, const Vector& y, const ScoreField& field,
                          const KernelConfig& cfg, QuadForm form = QuadForm::Diagonal);

/// n x n matrix of Stein-kernel evaluations. `scores` is the n x m matrix
/// of per-sample score components. Parallel assembly works row blocks of
/// the upper triangle and is bit-identical to the serial order.
Eigen::MatrixXd stein_gram(const SampleMatrix& samples, const Eigen::MatrixXd& scores,
                           const Vector& weights, const KernelConfig& cfg,
                           QuadForm form, Execution exec = Execution::Parallel);

double v_statistic(const Eigen::MatrixXd& gram);
double u_statistic(const Eigen::MatrixXd& gram);

/// KSD^2 estimates with the exact joint score: V-statistic (1/n^2) and
/// U-statistic (1/(n(n-1)), off-diagonal only). An unresolved kernel
/// bandwidth is resolved on `samples`.
double ksd_v(const SampleMatrix& samples, const ScoreField& field,
             const KernelConfig& cfg, QuadForm form = QuadForm::Diagonal,
             Execution exec = Execution::Parallel);
double ksd_u(const SampleMatrix& samples, const ScoreField& field,
             const KernelConfig& cfg, QuadForm form = QuadForm::Diagonal,
             Execution exec = Execution::Parallel);

/// NP-KSD^2 estimate (1/n^2) sum_{a,b} u(z_a, z_b) with FromDraw weights.
double npksd_stat(const SampleMatrix& samples, const ConditionalScoreModel& model,
                  const IndexDraw& draw, const KernelConfig& cfg,
                  QuadForm form = QuadForm::ScalarCross,
                  Execution exec = Execution::Parallel);
double npksd_stat(const SampleMatrix& samples, const ScoreField& field,
                  const IndexDraw& draw, const KernelConfig& cfg,
                  QuadForm form = QuadForm::ScalarCross,
                  Execution exec = Execution::Parallel);

/// KSD_t^2 reference: Uniform weights and exact conditional scores.
double ksd_t_reference(const SampleMatrix& samples, const ScoreField& field,
                       const KernelConfig& cfg, QuadForm form = QuadForm::ScalarCross,
                       Execution exec = Execution::Parallel);

/// Convergence probe: |NP-KSD^2 - KSD_t^2| on a fixed observed set, as a
/// function of the fit size N and the re-sample size B, averaged over
/// seeds. With inject_exact the fitted model is replaced by the exact
/// conditional scores, so only the index-draw randomness remains.
struct ConvergenceProbe {
  explicit ConvergenceProbe(GeneratorSpec target_spec) : target(std::move(target_spec)) {}

  GeneratorSpec target;
  int observed_n = 100;
  std::vector<int> fit_sizes;   // N grid
  std::vector<int> draw_sizes;  // B grid
  int seeds = 20;
  std::uint64_t base_seed = 0;
  bool inject_exact = false;
  SummaryStat summary = SummaryStat::Identity;
  ScoreBasis basis{2};
  double ridge = 1e-4;
  KernelConfig kernel = KernelConfig::median();
  QuadForm form = QuadForm::ScalarCross;
};

struct ConvergenceRow {
  int fit_size;
  int draw_size;
  double mean_abs_gap;
  double sd_abs_gap;
};

std::vector<ConvergenceRow> convergence_probe(const ConvergenceProbe& probe);

}  // namespace npksd
