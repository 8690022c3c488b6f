#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "npksd/generator.hpp"
#include "npksd/stein.hpp"

namespace npksd {

enum class ScoreFit { ScoreMatching, GaussianConditional };

struct StatisticOptions {
  SummaryStat summary = SummaryStat::Identity;
  ScoreFit fit = ScoreFit::ScoreMatching;
  ScoreBasis basis{2};
  double ridge = 1e-4;
  KernelConfig kernel = KernelConfig::median();
  QuadForm form = QuadForm::ScalarCross;
};

/// "npksd", "npksd_mean" or "npksd_g" depending on the summary statistic
/// and the fit family.
std::string variant_name(const StatisticOptions& options);

struct TestConfig {
  double alpha = 0.05;
  int n = 0;  // observed size; 0 = take from the data
  int N = 0;  // generator sample size
  int B = 0;  // coordinate re-sample size; 0 = m
  int b = 200;  // null replicates / bootstrap draws
  std::uint64_t seed = 0;
  StatisticOptions stat;
};

struct TestReport {
  std::string variant;
  double statistic = 0.0;
  std::vector<double> null_draws;
  double null_quantile = 0.0;
  double p_value = 1.0;
  bool reject = false;
  double alpha = 0.0;
  int n = 0;
  int N = 0;
  int B = 0;
  int b = 0;
  std::uint64_t seed = 0;
  double bandwidth = 0.0;
  double wall_time_ms = 0.0;

  nlohmann::json to_json() const;
};

/// Order statistic at index ceil(level * b), 1-indexed; draws are copied
/// and sorted.
double empirical_quantile(std::vector<double> draws, double level);

/// Monte Carlo p-value (1 + #{draws >= statistic}) / (#draws + 1).
double mc_p_value(double statistic, const std::vector<double>& draws);

/// NP-KSD Monte Carlo test:
///  1. draw N generator samples and fit the conditional score model once;
///  2. fresh index draw, statistic tau on the observed set;
///  3. b replicates, each a fresh n-sample from the generator and a fresh
///     index draw, scored with the same fitted model;
///  4. reject iff tau > the empirical (1-alpha)-quantile of the replicates.
/// Replicates run in a work pool over derived seeds; results do not depend
/// on thread count.
TestReport npksd_test(const SampleMatrix& observed, const GeneratorSpec& generator,
                      const TestConfig& cfg);

/// Exact-score KSD with a wild-bootstrap null: tau* = (1/n^2) W' U W with
/// i.i.d. Rademacher weights W over the fixed Stein Gram U.
TestReport ksd_wild_bootstrap_test(const SampleMatrix& observed,
                                   const ScoreField& exact_score,
                                   const TestConfig& cfg);

/// Wild-bootstrap draws for a fixed Gram; with unit_weights every draw
/// equals the V-statistic itself (test hook).
std::vector<double> wild_bootstrap_null(const Eigen::MatrixXd& gram, int count,
                                        std::uint64_t seed, bool unit_weights = false);

/// Unbiased MMD^2 estimate between two sample sets (within-set sums skip
/// the diagonal). An unresolved bandwidth is resolved on sp.
double mmd_u_stat(const SampleMatrix& sp, const SampleMatrix& sq,
                  const KernelConfig& cfg);

/// Plug-in (biased) MMD^2 estimate |mu_p - mu_q|^2.
double mmd_v_stat(const SampleMatrix& sp, const SampleMatrix& sq,
                  const KernelConfig& cfg);

/// Exact two-sample permutation test: pool, permute, re-split to the
/// original sizes, recompute MMD^2_u. The identity permutation is included
/// as draw 0. Valid at any size ratio by exchangeability.
TestReport mmd_permutation_test(const SampleMatrix& sp, const SampleMatrix& sq,
                                const TestConfig& cfg, int n_perm);

/// MMD test calibrated against the generator at the generated-sample size:
/// tau = MMD^2_v(observed, S_N); the null draws are MMD^2_v between fresh
/// (N, N) generator pairs. With n << N the null spread is far smaller than
/// the statistic's, so the type-I error grows with N — the behaviour the
/// plain-MMD baseline is meant to exhibit. For a size-correct test use
/// mmd_permutation_test.
TestReport mmd_generator_test(const SampleMatrix& observed,
                              const GeneratorSpec& generator, const TestConfig& cfg);

/// Aggregated multi-bandwidth MMD test: per-bandwidth permutation
/// quantiles at level u * w_lambda with uniform weights, the common level
/// u calibrated by bisection so the B2-estimated probability of any
/// bandwidth rejecting stays <= alpha. B1 permutations estimate the
/// quantiles, B2 independent permutations estimate the rejection
/// probability. Reject iff some bandwidth exceeds its quantile.
TestReport mmdagg_test(const SampleMatrix& sp, const SampleMatrix& sq,
                       const std::vector<double>& bandwidths, int B1, int B2,
                       const TestConfig& cfg);

/// Median-heuristic ladder sigma * 2^k for k in [-2, 2].
std::vector<double> bandwidth_ladder(const SampleMatrix& samples);

}  // namespace npksd
