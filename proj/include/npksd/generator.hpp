#pragma once

#include <memory>
#include <string>
#include <variant>

#include "npksd/rng.hpp"
#include "npksd/score.hpp"
#include "npksd/types.hpp"

namespace npksd {

/// Synthetic target distributions and samplers, plus exact score oracles
/// where a density exists.
///
///  - gvd(m, sigma_per): N(0, (1 + sigma_per) I); sigma_per = 0 is the null.
///  - mog(m, rho_per [, mu1, mu2]): two-component 1/2-1/2 Gaussian mixture;
///    both components get rho_per on the first off-diagonal of an identity
///    covariance (validated positive definite at construction). Default
///    means are +/-(2, 0, ..., 0).
///  - real_subsample(data): draws rows of a fixed dataset with replacement.
///  - sgld(target, step, burn_in, thinning): Langevin chain
///    x <- x + (step/2) s(x) + sqrt(step) xi driven by the target's exact
///    score, emitting every `thinning`-th state after `burn_in` steps.
class GeneratorSpec {
 public:
  static GeneratorSpec gvd(int m, double sigma_per);
  static GeneratorSpec mog(int m, double rho_per);
  static GeneratorSpec mog(int m, double rho_per, Vector mu1, Vector mu2);
  static GeneratorSpec real_subsample(SampleMatrix data);
  static GeneratorSpec sgld(GeneratorSpec target, double step = 0.01,
                            int burn_in = 1000, int thinning = 10);

  int dim() const { return dim_; }

  /// count x m draws; identical (spec, count, seed) give identical matrices.
  SampleMatrix sample(int count, Rng& rng) const;

  /// Exact joint score s(x) = grad log q(x), with the diagonal derivative
  /// d s_i / d x_i. SGLD delegates to its target; RealSubsample has no
  /// density and throws.
  ScoreField exact_score() const;
  bool has_exact_score() const;

  /// Exact conditional score of coordinate i given the rest, computed from
  /// the conditional law (Schur complement for Gaussians, responsibility-
  /// weighted 1-D mixture for MoG) rather than from the joint gradient.
  double exact_conditional_score(int i, double x, const Vector& rest) const;
  ScoreField exact_conditional_field() const;

  std::string describe() const;

 private:
  struct Gvd {
    int m;
    double sigma_per;
  };
  struct Mog {
    int m;
    double rho_per;
    Vector mu1, mu2;
    Eigen::MatrixXd cov;        // shared by both components
    Eigen::MatrixXd precision;  // cov^{-1}
    Eigen::MatrixXd chol;       // lower factor of cov
  };
  struct Real {
    SampleMatrix data;
  };
  struct Sgld {
    std::shared_ptr<GeneratorSpec> target;
    double step;
    int burn_in;
    int thinning;
  };

  GeneratorSpec() = default;

  int dim_ = 0;
  std::variant<Gvd, Mog, Real, Sgld> impl_;
};

/// CSV with a header row and one sample per row of decimal reals.
/// Malformed rows abort with the 1-based line number.
SampleMatrix load_csv(const std::string& path);

}  // namespace npksd
