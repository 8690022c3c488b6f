#pragma once

#include <functional>
#include <variant>
#include <vector>

#include "npksd/types.hpp"

namespace npksd {

/// Summary statistic t(x^{-i}) a conditional score is conditioned on.
/// Identity keeps the full (m-1)-vector; Mean compresses it to its average.
enum class SummaryStat { Identity, Mean };

/// Dimension of t(x^{-i}) for an m-dimensional problem (0 when m == 1).
int summary_dim(SummaryStat t, int m);

/// t applied to the remaining coordinates.
Vector summary_value(SummaryStat t, const Vector& rest);

/// z with coordinate i removed.
Vector drop_coordinate(const Vector& z, int i);

/// Feature map phi(x, t) for the linear-in-parameters score model:
/// {1, x, ..., x^degree} followed by {t_j}, and from degree 2 on also the
/// interactions {x * t_j}. Every feature has an analytic d/dx.
struct ScoreBasis {
  int degree = 2;

  int feature_count(int t_dim) const;
  void features(double x, const Vector& t, Eigen::Ref<Vector> phi) const;
  void features_dx(double x, const Vector& t, Eigen::Ref<Vector> dphi) const;
};

/// Per-coordinate linear conditional score model,
///   s^(i)(x | t) = theta_i . phi(x, t),
/// fitted in closed form; immutable after the fit and safe to share.
struct ConditionalScoreModel {
  SummaryStat summary = SummaryStat::Identity;
  ScoreBasis basis;
  double ridge = 0.0;
  int sample_count = 0;                // N used for the fit
  int dim = 0;                         // m
  std::vector<Vector> coefficients;    // theta_i, one per coordinate

  double evaluate(int i, double x, const Vector& rest) const;
  double evaluate_dx(int i, double x, const Vector& rest) const;
};

/// Closed-form ridge solve of the integration-by-parts score-matching
/// objective (1/N) sum_l [ (theta.phi)^2 / 2 + theta.dphi ] + ridge |theta|^2
/// per coordinate: theta_i = -(G_i + 2 ridge I)^{-1} g_i with
/// G_i = (1/N) sum phi phi^T and g_i = (1/N) sum dphi.
ConditionalScoreModel fit_score_matching(const SampleMatrix& samples, SummaryStat t,
                                         const ScoreBasis& basis, double ridge);

/// Gaussian conditional model: least squares of x^(i) on [1, t(x^{-i})]
/// gives mean a_i + b_i.t with residual variance s2_i (denominator
/// N - dim(t) - 1); the score is -(x - a_i - b_i.t) / s2_i, expressed as a
/// degree-1 linear score model.
ConditionalScoreModel fit_conditional_gaussian(const SampleMatrix& samples,
                                               SummaryStat t);

/// Uniform interface over exact scores (known densities) and fitted models.
/// Supplies the per-coordinate score s^(i)(z) and, where available, its
/// derivative in z_i (needed only by the score-matching diagnostic).
class ScoreField {
 public:
  using JointFn = std::function<Vector(const Vector&)>;
  using JointDxFn = std::function<double(const Vector&, int)>;
  using CondFn = std::function<double(int, double, const Vector&)>;

  static ScoreField exact_joint(int m, JointFn score, JointDxFn dscore = nullptr);
  static ScoreField exact_conditional(int m, CondFn score, CondFn dscore = nullptr);
  static ScoreField fitted(ConditionalScoreModel model);

  int dim() const { return dim_; }

  double score_component(const Vector& z, int i) const;
  Vector score_vector(const Vector& z) const;
  double score_component_dx(const Vector& z, int i) const;

  /// n x m matrix S[l][i] = s^(i)(z_l); the precomputation every Stein
  /// Gram assembly starts from.
  Eigen::MatrixXd score_matrix(const SampleMatrix& samples) const;

 private:
  struct Joint {
    JointFn score;
    JointDxFn dscore;
  };
  struct Conditional {
    CondFn score;
    CondFn dscore;
  };

  int dim_ = 0;
  std::variant<Joint, Conditional, ConditionalScoreModel> impl_;
};

/// Hyvarinen objective (1/(N m)) sum_l sum_i [ s^(i)(z_l)^2 / 2 +
/// d/dx s^(i)(z_l) ], a fit diagnostic.
double sm_objective_value(const ScoreField& field, const SampleMatrix& samples);

}  // namespace npksd
