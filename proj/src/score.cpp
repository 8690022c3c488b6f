#include "npksd/score.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace npksd {

int summary_dim(SummaryStat t, int m) {
  const int rest = m - 1;
  if (rest <= 0) return 0;
  return t == SummaryStat::Identity ? rest : 1;
}

Vector summary_value(SummaryStat t, const Vector& rest) {
  if (rest.size() == 0) return Vector();
  if (t == SummaryStat::Identity) return rest;
  Vector v(1);
  v[0] = rest.mean();
  return v;
}

Vector drop_coordinate(const Vector& z, int i) {
  Vector r(z.size() - 1);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    if (j != i) r[k++] = z[j];
  }
  return r;
}

int ScoreBasis::feature_count(int t_dim) const {
  if (degree < 1) {
    throw std::invalid_argument("score basis degree must be >= 1, got " +
                                std::to_string(degree));
  }
  int f = degree + 1 + t_dim;
  if (degree >= 2) f += t_dim;  // x * t_j interactions
  return f;
}

void ScoreBasis::features(double x, const Vector& t, Eigen::Ref<Vector> phi) const {
  int p = 0;
  double xp = 1.0;
  for (int d = 0; d <= degree; ++d) {
    phi[p++] = xp;
    xp *= x;
  }
  for (Eigen::Index j = 0; j < t.size(); ++j) phi[p++] = t[j];
  if (degree >= 2) {
    for (Eigen::Index j = 0; j < t.size(); ++j) phi[p++] = x * t[j];
  }
}

void ScoreBasis::features_dx(double x, const Vector& t,
                             Eigen::Ref<Vector> dphi) const {
  int p = 0;
  dphi[p++] = 0.0;
  double xp = 1.0;
  for (int d = 1; d <= degree; ++d) {
    dphi[p++] = d * xp;
    xp *= x;
  }
  for (Eigen::Index j = 0; j < t.size(); ++j) dphi[p++] = 0.0;
  if (degree >= 2) {
    for (Eigen::Index j = 0; j < t.size(); ++j) dphi[p++] = t[j];
  }
}

namespace {

void check_coordinate(int i, int m) {
  if (i < 0 || i >= m) {
    throw std::out_of_range("coordinate index " + std::to_string(i) +
                            " out of range for dimension " + std::to_string(m));
  }
}

}  // namespace

double ConditionalScoreModel::evaluate(int i, double x, const Vector& rest) const {
  check_coordinate(i, dim);
  const Vector t = summary_value(summary, rest);
  Vector phi(coefficients[i].size());
  basis.features(x, t, phi);
  return coefficients[i].dot(phi);
}

double ConditionalScoreModel::evaluate_dx(int i, double x, const Vector& rest) const {
  check_coordinate(i, dim);
  const Vector t = summary_value(summary, rest);
  Vector dphi(coefficients[i].size());
  basis.features_dx(x, t, dphi);
  return coefficients[i].dot(dphi);
}

ConditionalScoreModel fit_score_matching(const SampleMatrix& samples, SummaryStat t,
                                         const ScoreBasis& basis, double ridge) {
  const int n = static_cast<int>(samples.rows());
  const int m = static_cast<int>(samples.cols());
  if (n < 1) throw std::invalid_argument("score-matching fit needs at least 1 sample");
  if (m < 1) throw std::invalid_argument("score-matching fit needs dimension >= 1");
  if (ridge < 0.0) throw std::invalid_argument("ridge must be >= 0");

  const int t_dim = summary_dim(t, m);
  const int f = basis.feature_count(t_dim);

  ConditionalScoreModel model;
  model.summary = t;
  model.basis = basis;
  model.ridge = ridge;
  model.sample_count = n;
  model.dim = m;
  model.coefficients.resize(m);

  std::vector<std::string> failures(m);

#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(f, f);
    Vector grad = Vector::Zero(f);
    Vector phi(f), dphi(f);
    for (int l = 0; l < n; ++l) {
      const Vector rest = drop_coordinate(samples.row(l).transpose(), i);
      const Vector tv = summary_value(t, rest);
      basis.features(samples(l, i), tv, phi);
      basis.features_dx(samples(l, i), tv, dphi);
      gram.selfadjointView<Eigen::Lower>().rankUpdate(phi, 1.0);
      grad += dphi;
    }
    gram = gram.selfadjointView<Eigen::Lower>();
    gram /= static_cast<double>(n);
    grad /= static_cast<double>(n);

    Eigen::MatrixXd lhs = gram;
    lhs.diagonal().array() += 2.0 * ridge;
    const Vector theta = lhs.ldlt().solve(-grad);
    const double residual = (lhs * theta + grad).norm();
    if (!theta.allFinite() || residual > 1e-8 * std::max(1.0, grad.norm())) {
      failures[i] = "score-matching system is singular for coordinate " +
                    std::to_string(i) + " at ridge=" + std::to_string(ridge) +
                    "; use ridge > 0";
    }
    model.coefficients[i] = theta;
  }

  for (const auto& msg : failures) {
    if (!msg.empty()) throw std::runtime_error(msg);
  }
  return model;
}

ConditionalScoreModel fit_conditional_gaussian(const SampleMatrix& samples,
                                               SummaryStat t) {
  const int n = static_cast<int>(samples.rows());
  const int m = static_cast<int>(samples.cols());
  if (m < 1) throw std::invalid_argument("conditional Gaussian fit needs dimension >= 1");
  const int t_dim = summary_dim(t, m);
  if (n < t_dim + 2) {
    throw std::invalid_argument("conditional Gaussian fit needs at least dim(t)+2=" +
                                std::to_string(t_dim + 2) + " samples, got " +
                                std::to_string(n));
  }

  ConditionalScoreModel model;
  model.summary = t;
  model.basis = ScoreBasis{1};
  model.ridge = 0.0;
  model.sample_count = n;
  model.dim = m;
  model.coefficients.resize(m);

  const int p = t_dim + 1;  // design columns: intercept + t
  for (int i = 0; i < m; ++i) {
    Eigen::MatrixXd design(n, p);
    Vector response(n);
    for (int l = 0; l < n; ++l) {
      design(l, 0) = 1.0;
      const Vector rest = drop_coordinate(samples.row(l).transpose(), i);
      const Vector tv = summary_value(t, rest);
      for (int j = 0; j < t_dim; ++j) design(l, 1 + j) = tv[j];
      response[l] = samples(l, i);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < p) {
      throw std::runtime_error("rank-deficient regression design for coordinate " +
                               std::to_string(i));
    }
    const Vector beta = qr.solve(response);
    const double rss = (response - design * beta).squaredNorm();
    const double sigma2 = rss / static_cast<double>(n - t_dim - 1);
    if (sigma2 < 1e-12) {
      throw std::runtime_error("degenerate conditional for coordinate " +
                               std::to_string(i) + ": residual variance " +
                               std::to_string(sigma2));
    }
    // -(x - a - b.t)/s2  ==  (a/s2) * 1 + (-1/s2) * x + (b/s2) . t
    Vector theta(2 + t_dim);
    theta[0] = beta[0] / sigma2;
    theta[1] = -1.0 / sigma2;
    for (int j = 0; j < t_dim; ++j) theta[2 + j] = beta[1 + j] / sigma2;
    model.coefficients[i] = theta;
  }
  return model;
}

ScoreField ScoreField::exact_joint(int m, JointFn score, JointDxFn dscore) {
  ScoreField field;
  field.dim_ = m;
  field.impl_ = Joint{std::move(score), std::move(dscore)};
  return field;
}

ScoreField ScoreField::exact_conditional(int m, CondFn score, CondFn dscore) {
  ScoreField field;
  field.dim_ = m;
  field.impl_ = Conditional{std::move(score), std::move(dscore)};
  return field;
}

ScoreField ScoreField::fitted(ConditionalScoreModel model) {
  ScoreField field;
  field.dim_ = model.dim;
  field.impl_ = std::move(model);
  return field;
}

namespace {

void check_finite_input(const Vector& z) {
  if (!z.allFinite()) {
    throw std::invalid_argument("score evaluation requested at a non-finite point");
  }
}

}  // namespace

double ScoreField::score_component(const Vector& z, int i) const {
  check_coordinate(i, dim_);
  check_finite_input(z);
  if (const auto* joint = std::get_if<Joint>(&impl_)) {
    return joint->score(z)[i];
  }
  if (const auto* cond = std::get_if<Conditional>(&impl_)) {
    return cond->score(i, z[i], drop_coordinate(z, i));
  }
  const auto& model = std::get<ConditionalScoreModel>(impl_);
  return model.evaluate(i, z[i], drop_coordinate(z, i));
}

Vector ScoreField::score_vector(const Vector& z) const {
  check_finite_input(z);
  if (const auto* joint = std::get_if<Joint>(&impl_)) {
    return joint->score(z);
  }
  Vector s(dim_);
  for (int i = 0; i < dim_; ++i) {
    const Vector rest = drop_coordinate(z, i);
    if (const auto* cond = std::get_if<Conditional>(&impl_)) {
      s[i] = cond->score(i, z[i], rest);
    } else {
      s[i] = std::get<ConditionalScoreModel>(impl_).evaluate(i, z[i], rest);
    }
  }
  return s;
}

double ScoreField::score_component_dx(const Vector& z, int i) const {
  check_coordinate(i, dim_);
  check_finite_input(z);
  if (const auto* joint = std::get_if<Joint>(&impl_)) {
    if (!joint->dscore) {
      throw std::logic_error("this exact score field carries no derivative");
    }
    return joint->dscore(z, i);
  }
  if (const auto* cond = std::get_if<Conditional>(&impl_)) {
    if (!cond->dscore) {
      throw std::logic_error("this conditional score field carries no derivative");
    }
    return cond->dscore(i, z[i], drop_coordinate(z, i));
  }
  const auto& model = std::get<ConditionalScoreModel>(impl_);
  return model.evaluate_dx(i, z[i], drop_coordinate(z, i));
}

Eigen::MatrixXd ScoreField::score_matrix(const SampleMatrix& samples) const {
  if (samples.cols() != dim_) {
    throw std::invalid_argument("score field of dimension " + std::to_string(dim_) +
                                " applied to samples of dimension " +
                                std::to_string(samples.cols()));
  }
  const Eigen::Index n = samples.rows();
  Eigen::MatrixXd scores(n, dim_);
  for (Eigen::Index l = 0; l < n; ++l) {
    scores.row(l) = score_vector(samples.row(l).transpose()).transpose();
  }
  if (!scores.allFinite()) {
    throw std::runtime_error("score field produced non-finite values");
  }
  return scores;
}

double sm_objective_value(const ScoreField& field, const SampleMatrix& samples) {
  const Eigen::Index n = samples.rows();
  const int m = field.dim();
  double acc = 0.0;
  for (Eigen::Index l = 0; l < n; ++l) {
    const Vector z = samples.row(l).transpose();
    for (int i = 0; i < m; ++i) {
      const double s = field.score_component(z, i);
      const double ds = field.score_component_dx(z, i);
      acc += 0.5 * s * s + ds;
    }
  }
  return acc / (static_cast<double>(n) * static_cast<double>(m));
}

}  // namespace npksd
