#include "npksd/stein.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace npksd {

IndexDraw draw_indices(int m, int draw_size, Rng& rng) {
  if (m < 1 || draw_size < 1) {
    throw std::invalid_argument("index draw needs m >= 1 and B >= 1, got m=" +
                                std::to_string(m) + ", B=" + std::to_string(draw_size));
  }
  IndexDraw draw;
  draw.dim = m;
  draw.draw_size = draw_size;
  draw.counts.assign(m, 0);
  for (int b = 0; b < draw_size; ++b) {
    ++draw.counts[rng.below(static_cast<std::uint64_t>(m))];
  }
  return draw;
}

CoordinateWeights CoordinateWeights::uniform(int m) {
  if (m < 1) throw std::invalid_argument("weights need m >= 1");
  CoordinateWeights cw;
  cw.w = Vector::Constant(m, 1.0 / static_cast<double>(m));
  return cw;
}

CoordinateWeights CoordinateWeights::from_draw(const IndexDraw& draw) {
  CoordinateWeights cw;
  cw.w.resize(draw.dim);
  for (int i = 0; i < draw.dim; ++i) {
    cw.w[i] = static_cast<double>(draw.counts[i]) / static_cast<double>(draw.draw_size);
  }
  return cw;
}

namespace {

/// One Stein-kernel entry from precomputed score rows. `wa` = w . s(x),
/// `wb` = w . s(y), `wsq` = |w|^2. Exact symmetry in (x, y) holds bitwise:
/// every term is either even in (x - y) or flips sign twice.
template <typename RowX, typename RowY, typename RowSx, typename RowSy>
double stein_entry(const RowX& x, const RowY& y, const RowSx& sx, const RowSy& sy,
                   const Vector& w, double wa, double wb, double wsq, double inv_s2,
                   QuadForm form) {
  const double k = std::exp(-0.5 * (x - y).squaredNorm() * inv_s2);
  if (form == QuadForm::ScalarCross) {
    double wd = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) wd += w[i] * (x[i] - y[i]);
    return k * (wsq * inv_s2 - wd * wd * inv_s2 * inv_s2 + (wa - wb) * wd * inv_s2 +
                wa * wb);
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double d = x[i] - y[i];
    acc += w[i] * w[i] *
           (inv_s2 - d * d * inv_s2 * inv_s2 + (sx[i] - sy[i]) * d * inv_s2 +
            sx[i] * sy[i]);
  }
  return k * acc;
}

void check_weights(const Vector& w, int m) {
  if (static_cast<int>(w.size()) != m) {
    throw std::invalid_argument("weight vector of length " + std::to_string(w.size()) +
                                " does not match dimension " + std::to_string(m));
  }
}

double pair_kernel(const Vector& x, const Vector& y, const ScoreField& field,
                   const Vector& w, const KernelConfig& cfg, QuadForm form) {
  if (x.size() != y.size()) {
    throw std::invalid_argument("stein kernel arguments disagree in dimension: " +
                                std::to_string(x.size()) + " vs " +
                                std::to_string(y.size()));
  }
  if (static_cast<int>(x.size()) != field.dim()) {
    throw std::invalid_argument("stein kernel input dimension " +
                                std::to_string(x.size()) +
                                " does not match score field dimension " +
                                std::to_string(field.dim()));
  }
  check_weights(w, field.dim());
  const Vector sx = field.score_vector(x);
  const Vector sy = field.score_vector(y);
  if (!sx.allFinite() || !sy.allFinite()) {
    throw std::runtime_error("score field produced non-finite values");
  }
  const double inv_s2 = 1.0 / (cfg.sigma() * cfg.sigma());
  return stein_entry(x, y, sx, sy, w, w.dot(sx), w.dot(sy), w.squaredNorm(), inv_s2,
                     form);
}

}  // namespace

double stein_kernel(const Vector& x, const Vector& y, const ScoreField& field,
                    const CoordinateWeights& weights, const KernelConfig& cfg,
                    QuadForm form) {
  return pair_kernel(x, y, field, weights.w, cfg, form);
}

double joint_stein_kernel(const Vector& x, const Vector& y, const ScoreField& field,
                          const KernelConfig& cfg, QuadForm form) {
  return pair_kernel(x, y, field, Vector::Ones(field.dim()), cfg, form);
}

Eigen::MatrixXd stein_gram(const SampleMatrix& samples, const Eigen::MatrixXd& scores,
                           const Vector& weights, const KernelConfig& cfg,
                           QuadForm form, Execution exec) {
  const Eigen::Index n = samples.rows();
  const int m = static_cast<int>(samples.cols());
  check_weights(weights, m);
  if (scores.rows() != n || scores.cols() != m) {
    throw std::invalid_argument("score matrix shape does not match the sample set");
  }
  const double inv_s2 = 1.0 / (cfg.sigma() * cfg.sigma());
  const double wsq = weights.squaredNorm();
  const Vector wdots = scores * weights;  // w . s(z_a) per row

  Eigen::MatrixXd gram(n, n);
  auto fill_row = [&](Eigen::Index a) {
    for (Eigen::Index b = a; b < n; ++b) {
      const double u = stein_entry(samples.row(a), samples.row(b), scores.row(a),
                                   scores.row(b), weights, wdots[a], wdots[b], wsq,
                                   inv_s2, form);
      gram(a, b) = u;
      gram(b, a) = u;
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

double v_statistic(const Eigen::MatrixXd& gram) {
  const double n = static_cast<double>(gram.rows());
  return gram.sum() / (n * n);
}

double u_statistic(const Eigen::MatrixXd& gram) {
  const Eigen::Index n = gram.rows();
  if (n < 2) {
    throw std::invalid_argument("U-statistic needs at least 2 samples, got " +
                                std::to_string(n));
  }
  const double nn = static_cast<double>(n);
  return (gram.sum() - gram.trace()) / (nn * (nn - 1.0));
}

namespace {

Eigen::MatrixXd gram_for(const SampleMatrix& samples, const ScoreField& field,
                         const Vector& weights, const KernelConfig& cfg, QuadForm form,
                         Execution exec) {
  const KernelConfig res = cfg.resolve(samples);
  const Eigen::MatrixXd scores = field.score_matrix(samples);
  return stein_gram(samples, scores, weights, res, form, exec);
}

}  // namespace

double ksd_v(const SampleMatrix& samples, const ScoreField& field,
             const KernelConfig& cfg, QuadForm form, Execution exec) {
  return v_statistic(
      gram_for(samples, field, Vector::Ones(samples.cols()), cfg, form, exec));
}

double ksd_u(const SampleMatrix& samples, const ScoreField& field,
             const KernelConfig& cfg, QuadForm form, Execution exec) {
  return u_statistic(
      gram_for(samples, field, Vector::Ones(samples.cols()), cfg, form, exec));
}

double npksd_stat(const SampleMatrix& samples, const ScoreField& field,
                  const IndexDraw& draw, const KernelConfig& cfg, QuadForm form,
                  Execution exec) {
  if (draw.dim != static_cast<int>(samples.cols())) {
    throw std::invalid_argument("index draw over " + std::to_string(draw.dim) +
                                " coordinates does not match sample dimension " +
                                std::to_string(samples.cols()));
  }
  const CoordinateWeights w = CoordinateWeights::from_draw(draw);
  return v_statistic(gram_for(samples, field, w.w, cfg, form, exec));
}

double npksd_stat(const SampleMatrix& samples, const ConditionalScoreModel& model,
                  const IndexDraw& draw, const KernelConfig& cfg, QuadForm form,
                  Execution exec) {
  if (model.dim != static_cast<int>(samples.cols())) {
    throw std::invalid_argument("score model of dimension " + std::to_string(model.dim) +
                                " does not match sample dimension " +
                                std::to_string(samples.cols()));
  }
  return npksd_stat(samples, ScoreField::fitted(model), draw, cfg, form, exec);
}

double ksd_t_reference(const SampleMatrix& samples, const ScoreField& field,
                       const KernelConfig& cfg, QuadForm form, Execution exec) {
  const CoordinateWeights w = CoordinateWeights::uniform(static_cast<int>(samples.cols()));
  return v_statistic(gram_for(samples, field, w.w, cfg, form, exec));
}

std::vector<ConvergenceRow> convergence_probe(const ConvergenceProbe& probe) {
  if (probe.draw_sizes.empty()) {
    throw std::invalid_argument("convergence probe needs at least one draw size");
  }
  if (!probe.inject_exact && probe.fit_sizes.empty()) {
    throw std::invalid_argument("convergence probe needs fit sizes unless exact "
                                "scores are injected");
  }
  const int m = probe.target.dim();

  Rng obs_rng(derive_seed(probe.base_seed, {0x0b5e47ed}));
  const SampleMatrix observed = probe.target.sample(probe.observed_n, obs_rng);
  const KernelConfig kres = probe.kernel.resolve(observed);

  const ScoreField exact = probe.target.exact_conditional_field();
  const double reference = ksd_t_reference(observed, exact, kres, probe.form);

  const std::vector<int> fit_sizes =
      probe.inject_exact ? std::vector<int>{0} : probe.fit_sizes;

  std::vector<ConvergenceRow> rows;
  for (int fit_size : fit_sizes) {
    for (int draw_size : probe.draw_sizes) {
      std::vector<double> gaps(probe.seeds);
#pragma omp parallel for schedule(dynamic)
      for (int s = 0; s < probe.seeds; ++s) {
        ScoreField field = exact;
        if (!probe.inject_exact) {
          Rng fit_rng(derive_seed(probe.base_seed,
                                  {0xf17, static_cast<std::uint64_t>(fit_size),
                                   static_cast<std::uint64_t>(s)}));
          const SampleMatrix train = probe.target.sample(fit_size, fit_rng);
          field = ScoreField::fitted(
              fit_score_matching(train, probe.summary, probe.basis, probe.ridge));
        }
        Rng draw_rng(derive_seed(probe.base_seed,
                                 {0xd4a8, static_cast<std::uint64_t>(fit_size),
                                  static_cast<std::uint64_t>(draw_size),
                                  static_cast<std::uint64_t>(s)}));
        const IndexDraw draw = draw_indices(m, draw_size, draw_rng);
        const double stat = npksd_stat(observed, field, draw, kres, probe.form,
                                       Execution::Serial);
        gaps[s] = std::abs(stat - reference);
      }
      double mean = 0.0;
      for (double g : gaps) mean += g;
      mean /= static_cast<double>(gaps.size());
      double var = 0.0;
      for (double g : gaps) var += (g - mean) * (g - mean);
      const double sd = gaps.size() > 1
                            ? std::sqrt(var / static_cast<double>(gaps.size() - 1))
                            : 0.0;
      rows.push_back(ConvergenceRow{fit_size, draw_size, mean, sd});
    }
  }
  return rows;
}

}  // namespace npksd
