#include "npksd/generator.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace npksd {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;

Eigen::MatrixXd tridiagonal_cov(int m, double rho) {
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(m, m);
  for (int i = 0; i + 1 < m; ++i) {
    cov(i, i + 1) = rho;
    cov(i + 1, i) = rho;
  }
  return cov;
}

double log_gaussian_density(const Vector& x, const Vector& mu,
                            const Eigen::MatrixXd& precision, double log_det_cov) {
  const Vector d = x - mu;
  return -0.5 * (d.dot(precision * d) + log_det_cov +
                 kLogTwoPi * static_cast<double>(x.size()));
}

/// Conditional law of coordinate i of N(mu, cov) given the rest:
/// mean mu_i + c . (rest - mu_{-i}) with c = cov_{i,-i} cov_{-i,-i}^{-1},
/// variance the Schur complement.
struct GaussianConditional {
  double mean;
  double var;
};

GaussianConditional gaussian_conditional(const Vector& mu, const Eigen::MatrixXd& cov,
                                         int i, const Vector& rest) {
  const int m = static_cast<int>(mu.size());
  if (m == 1) return {mu[0], cov(0, 0)};
  Eigen::MatrixXd cov_rr(m - 1, m - 1);
  Vector cov_ir(m - 1), mu_r(m - 1);
  for (int a = 0, ka = 0; a < m; ++a) {
    if (a == i) continue;
    cov_ir[ka] = cov(i, a);
    mu_r[ka] = mu[a];
    for (int b = 0, kb = 0; b < m; ++b) {
      if (b == i) continue;
      cov_rr(ka, kb) = cov(a, b);
      ++kb;
    }
    ++ka;
  }
  const Vector c = cov_rr.ldlt().solve(cov_ir);
  GaussianConditional out;
  out.mean = mu[i] + c.dot(rest - mu_r);
  out.var = cov(i, i) - c.dot(cov_ir);
  return out;
}

}  // namespace

GeneratorSpec GeneratorSpec::gvd(int m, double sigma_per) {
  if (m < 1) throw std::invalid_argument("gvd dimension must be >= 1");
  if (sigma_per <= -1.0) {
    throw std::invalid_argument("gvd variance 1 + sigma_per must be positive, got "
                                "sigma_per=" + std::to_string(sigma_per));
  }
  GeneratorSpec spec;
  spec.dim_ = m;
  spec.impl_ = Gvd{m, sigma_per};
  return spec;
}

GeneratorSpec GeneratorSpec::mog(int m, double rho_per) {
  Vector mu1 = Vector::Zero(m), mu2 = Vector::Zero(m);
  mu1[0] = 2.0;
  mu2[0] = -2.0;
  return mog(m, rho_per, std::move(mu1), std::move(mu2));
}

GeneratorSpec GeneratorSpec::mog(int m, double rho_per, Vector mu1, Vector mu2) {
  if (m < 1) throw std::invalid_argument("mog dimension must be >= 1");
  if (mu1.size() != m || mu2.size() != m) {
    throw std::invalid_argument("mog component means must have length m");
  }
  Mog mog;
  mog.m = m;
  mog.rho_per = rho_per;
  mog.mu1 = std::move(mu1);
  mog.mu2 = std::move(mu2);
  mog.cov = tridiagonal_cov(m, rho_per);
  Eigen::LLT<Eigen::MatrixXd> llt(mog.cov);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("mog covariance with off-diagonal rho_per=" +
                                std::to_string(rho_per) + " at m=" +
                                std::to_string(m) + " is not positive definite");
  }
  mog.chol = llt.matrixL();
  mog.precision = llt.solve(Eigen::MatrixXd::Identity(m, m));
  GeneratorSpec spec;
  spec.dim_ = m;
  spec.impl_ = std::move(mog);
  return spec;
}

GeneratorSpec GeneratorSpec::real_subsample(SampleMatrix data) {
  if (data.rows() < 1) {
    throw std::invalid_argument("real_subsample dataset must be nonempty");
  }
  GeneratorSpec spec;
  spec.dim_ = static_cast<int>(data.cols());
  spec.impl_ = Real{std::move(data)};
  return spec;
}

GeneratorSpec GeneratorSpec::sgld(GeneratorSpec target, double step, int burn_in,
                                  int thinning) {
  if (!(step > 0.0)) throw std::invalid_argument("sgld step must be > 0");
  if (burn_in < 0 || thinning < 1) {
    throw std::invalid_argument("sgld needs burn_in >= 0 and thinning >= 1");
  }
  if (!target.has_exact_score()) {
    throw std::invalid_argument("sgld target must expose an exact score");
  }
  GeneratorSpec spec;
  spec.dim_ = target.dim();
  spec.impl_ = Sgld{std::make_shared<GeneratorSpec>(std::move(target)), step,
                    burn_in, thinning};
  return spec;
}

SampleMatrix GeneratorSpec::sample(int count, Rng& rng) const {
  if (count < 1) throw std::invalid_argument("sample count must be >= 1");
  SampleMatrix out(count, dim_);

  if (const auto* gvd = std::get_if<Gvd>(&impl_)) {
    const double scale = std::sqrt(1.0 + gvd->sigma_per);
    for (int r = 0; r < count; ++r) {
      for (int c = 0; c < dim_; ++c) out(r, c) = scale * rng.normal();
    }
    return out;
  }

  if (const auto* mog = std::get_if<Mog>(&impl_)) {
    Vector noise(dim_);
    for (int r = 0; r < count; ++r) {
      const bool first = rng.uniform() < 0.5;
      for (int c = 0; c < dim_; ++c) noise[c] = rng.normal();
      const Vector x = (first ? mog->mu1 : mog->mu2) + mog->chol * noise;
      out.row(r) = x.transpose();
    }
    return out;
  }

  if (const auto* real = std::get_if<Real>(&impl_)) {
    const auto rows = static_cast<std::uint64_t>(real->data.rows());
    for (int r = 0; r < count; ++r) {
      out.row(r) = real->data.row(static_cast<Eigen::Index>(rng.below(rows)));
    }
    return out;
  }

  const auto& sgld = std::get<Sgld>(impl_);
  const ScoreField score = sgld.target->exact_score();
  Vector x(dim_);
  for (int c = 0; c < dim_; ++c) x[c] = rng.normal();
  const double half_step = 0.5 * sgld.step;
  const double noise_scale = std::sqrt(sgld.step);
  auto advance = [&]() {
    const Vector s = score.score_vector(x);
    for (int c = 0; c < dim_; ++c) x[c] += half_step * s[c] + noise_scale * rng.normal();
  };
  for (int it = 0; it < sgld.burn_in; ++it) advance();
  for (int r = 0; r < count; ++r) {
    for (int it = 0; it < sgld.thinning; ++it) advance();
    out.row(r) = x.transpose();
  }
  return out;
}

bool GeneratorSpec::has_exact_score() const {
  if (std::holds_alternative<Real>(impl_)) return false;
  if (const auto* sgld = std::get_if<Sgld>(&impl_)) {
    return sgld->target->has_exact_score();
  }
  return true;
}

ScoreField GeneratorSpec::exact_score() const {
  if (const auto* gvd = std::get_if<Gvd>(&impl_)) {
    const double inv_var = 1.0 / (1.0 + gvd->sigma_per);
    return ScoreField::exact_joint(
        dim_, [inv_var](const Vector& z) -> Vector { return -inv_var * z; },
        [inv_var](const Vector&, int) { return -inv_var; });
  }

  if (const auto* mog = std::get_if<Mog>(&impl_)) {
    // log-sum-exp responsibilities keep the tails stable
    const Mog spec = *mog;
    const double log_det = -std::log(spec.precision.determinant());
    auto responsibilities = [spec, log_det](const Vector& z, Vector& s1, Vector& s2,
                                            double& r1) {
      const double l1 = log_gaussian_density(z, spec.mu1, spec.precision, log_det);
      const double l2 = log_gaussian_density(z, spec.mu2, spec.precision, log_det);
      const double mx = std::max(l1, l2);
      const double w1 = std::exp(l1 - mx);
      const double w2 = std::exp(l2 - mx);
      r1 = w1 / (w1 + w2);
      s1 = spec.precision * (spec.mu1 - z);
      s2 = spec.precision * (spec.mu2 - z);
    };
    auto score = [responsibilities](const Vector& z) -> Vector {
      Vector s1, s2;
      double r1;
      responsibilities(z, s1, s2, r1);
      return r1 * s1 + (1.0 - r1) * s2;
    };
    auto dscore = [responsibilities, spec](const Vector& z, int i) {
      Vector s1, s2;
      double r1;
      responsibilities(z, s1, s2, r1);
      const double r2 = 1.0 - r1;
      const double si = r1 * s1[i] + r2 * s2[i];
      // d r_k / d x_i = r_k (s_{k,i} - s_i)
      return r1 * ((s1[i] - si) * s1[i] - spec.precision(i, i)) +
             r2 * ((s2[i] - si) * s2[i] - spec.precision(i, i));
    };
    return ScoreField::exact_joint(dim_, score, dscore);
  }

  if (const auto* sgld = std::get_if<Sgld>(&impl_)) {
    return sgld->target->exact_score();
  }

  throw std::logic_error("exact score requested for a resampled dataset; "
                         "no density is available");
}

namespace {

/// Responsibility-weighted conditional score of a two-component mixture:
/// both the component weights (from the marginal of the rest) and the
/// component conditional laws come from the conditional decomposition,
/// not from the joint gradient.
double mog_conditional_score_impl(const Vector& mu1, const Vector& mu2,
                                  const Eigen::MatrixXd& cov, int i, double x,
                                  const Vector& rest) {
  const int m = static_cast<int>(mu1.size());
  const GaussianConditional c1 = gaussian_conditional(mu1, cov, i, rest);
  const GaussianConditional c2 = gaussian_conditional(mu2, cov, i, rest);

  double logw1 = 0.0, logw2 = 0.0;  // marginal weights of the rest
  if (m > 1) {
    Eigen::MatrixXd cov_rr(m - 1, m - 1);
    Vector mu1_r(m - 1), mu2_r(m - 1);
    for (int a = 0, ka = 0; a < m; ++a) {
      if (a == i) continue;
      mu1_r[ka] = mu1[a];
      mu2_r[ka] = mu2[a];
      for (int b = 0, kb = 0; b < m; ++b) {
        if (b == i) continue;
        cov_rr(ka, kb) = cov(a, b);
        ++kb;
      }
      ++ka;
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(cov_rr);
    const Eigen::MatrixXd prec = llt.solve(Eigen::MatrixXd::Identity(m - 1, m - 1));
    const double log_det = -std::log(prec.determinant());
    logw1 = log_gaussian_density(rest, mu1_r, prec, log_det);
    logw2 = log_gaussian_density(rest, mu2_r, prec, log_det);
  }

  auto log_phi = [](double v, double mean, double var) {
    return -0.5 * ((v - mean) * (v - mean) / var + std::log(var) + kLogTwoPi);
  };
  const double l1 = logw1 + log_phi(x, c1.mean, c1.var);
  const double l2 = logw2 + log_phi(x, c2.mean, c2.var);
  const double mx = std::max(l1, l2);
  const double a1 = std::exp(l1 - mx);
  const double a2 = std::exp(l2 - mx);
  const double u1 = -(x - c1.mean) / c1.var;
  const double u2 = -(x - c2.mean) / c2.var;
  return (a1 * u1 + a2 * u2) / (a1 + a2);
}

}  // namespace

double GeneratorSpec::exact_conditional_score(int i, double x,
                                              const Vector& rest) const {
  if (i < 0 || i >= dim_) {
    throw std::out_of_range("conditional score coordinate " + std::to_string(i) +
                            " out of range for dimension " + std::to_string(dim_));
  }
  if (rest.size() != dim_ - 1) {
    throw std::invalid_argument("conditional score expects " +
                                std::to_string(dim_ - 1) + " remaining coordinates, got " +
                                std::to_string(rest.size()));
  }

  if (const auto* gvd = std::get_if<Gvd>(&impl_)) {
    const Eigen::MatrixXd cov =
        (1.0 + gvd->sigma_per) * Eigen::MatrixXd::Identity(dim_, dim_);
    const GaussianConditional c =
        gaussian_conditional(Vector::Zero(dim_), cov, i, rest);
    return -(x - c.mean) / c.var;
  }

  if (const auto* mog = std::get_if<Mog>(&impl_)) {
    return mog_conditional_score_impl(mog->mu1, mog->mu2, mog->cov, i, x, rest);
  }

  if (const auto* sgld = std::get_if<Sgld>(&impl_)) {
    return sgld->target->exact_conditional_score(i, x, rest);
  }

  throw std::logic_error("exact conditional score requested for a resampled "
                         "dataset; no density is available");
}

ScoreField GeneratorSpec::exact_conditional_field() const {
  const GeneratorSpec self = *this;  // value copy keeps the field self-contained
  ScoreField::CondFn score = [self](int i, double x, const Vector& rest) {
    return self.exact_conditional_score(i, x, rest);
  };
  ScoreField::CondFn dscore;
  if (const auto* gvd = std::get_if<Gvd>(&impl_)) {
    const double inv_var = 1.0 / (1.0 + gvd->sigma_per);
    dscore = [inv_var](int, double, const Vector&) { return -inv_var; };
  }
  return ScoreField::exact_conditional(dim_, std::move(score), std::move(dscore));
}

std::string GeneratorSpec::describe() const {
  if (const auto* gvd = std::get_if<Gvd>(&impl_)) {
    return "gvd(m=" + std::to_string(gvd->m) +
           ", sigma_per=" + std::to_string(gvd->sigma_per) + ")";
  }
  if (const auto* mog = std::get_if<Mog>(&impl_)) {
    return "mog(m=" + std::to_string(mog->m) +
           ", rho_per=" + std::to_string(mog->rho_per) + ")";
  }
  if (const auto* real = std::get_if<Real>(&impl_)) {
    return "real_subsample(rows=" + std::to_string(real->data.rows()) + ")";
  }
  const auto& sgld = std::get<Sgld>(impl_);
  return "sgld(target=" + sgld.target->describe() +
         ", step=" + std::to_string(sgld.step) + ")";
}

SampleMatrix load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open CSV file: " + path);

  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error(path + ": empty file, expected a header row");
  }

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const char* begin = cell.c_str();
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      while (end && *end == ' ') ++end;
      if (end == begin || (end && *end != '\0')) {
        throw std::runtime_error(path + " line " + std::to_string(line_no) +
                                 ": invalid real '" + cell + "'");
      }
      row.push_back(v);
    }
    if (width == 0) {
      width = row.size();
    } else if (row.size() != width) {
      throw std::runtime_error(path + " line " + std::to_string(line_no) +
                               ": expected " + std::to_string(width) +
                               " fields, got " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) {
    throw std::runtime_error(path + ": no data rows after the header");
  }

  SampleMatrix data(rows.size(), width);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < width; ++c) data(r, c) = rows[r][c];
  }
  return data;
}

}  // namespace npksd
