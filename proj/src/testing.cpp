#include "npksd/testing.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace npksd {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// seed-path tags for the derived streams
constexpr std::uint64_t kTagFit = 0x66697401;
constexpr std::uint64_t kTagStatistic = 0x73746174;
constexpr std::uint64_t kTagReplicate = 0x7265706c;
constexpr std::uint64_t kTagGenerate = 0x67656e00;

void validate(const TestConfig& cfg, bool needs_generator_sizes) {
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) {
    throw std::invalid_argument("alpha must lie in (0, 1), got " +
                                std::to_string(cfg.alpha));
  }
  if (cfg.n < 2) {
    throw std::invalid_argument("observed size n must be >= 2, got " +
                                std::to_string(cfg.n));
  }
  if (cfg.b < 20) {
    throw std::invalid_argument("null replicate count b must be >= 20, got " +
                                std::to_string(cfg.b));
  }
  if (needs_generator_sizes) {
    if (cfg.N < cfg.n) {
      throw std::invalid_argument("generator sample size N must be >= n, got N=" +
                                  std::to_string(cfg.N) + ", n=" +
                                  std::to_string(cfg.n));
    }
    if (cfg.B < 1) {
      throw std::invalid_argument("re-sample size B must be >= 1, got " +
                                  std::to_string(cfg.B));
    }
  }
}

int resolve_observed_size(const TestConfig& cfg, const SampleMatrix& observed) {
  const int n = static_cast<int>(observed.rows());
  if (cfg.n != 0 && cfg.n != n) {
    throw std::invalid_argument("config n=" + std::to_string(cfg.n) +
                                " but the observed set has " + std::to_string(n) +
                                " rows");
  }
  return n;
}

TestReport finish_report(std::string variant, double tau, std::vector<double> draws,
                         const TestConfig& cfg, int n, double bandwidth,
                         Clock::time_point start) {
  for (std::size_t i = 0; i < draws.size(); ++i) {
    if (!std::isfinite(draws[i])) {
      throw std::runtime_error("non-finite statistic in null replicate " +
                               std::to_string(i) + " of " + variant);
    }
  }
  if (!std::isfinite(tau)) {
    throw std::runtime_error("non-finite " + variant + " statistic on observed data");
  }
  TestReport report;
  report.variant = std::move(variant);
  report.statistic = tau;
  report.null_quantile = empirical_quantile(draws, 1.0 - cfg.alpha);
  report.p_value = mc_p_value(tau, draws);
  report.reject = tau > report.null_quantile;
  report.null_draws = std::move(draws);
  report.alpha = cfg.alpha;
  report.n = n;
  report.N = cfg.N;
  report.B = cfg.B;
  report.b = static_cast<int>(report.null_draws.size());
  report.seed = cfg.seed;
  report.bandwidth = bandwidth;
  report.wall_time_ms = elapsed_ms(start);
  return report;
}

}  // namespace

std::string variant_name(const StatisticOptions& options) {
  if (options.fit == ScoreFit::GaussianConditional) return "npksd_g";
  return options.summary == SummaryStat::Mean ? "npksd_mean" : "npksd";
}

double empirical_quantile(std::vector<double> draws, double level) {
  if (draws.empty()) throw std::invalid_argument("quantile of an empty draw set");
  std::sort(draws.begin(), draws.end());
  const auto b = static_cast<double>(draws.size());
  auto index = static_cast<std::size_t>(std::ceil(level * b));
  index = std::min(std::max<std::size_t>(index, 1), draws.size());
  return draws[index - 1];
}

double mc_p_value(double statistic, const std::vector<double>& draws) {
  std::size_t at_least = 0;
  for (double d : draws) {
    if (d >= statistic) ++at_least;
  }
  return static_cast<double>(1 + at_least) / static_cast<double>(draws.size() + 1);
}

nlohmann::json TestReport::to_json() const {
  nlohmann::json j;
  j["variant"] = variant;
  j["statistic"] = statistic;
  j["null_quantile"] = null_quantile;
  j["p_value"] = p_value;
  j["reject"] = reject;
  j["alpha"] = alpha;
  j["n"] = n;
  j["N"] = N;
  j["B"] = B;
  j["b"] = b;
  j["seed"] = seed;
  j["bandwidth"] = bandwidth;
  j["wall_time_ms"] = wall_time_ms;
  j["null_draws"] = null_draws;
  return j;
}

TestReport npksd_test(const SampleMatrix& observed, const GeneratorSpec& generator,
                      const TestConfig& cfg_in) {
  const auto start = Clock::now();
  const int m = static_cast<int>(observed.cols());
  if (m != generator.dim()) {
    throw std::invalid_argument("observed dimension " + std::to_string(m) +
                                " does not match generator dimension " +
                                std::to_string(generator.dim()));
  }
  TestConfig cfg = cfg_in;
  cfg.n = resolve_observed_size(cfg, observed);
  if (cfg.B == 0) cfg.B = m;
  validate(cfg, true);

  const KernelConfig kres = cfg.stat.kernel.resolve(observed);

  Rng fit_rng(derive_seed(cfg.seed, {kTagFit}));
  const SampleMatrix train = generator.sample(cfg.N, fit_rng);
  const ConditionalScoreModel model =
      cfg.stat.fit == ScoreFit::ScoreMatching
          ? fit_score_matching(train, cfg.stat.summary, cfg.stat.basis, cfg.stat.ridge)
          : fit_conditional_gaussian(train, cfg.stat.summary);

  Rng stat_rng(derive_seed(cfg.seed, {kTagStatistic}));
  const IndexDraw draw = draw_indices(m, cfg.B, stat_rng);
  const double tau = npksd_stat(observed, model, draw, kres, cfg.stat.form);

  std::vector<double> null_draws(cfg.b);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < cfg.b; ++i) {
    Rng rep_rng(derive_seed(cfg.seed, {kTagReplicate, static_cast<std::uint64_t>(i)}));
    const SampleMatrix replica = generator.sample(cfg.n, rep_rng);
    const IndexDraw rep_draw = draw_indices(m, cfg.B, rep_rng);
    null_draws[i] =
        npksd_stat(replica, model, rep_draw, kres, cfg.stat.form, Execution::Serial);
  }

  return finish_report(variant_name(cfg.stat), tau, std::move(null_draws), cfg,
                       cfg.n, kres.sigma(), start);
}

std::vector<double> wild_bootstrap_null(const Eigen::MatrixXd& gram, int count,
                                        std::uint64_t seed, bool unit_weights) {
  const Eigen::Index n = gram.rows();
  const double nn = static_cast<double>(n);
  std::vector<double> draws(count);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < count; ++r) {
    Rng rng(derive_seed(seed, {kTagReplicate, static_cast<std::uint64_t>(r)}));
    Vector w(n);
    for (Eigen::Index i = 0; i < n; ++i) w[i] = unit_weights ? 1.0 : rng.sign();
    draws[r] = w.dot(gram * w) / (nn * nn);
  }
  return draws;
}

TestReport ksd_wild_bootstrap_test(const SampleMatrix& observed,
                                   const ScoreField& exact_score,
                                   const TestConfig& cfg_in) {
  const auto start = Clock::now();
  TestConfig cfg = cfg_in;
  cfg.n = resolve_observed_size(cfg, observed);
  validate(cfg, false);

  const KernelConfig kres = cfg.stat.kernel.resolve(observed);
  const Eigen::MatrixXd scores = exact_score.score_matrix(observed);
  const Eigen::MatrixXd gram = stein_gram(observed, scores,
                                          Vector::Ones(observed.cols()), kres,
                                          QuadForm::Diagonal);
  const double tau = v_statistic(gram);
  std::vector<double> draws = wild_bootstrap_null(gram, cfg.b, cfg.seed);
  TestReport report = finish_report("ksd", tau, std::move(draws), cfg, cfg.n,
                                    kres.sigma(), start);
  return report;
}

namespace {

struct PooledMmd {
  Eigen::MatrixXd gram;
  int n;  // first block size
  int l;  // second block size

  // MMD^2_u under an assignment of pooled indices: first n entries of
  // `order` form the X block, the rest the Y block.
  double u_stat(const std::vector<int>& order) const {
    double xx = 0.0, yy = 0.0, xy = 0.0;
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) xx += gram(order[a], order[b]);
    }
    for (int a = n; a < n + l; ++a) {
      for (int b = a + 1; b < n + l; ++b) yy += gram(order[a], order[b]);
    }
    for (int a = 0; a < n; ++a) {
      for (int b = n; b < n + l; ++b) xy += gram(order[a], order[b]);
    }
    const double dn = n, dl = l;
    return 2.0 * xx / (dn * (dn - 1.0)) + 2.0 * yy / (dl * (dl - 1.0)) -
           2.0 * xy / (dn * dl);
  }
};

PooledMmd pool_gram(const SampleMatrix& sp, const SampleMatrix& sq,
                    const KernelConfig& kres) {
  if (sp.cols() != sq.cols()) {
    throw std::invalid_argument("two-sample inputs disagree in dimension: " +
                                std::to_string(sp.cols()) + " vs " +
                                std::to_string(sq.cols()));
  }
  PooledMmd pooled;
  pooled.n = static_cast<int>(sp.rows());
  pooled.l = static_cast<int>(sq.rows());
  SampleMatrix all(pooled.n + pooled.l, sp.cols());
  all.topRows(pooled.n) = sp;
  all.bottomRows(pooled.l) = sq;
  pooled.gram = kernel_gram(all, kres);
  return pooled;
}

void check_two_sample_sizes(const SampleMatrix& sp, const SampleMatrix& sq) {
  if (sp.rows() < 2 || sq.rows() < 2) {
    throw std::invalid_argument("both sample sets need size >= 2, got " +
                                std::to_string(sp.rows()) + " and " +
                                std::to_string(sq.rows()));
  }
}

}  // namespace

double mmd_u_stat(const SampleMatrix& sp, const SampleMatrix& sq,
                  const KernelConfig& cfg) {
  check_two_sample_sizes(sp, sq);
  const KernelConfig kres = cfg.resolve(sp);
  const PooledMmd pooled = pool_gram(sp, sq, kres);
  std::vector<int> identity(pooled.n + pooled.l);
  std::iota(identity.begin(), identity.end(), 0);
  return pooled.u_stat(identity);
}

double mmd_v_stat(const SampleMatrix& sp, const SampleMatrix& sq,
                  const KernelConfig& cfg) {
  if (sp.cols() != sq.cols()) {
    throw std::invalid_argument("two-sample inputs disagree in dimension");
  }
  const KernelConfig kres = cfg.resolve(sp);
  const double inv_2s2 = 1.0 / (2.0 * kres.sigma() * kres.sigma());
  const Eigen::Index n = sp.rows(), l = sq.rows();

  auto within = [&](const SampleMatrix& s) {
    const Eigen::Index count = s.rows();
    double acc = static_cast<double>(count);  // diagonal, k = 1
    for (Eigen::Index a = 0; a < count; ++a) {
      for (Eigen::Index b = a + 1; b < count; ++b) {
        acc += 2.0 * std::exp(-(s.row(a) - s.row(b)).squaredNorm() * inv_2s2);
      }
    }
    return acc / (static_cast<double>(count) * static_cast<double>(count));
  };
  double cross = 0.0;
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < l; ++b) {
      cross += std::exp(-(sp.row(a) - sq.row(b)).squaredNorm() * inv_2s2);
    }
  }
  cross /= static_cast<double>(n) * static_cast<double>(l);
  return within(sp) + within(sq) - 2.0 * cross;
}

TestReport mmd_permutation_test(const SampleMatrix& sp, const SampleMatrix& sq,
                                const TestConfig& cfg_in, int n_perm) {
  const auto start = Clock::now();
  check_two_sample_sizes(sp, sq);
  if (n_perm < 20) {
    throw std::invalid_argument("permutation count must be >= 20, got " +
                                std::to_string(n_perm));
  }
  TestConfig cfg = cfg_in;
  cfg.n = resolve_observed_size(cfg, sp);
  cfg.N = static_cast<int>(sq.rows());

  const KernelConfig kres = cfg.stat.kernel.resolve(sp);
  const PooledMmd pooled = pool_gram(sp, sq, kres);
  const int total = pooled.n + pooled.l;

  std::vector<int> identity(total);
  std::iota(identity.begin(), identity.end(), 0);
  const double tau = pooled.u_stat(identity);

  std::vector<double> draws(n_perm);
  draws[0] = tau;  // identity permutation as draw 0
#pragma omp parallel for schedule(static)
  for (int r = 1; r < n_perm; ++r) {
    Rng rng(derive_seed(cfg.seed, {kTagReplicate, static_cast<std::uint64_t>(r)}));
    std::vector<int> order(identity);
    for (int i = total - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i + 1)));
      std::swap(order[i], order[j]);
    }
    draws[r] = pooled.u_stat(order);
  }

  cfg.b = n_perm;
  return finish_report("mmd_perm", tau, std::move(draws), cfg, cfg.n, kres.sigma(),
                       start);
}

TestReport mmd_generator_test(const SampleMatrix& observed,
                              const GeneratorSpec& generator, const TestConfig& cfg_in) {
  const auto start = Clock::now();
  if (observed.cols() != generator.dim()) {
    throw std::invalid_argument("observed dimension does not match the generator");
  }
  TestConfig cfg = cfg_in;
  cfg.n = resolve_observed_size(cfg, observed);
  validate(cfg, false);
  if (cfg.N < 2) {
    throw std::invalid_argument("generator sample size N must be >= 2");
  }

  const KernelConfig kres = cfg.stat.kernel.resolve(observed);

  Rng gen_rng(derive_seed(cfg.seed, {kTagGenerate}));
  const SampleMatrix generated = generator.sample(cfg.N, gen_rng);
  const double tau = mmd_v_stat(observed, generated, kres);

  std::vector<double> draws(cfg.b);
#pragma omp parallel for schedule(dynamic)
  for (int r = 0; r < cfg.b; ++r) {
    Rng rng(derive_seed(cfg.seed, {kTagReplicate, static_cast<std::uint64_t>(r)}));
    const SampleMatrix a = generator.sample(cfg.N, rng);
    const SampleMatrix b = generator.sample(cfg.N, rng);
    draws[r] = mmd_v_stat(a, b, kres);
  }

  return finish_report("mmd", tau, std::move(draws), cfg, cfg.n, kres.sigma(), start);
}

std::vector<double> bandwidth_ladder(const SampleMatrix& samples) {
  const double base = median_heuristic(samples);
  std::vector<double> ladder;
  for (int k = -2; k <= 2; ++k) ladder.push_back(base * std::pow(2.0, k));
  return ladder;
}

TestReport mmdagg_test(const SampleMatrix& sp, const SampleMatrix& sq,
                       const std::vector<double>& bandwidths, int B1, int B2,
                       const TestConfig& cfg_in) {
  const auto start = Clock::now();
  check_two_sample_sizes(sp, sq);
  if (bandwidths.empty()) {
    throw std::invalid_argument("mmdagg needs a nonempty bandwidth list");
  }
  if (B1 < 50 || B2 < 50) {
    throw std::invalid_argument("mmdagg needs B1 >= 50 and B2 >= 50, got B1=" +
                                std::to_string(B1) + ", B2=" + std::to_string(B2));
  }
  TestConfig cfg = cfg_in;
  cfg.n = resolve_observed_size(cfg, sp);
  cfg.N = static_cast<int>(sq.rows());

  const int n = static_cast<int>(sp.rows());
  const int l = static_cast<int>(sq.rows());
  const int total = n + l;
  const int n_lambda = static_cast<int>(bandwidths.size());
  const double weight = 1.0 / static_cast<double>(n_lambda);

  // squared distances once; per-bandwidth Grams by exponentiation
  SampleMatrix all(total, sp.cols());
  all.topRows(n) = sp;
  all.bottomRows(l) = sq;
  Eigen::MatrixXd dist2(total, total);
#pragma omp parallel for schedule(dynamic, 8)
  for (int a = 0; a < total; ++a) {
    dist2(a, a) = 0.0;
    for (int b = a + 1; b < total; ++b) {
      const double d = (all.row(a) - all.row(b)).squaredNorm();
      dist2(a, b) = d;
      dist2(b, a) = d;
    }
  }

  // shared permutations: r = 0 is the identity (observed statistic),
  // 1..B1 estimate quantiles, B1+1..B1+B2 estimate the rejection rate
  const int n_orders = 1 + B1 + B2;
  std::vector<std::vector<int>> orders(n_orders);
  for (int r = 0; r < n_orders; ++r) {
    orders[r].resize(total);
    std::iota(orders[r].begin(), orders[r].end(), 0);
    if (r == 0) continue;
    Rng rng(derive_seed(cfg.seed, {kTagReplicate, static_cast<std::uint64_t>(r)}));
    for (int i = total - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i + 1)));
      std::swap(orders[r][i], orders[r][j]);
    }
  }

  for (double sigma : bandwidths) {
    if (!(sigma > 0.0)) {
      throw std::invalid_argument("mmdagg bandwidths must be > 0");
    }
  }
  Eigen::MatrixXd stats(n_orders, n_lambda);
#pragma omp parallel for schedule(dynamic)
  for (int lam = 0; lam < n_lambda; ++lam) {
    const double sigma = bandwidths[lam];
    PooledMmd pooled;
    pooled.n = n;
    pooled.l = l;
    pooled.gram = (-dist2 / (2.0 * sigma * sigma)).array().exp();
    for (int r = 0; r < n_orders; ++r) stats(r, lam) = pooled.u_stat(orders[r]);
  }

  // per-bandwidth sorted null draws (B1 permutations plus the observed
  // statistic, the usual exchangeable-quantile convention)
  std::vector<std::vector<double>> sorted(n_lambda);
  for (int lam = 0; lam < n_lambda; ++lam) {
    sorted[lam].reserve(B1 + 1);
    for (int r = 0; r <= B1; ++r) sorted[lam].push_back(stats(r, lam));
    std::sort(sorted[lam].begin(), sorted[lam].end());
  }
  auto quantile_at = [&](int lam, double u) {
    const double level = 1.0 - u * weight;
    auto index = static_cast<long>(std::ceil(static_cast<double>(B1 + 1) * level));
    index = std::clamp(index, 1l, static_cast<long>(B1 + 1));
    return sorted[lam][static_cast<std::size_t>(index - 1)];
  };
  auto rejection_rate = [&](double u) {
    int rejects = 0;
    for (int r = B1 + 1; r < n_orders; ++r) {
      for (int lam = 0; lam < n_lambda; ++lam) {
        if (stats(r, lam) > quantile_at(lam, u)) {
          ++rejects;
          break;
        }
      }
    }
    return static_cast<double>(rejects) / static_cast<double>(B2);
  };

  // largest u with estimated level <= alpha
  double lo = 0.0, hi = static_cast<double>(n_lambda);
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (rejection_rate(mid) <= cfg.alpha) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double u_hat = lo;

  double max_margin = -std::numeric_limits<double>::infinity();
  double min_p = 1.0;
  for (int lam = 0; lam < n_lambda; ++lam) {
    max_margin = std::max(max_margin, stats(0, lam) - quantile_at(lam, u_hat));
    int at_least = 0;
    for (int r = 1; r <= B1; ++r) {
      if (stats(r, lam) >= stats(0, lam)) ++at_least;
    }
    min_p = std::min(min_p, static_cast<double>(1 + at_least) /
                                static_cast<double>(B1 + 1));
  }

  TestReport report;
  report.variant = "mmdagg";
  report.statistic = max_margin;
  report.null_quantile = 0.0;
  report.p_value = min_p;  // smallest single-bandwidth permutation p, diagnostic
  report.reject = max_margin > 0.0;
  report.alpha = cfg.alpha;
  report.n = n;
  report.N = l;
  report.B = B1;
  report.b = B2;
  report.seed = cfg.seed;
  report.bandwidth = bandwidths.front();
  report.wall_time_ms = elapsed_ms(start);
  return report;
}

}  // namespace npksd
