#include "npksd/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace npksd {

namespace {

using nlohmann::json;

constexpr std::uint64_t kTagObserved = 0x0b5e7665;
constexpr std::uint64_t kTagSecond = 0x5ec0fd5e;

[[noreturn]] void config_error(const std::string& what) {
  throw std::invalid_argument("config error: " + what);
}

double require_number(const json& j, const std::string& key) {
  if (!j.contains(key) || !j[key].is_number()) {
    config_error("missing or non-numeric field '" + key + "'");
  }
  return j[key].get<double>();
}

}  // namespace

GeneratorSpec generator_from_json(const json& j) {
  if (!j.is_object() || !j.contains("type")) {
    config_error("generator needs an object with a 'type' field");
  }
  const std::string type = j["type"].get<std::string>();
  if (type == "gvd") {
    return GeneratorSpec::gvd(static_cast<int>(require_number(j, "m")),
                              j.value("sigma_per", 0.0));
  }
  if (type == "mog") {
    const int m = static_cast<int>(require_number(j, "m"));
    const double rho = j.value("rho_per", 0.0);
    if (j.contains("mu1") || j.contains("mu2")) {
      auto vec = [&](const std::string& key) {
        if (!j.contains(key)) config_error("mog with custom means needs '" + key + "'");
        const auto vals = j[key].get<std::vector<double>>();
        if (static_cast<int>(vals.size()) != m) {
          config_error("'" + key + "' must have m entries");
        }
        Vector v(m);
        for (int i = 0; i < m; ++i) v[i] = vals[i];
        return v;
      };
      return GeneratorSpec::mog(m, rho, vec("mu1"), vec("mu2"));
    }
    return GeneratorSpec::mog(m, rho);
  }
  if (type == "real") {
    if (!j.contains("csv")) config_error("real generator needs a 'csv' path");
    return GeneratorSpec::real_subsample(load_csv(j["csv"].get<std::string>()));
  }
  if (type == "sgld") {
    if (!j.contains("target")) config_error("sgld generator needs a 'target'");
    return GeneratorSpec::sgld(generator_from_json(j["target"]),
                               j.value("step", 0.01), j.value("burn_in", 1000),
                               j.value("thinning", 10));
  }
  config_error("unknown generator type '" + type +
               "' (expected gvd, mog, real or sgld)");
}

StatisticOptions statistic_options_from_json(const json& j) {
  StatisticOptions options;
  const std::string summary = j.value("summary", "identity");
  if (summary == "identity") {
    options.summary = SummaryStat::Identity;
  } else if (summary == "mean") {
    options.summary = SummaryStat::Mean;
  } else {
    config_error("unknown summary '" + summary + "' (expected identity or mean)");
  }
  options.basis.degree = j.value("degree", 2);
  options.ridge = j.value("ridge", 1e-4);
  const std::string form = j.value("quad_form", "scalar");
  if (form == "scalar") {
    options.form = QuadForm::ScalarCross;
  } else if (form == "diagonal") {
    options.form = QuadForm::Diagonal;
  } else {
    config_error("unknown quad_form '" + form + "' (expected scalar or diagonal)");
  }
  if (j.contains("kernel")) {
    const auto& k = j["kernel"];
    if (k.is_number()) {
      options.kernel = KernelConfig::fixed(k.get<double>());
    } else if (!(k.is_string() && k.get<std::string>() == "median")) {
      config_error("'kernel' must be a positive bandwidth or \"median\"");
    }
  }
  return options;
}

TestConfig test_config_from_json(const json& j) {
  TestConfig cfg;
  cfg.alpha = j.value("alpha", 0.05);
  cfg.n = j.value("n", 0);
  cfg.N = j.value("N", 0);
  cfg.B = j.value("B", 0);
  cfg.b = j.value("b", 200);
  cfg.seed = j.value("seed", std::uint64_t{0});
  cfg.stat = statistic_options_from_json(j);
  return cfg;
}

namespace {

SampleMatrix observed_samples(const json& config, const GeneratorSpec& null_gen,
                              const TestConfig& cfg) {
  if (config.contains("observed")) {
    const auto& obs = config["observed"];
    if (obs.contains("csv")) {
      return load_csv(obs["csv"].get<std::string>());
    }
    if (obs.contains("generator")) {
      const GeneratorSpec gen = generator_from_json(obs["generator"]);
      Rng rng(derive_seed(cfg.seed, {kTagObserved}));
      if (cfg.n < 1) config_error("'n' must be set when observed data are sampled");
      return gen.sample(cfg.n, rng);
    }
    config_error("'observed' needs either a 'csv' path or a 'generator'");
  }
  Rng rng(derive_seed(cfg.seed, {kTagObserved}));
  if (cfg.n < 1) config_error("'n' must be set when observed data are sampled");
  return null_gen.sample(cfg.n, rng);
}

TestReport dispatch_method(const std::string& method, const json& config,
                           const GeneratorSpec& generator,
                           const SampleMatrix& observed, TestConfig cfg) {
  cfg.n = static_cast<int>(observed.rows());
  if (method == "npksd" || method == "npksd_mean" || method == "npksd_g") {
    cfg.stat.fit = method == "npksd_g" ? ScoreFit::GaussianConditional
                                       : ScoreFit::ScoreMatching;
    if (method == "npksd_mean") cfg.stat.summary = SummaryStat::Mean;
    return npksd_test(observed, generator, cfg);
  }
  if (method == "ksd") {
    return ksd_wild_bootstrap_test(observed, generator.exact_score(), cfg);
  }
  if (method == "mmd") {
    return mmd_generator_test(observed, generator, cfg);
  }
  if (method == "mmd_perm" || method == "mmdagg") {
    Rng rng(derive_seed(cfg.seed, {kTagSecond}));
    if (cfg.N < 2) config_error("'N' must be >= 2 for two-sample methods");
    const SampleMatrix generated = generator.sample(cfg.N, rng);
    if (method == "mmd_perm") {
      return mmd_permutation_test(observed, generated, cfg, cfg.b);
    }
    std::vector<double> ladder;
    if (config.contains("bandwidths")) {
      ladder = config["bandwidths"].get<std::vector<double>>();
    } else {
      ladder = bandwidth_ladder(observed);
    }
    const int b1 = config.value("B1", 200);
    const int b2 = config.value("B2", 200);
    return mmdagg_test(observed, generated, ladder, b1, b2, cfg);
  }
  config_error("unknown method '" + method +
               "' (expected npksd, npksd_mean, npksd_g, ksd, mmd, mmd_perm or "
               "mmdagg)");
}

}  // namespace

TestReport run_single_test(const json& config) {
  if (!config.contains("method")) config_error("missing 'method' field");
  if (!config.contains("generator")) config_error("missing 'generator' field");
  const std::string method = config["method"].get<std::string>();
  const GeneratorSpec generator = generator_from_json(config["generator"]);
  TestConfig cfg = test_config_from_json(config);
  const SampleMatrix observed = observed_samples(config, generator, cfg);
  cfg.n = 0;  // let the driver take n from the data
  return dispatch_method(method, config, generator, observed, cfg);
}

namespace {

json apply_axis(json base, const std::string& axis, double value) {
  if (axis == "sigma_per" || axis == "rho_per") {
    if (!base.contains("observed") || !base["observed"].contains("generator")) {
      config_error("axis '" + axis + "' needs observed.generator to perturb");
    }
    base["observed"]["generator"][axis] = value;
  } else if (axis == "N" || axis == "B" || axis == "n") {
    base[axis] = static_cast<int>(value);
  } else {
    config_error("unknown sweep axis '" + axis +
                 "' (expected sigma_per, rho_per, N, B or n)");
  }
  return base;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

struct SweepRow {
  std::string method;
  double value;
  double rate_mean;
  double rate_sd;
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write output file: " + path);
  out << text;
}

}  // namespace

SweepOutput run_sweep(const json& config, const std::string& out_dir) {
  for (const char* key : {"axis", "grid", "methods", "trials"}) {
    if (!config.contains(key)) config_error(std::string("missing '") + key + "'");
  }
  const std::string axis = config["axis"].get<std::string>();
  const auto grid = config["grid"].get<std::vector<double>>();
  auto methods = config["methods"].get<std::vector<std::string>>();
  const int trials = config["trials"].get<int>();
  const int rounds = config.value("rounds", 1);
  const auto base_seed = config.value("seed", std::uint64_t{0});
  if (grid.empty()) config_error("'grid' must be nonempty");
  if (trials < 1 || rounds < 1) config_error("'trials' and 'rounds' must be >= 1");

  std::filesystem::create_directories(out_dir);

  json base = config;
  for (const char* key : {"axis", "grid", "methods", "trials", "rounds"}) {
    base.erase(key);
  }

  std::sort(methods.begin(), methods.end());
  std::vector<SweepRow> rows;
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
      std::vector<double> round_rates(rounds);
      for (int round = 0; round < rounds; ++round) {
        std::vector<int> rejects(trials, 0);
#pragma omp parallel for schedule(dynamic)
        for (int trial = 0; trial < trials; ++trial) {
          json point = apply_axis(base, axis, grid[gi]);
          point["method"] = methods[mi];
          point["seed"] = derive_seed(
              base_seed, {mi, gi, static_cast<std::uint64_t>(round),
                          static_cast<std::uint64_t>(trial)});
          rejects[trial] = run_single_test(point).reject ? 1 : 0;
        }
        double rate = 0.0;
        for (int r : rejects) rate += r;
        round_rates[round] = rate / static_cast<double>(trials);
      }
      double mean = 0.0;
      for (double r : round_rates) mean += r;
      mean /= static_cast<double>(rounds);
      double var = 0.0;
      for (double r : round_rates) var += (r - mean) * (r - mean);
      const double sd =
          rounds > 1 ? std::sqrt(var / static_cast<double>(rounds - 1)) : 0.0;
      rows.push_back(SweepRow{methods[mi], grid[gi], mean, sd});
    }
  }

  std::string csv = "axis,method,rate_mean,rate_sd,trials,rounds\n";
  for (const auto& row : rows) {
    csv += format_double(row.value) + "," + row.method + "," +
           format_double(row.rate_mean) + "," + format_double(row.rate_sd) + "," +
           std::to_string(trials) + "," + std::to_string(rounds) + "\n";
  }

  SweepOutput out;
  out.csv_text = csv;
  out.csv_path = (std::filesystem::path(out_dir) / "sweep.csv").string();
  out.manifest_path = (std::filesystem::path(out_dir) / "manifest.json").string();
  write_file(out.csv_path, csv);

  json manifest;
  manifest["config"] = config;
  manifest["csv"] = out.csv_path;
  manifest["seed_derivation"] =
      "derive_seed(seed, {method_index(sorted), grid_index, round, trial})";
  manifest["timestamp_unix"] =
      std::chrono::duration_cast<std::chrono::seconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count();
  write_file(out.manifest_path, manifest.dump(2) + "\n");
  return out;
}

SweepOutput run_probe(const json& config, const std::string& out_dir) {
  if (!config.contains("generator")) config_error("missing 'generator'");
  ConvergenceProbe probe(generator_from_json(config["generator"]));
  probe.observed_n = config.value("n", 100);
  probe.fit_sizes = config.value("Ns", std::vector<int>{});
  probe.draw_sizes = config.value("Bs", std::vector<int>{});
  probe.seeds = config.value("seeds", 20);
  probe.base_seed = config.value("seed", std::uint64_t{0});
  probe.inject_exact = config.value("inject_exact", false);
  const StatisticOptions options = statistic_options_from_json(config);
  probe.summary = options.summary;
  probe.basis = options.basis;
  probe.ridge = options.ridge;
  probe.kernel = options.kernel;
  probe.form = options.form;

  const auto rows = convergence_probe(probe);

  std::filesystem::create_directories(out_dir);
  std::string csv = "N,B,mean_abs_gap,sd_abs_gap,seeds\n";
  for (const auto& row : rows) {
    csv += std::to_string(row.fit_size) + "," + std::to_string(row.draw_size) + "," +
           format_double(row.mean_abs_gap) + "," + format_double(row.sd_abs_gap) +
           "," + std::to_string(probe.seeds) + "\n";
  }

  SweepOutput out;
  out.csv_text = csv;
  out.csv_path = (std::filesystem::path(out_dir) / "convergence.csv").string();
  out.manifest_path = (std::filesystem::path(out_dir) / "convergence_manifest.json").string();
  write_file(out.csv_path, csv);
  json manifest;
  manifest["config"] = config;
  manifest["csv"] = out.csv_path;
  write_file(out.manifest_path, manifest.dump(2) + "\n");
  return out;
}

json run_fit_score(const json& config) {
  if (!config.contains("generator")) config_error("missing 'generator'");
  const GeneratorSpec generator = generator_from_json(config["generator"]);
  const int fit_n = config.value("N", 1000);
  const auto seed = config.value("seed", std::uint64_t{0});
  const StatisticOptions options = statistic_options_from_json(config);
  const std::string fit = config.value("fit", "score_matching");

  Rng rng(derive_seed(seed, {kTagObserved}));
  const SampleMatrix train = generator.sample(fit_n, rng);
  ConditionalScoreModel model;
  if (fit == "score_matching") {
    model = fit_score_matching(train, options.summary, options.basis, options.ridge);
  } else if (fit == "gaussian") {
    model = fit_conditional_gaussian(train, options.summary);
  } else {
    config_error("unknown fit '" + fit + "' (expected score_matching or gaussian)");
  }

  json out;
  out["generator"] = generator.describe();
  out["m"] = model.dim;
  out["N"] = model.sample_count;
  out["summary"] = model.summary == SummaryStat::Mean ? "mean" : "identity";
  out["degree"] = model.basis.degree;
  out["ridge"] = model.ridge;
  out["fit"] = fit;
  out["seed"] = seed;
  json coeffs = json::array();
  for (const auto& theta : model.coefficients) {
    coeffs.push_back(std::vector<double>(theta.data(), theta.data() + theta.size()));
  }
  out["coefficients"] = coeffs;
  return out;
}

}  // namespace npksd
