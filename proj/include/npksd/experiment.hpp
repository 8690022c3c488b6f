#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "npksd/testing.hpp"

namespace npksd {

/// Build a generator from its JSON description:
///   {"type":"gvd","m":3,"sigma_per":0.0}
///   {"type":"mog","m":6,"rho_per":0.0,"mu1":[...],"mu2":[...]}
///   {"type":"real","csv":"path"}
///   {"type":"sgld","target":{...},"step":0.01,"burn_in":1000,"thinning":10}
GeneratorSpec generator_from_json(const nlohmann::json& j);

StatisticOptions statistic_options_from_json(const nlohmann::json& j);
TestConfig test_config_from_json(const nlohmann::json& j);

/// Run exactly one test described by a config document. The method field
/// selects the driver: npksd, npksd_mean, npksd_g, ksd, mmd, mmd_perm,
/// mmdagg. Observed data come from "observed": {"generator": {...}} or
/// {"csv": "path"}; with neither, the null generator itself is used.
TestReport run_single_test(const nlohmann::json& config);

struct SweepOutput {
  std::string csv_path;
  std::string manifest_path;
  std::string csv_text;
};

/// Rejection-rate sweep over one axis (sigma_per, rho_per, N, B or n).
/// Rows are ordered by (method, axis value); per-point seeds derive from
/// (seed, method, axis index, round, trial). Writes
/// `axis,method,rate_mean,rate_sd,trials,rounds` CSV plus a JSON manifest
/// that round-trips: re-running with manifest["config"] reproduces the CSV
/// byte for byte.
SweepOutput run_sweep(const nlohmann::json& config, const std::string& out_dir);

/// Convergence probe to CSV: N,B,mean_abs_gap,sd_abs_gap,seeds.
SweepOutput run_probe(const nlohmann::json& config, const std::string& out_dir);

/// Fit a conditional score model and return the coefficients as JSON.
nlohmann::json run_fit_score(const nlohmann::json& config);

}  // namespace npksd
