#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "json.hpp"
#include "npksd/experiment.hpp"

namespace {

nlohmann::json load_config(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("config file not found: " + path);
  }
  std::ifstream in(path);
  nlohmann::json config;
  try {
    config = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("cannot parse " + path + ": " + e.what());
  }
  return config;
}

void apply_overrides(nlohmann::json& config, const std::optional<std::uint64_t>& seed) {
  if (seed) config["seed"] = *seed;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sample-based goodness-of-fit testing for implicit generators"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  int threads = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file")->required();
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed, "override the config seed");
    cmd->add_option("--threads", threads, "worker thread count (0 = default)");
  };

  CLI::App* cmd_test = app.add_subcommand("test", "run a single hypothesis test");
  CLI::App* cmd_sweep = app.add_subcommand("sweep", "rejection-rate sweep over one axis");
  CLI::App* cmd_fit = app.add_subcommand("fit-score", "fit a conditional score model");
  CLI::App* cmd_probe =
      app.add_subcommand("probe-convergence", "statistic gap vs fit and re-sample size");
  for (CLI::App* cmd : {cmd_test, cmd_sweep, cmd_fit, cmd_probe}) add_common(cmd);

  CLI11_PARSE(app, argc, argv);

  try {
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#endif
    nlohmann::json config = load_config(config_path);
    apply_overrides(config, seed);

    if (cmd_test->parsed()) {
      const npksd::TestReport report = npksd::run_single_test(config);
      const std::string text = report.to_json().dump(2) + "\n";
      std::cout << text;
      std::filesystem::create_directories(out_dir);
      write_text((std::filesystem::path(out_dir) / "report.json").string(), text);
    } else if (cmd_sweep->parsed()) {
      const npksd::SweepOutput out = npksd::run_sweep(config, out_dir);
      std::cout << out.csv_text;
      std::cerr << "wrote " << out.csv_path << " and " << out.manifest_path << "\n";
    } else if (cmd_fit->parsed()) {
      std::cout << npksd::run_fit_score(config).dump(2) << "\n";
    } else {
      const npksd::SweepOutput out = npksd::run_probe(config, out_dir);
      std::cout << out.csv_text;
      std::cerr << "wrote " << out.csv_path << "\n";
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
