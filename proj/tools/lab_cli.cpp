#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "rdslab/experiment.hpp"

namespace {

void apply_overrides(rds::ExperimentConfig& cfg, bool has_seed,
                     std::uint64_t seed, const std::string& out, int threads,
                     int n_bins) {
  if (has_seed) cfg.master_seed = seed;
  if (!out.empty()) cfg.output_dir = out;
  if (threads > 0) cfg.threads = threads;
  if (n_bins > 0) cfg.numerics.n_bins = n_bins;
}

rds::ExperimentConfig load(const std::string& source) {
  // a known preset name, otherwise a config file path
  for (const auto& p : rds::presets())
    if (p.name == source) return p.config;
  return rds::load_config_file(source);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rdslab: quenched limit theorems for random interval maps"};
  app.require_subcommand(1);

  std::string source;
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::string out;
  int threads = 0;
  int n_bins = 0;

  auto add_overrides = [&](CLI::App* cmd) {
    cmd->add_option("config", source,
                    "Config file path or preset name")
        ->required();
    cmd->add_option("--seed", seed, "Master seed override")
        ->each([&](const std::string&) { has_seed = true; });
    cmd->add_option("--out", out, "Output directory override");
    cmd->add_option("--threads", threads, "Worker pool size (0 = hardware)");
    cmd->add_option("--n-bins", n_bins, "Ulam resolution override");
  };

  CLI::App* run_cmd = app.add_subcommand("run", "Execute an experiment");
  add_overrides(run_cmd);
  CLI::App* val_cmd =
      app.add_subcommand("validate", "Check a config without running");
  add_overrides(val_cmd);
  CLI::App* presets_cmd =
      app.add_subcommand("presets", "List built-in presets");

  CLI11_PARSE(app, argc, argv);

  try {
    if (presets_cmd->parsed()) {
      for (const auto& p : rds::presets())
        std::cout << p.name << "\n    " << p.description << "\n";
      return 0;
    }
    rds::ExperimentConfig cfg = load(source);
    apply_overrides(cfg, has_seed, seed, out, threads, n_bins);

    if (val_cmd->parsed()) {
      const auto violations = rds::validate_config(cfg);
      if (violations.empty()) {
        std::cout << "ok (hash " << rds::config_hash(cfg) << ")\n";
        return 0;
      }
      for (const auto& v : violations) std::cout << v << "\n";
      return 2;
    }

    const rds::RunSummary summary = rds::run_experiment(cfg);
    std::cout << "scenario " << summary.scenario << " hash " << summary.hash
              << ": " << (summary.pass ? "PASS" : "FAIL") << "\n";
    for (const auto& r : summary.rows)
      if (r.has_tolerance && !r.pass)
        std::cout << "  failed: " << r.name << " = " << r.value
                  << " (tolerance " << r.tolerance << ")\n";
    std::cout << "results written to " << cfg.output_dir << "\n";
    return summary.pass ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
