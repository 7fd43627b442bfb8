#ifndef RDSLAB_EXPERIMENT_HPP
#define RDSLAB_EXPERIMENT_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rdslab/base_env.hpp"
#include "rdslab/fiber_maps.hpp"
#include "rdslab/observable.hpp"

namespace rds {

struct NumericsConfig {
  int n_bins = 1024;
  int truncation_k = 25;
  int n_lags = 40;
  long n = 2000;
  long n_paths = 1000;
  double epsilon = 0.05;
  double dt = 0.0;  // 0 = epsilon^2/4
};

// Declarative experiment description. Parsed from JSON text; serializes to a
// canonical sorted-key form whose hash stamps every output row.
struct ExperimentConfig {
  std::string scenario;  // decay decomposition clt lil iterated_wip moments
                         // homogenization conditions
  std::string base_kind = "iid";
  std::vector<std::string> alphabet;
  std::vector<double> weights;                  // iid
  std::vector<std::vector<double>> transition;  // markov
  std::vector<MapSpec> maps;                    // one per symbol
  std::string observable = "x-minus-half";
  NumericsConfig numerics;
  std::uint64_t master_seed = 1;
  std::string output_dir = "out";
  int threads = 0;
  // conditions scenario
  double alpha = 1.0;
  double eps_omega = 0.0;
  double holder_H = 0.0;
  std::vector<double> rho_values;  // per-symbol contraction factors
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config_file(const std::string& path);
std::string canonical_dump(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);  // 16 hex digits

// Empty iff runnable; each violation names the offending field.
std::vector<std::string> validate_config(const ExperimentConfig& cfg);

// Named formula library; throws on unknown names.
Observable observable_by_name(const std::string& name);

struct Preset {
  std::string name;
  std::string description;
  ExperimentConfig config;
};

const std::vector<Preset>& presets();
const Preset& preset(const std::string& name);

struct ResultRow {
  std::string name;
  double value = 0.0;
  double se = 0.0;
  double tolerance = 0.0;
  bool has_tolerance = true;  // informational rows carry no gate
  bool pass = true;
  std::string method;
};

struct RunSummary {
  std::string scenario;
  std::string hash;
  std::vector<ResultRow> rows;
  std::vector<std::pair<std::string, double>> stage_seconds;
  bool pass = true;
};

// Executes the scenario pipeline and writes results.csv + summary.txt into
// cfg.output_dir. Reruns of the same config produce byte-identical CSVs.
RunSummary run_experiment(const ExperimentConfig& cfg);

void write_results(const RunSummary& summary, const std::string& dir);

}  // namespace rds

#endif
