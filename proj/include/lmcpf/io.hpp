#pragma once

#include <string>
#include <vector>

#include "lmcpf/diagnostics.hpp"
#include "lmcpf/experiment.hpp"

namespace lmcpf {

// Shortest representation that round-trips the double exactly; all CSV and
// JSON output goes through this so runs are byte-comparable.
std::string format_double(double v);

ExperimentConfig parse_config_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg);

void ensure_output_dir(const std::string& dir);

void write_manifest(const ExperimentConfig& cfg, const std::string& path);
void write_cycle_scores(const ExperimentResult& result,
                        const std::string& path);
void write_point_diagnostics(const ExperimentResult& result,
                             const std::string& path);
void write_final_state(const ExperimentResult& result,
                       const std::string& path);

struct FinalState {
  int cycle = 0;
  Vector truth;
  Ensemble ensemble;
};

FinalState read_final_state(const std::string& path);

void write_instance(const SavedInstance& instance, const std::string& path);
SavedInstance read_instance(const std::string& path);

void write_weights_curve(const std::vector<WeightsCurveRow>& rows,
                         const std::string& path);
void write_forecast_scores(const std::vector<ForecastRow>& rows,
                           const std::string& path);
void write_histogram(const Histogram& hist, const std::string& path);
void write_transform_dumps(const ExperimentResult& result,
                           const std::string& dir);

// Runs the cycled experiment and writes every standard output file into
// cfg.output_dir. Returns the post-spinup summary.
ExperimentSummary run_and_write(const ExperimentConfig& cfg);

}  // namespace lmcpf
