#pragma once

#include "mvrds/scenario.hpp"

#include <map>
#include <string>
#include <vector>

namespace mvrds {

struct SuiteVerdict {
    bool pass = true;
    std::map<std::string, double> values;   // measured quantities, aggregated over seeds
    std::string error;                      // non-empty when the suite threw
};

struct RunResult {
    bool pass = true;                                // every requested suite passed
    std::map<std::string, SuiteVerdict> suites;
    std::vector<std::string> files;                  // artifacts written, relative to the output directory
};

struct RunOptions {
    std::string output_override;   // replaces cfg.output when non-empty
    std::size_t jobs = 1;          // worker threads over the seed panel
    bool checks = true;            // false: simulation outputs only
};

/// Runs every seed of the panel, writes per-seed curve summaries, point
/// paths and metric curves, evaluates the requested suites, and writes
/// verdict.json and config.yaml. Suite failures are recorded; only invalid
/// configurations or I/O errors throw.
RunResult run_scenario(const ScenarioConfig& cfg, const RunOptions& opt = {});

/// Output directory actually used: opt.output_override, then the
/// MVRDS_OUTPUT_DIR environment variable, then cfg.output.
std::string resolve_output_dir(const ScenarioConfig& cfg, const RunOptions& opt);

enum class PlotKind { Moments, Defects, MetricCurves };
PlotKind plot_kind_from_string(const std::string& s);
std::string to_string(PlotKind k);

/// Tidy long-format table built from the artifacts in `run_dir`; returns
/// the path written (plot_<kind>.tsv). Throws when the artifacts are missing.
std::string emit_plot_data(const std::string& run_dir, PlotKind kind);

}  // namespace mvrds
