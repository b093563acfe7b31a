#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "granlab/config.hpp"
#include "granlab/gan.hpp"

namespace granlab::experiment {

namespace fs = std::filesystem;

nlohmann::json read_json(const fs::path& path);
void write_json(const fs::path& path, const nlohmann::json& doc);

/// Exit status of a run that aborted on a non-finite loss.
inline constexpr int kExitNan = 3;

struct RunOutcome {
    gan::Summary summary;
    int exit_code = 0;
};

/// Trains `cfg` and writes metrics.csv, config.json, weights.json,
/// snapshot.json and summary.json into `out_dir`. With `resume`, training
/// continues from a snapshot document instead of starting fresh.
RunOutcome run(const ExperimentConfig& cfg, const fs::path& out_dir,
               const std::optional<nlohmann::json>& resume = std::nullopt);

void write_metrics_csv(std::ostream& os, const std::vector<gan::MetricsRow>& rows);

/// weights.json: both networks, the critic with spectral normalization folded
/// in, and the GraN settings needed to rebuild h.
nlohmann::json weights_document(const gan::Trainer& trainer);

struct SweepOptions {
    std::string axis;
    std::vector<nlohmann::json> values;
    std::vector<std::uint64_t> seeds;
    std::size_t jobs = 1;
};

struct SweepCell {
    nlohmann::json value;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    gan::Summary summary;
};

struct SweepAggregate {
    nlohmann::json value;
    std::size_t runs = 0;
    std::size_t failed = 0;
    std::size_t nan_runs = 0;
    std::size_t diverged = 0;
    double coverage_mean = 0.0, coverage_std = 0.0;
    double quality_mean = 0.0, quality_std = 0.0;
    double grad_norm_mean = 0.0, grad_norm_std = 0.0;
    double gen_grad_norm_mean = 0.0, gen_grad_norm_std = 0.0;
};

struct SweepReport {
    std::vector<SweepCell> cells;  ///< value-major, then seed
    std::vector<SweepAggregate> aggregates;
};

/// Runs every (value, seed) cell, up to `jobs` at once, each in its own
/// directory under `out_dir`. A failing cell is recorded and the sweep goes on.
/// Writes sweep_runs.csv and sweep.csv (per-value mean and population std).
SweepReport sweep(const ExperimentConfig& base, const SweepOptions& opt, const fs::path& out_dir);

std::string value_label(const nlohmann::json& value);

struct AnalyzeOptions {
    std::string command;  ///< grad-survey, fd-probe or theorem1
    std::optional<fs::path> weights;
    std::size_t samples = 1000;
    std::uint64_t seed = 0;
    std::vector<double> deltas{0.1, 0.5, 1.0, 2.0, 5.0};
    /// fd-probe: per-sample steps at this fraction of the pattern-exit distance.
    std::optional<double> adaptive_fraction;
    std::size_t random_pairs = 0;
    std::size_t max_dim = 16;
    double tol = 1e-8;
    std::optional<fs::path> matrices;
};

/// Writes the report files for `opt.command` into `out_dir` and returns the
/// JSON summary that was written.
nlohmann::json analyze(const AnalyzeOptions& opt, const fs::path& out_dir);

}  // namespace granlab::experiment
