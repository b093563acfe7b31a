// Command-line experiment runner: run, sweep, analyze.
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "granlab/config.hpp"
#include "granlab/error.hpp"
#include "granlab/experiment.hpp"

namespace {

using namespace granlab;
using nlohmann::json;

constexpr int kExitConfig = 2;

ExperimentConfig load_config(const std::string& path, const std::string& preset, const std::optional<std::uint64_t>& seed) {
    json doc;
    try {
        doc = experiment::read_json(path);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    ExperimentConfig cfg = parse_config(doc, preset.empty() ? std::nullopt : std::optional<std::string>(preset));
    if (seed) cfg.seed = *seed;
    return cfg;
}

json parse_value(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception&) {
        return text;  // bare words such as nsgan or table1-B
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"granlab: gradient-normalized GAN laboratory"};
    app.require_subcommand(1);

    std::string config_path, preset, out_dir, resume_path;
    std::optional<std::uint64_t> seed;

    auto* run = app.add_subcommand("run", "train one configuration");
    run->add_option("--config", config_path, "experiment config (JSON)")->required();
    run->add_option("--preset", preset, "Adam/n_dis preset, e.g. table1-E");
    run->add_option("--seed", seed, "override the master seed");
    run->add_option("--out", out_dir, "output directory (default: the config's out_dir)");
    run->add_option("--resume", resume_path, "continue from a snapshot.json");

    std::string axis;
    std::vector<std::string> values;
    std::vector<std::uint64_t> seeds;
    std::size_t jobs = 1;
    auto* sweep = app.add_subcommand("sweep", "run a value x seed grid over one config key");
    sweep->add_option("--config", config_path, "base experiment config (JSON)")->required();
    sweep->add_option("--preset", preset, "Adam/n_dis preset applied to the base config");
    sweep->add_option("--axis", axis, "config key to vary")->required();
    sweep->add_option("--values", values, "values for the axis (JSON literals or bare strings)")->required();
    sweep->add_option("--seeds", seeds, "seeds per value")->required()->expected(0, -1);
    sweep->add_option("--seed", seed, "ignored placeholder for symmetry with run");
    sweep->add_option("--jobs", jobs, "parallel cells")->check(CLI::PositiveNumber);
    sweep->add_option("--out", out_dir, "output directory")->required();

    experiment::AnalyzeOptions aopt;
    std::string weights, matrices;
    std::uint64_t aseed = 0;
    double adaptive = 0.0;
    auto* analyze = app.add_subcommand("analyze", "analysis reports on trained weights or matrices");
    analyze->add_option("command", aopt.command, "grad-survey | fd-probe | theorem1")
        ->required()
        ->check(CLI::IsMember({"grad-survey", "fd-probe", "theorem1"}));
    analyze->add_option("--weights", weights, "weights.json from a run");
    analyze->add_option("--samples", aopt.samples, "samples per origin (real, fake)");
    analyze->add_option("--seed", aseed, "sampling / suite seed");
    analyze->add_option("--deltas", aopt.deltas, "fd-probe step sizes");
    analyze->add_option("--adaptive", adaptive, "fd-probe: step at this fraction of the pattern-exit distance");
    analyze->add_option("--random", aopt.random_pairs, "theorem1: number of random pairs");
    analyze->add_option("--max-dim", aopt.max_dim, "theorem1: largest matrix dimension");
    analyze->add_option("--tol", aopt.tol, "theorem1: singular-value tolerance");
    analyze->add_option("--matrices", matrices, "theorem1: JSON {\"A\": [[..]], \"B\": [[..]]}");
    analyze->add_option("--out", out_dir, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            ExperimentConfig cfg = load_config(config_path, preset, seed);
            if (!out_dir.empty()) cfg.out_dir = out_dir;
            std::optional<json> snap;
            if (!resume_path.empty()) snap = experiment::read_json(resume_path);
            const experiment::RunOutcome r = experiment::run(cfg, cfg.out_dir, snap);
            std::cout << gan::summary_to_json(r.summary).dump(2) << '\n';
            if (r.exit_code != 0) std::cerr << "run aborted: non-finite loss\n";
            return r.exit_code;
        }
        if (*sweep) {
            ExperimentConfig cfg = load_config(config_path, preset, std::nullopt);
            experiment::SweepOptions so;
            so.axis = axis;
            for (const auto& v : values) so.values.push_back(parse_value(v));
            so.seeds = seeds;
            so.jobs = jobs;
            const experiment::SweepReport rep = experiment::sweep(cfg, so, out_dir);
            std::size_t failed = 0;
            for (const auto& c : rep.cells) {
                if (c.failed) {
                    ++failed;
                    std::cerr << axis << "=" << experiment::value_label(c.value) << " seed=" << c.seed
                              << " failed: " << c.error << '\n';
                }
            }
            std::cout << "sweep: " << rep.cells.size() << " runs, " << failed << " failed; wrote "
                      << out_dir << "/sweep.csv\n";
            return 0;
        }
        if (*analyze) {
            if (!weights.empty()) aopt.weights = weights;
            if (!matrices.empty()) aopt.matrices = matrices;
            if (adaptive > 0.0) aopt.adaptive_fraction = adaptive;
            aopt.seed = aseed;
            const json out = experiment::analyze(aopt, out_dir);
            json brief = out;
            brief.erase("records");
            std::cout << brief.dump(2) << '\n';
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
