#include "granlab/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

#include "granlab/analysis.hpp"
#include "granlab/csv.hpp"
#include "granlab/error.hpp"

namespace granlab::experiment {
namespace {

using nlohmann::json;

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create directory " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    return os;
}

std::mt19937_64 analysis_stream(std::uint64_t seed, std::uint32_t tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag};
    return std::mt19937_64(seq);
}

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
    mean = sd = 0.0;
    if (xs.empty()) return;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    for (double x : xs) sd += (x - mean) * (x - mean);
    sd = std::sqrt(sd / static_cast<double>(xs.size()));
}

std::string safe_label(std::string s) {
    for (char& c : s) {
        const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_' || c == '+';
        if (!ok) c = '_';
    }
    return s;
}

struct LoadedModel {
    ExperimentConfig cfg;
    nn::Mlp generator;
    nn::Mlp critic;
    std::optional<reg::GranConfig> gran;
};

LoadedModel load_model(const fs::path& path) {
    json doc;
    try {
        doc = read_json(path);
    } catch (const json::exception& e) {
        throw ConfigError("weights: " + path.string() + ": " + e.what());
    }
    try {
        LoadedModel m{parse_config(doc.at("config")), nn::mlp_from_json(doc.at("generator")),
                      nn::mlp_from_json(doc.at("discriminator_effective")), std::nullopt};
        const json& norm = doc.at("normalization");
        if (!norm.is_null()) {
            reg::GranConfig g;
            g.tau = norm.at("tau").get<double>();
            g.epsilon = norm.at("epsilon").get<double>();
            g.factor = norm.at("factor").get<std::string>() == "linear" ? reg::GranFactor::linear
                                                                          : reg::GranFactor::quadratic;
            g.validate();
            m.gran = g;
        }
        if (!m.critic.is_piecewise_linear() || m.critic.output_dim() != 1) {
            throw ConfigError("weights: discriminator must be a scalar piecewise-linear network");
        }
        return m;
    } catch (const json::exception& e) {
        throw ConfigError("weights: " + path.string() + ": " + e.what());
    }
}

std::vector<analysis::ProbeSet> probe_sets(const LoadedModel& m, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 data_rng = analysis_stream(seed, 1);
    std::mt19937_64 noise_rng = analysis_stream(seed, 2);
    const data::ToyDataset ds(m.cfg.dataset);
    return {{"real", ds.sample(n, data_rng)}, {"fake", gan::sample_generator(m.generator, n, noise_rng)}};
}

Tensor parse_matrix(const json& j, const std::string& name) {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    if (rows.empty() || rows[0].empty()) throw ConfigError("matrices." + name + ": empty matrix");
    std::vector<double> flat;
    for (const auto& r : rows) {
        if (r.size() != rows[0].size()) throw ConfigError("matrices." + name + ": ragged rows");
        flat.insert(flat.end(), r.begin(), r.end());
    }
    return Tensor(Shape{rows.size(), rows[0].size()}, std::move(flat));
}

}  // namespace

json read_json(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read " + path.string());
    return json::parse(is);
}

void write_json(const fs::path& path, const json& doc) {
    std::ofstream os = open_out(path);
    os << doc.dump(2) << '\n';
}

void write_metrics_csv(std::ostream& os, const std::vector<gan::MetricsRow>& rows) {
    csv::write_row(os, gan::metrics_header());
    for (const auto& r : rows) csv::write_row(os, gan::metrics_fields(r));
}

json weights_document(const gan::Trainer& trainer) {
    const ExperimentConfig& cfg = trainer.config();
    const gan::Critic critic(cfg, trainer.state().discriminator, &trainer.state().spectral);
    json norm = nullptr;
    if (critic.gran()) {
        const reg::GranConfig& g = *critic.gran();
        norm = {{"K", g.lipschitz()},
                {"tau", g.tau},
                {"epsilon", g.epsilon},
                {"factor", g.factor == reg::GranFactor::linear ? "linear" : "quadratic"}};
    }
    return {{"config", config_to_json(cfg)},
            {"generator", nn::to_json(trainer.state().generator)},
            {"discriminator", nn::to_json(trainer.state().discriminator)},
            {"discriminator_effective", nn::to_json(critic.effective_network())},
            {"normalization", norm}};
}

RunOutcome run(const ExperimentConfig& cfg, const fs::path& out_dir, const std::optional<json>& resume) {
    cfg.validate();
    ensure_dir(out_dir);
    write_json(out_dir / "config.json", config_to_json(cfg));
    gan::Trainer trainer = resume ? gan::Trainer(cfg, *resume) : gan::Trainer(cfg);
    const gan::TrainResult result = gan::finish(trainer);
    {
        std::ofstream os = open_out(out_dir / "metrics.csv");
        write_metrics_csv(os, result.history);
    }
    write_json(out_dir / "weights.json", weights_document(trainer));
    write_json(out_dir / "snapshot.json", trainer.snapshot());
    write_json(out_dir / "summary.json", gan::summary_to_json(result.summary));
    return {result.summary, result.summary.nan_flag ? kExitNan : 0};
}

std::string value_label(const json& value) {
    if (value.is_string()) return value.get<std::string>();
    if (value.is_number_float()) return csv::format_double(value.get<double>());
    return value.dump();
}

SweepReport sweep(const ExperimentConfig& base, const SweepOptions& opt, const fs::path& out_dir) {
    if (opt.seeds.empty()) throw ConfigError("sweep: the seed list is empty");
    if (opt.values.empty()) throw ConfigError("sweep: the value list is empty");
    const auto keys = config_keys();
    if (std::find(keys.begin(), keys.end(), opt.axis) == keys.end() || opt.axis == "seed") {
        throw ConfigError("sweep: unknown axis key '" + opt.axis + "'");
    }
    ensure_dir(out_dir);

    SweepReport report;
    for (const json& v : opt.values) {
        for (std::uint64_t s : opt.seeds) report.cells.push_back({v, s, false, {}, {}});
    }
    std::atomic<std::size_t> next{0};
    const auto worker = [&]() {
        for (std::size_t i = next++; i < report.cells.size(); i = next++) {
            SweepCell& cell = report.cells[i];
            try {
                ExperimentConfig cfg = base;
                if (opt.axis == "preset") {
                    apply_preset(cfg, cell.value.get<std::string>());
                } else {
                    set_config_key(cfg, opt.axis, cell.value);
                }
                cfg.seed = cell.seed;
                const fs::path dir = out_dir / (opt.axis + "=" + safe_label(value_label(cell.value))) /
                                     ("seed=" + std::to_string(cell.seed));
                cfg.out_dir = dir.string();
                cell.summary = run(cfg, dir).summary;
            } catch (const std::exception& e) {
                cell.failed = true;
                cell.error = e.what();
            }
        }
    };
    const std::size_t jobs = std::max<std::size_t>(1, std::min(opt.jobs, report.cells.size()));
    std::vector<std::thread> pool;
    for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    for (std::size_t vi = 0; vi < opt.values.size(); ++vi) {
        SweepAggregate agg;
        agg.value = opt.values[vi];
        std::vector<double> cov, qual, gn, ggn;
        for (std::size_t si = 0; si < opt.seeds.size(); ++si) {
            const SweepCell& c = report.cells[vi * opt.seeds.size() + si];
            ++agg.runs;
            if (c.failed) {
                ++agg.failed;
                continue;
            }
            agg.nan_runs += c.summary.nan_flag ? 1 : 0;
            agg.diverged += c.summary.diverged ? 1 : 0;
            cov.push_back(static_cast<double>(c.summary.final_coverage));
            qual.push_back(c.summary.final_high_quality_fraction);
            gn.push_back(c.summary.max_grad_norm);
            ggn.push_back(c.summary.max_gen_grad_norm);
        }
        mean_std(cov, agg.coverage_mean, agg.coverage_std);
        mean_std(qual, agg.quality_mean, agg.quality_std);
        mean_std(gn, agg.grad_norm_mean, agg.grad_norm_std);
        mean_std(ggn, agg.gen_grad_norm_mean, agg.gen_grad_norm_std);
        report.aggregates.push_back(agg);
    }

    using csv::format_double;
    {
        std::ofstream os = open_out(out_dir / "sweep_runs.csv");
        csv::write_row(os, {opt.axis, "seed", "status", "error", "steps_completed", "final_coverage",
                            "final_high_quality_fraction", "nan_flag", "diverged", "max_grad_norm",
                            "max_gen_grad_norm", "wall_seconds"});
        for (const SweepCell& c : report.cells) {
            const gan::Summary& s = c.summary;
            csv::write_row(os, {value_label(c.value), std::to_string(c.seed), c.failed ? "failed" : "ok", c.error,
                                std::to_string(s.steps_completed), std::to_string(s.final_coverage),
                                format_double(s.final_high_quality_fraction), s.nan_flag ? "1" : "0",
                                s.diverged ? "1" : "0", format_double(s.max_grad_norm),
                                format_double(s.max_gen_grad_norm), format_double(s.wall_seconds)});
        }
    }
    {
        std::ofstream os = open_out(out_dir / "sweep.csv");
        csv::write_row(os, {opt.axis, "runs", "failed", "nan_runs", "diverged", "coverage_mean", "coverage_std",
                            "quality_mean", "quality_std", "max_grad_norm_mean", "max_grad_norm_std",
                            "max_gen_grad_norm_mean", "max_gen_grad_norm_std"});
        for (const SweepAggregate& a : report.aggregates) {
            csv::write_row(os, {value_label(a.value), std::to_string(a.runs), std::to_string(a.failed),
                                std::to_string(a.nan_runs), std::to_string(a.diverged), format_double(a.coverage_mean),
                                format_double(a.coverage_std), format_double(a.quality_mean),
                                format_double(a.quality_std), format_double(a.grad_norm_mean),
                                format_double(a.grad_norm_std), format_double(a.gen_grad_norm_mean),
                                format_double(a.gen_grad_norm_std)});
        }
    }
    return report;
}

json analyze(const AnalyzeOptions& opt, const fs::path& out_dir) {
    ensure_dir(out_dir);
    if (opt.command == "theorem1") {
        json out;
        if (opt.matrices) {
            const json doc = read_json(*opt.matrices);
            const Tensor a = parse_matrix(doc.at("A"), "A");
            const Tensor b = parse_matrix(doc.at("B"), "B");
            const analysis::Theorem1Record r = analysis::theorem1_check(a, b, opt.tol);
            out = {{"sigma1_a", r.sigma1_a},   {"sigma1_b", r.sigma1_b}, {"sigma1_ba", r.sigma1_ba},
                   {"alignment", r.alignment}, {"tight", r.tight},       {"aligned", r.aligned},
                   {"predicate_holds", r.predicate_holds}};
        } else {
            analysis::SuiteOptions so;
            so.n_pairs = opt.random_pairs;
            so.max_dim = opt.max_dim;
            so.seed = opt.seed;
            so.tol = opt.tol;
            out = analysis::suite_to_json(analysis::random_theorem1_suite(so), so);
            const analysis::SubmultReport sm =
                analysis::submultiplicativity_suite(opt.random_pairs, opt.max_dim, opt.seed, 1e-10);
            out["submultiplicativity"] = {
                {"pairs", sm.pairs}, {"failures", sm.failures}, {"worst_excess", sm.worst_excess}};
        }
        write_json(out_dir / "theorem1.json", out);
        return out;
    }

    if (!opt.weights) throw ConfigError("analyze " + opt.command + ": --weights is required");
    const LoadedModel model = load_model(*opt.weights);
    const analysis::ScalarField h = analysis::make_field(model.critic, model.gran);
    const std::vector<analysis::ProbeSet> sets = probe_sets(model, opt.samples, opt.seed);
    const double k = model.gran ? model.gran->lipschitz() : std::nan("");

    if (opt.command == "grad-survey") {
        json out = {{"normalized", model.gran.has_value()}, {"K", model.gran ? json(k) : json(nullptr)}};
        std::ofstream os = open_out(out_dir / "grad_survey.csv");
        csv::write_row(os, {"origin", "index", "grad_norm"});
        std::vector<double> all;
        for (const auto& set : sets) {
            const analysis::SurveyReport r = analysis::grad_norm_survey(h, set.samples);
            for (std::size_t i = 0; i < r.norms.size(); ++i) {
                csv::write_row(os, {set.origin, std::to_string(i), csv::format_double(r.norms[i])});
            }
            all.insert(all.end(), r.norms.begin(), r.norms.end());
            out[set.origin] = analysis::quantiles_to_json(r.all);
        }
        const analysis::Quantiles q = analysis::quantiles(all);
        out["all"] = analysis::quantiles_to_json(q);
        if (model.gran) out["span_over_K"] = q.span() / k;
        write_json(out_dir / "grad_survey.json", out);
        return out;
    }

    if (opt.command == "fd-probe") {
        analysis::ProbeReport report;
        if (opt.adaptive_fraction) {
            for (const auto& set : sets) {
                analysis::ProbeReport r = analysis::adaptive_probe(h, model.critic, set, *opt.adaptive_fraction, 0.5);
                report.rows.insert(report.rows.end(), r.rows.begin(), r.rows.end());
                report.groups.insert(report.groups.end(), r.groups.begin(), r.groups.end());
                report.skipped_zero_gradient += r.skipped_zero_gradient;
            }
        } else {
            report = analysis::fd_probe(h, sets, opt.deltas);
        }
        {
            std::ofstream os = open_out(out_dir / "fd_probe.csv");
            analysis::write_probe_csv(os, report);
        }
        json groups = json::array();
        for (const auto& g : report.groups) {
            json q = analysis::quantiles_to_json(g.summary);
            q["delta"] = opt.adaptive_fraction ? json("adaptive") : json(g.delta);
            q["origin"] = g.origin;
            groups.push_back(std::move(q));
        }
        json out = {{"normalized", model.gran.has_value()},
                    {"skipped_zero_gradient", report.skipped_zero_gradient},
                    {"groups", std::move(groups)}};
        write_json(out_dir / "fd_probe.json", out);
        return out;
    }

    throw ConfigError("analyze: unknown command '" + opt.command + "'");
}

}  // namespace granlab::experiment
