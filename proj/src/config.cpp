#include "granlab/config.hpp"

#include <functional>
#include <map>

#include "granlab/error.hpp"

namespace granlab {
namespace {

using nlohmann::json;

struct Key {
    std::function<void(ExperimentConfig&, const json&)> set;
    std::function<json(const ExperimentConfig&)> get;
};

[[noreturn]] void bad(const std::string& key, const std::string& what) {
    throw ConfigError("config." + key + ": " + what);
}

double num(const std::string& key, const json& v) {
    if (!v.is_number()) bad(key, "expected a number");
    return v.get<double>();
}

std::uint64_t count(const std::string& key, const json& v) {
    if (!v.is_number_integer() || v.get<long long>() < 0) bad(key, "expected a non-negative integer");
    return v.get<std::uint64_t>();
}

bool flag(const std::string& key, const json& v) {
    if (!v.is_boolean()) bad(key, "expected true or false");
    return v.get<bool>();
}

std::string str(const std::string& key, const json& v) {
    if (!v.is_string()) bad(key, "expected a string");
    return v.get<std::string>();
}

std::vector<std::size_t> sizes(const std::string& key, const json& v) {
    if (!v.is_array()) bad(key, "expected an array of layer widths");
    std::vector<std::size_t> out;
    for (const auto& e : v) {
        const auto n = count(key, e);
        if (n == 0) bad(key, "layer widths must be positive");
        out.push_back(n);
    }
    return out;
}

template <class F>
auto parsed(const std::string& key, F&& f) {
    try {
        return f();
    } catch (const ConfigError& e) {
        bad(key, e.what());
    }
}

std::string factor_name(reg::GranFactor f) { return f == reg::GranFactor::quadratic ? "quadratic" : "linear"; }

std::string sampling_name(reg::PenaltySampling s) {
    switch (s) {
        case reg::PenaltySampling::interpolates: return "interpolates";
        case reg::PenaltySampling::reals: return "reals";
        case reg::PenaltySampling::fakes: return "fakes";
    }
    return "unknown";
}

reg::PenaltySampling parse_sampling(const std::string& s) {
    if (s == "interpolates") return reg::PenaltySampling::interpolates;
    if (s == "reals") return reg::PenaltySampling::reals;
    if (s == "fakes") return reg::PenaltySampling::fakes;
    throw ConfigError("unknown sampling '" + s + "'");
}

#define GRANLAB_NUM(name, field)                                                             \
    {                                                                                        \
        name, {                                                                              \
            [](ExperimentConfig& c, const json& v) { c.field = num(name, v); },              \
                [](const ExperimentConfig& c) { return json(c.field); }                      \
        }                                                                                    \
    }
#define GRANLAB_COUNT(name, field)                                                           \
    {                                                                                        \
        name, {                                                                              \
            [](ExperimentConfig& c, const json& v) {                                         \
                c.field = static_cast<decltype(c.field)>(count(name, v));                    \
            },                                                                               \
                [](const ExperimentConfig& c) { return json(c.field); }                      \
        }                                                                                    \
    }
#define GRANLAB_FLAG(name, field)                                                            \
    {                                                                                        \
        name, {                                                                              \
            [](ExperimentConfig& c, const json& v) { c.field = flag(name, v); },             \
                [](const ExperimentConfig& c) { return json(c.field); }                      \
        }                                                                                    \
    }
#define GRANLAB_ENUM(name, field, parse, print)                                              \
    {                                                                                        \
        name, {                                                                              \
            [](ExperimentConfig& c, const json& v) {                                         \
                c.field = parsed(name, [&] { return parse(str(name, v)); });                 \
            },                                                                               \
                [](const ExperimentConfig& c) { return json(print(c.field)); }               \
        }                                                                                    \
    }

const std::map<std::string, Key>& key_table() {
    static const std::map<std::string, Key> table = {
        {"preset",
         {[](ExperimentConfig& c, const json& v) { c.preset = str("preset", v); },
          [](const ExperimentConfig& c) { return json(c.preset); }}},
        GRANLAB_ENUM("dataset", dataset.kind, data::parse_dataset, data::dataset_name),
        GRANLAB_COUNT("n_modes", dataset.n_modes),
        GRANLAB_NUM("radius", dataset.radius),
        GRANLAB_NUM("spacing", dataset.spacing),
        GRANLAB_NUM("sigma", dataset.sigma),
        GRANLAB_NUM("moons_noise", dataset.noise),
        GRANLAB_COUNT("z_dim", z_dim),
        {"generator_hidden",
         {[](ExperimentConfig& c, const json& v) { c.generator_hidden = sizes("generator_hidden", v); },
          [](const ExperimentConfig& c) { return json(c.generator_hidden); }}},
        GRANLAB_ENUM("generator_activation", generator_activation, nn::parse_activation, nn::activation_name),
        GRANLAB_ENUM("generator_output", generator_output, nn::parse_activation, nn::activation_name),
        {"discriminator_hidden",
         {[](ExperimentConfig& c, const json& v) { c.discriminator_hidden = sizes("discriminator_hidden", v); },
          [](const ExperimentConfig& c) { return json(c.discriminator_hidden); }}},
        GRANLAB_ENUM("discriminator_activation", discriminator_activation, nn::parse_activation,
                     nn::activation_name),
        GRANLAB_NUM("leaky_slope", leaky_slope),
        GRANLAB_ENUM("regularizer", regularizer, parse_regularizer, regularizer_name),
        GRANLAB_NUM("K", lipschitz),
        GRANLAB_NUM("epsilon", epsilon),
        GRANLAB_ENUM("gran_factor", gran_factor,
                     [](const std::string& s) {
                         if (s == "quadratic") return reg::GranFactor::quadratic;
                         if (s == "linear") return reg::GranFactor::linear;
                         throw ConfigError("unknown gran_factor '" + s + "'");
                     },
                     factor_name),
        GRANLAB_FLAG("gran_detach", gran_detach),
        GRANLAB_COUNT("sn_power_iters", sn_power_iters),
        GRANLAB_NUM("sn_scale", sn_scale),
        GRANLAB_NUM("gp_lambda", gp_lambda),
        GRANLAB_NUM("gp_delta", gp_delta),
        GRANLAB_ENUM("gp_sampling", gp_sampling, parse_sampling, sampling_name),
        GRANLAB_FLAG("gp_one_sided", gp_one_sided),
        GRANLAB_NUM("clip_c", clip_c),
        GRANLAB_ENUM("loss", loss, loss::parse_loss, loss::loss_name),
        GRANLAB_ENUM("optimizer", optimizer,
                     [](const std::string& s) {
                         if (s == "adam") return OptimizerKind::adam;
                         if (s == "sgd") return OptimizerKind::sgd;
                         throw ConfigError("unknown optimizer '" + s + "'");
                     },
                     [](OptimizerKind k) { return std::string(k == OptimizerKind::adam ? "adam" : "sgd"); }),
        GRANLAB_NUM("alpha", adam.alpha),
        GRANLAB_NUM("beta1", adam.beta1),
        GRANLAB_NUM("beta2", adam.beta2),
        GRANLAB_NUM("eps_adam", adam.eps_adam),
        GRANLAB_FLAG("bias_correction", adam.bias_correction),
        GRANLAB_ENUM("schedule", schedule, optim::parse_schedule, optim::schedule_name),
        GRANLAB_COUNT("n_dis", n_dis),
        GRANLAB_COUNT("batch_size", batch_size),
        GRANLAB_COUNT("total_steps", total_steps),
        GRANLAB_COUNT("log_every", log_every),
        GRANLAB_COUNT("seed", seed),
        GRANLAB_COUNT("eval_samples", eval_samples),
        GRANLAB_COUNT("coverage_threshold", coverage_threshold),
        GRANLAB_NUM("coverage_radius_sigmas", coverage_radius_sigmas),
        GRANLAB_NUM("divergence_threshold", divergence_threshold),
        {"out_dir",
         {[](ExperimentConfig& c, const json& v) { c.out_dir = str("out_dir", v); },
          [](const ExperimentConfig& c) { return json(c.out_dir); }}},
    };
    return table;
}

#undef GRANLAB_NUM
#undef GRANLAB_COUNT
#undef GRANLAB_FLAG
#undef GRANLAB_ENUM

struct Preset {
    const char* name;
    double alpha;
    double beta1;
    double beta2;
    std::size_t n_dis;
};

// Adam / n_dis settings A-E; E is the default.
constexpr Preset kPresets[] = {
    {"table1-A", 1e-4, 0.5, 0.9, 5},   {"table1-B", 2e-4, 0.5, 0.999, 1}, {"table1-C", 1e-3, 0.5, 0.999, 5},
    {"table1-D", 1e-3, 0.9, 0.999, 5}, {"table1-E", 2e-4, 0.0, 0.9, 5},
};

}  // namespace

std::string regularizer_name(RegularizerKind kind) {
    switch (kind) {
        case RegularizerKind::none: return "none";
        case RegularizerKind::gran: return "gran";
        case RegularizerKind::grand: return "grand";
        case RegularizerKind::granc: return "granc";
        case RegularizerKind::spectral_norm: return "spectral_norm";
        case RegularizerKind::gradient_penalty: return "gradient_penalty";
        case RegularizerKind::r1: return "r1";
        case RegularizerKind::weight_clip: return "weight_clip";
    }
    return "unknown";
}

RegularizerKind parse_regularizer(const std::string& name) {
    for (auto k : {RegularizerKind::none, RegularizerKind::gran, RegularizerKind::grand, RegularizerKind::granc,
                   RegularizerKind::spectral_norm, RegularizerKind::gradient_penalty, RegularizerKind::r1,
                   RegularizerKind::weight_clip}) {
        if (regularizer_name(k) == name) return k;
    }
    throw ConfigError("unknown regularizer '" + name + "'");
}

nn::MlpSpec ExperimentConfig::generator_spec() const {
    nn::MlpSpec s{z_dim, {}};
    for (std::size_t w : generator_hidden) s.layers.push_back({w, generator_activation, leaky_slope});
    s.layers.push_back({2, generator_output, leaky_slope});
    return s;
}

nn::MlpSpec ExperimentConfig::discriminator_spec() const {
    nn::MlpSpec s{2, {}};
    for (std::size_t w : discriminator_hidden) s.layers.push_back({w, discriminator_activation, leaky_slope});
    s.layers.push_back({1, nn::Activation::identity, leaky_slope});
    return s;
}

reg::GranConfig ExperimentConfig::gran_config() const {
    reg::GranConfig g = reg::GranConfig::with_lipschitz(lipschitz, epsilon);
    g.factor = gran_factor;
    g.detach_factor = gran_detach;
    return g;
}

reg::PenaltyConfig ExperimentConfig::penalty_config() const {
    if (regularizer == RegularizerKind::r1) return reg::PenaltyConfig::r1(gp_lambda);
    return reg::PenaltyConfig{gp_delta, gp_lambda, gp_sampling, gp_one_sided};
}

bool ExperimentConfig::uses_gran() const {
    return regularizer == RegularizerKind::gran || regularizer == RegularizerKind::grand ||
           regularizer == RegularizerKind::granc;
}

void ExperimentConfig::validate() const {
    if (!(lipschitz > 0.0)) bad("K", "must be positive");
    if (!(epsilon > 0.0)) bad("epsilon", "must be positive");
    if (z_dim == 0) bad("z_dim", "must be positive");
    if (discriminator_activation == nn::Activation::tanh) {
        bad("discriminator_activation", "must be piecewise linear (relu, leaky_relu or identity)");
    }
    if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) bad("leaky_slope", "must lie in [0, 1)");
    if (!(dataset.mode_scale() > 0.0)) bad(dataset.kind == data::DatasetKind::two_moons ? "moons_noise" : "sigma",
                                           "must be positive");
    if (dataset.n_modes == 0) bad("n_modes", "must be positive");
    if (sn_power_iters < 1) bad("sn_power_iters", "must be >= 1");
    if (!(sn_scale > 0.0)) bad("sn_scale", "must be positive");
    if (!(gp_lambda >= 0.0)) bad("gp_lambda", "must be >= 0");
    if (!(gp_delta >= 0.0)) bad("gp_delta", "must be >= 0");
    if (!(clip_c > 0.0)) bad("clip_c", "must be positive");
    if (!(adam.alpha >= 0.0)) bad("alpha", "must be >= 0");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) bad("beta1", "must lie in [0, 1)");
    if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) bad("beta2", "must lie in [0, 1)");
    if (!(adam.eps_adam >= 0.0)) bad("eps_adam", "must be >= 0");
    if (n_dis == 0) bad("n_dis", "must be >= 1");
    if (batch_size == 0) bad("batch_size", "must be >= 1");
    if (log_every == 0) bad("log_every", "must be >= 1");
    if (eval_samples == 0) bad("eval_samples", "must be >= 1");
    if (!(coverage_radius_sigmas > 0.0)) bad("coverage_radius_sigmas", "must be positive");
    if (regularizer == RegularizerKind::grand && !loss::uses_sigmoid(loss)) {
        bad("loss", "grand pairs only with nsgan or nsgan_saturating, got " + loss::loss_name(loss));
    }
    if (regularizer == RegularizerKind::granc && loss::uses_sigmoid(loss)) {
        bad("loss", "granc pairs only with wasserstein, hinge or soft_hinge, got " + loss::loss_name(loss));
    }
}

std::vector<std::string> preset_names() {
    std::vector<std::string> out;
    for (const Preset& p : kPresets) out.emplace_back(p.name);
    return out;
}

void apply_preset(ExperimentConfig& cfg, const std::string& name) {
    for (const Preset& p : kPresets) {
        if (name == p.name) {
            cfg.preset = name;
            cfg.adam.alpha = p.alpha;
            cfg.adam.beta1 = p.beta1;
            cfg.adam.beta2 = p.beta2;
            cfg.n_dis = p.n_dis;
            return;
        }
    }
    throw ConfigError("config.preset: unknown preset '" + name + "'");
}

void set_config_key(ExperimentConfig& cfg, const std::string& key, const json& value) {
    const auto& table = key_table();
    auto it = table.find(key);
    if (it == table.end()) throw ConfigError("config." + key + ": unknown key");
    it->second.set(cfg, value);
}

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& [k, _] : key_table()) out.push_back(k);
    return out;
}

ExperimentConfig parse_config(const json& doc, const std::optional<std::string>& preset_override) {
    if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
    if (!doc.contains("dataset")) throw ConfigError("config.dataset: required key missing");
    for (const auto& [k, _] : doc.items()) {
        if (!key_table().count(k)) throw ConfigError("config." + k + ": unknown key");
    }
    ExperimentConfig cfg;
    const std::string preset = preset_override
                                   ? *preset_override
                                   : (doc.contains("preset") ? str("preset", doc.at("preset")) : std::string());
    if (!preset.empty()) apply_preset(cfg, preset);
    for (const auto& [k, v] : doc.items()) {
        if (k == "preset") continue;
        set_config_key(cfg, k, v);
    }
    cfg.validate();
    return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
    json out = json::object();
    for (const auto& [k, key] : key_table()) out[k] = key.get(cfg);
    return out;
}

}  // namespace granlab
