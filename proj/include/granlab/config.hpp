#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "granlab/datasets.hpp"
#include "granlab/losses.hpp"
#include "granlab/nn.hpp"
#include "granlab/optim.hpp"
#include "granlab/regularizers.hpp"

namespace granlab {

enum class RegularizerKind {
    none,
    gran,  ///< GraND for cross-entropy losses, GraNC otherwise
    grand,
    granc,
    spectral_norm,
    gradient_penalty,
    r1,
    weight_clip,
};

std::string regularizer_name(RegularizerKind kind);
RegularizerKind parse_regularizer(const std::string& name);

enum class OptimizerKind { adam, sgd };

/// Every knob of one training run. Serialized as a flat JSON object.
struct ExperimentConfig {
    std::string preset;

    data::DatasetSpec dataset;

    std::size_t z_dim = 16;
    std::vector<std::size_t> generator_hidden{64, 64};
    nn::Activation generator_activation = nn::Activation::relu;
    nn::Activation generator_output = nn::Activation::identity;
    std::vector<std::size_t> discriminator_hidden{32, 32};
    nn::Activation discriminator_activation = nn::Activation::relu;
    double leaky_slope = 0.2;

    RegularizerKind regularizer = RegularizerKind::gran;
    double lipschitz = 0.83;  ///< K = 1 / tau
    double epsilon = 0.1;
    reg::GranFactor gran_factor = reg::GranFactor::quadratic;
    bool gran_detach = false;
    int sn_power_iters = 1;
    double sn_scale = 1.0;
    double gp_lambda = 10.0;
    double gp_delta = 1.0;
    reg::PenaltySampling gp_sampling = reg::PenaltySampling::interpolates;
    bool gp_one_sided = false;
    double clip_c = 0.01;

    loss::LossKind loss = loss::LossKind::nsgan;

    OptimizerKind optimizer = OptimizerKind::adam;
    optim::AdamConfig adam{};
    optim::ScheduleKind schedule = optim::ScheduleKind::constant;

    std::size_t n_dis = 5;
    std::size_t batch_size = 64;
    std::uint64_t total_steps = 1000;
    std::uint64_t log_every = 100;
    std::uint64_t seed = 0;

    std::size_t eval_samples = 2000;
    std::size_t coverage_threshold = 20;
    double coverage_radius_sigmas = 3.0;
    double divergence_threshold = 0.5;

    std::string out_dir = "out";

    /// Resolved D construction helpers.
    nn::MlpSpec generator_spec() const;
    nn::MlpSpec discriminator_spec() const;
    reg::GranConfig gran_config() const;
    reg::PenaltyConfig penalty_config() const;
    bool uses_gran() const;
    /// Throws ConfigError on invalid values or an invalid loss/regularizer pairing.
    void validate() const;
};

/// Names of the Adam/n_dis presets: "table1-A" ... "table1-E".
std::vector<std::string> preset_names();
/// Applies a preset's alpha, beta1, beta2 and n_dis.
void apply_preset(ExperimentConfig& cfg, const std::string& name);

/// Defaults, then the preset (from `preset_override` or the document's
/// "preset" key), then every other key of `doc`. Unknown keys and type
/// errors raise ConfigError naming the key; "dataset" is required.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::optional<std::string>& preset_override = {});
/// Fully resolved document; parse_config(config_to_json(c)) == c.
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// Sets one key of a config from a JSON value, with the same checking as parse_config.
void set_config_key(ExperimentConfig& cfg, const std::string& key, const nlohmann::json& value);
std::vector<std::string> config_keys();

}  // namespace granlab
