#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "granlab/autodiff.hpp"
#include "granlab/config.hpp"
#include "granlab/datasets.hpp"
#include "granlab/nn.hpp"
#include "granlab/optim.hpp"
#include "granlab/regularizers.hpp"

namespace granlab::gan {

struct MetricsRow {
    std::uint64_t step = 0;
    double d_loss = 0.0;
    double g_loss = 0.0;
    /// ||grad_x h|| on the last D batch; h is g for GraN models and f otherwise.
    double grad_norm_real_mean = 0.0;
    double grad_norm_real_min = 0.0;
    double grad_norm_real_max = 0.0;
    double grad_norm_fake_mean = 0.0;
    double grad_norm_fake_min = 0.0;
    double grad_norm_fake_max = 0.0;
    /// Per-sample ||d(B * L_G)/dx_i|| on the last G batch.
    double gen_grad_norm_mean = 0.0;
    double gen_grad_norm_max = 0.0;
    std::size_t mode_coverage = 0;
    double high_quality_fraction = 0.0;
    bool nan_flag = false;

    friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

std::vector<std::string> metrics_header();
std::vector<std::string> metrics_fields(const MetricsRow& row);

struct Coverage {
    std::size_t covered_modes = 0;
    double high_quality_fraction = 0.0;
};

/// Each sample goes to its nearest centre; a mode is covered when at least
/// `threshold_count` samples sit within `assign_radius` of it. The fraction
/// counts samples within `assign_radius` of any centre.
Coverage mode_coverage(const Tensor& samples, const Tensor& centers, std::size_t threshold_count,
                       double assign_radius);

/// n points G(z), z ~ N(0, I) of dimension G.input_dim(), drawn from `seed`.
Tensor sample_generator(const nn::Mlp& generator, std::size_t n, std::uint64_t seed);
Tensor sample_generator(const nn::Mlp& generator, std::size_t n, std::mt19937_64& rng);

/// Independent random streams derived from the master seed.
struct RngStreams {
    std::mt19937_64 data;
    std::mt19937_64 noise;
    std::mt19937_64 penalty;
    std::mt19937_64 eval;

    static RngStreams from_seed(std::uint64_t seed);
};

struct RunStats {
    double max_grad_norm = 0.0;      ///< over logged ||grad_x h|| on reals and fakes
    double min_grad_norm = 0.0;      ///< matching minimum of the last logged batch
    double max_gen_grad_norm = 0.0;  ///< over every G step
    std::size_t g_steps_measured = 0;
};

struct TrainState {
    nn::Mlp generator;
    nn::Mlp discriminator;
    optim::AdamState g_opt;
    optim::AdamState d_opt;
    std::vector<reg::SpectralNormState> spectral;
    std::uint64_t step = 0;
    RngStreams rng;
    RunStats stats;
    bool nan_flag = false;
};

/// Per-sample D output before any sigmoid: g for GraN models, K-scaled f
/// for spectral normalization, f otherwise.
class Critic {
public:
    Critic(const ExperimentConfig& cfg, const nn::Mlp& net, const std::vector<reg::SpectralNormState>* spectral);

    /// The effective network: spectral normalization and its output scale folded in.
    nn::Mlp effective_network() const;
    /// Builds h(x) for a batch [B, 2]; x must require a gradient for GraN.
    ad::Var operator()(const nn::BoundMlp& bound, const ad::Var& x) const;
    bool normalized() const { return gran_.has_value(); }
    const std::optional<reg::GranConfig>& gran() const { return gran_; }

private:
    const ExperimentConfig* cfg_;
    const nn::Mlp* net_;
    const std::vector<reg::SpectralNormState>* spectral_;
    std::optional<reg::GranConfig> gran_;
};

/// ||grad_x h(x_i)|| for every row of `x`.
std::vector<double> input_grad_norms(const std::function<ad::Var(const ad::Var&)>& h, const Tensor& x);

class Trainer {
public:
    explicit Trainer(ExperimentConfig cfg);
    /// Resumes from `snapshot()` output; training continues bit-for-bit.
    Trainer(ExperimentConfig cfg, const nlohmann::json& snapshot);

    /// One generator update preceded by n_dis critic updates. Returns the
    /// metrics row when this step is logged (or aborted on a NaN).
    std::optional<MetricsRow> step();
    bool finished() const;
    bool aborted() const { return state_.nan_flag; }

    const TrainState& state() const { return state_; }
    const ExperimentConfig& config() const { return cfg_; }
    const data::ToyDataset& dataset() const { return dataset_; }
    nlohmann::json snapshot() const;
    MetricsRow measure();

private:
    double d_update(double lr);
    double g_update(double lr);
    nn::BoundMlp bind_discriminator(bool trainable, bool iterate_spectral, std::vector<ad::Var>& leaves);
    void apply(nn::Mlp& net, optim::AdamState& opt, const std::vector<ad::Var>& leaves,
               const std::vector<Tensor>& grads, double lr, const std::string& prefix);

    ExperimentConfig cfg_;
    data::ToyDataset dataset_;
    TrainState state_;
    Tensor last_reals_;
    Tensor last_fakes_;
    double last_d_loss_ = 0.0;
    double last_g_loss_ = 0.0;
    double last_gen_mean_ = 0.0;
    double last_gen_max_ = 0.0;
};

struct Summary {
    std::uint64_t steps_completed = 0;
    std::size_t final_coverage = 0;
    double final_high_quality_fraction = 0.0;
    bool nan_flag = false;
    bool diverged = false;
    double max_grad_norm = 0.0;
    double max_gen_grad_norm = 0.0;
    double final_grad_norm_span = 0.0;  ///< max - min of ||grad_x h|| in the last logged batch
    double wall_seconds = 0.0;          ///< time spent in finish()
};

nlohmann::json summary_to_json(const Summary& s);

struct TrainResult {
    std::vector<MetricsRow> history;
    TrainState final_state;
    Summary summary;
};

/// Runs `cfg.total_steps` generator steps from scratch.
TrainResult train(const ExperimentConfig& cfg);
/// Drives an existing trainer to completion, appending logged rows.
TrainResult finish(Trainer& trainer, std::vector<MetricsRow> history = {});

nlohmann::json rng_to_json(const std::mt19937_64& rng);
void rng_from_json(const nlohmann::json& doc, std::mt19937_64& rng);

}  // namespace granlab::gan
