#pragma once

#include <functional>
#include <random>
#include <vector>

#include "granlab/autodiff.hpp"
#include "granlab/nn.hpp"

namespace granlab::reg {

/// Normalization factor R(n) applied to f.
enum class GranFactor {
    /// n / (n^2 + eps)
    quadratic,
    /// 1 / (n + eps), ablation variant
    linear,
};

struct GranConfig {
    double tau = 1.0 / 0.83;  ///< temperature; the piecewise Lipschitz constant is K = 1 / tau
    double epsilon = 0.1;
    GranFactor factor = GranFactor::quadratic;
    /// Treat R(n) as a constant during parameter updates.
    bool detach_factor = false;

    double lipschitz() const { return 1.0 / tau; }
    static GranConfig with_lipschitz(double k, double epsilon);
    void validate() const;
};

/// Gradient-normalized output g = (f / tau) R(||grad_x f||).
///
/// `f` is the recorded network output at `x`: a single element for x of shape
/// [d], or shape [B] for a batch x of shape [B, d] (rows independent). The
/// input gradient is recorded with create_graph, so parameter gradients of g
/// flow through the factor. Where ||grad_x f|| = 0 the result is 0.
ad::Var gran(const ad::Var& f, const ad::Var& x, const GranConfig& cfg);

/// D(x) = sigmoid(g(x)).
ad::Var grand_discriminator(const ad::Var& f, const ad::Var& x, const GranConfig& cfg);
/// D(x) = g(x).
ad::Var granc_critic(const ad::Var& f, const ad::Var& x, const GranConfig& cfg);

/// Power-iteration vectors for one weight matrix; persist across steps.
struct SpectralNormState {
    Tensor u;  // [rows]
    Tensor v;  // [cols]
};

SpectralNormState init_spectral_state(const Tensor& weight, std::mt19937_64& rng);
/// Runs `iters` rounds of v <- W^T u / |.|, u <- W v / |.|.
void power_iterate(const Tensor& weight, SpectralNormState& state, int iters);
double sigma_estimate(const Tensor& weight, const SpectralNormState& state);

/// W / sigma_hat after `iters` power-iteration updates (sigma_hat = u^T W v).
/// Throws NumericError when sigma_hat < 1e-12.
Tensor spectral_normalize(const Tensor& weight, SpectralNormState& state, int iters);
/// Graph version: u and v enter as constants, sigma_hat = u^T W v stays
/// differentiable in W.
ad::Var spectral_normalize(const ad::Var& weight, SpectralNormState& state, int iters);
/// As above with the current state, without further power iteration.
ad::Var spectral_normalize(const ad::Var& weight, const SpectralNormState& state);

enum class PenaltySampling { interpolates, reals, fakes };

struct PenaltyConfig {
    double delta = 1.0;
    double lambda = 10.0;
    PenaltySampling sampling = PenaltySampling::interpolates;
    bool one_sided = false;

    /// Zero-centred penalty on reals.
    static PenaltyConfig r1(double lambda);
    void validate() const;
};

/// Maps a batch [B, d] to per-sample outputs [B].
using BatchFn = std::function<ad::Var(const ad::Var&)>;

/// lambda * mean_i (||grad d(x_i)|| - delta)^2, with the difference passed
/// through relu first when one-sided. Recorded with create_graph so it can
/// be minimized over the parameters captured by `d_fn`.
ad::Var gradient_penalty(const BatchFn& d_fn, const Tensor& reals, const Tensor& fakes, const PenaltyConfig& cfg,
                         std::mt19937_64& rng);

/// Clamps every weight and bias into [-c, c].
nn::Mlp weight_clip(nn::Mlp net, double c);

}  // namespace granlab::reg
