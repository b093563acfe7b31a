#include "granlab/regularizers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "granlab/error.hpp"

namespace granlab::reg {
namespace {

double norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

void check_finite(const Tensor& t, const char* what) {
    if (!t.all_finite()) throw NumericError(std::string("gran: non-finite ") + what);
}

}  // namespace

GranConfig GranConfig::with_lipschitz(double k, double epsilon) {
    if (!(k > 0.0)) throw ConfigError("gran: K must be positive");
    GranConfig cfg;
    cfg.tau = 1.0 / k;
    cfg.epsilon = epsilon;
    cfg.validate();
    return cfg;
}

void GranConfig::validate() const {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("gran: tau must be positive");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("gran: epsilon must be positive");
}

ad::Var gran(const ad::Var& f, const ad::Var& x, const GranConfig& cfg) {
    cfg.validate();
    check_finite(f.value(), "f");
    const bool batched = x.shape().size() == 2;
    if (batched ? f.shape() != Shape{x.shape()[0]} : f.value().size() != 1) {
        throw ShapeError("gran: f of shape " + shape_str(f.shape()) + " does not match x of shape " +
                         shape_str(x.shape()));
    }
    const ad::Var fsum = batched ? ad::sum(f) : f;
    const ad::Var grad = ad::backward(fsum, {x}, /*create_graph=*/true)[0];
    ad::Var n = batched ? ad::row_norm(grad) : ad::reshape(ad::l2_norm(grad), f.shape());
    check_finite(n.value(), "gradient norm");
    ad::Var factor;
    if (cfg.factor == GranFactor::quadratic) {
        factor = ad::safe_div(n, ad::add_scalar(ad::square(n), cfg.epsilon));
    } else {
        // 1 / (n + eps) does not vanish at n = 0; keep g = 0 there.
        const Tensor mask = [&] {
            Tensor m(n.shape());
            for (std::size_t i = 0; i < m.size(); ++i) m[i] = n.value()[i] > 0.0 ? 1.0 : 0.0;
            return m;
        }();
        factor = ad::mul(ad::constant(mask), ad::safe_div(ad::constant(Tensor(n.shape(), 1.0)),
                                                          ad::add_scalar(n, cfg.epsilon)));
    }
    if (cfg.detach_factor) factor = ad::detach(factor);
    return ad::mul_scalar(ad::mul(f, factor), 1.0 / cfg.tau);
}

ad::Var grand_discriminator(const ad::Var& f, const ad::Var& x, const GranConfig& cfg) {
    return ad::sigmoid(gran(f, x, cfg));
}

ad::Var granc_critic(const ad::Var& f, const ad::Var& x, const GranConfig& cfg) { return gran(f, x, cfg); }

SpectralNormState init_spectral_state(const Tensor& weight, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    SpectralNormState s{Tensor(Shape{weight.rows()}), Tensor(Shape{weight.cols()})};
    for (double& x : s.u.storage()) x = normal(rng);
    for (double& x : s.v.storage()) x = normal(rng);
    const double nu = norm(s.u.data()), nv = norm(s.v.data());
    for (double& x : s.u.storage()) x /= nu;
    for (double& x : s.v.storage()) x /= nv;
    return s;
}

void power_iterate(const Tensor& weight, SpectralNormState& state, int iters) {
    if (iters < 1) throw PreconditionError("spectral_normalize: iters must be >= 1");
    const std::size_t rows = weight.rows(), cols = weight.cols();
    if (state.u.size() != rows || state.v.size() != cols) throw ShapeError("spectral_normalize: state shape mismatch");
    for (int it = 0; it < iters; ++it) {
        Tensor v(Shape{cols});
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) v[c] += weight[r * cols + c] * state.u[r];
        const double nv = norm(v.data());
        if (nv < 1e-12) throw NumericError("spectral_normalize: W^T u vanished (zero matrix?)");
        for (double& x : v.storage()) x /= nv;
        Tensor u(Shape{rows});
        for (std::size_t r = 0; r < rows; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < cols; ++c) s += weight[r * cols + c] * v[c];
            u[r] = s;
        }
        const double nu = norm(u.data());
        if (nu < 1e-12) throw NumericError("spectral_normalize: W v vanished (zero matrix?)");
        for (double& x : u.storage()) x /= nu;
        state.u = std::move(u);
        state.v = std::move(v);
    }
}

double sigma_estimate(const Tensor& weight, const SpectralNormState& state) {
    const std::size_t rows = weight.rows(), cols = weight.cols();
    double s = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        double wv = 0.0;
        for (std::size_t c = 0; c < cols; ++c) wv += weight[r * cols + c] * state.v[c];
        s += state.u[r] * wv;
    }
    return s;
}

Tensor spectral_normalize(const Tensor& weight, SpectralNormState& state, int iters) {
    power_iterate(weight, state, iters);
    const double sigma = sigma_estimate(weight, state);
    if (!(sigma >= 1e-12)) throw NumericError("spectral_normalize: sigma estimate below 1e-12");
    Tensor out = weight;
    for (double& x : out.storage()) x /= sigma;
    return out;
}

ad::Var spectral_normalize(const ad::Var& weight, SpectralNormState& state, int iters) {
    power_iterate(weight.value(), state, iters);
    return spectral_normalize(weight, static_cast<const SpectralNormState&>(state));
}

ad::Var spectral_normalize(const ad::Var& weight, const SpectralNormState& state) {
    const Tensor& w = weight.value();
    const double sigma = sigma_estimate(w, state);
    if (!(sigma >= 1e-12)) throw NumericError("spectral_normalize: sigma estimate below 1e-12");
    Tensor uv(w.shape());
    const std::size_t cols = w.cols();
    for (std::size_t r = 0; r < w.rows(); ++r)
        for (std::size_t c = 0; c < cols; ++c) uv[r * cols + c] = state.u[r] * state.v[c];
    const ad::Var sigma_node = ad::sum(ad::mul(weight, ad::constant(std::move(uv))));
    return ad::div(weight, ad::expand(sigma_node, w.shape()));
}

PenaltyConfig PenaltyConfig::r1(double lambda) {
    PenaltyConfig cfg;
    cfg.delta = 0.0;
    cfg.lambda = lambda;
    cfg.sampling = PenaltySampling::reals;
    return cfg;
}

void PenaltyConfig::validate() const {
    if (!(lambda >= 0.0)) throw ConfigError("gradient_penalty: lambda must be >= 0");
    if (!(delta >= 0.0)) throw ConfigError("gradient_penalty: delta must be >= 0");
}

ad::Var gradient_penalty(const BatchFn& d_fn, const Tensor& reals, const Tensor& fakes, const PenaltyConfig& cfg,
                         std::mt19937_64& rng) {
    cfg.validate();
    if (reals.rank() != 2 || reals.shape() != fakes.shape()) {
        throw ShapeError("gradient_penalty: reals " + shape_str(reals.shape()) + " vs fakes " +
                         shape_str(fakes.shape()));
    }
    const std::size_t batch = reals.rows(), dim = reals.cols();
    if (batch == 0) throw PreconditionError("gradient_penalty: empty batch");
    Tensor points;
    switch (cfg.sampling) {
        case PenaltySampling::reals:
            points = reals;
            break;
        case PenaltySampling::fakes:
            points = fakes;
            break;
        case PenaltySampling::interpolates: {
            std::uniform_real_distribution<double> uniform(0.0, 1.0);
            points = Tensor(reals.shape());
            for (std::size_t i = 0; i < batch; ++i) {
                const double t = uniform(rng);
                for (std::size_t j = 0; j < dim; ++j) {
                    const std::size_t k = i * dim + j;
                    points[k] = t * reals[k] + (1.0 - t) * fakes[k];
                }
            }
            break;
        }
    }
    const ad::Var x = ad::parameter(std::move(points));
    const ad::Var grad = ad::backward(ad::sum(d_fn(x)), {x}, /*create_graph=*/true)[0];
    ad::Var gap = ad::add_scalar(ad::row_norm(grad), -cfg.delta);
    if (cfg.one_sided) gap = ad::relu(gap);
    return ad::mul_scalar(ad::mean(ad::square(gap)), cfg.lambda);
}

nn::Mlp weight_clip(nn::Mlp net, double c) {
    if (!(c > 0.0)) throw ConfigError("weight_clip: c must be positive");
    for (Tensor* p : net.parameters()) {
        for (double& x : p->storage()) x = std::clamp(x, -c, c);
    }
    return net;
}

}  // namespace granlab::reg
