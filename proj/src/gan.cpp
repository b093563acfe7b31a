#include "granlab/gan.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "granlab/csv.hpp"
#include "granlab/error.hpp"
#include "granlab/losses.hpp"

namespace granlab::gan {
namespace {

using nlohmann::json;

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), id};
    return std::mt19937_64(seq);
}

enum StreamId : std::uint32_t { kInit = 1, kData, kNoise, kPenalty, kEval };

Tensor normal_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor z(Shape{rows, cols});
    for (double& v : z.storage()) v = normal(rng);
    return z;
}

struct Stats3 {
    double mean = 0.0, min = 0.0, max = 0.0;
};

Stats3 stats_of(const std::vector<double>& v) {
    Stats3 s;
    if (v.empty()) return s;
    s.min = *std::min_element(v.begin(), v.end());
    s.max = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(v.size());
    return s;
}

json tensors_to_json(const std::vector<Tensor>& ts) {
    json out = json::array();
    for (const Tensor& t : ts) out.push_back(t.storage());
    return out;
}

void tensors_from_json(const json& doc, std::vector<Tensor>& ts) {
    if (doc.size() != ts.size()) throw ConfigError("snapshot: optimizer block count mismatch");
    for (std::size_t i = 0; i < ts.size(); ++i) ts[i] = Tensor(ts[i].shape(), doc[i].get<std::vector<double>>());
}

json adam_to_json(const optim::AdamState& s) {
    return {{"t", s.t}, {"m", tensors_to_json(s.m)}, {"v", tensors_to_json(s.v)}};
}

void adam_from_json(const json& doc, optim::AdamState& s) {
    s.t = doc.at("t").get<std::uint64_t>();
    tensors_from_json(doc.at("m"), s.m);
    tensors_from_json(doc.at("v"), s.v);
}

}  // namespace

std::vector<std::string> metrics_header() {
    return {"step",
            "d_loss",
            "g_loss",
            "grad_norm_real_mean",
            "grad_norm_real_min",
            "grad_norm_real_max",
            "grad_norm_fake_mean",
            "grad_norm_fake_min",
            "grad_norm_fake_max",
            "gen_grad_norm_mean",
            "gen_grad_norm_max",
            "mode_coverage",
            "high_quality_fraction",
            "nan_flag"};
}

std::vector<std::string> metrics_fields(const MetricsRow& r) {
    using csv::format_double;
    return {std::to_string(r.step),
            format_double(r.d_loss),
            format_double(r.g_loss),
            format_double(r.grad_norm_real_mean),
            format_double(r.grad_norm_real_min),
            format_double(r.grad_norm_real_max),
            format_double(r.grad_norm_fake_mean),
            format_double(r.grad_norm_fake_min),
            format_double(r.grad_norm_fake_max),
            format_double(r.gen_grad_norm_mean),
            format_double(r.gen_grad_norm_max),
            std::to_string(r.mode_coverage),
            format_double(r.high_quality_fraction),
            r.nan_flag ? "1" : "0"};
}

Coverage mode_coverage(const Tensor& samples, const Tensor& centers, std::size_t threshold_count,
                       double assign_radius) {
    if (centers.rank() != 2 || centers.rows() == 0) throw ConfigError("mode_coverage: at least one centre required");
    Coverage out;
    if (samples.size() == 0) return out;
    const std::size_t n = samples.rows(), k = centers.rows(), d = centers.cols();
    if (samples.cols() != d) throw ShapeError("mode_coverage: sample and centre dimensions differ");
    std::vector<std::size_t> counts(k, 0);
    std::size_t close = 0;
    const double r2 = assign_radius * assign_radius;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = samples.at(i, j) - centers.at(c, j);
                d2 += diff * diff;
            }
            if (d2 < best_d2) {
                best_d2 = d2;
                best = c;
            }
        }
        if (best_d2 <= r2) {
            ++counts[best];
            ++close;
        }
    }
    for (std::size_t c : counts) out.covered_modes += (c >= threshold_count && c > 0) ? 1 : 0;
    out.high_quality_fraction = static_cast<double>(close) / static_cast<double>(n);
    return out;
}

Tensor sample_generator(const nn::Mlp& generator, std::size_t n, std::mt19937_64& rng) {
    if (n == 0) return Tensor(Shape{0, generator.output_dim()});
    const Tensor z = normal_matrix(n, generator.input_dim(), rng);
    return nn::evaluate(generator, z);
}

Tensor sample_generator(const nn::Mlp& generator, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sample_generator(generator, n, rng);
}

RngStreams RngStreams::from_seed(std::uint64_t seed) {
    return {stream(seed, kData), stream(seed, kNoise), stream(seed, kPenalty), stream(seed, kEval)};
}

json rng_to_json(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

void rng_from_json(const json& doc, std::mt19937_64& rng) {
    std::istringstream is(doc.get<std::string>());
    is >> rng;
    if (!is) throw ConfigError("snapshot: corrupt random stream state");
}

Critic::Critic(const ExperimentConfig& cfg, const nn::Mlp& net, const std::vector<reg::SpectralNormState>* spectral)
    : cfg_(&cfg), net_(&net), spectral_(spectral) {
    if (cfg.uses_gran()) gran_ = cfg.gran_config();
}

nn::Mlp Critic::effective_network() const {
    nn::Mlp out = *net_;
    if (cfg_->regularizer == RegularizerKind::spectral_norm) {
        auto& layers = out.layers();
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const double sigma = reg::sigma_estimate(layers[l].weight, spectral_->at(l));
            for (double& w : layers[l].weight.storage()) w /= sigma;
        }
        for (double& w : layers.back().weight.storage()) w *= cfg_->sn_scale;
        for (double& b : layers.back().bias.storage()) b *= cfg_->sn_scale;
    }
    return out;
}

ad::Var Critic::operator()(const nn::BoundMlp& bound, const ad::Var& x) const {
    const std::size_t batch = x.shape().at(0);
    ad::Var f = ad::reshape(nn::forward(bound, x), Shape{batch});
    if (gran_) return reg::gran(f, x, *gran_);
    if (cfg_->regularizer == RegularizerKind::spectral_norm && cfg_->sn_scale != 1.0) {
        return ad::mul_scalar(f, cfg_->sn_scale);
    }
    return f;
}

std::vector<double> input_grad_norms(const std::function<ad::Var(const ad::Var&)>& h, const Tensor& x) {
    const ad::Var xv = ad::parameter(x);
    const ad::Var grad = ad::backward(ad::sum(h(xv)), {xv})[0];
    const Tensor& g = grad.value();
    const std::size_t rows = x.rows(), cols = x.cols();
    std::vector<double> out(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) s += g[i * cols + j] * g[i * cols + j];
        out[i] = std::sqrt(s);
    }
    return out;
}

Trainer::Trainer(ExperimentConfig cfg) : cfg_(std::move(cfg)), dataset_(cfg_.dataset) {
    cfg_.validate();
    std::mt19937_64 init = stream(cfg_.seed, kInit);
    state_.generator = nn::init_mlp(cfg_.generator_spec(), init);
    state_.discriminator = nn::init_mlp(cfg_.discriminator_spec(), init);
    state_.g_opt = optim::make_adam_state(state_.generator.parameters());
    state_.d_opt = optim::make_adam_state(state_.discriminator.parameters());
    if (cfg_.regularizer == RegularizerKind::spectral_norm) {
        for (const nn::Layer& l : state_.discriminator.layers()) {
            state_.spectral.push_back(reg::init_spectral_state(l.weight, init));
        }
    }
    state_.rng = RngStreams::from_seed(cfg_.seed);
}

Trainer::Trainer(ExperimentConfig cfg, const json& snap) : Trainer(std::move(cfg)) {
    try {
        state_.step = snap.at("step").get<std::uint64_t>();
        state_.generator = nn::mlp_from_json(snap.at("generator"));
        state_.discriminator = nn::mlp_from_json(snap.at("discriminator"));
        if (state_.generator.spec() != cfg_.generator_spec() ||
            state_.discriminator.spec() != cfg_.discriminator_spec()) {
            throw ConfigError("snapshot: network architecture does not match the config");
        }
        adam_from_json(snap.at("g_opt"), state_.g_opt);
        adam_from_json(snap.at("d_opt"), state_.d_opt);
        const auto& sn = snap.at("spectral");
        if (sn.size() != state_.spectral.size()) throw ConfigError("snapshot: spectral state mismatch");
        for (std::size_t i = 0; i < sn.size(); ++i) {
            auto& s = state_.spectral[i];
            s.u = Tensor(s.u.shape(), sn[i].at("u").get<std::vector<double>>());
            s.v = Tensor(s.v.shape(), sn[i].at("v").get<std::vector<double>>());
        }
        const auto& rng = snap.at("rng");
        rng_from_json(rng.at("data"), state_.rng.data);
        rng_from_json(rng.at("noise"), state_.rng.noise);
        rng_from_json(rng.at("penalty"), state_.rng.penalty);
        rng_from_json(rng.at("eval"), state_.rng.eval);
        const auto& st = snap.at("stats");
        state_.stats.max_grad_norm = st.at("max_grad_norm").get<double>();
        state_.stats.min_grad_norm = st.at("min_grad_norm").get<double>();
        state_.stats.max_gen_grad_norm = st.at("max_gen_grad_norm").get<double>();
        state_.stats.g_steps_measured = st.at("g_steps_measured").get<std::size_t>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("snapshot: ") + e.what());
    }
}

json Trainer::snapshot() const {
    json sn = json::array();
    for (const auto& s : state_.spectral) sn.push_back({{"u", s.u.storage()}, {"v", s.v.storage()}});
    return {
        {"format", "granlab-snapshot-1"},
        {"config", config_to_json(cfg_)},
        {"step", state_.step},
        {"generator", nn::to_json(state_.generator)},
        {"discriminator", nn::to_json(state_.discriminator)},
        {"g_opt", adam_to_json(state_.g_opt)},
        {"d_opt", adam_to_json(state_.d_opt)},
        {"spectral", std::move(sn)},
        {"rng",
         {{"data", rng_to_json(state_.rng.data)},
          {"noise", rng_to_json(state_.rng.noise)},
          {"penalty", rng_to_json(state_.rng.penalty)},
          {"eval", rng_to_json(state_.rng.eval)}}},
        {"stats",
         {{"max_grad_norm", state_.stats.max_grad_norm},
          {"min_grad_norm", state_.stats.min_grad_norm},
          {"max_gen_grad_norm", state_.stats.max_gen_grad_norm},
          {"g_steps_measured", state_.stats.g_steps_measured}}},
    };
}

bool Trainer::finished() const { return state_.nan_flag || state_.step >= cfg_.total_steps; }

nn::BoundMlp Trainer::bind_discriminator(bool trainable, bool iterate_spectral, std::vector<ad::Var>& leaves) {
    nn::BoundMlp bound = nn::bind(state_.discriminator, trainable);
    leaves = bound.leaves();
    if (cfg_.regularizer == RegularizerKind::spectral_norm) {
        for (std::size_t l = 0; l < bound.weights.size(); ++l) {
            bound.weights[l] = iterate_spectral
                                   ? reg::spectral_normalize(bound.weights[l], state_.spectral[l], cfg_.sn_power_iters)
                                   : reg::spectral_normalize(bound.weights[l],
                                                             static_cast<const reg::SpectralNormState&>(
                                                                 state_.spectral[l]));
        }
    }
    return bound;
}

void Trainer::apply(nn::Mlp& net, optim::AdamState& opt, const std::vector<ad::Var>& leaves,
                    const std::vector<Tensor>& grads, double lr, const std::string& prefix) {
    (void)leaves;
    const std::vector<Tensor*> params = net.parameters();
    const std::vector<std::string> names = net.parameter_names(prefix);
    if (cfg_.optimizer == OptimizerKind::adam) {
        optim::adam_step(params, grads, opt, cfg_.adam, lr, names);
    } else {
        optim::sgd_step(params, grads, lr, names);
    }
}

double Trainer::d_update(double lr) {
    const std::size_t batch = cfg_.batch_size;
    Tensor reals = dataset_.sample(batch, state_.rng.data);
    Tensor fakes = sample_generator(state_.generator, batch, state_.rng.noise);

    std::vector<ad::Var> leaves;
    const nn::BoundMlp bound = bind_discriminator(true, true, leaves);
    const Critic critic(cfg_, state_.discriminator, &state_.spectral);
    const ad::Var xr = ad::parameter(reals);
    const ad::Var xf = ad::parameter(fakes);
    ad::Var loss = loss::d_loss(cfg_.loss, critic(bound, xr), critic(bound, xf));
    if (cfg_.regularizer == RegularizerKind::gradient_penalty || cfg_.regularizer == RegularizerKind::r1) {
        const auto f = [&](const ad::Var& x) { return ad::reshape(nn::forward(bound, x), Shape{x.shape()[0]}); };
        loss = ad::add(loss, reg::gradient_penalty(f, reals, fakes, cfg_.penalty_config(), state_.rng.penalty));
    }
    if (!std::isfinite(loss.item())) throw NumericError("critic loss is not finite");
    const ad::GradMap grads = ad::backward(loss, leaves);
    std::vector<Tensor> g;
    for (const ad::Var& v : grads.all()) g.push_back(v.value());
    apply(state_.discriminator, state_.d_opt, leaves, g, lr, "D");
    if (cfg_.regularizer == RegularizerKind::weight_clip) {
        state_.discriminator = reg::weight_clip(std::move(state_.discriminator), cfg_.clip_c);
    }
    last_reals_ = std::move(reals);
    last_fakes_ = std::move(fakes);
    return loss.item();
}

double Trainer::g_update(double lr) {
    const std::size_t batch = cfg_.batch_size;
    const Tensor z = normal_matrix(batch, cfg_.z_dim, state_.rng.noise);
    const nn::BoundMlp gen = nn::bind(state_.generator, true);
    const ad::Var xf = nn::forward(gen, ad::constant(z));

    std::vector<ad::Var> d_leaves;
    const nn::BoundMlp disc = bind_discriminator(false, false, d_leaves);
    const Critic critic(cfg_, state_.discriminator, &state_.spectral);
    const ad::Var loss = loss::g_loss(cfg_.loss, critic(disc, xf));
    if (!std::isfinite(loss.item())) throw NumericError("generator loss is not finite");

    std::vector<ad::Var> wrt = gen.leaves();
    wrt.push_back(xf);
    const ad::GradMap grads = ad::backward(loss, wrt);
    std::vector<Tensor> g;
    for (std::size_t i = 0; i + 1 < wrt.size(); ++i) g.push_back(grads[i].value());

    const Tensor& gx = grads[wrt.size() - 1].value();
    const std::size_t cols = gx.cols();
    double sum = 0.0, mx = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) s += gx[i * cols + j] * gx[i * cols + j];
        const double n = static_cast<double>(batch) * std::sqrt(s);
        sum += n;
        mx = std::max(mx, n);
    }
    last_gen_mean_ = sum / static_cast<double>(batch);
    last_gen_max_ = mx;
    state_.stats.max_gen_grad_norm = std::max(state_.stats.max_gen_grad_norm, mx);
    state_.stats.g_steps_measured += 1;

    apply(state_.generator, state_.g_opt, gen.leaves(), g, lr, "G");
    return loss.item();
}

MetricsRow Trainer::measure() {
    MetricsRow row;
    row.step = state_.step;
    row.d_loss = last_d_loss_;
    row.g_loss = last_g_loss_;
    row.gen_grad_norm_mean = last_gen_mean_;
    row.gen_grad_norm_max = last_gen_max_;
    if (last_reals_.size() > 0) {
        std::vector<ad::Var> leaves;
        const nn::BoundMlp disc = bind_discriminator(false, false, leaves);
        const Critic critic(cfg_, state_.discriminator, &state_.spectral);
        const auto h = [&](const ad::Var& x) { return critic(disc, x); };
        const Stats3 r = stats_of(input_grad_norms(h, last_reals_));
        const Stats3 f = stats_of(input_grad_norms(h, last_fakes_));
        row.grad_norm_real_mean = r.mean;
        row.grad_norm_real_min = r.min;
        row.grad_norm_real_max = r.max;
        row.grad_norm_fake_mean = f.mean;
        row.grad_norm_fake_min = f.min;
        row.grad_norm_fake_max = f.max;
        state_.stats.max_grad_norm = std::max({state_.stats.max_grad_norm, r.max, f.max});
        state_.stats.min_grad_norm = std::min(r.min, f.min);
    }
    const Tensor samples = sample_generator(state_.generator, cfg_.eval_samples, state_.rng.eval);
    const Coverage cov = mode_coverage(samples, dataset_.centers(), cfg_.coverage_threshold,
                                       cfg_.coverage_radius_sigmas * cfg_.dataset.mode_scale());
    row.mode_coverage = cov.covered_modes;
    row.high_quality_fraction = cov.high_quality_fraction;
    row.nan_flag = state_.nan_flag || !std::isfinite(row.d_loss) || !std::isfinite(row.g_loss);
    return row;
}

std::optional<MetricsRow> Trainer::step() {
    if (finished()) return std::nullopt;
    const optim::LrSchedule schedule{cfg_.schedule, cfg_.total_steps};
    const double lr = optim::lr_at(schedule, cfg_.adam.alpha, state_.step);
    try {
        for (std::size_t k = 0; k < cfg_.n_dis; ++k) last_d_loss_ = d_update(lr);
        last_g_loss_ = g_update(lr);
    } catch (const NumericError&) {
        state_.nan_flag = true;
        state_.step += 1;
        MetricsRow row;
        row.step = state_.step;
        row.d_loss = std::numeric_limits<double>::quiet_NaN();
        row.g_loss = std::numeric_limits<double>::quiet_NaN();
        row.nan_flag = true;
        return row;
    }
    state_.step += 1;
    if (state_.step % cfg_.log_every == 0 || state_.step == cfg_.total_steps) return measure();
    return std::nullopt;
}

json summary_to_json(const Summary& s) {
    return {{"steps_completed", s.steps_completed},
            {"final_coverage", s.final_coverage},
            {"final_high_quality_fraction", s.final_high_quality_fraction},
            {"nan_flag", s.nan_flag},
            {"diverged", s.diverged},
            {"max_grad_norm", s.max_grad_norm},
            {"max_gen_grad_norm", s.max_gen_grad_norm},
            {"final_grad_norm_span", s.final_grad_norm_span},
            {"wall_seconds", s.wall_seconds}};
}

TrainResult finish(Trainer& trainer, std::vector<MetricsRow> history) {
    const auto start = std::chrono::steady_clock::now();
    while (!trainer.finished()) {
        if (auto row = trainer.step()) history.push_back(*row);
    }
    TrainResult out;
    out.summary.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.final_state = trainer.state();
    Summary& s = out.summary;
    s.steps_completed = trainer.state().step;
    s.nan_flag = trainer.aborted();
    s.max_grad_norm = trainer.state().stats.max_grad_norm;
    s.max_gen_grad_norm = trainer.state().stats.max_gen_grad_norm;
    if (!history.empty()) {
        const MetricsRow& last = history.back();
        s.final_coverage = last.mode_coverage;
        s.final_high_quality_fraction = last.high_quality_fraction;
        s.final_grad_norm_span = std::max(last.grad_norm_real_max, last.grad_norm_fake_max) -
                                 std::min(last.grad_norm_real_min, last.grad_norm_fake_min);
    }
    s.diverged = s.nan_flag || s.final_high_quality_fraction < trainer.config().divergence_threshold;
    out.history = std::move(history);
    return out;
}

TrainResult train(const ExperimentConfig& cfg) {
    Trainer trainer(cfg);
    return finish(trainer);
}

}  // namespace granlab::gan
