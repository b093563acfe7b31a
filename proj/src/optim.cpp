#include "granlab/optim.hpp"

#include <cmath>

#include "granlab/error.hpp"

namespace granlab::optim {
namespace {

void check_blocks(std::span<Tensor* const> params, std::span<const Tensor> grads,
                  std::span<const std::string> names) {
    if (params.size() != grads.size()) throw ShapeError("optimizer: parameter/gradient count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::string name = i < names.size() ? names[i] : "block " + std::to_string(i);
        if (params[i]->shape() != grads[i].shape()) {
            throw ShapeError("optimizer: " + name + " has shape " + shape_str(params[i]->shape()) +
                             " but gradient " + shape_str(grads[i].shape()));
        }
        if (!grads[i].all_finite()) throw NumericError("optimizer: non-finite gradient in " + name);
    }
}

}  // namespace

AdamState make_adam_state(std::span<Tensor* const> params) {
    AdamState s;
    for (const Tensor* p : params) {
        s.m.emplace_back(p->shape());
        s.v.emplace_back(p->shape());
    }
    return s;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const AdamConfig& cfg, double alpha, std::span<const std::string> names) {
    check_blocks(params, grads, names);
    if (state.m.size() != params.size()) throw ShapeError("adam: state does not match parameters");
    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double c1 = cfg.bias_correction ? 1.0 - std::pow(cfg.beta1, t) : 1.0;
    const double c2 = cfg.bias_correction ? 1.0 - std::pow(cfg.beta2, t) : 1.0;
    for (std::size_t b = 0; b < params.size(); ++b) {
        Tensor& p = *params[b];
        Tensor& m = state.m[b];
        Tensor& v = state.v[b];
        const Tensor& g = grads[b];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            p[i] -= alpha * m_hat / (std::sqrt(v_hat) + cfg.eps_adam);
        }
    }
}

void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, double alpha,
              std::span<const std::string> names) {
    check_blocks(params, grads, names);
    for (std::size_t b = 0; b < params.size(); ++b) {
        Tensor& p = *params[b];
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= alpha * grads[b][i];
    }
}

double lr_at(const LrSchedule& schedule, double base_alpha, std::uint64_t step) {
    if (schedule.kind == ScheduleKind::constant) return base_alpha;
    if (schedule.total_steps == 0) throw ConfigError("lr schedule: linear decay needs total_steps > 0");
    if (step > schedule.total_steps) {
        throw ConfigError("lr schedule: step " + std::to_string(step) + " beyond budget " +
                          std::to_string(schedule.total_steps));
    }
    return base_alpha * (1.0 - static_cast<double>(step) / static_cast<double>(schedule.total_steps));
}

std::string schedule_name(ScheduleKind kind) {
    return kind == ScheduleKind::constant ? "constant" : "linear_decay";
}

ScheduleKind parse_schedule(const std::string& name) {
    if (name == "constant") return ScheduleKind::constant;
    if (name == "linear_decay") return ScheduleKind::linear_decay;
    throw ConfigError("unknown schedule '" + name + "'");
}

}  // namespace granlab::optim
