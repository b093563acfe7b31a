#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "granlab/tensor.hpp"

namespace granlab::optim {

struct AdamConfig {
    double alpha = 2e-4;
    double beta1 = 0.0;
    double beta2 = 0.9;
    double eps_adam = 1e-8;
    bool bias_correction = true;
};

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::uint64_t t = 0;
};

/// Zero moments shaped like `params`.
AdamState make_adam_state(std::span<Tensor* const> params);

/// One Adam update of every block in place; `alpha` is the step size for this
/// step (the schedule is applied by the caller). Throws NumericError naming
/// the offending block when a gradient is not finite.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const AdamConfig& cfg, double alpha, std::span<const std::string> names = {});

/// theta <- theta - alpha * g
void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, double alpha,
              std::span<const std::string> names = {});

enum class ScheduleKind { constant, linear_decay };

struct LrSchedule {
    ScheduleKind kind = ScheduleKind::constant;
    std::uint64_t total_steps = 0;
};

/// Constant: base. Linear decay: base * (1 - step / total_steps), step <= total_steps.
double lr_at(const LrSchedule& schedule, double base_alpha, std::uint64_t step);

std::string schedule_name(ScheduleKind kind);
ScheduleKind parse_schedule(const std::string& name);

}  // namespace granlab::optim
