#pragma once

#include <string>

#include "granlab/autodiff.hpp"

namespace granlab::loss {

/// Loss pair used for training: D side and matching G side.
enum class LossKind { nsgan, nsgan_saturating, wasserstein, hinge, soft_hinge };

std::string loss_name(LossKind kind);
LossKind parse_loss(const std::string& name);
/// Cross-entropy losses act on D = sigmoid(h) (a discriminator); the others
/// use the raw output (a critic).
bool uses_sigmoid(LossKind kind);

/// Values of log() are floored at this input.
inline constexpr double kLogFloor = 1e-12;

/// mean(-log D(real)) + mean(-log(1 - D(fake))), D in [0, 1].
ad::Var ns_d_loss(const ad::Var& d_real, const ad::Var& d_fake);
/// mean(-log D(fake))
ad::Var ns_g_loss_nonsaturating(const ad::Var& d_fake);
/// mean(log(1 - D(fake)))
ad::Var ns_g_loss_saturating(const ad::Var& d_fake);
ad::Var wasserstein_d_loss(const ad::Var& d_real, const ad::Var& d_fake);
ad::Var wasserstein_g_loss(const ad::Var& d_fake);
/// mean(relu(1 - D(real))) + mean(relu(1 + D(fake))); softplus replaces relu when `soft`.
ad::Var hinge_d_loss(const ad::Var& d_real, const ad::Var& d_fake, bool soft);

/// D-side loss from pre-sigmoid outputs h (sigmoid applied for `nsgan*`).
ad::Var d_loss(LossKind kind, const ad::Var& h_real, const ad::Var& h_fake);
/// G-side loss from pre-sigmoid outputs h on fakes.
ad::Var g_loss(LossKind kind, const ad::Var& h_fake);

}  // namespace granlab::loss
