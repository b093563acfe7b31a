#include "granlab/losses.hpp"

#include "granlab/error.hpp"

namespace granlab::loss {
namespace {

void check_probabilities(const ad::Var& d, const char* who) {
    for (double v : d.value().data()) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw NumericError(std::string(who) + ": discriminator output " + std::to_string(v) +
                               " outside [0, 1]");
        }
    }
}

ad::Var neg_log(const ad::Var& p) { return ad::neg(ad::log(ad::clamp(p, kLogFloor, 1.0))); }

ad::Var one_minus(const ad::Var& p) { return ad::add_scalar(ad::neg(p), 1.0); }

}  // namespace

std::string loss_name(LossKind kind) {
    switch (kind) {
        case LossKind::nsgan: return "nsgan";
        case LossKind::nsgan_saturating: return "nsgan_saturating";
        case LossKind::wasserstein: return "wasserstein";
        case LossKind::hinge: return "hinge";
        case LossKind::soft_hinge: return "soft_hinge";
    }
    return "unknown";
}

LossKind parse_loss(const std::string& name) {
    if (name == "nsgan") return LossKind::nsgan;
    if (name == "nsgan_saturating") return LossKind::nsgan_saturating;
    if (name == "wasserstein") return LossKind::wasserstein;
    if (name == "hinge") return LossKind::hinge;
    if (name == "soft_hinge") return LossKind::soft_hinge;
    throw ConfigError("unknown loss '" + name + "'");
}

bool uses_sigmoid(LossKind kind) { return kind == LossKind::nsgan || kind == LossKind::nsgan_saturating; }

ad::Var ns_d_loss(const ad::Var& d_real, const ad::Var& d_fake) {
    check_probabilities(d_real, "ns_d_loss");
    check_probabilities(d_fake, "ns_d_loss");
    return ad::add(ad::mean(neg_log(d_real)), ad::mean(neg_log(one_minus(d_fake))));
}

ad::Var ns_g_loss_nonsaturating(const ad::Var& d_fake) {
    check_probabilities(d_fake, "ns_g_loss");
    return ad::mean(neg_log(d_fake));
}

ad::Var ns_g_loss_saturating(const ad::Var& d_fake) {
    check_probabilities(d_fake, "ns_g_loss");
    return ad::neg(ad::mean(neg_log(one_minus(d_fake))));
}

ad::Var wasserstein_d_loss(const ad::Var& d_real, const ad::Var& d_fake) {
    return ad::sub(ad::mean(d_fake), ad::mean(d_real));
}

ad::Var wasserstein_g_loss(const ad::Var& d_fake) { return ad::neg(ad::mean(d_fake)); }

ad::Var hinge_d_loss(const ad::Var& d_real, const ad::Var& d_fake, bool soft) {
    const auto hinge = [soft](const ad::Var& v) { return soft ? ad::softplus(v) : ad::relu(v); };
    return ad::add(ad::mean(hinge(one_minus(d_real))), ad::mean(hinge(ad::add_scalar(d_fake, 1.0))));
}

ad::Var d_loss(LossKind kind, const ad::Var& h_real, const ad::Var& h_fake) {
    switch (kind) {
        case LossKind::nsgan:
        case LossKind::nsgan_saturating:
            return ns_d_loss(ad::sigmoid(h_real), ad::sigmoid(h_fake));
        case LossKind::wasserstein:
            return wasserstein_d_loss(h_real, h_fake);
        case LossKind::hinge:
            return hinge_d_loss(h_real, h_fake, false);
        case LossKind::soft_hinge:
            return hinge_d_loss(h_real, h_fake, true);
    }
    throw ConfigError("d_loss: unknown loss");
}

ad::Var g_loss(LossKind kind, const ad::Var& h_fake) {
    switch (kind) {
        case LossKind::nsgan:
            return ns_g_loss_nonsaturating(ad::sigmoid(h_fake));
        case LossKind::nsgan_saturating:
            return ns_g_loss_saturating(ad::sigmoid(h_fake));
        case LossKind::wasserstein:
        case LossKind::hinge:
        case LossKind::soft_hinge:
            return wasserstein_g_loss(h_fake);
    }
    throw ConfigError("g_loss: unknown loss");
}

}  // namespace granlab::loss
