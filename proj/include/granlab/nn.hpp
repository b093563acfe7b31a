#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "granlab/autodiff.hpp"
#include "granlab/tensor.hpp"

namespace granlab::nn {

enum class Activation { identity, relu, leaky_relu, tanh };

std::string activation_name(Activation a);
Activation parse_activation(const std::string& name);

struct LayerSpec {
    std::size_t units = 0;
    Activation activation = Activation::relu;
    double slope = 0.2;  // leaky_relu only

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct MlpSpec {
    std::size_t input_dim = 0;
    std::vector<LayerSpec> layers;

    friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

struct Layer {
    Tensor weight;  // [units, fan_in]
    Tensor bias;    // [units]
    Activation activation = Activation::relu;
    double slope = 0.2;
};

/// Multilayer perceptron: affine layers, each followed by its activation.
class Mlp {
public:
    Mlp() = default;
    explicit Mlp(std::vector<Layer> layers);

    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers() { return layers_; }
    std::size_t input_dim() const;
    std::size_t output_dim() const;
    /// Units with a branching activation; the length of an activation pattern.
    std::size_t hidden_units() const;
    MlpSpec spec() const;
    /// True when every activation is relu, leaky_relu or identity.
    bool is_piecewise_linear() const;

    /// Parameter tensors in the order weight0, bias0, weight1, bias1, ...
    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;
    std::vector<std::string> parameter_names(const std::string& prefix) const;

    friend bool operator==(const Mlp& a, const Mlp& b);

private:
    std::vector<Layer> layers_;
};

/// He-normal weights (std = sqrt(2 / fan_in)) and zero biases.
Mlp init_mlp(const MlpSpec& spec, std::mt19937_64& rng);
Mlp init_mlp(const MlpSpec& spec, std::uint64_t seed);

/// Graph handles for one evaluation of a network. `weights`/`biases` may be
/// substituted (spectral normalization does) before calling forward.
struct BoundMlp {
    const Mlp* net = nullptr;
    std::vector<ad::Var> weights;
    std::vector<ad::Var> biases;

    /// Leaves in `Mlp::parameters()` order.
    std::vector<ad::Var> leaves() const;
};

/// `trainable` binds parameters as differentiable leaves, otherwise as constants.
BoundMlp bind(const Mlp& net, bool trainable);

ad::Var forward(const BoundMlp& bound, const ad::Var& x);
ad::Var forward(const Mlp& net, const ad::Var& x);
/// Value-only evaluation for a single input [d] or a batch [B, d].
Tensor evaluate(const Mlp& net, const Tensor& x);

/// Branch taken by every hidden unit; a pre-activation of exactly zero is
/// recorded as inactive.
struct ActivationPattern {
    std::vector<bool> active;
    friend bool operator==(const ActivationPattern&, const ActivationPattern&) = default;
};

ActivationPattern activation_pattern(const Mlp& net, const Tensor& x);

/// f(x') = w . x' + b for every x' sharing x's activation pattern.
struct EffectiveAffine {
    Tensor w;
    double b = 0.0;
};

EffectiveAffine effective_affine(const Mlp& net, const Tensor& x);

/// Smallest t > 0 at which some hidden pre-activation along x + t * dir
/// reaches zero, i.e. where the activation pattern can first change.
/// Returns +inf when it never does.
double pattern_exit_distance(const Mlp& net, const Tensor& x, const Tensor& dir);

nlohmann::json to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& doc);
nlohmann::json spec_to_json(const MlpSpec& spec);
MlpSpec spec_from_json(const nlohmann::json& doc);

}  // namespace granlab::nn
