#include "granlab/nn.hpp"

#include <cmath>
#include <limits>

#include "granlab/error.hpp"

namespace granlab::nn {
namespace {

ad::Var activate(const ad::Var& z, const Layer& layer) {
    switch (layer.activation) {
        case Activation::identity:
            return z;
        case Activation::relu:
            return ad::relu(z);
        case Activation::leaky_relu:
            return ad::leaky_relu(z, layer.slope);
        case Activation::tanh:
            return ad::tanh(z);
    }
    return z;
}

// Pre-activations of every layer for a single input.
std::vector<Tensor> pre_activations(const Mlp& net, const Tensor& x) {
    if (x.rank() != 1 || x.size() != net.input_dim()) {
        throw ShapeError("nn: expected input of shape [" + std::to_string(net.input_dim()) + "], got " +
                         shape_str(x.shape()));
    }
    std::vector<Tensor> out;
    ad::NoGradGuard guard;
    ad::Var h = ad::constant(x);
    for (const Layer& layer : net.layers()) {
        ad::Var z = ad::affine(ad::constant(layer.weight), h, ad::constant(layer.bias));
        out.push_back(z.value());
        h = activate(z, layer);
    }
    return out;
}

std::vector<double> to_vector(const Tensor& t) { return t.storage(); }

}  // namespace

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::leaky_relu: return "leaky_relu";
        case Activation::tanh: return "tanh";
    }
    return "unknown";
}

Activation parse_activation(const std::string& name) {
    if (name == "identity") return Activation::identity;
    if (name == "relu") return Activation::relu;
    if (name == "leaky_relu") return Activation::leaky_relu;
    if (name == "tanh") return Activation::tanh;
    throw ConfigError("unknown activation '" + name + "'");
}

Mlp::Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw ConfigError("mlp: at least one layer required");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const Layer& l = layers_[i];
        if (l.weight.rank() != 2 || l.bias.shape() != Shape{l.weight.rows()}) {
            throw ShapeError("mlp: layer " + std::to_string(i) + " has weight " + shape_str(l.weight.shape()) +
                             " and bias " + shape_str(l.bias.shape()));
        }
        if (i > 0 && l.weight.cols() != layers_[i - 1].weight.rows()) {
            throw ShapeError("mlp: layer " + std::to_string(i) + " expects " + std::to_string(l.weight.cols()) +
                             " inputs but the previous layer has " +
                             std::to_string(layers_[i - 1].weight.rows()) + " units");
        }
    }
}

std::size_t Mlp::input_dim() const { return layers_.empty() ? 0 : layers_.front().weight.cols(); }
std::size_t Mlp::output_dim() const { return layers_.empty() ? 0 : layers_.back().weight.rows(); }

std::size_t Mlp::hidden_units() const {
    std::size_t n = 0;
    for (const Layer& l : layers_) n += l.activation == Activation::identity ? 0 : l.weight.rows();
    return n;
}

MlpSpec Mlp::spec() const {
    MlpSpec s{input_dim(), {}};
    for (const Layer& l : layers_) s.layers.push_back({l.weight.rows(), l.activation, l.slope});
    return s;
}

bool Mlp::is_piecewise_linear() const {
    for (const Layer& l : layers_) {
        if (l.activation == Activation::tanh) return false;
    }
    return true;
}

std::vector<Tensor*> Mlp::parameters() {
    std::vector<Tensor*> out;
    for (Layer& l : layers_) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    return out;
}

std::vector<const Tensor*> Mlp::parameters() const {
    std::vector<const Tensor*> out;
    for (const Layer& l : layers_) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    return out;
}

std::vector<std::string> Mlp::parameter_names(const std::string& prefix) const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        out.push_back(prefix + ".layer" + std::to_string(i) + ".weight");
        out.push_back(prefix + ".layer" + std::to_string(i) + ".bias");
    }
    return out;
}

bool operator==(const Mlp& a, const Mlp& b) {
    if (a.layers_.size() != b.layers_.size()) return false;
    for (std::size_t i = 0; i < a.layers_.size(); ++i) {
        const Layer& x = a.layers_[i];
        const Layer& y = b.layers_[i];
        if (x.weight != y.weight || x.bias != y.bias || x.activation != y.activation || x.slope != y.slope) {
            return false;
        }
    }
    return true;
}

Mlp init_mlp(const MlpSpec& spec, std::mt19937_64& rng) {
    if (spec.layers.empty() || spec.input_dim == 0) throw ConfigError("init: empty network spec");
    std::vector<Layer> layers;
    std::size_t fan_in = spec.input_dim;
    for (const LayerSpec& ls : spec.layers) {
        if (ls.units == 0) throw ConfigError("init: layer with zero units");
        std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
        Layer layer{Tensor(Shape{ls.units, fan_in}), Tensor(Shape{ls.units}), ls.activation, ls.slope};
        for (double& w : layer.weight.storage()) w = normal(rng);
        layers.push_back(std::move(layer));
        fan_in = ls.units;
    }
    return Mlp(std::move(layers));
}

Mlp init_mlp(const MlpSpec& spec, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return init_mlp(spec, rng);
}

std::vector<ad::Var> BoundMlp::leaves() const {
    std::vector<ad::Var> out;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        out.push_back(weights[i]);
        out.push_back(biases[i]);
    }
    return out;
}

BoundMlp bind(const Mlp& net, bool trainable) {
    BoundMlp b{&net, {}, {}};
    for (const Layer& l : net.layers()) {
        b.weights.push_back(trainable ? ad::parameter(l.weight) : ad::constant(l.weight));
        b.biases.push_back(trainable ? ad::parameter(l.bias) : ad::constant(l.bias));
    }
    return b;
}

ad::Var forward(const BoundMlp& bound, const ad::Var& x) {
    const Mlp& net = *bound.net;
    const Shape& s = x.shape();
    const std::size_t in = s.empty() ? 0 : s.back();
    if (s.empty() || s.size() > 2 || in != net.input_dim()) {
        throw ShapeError("nn forward: expected input dim " + std::to_string(net.input_dim()) + ", got " +
                         shape_str(s));
    }
    ad::Var h = x;
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        h = activate(ad::affine(bound.weights[i], h, bound.biases[i]), net.layers()[i]);
    }
    return h;
}

ad::Var forward(const Mlp& net, const ad::Var& x) { return forward(bind(net, false), x); }

Tensor evaluate(const Mlp& net, const Tensor& x) {
    ad::NoGradGuard guard;
    return forward(net, ad::constant(x)).value();
}

ActivationPattern activation_pattern(const Mlp& net, const Tensor& x) {
    ActivationPattern p;
    const auto pre = pre_activations(net, x);
    for (std::size_t i = 0; i < pre.size(); ++i) {
        if (net.layers()[i].activation == Activation::identity) continue;
        for (double z : pre[i].data()) p.active.push_back(z > 0.0);
    }
    return p;
}

EffectiveAffine effective_affine(const Mlp& net, const Tensor& x) {
    if (!net.is_piecewise_linear() || net.output_dim() != 1) {
        throw ConfigError("effective_affine: needs a scalar-output piecewise-linear network");
    }
    const ad::Var xv = ad::parameter(x);
    const ad::Var f = ad::sum(forward(net, xv));
    Tensor w = ad::backward(f, {xv})[0].value();
    double dot = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) dot += w[i] * x[i];
    return {std::move(w), f.item() - dot};
}

double pattern_exit_distance(const Mlp& net, const Tensor& x, const Tensor& dir) {
    if (!net.is_piecewise_linear()) throw ConfigError("pattern_exit_distance: network is not piecewise linear");
    if (dir.shape() != x.shape()) throw ShapeError("pattern_exit_distance: direction shape mismatch");
    // Within the current region every pre-activation is affine in t; propagate
    // value and directional derivative with the region's fixed masks.
    Tensor h = x;
    Tensor dh = dir;
    double best = std::numeric_limits<double>::infinity();
    for (const Layer& l : net.layers()) {
        const std::size_t out = l.weight.rows(), in = l.weight.cols();
        Tensor z(Shape{out}), dz(Shape{out});
        for (std::size_t r = 0; r < out; ++r) {
            double s = l.bias[r], ds = 0.0;
            for (std::size_t c = 0; c < in; ++c) {
                s += l.weight[r * in + c] * h[c];
                ds += l.weight[r * in + c] * dh[c];
            }
            z[r] = s;
            dz[r] = ds;
        }
        if (l.activation == Activation::identity) {
            h = std::move(z);
            dh = std::move(dz);
            continue;
        }
        for (std::size_t r = 0; r < out; ++r) {
            const bool active = z[r] > 0.0;
            // Active units leave when z hits 0 from above; inactive ones (z <= 0)
            // only when z becomes positive.
            if (active && dz[r] < 0.0) best = std::min(best, -z[r] / dz[r]);
            if (!active && dz[r] > 0.0) best = std::min(best, -z[r] / dz[r]);
            const double gain = active ? 1.0 : (l.activation == Activation::relu ? 0.0 : l.slope);
            z[r] *= gain;
            dz[r] *= gain;
        }
        h = std::move(z);
        dh = std::move(dz);
    }
    return best;
}

nlohmann::json spec_to_json(const MlpSpec& spec) {
    nlohmann::json layers = nlohmann::json::array();
    for (const LayerSpec& l : spec.layers) {
        nlohmann::json j{{"units", l.units}, {"activation", activation_name(l.activation)}};
        if (l.activation == Activation::leaky_relu) j["slope"] = l.slope;
        layers.push_back(std::move(j));
    }
    return {{"input_dim", spec.input_dim}, {"layers", std::move(layers)}};
}

MlpSpec spec_from_json(const nlohmann::json& doc) {
    MlpSpec spec;
    spec.input_dim = doc.at("input_dim").get<std::size_t>();
    for (const auto& l : doc.at("layers")) {
        LayerSpec ls;
        ls.units = l.at("units").get<std::size_t>();
        ls.activation = parse_activation(l.at("activation").get<std::string>());
        if (l.contains("slope")) ls.slope = l.at("slope").get<double>();
        spec.layers.push_back(ls);
    }
    return spec;
}

nlohmann::json to_json(const Mlp& net) {
    nlohmann::json weights = nlohmann::json::array();
    nlohmann::json biases = nlohmann::json::array();
    for (const Layer& l : net.layers()) {
        weights.push_back(to_vector(l.weight));
        biases.push_back(to_vector(l.bias));
    }
    return {{"spec", spec_to_json(net.spec())}, {"weights", std::move(weights)}, {"biases", std::move(biases)}};
}

Mlp mlp_from_json(const nlohmann::json& doc) {
    try {
        const MlpSpec spec = spec_from_json(doc.at("spec"));
        const auto& weights = doc.at("weights");
        const auto& biases = doc.at("biases");
        if (weights.size() != spec.layers.size() || biases.size() != spec.layers.size()) {
            throw ConfigError("weights document: layer count mismatch");
        }
        std::vector<Layer> layers;
        std::size_t fan_in = spec.input_dim;
        for (std::size_t i = 0; i < spec.layers.size(); ++i) {
            const LayerSpec& ls = spec.layers[i];
            layers.push_back(Layer{Tensor(Shape{ls.units, fan_in}, weights[i].get<std::vector<double>>()),
                                   Tensor(Shape{ls.units}, biases[i].get<std::vector<double>>()), ls.activation,
                                   ls.slope});
            fan_in = ls.units;
        }
        return Mlp(std::move(layers));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("weights document: ") + e.what());
    } catch (const ShapeError& e) {
        throw ConfigError(std::string("weights document: ") + e.what());
    }
}

}  // namespace granlab::nn
