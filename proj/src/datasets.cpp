#include "granlab/datasets.hpp"

#include <cmath>
#include <numbers>

#include "granlab/error.hpp"

namespace granlab::data {
namespace {

constexpr std::size_t kMoonCentersPerArc = 8;

void moon_point(bool inner, double theta, double& x, double& y) {
    if (!inner) {
        x = std::cos(theta);
        y = std::sin(theta);
    } else {
        x = 1.0 - std::cos(theta);
        y = 0.5 - std::sin(theta);
    }
}

}  // namespace

std::string dataset_name(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::gauss_ring: return "gauss_ring";
        case DatasetKind::grid: return "grid";
        case DatasetKind::two_moons: return "two_moons";
    }
    return "unknown";
}

DatasetKind parse_dataset(const std::string& name) {
    if (name == "gauss_ring") return DatasetKind::gauss_ring;
    if (name == "grid") return DatasetKind::grid;
    if (name == "two_moons") return DatasetKind::two_moons;
    throw ConfigError("unknown dataset '" + name + "'");
}

ToyDataset::ToyDataset(DatasetSpec spec) : spec_(spec) {
    switch (spec_.kind) {
        case DatasetKind::gauss_ring: {
            if (spec_.n_modes == 0) throw ConfigError("gauss_ring: n_modes must be positive");
            centers_ = Tensor(Shape{spec_.n_modes, 2});
            for (std::size_t k = 0; k < spec_.n_modes; ++k) {
                const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(spec_.n_modes);
                centers_.at(k, 0) = spec_.radius * std::cos(a);
                centers_.at(k, 1) = spec_.radius * std::sin(a);
            }
            break;
        }
        case DatasetKind::grid: {
            const std::size_t n = spec_.n_modes;
            if (n == 0) throw ConfigError("grid: n_modes must be positive");
            centers_ = Tensor(Shape{n * n, 2});
            const double offset = 0.5 * static_cast<double>(n - 1);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    centers_.at(i * n + j, 0) = (static_cast<double>(i) - offset) * spec_.spacing;
                    centers_.at(i * n + j, 1) = (static_cast<double>(j) - offset) * spec_.spacing;
                }
            break;
        }
        case DatasetKind::two_moons: {
            centers_ = Tensor(Shape{2 * kMoonCentersPerArc, 2});
            for (std::size_t arc = 0; arc < 2; ++arc)
                for (std::size_t k = 0; k < kMoonCentersPerArc; ++k) {
                    const double theta = std::numbers::pi * static_cast<double>(k) /
                                         static_cast<double>(kMoonCentersPerArc - 1);
                    const std::size_t r = arc * kMoonCentersPerArc + k;
                    moon_point(arc == 1, theta, centers_.at(r, 0), centers_.at(r, 1));
                }
            break;
        }
    }
    if (!(spec_.mode_scale() >= 0.0)) throw ConfigError("dataset: noise scale must be >= 0");
}

Tensor ToyDataset::sample(std::size_t n, std::mt19937_64& rng) const {
    Tensor out(Shape{n, 2});
    std::normal_distribution<double> normal(0.0, 1.0);
    if (spec_.kind == DatasetKind::two_moons) {
        std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
        std::bernoulli_distribution inner(0.5);
        for (std::size_t i = 0; i < n; ++i) {
            const bool in = inner(rng);
            const double theta = angle(rng);
            double x = 0.0, y = 0.0;
            moon_point(in, theta, x, y);
            out.at(i, 0) = x + spec_.noise * normal(rng);
            out.at(i, 1) = y + spec_.noise * normal(rng);
        }
        return out;
    }
    std::uniform_int_distribution<std::size_t> pick(0, centers_.rows() - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = pick(rng);
        out.at(i, 0) = centers_.at(k, 0) + spec_.sigma * normal(rng);
        out.at(i, 1) = centers_.at(k, 1) + spec_.sigma * normal(rng);
    }
    return out;
}

}  // namespace granlab::data
