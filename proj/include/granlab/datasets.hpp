#pragma once

#include <random>
#include <string>

#include "granlab/tensor.hpp"

namespace granlab::data {

enum class DatasetKind { gauss_ring, grid, two_moons };

std::string dataset_name(DatasetKind kind);
DatasetKind parse_dataset(const std::string& name);

struct DatasetSpec {
    DatasetKind kind = DatasetKind::gauss_ring;
    std::size_t n_modes = 8;  ///< ring: number of modes; grid: modes per side
    double radius = 2.0;      ///< ring radius
    double spacing = 2.0;     ///< grid spacing
    double sigma = 0.02;      ///< per-mode isotropic std (ring, grid)
    double noise = 0.05;      ///< two_moons noise std

    /// Per-mode spread used to size the coverage radius.
    double mode_scale() const { return kind == DatasetKind::two_moons ? noise : sigma; }
};

/// Synthetic 2-D distribution with deterministic mode centres.
class ToyDataset {
public:
    explicit ToyDataset(DatasetSpec spec);

    const DatasetSpec& spec() const { return spec_; }
    /// [n_centres, 2]. For two_moons: eight evenly spaced points on each arc.
    const Tensor& centers() const { return centers_; }
    /// [n, 2] i.i.d. samples.
    Tensor sample(std::size_t n, std::mt19937_64& rng) const;

private:
    DatasetSpec spec_;
    Tensor centers_;
};

}  // namespace granlab::data
