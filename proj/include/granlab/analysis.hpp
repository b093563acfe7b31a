#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "granlab/autodiff.hpp"
#include "granlab/kernels.hpp"
#include "granlab/nn.hpp"
#include "granlab/regularizers.hpp"
#include "granlab/tensor.hpp"

namespace granlab::analysis {

/// M = U diag(sigma) V^T with U [m, m], V [n, n] orthogonal and sigma
/// (length min(m, n)) descending.
struct SvdResult {
    Tensor u;
    std::vector<double> sigma;
    Tensor v;

    Tensor vt() const { return transpose(v); }
};

/// One-sided Jacobi SVD. Throws NumericError on non-finite input.
SvdResult svd(const Tensor& m);
double sigma1(const Tensor& m);

/// V D V^T where D selects the right singular vectors whose singular value
/// lies within `tol` of `sigma_value`. An empty selection gives the zero matrix.
Tensor gamma(const Tensor& m, double sigma_value, double tol);

struct Theorem1Record {
    double sigma1_a = 0.0;
    double sigma1_b = 0.0;
    double sigma1_ba = 0.0;
    /// sigma_1(Gamma_1(B) Gamma_1(A^T))
    double alignment = 0.0;
    bool tight = false;    ///< |sigma1_ba - 1| <= tol
    bool aligned = false;  ///< |alignment - 1| <= tol
    bool submultiplicative = false;
    bool predicate_holds = false;  ///< tight == aligned and submultiplicative
};

/// Throws PreconditionError unless sigma_1(A) and sigma_1(B) are within tol of 1.
Theorem1Record theorem1_check(const Tensor& a, const Tensor& b, double tol);

/// Haar-distributed orthogonal matrix (QR of a Gaussian with sign fix).
Tensor random_orthogonal(std::size_t n, std::mt19937_64& rng);

struct SuiteOptions {
    std::size_t n_pairs = 100;
    std::size_t max_dim = 16;
    std::uint64_t seed = 0;
    double tol = 1e-8;
    /// Scales sigma_1(A) by this factor; anything but 1 violates the precondition.
    double a_scale = 1.0;
    kernels::Exec exec = kernels::Exec::parallel;
};

struct SuiteReport {
    std::size_t pairs = 0;
    std::size_t checked = 0;
    std::size_t rejected = 0;
    std::size_t failures = 0;
    std::size_t aligned_constructed = 0;
    std::size_t tight_observed = 0;
    std::vector<Theorem1Record> records;  ///< one per checked pair, in pair order
};

/// Pair i draws its dimensions and matrices from its own stream, so serial and
/// parallel runs yield identical reports. Even pairs share the top singular
/// direction (B's top right singular vector = A's top left singular vector),
/// odd pairs use independent orthogonal factors.
SuiteReport random_theorem1_suite(const SuiteOptions& opt);

struct SubmultReport {
    std::size_t pairs = 0;
    std::size_t failures = 0;
    double worst_excess = 0.0;  ///< max of sigma1(BA) - sigma1(B) sigma1(A)
};

/// Random A, B with sigma_1 <= 1; counts sigma1(BA) > sigma1(B) sigma1(A) + tol.
SubmultReport submultiplicativity_suite(std::size_t n_pairs, std::size_t max_dim, std::uint64_t seed, double tol,
                                        kernels::Exec exec = kernels::Exec::parallel);

nlohmann::json suite_to_json(const SuiteReport& r, const SuiteOptions& opt);

/// h maps a batch [B, d] to [B].
using ScalarField = std::function<ad::Var(const ad::Var&)>;

/// Builds h = g (GraN) or h = f from a critic network.
ScalarField make_field(const nn::Mlp& net, const std::optional<reg::GranConfig>& gran);

struct Quantiles {
    std::size_t count = 0;
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
    double mean = 0.0;
    double span() const { return max - min; }
};

/// Linear interpolation between order statistics. Throws PreconditionError when empty.
Quantiles quantiles(std::vector<double> values);

struct SurveyReport {
    Quantiles all;
    std::vector<double> norms;
};

/// ||grad_x h(x_i)|| for every row of `samples`.
SurveyReport grad_norm_survey(const ScalarField& h, const Tensor& samples);

struct ProbeRow {
    double delta = 0.0;
    std::string origin;
    std::size_t index = 0;
    double grad_norm = 0.0;
    double value = 0.0;  ///< |h(x + delta n) - h(x)| / delta
};

struct ProbeReport {
    std::vector<ProbeRow> rows;  ///< grouped by delta, then origin, then sample
    std::size_t skipped_zero_gradient = 0;
    struct Group {
        double delta;
        std::string origin;
        Quantiles summary;
    };
    std::vector<Group> groups;
};

struct ProbeSet {
    std::string origin;
    Tensor samples;
};

/// Steps each sample by delta along n = grad h / ||grad h||.
ProbeReport fd_probe(const ScalarField& h, const std::vector<ProbeSet>& sets, const std::vector<double>& deltas);

/// Per-sample step delta_i = min(fraction * t_i, cap), with t_i the distance
/// along n_i at which h's activation pattern first changes. `net` is the
/// network underlying `h`.
ProbeReport adaptive_probe(const ScalarField& h, const nn::Mlp& net, const ProbeSet& set, double fraction,
                           double cap);

void write_survey_csv(std::ostream& os, const SurveyReport& r);
void write_probe_csv(std::ostream& os, const ProbeReport& r);
nlohmann::json quantiles_to_json(const Quantiles& q);

}  // namespace granlab::analysis
