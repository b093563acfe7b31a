#include "granlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "granlab/csv.hpp"
#include "granlab/error.hpp"

namespace granlab::analysis {
namespace {

constexpr int kMaxSweeps = 100;

double col_dot(const std::vector<double>& a, std::size_t rows, std::size_t cols, std::size_t p, std::size_t q) {
    double s = 0.0;
    for (std::size_t i = 0; i < rows; ++i) s += a[i * cols + p] * a[i * cols + q];
    return s;
}

void rotate_cols(std::vector<double>& a, std::size_t rows, std::size_t cols, std::size_t p, std::size_t q, double c,
                 double s) {
    for (std::size_t i = 0; i < rows; ++i) {
        const double x = a[i * cols + p], y = a[i * cols + q];
        a[i * cols + p] = c * x - s * y;
        a[i * cols + q] = s * x + c * y;
    }
}

/// Fills columns [first, n) of the n x n matrix q (row-major) with an
/// orthonormal completion of its leading columns.
void complete_basis(std::vector<double>& q, std::size_t n, std::size_t first) {
    std::size_t filled = first;
    for (std::size_t e = 0; e < n && filled < n; ++e) {
        std::vector<double> cand(n, 0.0);
        cand[e] = 1.0;
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t j = 0; j < filled; ++j) {
                double d = 0.0;
                for (std::size_t i = 0; i < n; ++i) d += q[i * n + j] * cand[i];
                for (std::size_t i = 0; i < n; ++i) cand[i] -= d * q[i * n + j];
            }
        }
        double norm = 0.0;
        for (double c : cand) norm += c * c;
        norm = std::sqrt(norm);
        if (norm < 1e-6) continue;
        for (std::size_t i = 0; i < n; ++i) q[i * n + filled] = cand[i] / norm;
        ++filled;
    }
}

SvdResult svd_tall(const Tensor& m) {
    const std::size_t rows = m.rows(), cols = m.cols();
    std::vector<double> a = m.storage();
    std::vector<double> v(cols * cols, 0.0);
    for (std::size_t i = 0; i < cols; ++i) v[i * cols + i] = 1.0;

    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < cols; ++p) {
            for (std::size_t q = p + 1; q < cols; ++q) {
                const double alpha = col_dot(a, rows, cols, p, p);
                const double beta = col_dot(a, rows, cols, q, q);
                const double g = col_dot(a, rows, cols, p, q);
                if (g == 0.0 || std::abs(g) <= 1e-15 * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * g);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                rotate_cols(a, rows, cols, p, q, c, s);
                rotate_cols(v, cols, cols, p, q, c, s);
            }
        }
        if (!rotated) break;
    }

    std::vector<double> norms(cols);
    for (std::size_t j = 0; j < cols; ++j) norms[j] = std::sqrt(col_dot(a, rows, cols, j, j));
    std::vector<std::size_t> order(cols);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

    SvdResult out;
    out.sigma.resize(cols);
    out.u = Tensor(Shape{rows, rows});
    out.v = Tensor(Shape{cols, cols});
    const double smax = cols > 0 ? norms[order[0]] : 0.0;
    const double cutoff = smax * 1e-13 * static_cast<double>(std::max(rows, cols));
    std::vector<double> u(rows * rows, 0.0);
    std::size_t nonzero = 0;
    for (std::size_t k = 0; k < cols; ++k) {
        const std::size_t j = order[k];
        out.sigma[k] = norms[j];
        for (std::size_t i = 0; i < cols; ++i) out.v.at(i, k) = v[i * cols + j];
        if (norms[j] > cutoff && norms[j] > 0.0 && nonzero == k) {
            for (std::size_t i = 0; i < rows; ++i) u[i * rows + k] = a[i * cols + j] / norms[j];
            ++nonzero;
        }
    }
    complete_basis(u, rows, nonzero);
    out.u = Tensor(Shape{rows, rows}, std::move(u));
    return out;
}

std::mt19937_64 pair_stream(std::uint64_t seed, std::size_t index, std::uint32_t tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), tag};
    return std::mt19937_64(seq);
}

/// U diag(s) V^T for U [m, m], V [n, n] and s of length <= min(m, n).
Tensor compose(const Tensor& u, const std::vector<double>& s, const Tensor& v) {
    const std::size_t m = u.rows(), n = v.rows();
    Tensor us(Shape{m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = 0; k < s.size(); ++k) us.at(i, k) = u.at(i, k) * s[k];
    return matmul(us, transpose(v));
}

std::vector<double> controlled_spectrum(std::size_t k, double top, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> rest(0.05, 0.9);
    std::vector<double> s(k);
    s[0] = top;
    for (std::size_t i = 1; i < k; ++i) s[i] = rest(rng);
    std::sort(s.begin() + 1, s.end(), std::greater<>());
    return s;
}

Tensor block_rotate(const Tensor& q, std::mt19937_64& rng) {
    // q * diag(1, R): keeps the first column, mixes the rest.
    const std::size_t n = q.rows();
    if (n == 1) return q;
    const Tensor r = random_orthogonal(n - 1, rng);
    Tensor blk = identity(n);
    for (std::size_t i = 1; i < n; ++i)
        for (std::size_t j = 1; j < n; ++j) blk.at(i, j) = r.at(i - 1, j - 1);
    return matmul(q, blk);
}

std::vector<double> row_norms(const Tensor& g) {
    const std::size_t rows = g.rows(), cols = g.cols();
    std::vector<double> out(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) s += g.at(i, j) * g.at(i, j);
        out[i] = std::sqrt(s);
    }
    return out;
}

struct FieldEval {
    Tensor values;  // [B]
    Tensor grads;   // [B, d]
};

FieldEval eval_with_grad(const ScalarField& h, const Tensor& x) {
    const ad::Var xv = ad::parameter(x);
    const ad::Var out = h(xv);
    const ad::Var g = ad::backward(ad::sum(out), {xv})[0];
    return {out.value(), g.value()};
}

Tensor eval_values(const ScalarField& h, const Tensor& x) {
    // h may itself differentiate with respect to x, so x stays a leaf.
    return h(ad::parameter(x)).value();
}

}  // namespace

SvdResult svd(const Tensor& m) {
    if (m.rank() != 2) throw ShapeError("svd: expected a matrix, got " + shape_str(m.shape()));
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (!std::isfinite(m[i])) throw NumericError("svd: non-finite entry at index " + std::to_string(i));
    }
    if (m.rows() >= m.cols()) return svd_tall(m);
    SvdResult t = svd_tall(transpose(m));
    std::swap(t.u, t.v);
    return t;
}

double sigma1(const Tensor& m) {
    const SvdResult r = svd(m);
    return r.sigma.empty() ? 0.0 : r.sigma[0];
}

Tensor gamma(const Tensor& m, double sigma_value, double tol) {
    if (!(tol > 0.0)) throw PreconditionError("gamma: tol must be positive");
    const SvdResult r = svd(m);
    const std::size_t n = r.v.rows();
    Tensor out(Shape{n, n});
    for (std::size_t k = 0; k < n; ++k) {
        const double s = k < r.sigma.size() ? r.sigma[k] : 0.0;
        if (std::abs(s - sigma_value) > tol) continue;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) out.at(i, j) += r.v.at(i, k) * r.v.at(j, k);
    }
    return out;
}

Theorem1Record theorem1_check(const Tensor& a, const Tensor& b, double tol) {
    if (a.rank() != 2 || b.rank() != 2 || b.cols() != a.rows()) {
        throw ShapeError("theorem1_check: B A undefined for A " + shape_str(a.shape()) + " and B " +
                         shape_str(b.shape()));
    }
    Theorem1Record r;
    r.sigma1_a = sigma1(a);
    r.sigma1_b = sigma1(b);
    if (std::abs(r.sigma1_a - 1.0) > tol || std::abs(r.sigma1_b - 1.0) > tol) {
        throw PreconditionError("theorem1_check: sigma_1(A) = " + csv::format_double(r.sigma1_a) +
                                ", sigma_1(B) = " + csv::format_double(r.sigma1_b) + " (both must be 1)");
    }
    r.sigma1_ba = sigma1(matmul(b, a));
    r.alignment = sigma1(matmul(gamma(b, 1.0, tol), gamma(transpose(a), 1.0, tol)));
    r.tight = std::abs(r.sigma1_ba - 1.0) <= tol;
    r.aligned = std::abs(r.alignment - 1.0) <= tol;
    r.submultiplicative = r.sigma1_ba <= 1.0 + tol;
    r.predicate_holds = (r.tight == r.aligned) && r.submultiplicative;
    return r;
}

Tensor random_orthogonal(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> q(n * n);
    for (double& x : q) x = normal(rng);
    // Modified Gram-Schmidt on columns, twice; positive R diagonal.
    for (std::size_t j = 0; j < n; ++j) {
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t k = 0; k < j; ++k) {
                double d = 0.0;
                for (std::size_t i = 0; i < n; ++i) d += q[i * n + k] * q[i * n + j];
                for (std::size_t i = 0; i < n; ++i) q[i * n + j] -= d * q[i * n + k];
            }
        }
        double norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) norm += q[i * n + j] * q[i * n + j];
        norm = std::sqrt(norm);
        if (norm == 0.0) throw NumericError("random_orthogonal: degenerate draw");
        for (std::size_t i = 0; i < n; ++i) q[i * n + j] /= norm;
    }
    return Tensor(Shape{n, n}, std::move(q));
}

SuiteReport random_theorem1_suite(const SuiteOptions& opt) {
    if (opt.max_dim < 2) throw PreconditionError("random_theorem1_suite: max_dim must be at least 2");
    struct Slot {
        bool rejected = false;
        bool aligned = false;
        Theorem1Record rec;
    };
    std::vector<Slot> slots(opt.n_pairs);
    const auto run_pair = [&](std::size_t i) {
        std::mt19937_64 rng = pair_stream(opt.seed, i, 0x711u);
        std::uniform_int_distribution<std::size_t> dim(2, opt.max_dim);
        const std::size_t n = dim(rng), m = dim(rng), p = dim(rng);
        const bool aligned = i % 2 == 0;
        // A: m x n, B: p x m.
        const Tensor ua = random_orthogonal(m, rng);
        const Tensor va = random_orthogonal(n, rng);
        const Tensor ub = random_orthogonal(p, rng);
        const Tensor vb = aligned ? block_rotate(ua, rng) : random_orthogonal(m, rng);
        const Tensor a = compose(ua, controlled_spectrum(std::min(m, n), opt.a_scale, rng), va);
        const Tensor b = compose(ub, controlled_spectrum(std::min(p, m), 1.0, rng), vb);
        Slot& s = slots[i];
        s.aligned = aligned;
        try {
            s.rec = theorem1_check(a, b, opt.tol);
        } catch (const PreconditionError&) {
            s.rejected = true;
        }
    };
    const long count = static_cast<long>(opt.n_pairs);
    if (opt.exec == kernels::Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
        for (long i = 0; i < count; ++i) run_pair(static_cast<std::size_t>(i));
    } else {
        for (long i = 0; i < count; ++i) run_pair(static_cast<std::size_t>(i));
    }

    SuiteReport out;
    out.pairs = opt.n_pairs;
    for (const Slot& s : slots) {
        if (s.rejected) {
            ++out.rejected;
            continue;
        }
        ++out.checked;
        out.aligned_constructed += s.aligned ? 1 : 0;
        out.tight_observed += s.rec.tight ? 1 : 0;
        out.failures += s.rec.predicate_holds ? 0 : 1;
        out.records.push_back(s.rec);
    }
    return out;
}

SubmultReport submultiplicativity_suite(std::size_t n_pairs, std::size_t max_dim, std::uint64_t seed, double tol,
                                        kernels::Exec exec) {
    if (max_dim < 1) throw PreconditionError("submultiplicativity_suite: max_dim must be positive");
    std::vector<double> excess(n_pairs, 0.0);
    const auto run_pair = [&](std::size_t i) {
        std::mt19937_64 rng = pair_stream(seed, i, 0x5ebu);
        std::uniform_int_distribution<std::size_t> dim(1, max_dim);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const std::size_t n = dim(rng), m = dim(rng), p = dim(rng);
        const auto draw = [&](std::size_t r, std::size_t c) {
            std::vector<double> s(std::min(r, c));
            for (double& x : s) x = unit(rng);
            std::sort(s.begin(), s.end(), std::greater<>());
            const Tensor u = random_orthogonal(r, rng);
            const Tensor v = random_orthogonal(c, rng);
            return compose(u, s, v);
        };
        const Tensor a = draw(m, n);
        const Tensor b = draw(p, m);
        excess[i] = sigma1(matmul(b, a)) - sigma1(b) * sigma1(a);
    };
    const long count = static_cast<long>(n_pairs);
    if (exec == kernels::Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
        for (long i = 0; i < count; ++i) run_pair(static_cast<std::size_t>(i));
    } else {
        for (long i = 0; i < count; ++i) run_pair(static_cast<std::size_t>(i));
    }
    SubmultReport out;
    out.pairs = n_pairs;
    out.worst_excess = n_pairs > 0 ? -std::numeric_limits<double>::infinity() : 0.0;
    for (double e : excess) {
        out.worst_excess = std::max(out.worst_excess, e);
        out.failures += e > tol ? 1 : 0;
    }
    return out;
}

nlohmann::json suite_to_json(const SuiteReport& r, const SuiteOptions& opt) {
    nlohmann::json recs = nlohmann::json::array();
    for (const Theorem1Record& t : r.records) {
        recs.push_back({{"sigma1_a", t.sigma1_a},
                        {"sigma1_b", t.sigma1_b},
                        {"sigma1_ba", t.sigma1_ba},
                        {"alignment", t.alignment},
                        {"tight", t.tight},
                        {"aligned", t.aligned},
                        {"predicate_holds", t.predicate_holds}});
    }
    return {{"pairs", r.pairs},
            {"checked", r.checked},
            {"rejected", r.rejected},
            {"failures", r.failures},
            {"aligned_constructed", r.aligned_constructed},
            {"tight_observed", r.tight_observed},
            {"tol", opt.tol},
            {"max_dim", opt.max_dim},
            {"seed", opt.seed},
            {"records", std::move(recs)}};
}

ScalarField make_field(const nn::Mlp& net, const std::optional<reg::GranConfig>& gran) {
    if (net.output_dim() != 1) throw ShapeError("make_field: the network must have a scalar output");
    return [&net, gran](const ad::Var& x) {
        const std::size_t batch = x.shape().at(0);
        ad::Var f = ad::reshape(nn::forward(net, x), Shape{batch});
        return gran ? reg::gran(f, x, *gran) : f;
    };
}

Quantiles quantiles(std::vector<double> values) {
    if (values.empty()) throw PreconditionError("quantiles: no values");
    std::sort(values.begin(), values.end());
    const auto at = [&](double p) {
        const double pos = p * static_cast<double>(values.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, values.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return values[lo] + frac * (values[hi] - values[lo]);
    };
    Quantiles q;
    q.count = values.size();
    q.min = values.front();
    q.max = values.back();
    q.q1 = at(0.25);
    q.median = at(0.5);
    q.q3 = at(0.75);
    q.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    return q;
}

SurveyReport grad_norm_survey(const ScalarField& h, const Tensor& samples) {
    if (samples.rank() != 2 || samples.rows() == 0) throw PreconditionError("grad_norm_survey: no samples");
    SurveyReport r;
    r.norms = row_norms(eval_with_grad(h, samples).grads);
    r.all = quantiles(r.norms);
    return r;
}

ProbeReport fd_probe(const ScalarField& h, const std::vector<ProbeSet>& sets, const std::vector<double>& deltas) {
    for (double d : deltas) {
        if (!(d > 0.0)) throw PreconditionError("fd_probe: deltas must be positive");
    }
    ProbeReport out;
    struct Prepared {
        std::vector<std::size_t> index;
        Tensor x, dir, h0;
        std::vector<double> gnorm;
    };
    std::vector<Prepared> prepared;
    for (const ProbeSet& set : sets) {
        const FieldEval e = eval_with_grad(h, set.samples);
        const std::vector<double> gn = row_norms(e.grads);
        Prepared p;
        const std::size_t d = set.samples.cols();
        std::vector<double> xs, dirs, h0;
        for (std::size_t i = 0; i < gn.size(); ++i) {
            if (gn[i] == 0.0) {
                ++out.skipped_zero_gradient;
                continue;
            }
            p.index.push_back(i);
            p.gnorm.push_back(gn[i]);
            h0.push_back(e.values[i]);
            for (std::size_t j = 0; j < d; ++j) {
                xs.push_back(set.samples.at(i, j));
                dirs.push_back(e.grads.at(i, j) / gn[i]);
            }
        }
        const std::size_t kept = p.index.size();
        p.x = Tensor(Shape{kept, d}, std::move(xs));
        p.dir = Tensor(Shape{kept, d}, std::move(dirs));
        p.h0 = Tensor(Shape{kept}, std::move(h0));
        prepared.push_back(std::move(p));
    }
    for (double delta : deltas) {
        for (std::size_t s = 0; s < sets.size(); ++s) {
            const Prepared& p = prepared[s];
            if (p.index.empty()) continue;
            Tensor moved = p.x;
            for (std::size_t k = 0; k < moved.size(); ++k) moved[k] += delta * p.dir[k];
            const Tensor h1 = eval_values(h, moved);
            std::vector<double> vals;
            for (std::size_t i = 0; i < p.index.size(); ++i) {
                const double v = std::abs(h1[i] - p.h0[i]) / delta;
                out.rows.push_back({delta, sets[s].origin, p.index[i], p.gnorm[i], v});
                vals.push_back(v);
            }
            out.groups.push_back({delta, sets[s].origin, quantiles(std::move(vals))});
        }
    }
    return out;
}

ProbeReport adaptive_probe(const ScalarField& h, const nn::Mlp& net, const ProbeSet& set, double fraction,
                           double cap) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw PreconditionError("adaptive_probe: fraction must lie in (0, 1)");
    if (!(cap > 0.0)) throw PreconditionError("adaptive_probe: cap must be positive");
    ProbeReport out;
    const FieldEval e = eval_with_grad(h, set.samples);
    const std::vector<double> gn = row_norms(e.grads);
    const std::size_t d = set.samples.cols();
    std::vector<double> vals;
    for (std::size_t i = 0; i < gn.size(); ++i) {
        if (gn[i] == 0.0) {
            ++out.skipped_zero_gradient;
            continue;
        }
        Tensor x(Shape{d}), dir(Shape{d});
        for (std::size_t j = 0; j < d; ++j) {
            x[j] = set.samples.at(i, j);
            dir[j] = e.grads.at(i, j) / gn[i];
        }
        const double exit = nn::pattern_exit_distance(net, x, dir);
        const double delta = std::min(fraction * exit, cap);
        Tensor moved(Shape{1, d});
        for (std::size_t j = 0; j < d; ++j) moved[j] = x[j] + delta * dir[j];
        const double v = std::abs(eval_values(h, moved)[0] - e.values[i]) / delta;
        out.rows.push_back({delta, set.origin, i, gn[i], v});
        vals.push_back(v);
    }
    if (!vals.empty()) out.groups.push_back({0.0, set.origin, quantiles(std::move(vals))});
    return out;
}

void write_survey_csv(std::ostream& os, const SurveyReport& r) {
    csv::write_row(os, {"index", "grad_norm"});
    for (std::size_t i = 0; i < r.norms.size(); ++i) {
        csv::write_row(os, {std::to_string(i), csv::format_double(r.norms[i])});
    }
}

void write_probe_csv(std::ostream& os, const ProbeReport& r) {
    csv::write_row(os, {"delta", "origin", "index", "grad_norm", "fd_ratio"});
    for (const ProbeRow& row : r.rows) {
        csv::write_row(os, {csv::format_double(row.delta), row.origin, std::to_string(row.index),
                            csv::format_double(row.grad_norm), csv::format_double(row.value)});
    }
}

nlohmann::json quantiles_to_json(const Quantiles& q) {
    return {{"count", q.count}, {"min", q.min},   {"q1", q.q1},     {"median", q.median},
            {"q3", q.q3},       {"max", q.max},   {"mean", q.mean}, {"span", q.span()}};
}

}  // namespace granlab::analysis
