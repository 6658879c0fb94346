#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <vector>

#include "lsv/errors.hpp"
#include "lsv/parallel.hpp"

// Mollifiers W_delta = (1/delta) W1(./delta) and kernel density estimation
// over particle clouds, with a naive backend and an accelerated binned one.
// Both kernel families integrate to 1 and have vanishing first moment.

namespace lsv {

enum class KernelFamily { gaussian, quartic };

struct KernelSpec {
    KernelFamily family = KernelFamily::gaussian;
    double delta = 1.0;
    double truncation_radius = 8.0;   // in units of delta; gaussian only

    void validate() const {
        if (!(delta > 0.0)) throw validation_error("KernelSpec: delta must be positive");
        if (family == KernelFamily::gaussian && !(truncation_radius > 0.0))
            throw validation_error("KernelSpec: truncation_radius must be positive");
    }
};

inline double kernel_w1(KernelFamily family, double y) {
    if (family == KernelFamily::gaussian)
        return std::exp(-0.5 * y * y) / std::sqrt(2.0 * std::numbers::pi);
    const double s = 1.0 - y * y;
    return s > 0.0 ? (15.0 / 16.0) * s * s : 0.0;
}

// sup |W1'| for the family (used by the Lipschitz bound on W_delta).
inline double kernel_w1_sup_deriv(KernelFamily family) {
    if (family == KernelFamily::gaussian)
        return std::exp(-0.5) / std::sqrt(2.0 * std::numbers::pi);
    return 2.5 / std::sqrt(3.0);
}

inline double mollifier_eval(const KernelSpec& spec, double x) {
    spec.validate();
    return kernel_w1(spec.family, x / spec.delta) / spec.delta;
}

// Radius beyond which W_delta is zero (quartic) or truncated away (gaussian).
inline double kernel_support_radius(const KernelSpec& spec) {
    return spec.family == KernelFamily::quartic ? spec.delta
                                                : spec.delta * spec.truncation_radius;
}

enum class KdeMethod { naive, binned };

namespace detail {

// Accelerated evaluator for sums  S(x) = sum_j w_j W_delta(x - X_j).
//
// Particles are sorted by position and grouped into lattice bins of pitch
// delta/4. For the quartic family, W_delta is a polynomial in (x - X_j) on
// its support, so each bin contributes through prefix sums of the weighted
// moments sum w (X - c_b)^m, m = 0..4, centered at the bin center to keep
// the expansion well conditioned. The gaussian family sweeps particles in
// the truncation window directly.
//
// Supports one or two weight sets evaluated in a single pass (the particle
// system needs both the plain and the f-weighted density at each point).
class BinnedKde {
public:
    BinnedKde(const std::vector<double>& positions,
              const std::vector<double>* w0,
              const std::vector<double>* w1,
              const KernelSpec& spec)
        : spec_(spec), n_sets_(w1 ? 2 : 1) {
        spec_.validate();
        const std::size_t m = positions.size();
        if (m == 0) throw validation_error("kde: empty ensemble");

        order_.resize(m);
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        std::stable_sort(order_.begin(), order_.end(),
                         [&](std::size_t a, std::size_t b) { return positions[a] < positions[b]; });

        xs_.resize(m);
        for (int s = 0; s < n_sets_; ++s) ws_[s].resize(m);
        for (std::size_t i = 0; i < m; ++i) {
            xs_[i] = positions[order_[i]];
            ws_[0][i] = w0 ? (*w0)[order_[i]] : 1.0;
            if (n_sets_ == 2) ws_[1][i] = (*w1)[order_[i]];
        }

        pitch_ = spec_.delta / 4.0;
        origin_ = xs_.front();

        if (spec_.family == KernelFamily::quartic) build_moments();
    }

    // Accumulated sums (not divided by M) for each weight set.
    std::array<double, 2> eval(double x) const {
        return spec_.family == KernelFamily::quartic ? eval_quartic(x) : eval_gaussian(x);
    }

    int sets() const { return n_sets_; }

private:
    std::int64_t bin_index(double x) const {
        return static_cast<std::int64_t>(std::floor((x - origin_) / pitch_));
    }
    double bin_center(std::int64_t b) const {
        return origin_ + (static_cast<double>(b) + 0.5) * pitch_;
    }

    void build_moments() {
        const std::size_t m = xs_.size();
        bin_ids_.clear();
        starts_.clear();
        std::int64_t cur = std::numeric_limits<std::int64_t>::min();
        for (std::size_t i = 0; i < m; ++i) {
            const std::int64_t b = bin_index(xs_[i]);
            if (bin_ids_.empty() || b != cur) {
                bin_ids_.push_back(b);
                starts_.push_back(i);
                cur = b;
            }
        }
        starts_.push_back(m);

        for (int s = 0; s < n_sets_; ++s)
            for (int k = 0; k < 5; ++k) cum_[s][k].assign(m + 1, 0.0);

        for (std::size_t p = 0; p + 1 < starts_.size(); ++p) {
            const double c = bin_center(bin_ids_[p]);
            for (std::size_t i = starts_[p]; i < starts_[p + 1]; ++i) {
                const double y = xs_[i] - c;
                const double y2 = y * y;
                const std::array<double, 5> pw{1.0, y, y2, y2 * y, y2 * y2};
                for (int s = 0; s < n_sets_; ++s) {
                    const double w = ws_[s][i];
                    for (int k = 0; k < 5; ++k)
                        cum_[s][k][i + 1] = (i == starts_[p] ? 0.0 : cum_[s][k][i]) + w * pw[k];
                }
            }
        }
    }

    std::array<double, 2> eval_quartic(double x) const {
        const double r = spec_.delta;
        const double lo = x - r, hi = x + r;
        const std::size_t i0 = std::lower_bound(xs_.begin(), xs_.end(), lo) - xs_.begin();
        const std::size_t i1 = std::upper_bound(xs_.begin(), xs_.end(), hi) - xs_.begin();
        std::array<double, 2> acc{0.0, 0.0};
        if (i0 >= i1) return acc;

        // first stored bin whose range contains i0
        std::size_t p = std::upper_bound(starts_.begin(), starts_.end(), i0) - starts_.begin() - 1;
        const double inv_d2 = 1.0 / (r * r);
        for (; p + 1 < starts_.size() && starts_[p] < i1; ++p) {
            const std::size_t a = std::max(starts_[p], i0);
            const std::size_t b = std::min(starts_[p + 1], i1);
            if (a >= b) continue;
            const double dd = x - bin_center(bin_ids_[p]);
            const double dd2 = dd * dd, dd3 = dd2 * dd, dd4 = dd2 * dd2;
            for (int s = 0; s < n_sets_; ++s) {
                const double s0 = range_sum(s, 0, p, a, b);
                const double s1 = range_sum(s, 1, p, a, b);
                const double s2 = range_sum(s, 2, p, a, b);
                const double s3 = range_sum(s, 3, p, a, b);
                const double s4 = range_sum(s, 4, p, a, b);
                const double q2 = dd2 * s0 - 2.0 * dd * s1 + s2;
                const double q4 = dd4 * s0 - 4.0 * dd3 * s1 + 6.0 * dd2 * s2 - 4.0 * dd * s3 + s4;
                acc[s] += s0 - 2.0 * inv_d2 * q2 + inv_d2 * inv_d2 * q4;
            }
        }
        const double scale = 15.0 / (16.0 * spec_.delta);
        acc[0] *= scale;
        acc[1] *= scale;
        return acc;
    }

    double range_sum(int s, int k, std::size_t p, std::size_t a, std::size_t b) const {
        const double head = (a == starts_[p]) ? 0.0 : cum_[s][k][a];
        return cum_[s][k][b] - head;
    }

    std::array<double, 2> eval_gaussian(double x) const {
        const double r = kernel_support_radius(spec_);
        const std::size_t i0 = std::lower_bound(xs_.begin(), xs_.end(), x - r) - xs_.begin();
        const std::size_t i1 = std::upper_bound(xs_.begin(), xs_.end(), x + r) - xs_.begin();
        const double inv_delta = 1.0 / spec_.delta;
        const double norm = inv_delta / std::sqrt(2.0 * std::numbers::pi);
        std::array<double, 2> acc{0.0, 0.0};
        for (std::size_t i = i0; i < i1; ++i) {
            const double y = (x - xs_[i]) * inv_delta;
            const double k = norm * std::exp(-0.5 * y * y);
            acc[0] += ws_[0][i] * k;
            if (n_sets_ == 2) acc[1] += ws_[1][i] * k;
        }
        return acc;
    }

    KernelSpec spec_;
    int n_sets_;
    double pitch_ = 0.0;
    double origin_ = 0.0;
    std::vector<std::size_t> order_;
    std::vector<double> xs_;
    std::array<std::vector<double>, 2> ws_;
    std::vector<std::int64_t> bin_ids_;
    std::vector<std::size_t> starts_;
    std::array<std::array<std::vector<double>, 5>, 2> cum_;
};

inline std::array<double, 2> naive_sums(const std::vector<double>& positions,
                                        const std::vector<double>* w0,
                                        const std::vector<double>* w1,
                                        const KernelSpec& spec, double x) {
    std::array<double, 2> acc{0.0, 0.0};
    for (std::size_t j = 0; j < positions.size(); ++j) {
        const double k = mollifier_eval(spec, x - positions[j]);
        acc[0] += (w0 ? (*w0)[j] : 1.0) * k;
        if (w1) acc[1] += (*w1)[j] * k;
    }
    return acc;
}

} // namespace detail

// (1/M) sum_j w_j W_delta(x - X_j) at each evaluation point.
inline std::vector<double> kde(const std::vector<double>& positions,
                               const std::vector<double>& weights,
                               const std::vector<double>& eval_points,
                               const KernelSpec& spec, KdeMethod method, int threads = 1) {
    spec.validate();
    if (positions.empty()) throw validation_error("kde: empty ensemble");
    if (positions.size() != weights.size())
        throw validation_error("kde: positions/weights length mismatch");
    for (double w : weights)
        if (!(w >= 0.0)) throw validation_error("kde: weights must be nonnegative");

    const double inv_m = 1.0 / static_cast<double>(positions.size());
    std::vector<double> out(eval_points.size(), 0.0);
    if (method == KdeMethod::naive) {
        parallel_for(eval_points.size(), threads, [&](std::size_t i) {
            out[i] = detail::naive_sums(positions, &weights, nullptr, spec, eval_points[i])[0] * inv_m;
        });
    } else {
        detail::BinnedKde engine(positions, &weights, nullptr, spec);
        parallel_for(eval_points.size(), threads, [&](std::size_t i) {
            out[i] = engine.eval(eval_points[i])[0] * inv_m;
        });
    }
    return out;
}

struct KdeDual {
    std::vector<double> plain;      // weights == 1
    std::vector<double> weighted;   // weights == fvals
};

// Both densities of the particle drift/diffusion ratio in one pass.
inline KdeDual kde_dual(const std::vector<double>& positions,
                        const std::vector<double>& fvals,
                        const std::vector<double>& eval_points,
                        const KernelSpec& spec, KdeMethod method, int threads = 1) {
    spec.validate();
    if (positions.empty()) throw validation_error("kde: empty ensemble");
    if (positions.size() != fvals.size())
        throw validation_error("kde: positions/fvals length mismatch");

    const double inv_m = 1.0 / static_cast<double>(positions.size());
    KdeDual out;
    out.plain.assign(eval_points.size(), 0.0);
    out.weighted.assign(eval_points.size(), 0.0);
    if (method == KdeMethod::naive) {
        std::vector<double> ones(positions.size(), 1.0);
        parallel_for(eval_points.size(), threads, [&](std::size_t i) {
            const auto s = detail::naive_sums(positions, &ones, &fvals, spec, eval_points[i]);
            out.plain[i] = s[0] * inv_m;
            out.weighted[i] = s[1] * inv_m;
        });
    } else {
        detail::BinnedKde engine(positions, nullptr, &fvals, spec);
        parallel_for(eval_points.size(), threads, [&](std::size_t i) {
            const auto s = engine.eval(eval_points[i]);
            out.plain[i] = s[0] * inv_m;
            out.weighted[i] = s[1] * inv_m;
        });
    }
    return out;
}

// W_delta * p on a uniform grid. The discrete stencil is renormalized to
// unit mass so the operator degenerates to the identity when delta is far
// below the grid pitch; near the boundary the truncated stencil is
// renormalized locally.
inline std::vector<double> grid_convolve(const std::vector<double>& density, double grid_pitch,
                                         const KernelSpec& spec) {
    spec.validate();
    if (!(grid_pitch > 0.0)) throw validation_error("grid_convolve: grid_pitch must be positive");
    const std::int64_t n = static_cast<std::int64_t>(density.size());
    if (n == 0) return {};

    const std::int64_t reach =
        static_cast<std::int64_t>(std::ceil(kernel_support_radius(spec) / grid_pitch));
    std::vector<double> stencil(2 * reach + 1);
    double total = 0.0;
    for (std::int64_t m = -reach; m <= reach; ++m) {
        stencil[m + reach] = mollifier_eval(spec, static_cast<double>(m) * grid_pitch);
        total += stencil[m + reach];
    }
    if (!(total > 0.0)) throw numeric_error("grid_convolve: degenerate stencil");

    std::vector<double> out(density.size(), 0.0);
    for (std::int64_t j = 0; j < n; ++j) {
        const std::int64_t m0 = std::max<std::int64_t>(-reach, -j);
        const std::int64_t m1 = std::min<std::int64_t>(reach, n - 1 - j);
        double acc = 0.0, wsum = 0.0;
        for (std::int64_t m = m0; m <= m1; ++m) {
            acc += stencil[m + reach] * density[j + m];
            wsum += stencil[m + reach];
        }
        out[j] = std::max(0.0, acc / wsum);
    }
    return out;
}

} // namespace lsv
