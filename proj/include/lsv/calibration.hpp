#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

#include "lsv/errors.hpp"
#include "lsv/fokker_planck.hpp"
#include "lsv/kernel.hpp"
#include "lsv/localvol.hpp"
#include "lsv/particle.hpp"
#include "lsv/regime.hpp"
#include "lsv/rng.hpp"

// Statistical checks: the conditional-variance identity
// E[R sigma^2 | X_t] = sigma(t, X_t)^2, marginal matching against the
// local-vol benchmark, and the particle-count convergence study.

namespace lsv {

struct BinRow {
    double center = 0.0;        // mean position of the bin members
    std::size_t count = 0;
    double mean_sigma2 = 0.0;   // empirical conditional mean of the squared coefficient
    double target = 0.0;        // sigma(t, center)^2
    double std_error = 0.0;
    double z_score = 0.0;
    bool admitted = false;      // count >= 30
};

struct BinReport {
    double time = 0.0;
    std::vector<BinRow> bins;
    std::size_t admitted_bins = 0;
    std::size_t admitted_within_3 = 0;
    bool pass = false;
};

// Equal-count binning of the snapshot in x; per bin, z-score of the mean
// squared diffusion coefficient against sigma(t, center)^2. Pass if at least
// 95% of bins with count >= 30 have |z| <= 3.
inline BinReport leverage_consistency_report(const Snapshot& snapshot,
                                             const VolSurface& surface, int n_bins) {
    surface.validate();
    const std::size_t m = snapshot.ensemble.size();
    if (n_bins < 1) throw validation_error("leverage_consistency_report: n_bins must be >= 1");
    if (snapshot.sigma2.size() != m)
        throw validation_error("leverage_consistency_report: snapshot missing coefficients");
    if (m < static_cast<std::size_t>(n_bins))
        throw validation_error("leverage_consistency_report: fewer particles than bins");

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return snapshot.ensemble.x[a] < snapshot.ensemble.x[b];
    });

    BinReport report;
    report.time = snapshot.time;
    for (int b = 0; b < n_bins; ++b) {
        const std::size_t lo = m * static_cast<std::size_t>(b) / n_bins;
        const std::size_t hi = m * (static_cast<std::size_t>(b) + 1) / n_bins;
        BinRow row;
        row.count = hi - lo;
        double sx = 0.0, s1 = 0.0, s2 = 0.0;
        for (std::size_t j = lo; j < hi; ++j) {
            const std::size_t i = order[j];
            sx += snapshot.ensemble.x[i];
            s1 += snapshot.sigma2[i];
            s2 += snapshot.sigma2[i] * snapshot.sigma2[i];
        }
        const double cnt = static_cast<double>(row.count);
        row.center = sx / cnt;
        row.mean_sigma2 = s1 / cnt;
        const double sig = vol_eval(surface, snapshot.time, row.center).sigma;
        row.target = sig * sig;
        const double var = std::max(0.0, s2 / cnt - row.mean_sigma2 * row.mean_sigma2);
        row.std_error = std::sqrt(var / cnt);
        if (row.std_error > 0.0) {
            row.z_score = (row.mean_sigma2 - row.target) / row.std_error;
        } else {
            // zero spread in the bin: z is 0 iff the mean hits the target
            // (up to accumulation rounding), otherwise a hard failure
            const double tol = 1e-12 * std::max(1.0, std::abs(row.target));
            row.z_score = std::abs(row.mean_sigma2 - row.target) <= tol
                              ? 0.0
                              : std::copysign(1e300, row.mean_sigma2 - row.target);
        }
        row.admitted = row.count >= 30;
        if (row.admitted) {
            ++report.admitted_bins;
            if (std::abs(row.z_score) <= 3.0) ++report.admitted_within_3;
        }
        report.bins.push_back(row);
    }
    report.pass = report.admitted_bins > 0 &&
                  static_cast<double>(report.admitted_within_3) >=
                      0.95 * static_cast<double>(report.admitted_bins);
    return report;
}

struct MarginalDistance {
    double ks_statistic = 0.0;
    double call_rmse = 0.0;
};

// Two-sample Kolmogorov-Smirnov on the raw samples, plus root-mean-square
// call-price gap over strikes e^x for x on a 21-point grid spanning the
// pooled central 99%.
inline MarginalDistance marginal_distance(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw validation_error("marginal_distance: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());

    MarginalDistance out;
    {
        const double na = static_cast<double>(a.size());
        const double nb = static_cast<double>(b.size());
        std::size_t ia = 0, ib = 0;
        double dmax = 0.0;
        while (ia < a.size() && ib < b.size()) {
            const double v = std::min(a[ia], b[ib]);
            while (ia < a.size() && a[ia] <= v) ++ia;
            while (ib < b.size() && b[ib] <= v) ++ib;
            dmax = std::max(dmax, std::abs(ia / na - ib / nb));
        }
        out.ks_statistic = dmax;
    }

    auto quantile = [](const std::vector<double>& s, double q) {
        const double pos = q * static_cast<double>(s.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, s.size() - 1);
        const double w = pos - static_cast<double>(lo);
        return (1.0 - w) * s[lo] + w * s[hi];
    };
    const double x_lo = std::min(quantile(a, 0.005), quantile(b, 0.005));
    const double x_hi = std::max(quantile(a, 0.995), quantile(b, 0.995));

    auto mean_call = [](const std::vector<double>& s, double strike) {
        double acc = 0.0;
        for (double x : s) acc += std::max(0.0, std::exp(x) - strike);
        return acc / static_cast<double>(s.size());
    };
    const int n_strikes = 21;
    double sq = 0.0;
    for (int i = 0; i < n_strikes; ++i) {
        const double x = (n_strikes == 1)
                             ? x_lo
                             : x_lo + (x_hi - x_lo) * i / static_cast<double>(n_strikes - 1);
        const double k = std::exp(x);
        const double gap = mean_call(a, k) - mean_call(b, k);
        sq += gap * gap;
    }
    out.call_rmse = std::sqrt(sq / n_strikes);
    return out;
}

struct ChaosRow {
    std::size_t particles = 0;
    double delta_m = 0.0;
    double gap_mean = 0.0;   // mean over repetitions of the mean-square sup gap vs X_hat
    double gap_se = 0.0;     // standard error over repetitions
};

struct ChaosCurve {
    std::vector<ChaosRow> rows;
};

struct ChaosParams {
    std::vector<std::size_t> m_ladder;   // strictly increasing
    double delta0 = 0.0;                 // schedule delta_M = delta0 * (M / m_ladder[0])^{-1/8}
    int repetitions = 0;

    void validate() const {
        if (m_ladder.size() < 1) throw validation_error("ChaosParams: empty particle ladder");
        for (std::size_t i = 1; i < m_ladder.size(); ++i)
            if (m_ladder[i] <= m_ladder[i - 1])
                throw validation_error("ChaosParams: particle ladder must be strictly increasing");
        if (!(delta0 > 0.0)) throw validation_error("ChaosParams: delta0 must be positive");
        if (repetitions < 3) throw validation_error("ChaosParams: need at least 3 repetitions");
    }
};

// For each rung M: set delta_M per the power-law schedule, solve the mean
// field once without mollification (X_hat coefficients) and once with the
// rung's mollifier (X_tilde coefficients, trajectory then convolved with the
// same mollifier for the drift lookup), and average the coupled mean-square
// sup gap vs X_hat over fresh-seed repetitions.
inline ChaosCurve chaos_curve(const SimConfig& base, const PdeGrid& grid,
                              const ChaosParams& params) {
    base.validate();
    grid.validate();
    params.validate();
    if (std::abs(grid.horizon() - base.horizon) > 1e-9)
        throw validation_error("chaos_curve: PDE grid horizon must match simulation horizon");

    // unmollified mean-field trajectory, shared by every rung
    const GridDensity traj_hat =
        fp_solve(base.mix, base.spec, base.surface, grid, std::nullopt, PicardParams{});

    ChaosCurve curve;
    const double m0 = static_cast<double>(params.m_ladder.front());
    for (std::size_t m : params.m_ladder) {
        const double dm =
            params.delta0 * std::pow(static_cast<double>(m) / m0, -0.125);
        KernelSpec moll = base.kernel;
        moll.delta = dm;

        GridDensity traj_tilde =
            fp_solve(base.mix, base.spec, base.surface, grid, moll, PicardParams{});
        for (int k = 0; k <= grid.n_t; ++k) {
            double* frame = traj_tilde.frame(k);
            for (int r = 0; r < traj_tilde.n_regimes; ++r) {
                double* row_ptr = frame + static_cast<std::size_t>(r) * grid.n_x;
                std::vector<double> row(row_ptr, row_ptr + grid.n_x);
                const std::vector<double> smooth = grid_convolve(row, grid.pitch(), moll);
                std::copy(smooth.begin(), smooth.end(), row_ptr);
            }
        }

        std::vector<double> gaps;
        for (int rep = 0; rep < params.repetitions; ++rep) {
            SimConfig cfg = base;
            cfg.particles = m;
            cfg.kernel = moll;
            cfg.seed = rng::derive_key(base.seed, rng::tag::chaos,
                                       static_cast<std::uint64_t>(rep));
            const CoupledGapReport rep_out = simulate_coupled(cfg, traj_hat, traj_tilde);
            gaps.push_back(rep_out.msq_hat);
        }

        ChaosRow row;
        row.particles = m;
        row.delta_m = dm;
        row.gap_mean = std::accumulate(gaps.begin(), gaps.end(), 0.0) /
                       static_cast<double>(gaps.size());
        double var = 0.0;
        for (double g : gaps) var += (g - row.gap_mean) * (g - row.gap_mean);
        var /= static_cast<double>(gaps.size() - 1);
        row.gap_se = std::sqrt(var / static_cast<double>(gaps.size()));
        curve.rows.push_back(row);
    }
    return curve;
}

} // namespace lsv
