#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lsv/errors.hpp"
#include "lsv/fokker_planck.hpp"
#include "lsv/kernel.hpp"
#include "lsv/localvol.hpp"
#include "lsv/parallel.hpp"
#include "lsv/regime.hpp"
#include "lsv/rng.hpp"

// Euler-Maruyama simulation of the interacting particle system, the coupled
// mean-field particles driven by shared noise, and the local-vol benchmark
// process. All randomness is counter-based, so runs are reproducible
// bit-for-bit regardless of worker count.

namespace lsv {

struct ParticleEnsemble {
    std::vector<double> x;                     // log-prices
    std::vector<int> y;                        // regime indices, 0-based
    std::vector<std::uint64_t> stream_ids;     // per-particle RNG substreams

    std::size_t size() const { return x.size(); }
};

struct SimConfig {
    RegimeSpec spec;
    VolSurface surface;
    InitialMixture mix;
    std::size_t particles = 0;
    KernelSpec kernel;
    double t_step = 0.0;
    double horizon = 0.0;
    std::uint64_t seed = 0;
    KdeMethod kde_method = KdeMethod::binned;
    std::vector<double> snapshot_times;
    int threads = 1;

    int n_steps() const { return static_cast<int>(std::lround(horizon / t_step)); }

    void validate() const {
        spec.validate();
        surface.validate();
        mix.validate();
        kernel.validate();
        if (mix.n_regimes() != spec.n_regimes)
            throw validation_error("SimConfig: mixture regime count does not match spec");
        if (particles < 2) throw validation_error("SimConfig: need at least 2 particles");
        if (!(t_step > 0.0) || !(horizon > 0.0) || t_step > horizon)
            throw validation_error("SimConfig: need 0 < t_step <= horizon");
        if (surface.horizon() + 1e-9 < horizon)
            throw validation_error("SimConfig: vol surface horizon shorter than simulation");
        for (double s : snapshot_times)
            if (s < 0.0 || s > horizon + 1e-9)
                throw validation_error("SimConfig: snapshot time outside [0, T]");
    }
};

// i.i.d. draws of (Y, X0) from the initial mixture; deterministic in seed.
inline ParticleEnsemble sample_initial(const InitialMixture& mix, std::size_t m,
                                       std::uint64_t seed) {
    mix.validate();
    if (m < 1) throw validation_error("sample_initial: need at least one particle");
    const int n = mix.n_regimes();
    std::vector<double> cdf(n);
    double acc = 0.0;
    for (int r = 0; r < n; ++r) {
        acc += mix.weights[r];
        cdf[r] = acc;
    }
    cdf[n - 1] = 1.0;

    const std::uint64_t init_key = rng::derive_key(seed, rng::tag::initial);
    ParticleEnsemble out;
    out.x.resize(m);
    out.y.resize(m);
    out.stream_ids.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double u = rng::uniform01(init_key, 2 * i);
        int reg = 0;
        while (reg < n - 1 && u > cdf[reg]) ++reg;
        const double z = rng::normal(init_key, m + i);   // raw counters 2m.. , disjoint from the uniforms
        out.y[i] = reg;
        out.x[i] = mix.means[reg] + mix.stds[reg] * z;
        out.stream_ids[i] = rng::derive_key(seed, rng::tag::path, i);
    }
    return out;
}

// R = (eps + f(y) * plain) / (eps + f_weighted); bounded in
// [min(1, fmin/fmax), max(1, fmax/fmin)] by construction.
inline double ratio_coefficient(double plain_kde, double f_weighted_kde, int regime,
                                const RegimeSpec& spec) {
    if (!(plain_kde >= 0.0) || !(f_weighted_kde >= 0.0))
        throw validation_error("ratio_coefficient: kde values must be nonnegative");
    if (regime < 0 || regime >= spec.n_regimes)
        throw validation_error("ratio_coefficient: bad regime index");
    // constant f: the ratio is identically 1; returning it exactly keeps the
    // coupled control runs bit-identical
    if (spec.constant_f()) return 1.0;
    return (spec.epsilon + spec.f[regime] * plain_kde) / (spec.epsilon + f_weighted_kde);
}

struct Snapshot {
    double time = 0.0;
    ParticleEnsemble ensemble;
    std::vector<double> sigma2;   // squared diffusion coefficient R * sigma^2 per particle
};

struct StepStats {
    double time = 0.0;
    double r_min = 0.0;
    double r_max = 0.0;
};

struct SimResult {
    std::vector<Snapshot> snapshots;
    std::vector<StepStats> stats;
};

namespace detail {

inline std::vector<int> snapshot_steps(const std::vector<double>& times, double t_step,
                                       int n_steps) {
    std::vector<int> steps;
    for (double s : times)
        steps.push_back(std::clamp(static_cast<int>(std::lround(s / t_step)), 0, n_steps));
    return steps;
}

} // namespace detail

// The M-particle system: self-inclusive KDE refreshed every step over the
// full ensemble, one normal draw per particle per step from its substream.
inline SimResult simulate_particles(const SimConfig& config) {
    config.validate();
    const std::size_t m = config.particles;
    const int n_steps = config.n_steps();
    const double dt = config.t_step;
    const double sqrt_dt = std::sqrt(dt);

    ParticleEnsemble ens = sample_initial(config.mix, m, config.seed);
    std::vector<double> fvals(m);
    for (std::size_t i = 0; i < m; ++i) fvals[i] = config.spec.f[ens.y[i]];

    const std::vector<int> snap_steps =
        detail::snapshot_steps(config.snapshot_times, dt, n_steps);

    SimResult result;
    std::vector<double> sigma2(m), rvals(m);

    for (int k = 0; k <= n_steps; ++k) {
        const double t = k * dt;
        const bool want_snapshot =
            std::find(snap_steps.begin(), snap_steps.end(), k) != snap_steps.end();
        const bool last = (k == n_steps);
        if (last && !want_snapshot) break;

        const KdeDual dens =
            kde_dual(ens.x, fvals, ens.x, config.kernel, config.kde_method, config.threads);

        parallel_for(m, config.threads, [&](std::size_t i) {
            const double r = ratio_coefficient(dens.plain[i], dens.weighted[i], ens.y[i],
                                               config.spec);
            const double sig = vol_eval(config.surface, t, ens.x[i]).sigma;
            rvals[i] = r;
            sigma2[i] = r * sig * sig;
        });

        if (want_snapshot) {
            Snapshot snap;
            snap.time = t;
            snap.ensemble = ens;
            snap.sigma2 = sigma2;
            result.snapshots.push_back(std::move(snap));
        }
        if (last) break;

        StepStats stats;
        stats.time = t;
        stats.r_min = *std::min_element(rvals.begin(), rvals.end());
        stats.r_max = *std::max_element(rvals.begin(), rvals.end());
        result.stats.push_back(stats);

        parallel_for(m, config.threads, [&](std::size_t i) {
            const double xi = rng::normal(ens.stream_ids[i], static_cast<std::uint64_t>(k));
            const double next = ens.x[i] - 0.5 * sigma2[i] * dt +
                                std::sqrt(sigma2[i]) * sqrt_dt * xi;
            if (!std::isfinite(next))
                throw numeric_error("simulate_particles: non-finite position at step " +
                                    std::to_string(k) + ", particle " + std::to_string(i));
            ens.x[i] = next;
        });
    }
    return result;
}

struct CoupledGapReport {
    std::vector<double> sup_gap_hat;     // per particle, sup_t |X - X_hat|
    std::vector<double> sup_gap_tilde;   // per particle, sup_t |X - X_tilde|
    double msq_hat = 0.0;                // (1/M) sum sup^2
    double msq_tilde = 0.0;
};

// Runs the particle system and the two mean-field schemes in lockstep with
// identical normal draws per particle per step. traj_hat carries the plain
// densities p_hat; traj_tilde must carry the densities the mollified scheme
// reads (i.e. already convolved with W_delta).
inline CoupledGapReport simulate_coupled(const SimConfig& config, const GridDensity& traj_hat,
                                         const GridDensity& traj_tilde) {
    config.validate();
    if (traj_hat.grid.horizon() + 1e-9 < config.horizon ||
        traj_tilde.grid.horizon() + 1e-9 < config.horizon)
        throw validation_error("simulate_coupled: density trajectory horizon too short");
    if (traj_hat.n_regimes != config.spec.n_regimes ||
        traj_tilde.n_regimes != config.spec.n_regimes)
        throw validation_error("simulate_coupled: trajectory regime count mismatch");

    const std::size_t m = config.particles;
    const int n_steps = config.n_steps();
    const double dt = config.t_step;
    const double sqrt_dt = std::sqrt(dt);

    ParticleEnsemble ens = sample_initial(config.mix, m, config.seed);
    std::vector<double> fvals(m);
    for (std::size_t i = 0; i < m; ++i) fvals[i] = config.spec.f[ens.y[i]];

    std::vector<double> xa = ens.x, xb = ens.x, xc = ens.x;
    CoupledGapReport report;
    report.sup_gap_hat.assign(m, 0.0);
    report.sup_gap_tilde.assign(m, 0.0);

    auto mean_field_update = [&](const GridDensity& traj, double t, double x, int reg,
                                 double xi) {
        double plain = 0.0, weighted = 0.0;
        for (int r = 0; r < config.spec.n_regimes; ++r) {
            const double p = density_at(traj, t, x, r);
            plain += p;
            weighted += config.spec.f[r] * p;
        }
        const double rr = ratio_coefficient(plain, std::max(0.0, weighted), reg, config.spec);
        const double sig = vol_eval(config.surface, t, x).sigma;
        const double s2 = rr * sig * sig;
        return x - 0.5 * s2 * dt + std::sqrt(s2) * sqrt_dt * xi;
    };

    for (int k = 0; k < n_steps; ++k) {
        const double t = k * dt;
        const KdeDual dens =
            kde_dual(xa, fvals, xa, config.kernel, config.kde_method, config.threads);

        parallel_for(m, config.threads, [&](std::size_t i) {
            const double xi = rng::normal(ens.stream_ids[i], static_cast<std::uint64_t>(k));

            const double r = ratio_coefficient(dens.plain[i], dens.weighted[i], ens.y[i],
                                               config.spec);
            const double sig = vol_eval(config.surface, t, xa[i]).sigma;
            const double s2 = r * sig * sig;
            xa[i] = xa[i] - 0.5 * s2 * dt + std::sqrt(s2) * sqrt_dt * xi;

            xb[i] = mean_field_update(traj_hat, t, xb[i], ens.y[i], xi);
            xc[i] = mean_field_update(traj_tilde, t, xc[i], ens.y[i], xi);

            if (!std::isfinite(xa[i]) || !std::isfinite(xb[i]) || !std::isfinite(xc[i]))
                throw numeric_error("simulate_coupled: non-finite position at step " +
                                    std::to_string(k));

            report.sup_gap_hat[i] = std::max(report.sup_gap_hat[i], std::abs(xa[i] - xb[i]));
            report.sup_gap_tilde[i] = std::max(report.sup_gap_tilde[i], std::abs(xa[i] - xc[i]));
        });
    }

    for (std::size_t i = 0; i < m; ++i) {
        report.msq_hat += report.sup_gap_hat[i] * report.sup_gap_hat[i];
        report.msq_tilde += report.sup_gap_tilde[i] * report.sup_gap_tilde[i];
    }
    report.msq_hat /= static_cast<double>(m);
    report.msq_tilde /= static_cast<double>(m);
    return report;
}

// Benchmark local-vol process in log coordinates: dX = -sigma^2/2 dt + sigma dB.
// Returns the X_T samples.
inline std::vector<double> simulate_local_vol(const VolSurface& surface,
                                              const InitialMixture& mix, std::size_t m,
                                              double t_step, double horizon,
                                              std::uint64_t seed) {
    surface.validate();
    mix.validate();
    if (m < 1) throw validation_error("simulate_local_vol: need at least one particle");
    if (!(t_step > 0.0) || horizon < 0.0)
        throw validation_error("simulate_local_vol: bad time parameters");

    const std::uint64_t lv_seed = rng::derive_key(seed, rng::tag::local_vol);
    ParticleEnsemble ens = sample_initial(mix, m, lv_seed);
    if (horizon == 0.0) return ens.x;

    const int n_steps = static_cast<int>(std::lround(horizon / t_step));
    const double sqrt_dt = std::sqrt(t_step);
    for (int k = 0; k < n_steps; ++k) {
        const double t = k * t_step;
        for (std::size_t i = 0; i < m; ++i) {
            const double sig = vol_eval(surface, t, ens.x[i]).sigma;
            const double xi = rng::normal(ens.stream_ids[i], static_cast<std::uint64_t>(k));
            ens.x[i] += -0.5 * sig * sig * t_step + sig * sqrt_dt * xi;
        }
    }
    return ens.x;
}

} // namespace lsv
