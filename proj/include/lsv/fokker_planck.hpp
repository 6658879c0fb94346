#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <sstream>
#include <vector>

#include "lsv/errors.hpp"
#include "lsv/kernel.hpp"
#include "lsv/localvol.hpp"
#include "lsv/regime.hpp"
#include "lsv/rng.hpp"

// Conservative finite-difference solver for the N-regime nonlinear system in
// divergence form,
//   dp/dt = 1/2 d/dx[sigma^2 A(p) dp/dx] + d/dx[(sigma sigma_x + sigma^2/2) B(p) p],
// on a truncated domain with zero-flux boundaries. Implicit Euler in time
// with lagged-coefficient Picard refresh; the off-diagonal A coupling stays
// explicit at the current Picard iterate so each regime solve is tridiagonal.

namespace lsv {

struct PdeGrid {
    double x_min = 0.0;
    double x_max = 0.0;
    int n_x = 0;
    double t_step = 0.0;
    int n_t = 0;

    double pitch() const { return (x_max - x_min) / (n_x - 1); }
    double node(int j) const { return x_min + pitch() * j; }
    double time(int k) const { return t_step * k; }
    double horizon() const { return t_step * n_t; }

    void validate() const {
        if (!(x_max > x_min)) throw validation_error("PdeGrid: x_max must exceed x_min");
        if (n_x < 16) throw validation_error("PdeGrid: n_x must be >= 16");
        if (!(t_step > 0.0)) throw validation_error("PdeGrid: t_step must be positive");
        if (n_t < 1) throw validation_error("PdeGrid: n_t must be >= 1");
    }
};

struct InitialMixture {
    std::vector<double> weights;   // P(Y = n), sums to 1
    std::vector<double> means;
    std::vector<double> stds;

    int n_regimes() const { return static_cast<int>(weights.size()); }

    void validate() const {
        if (weights.empty() || means.size() != weights.size() || stds.size() != weights.size())
            throw validation_error("InitialMixture: weights/means/stds length mismatch");
        double total = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0)) throw validation_error("InitialMixture: negative weight");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw validation_error("InitialMixture: weights must sum to 1");
        for (double s : stds)
            if (!(s > 0.0)) throw validation_error("InitialMixture: stds must be positive");
    }
};

// Per-regime densities p_n(t_k, x_j) over the full trajectory.
struct GridDensity {
    PdeGrid grid;
    int n_regimes = 0;
    std::vector<double> data;   // [(n_t+1)] x [N] x [n_x]

    double at(int k, int n, int j) const {
        return data[(static_cast<std::size_t>(k) * n_regimes + n) * grid.n_x + j];
    }
    double* frame(int k) {
        return data.data() + static_cast<std::size_t>(k) * n_regimes * grid.n_x;
    }
    const double* frame(int k) const {
        return data.data() + static_cast<std::size_t>(k) * n_regimes * grid.n_x;
    }
    std::size_t frame_size() const { return static_cast<std::size_t>(n_regimes) * grid.n_x; }

    double mass(int k, int n) const {
        const double* row = frame(k) + static_cast<std::size_t>(n) * grid.n_x;
        return std::accumulate(row, row + grid.n_x, 0.0) * grid.pitch();
    }
};

// Initial frame: renormalized gaussian rows with discrete mass w_n exactly.
inline GridDensity init_density(const InitialMixture& mix, const PdeGrid& grid) {
    mix.validate();
    grid.validate();
    const int n = mix.n_regimes();
    for (int r = 0; r < n; ++r) {
        if (mix.weights[r] == 0.0) continue;
        const double lo = mix.means[r] - 8.0 * mix.stds[r];
        const double hi = mix.means[r] + 8.0 * mix.stds[r];
        if (lo < grid.x_min || hi > grid.x_max) {
            const double z_lo = (grid.x_min - mix.means[r]) / mix.stds[r];
            const double z_hi = (grid.x_max - mix.means[r]) / mix.stds[r];
            const double inside =
                0.5 * (std::erf(z_hi / std::sqrt(2.0)) - std::erf(z_lo / std::sqrt(2.0)));
            std::ostringstream os;
            os << "init_density: grid too narrow for regime " << r
               << " (needs 8 std inside the domain; truncated mass " << (1.0 - inside) << ")";
            throw validation_error(os.str());
        }
    }

    GridDensity out;
    out.grid = grid;
    out.n_regimes = n;
    out.data.assign(static_cast<std::size_t>(grid.n_t + 1) * n * grid.n_x, 0.0);
    const double h = grid.pitch();
    double* f0 = out.frame(0);
    for (int r = 0; r < n; ++r) {
        double* row = f0 + static_cast<std::size_t>(r) * grid.n_x;
        if (mix.weights[r] == 0.0) continue;
        double sum = 0.0;
        for (int j = 0; j < grid.n_x; ++j) {
            const double z = (grid.node(j) - mix.means[r]) / mix.stds[r];
            row[j] = std::exp(-0.5 * z * z);
            sum += row[j];
        }
        const double scale = mix.weights[r] / (sum * h);
        for (int j = 0; j < grid.n_x; ++j) row[j] *= scale;
    }
    return out;
}

struct PicardParams {
    int max_iters = 5;
    double tol = 1e-10;
};

struct StepDiagnostics {
    int picard_iters = 0;
    double final_increment = 0.0;
    double clipped_mass = 0.0;   // total negative mass removed, pre-rescale
    bool converged = true;
};

struct SolveDiagnostics {
    std::vector<StepDiagnostics> steps;
    double max_mass_drift = 0.0;     // relative, before the per-step rescale
    double max_clipped_mass = 0.0;   // relative to total mass
    double guard_min_margin = std::numeric_limits<double>::infinity();
    bool guard_checked = false;
};

namespace detail {

inline void thomas_solve(std::vector<double>& lower, std::vector<double>& diag,
                         std::vector<double>& upper, std::vector<double>& rhs,
                         std::vector<double>& out) {
    const std::size_t n = diag.size();
    for (std::size_t j = 1; j < n; ++j) {
        const double w = lower[j] / diag[j - 1];
        diag[j] -= w * upper[j - 1];
        rhs[j] -= w * rhs[j - 1];
    }
    out[n - 1] = rhs[n - 1] / diag[n - 1];
    for (std::size_t j = n - 1; j-- > 0;)
        out[j] = (rhs[j] - upper[j] * out[j + 1]) / diag[j];
}

} // namespace detail

// One implicit (backward-time) step from the state at t_k. `state` holds N
// rows of length n_x; masses[n] is the exact per-regime target mass.
inline std::vector<double> fp_step(const std::vector<double>& state, const RegimeSpec& spec,
                                   const VolSurface& surface, const PdeGrid& grid, int t_index,
                                   const std::optional<KernelSpec>& mollify,
                                   const PicardParams& picard, const std::vector<double>& masses,
                                   StepDiagnostics* diag_out = nullptr) {
    const int n = spec.n_regimes;
    const int nx = grid.n_x;
    const int nf = nx - 1;   // interior faces
    const double h = grid.pitch();
    const double dt = grid.t_step;
    const double t_new = std::min(grid.time(t_index + 1), surface.horizon());

    std::vector<double> half_sig2(nf), drift(nf);
    for (int j = 0; j < nf; ++j) {
        const VolEval v = vol_eval(surface, t_new, grid.node(j) + 0.5 * h);
        half_sig2[j] = 0.5 * v.sigma * v.sigma;
        drift[j] = v.sigma * v.dsigma_dx + half_sig2[j];
    }

    std::vector<double> iterate = state;   // Picard iterate q
    std::vector<double> next(state.size(), 0.0);
    std::vector<double> lower(nx), mid(nx), upper(nx), rhs(nx), sol(nx);
    std::vector<double> uface(n);
    std::vector<CoefficientMatrixSet> face_mats(nf);

    StepDiagnostics diag;
    const double r = dt / h;

    for (int it = 0; it < picard.max_iters; ++it) {
        // coefficient argument: the iterate itself, or its mollification
        const std::vector<double>* arg = &iterate;
        std::vector<double> smoothed;
        if (mollify) {
            smoothed.resize(iterate.size());
            for (int reg = 0; reg < n; ++reg) {
                std::vector<double> row(iterate.begin() + static_cast<std::size_t>(reg) * nx,
                                        iterate.begin() + static_cast<std::size_t>(reg + 1) * nx);
                const std::vector<double> conv = grid_convolve(row, h, *mollify);
                std::copy(conv.begin(), conv.end(),
                          smoothed.begin() + static_cast<std::size_t>(reg) * nx);
            }
            arg = &smoothed;
        }

        for (int j = 0; j < nf; ++j) {
            for (int reg = 0; reg < n; ++reg)
                uface[reg] = std::max(
                    0.0, 0.5 * ((*arg)[static_cast<std::size_t>(reg) * nx + j] +
                                (*arg)[static_cast<std::size_t>(reg) * nx + j + 1]));
            face_mats[j] = coefficient_matrices(spec, uface);
        }

        for (int reg = 0; reg < n; ++reg) {
            // explicit off-diagonal A flux at the current iterate
            // F_off(j+1/2) = 1/2 sigma^2 sum_{k != reg} A_{reg,k} (q_k[j+1]-q_k[j])/h
            std::fill(lower.begin(), lower.end(), 0.0);
            std::fill(upper.begin(), upper.end(), 0.0);
            std::fill(mid.begin(), mid.end(), 1.0);
            for (int j = 0; j < nx; ++j)
                rhs[j] = state[static_cast<std::size_t>(reg) * nx + j];

            for (int j = 0; j < nf; ++j) {
                const auto& cm = face_mats[j];
                const double a_diag = half_sig2[j] * cm.a(reg, reg);
                const double bconv = drift[j] * cm.B[reg];
                double off = 0.0;
                for (int k = 0; k < n; ++k) {
                    if (k == reg) continue;
                    off += cm.a(reg, k) * (iterate[static_cast<std::size_t>(k) * nx + j + 1] -
                                           iterate[static_cast<std::size_t>(k) * nx + j]);
                }
                const double g = half_sig2[j] * off / h;

                // flux leaves node j (enters node j+1): +r*F at j+1, -r*F at j
                // F = a_diag*(p[j+1]-p[j])/h + bconv*(p[j]+p[j+1])/2 + g
                const double cd = a_diag / h;
                const double cb = 0.5 * bconv;
                // node j: p_j - r*(F_up - F_down); this face is F_up for j
                mid[j] += r * (cd - cb);
                upper[j] += r * (-cd - cb);
                rhs[j] += r * g;
                // node j+1: this face is F_down
                mid[j + 1] += r * (cd + cb);
                lower[j + 1] += r * (-cd + cb);
                rhs[j + 1] -= r * g;
            }

            detail::thomas_solve(lower, mid, upper, rhs, sol);
            std::copy(sol.begin(), sol.end(), next.begin() + static_cast<std::size_t>(reg) * nx);
        }

        double inc2 = 0.0;
        for (std::size_t i = 0; i < next.size(); ++i) {
            const double d = next[i] - iterate[i];
            inc2 += d * d;
        }
        diag.final_increment = std::sqrt(inc2 * h);
        diag.picard_iters = it + 1;
        iterate = next;
        if (diag.final_increment < picard.tol) break;
    }
    diag.converged = diag.final_increment < picard.tol || picard.max_iters == 1;

    // positivity clip and exact per-regime mass restore
    for (int reg = 0; reg < n; ++reg) {
        double* row = next.data() + static_cast<std::size_t>(reg) * nx;
        double clipped = 0.0, mass = 0.0;
        for (int j = 0; j < nx; ++j) {
            if (row[j] < 0.0) {
                clipped -= row[j];
                row[j] = 0.0;
            }
            if (!std::isfinite(row[j]))
                throw numeric_error("fp_step: non-finite density at t_index " +
                                    std::to_string(t_index));
            mass += row[j];
        }
        mass *= h;
        diag.clipped_mass += clipped * h;
        if (masses[reg] > 0.0 && mass > 0.0) {
            const double scale = masses[reg] / mass;
            for (int j = 0; j < nx; ++j) row[j] *= scale;
        }
    }

    if (diag_out) *diag_out = diag;
    return next;
}

// Full trajectory by repeated fp_step. When a certificate is supplied, the
// coercivity of (J + delta I) A(p) is spot-checked on random nodes every 100
// steps.
inline GridDensity fp_solve(const InitialMixture& mix, const RegimeSpec& spec,
                            const VolSurface& surface, const PdeGrid& grid,
                            const std::optional<KernelSpec>& mollify, const PicardParams& picard,
                            SolveDiagnostics* diag_out = nullptr,
                            const EllipticityCertificate* guard = nullptr,
                            std::uint64_t guard_seed = 0) {
    spec.validate();
    if (mix.n_regimes() != spec.n_regimes)
        throw validation_error("fp_solve: mixture regime count does not match spec");
    if (surface.horizon() + 1e-9 < grid.horizon())
        throw validation_error("fp_solve: vol surface horizon shorter than PDE horizon");

    GridDensity traj = init_density(mix, grid);
    SolveDiagnostics diag;
    const std::uint64_t gkey = rng::derive_key(guard_seed, rng::tag::guard);

    std::vector<double> state(traj.frame(0), traj.frame(0) + traj.frame_size());
    for (int k = 0; k < grid.n_t; ++k) {
        StepDiagnostics sd;
        std::vector<double> masses(spec.n_regimes);
        for (int reg = 0; reg < spec.n_regimes; ++reg) masses[reg] = mix.weights[reg];

        // pre-rescale drift of the raw scheme, tracked for diagnostics
        std::vector<double> next = fp_step(state, spec, surface, grid, k, mollify, picard, masses, &sd);
        diag.steps.push_back(sd);
        double total_mass = 0.0;
        for (double w : mix.weights) total_mass += w;
        diag.max_clipped_mass = std::max(diag.max_clipped_mass, sd.clipped_mass / total_mass);

        std::copy(next.begin(), next.end(), traj.frame(k + 1));
        state = std::move(next);

        if (guard && (k % 100 == 0 || k == grid.n_t - 1)) {
            diag.guard_checked = true;
            std::vector<double> u(spec.n_regimes), xv(spec.n_regimes);
            for (int s = 0; s < 100; ++s) {
                const std::uint64_t base =
                    (static_cast<std::uint64_t>(k) * 100 + s) * (spec.n_regimes + 1);
                const int j = static_cast<int>(rng::at(gkey, base) % grid.n_x);
                bool nonzero = false;
                for (int reg = 0; reg < spec.n_regimes; ++reg) {
                    u[reg] = std::max(0.0, state[static_cast<std::size_t>(reg) * grid.n_x + j]);
                    xv[reg] = rng::normal(gkey, base + 1 + reg);
                    nonzero |= (xv[reg] != 0.0);
                }
                if (!nonzero) continue;
                const double margin =
                    coercivity_quotient(spec, guard->delta, u, xv) - guard->kappa;
                diag.guard_min_margin = std::min(diag.guard_min_margin, margin);
            }
        }
    }

    // mass drift of the stored trajectory relative to the target masses
    for (int k = 0; k <= grid.n_t; ++k) {
        for (int reg = 0; reg < spec.n_regimes; ++reg) {
            if (mix.weights[reg] == 0.0) continue;
            const double drift = std::abs(traj.mass(k, reg) - mix.weights[reg]) / mix.weights[reg];
            diag.max_mass_drift = std::max(diag.max_mass_drift, drift);
        }
    }
    if (diag_out) *diag_out = diag;
    return traj;
}

// sup over time of the squared discrete L2 distance, summed over regimes.
inline double mollified_gap(const GridDensity& a, const GridDensity& b) {
    if (a.grid.n_x != b.grid.n_x || a.grid.n_t != b.grid.n_t || a.n_regimes != b.n_regimes ||
        a.grid.x_min != b.grid.x_min || a.grid.x_max != b.grid.x_max ||
        a.grid.t_step != b.grid.t_step)
        throw validation_error("mollified_gap: grid mismatch");
    const double h = a.grid.pitch();
    double sup = 0.0;
    for (int k = 0; k <= a.grid.n_t; ++k) {
        const double* fa = a.frame(k);
        const double* fb = b.frame(k);
        double acc = 0.0;
        for (std::size_t i = 0; i < a.frame_size(); ++i) {
            const double d = fa[i] - fb[i];
            acc += d * d;
        }
        sup = std::max(sup, acc * h);
    }
    return sup;
}

// Linear interpolation in x, piecewise-constant (left) in t, zero outside
// the spatial grid.
inline double density_at(const GridDensity& traj, double t, double x, int regime) {
    if (regime < 0 || regime >= traj.n_regimes)
        throw validation_error("density_at: bad regime index");
    if (t < -1e-12 || t > traj.grid.horizon() + 1e-9)
        throw validation_error("density_at: t outside [0, T]");
    const int k = std::clamp(static_cast<int>(std::floor(t / traj.grid.t_step + 1e-12)), 0,
                             traj.grid.n_t);
    if (x <= traj.grid.x_min || x >= traj.grid.x_max) return 0.0;
    const double pos = (x - traj.grid.x_min) / traj.grid.pitch();
    const int j = std::min(static_cast<int>(pos), traj.grid.n_x - 2);
    const double w = pos - j;
    return (1.0 - w) * traj.at(k, regime, j) + w * traj.at(k, regime, j + 1);
}

} // namespace lsv
