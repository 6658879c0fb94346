#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "lsv/errors.hpp"

// Dupire local volatility: extraction from a call-price surface and bounded
// bilinear evaluation sigma(t, x) with its spatial derivative, x = log K.

namespace lsv {

struct VolSurface {
    std::vector<double> t_grid;   // increasing, [0, T]
    std::vector<double> x_grid;   // increasing log-strikes
    std::vector<double> values;   // row-major t x x, all in [sigma0, sigma1]
    double sigma0 = 0.0;
    double sigma1 = 0.0;

    double at(std::size_t ti, std::size_t xi) const { return values[ti * x_grid.size() + xi]; }
    double horizon() const { return t_grid.back(); }

    void validate() const {
        if (t_grid.empty() || x_grid.size() < 1)
            throw validation_error("VolSurface: empty grid");
        if (values.size() != t_grid.size() * x_grid.size())
            throw validation_error("VolSurface: values size mismatch");
        if (!(sigma0 > 0.0) || !(sigma1 > sigma0))
            throw validation_error("VolSurface: need 0 < sigma0 < sigma1");
        for (std::size_t i = 1; i < t_grid.size(); ++i)
            if (!(t_grid[i] > t_grid[i - 1])) throw validation_error("VolSurface: t_grid not increasing");
        for (std::size_t i = 1; i < x_grid.size(); ++i)
            if (!(x_grid[i] > x_grid[i - 1])) throw validation_error("VolSurface: x_grid not increasing");
        for (double v : values)
            if (!(v >= sigma0 && v <= sigma1))
                throw validation_error("VolSurface: value outside [sigma0, sigma1]");
    }
};

// Flat surface sigma(t, x) == sigma on [0, horizon].
inline VolSurface constant_vol(double sigma, double horizon) {
    if (!(sigma > 0.0) || !(horizon > 0.0))
        throw validation_error("constant_vol: sigma and horizon must be positive");
    VolSurface s;
    s.t_grid = {0.0, horizon};
    s.x_grid = {-50.0, 50.0};
    s.values.assign(4, sigma);
    s.sigma0 = 0.5 * sigma;
    s.sigma1 = 2.0 * sigma;
    return s;
}

struct VolEval {
    double sigma = 0.0;
    double dsigma_dx = 0.0;
};

namespace detail {
// exact when both endpoints coincide, so constant surfaces evaluate bit-exactly
inline double lerp_exact(double a, double b, double w) {
    return a == b ? a : (1.0 - w) * a + w * b;
}
} // namespace detail

// Bilinear inside the grid, constant beyond it in x (so dsigma_dx = 0
// there). t below the first time node reuses the first row.
inline VolEval vol_eval(const VolSurface& surface, double t, double x) {
    const double tol = 1e-12 * std::max(1.0, std::abs(surface.horizon()));
    if (t < -tol || t > surface.horizon() + tol)
        throw validation_error("vol_eval: t outside [0, T]");

    const auto& tg = surface.t_grid;
    const auto& xg = surface.x_grid;

    std::size_t ti = 0;
    double wt = 0.0;
    if (t <= tg.front()) {
        ti = 0;
    } else if (t >= tg.back()) {
        ti = tg.size() - 2;
        wt = 1.0;
    } else {
        ti = std::upper_bound(tg.begin(), tg.end(), t) - tg.begin() - 1;
        wt = (t - tg[ti]) / (tg[ti + 1] - tg[ti]);
    }
    const std::size_t tj = std::min(ti + 1, tg.size() - 1);

    VolEval out;
    if (xg.size() == 1 || x <= xg.front()) {
        out.sigma = detail::lerp_exact(surface.at(ti, 0), surface.at(tj, 0), wt);
        return out;
    }
    if (x >= xg.back()) {
        const std::size_t last = xg.size() - 1;
        out.sigma = detail::lerp_exact(surface.at(ti, last), surface.at(tj, last), wt);
        return out;
    }
    const std::size_t xi = std::upper_bound(xg.begin(), xg.end(), x) - xg.begin() - 1;
    const double pitch = xg[xi + 1] - xg[xi];
    const double wx = (x - xg[xi]) / pitch;

    const double lo = detail::lerp_exact(surface.at(ti, xi), surface.at(tj, xi), wt);
    const double hi = detail::lerp_exact(surface.at(ti, xi + 1), surface.at(tj, xi + 1), wt);
    out.sigma = detail::lerp_exact(lo, hi, wx);
    out.dsigma_dx = lo == hi ? 0.0 : (hi - lo) / pitch;
    return out;
}

struct CallSurface {
    std::vector<double> t_grid;
    std::vector<double> k_grid;   // strikes
    std::vector<double> prices;   // row-major t x k

    double at(std::size_t ti, std::size_t ki) const { return prices[ti * k_grid.size() + ki]; }

    void validate() const {
        if (t_grid.size() < 2 || k_grid.size() < 3)
            throw validation_error("CallSurface: need >= 2 times and >= 3 strikes");
        if (prices.size() != t_grid.size() * k_grid.size())
            throw validation_error("CallSurface: prices size mismatch");
        for (std::size_t i = 1; i < t_grid.size(); ++i)
            if (!(t_grid[i] > t_grid[i - 1])) throw validation_error("CallSurface: t_grid not increasing");
        for (std::size_t i = 1; i < k_grid.size(); ++i)
            if (!(k_grid[i] > k_grid[i - 1])) throw validation_error("CallSurface: k_grid not increasing");
        for (double p : prices)
            if (!(p >= 0.0)) throw validation_error("CallSurface: negative price");
        // convexity in K up to tolerance, monotonicity in t
        for (std::size_t ti = 0; ti < t_grid.size(); ++ti) {
            for (std::size_t ki = 1; ki + 1 < k_grid.size(); ++ki) {
                const double hl = k_grid[ki] - k_grid[ki - 1];
                const double hr = k_grid[ki + 1] - k_grid[ki];
                const double slope_l = (at(ti, ki) - at(ti, ki - 1)) / hl;
                const double slope_r = (at(ti, ki + 1) - at(ti, ki)) / hr;
                if (slope_r - slope_l < -1e-8)
                    throw validation_error("CallSurface: prices not convex in K");
            }
        }
        for (std::size_t ti = 1; ti < t_grid.size(); ++ti)
            for (std::size_t ki = 0; ki < k_grid.size(); ++ki)
                if (at(ti, ki) - at(ti - 1, ki) < -1e-8)
                    throw validation_error("CallSurface: prices decreasing in t");
    }
};

struct DupireFlag {
    std::size_t t_index = 0;
    std::size_t k_index = 0;
    std::string reason;   // "degenerate_butterfly" or "negative_calendar"
};

struct DupireResult {
    VolSurface surface;   // re-indexed in x = log K
    std::vector<DupireFlag> flags;
};

// sigma_loc(t, K) = sqrt(2 dC/dt / d2C/dK2), central differences inside the
// grid and one-sided at the edges, ratio clamped into [sigma0^2, sigma1^2].
inline DupireResult dupire_local_vol(const CallSurface& calls, double sigma0, double sigma1) {
    calls.validate();
    if (!(sigma0 > 0.0) || !(sigma1 > sigma0))
        throw validation_error("dupire_local_vol: need 0 < sigma0 < sigma1");
    for (double k : calls.k_grid)
        if (!(k > 0.0)) throw validation_error("dupire_local_vol: strikes must be positive");

    const std::size_t nt = calls.t_grid.size();
    const std::size_t nk = calls.k_grid.size();

    DupireResult out;
    out.surface.sigma0 = sigma0;
    out.surface.sigma1 = sigma1;
    out.surface.t_grid = calls.t_grid;
    out.surface.x_grid.resize(nk);
    for (std::size_t ki = 0; ki < nk; ++ki) out.surface.x_grid[ki] = std::log(calls.k_grid[ki]);
    out.surface.values.assign(nt * nk, sigma0);

    auto curvature = [&](std::size_t ti, std::size_t ki) {
        // 3-point second difference; edge nodes reuse the adjacent stencil
        const std::size_t c = std::min(std::max<std::size_t>(ki, 1), nk - 2);
        const double hl = calls.k_grid[c] - calls.k_grid[c - 1];
        const double hr = calls.k_grid[c + 1] - calls.k_grid[c];
        return 2.0 * ((calls.at(ti, c + 1) - calls.at(ti, c)) / hr -
                      (calls.at(ti, c) - calls.at(ti, c - 1)) / hl) / (hl + hr);
    };
    auto theta = [&](std::size_t ti, std::size_t ki) {
        if (ti == 0)
            return (calls.at(1, ki) - calls.at(0, ki)) / (calls.t_grid[1] - calls.t_grid[0]);
        if (ti == nt - 1)
            return (calls.at(nt - 1, ki) - calls.at(nt - 2, ki)) /
                   (calls.t_grid[nt - 1] - calls.t_grid[nt - 2]);
        const double span = calls.t_grid[ti + 1] - calls.t_grid[ti - 1];
        return (calls.at(ti + 1, ki) - calls.at(ti - 1, ki)) / span;
    };

    const double lo = sigma0 * sigma0, hi = sigma1 * sigma1;
    for (std::size_t ti = 0; ti < nt; ++ti) {
        for (std::size_t ki = 0; ki < nk; ++ki) {
            const double gamma = curvature(ti, ki);
            const double dt_c = theta(ti, ki);
            double ratio;
            if (gamma <= 1e-12) {
                out.flags.push_back({ti, ki, "degenerate_butterfly"});
                ratio = lo;
            } else if (dt_c < 0.0) {
                out.flags.push_back({ti, ki, "negative_calendar"});
                ratio = lo;
            } else {
                const double k = calls.k_grid[ki];
                ratio = std::clamp(2.0 * dt_c / (gamma * k * k), lo, hi);
            }
            out.surface.values[ti * nk + ki] = std::sqrt(ratio);
        }
    }
    return out;
}

} // namespace lsv
