#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

// Independent reference implementations used only by the tests.

namespace oracles {

inline double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Undiscounted Black-Scholes call on a driftless lognormal underlying.
inline double bs_call(double s0, double k, double sigma, double t) {
    if (t <= 0.0) return std::max(0.0, s0 - k);
    const double sq = sigma * std::sqrt(t);
    const double d1 = (std::log(s0 / k) + 0.5 * sigma * sigma * t) / sq;
    return s0 * norm_cdf(d1) - k * norm_cdf(d1 - sq);
}

// Two-sample KS by direct empirical-CDF enumeration over every sample point.
inline double ks_brute(std::vector<double> a, std::vector<double> b) {
    std::vector<double> pool = a;
    pool.insert(pool.end(), b.begin(), b.end());
    double dmax = 0.0;
    for (double v : pool) {
        const double fa =
            std::count_if(a.begin(), a.end(), [&](double x) { return x <= v; }) /
            static_cast<double>(a.size());
        const double fb =
            std::count_if(b.begin(), b.end(), [&](double x) { return x <= v; }) /
            static_cast<double>(b.size());
        dmax = std::max(dmax, std::abs(fa - fb));
    }
    return dmax;
}

// 50-digit re-evaluation of the range condition min(kappa0, 1) > beta(f).
inline bool small_range_holds_mp(const std::vector<double>& f) {
    using mp = boost::multiprecision::cpp_bin_float_50;
    const int n = static_cast<int>(f.size());

    mp worst = 0;
    for (int k = 0; k < n; ++k) {
        mp s_f = 0, s_inv = 0;
        for (int m = 0; m < n; ++m) {
            if (m == k) continue;
            s_f += mp(f[m]);
            s_inv += 1 / mp(f[m]);
        }
        const mp cand = sqrt(s_f * s_inv);
        if (cand > worst) worst = cand;
    }
    const mp kappa0 = (mp(n) + 1 - worst) / 2;

    mp fbar = 0, fmin = mp(f[0]), fmax = mp(f[0]);
    for (double v : f) {
        fbar += mp(v);
        if (mp(v) < fmin) fmin = mp(v);
        if (mp(v) > fmax) fmax = mp(v);
    }
    fbar /= n;
    mp dev2 = 0;
    for (double v : f) dev2 += (mp(v) - fbar) * (mp(v) - fbar);
    const mp beta = (fmax - fmin) / fmin + sqrt(dev2) / fmin;

    const mp lhs = kappa0 < 1 ? kappa0 : mp(1);
    return lhs > beta;
}

} // namespace oracles
