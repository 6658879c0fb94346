#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "lsv/errors.hpp"
#include "lsv/rng.hpp"

// The discrete volatility regime model: the factor f over N regimes, the
// coefficient matrices B^eps / A^eps of the nonlinear Fokker-Planck system,
// the small-range condition on f, and a constructive certificate that
// Gamma = J + delta*I makes the system uniformly elliptic.

namespace lsv {

struct RegimeSpec {
    int n_regimes = 0;
    std::vector<double> f;
    double epsilon = 0.0;

    void validate() const {
        if (n_regimes < 2) throw validation_error("RegimeSpec: n_regimes must be >= 2");
        if (static_cast<int>(f.size()) != n_regimes)
            throw validation_error("RegimeSpec: f must have n_regimes entries");
        for (double v : f)
            if (!(v > 0.0)) throw validation_error("RegimeSpec: all f values must be positive");
        if (!(epsilon > 0.0)) throw validation_error("RegimeSpec: epsilon must be positive");
    }

    double f_min() const { return *std::min_element(f.begin(), f.end()); }
    double f_max() const { return *std::max_element(f.begin(), f.end()); }
    double f_bar() const {
        return std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size());
    }
    bool constant_f() const { return f_max() - f_min() == 0.0; }
};

inline RegimeSpec make_regime_spec(std::vector<double> f, double epsilon) {
    RegimeSpec spec{static_cast<int>(f.size()), std::move(f), epsilon};
    spec.validate();
    return spec;
}

struct SmallRangeReport {
    double kappa0 = 0.0;
    double beta_f = 0.0;
    double lhs = 0.0;   // min(kappa0, 1)
    double rhs = 0.0;   // beta_f
    bool holds = false;
};

inline SmallRangeReport small_range_check(const RegimeSpec& spec) {
    spec.validate();
    const int n = spec.n_regimes;

    double worst = 0.0;
    for (int k = 0; k < n; ++k) {
        double s_f = 0.0, s_inv = 0.0;
        for (int m = 0; m < n; ++m) {
            if (m == k) continue;
            s_f += spec.f[m];
            s_inv += 1.0 / spec.f[m];
        }
        worst = std::max(worst, std::sqrt(s_f * s_inv));
    }
    const double kappa0 = 0.5 * (n + 1 - worst);

    const double fbar = spec.f_bar();
    double dev2 = 0.0;
    for (double v : spec.f) dev2 += (v - fbar) * (v - fbar);
    const double fmin = spec.f_min();
    const double beta = (spec.f_max() - fmin) / fmin + std::sqrt(dev2) / fmin;

    SmallRangeReport rep;
    rep.kappa0 = kappa0;
    rep.beta_f = beta;
    rep.lhs = std::min(kappa0, 1.0);
    rep.rhs = beta;
    rep.holds = rep.lhs > rep.rhs;
    return rep;
}

// B^eps(u), A^eps(u) at a fixed nonnegative vector u, plus the intermediates
// rho and D of the decomposition A^eps = I + rho^2 (A^0 - I) + rho(1-rho) D.
// rho and D are only meaningful when sum(u) > 0.
struct CoefficientMatrixSet {
    std::vector<double> B;   // diagonal of B^eps, length N
    std::vector<double> A;   // row-major N x N
    std::vector<double> u;
    double rho = 0.0;
    std::vector<double> D;   // row-major N x N

    double a(int n, int k) const { return A[static_cast<std::size_t>(n) * B.size() + k]; }
    double d(int n, int k) const { return D[static_cast<std::size_t>(n) * B.size() + k]; }
};

inline CoefficientMatrixSet coefficient_matrices(const RegimeSpec& spec,
                                                 const std::vector<double>& u) {
    spec.validate();
    const int n = spec.n_regimes;
    if (static_cast<int>(u.size()) != n)
        throw validation_error("coefficient_matrices: u must have n_regimes entries");
    for (double v : u)
        if (!(v >= 0.0)) throw validation_error("coefficient_matrices: u entries must be >= 0");

    CoefficientMatrixSet out;
    out.u = u;
    out.B.assign(n, 1.0);
    out.A.assign(static_cast<std::size_t>(n) * n, 0.0);
    out.D.assign(static_cast<std::size_t>(n) * n, 0.0);

    const double s_u = std::accumulate(u.begin(), u.end(), 0.0);
    double s_fu = 0.0;
    for (int k = 0; k < n; ++k) s_fu += spec.f[k] * u[k];

    if (s_u == 0.0) {
        for (int k = 0; k < n; ++k) out.A[static_cast<std::size_t>(k) * n + k] = 1.0;
        return out;
    }

    const double denom = spec.epsilon + s_fu;
    const double denom2 = denom * denom;
    for (int i = 0; i < n; ++i)
        out.B[i] = (spec.epsilon + spec.f[i] * s_u) / denom;

    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < n; ++k) {
            if (i == k) {
                double s = 0.0;
                for (int l = 0; l < n; ++l) s += (spec.f[l] - spec.f[i]) * u[l];
                out.A[static_cast<std::size_t>(i) * n + k] =
                    out.B[i] + u[i] * spec.f[i] * s / denom2;
            } else {
                double s = 0.0;
                for (int l = 0; l < n; ++l) s += (spec.f[l] - spec.f[k]) * u[l];
                out.A[static_cast<std::size_t>(i) * n + k] =
                    u[i] * (spec.epsilon * (spec.f[i] - spec.f[k]) + spec.f[i] * s) / denom2;
            }
        }
    }

    out.rho = s_fu / denom;
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < n; ++k) {
            if (i == k)
                out.D[static_cast<std::size_t>(i) * n + k] = spec.f[i] * s_u / s_fu - 1.0;
            else
                out.D[static_cast<std::size_t>(i) * n + k] = (spec.f[i] - spec.f[k]) * u[i] / s_fu;
        }
    }
    return out;
}

// (Gamma = J + delta*I, kappa) with <X, Gamma A^eps(u) X> >= kappa |X|^2 for
// all nonnegative u, uniformly in epsilon.
struct EllipticityCertificate {
    double delta = 0.0;
    double eta = 0.0;
    double kappa = 0.0;
    double kappa_tilde = 0.0;
};

class certificate_unavailable : public validation_error {
public:
    explicit certificate_unavailable(const SmallRangeReport& rep)
        : validation_error(format(rep)), report(rep) {}
    SmallRangeReport report;

private:
    static std::string format(const SmallRangeReport& rep) {
        std::ostringstream os;
        os << "ellipticity certificate unavailable: small range condition fails"
           << " (min(kappa0,1)=" << rep.lhs << " <= beta(f)=" << rep.rhs << ")";
        return os.str();
    }
};

// Constructive recipe. Strict inequalities of the underlying estimate are
// realized by midpoints (factor 1/2); constant f bypasses the recipe since
// A == I there and the generic formulas degenerate.
inline EllipticityCertificate ellipticity_certificate(const RegimeSpec& spec) {
    const SmallRangeReport rep = small_range_check(spec);
    if (!rep.holds) throw certificate_unavailable(rep);

    const double n = spec.n_regimes;
    EllipticityCertificate cert;

    if (rep.beta_f == 0.0) {
        cert.delta = 0.5;
        cert.kappa = 0.5;
        cert.eta = 0.0;
        cert.kappa_tilde = cert.kappa / (n + cert.delta);
        return cert;
    }

    const double beta = rep.beta_f;
    const double k0 = rep.kappa0;
    const double ratio = spec.f_max() / spec.f_min();

    const double eta_minus = 0.5 * (k0 - beta) / (n * n) / (1.0 + ratio + beta);
    const double eta_plus = 0.5 * (1.0 - beta) / (beta * n * n);
    const double eta = 0.5 * std::min(eta_minus, eta_plus);

    const double bracket = (1.0 + ratio) * (1.0 + 1.0 / (2.0 * eta)) + 2.0 * beta / eta;
    const double delta_minus = n / bracket;
    const double delta_plus = eta * beta;
    const double delta = std::min(0.5 * std::min(delta_minus, delta_plus), 0.99);

    const double kappa_minus =
        std::min(0.5 * n * (n - delta * bracket), 0.5 * delta * (k0 - beta));
    const double kappa_plus =
        std::min(n * (1.0 - beta * delta / eta), 0.5 * delta * (1.0 - beta));

    cert.delta = delta;
    cert.eta = eta;
    cert.kappa = std::min(kappa_minus, kappa_plus);
    cert.kappa_tilde = cert.kappa / (n + cert.delta);
    return cert;
}

struct CertificateVerification {
    double min_margin = 0.0;   // min over samples of Rayleigh quotient minus kappa
    bool pass = false;
    std::int64_t samples = 0;
};

inline double coercivity_quotient(const RegimeSpec& spec, double delta,
                                  const std::vector<double>& u, const std::vector<double>& x) {
    const int n = spec.n_regimes;
    const CoefficientMatrixSet cm = coefficient_matrices(spec, u);
    // y = A x, then <x, (J + delta I) y> = sum(y)*sum(x) ... J y has identical rows
    std::vector<double> y(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int k = 0; k < n; ++k) s += cm.a(i, k) * x[k];
        y[i] = s;
    }
    double sx = 0.0, sy = 0.0, dot = 0.0, nx2 = 0.0;
    for (int i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
        dot += x[i] * y[i];
        nx2 += x[i] * x[i];
    }
    return (sx * sy + delta * dot) / nx2;
}

// Monte Carlo spot check of the certificate: u componentwise log-uniform over
// 12 decades plus the all-zeros vector, X standard normal.
inline CertificateVerification verify_certificate(const RegimeSpec& spec,
                                                  const EllipticityCertificate& cert,
                                                  std::int64_t samples, std::uint64_t seed) {
    spec.validate();
    if (samples < 1) throw validation_error("verify_certificate: samples must be >= 1");
    const int n = spec.n_regimes;
    const std::uint64_t key_u = rng::derive_key(seed, rng::tag::verify, 0);
    const std::uint64_t key_x = rng::derive_key(seed, rng::tag::verify, 1);

    double min_margin = std::numeric_limits<double>::infinity();
    std::vector<double> u(n), x(n);
    for (std::int64_t s = -1; s < samples; ++s) {
        std::uint64_t nonzero = 0;
        for (int i = 0; i < n; ++i) {
            const std::uint64_t c = static_cast<std::uint64_t>(s + 1) * n + i;
            if (s < 0) {
                u[i] = 0.0;   // all-zeros probe: A = I exactly
            } else {
                u[i] = std::pow(10.0, rng::uniform(key_u, c, -6.0, 6.0));
            }
            x[i] = rng::normal(key_x, c);
            nonzero |= (x[i] != 0.0);
        }
        if (!nonzero) continue;
        min_margin = std::min(min_margin, coercivity_quotient(spec, cert.delta, u, x) - cert.kappa);
    }

    CertificateVerification out;
    out.min_margin = min_margin;
    out.samples = samples;
    out.pass = min_margin >= -1e-10;
    return out;
}

} // namespace lsv
