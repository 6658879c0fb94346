// Acceptance suite: each criterion prints one PASS/FAIL line and the binary
// exits nonzero if the selected criterion fails. Invoke with the criterion
// number (1-8) or no argument to run all.

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lsv/calibration.hpp"
#include "lsv/csv.hpp"
#include "lsv/driver.hpp"
#include "lsv/fokker_planck.hpp"
#include "lsv/kernel.hpp"
#include "lsv/localvol.hpp"
#include "lsv/particle.hpp"
#include "lsv/regime.hpp"
#include "oracles.hpp"

using namespace lsv;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

void require(Outcome& o, bool cond, const std::string& what) {
    if (!cond && o.pass) {
        o.pass = false;
        o.detail = what;
    }
}

InitialMixture mix_of(std::vector<double> w, std::vector<double> mu, std::vector<double> s) {
    InitialMixture m;
    m.weights = std::move(w);
    m.means = std::move(mu);
    m.stds = std::move(s);
    return m;
}

PdeGrid grid_of(double x_min, double x_max, int n_x, double t_step, int n_t) {
    PdeGrid g;
    g.x_min = x_min;
    g.x_max = x_max;
    g.n_x = n_x;
    g.t_step = t_step;
    g.n_t = n_t;
    return g;
}

// 1. range condition vs arbitrary-precision oracle; certificates verified by
//    sampling wherever the condition holds.
Outcome criterion_1() {
    Outcome o;
    const std::uint64_t key = rng::derive_key(2718, 0xC1);
    std::uint64_t c = 0;
    int holding = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 2 + static_cast<int>(rng::at(key, c++) % 5);
        std::vector<double> f(n);
        for (int i = 0; i < n; ++i) f[i] = rng::uniform(key, c++, 0.5, 2.0);
        const RegimeSpec spec = make_regime_spec(f, 1.0);
        const SmallRangeReport rep = small_range_check(spec);
        require(o, rep.holds == oracles::small_range_holds_mp(f),
                "holds flag disagrees with the 50-digit oracle");
        if (!rep.holds) continue;
        ++holding;
        const EllipticityCertificate cert = ellipticity_certificate(spec);
        const CertificateVerification ver = verify_certificate(spec, cert, 100000, 1234 + trial);
        require(o, ver.pass && ver.min_margin >= -1e-10, "sampled coercivity margin < -1e-10");
    }
    std::ostringstream os;
    os << holding << "/1000 vectors satisfy the condition, all certificates verified";
    if (o.pass) o.detail = os.str();
    return o;
}

// 2. column sums of A on random inputs; second-order chain-rule convergence.
Outcome criterion_2() {
    Outcome o;
    const std::uint64_t key = rng::derive_key(3141, 0xC2);
    std::uint64_t c = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const int n = 2 + static_cast<int>(rng::at(key, c++) % 5);
        std::vector<double> f(n), u(n);
        for (int i = 0; i < n; ++i) {
            f[i] = rng::uniform(key, c++, 0.5, 2.0);
            u[i] = std::pow(10.0, rng::uniform(key, c++, -3.0, 3.0));
        }
        const double eps = std::pow(10.0, rng::uniform(key, c++, -2.0, 2.0));
        const auto cm = coefficient_matrices(make_regime_spec(f, eps), u);
        for (int k = 0; k < n; ++k) {
            double col = 0.0;
            for (int i = 0; i < n; ++i) col += cm.a(i, k);
            require(o, std::abs(col - 1.0) <= 1e-12, "column sum off by more than 1e-12");
        }
    }

    for (int rep = 0; rep < 10; ++rep) {
        const int n = 2 + static_cast<int>(rng::at(key, c++) % 3);
        std::vector<double> f(n), u0(n), u1(n), u2(n);
        for (int i = 0; i < n; ++i) {
            f[i] = rng::uniform(key, c++, 0.6, 1.8);
            u0[i] = rng::uniform(key, c++, 0.5, 2.0);
            u1[i] = rng::uniform(key, c++, -0.5, 0.5);
            u2[i] = rng::uniform(key, c++, -0.3, 0.3);
        }
        const RegimeSpec spec = make_regime_spec(f, 0.7);
        auto u_of = [&](double x) {
            std::vector<double> u(n);
            for (int i = 0; i < n; ++i) u[i] = u0[i] + u1[i] * x + u2[i] * x * x;
            return u;
        };
        auto du_of = [&](double x) {
            std::vector<double> du(n);
            for (int i = 0; i < n; ++i) du[i] = u1[i] + 2.0 * u2[i] * x;
            return du;
        };
        auto bu = [&](double x) {
            const auto cm = coefficient_matrices(spec, u_of(x));
            std::vector<double> v(n);
            for (int i = 0; i < n; ++i) v[i] = cm.B[i] * cm.u[i];
            return v;
        };
        const double x0 = 0.2;
        const auto cm = coefficient_matrices(spec, u_of(x0));
        const auto du = du_of(x0);
        std::vector<double> exact(n, 0.0);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < n; ++k) exact[i] += cm.a(i, k) * du[k];

        std::vector<double> errs;
        for (double h = 1e-2; h >= 0.9e-4; h *= 0.5) {
            const auto up = bu(x0 + h);
            const auto dn = bu(x0 - h);
            double err = 0.0;
            for (int i = 0; i < n; ++i)
                err = std::max(err, std::abs((up[i] - dn[i]) / (2.0 * h) - exact[i]));
            errs.push_back(err);
        }
        for (std::size_t i = 1; i < errs.size(); ++i) {
            const double order = std::log2(errs[i - 1] / std::max(errs[i], 1e-300));
            require(o, order >= 1.9, "observed finite-difference order below 1.9");
        }
    }
    if (o.pass) o.detail = "10^4 column sums within 1e-12; FD order >= 1.9 on all halvings";
    return o;
}

// 3. constant-f PDE against the closed-form gaussian.
Outcome criterion_3() {
    Outcome o;
    const double sigma = 0.2, s0 = 0.2, t_end = 1.0;
    const RegimeSpec spec = make_regime_spec({1.0, 1.0}, 0.5);
    const VolSurface surface = constant_vol(sigma, t_end);
    const PdeGrid g = grid_of(-6.0, 6.0, 601, 1e-3, 1000);

    SolveDiagnostics diag;
    const GridDensity traj = fp_solve(mix_of({1.0, 0.0}, {0.0, 0.0}, {s0, s0}), spec, surface, g,
                                      std::nullopt, PicardParams{}, &diag);
    const double h = g.pitch();
    double mass = 0.0, mean = 0.0, var = 0.0;
    for (int j = 0; j < g.n_x; ++j) {
        mass += traj.at(g.n_t, 0, j) * h;
        mean += g.node(j) * traj.at(g.n_t, 0, j) * h;
    }
    mean /= mass;
    for (int j = 0; j < g.n_x; ++j) {
        const double d = g.node(j) - mean;
        var += d * d * traj.at(g.n_t, 0, j) * h;
    }
    var /= mass;

    const double mean_exact = -0.5 * sigma * sigma * t_end;
    const double var_exact = s0 * s0 + sigma * sigma * t_end;
    require(o, std::abs(mean - mean_exact) <= 2e-3, "grid mean off by more than 2e-3");
    require(o, std::abs(var - var_exact) <= 2e-3, "grid variance off by more than 2e-3");
    require(o, diag.max_mass_drift <= 1e-6, "per-regime mass drift above 1e-6");

    // two identical regimes stay identical
    const GridDensity twin = fp_solve(mix_of({0.5, 0.5}, {0.0, 0.0}, {s0, s0}), spec, surface,
                                      grid_of(-6.0, 6.0, 301, 5e-3, 200), std::nullopt,
                                      PicardParams{});
    double worst = 0.0;
    for (int k = 0; k <= 200; ++k)
        for (int j = 0; j < 301; ++j)
            worst = std::max(worst, std::abs(twin.at(k, 0, j) - twin.at(k, 1, j)));
    require(o, worst <= 1e-12, "identical regimes diverged beyond 1e-12");

    std::ostringstream os;
    os << "mean err " << std::abs(mean - mean_exact) << ", var err "
       << std::abs(var - var_exact) << ", twin gap " << worst;
    if (o.pass) o.detail = os.str();
    return o;
}

// 4. plain-vs-mollified trajectory gap over the bandwidth ladder.
Outcome criterion_4() {
    Outcome o;
    // Short horizon with a sharp/wide two-regime mixture: keeps the density
    // features at the mollifier scale, where the gap grows linearly in delta.
    const RegimeSpec spec = make_regime_spec({0.8, 1.0}, 0.05);
    const VolSurface surface = constant_vol(0.05, 1.0);
    const PdeGrid g = grid_of(-1.5, 1.5, 601, 1e-3, 50);
    const InitialMixture mix = mix_of({0.5, 0.5}, {0.10, -0.10}, {0.03, 0.12});

    const GridDensity plain = fp_solve(mix, spec, surface, g, std::nullopt, PicardParams{});
    std::vector<double> deltas{0.4, 0.2, 0.1};
    std::vector<double> gaps;
    for (double d : deltas) {
        const GridDensity moll =
            fp_solve(mix, spec, surface, g, KernelSpec{KernelFamily::quartic, d}, PicardParams{});
        gaps.push_back(mollified_gap(plain, moll));
    }
    require(o, gaps[0] > 0.0 && gaps[1] > 0.0 && gaps[2] > 0.0, "gap not positive");
    require(o, gaps[0] > gaps[1] && gaps[1] > gaps[2], "gap not decreasing in delta");
    double rmin = 1e300, rmax = 0.0;
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        rmin = std::min(rmin, gaps[i] / deltas[i]);
        rmax = std::max(rmax, gaps[i] / deltas[i]);
    }
    require(o, rmax / rmin < 4.0, "gap/delta varies by a factor of 4 or more");

    std::ostringstream os;
    os << "gaps " << gaps[0] << " / " << gaps[1] << " / " << gaps[2]
       << ", gap/delta band x" << rmax / rmin;
    o.detail = os.str() + (o.pass ? "" : (" -- " + o.detail));
    return o;
}

// 5. calibration identity and marginal match at M = 1e5.
Outcome criterion_5() {
    Outcome o;
    SimConfig cfg;
    cfg.spec = make_regime_spec({0.8, 1.0}, 0.01);
    cfg.surface = constant_vol(0.2, 1.0);
    cfg.mix = mix_of({0.5, 0.5}, {0.0, 0.0}, {0.2, 0.2});
    cfg.particles = 100000;
    cfg.kernel = KernelSpec{KernelFamily::quartic, 0.2};
    cfg.t_step = 0.01;
    cfg.horizon = 1.0;
    cfg.seed = 20240901;
    cfg.snapshot_times = {1.0};

    const SimResult res = simulate_particles(cfg);
    const Snapshot& snap = res.snapshots.back();

    const BinReport report = leverage_consistency_report(snap, cfg.surface, 200);
    require(o, report.pass, "less than 95% of admitted bins within |z| <= 3");

    const std::vector<double> bench =
        simulate_local_vol(cfg.surface, cfg.mix, cfg.particles, cfg.t_step, cfg.horizon, cfg.seed);
    const MarginalDistance dist = marginal_distance(snap.ensemble.x, bench);
    const double ks_band = 1.36 * std::sqrt(2.0 / static_cast<double>(cfg.particles)) * 3.0;
    require(o, dist.ks_statistic <= ks_band, "KS above 3x the two-sample 95% band");
    require(o, dist.call_rmse <= 5e-3, "call rmse above 5e-3 * S0");

    std::ostringstream os;
    os << report.admitted_within_3 << "/" << report.admitted_bins << " bins ok, KS "
       << dist.ks_statistic << " (band " << ks_band << "), call rmse " << dist.call_rmse;
    o.detail = os.str() + (o.pass ? "" : (" -- " + o.detail));
    return o;
}

// 6. chaos trend over the particle ladder plus the constant-f control.
Outcome criterion_6() {
    Outcome o;
    SimConfig base;
    base.spec = make_regime_spec({0.8, 1.0}, 0.1);
    base.surface = constant_vol(0.2, 1.0);
    base.mix = mix_of({0.5, 0.5}, {0.0, 0.0}, {0.15, 0.15});
    base.particles = 500;
    base.kernel = KernelSpec{KernelFamily::quartic, 0.4};
    base.t_step = 0.01;
    base.horizon = 0.5;
    base.seed = 77;

    const PdeGrid g = grid_of(-4.0, 4.0, 401, 0.01, 50);
    ChaosParams params;
    params.m_ladder = {500, 2000, 8000};
    params.delta0 = 0.4;
    params.repetitions = 5;

    const ChaosCurve curve = chaos_curve(base, g, params);
    for (std::size_t i = 1; i < curve.rows.size(); ++i)
        require(o, curve.rows[i].gap_mean <= 1.1 * curve.rows[i - 1].gap_mean,
                "mean-square sup gap increased beyond the 10% slack");

    SimConfig control = base;
    control.spec = make_regime_spec({1.0, 1.0}, 0.1);
    const ChaosCurve flat = chaos_curve(control, g, params);
    for (const ChaosRow& row : flat.rows)
        require(o, row.gap_mean == 0.0 && row.gap_se == 0.0,
                "constant-f control gap not identically zero");

    std::ostringstream os;
    os << "gap means";
    for (const ChaosRow& row : curve.rows) os << " " << row.gap_mean;
    o.detail = os.str() + (o.pass ? "" : (" -- " + o.detail));
    return o;
}

// 7. worker-count byte determinism and naive/binned backend agreement.
Outcome criterion_7() {
    Outcome o;
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "lsv_acceptance_7";
    fs::create_directories(dir);
    const fs::path cfg_path = dir / "config.json";
    std::ofstream(cfg_path, std::ios::trunc) << R"({
      "kind": "simulate",
      "seed": 7,
      "regime": {"f": [0.8, 1.0], "epsilon": 0.1},
      "kernel": {"family": "quartic", "delta": 0.25},
      "vol": {"type": "constant", "sigma": 0.2, "horizon": 1.0},
      "mixture": {"weights": [0.5, 0.5], "means": [0.0, 0.0], "stds": [0.2, 0.2]},
      "sim": {"particles": 10000, "t_step": 0.01, "horizon": 1.0, "snapshot_times": [0.5, 1.0]}
    })";

    auto run_with_threads = [&](int threads, const std::string& sub) {
        ExperimentConfig cfg = load_config(cfg_path.string());
        cfg.threads = threads;
        cfg.output_dir = (dir / sub).string();
        fs::remove_all(cfg.output_dir);
        run(cfg);
        std::ifstream in(fs::path(cfg.output_dir) / "particles.csv", std::ios::binary);
        std::ostringstream os;
        os << in.rdbuf();
        return os.str();
    };
    const std::string one = run_with_threads(1, "w1");
    const std::string eight = run_with_threads(8, "w8");
    require(o, !one.empty() && one == eight, "CSV bytes differ between 1 and 8 workers");

    // backend agreement at M = 1e4, 100 steps
    SimConfig sim;
    sim.spec = make_regime_spec({0.8, 1.0}, 0.1);
    sim.surface = constant_vol(0.2, 1.0);
    sim.mix = mix_of({0.5, 0.5}, {0.0, 0.0}, {0.2, 0.2});
    sim.particles = 10000;
    sim.kernel = KernelSpec{KernelFamily::quartic, 0.25};
    sim.t_step = 0.01;
    sim.horizon = 1.0;
    sim.seed = 7;
    sim.snapshot_times = {1.0};

    sim.kde_method = KdeMethod::binned;
    const SimResult rb = simulate_particles(sim);
    sim.kde_method = KdeMethod::naive;
    const SimResult rn = simulate_particles(sim);
    double worst = 0.0;
    for (std::size_t i = 0; i < sim.particles; ++i)
        worst = std::max(worst, std::abs(rb.snapshots[0].ensemble.x[i] -
                                         rn.snapshots[0].ensemble.x[i]));
    require(o, worst <= 1e-6, "naive vs binned per-particle gap above 1e-6");

    std::ostringstream os;
    os << "bytes identical across workers; backend gap " << worst;
    o.detail = os.str() + (o.pass ? "" : (" -- " + o.detail));
    return o;
}

// 8. lognormal-surface round trip.
Outcome criterion_8() {
    Outcome o;
    const double sigma = 0.2;
    CallSurface c;
    for (int i = 0; i <= 100; ++i) c.t_grid.push_back(0.3 + 0.01 * i);
    for (int i = 0; i <= 80; ++i) c.k_grid.push_back(0.6 + 0.0125 * i);
    for (double t : c.t_grid)
        for (double k : c.k_grid) c.prices.push_back(oracles::bs_call(1.0, k, sigma, t));
    const DupireResult res = dupire_local_vol(c, 0.05, 0.8);
    double worst = 0.0;
    for (std::size_t ti = 20; ti + 10 < c.t_grid.size(); ++ti)
        for (std::size_t ki = 20; ki + 34 < c.k_grid.size(); ++ki)
            worst = std::max(worst, std::abs(res.surface.at(ti, ki) - sigma));
    require(o, worst <= 1e-3, "interior local vol off by more than 1e-3");
    std::ostringstream os;
    os << "worst interior error " << worst;
    o.detail = os.str() + (o.pass ? "" : (" -- " + o.detail));
    return o;
}

const char* names[] = {
    "condition/certificate suite",
    "matrix identities",
    "PDE gaussian oracle",
    "mollified-gap trend",
    "calibration identity",
    "chaos trend",
    "determinism & backend equivalence",
    "local-vol round trip",
};

} // namespace

int main(int argc, char** argv) {
    Outcome (*criteria[])() = {criterion_1, criterion_2, criterion_3, criterion_4,
                               criterion_5, criterion_6, criterion_7, criterion_8};
    int lo = 0, hi = 7;
    if (argc > 1) {
        const int k = std::atoi(argv[1]);
        if (k < 1 || k > 8) {
            std::cerr << "usage: acceptance [1-8]\n";
            return 2;
        }
        lo = hi = k - 1;
    }
    bool all_pass = true;
    for (int i = lo; i <= hi; ++i) {
        const Outcome o = criteria[i]();
        std::cout << (o.pass ? "[PASS]" : "[FAIL]") << " criterion " << (i + 1) << " ("
                  << names[i] << "): " << o.detail << "\n";
        all_pass = all_pass && o.pass;
    }
    return all_pass ? 0 : 1;
}
