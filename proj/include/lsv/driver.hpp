#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsv/calibration.hpp"
#include "lsv/csv.hpp"
#include "lsv/errors.hpp"
#include "lsv/fokker_planck.hpp"
#include "lsv/kernel.hpp"
#include "lsv/localvol.hpp"
#include "lsv/particle.hpp"
#include "lsv/regime.hpp"

// Experiment driver: strict JSON config ingestion (unknown keys fatal, all
// validation errors collected), dispatch per experiment kind, atomic artifact
// writes, and a manifest recording every file produced.

namespace lsv {

inline constexpr const char* engine_version = "1.0.0";

enum class ExperimentKind {
    check_condition,
    certificate,
    dupire,
    solve_pde,
    simulate,
    calibration_report,
    chaos_study,
};

inline std::string kind_name(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::check_condition: return "check-condition";
        case ExperimentKind::certificate: return "certificate";
        case ExperimentKind::dupire: return "dupire";
        case ExperimentKind::solve_pde: return "solve-pde";
        case ExperimentKind::simulate: return "simulate";
        case ExperimentKind::calibration_report: return "calibration-report";
        case ExperimentKind::chaos_study: return "chaos-study";
    }
    return "?";
}

struct VolSource {
    bool constant = true;
    double sigma = 0.0;       // constant source
    double horizon = 0.0;
    std::string path;         // call-surface source
    double sigma0 = 0.0;
    double sigma1 = 0.0;
};

struct PdeConfig {
    PdeGrid grid;
    std::vector<double> snapshot_times;
    bool mollify = false;
    PicardParams picard;
};

struct SimBlock {
    std::size_t particles = 0;
    double t_step = 0.0;
    double horizon = 0.0;
    std::vector<double> snapshot_times;
    KdeMethod kde_method = KdeMethod::binned;
};

struct CalibrationBlock {
    int n_bins = 40;
    std::size_t benchmark_particles = 0;   // 0: reuse sim particle count
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::check_condition;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string output_dir = "out";
    std::string raw;   // config file bytes, hashed into the manifest

    std::optional<RegimeSpec> regime;
    std::optional<KernelSpec> kernel;
    std::optional<VolSource> vol;
    std::optional<InitialMixture> mixture;
    std::optional<PdeConfig> pde;
    std::optional<SimBlock> sim;
    std::optional<CalibrationBlock> calibration;
    std::optional<ChaosParams> chaos;
    std::int64_t verify_samples = 100000;
};

namespace detail {

using json = nlohmann::json;

class ConfigReader {
public:
    ConfigReader(const json& node, std::string path, std::vector<std::string>& errors)
        : node_(node), path_(std::move(path)), errors_(errors) {}

    ~ConfigReader() {
        if (!node_.is_object()) return;
        for (const auto& [key, value] : node_.items())
            if (!seen_.count(key)) errors_.push_back(path_ + ": unknown key '" + key + "'");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return node_.contains(key);
    }

    template <typename T>
    T get(const std::string& key, std::optional<T> fallback = std::nullopt) {
        seen_.insert(key);
        if (!node_.contains(key)) {
            if (fallback) return *fallback;
            errors_.push_back(path_ + ": missing required key '" + key + "'");
            return T{};
        }
        try {
            return node_.at(key).get<T>();
        } catch (const json::exception&) {
            errors_.push_back(path_ + ": key '" + key + "' has wrong type");
            return T{};
        }
    }

    const json& child(const std::string& key) {
        seen_.insert(key);
        static const json empty = json::object();
        if (!node_.contains(key) || !node_.at(key).is_object()) {
            if (node_.contains(key))
                errors_.push_back(path_ + ": key '" + key + "' must be an object");
            else
                errors_.push_back(path_ + ": missing required block '" + key + "'");
            return empty;
        }
        return node_.at(key);
    }

    std::string path(const std::string& key) const { return path_ + "." + key; }

private:
    const json& node_;
    std::string path_;
    std::vector<std::string>& errors_;
    std::set<std::string> seen_;
};

inline void check(std::vector<std::string>& errors, const std::string& context,
                  const std::function<void()>& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        errors.push_back(context + ": " + e.what());
    }
}

inline RegimeSpec parse_regime(const json& node, const std::string& path,
                               std::vector<std::string>& errors) {
    ConfigReader r(node, path, errors);
    RegimeSpec spec;
    spec.f = r.get<std::vector<double>>("f");
    spec.epsilon = r.get<double>("epsilon");
    spec.n_regimes = static_cast<int>(spec.f.size());
    // field-by-field so one bad entry does not mask the others
    if (spec.n_regimes < 2) errors.push_back(path + ".f: need at least 2 regimes");
    for (double v : spec.f)
        if (!(v > 0.0)) {
            errors.push_back(path + ".f: entries must be strictly positive");
            break;
        }
    if (!(spec.epsilon > 0.0)) errors.push_back(path + ".epsilon: must be strictly positive");
    return spec;
}

inline KernelSpec parse_kernel(const json& node, const std::string& path,
                               std::vector<std::string>& errors) {
    ConfigReader r(node, path, errors);
    KernelSpec spec;
    const std::string family = r.get<std::string>("family", std::string("gaussian"));
    if (family == "gaussian")
        spec.family = KernelFamily::gaussian;
    else if (family == "quartic")
        spec.family = KernelFamily::quartic;
    else
        errors.push_back(path + ": family must be 'gaussian' or 'quartic'");
    spec.delta = r.get<double>("delta");
    spec.truncation_radius = r.get<double>("truncation_radius", 8.0);
    check(errors, path, [&] { spec.validate(); });
    return spec;
}

inline VolSource parse_vol(const json& node, const std::string& path,
                           std::vector<std::string>& errors) {
    ConfigReader r(node, path, errors);
    VolSource vol;
    const std::string type = r.get<std::string>("type");
    if (type == "constant") {
        vol.constant = true;
        vol.sigma = r.get<double>("sigma");
        vol.horizon = r.get<double>("horizon");
        check(errors, path, [&] { (void)constant_vol(vol.sigma, vol.horizon); });
    } else if (type == "call-surface") {
        vol.constant = false;
        vol.path = r.get<std::string>("path");
        vol.sigma0 = r.get<double>("sigma0");
        vol.sigma1 = r.get<double>("sigma1");
        if (!vol.path.empty() && !std::filesystem::exists(vol.path))
            errors.push_back(path + ": file does not exist: " + vol.path);
        if (!(vol.sigma0 > 0.0) || !(vol.sigma1 > vol.sigma0))
            errors.push_back(path + ": need 0 < sigma0 < sigma1");
    } else if (!type.empty()) {
        errors.push_back(path + ": type must be 'constant' or 'call-surface'");
    }
    return vol;
}

inline InitialMixture parse_mixture(const json& node, const std::string& path,
                                    std::vector<std::string>& errors) {
    ConfigReader r(node, path, errors);
    InitialMixture mix;
    mix.weights = r.get<std::vector<double>>("weights");
    mix.means = r.get<std::vector<double>>("means");
    mix.stds = r.get<std::vector<double>>("stds");
    check(errors, path, [&] { mix.validate(); });
    return mix;
}

inline PdeConfig parse_pde(const json& node, const std::string& path,
                           std::vector<std::string>& errors) {
    ConfigReader r(node, path, errors);
    PdeConfig cfg;
    cfg.grid.x_min = r.get<double>("x_min");
    cfg.grid.x_max = r.get<double>("x_max");
    cfg.grid.n_x = r.get<int>("n_x");
    cfg.grid.t_step = r.get<double>("t_step");
    cfg.grid.n_t = r.get<int>("n_t");
    cfg.snapshot_times = r.get<std::vector<double>>("snapshot_times", std::vector<double>{});
    cfg.mollify = r.get<bool>("mollify", false);
    cfg.picard.max_iters = r.get<int>("picard_max_iters", 5);
    cfg.picard.tol = r.get<double>("picard_tol", 1e-10);
    check(errors, path, [&] { cfg.grid.validate(); });
    if (cfg.picard.max_iters < 1) errors.push_back(path + ": picard_max_iters must be >= 1");
    return cfg;
}

inline SimBlock parse_sim(const json& node, const std::string& path,
                          std::vector<std::string>& errors) {
    ConfigReader r(node, path, errors);
    SimBlock sim;
    const std::int64_t m = r.get<std::int64_t>("particles");
    if (m < 2)
        errors.push_back(path + ": particles must be >= 2");
    else
        sim.particles = static_cast<std::size_t>(m);
    sim.t_step = r.get<double>("t_step");
    sim.horizon = r.get<double>("horizon");
    sim.snapshot_times = r.get<std::vector<double>>("snapshot_times", std::vector<double>{});
    const std::string method = r.get<std::string>("kde_method", std::string("binned"));
    if (method == "binned")
        sim.kde_method = KdeMethod::binned;
    else if (method == "naive")
        sim.kde_method = KdeMethod::naive;
    else
        errors.push_back(path + ": kde_method must be 'binned' or 'naive'");
    if (!(sim.t_step > 0.0) || !(sim.horizon > 0.0) || sim.t_step > sim.horizon)
        errors.push_back(path + ": need 0 < t_step <= horizon");
    return sim;
}

inline CalibrationBlock parse_calibration(const json& node, const std::string& path,
                                          std::vector<std::string>& errors) {
    ConfigReader r(node, path, errors);
    CalibrationBlock cal;
    cal.n_bins = r.get<int>("n_bins", 40);
    const std::int64_t bp = r.get<std::int64_t>("benchmark_particles", std::int64_t{0});
    if (cal.n_bins < 1) errors.push_back(path + ": n_bins must be >= 1");
    if (bp < 0)
        errors.push_back(path + ": benchmark_particles must be >= 0");
    else
        cal.benchmark_particles = static_cast<std::size_t>(bp);
    return cal;
}

inline ChaosParams parse_chaos(const json& node, const std::string& path,
                               std::vector<std::string>& errors) {
    ConfigReader r(node, path, errors);
    ChaosParams chaos;
    const auto ladder = r.get<std::vector<std::int64_t>>("m_ladder");
    for (std::int64_t m : ladder) {
        if (m < 2) {
            errors.push_back(path + ": m_ladder entries must be >= 2");
            break;
        }
        chaos.m_ladder.push_back(static_cast<std::size_t>(m));
    }
    chaos.delta0 = r.get<double>("delta0");
    chaos.repetitions = r.get<int>("repetitions");
    check(errors, path, [&] { chaos.validate(); });
    return chaos;
}

} // namespace detail

// Parses and fully validates a config file; every problem found is reported
// at once, joined by newlines in the thrown message.
inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw validation_error("load_config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();

    ExperimentConfig cfg;
    cfg.raw = buf.str();

    detail::json root;
    try {
        root = detail::json::parse(cfg.raw);
    } catch (const detail::json::exception& e) {
        throw validation_error("load_config: " + path + ": " + e.what());
    }
    if (!root.is_object()) throw validation_error("load_config: top level must be an object");

    std::vector<std::string> errors;
    {
        detail::ConfigReader r(root, "config", errors);

        const std::string kind = r.get<std::string>("kind");
        bool kind_ok = true;
        if (kind == "check-condition") cfg.kind = ExperimentKind::check_condition;
        else if (kind == "certificate") cfg.kind = ExperimentKind::certificate;
        else if (kind == "dupire") cfg.kind = ExperimentKind::dupire;
        else if (kind == "solve-pde") cfg.kind = ExperimentKind::solve_pde;
        else if (kind == "simulate") cfg.kind = ExperimentKind::simulate;
        else if (kind == "calibration-report") cfg.kind = ExperimentKind::calibration_report;
        else if (kind == "chaos-study") cfg.kind = ExperimentKind::chaos_study;
        else {
            kind_ok = false;
            if (!kind.empty()) errors.push_back("config: unknown kind '" + kind + "'");
        }

        cfg.seed = r.get<std::uint64_t>("seed", std::uint64_t{0});
        cfg.threads = r.get<int>("threads", 1);
        cfg.output_dir = r.get<std::string>("output_dir", std::string("out"));
        cfg.verify_samples = r.get<std::int64_t>("verify_samples", std::int64_t{100000});
        if (cfg.threads < 1) errors.push_back("config: threads must be >= 1");
        if (cfg.verify_samples < 1) errors.push_back("config: verify_samples must be >= 1");

        const bool need_regime = kind_ok && cfg.kind != ExperimentKind::dupire;
        const bool need_vol = kind_ok && cfg.kind != ExperimentKind::check_condition &&
                              cfg.kind != ExperimentKind::certificate;
        const bool need_mixture = need_vol && cfg.kind != ExperimentKind::dupire;
        const bool need_kernel = kind_ok && (cfg.kind == ExperimentKind::simulate ||
                                             cfg.kind == ExperimentKind::calibration_report ||
                                             cfg.kind == ExperimentKind::chaos_study);
        const bool need_pde = kind_ok && (cfg.kind == ExperimentKind::solve_pde ||
                                          cfg.kind == ExperimentKind::chaos_study);
        const bool need_sim = need_kernel;

        if (need_regime || r.has("regime"))
            cfg.regime = detail::parse_regime(r.child("regime"), r.path("regime"), errors);
        if (need_kernel || r.has("kernel"))
            cfg.kernel = detail::parse_kernel(r.child("kernel"), r.path("kernel"), errors);
        if (need_vol || r.has("vol"))
            cfg.vol = detail::parse_vol(r.child("vol"), r.path("vol"), errors);
        if (need_mixture || r.has("mixture"))
            cfg.mixture = detail::parse_mixture(r.child("mixture"), r.path("mixture"), errors);
        if (need_pde || r.has("pde"))
            cfg.pde = detail::parse_pde(r.child("pde"), r.path("pde"), errors);
        if (need_sim || r.has("sim"))
            cfg.sim = detail::parse_sim(r.child("sim"), r.path("sim"), errors);
        if (cfg.kind == ExperimentKind::calibration_report || r.has("calibration"))
            cfg.calibration =
                detail::parse_calibration(r.child("calibration"), r.path("calibration"), errors);
        if (cfg.kind == ExperimentKind::chaos_study || r.has("chaos"))
            cfg.chaos = detail::parse_chaos(r.child("chaos"), r.path("chaos"), errors);

        if (kind_ok && cfg.kind == ExperimentKind::dupire &&
            cfg.vol && cfg.vol->constant)
            errors.push_back("config.vol: dupire needs a call-surface source");
    }

    if (!errors.empty()) {
        std::ostringstream os;
        os << "invalid config (" << errors.size() << " problem"
           << (errors.size() == 1 ? "" : "s") << "):";
        for (const std::string& e : errors) os << "\n  - " << e;
        throw validation_error(os.str());
    }
    return cfg;
}

namespace detail {

inline VolSurface resolve_surface(const ExperimentConfig& cfg) {
    if (cfg.vol->constant) return constant_vol(cfg.vol->sigma, cfg.vol->horizon);
    const CallSurface calls = csv::read_call_surface(cfg.vol->path);
    return dupire_local_vol(calls, cfg.vol->sigma0, cfg.vol->sigma1).surface;
}

inline SimConfig build_sim_config(const ExperimentConfig& cfg, const VolSurface& surface) {
    SimConfig sim;
    sim.spec = *cfg.regime;
    sim.surface = surface;
    sim.mix = *cfg.mixture;
    sim.particles = cfg.sim->particles;
    sim.kernel = *cfg.kernel;
    sim.t_step = cfg.sim->t_step;
    sim.horizon = cfg.sim->horizon;
    sim.seed = cfg.seed;
    sim.kde_method = cfg.sim->kde_method;
    sim.snapshot_times = cfg.sim->snapshot_times;
    sim.threads = cfg.threads;
    sim.validate();
    return sim;
}

inline std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// temp-then-rename so readers never observe a partial file
inline void atomic_write(const std::filesystem::path& target, const std::string& content) {
    const std::filesystem::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw numeric_error("cannot write " + tmp.string());
        out << content;
    }
    std::filesystem::rename(tmp, target);
}

inline json small_range_json(const SmallRangeReport& rep) {
    return json{{"kappa0", rep.kappa0}, {"beta_f", rep.beta_f}, {"lhs", rep.lhs},
                {"rhs", rep.rhs},       {"holds", rep.holds}};
}

} // namespace detail

struct RunResult {
    int status = 0;
    std::vector<std::string> outputs;   // file names relative to the output dir
};

// Dispatches the experiment and writes its artifacts plus manifest.json.
inline RunResult run(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    using detail::json;
    const auto t_start = std::chrono::steady_clock::now();

    fs::create_directories(cfg.output_dir);
    RunResult result;
    auto emit = [&](const std::string& name, const std::string& content) {
        detail::atomic_write(fs::path(cfg.output_dir) / name, content);
        result.outputs.push_back(name);
    };
    auto emit_json = [&](const std::string& name, const json& doc) {
        emit(name, doc.dump(2) + "\n");
    };

    switch (cfg.kind) {
        case ExperimentKind::check_condition: {
            const SmallRangeReport rep = small_range_check(*cfg.regime);
            emit_json("report.json", detail::small_range_json(rep));
            break;
        }
        case ExperimentKind::certificate: {
            const EllipticityCertificate cert = ellipticity_certificate(*cfg.regime);
            const CertificateVerification ver =
                verify_certificate(*cfg.regime, cert, cfg.verify_samples, cfg.seed);
            emit_json("report.json",
                      json{{"small_range", detail::small_range_json(small_range_check(*cfg.regime))},
                           {"certificate",
                            json{{"delta", cert.delta},
                                 {"eta", cert.eta},
                                 {"kappa", cert.kappa},
                                 {"kappa_tilde", cert.kappa_tilde}}},
                           {"verification",
                            json{{"min_margin", ver.min_margin},
                                 {"pass", ver.pass},
                                 {"samples", ver.samples}}}});
            break;
        }
        case ExperimentKind::dupire: {
            const CallSurface calls = csv::read_call_surface(cfg.vol->path);
            const DupireResult dup = dupire_local_vol(calls, cfg.vol->sigma0, cfg.vol->sigma1);
            std::ostringstream os;
            csv::write_vol_surface(os, dup.surface);
            emit("local_vol.csv", os.str());
            json flags = json::array();
            for (const DupireFlag& f : dup.flags)
                flags.push_back(json{{"t_index", f.t_index}, {"k_index", f.k_index},
                                     {"reason", f.reason}});
            emit_json("flags.json", json{{"flags", flags}, {"count", dup.flags.size()}});
            break;
        }
        case ExperimentKind::solve_pde: {
            const VolSurface surface = detail::resolve_surface(cfg);
            std::optional<KernelSpec> moll;
            if (cfg.pde->mollify) {
                if (!cfg.kernel)
                    throw validation_error("solve-pde with mollify needs a kernel block");
                moll = *cfg.kernel;
            }
            SolveDiagnostics diag;
            const GridDensity traj = fp_solve(*cfg.mixture, *cfg.regime, surface, cfg.pde->grid,
                                              moll, cfg.pde->picard, &diag);
            std::vector<double> times = cfg.pde->snapshot_times;
            if (times.empty()) times = {0.0, cfg.pde->grid.horizon()};
            std::ostringstream os;
            csv::write_density_snapshots(os, traj, times);
            emit("density.csv", os.str());
            json steps = json::array();
            for (const StepDiagnostics& s : diag.steps)
                steps.push_back(json{{"picard_iters", s.picard_iters},
                                     {"final_increment", s.final_increment},
                                     {"clipped_mass", s.clipped_mass},
                                     {"converged", s.converged}});
            emit_json("diagnostics.json",
                      json{{"max_mass_drift", diag.max_mass_drift},
                           {"max_clipped_mass", diag.max_clipped_mass},
                           {"steps", steps}});
            break;
        }
        case ExperimentKind::simulate: {
            const VolSurface surface = detail::resolve_surface(cfg);
            SimConfig sim = detail::build_sim_config(cfg, surface);
            if (sim.snapshot_times.empty()) sim.snapshot_times = {sim.horizon};
            const SimResult res = simulate_particles(sim);
            std::ostringstream os;
            csv::write_particle_snapshots(os, res.snapshots);
            emit("particles.csv", os.str());
            double r_min = 1.0, r_max = 1.0;
            if (!res.stats.empty()) {
                r_min = res.stats.front().r_min;
                r_max = res.stats.front().r_max;
                for (const StepStats& s : res.stats) {
                    r_min = std::min(r_min, s.r_min);
                    r_max = std::max(r_max, s.r_max);
                }
            }
            emit_json("stats.json", json{{"r_min", r_min},
                                         {"r_max", r_max},
                                         {"steps", res.stats.size()},
                                         {"snapshots", res.snapshots.size()}});
            break;
        }
        case ExperimentKind::calibration_report: {
            const VolSurface surface = detail::resolve_surface(cfg);
            SimConfig sim = detail::build_sim_config(cfg, surface);
            sim.snapshot_times = {sim.horizon};
            const SimResult res = simulate_particles(sim);
            const Snapshot& snap = res.snapshots.back();

            const BinReport report =
                leverage_consistency_report(snap, surface, cfg.calibration->n_bins);
            std::ostringstream os;
            csv::write_bin_report(os, report);
            emit("bin_report.csv", os.str());

            const std::size_t bench_m = cfg.calibration->benchmark_particles
                                            ? cfg.calibration->benchmark_particles
                                            : sim.particles;
            const std::vector<double> bench = simulate_local_vol(
                surface, sim.mix, bench_m, sim.t_step, sim.horizon, cfg.seed);
            const MarginalDistance dist = marginal_distance(snap.ensemble.x, bench);

            emit_json("summary.json",
                      json{{"pass", report.pass},
                           {"admitted_bins", report.admitted_bins},
                           {"admitted_within_3", report.admitted_within_3},
                           {"ks_statistic", dist.ks_statistic},
                           {"call_rmse", dist.call_rmse}});
            break;
        }
        case ExperimentKind::chaos_study: {
            const VolSurface surface = detail::resolve_surface(cfg);
            SimConfig base = detail::build_sim_config(cfg, surface);
            const ChaosCurve curve = chaos_curve(base, cfg.pde->grid, *cfg.chaos);
            std::ostringstream os;
            csv::write_chaos_curve(os, curve);
            emit("chaos_curve.csv", os.str());
            json rows = json::array();
            for (const ChaosRow& row : curve.rows)
                rows.push_back(json{{"particles", row.particles},
                                    {"delta_m", row.delta_m},
                                    {"gap_mean", row.gap_mean},
                                    {"gap_se", row.gap_se}});
            emit_json("summary.json", json{{"rows", rows}});
            break;
        }
    }

    const double wall = std::chrono::duration<double>(
        std::chrono::steady_clock::now() - t_start).count();
    char hash_hex[17];
    std::snprintf(hash_hex, sizeof hash_hex, "%016llx",
                  static_cast<unsigned long long>(detail::fnv1a(cfg.raw)));
    detail::atomic_write(
        std::filesystem::path(cfg.output_dir) / "manifest.json",
        json{{"kind", kind_name(cfg.kind)},
             {"config_hash", std::string(hash_hex)},
             {"seed", cfg.seed},
             {"threads", cfg.threads},
             {"version", engine_version},
             {"wall_clock_seconds", wall},
             {"outputs", result.outputs}}.dump(2) + "\n");
    result.outputs.push_back("manifest.json");
    return result;
}

} // namespace lsv
