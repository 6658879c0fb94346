#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lsv/driver.hpp"

// CLI wrapper: one subcommand per experiment kind, each taking the same
// --config/--out/--seed/--threads options. Exit 0 on success, 2 on
// validation failure, 1 on runtime failure.

namespace {

struct Options {
    std::string config_path;
    std::string out_dir;
    std::int64_t seed = -1;
    int threads = 0;
};

int run_kind(lsv::ExperimentKind kind, const Options& opt) {
    try {
        lsv::ExperimentConfig cfg = lsv::load_config(opt.config_path);
        if (cfg.kind != kind) {
            std::cerr << "error: config kind '" << lsv::kind_name(cfg.kind)
                      << "' does not match subcommand '" << lsv::kind_name(kind) << "'\n";
            return 2;
        }
        if (!opt.out_dir.empty()) cfg.output_dir = opt.out_dir;
        if (opt.seed >= 0) cfg.seed = static_cast<std::uint64_t>(opt.seed);
        if (opt.threads > 0) cfg.threads = opt.threads;

        const lsv::RunResult result = lsv::run(cfg);
        for (const std::string& f : result.outputs)
            std::cout << cfg.output_dir << "/" << f << "\n";
        return result.status;
    } catch (const lsv::validation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regime-switching LSV particle/PDE engine"};
    app.require_subcommand(1);

    const std::pair<const char*, lsv::ExperimentKind> kinds[] = {
        {"check-condition", lsv::ExperimentKind::check_condition},
        {"certificate", lsv::ExperimentKind::certificate},
        {"dupire", lsv::ExperimentKind::dupire},
        {"solve-pde", lsv::ExperimentKind::solve_pde},
        {"simulate", lsv::ExperimentKind::simulate},
        {"calibration-report", lsv::ExperimentKind::calibration_report},
        {"chaos-study", lsv::ExperimentKind::chaos_study},
    };

    Options opt;
    lsv::ExperimentKind selected{};
    for (const auto& [name, kind] : kinds) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", opt.config_path, "experiment config (JSON)")->required();
        sub->add_option("--out", opt.out_dir, "output directory (overrides config)");
        sub->add_option("--seed", opt.seed, "seed override");
        sub->add_option("--threads", opt.threads, "worker count override");
        sub->callback([&selected, kind] { selected = kind; });
    }

    CLI11_PARSE(app, argc, argv);
    return run_kind(selected, opt);
}
