#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "lsv/driver.hpp"

using namespace lsv;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
    const fs::path dir = fs::temp_directory_path() / "lsv_driver_tests";
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const std::string& name, const std::string& content) {
    const fs::path p = scratch_dir() / name;
    std::ofstream(p, std::ios::trunc) << content;
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(LSV_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

const char* simulate_config = R"({
  "kind": "simulate",
  "seed": 11,
  "regime": {"f": [0.8, 1.0], "epsilon": 0.5},
  "kernel": {"family": "quartic", "delta": 0.3},
  "vol": {"type": "constant", "sigma": 0.2, "horizon": 1.0},
  "mixture": {"weights": [0.5, 0.5], "means": [0.0, 0.0], "stds": [0.2, 0.2]},
  "sim": {"particles": 400, "t_step": 0.05, "horizon": 0.2, "snapshot_times": [0.2]}
})";

} // namespace

TEST_CASE("minimal check-condition config parses with defaults") {
    const fs::path p = write_config("min.json", R"({
      "kind": "check-condition",
      "regime": {"f": [0.8, 1.0], "epsilon": 0.5}
    })");
    const ExperimentConfig cfg = load_config(p.string());
    CHECK(cfg.kind == ExperimentKind::check_condition);
    CHECK(cfg.seed == 0);
    CHECK(cfg.threads == 1);
    CHECK(cfg.regime);
    CHECK(cfg.regime->n_regimes == 2);
    CHECK(cfg.regime->epsilon == 0.5);
}

TEST_CASE("config problems are all reported at once") {
    const fs::path p = write_config("bad.json", R"({
      "kind": "check-condition",
      "typo_key": 1,
      "regime": {"f": [0.8, 0.0], "epsilon": -1.0, "extra": true}
    })");
    try {
        load_config(p.string());
        FAIL("expected validation error");
    } catch (const validation_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("typo_key") != std::string::npos);
        CHECK(msg.find("extra") != std::string::npos);
        CHECK(msg.find("f") != std::string::npos);      // zero entry names the field
        CHECK(msg.find("epsilon") != std::string::npos);
    }
}

TEST_CASE("missing file and parse errors") {
    CHECK_THROWS_AS(load_config("/nonexistent/nope.json"), validation_error);
    const fs::path p = write_config("syntax.json", "{ not json");
    CHECK_THROWS_AS(load_config(p.string()), validation_error);
}

TEST_CASE("chaos-study with too few repetitions is rejected") {
    const fs::path p = write_config("chaos_bad.json", R"({
      "kind": "chaos-study",
      "regime": {"f": [0.8, 1.0], "epsilon": 0.5},
      "kernel": {"family": "quartic", "delta": 0.3},
      "vol": {"type": "constant", "sigma": 0.2, "horizon": 1.0},
      "mixture": {"weights": [0.5, 0.5], "means": [0.0, 0.0], "stds": [0.2, 0.2]},
      "sim": {"particles": 100, "t_step": 0.05, "horizon": 0.2},
      "pde": {"x_min": -4.0, "x_max": 4.0, "n_x": 201, "t_step": 0.05, "n_t": 4},
      "chaos": {"m_ladder": [50, 100], "delta0": 0.3, "repetitions": 0}
    })");
    CHECK_THROWS_AS(load_config(p.string()), validation_error);
    CHECK(run_cli("chaos-study --config " + p.string()) == 2);
}

TEST_CASE("check-condition runs end to end with status 0") {
    const fs::path p = write_config("cond.json", R"({
      "kind": "check-condition",
      "regime": {"f": [0.8, 1.0], "epsilon": 0.5}
    })");
    const fs::path out = scratch_dir() / "cond_out";
    fs::remove_all(out);
    CHECK(run_cli("check-condition --config " + p.string() + " --out " + out.string()) == 0);
    const std::string report = slurp(out / "report.json");
    CHECK(report.find("\"holds\": true") != std::string::npos);
}

TEST_CASE("subcommand and config kind must agree") {
    const fs::path p = write_config("cond2.json", R"({
      "kind": "check-condition",
      "regime": {"f": [0.8, 1.0], "epsilon": 0.5}
    })");
    CHECK(run_cli("certificate --config " + p.string()) == 2);
}

TEST_CASE("reruns with the same seed are byte-identical") {
    const fs::path p = write_config("sim.json", simulate_config);
    const fs::path out1 = scratch_dir() / "sim1";
    const fs::path out2 = scratch_dir() / "sim2";
    fs::remove_all(out1);
    fs::remove_all(out2);
    REQUIRE(run_cli("simulate --config " + p.string() + " --out " + out1.string()) == 0);
    REQUIRE(run_cli("simulate --config " + p.string() + " --out " + out2.string()) == 0);
    CHECK(slurp(out1 / "particles.csv") == slurp(out2 / "particles.csv"));
    CHECK(slurp(out1 / "particles.csv").size() > 0);

    // different worker count, same bytes
    const fs::path out3 = scratch_dir() / "sim3";
    fs::remove_all(out3);
    REQUIRE(run_cli("simulate --config " + p.string() + " --out " + out3.string() +
                    " --threads 8") == 0);
    CHECK(slurp(out1 / "particles.csv") == slurp(out3 / "particles.csv"));

    // different seed, different bytes
    const fs::path out4 = scratch_dir() / "sim4";
    fs::remove_all(out4);
    REQUIRE(run_cli("simulate --config " + p.string() + " --out " + out4.string() +
                    " --seed 99") == 0);
    CHECK(slurp(out1 / "particles.csv") != slurp(out4 / "particles.csv"));
}

TEST_CASE("manifest lists every artifact") {
    const fs::path p = write_config("sim_manifest.json", simulate_config);
    const fs::path out = scratch_dir() / "manifest_out";
    fs::remove_all(out);
    ExperimentConfig cfg = load_config(p.string());
    cfg.output_dir = out.string();
    const RunResult res = run(cfg);
    CHECK(res.status == 0);

    const std::string manifest = slurp(out / "manifest.json");
    for (const std::string& name : res.outputs) {
        CHECK(fs::exists(out / name));
        if (name != "manifest.json")
            CHECK(manifest.find(name) != std::string::npos);
    }
    // no stray temp files left behind
    for (const auto& entry : fs::directory_iterator(out))
        CHECK(entry.path().extension() != ".tmp");
    CHECK(manifest.find("config_hash") != std::string::npos);
    CHECK(manifest.find("\"seed\": 11") != std::string::npos);
}

TEST_CASE("dupire kind requires a call-surface source") {
    const fs::path p = write_config("dup_bad.json", R"({
      "kind": "dupire",
      "vol": {"type": "constant", "sigma": 0.2, "horizon": 1.0}
    })");
    CHECK_THROWS_AS(load_config(p.string()), validation_error);
}

TEST_CASE("dupire pipeline over a CSV surface") {
    // quadratic-in-K, linear-in-t prices: node-exact extraction
    std::ostringstream csv;
    csv << "t,k,value\n";
    const double c0 = 0.5, c1 = 0.02;
    for (double t : {0.2, 0.4, 0.6})
        for (double k : {0.8, 0.9, 1.0, 1.1, 1.2})
            csv << t << ',' << k << ',' << (c0 + c1 * t) * k * k - 0.6 * k + 1.0 << '\n';
    const fs::path surf = scratch_dir() / "calls.csv";
    std::ofstream(surf, std::ios::trunc) << csv.str();

    const fs::path p = write_config("dup.json", std::string(R"({
      "kind": "dupire",
      "vol": {"type": "call-surface", "path": ")") + surf.string() + R"(",
              "sigma0": 0.01, "sigma1": 2.0}
    })");
    const fs::path out = scratch_dir() / "dup_out";
    fs::remove_all(out);
    CHECK(run_cli("dupire --config " + p.string() + " --out " + out.string()) == 0);
    CHECK(fs::exists(out / "local_vol.csv"));
    CHECK(fs::exists(out / "flags.json"));
}
