// End-to-end checks of the command-line front end and the run-configuration
// parser: schema validation, resolved-config echo, output files, exit codes,
// and byte-level determinism of the CSV outputs.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "smbforge/config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using smbforge::ConfigError;

namespace {

const std::string& cli_path() {
    static const std::string p = [] {
        const char* v = std::getenv("SMBFORGE_CLI");
        return std::string(v ? v : "");
    }();
    return p;
}

fs::path fresh_dir(const std::string& name) {
    fs::path d = fs::temp_directory_path() / "smbforge_cli_tests" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args, const fs::path& log) {
    REQUIRE(!cli_path().empty());
    const std::string cmd = cli_path() + " " + args + " >" + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -2;
}

json system_block() {
    return json{
        {"components", {"salt", "RNase", "cyt", "lyz"}},
        {"geometry",
         {{"length", 1.4e-2},
          {"diameter", 1.0e-2},
          {"particle_diameter", 9.0e-5},
          {"column_porosity", 0.37},
          {"particle_porosity", 0.75}}},
        {"transport",
         {{"axial_dispersion", 5.75e-8},
          {"pore_diffusion", {6.07e-11, 6.07e-11, 6.07e-11}},
          {"film_transfer", {6.9e-6, 6.9e-6, 6.9e-6}}}},
        {"binding",
         {{"ionic_capacity", 1200.0},
          {"k_a", {7.70, 1.59, 35.5}},
          {"k_d", {1000.0, 1000.0, 1000.0}},
          {"nu", {3.70, 5.29, 4.70}},
          {"sigma", {10.0, 10.6, 11.83}}}}};
}

// A deliberately small, fast batch run: coarse grid, short gradient, and a
// high starting salt so everything elutes within a few residence times.
json tiny_batch_config() {
    return json{{"schema", 1},
                {"mode", "simulate-batch"},
                {"system", system_block()},
                {"solver", {{"nz", 8}, {"nr", 3}}},
                {"protocol",
                 {{"interstitial_velocity", 5.75e-4},
                  {"feed", {0.1, 0.1, 0.1}},
                  {"load_salt", 50.0},
                  {"t_load", 5.0},
                  {"t_wash", 10.0},
                  {"dt1", 50.0},
                  {"dt2", 50.0},
                  {"m1", 2.0},
                  {"m2", 2.0},
                  {"c_init0", 250.0},
                  {"pool", {{"target", "cyt"}, {"mu", 7.5e-5}}}}}};
}

json toy_optimize_config() {
    return json{{"schema", 1},
                {"mode", "optimize"},
                {"system", system_block()},
                {"optimization",
                 {{"problem", "toy-gaussian"},
                  {"bounds", {{"lo", {-6.0, -6.0}}, {"hi", {6.0, 6.0}}}},
                  {"n_samples", 2000},
                  {"seed", 42}}}};
}

fs::path write_config(const fs::path& dir, const json& j) {
    const fs::path p = dir / "config.json";
    write_file(p, j.dump(1));
    return p;
}

}  // namespace

TEST_CASE("config parser fills defaults and echoes a resolved config") {
    const fs::path dir = fresh_dir("parse_defaults");
    auto cfg = smbforge::parse_config(write_config(dir, tiny_batch_config()));
    CHECK(cfg.mode == "simulate-batch");
    CHECK(cfg.solver.nz == 8);
    CHECK(cfg.solver.nr == 3);
    CHECK(cfg.solver.reltol > 0.0);
    CHECK(cfg.pool_target == 2);
    CHECK(cfg.pool_mu == 7.5e-5);
    // the echo must re-parse to the same settings and carry every default
    REQUIRE(cfg.resolved.contains("solver"));
    CHECK(cfg.resolved["solver"]["abstol"].get<double>() == cfg.solver.abstol);
    CHECK(cfg.resolved["solver"]["hmax"].get<double>() == cfg.solver.hmax);
    CHECK(cfg.resolved["protocol"]["t_hold"].get<double>() == cfg.protocol->t_hold);
}

TEST_CASE("config parser rejects malformed input") {
    const fs::path dir = fresh_dir("parse_reject");

    SECTION("unknown top-level key") {
        json j = tiny_batch_config();
        j["extra"] = 1;
        CHECK_THROWS_AS(smbforge::parse_config(write_config(dir, j)), ConfigError);
    }
    SECTION("unknown nested key") {
        json j = tiny_batch_config();
        j["protocol"]["ramp_rate"] = 1.0;
        CHECK_THROWS_AS(smbforge::parse_config(write_config(dir, j)), ConfigError);
    }
    SECTION("unsupported schema version") {
        json j = tiny_batch_config();
        j["schema"] = 2;
        CHECK_THROWS_AS(smbforge::parse_config(write_config(dir, j)), ConfigError);
    }
    SECTION("unknown mode") {
        json j = tiny_batch_config();
        j["mode"] = "simulate-everything";
        CHECK_THROWS_AS(smbforge::parse_config(write_config(dir, j)), ConfigError);
    }
    SECTION("missing required block") {
        json j = tiny_batch_config();
        j.erase("protocol");
        CHECK_THROWS_AS(smbforge::parse_config(write_config(dir, j)), ConfigError);
    }
    SECTION("unknown pool component") {
        json j = tiny_batch_config();
        j["protocol"]["pool"]["target"] = "albumin";
        CHECK_THROWS_AS(smbforge::parse_config(write_config(dir, j)), ConfigError);
    }
    SECTION("feed length mismatch") {
        json j = tiny_batch_config();
        j["protocol"]["feed"] = {0.1, 0.1};
        CHECK_THROWS_AS(smbforge::parse_config(write_config(dir, j)), ConfigError);
    }
    SECTION("missing referenced block file") {
        json j = tiny_batch_config();
        j["system"] = "no_such_system.json";
        CHECK_THROWS_AS(smbforge::parse_config(write_config(dir, j)), ConfigError);
    }
}

TEST_CASE("config blocks may be referenced as external files") {
    const fs::path dir = fresh_dir("parse_ref");
    write_file(dir / "sys.json", system_block().dump(1));
    json j = tiny_batch_config();
    j["system"] = "sys.json";
    auto cfg = smbforge::parse_config(write_config(dir, j));
    CHECK(cfg.system.ncomp() == 4);
    // the resolved echo inlines the referenced block
    CHECK(cfg.resolved["system"].is_object());
}

TEST_CASE("simulate-batch writes its outputs and the resolved config") {
    const fs::path dir = fresh_dir("cli_batch");
    const fs::path cfg = write_config(dir, tiny_batch_config());
    const int rc = run_cli("simulate-batch --config " + cfg.string() + " --out " +
                               (dir / "out").string(),
                           dir / "log.txt");
    INFO(read_file(dir / "log.txt"));
    REQUIRE(rc == 0);
    for (const char* f :
         {"chromatogram.csv", "indicators.csv", "pool.csv", "resolved_config.json",
          "manifest.json"})
        CHECK(fs::exists(dir / "out" / f));

    const json resolved = json::parse(read_file(dir / "out" / "resolved_config.json"));
    CHECK(resolved["mode"] == "simulate-batch");
    CHECK(resolved["solver"]["nz"].get<int>() == 8);

    const json manifest = json::parse(read_file(dir / "out" / "manifest.json"));
    CHECK(manifest["mode"] == "simulate-batch");
    CHECK(manifest["wall_time_s"].get<double>() > 0.0);

    // chromatogram has a header plus at least the programmed protocol span
    std::istringstream ss(read_file(dir / "out" / "chromatogram.csv"));
    std::string line;
    REQUIRE(std::getline(ss, line));
    CHECK(line == "time_s,salt_mol_m3,RNase_mol_m3,cyt_mol_m3,lyz_mol_m3");
    int rows = 0;
    while (std::getline(ss, line)) ++rows;
    CHECK(rows >= 115);
}

TEST_CASE("CLI rejects a bad config and a mode mismatch") {
    const fs::path dir = fresh_dir("cli_reject");

    json bad = tiny_batch_config();
    bad["surprise"] = true;
    const fs::path bad_cfg = dir / "bad.json";
    write_file(bad_cfg, bad.dump(1));
    CHECK(run_cli("simulate-batch --config " + bad_cfg.string() + " --out " +
                      (dir / "o1").string(),
                  dir / "log1.txt") == 1);
    CHECK(read_file(dir / "log1.txt").find("unknown key") != std::string::npos);

    const fs::path good_cfg = write_config(dir, tiny_batch_config());
    CHECK(run_cli("simulate-smb --config " + good_cfg.string() + " --out " +
                      (dir / "o2").string(),
                  dir / "log2.txt") == 1);

    CHECK(run_cli("simulate-batch --config " + (dir / "missing.json").string() + " --out " +
                      (dir / "o3").string(),
                  dir / "log3.txt") == 1);
}

TEST_CASE("reruns with identical config and seed are byte-identical") {
    const fs::path dir = fresh_dir("cli_determinism");

    SECTION("simulate-batch chromatogram") {
        const fs::path cfg = write_config(dir, tiny_batch_config());
        for (const char* out : {"a", "b"})
            REQUIRE(run_cli("simulate-batch --config " + cfg.string() + " --out " +
                                (dir / out).string(),
                            dir / "log.txt") == 0);
        const std::string a = read_file(dir / "a" / "chromatogram.csv");
        CHECK(a == read_file(dir / "b" / "chromatogram.csv"));
        CHECK(a.size() > 1000);
        CHECK(read_file(dir / "a" / "indicators.csv") ==
              read_file(dir / "b" / "indicators.csv"));
    }
    SECTION("optimize chain under an explicit seed") {
        const fs::path cfg = write_config(dir, toy_optimize_config());
        for (const char* out : {"s1", "s2", "s3"}) {
            const std::string seed = (std::string(out) == "s3") ? "7" : "11";
            REQUIRE(run_cli("optimize --config " + cfg.string() + " --seed " + seed + " --out " +
                                (dir / out).string(),
                            dir / "log.txt") == 0);
        }
        const std::string s1 = read_file(dir / "s1" / "chain.csv");
        CHECK(s1 == read_file(dir / "s2" / "chain.csv"));
        CHECK(s1 != read_file(dir / "s3" / "chain.csv"));
    }
}
