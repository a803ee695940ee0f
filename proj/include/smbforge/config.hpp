#ifndef SMBFORGE_CONFIG_HPP
#define SMBFORGE_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "smbforge/batch.hpp"
#include "smbforge/core.hpp"
#include "smbforge/network.hpp"
#include "smbforge/solver.hpp"

namespace smbforge {

struct CssSettings {
    double e_t = 1e-5;
    int k_max = 200;
};

struct OptimizeSettings {
    std::string problem;  // "toy-gaussian" or "batch"
    std::vector<double> lo, hi;
    std::vector<double> eps;
    std::vector<double> sigma_schedule{1.0, 10.0, 100.0, 1000.0, 10000.0};
    int n_samples = 0;
    double burn_in = 0.5;
    std::uint64_t seed = 0;
};

struct PredictiveSettings {
    std::string chain;  // path to a chain CSV written by optimize mode
    int draws = 0;
    std::uint64_t seed = 0;
};

struct RunConfig {
    std::string mode;
    SystemConfig system;
    SolverSettings solver;
    // batch blocks
    std::optional<BatchProtocol> protocol;
    int pool_target = 0;       // component index of the pooled product
    double pool_mu = 7.5e-5;   // impurity threshold
    // smb blocks
    std::optional<ProcessScheme> scheme;
    CssSettings css;
    // optimize / predictive-check blocks
    std::optional<OptimizeSettings> optimize;
    std::optional<PredictiveSettings> predictive;
    std::string out_dir = "out";
    nlohmann::json resolved;  // fully defaulted echo of the parsed config
};

namespace cfgdetail {

using nlohmann::json;

[[noreturn]] inline void fail(const std::string& ctx, const std::string& msg) {
    throw ConfigError("config: " + ctx + ": " + msg);
}

inline void check_keys(const json& j, const std::string& ctx, const std::set<std::string>& allowed) {
    if (!j.is_object()) fail(ctx, "expected an object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) fail(ctx, "unknown key '" + k + "'");
}

inline const json& need(const json& j, const std::string& ctx, const std::string& key) {
    auto it = j.find(key);
    if (it == j.end()) fail(ctx, "missing required key '" + key + "'");
    return *it;
}

inline double num(const json& j, const std::string& ctx, const std::string& key) {
    const json& v = need(j, ctx, key);
    if (!v.is_number()) fail(ctx, "'" + key + "' must be a number");
    return v.get<double>();
}

inline double num_or(const json& j, const std::string& ctx, const std::string& key, double def) {
    if (!j.contains(key)) return def;
    return num(j, ctx, key);
}

inline std::vector<double> num_list(const json& j, const std::string& ctx, const std::string& key) {
    const json& v = need(j, ctx, key);
    if (!v.is_array()) fail(ctx, "'" + key + "' must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) fail(ctx, "'" + key + "' must be an array of numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

inline std::string str(const json& j, const std::string& ctx, const std::string& key) {
    const json& v = need(j, ctx, key);
    if (!v.is_string()) fail(ctx, "'" + key + "' must be a string");
    return v.get<std::string>();
}

// A top-level block may be inlined or be a string path to a JSON file holding
// the block, resolved relative to the including config's directory.
inline json load_block(const json& v, const std::filesystem::path& base, const std::string& ctx) {
    if (v.is_string()) {
        const std::filesystem::path p = base / v.get<std::string>();
        std::ifstream in(p);
        if (!in) fail(ctx, "cannot open referenced file " + p.string());
        json out;
        try {
            in >> out;
        } catch (const json::parse_error& e) {
            fail(ctx, "parse error in " + p.string() + ": " + e.what());
        }
        return out;
    }
    return v;
}

inline SystemConfig parse_system(const json& j) {
    check_keys(j, "system", {"components", "geometry", "transport", "binding"});
    const json& jc = need(j, "system", "components");
    if (!jc.is_array() || jc.size() < 2) fail("system", "'components' needs salt plus proteins");
    ComponentSet comps;
    for (const auto& e : jc) comps.names.push_back(e.get<std::string>());

    const json& jg = need(j, "system", "geometry");
    check_keys(jg, "system.geometry",
               {"length", "diameter", "particle_diameter", "column_porosity",
                "particle_porosity"});
    ColumnGeometry geom{num(jg, "geometry", "length"), num(jg, "geometry", "diameter"),
                        num(jg, "geometry", "particle_diameter"),
                        num(jg, "geometry", "column_porosity"),
                        num(jg, "geometry", "particle_porosity")};

    const json& jt = need(j, "system", "transport");
    check_keys(jt, "system.transport", {"axial_dispersion", "pore_diffusion", "film_transfer"});
    TransportParams trans{num(jt, "transport", "axial_dispersion"),
                          num_list(jt, "transport", "pore_diffusion"),
                          num_list(jt, "transport", "film_transfer")};

    const json& jb = need(j, "system", "binding");
    check_keys(jb, "system.binding", {"ionic_capacity", "k_a", "k_d", "nu", "sigma"});
    SMABinding bind{num(jb, "binding", "ionic_capacity"), num_list(jb, "binding", "k_a"),
                    num_list(jb, "binding", "k_d"), num_list(jb, "binding", "nu"),
                    num_list(jb, "binding", "sigma")};
    return validate_system(geom, trans, bind, comps);
}

inline SolverSettings parse_solver(const json& j) {
    SolverSettings s;
    if (j.is_null()) return s;
    check_keys(j, "solver", {"nz", "nr", "abstol", "reltol", "h0", "hmax"});
    s.nz = static_cast<int>(num_or(j, "solver", "nz", s.nz));
    s.nr = static_cast<int>(num_or(j, "solver", "nr", s.nr));
    s.abstol = num_or(j, "solver", "abstol", s.abstol);
    s.reltol = num_or(j, "solver", "reltol", s.reltol);
    s.h0 = num_or(j, "solver", "h0", s.h0);
    s.hmax = num_or(j, "solver", "hmax", s.hmax);
    return s;
}

inline int component_index(const SystemConfig& sys, const json& v, const std::string& ctx) {
    if (v.is_number_integer()) {
        const int i = v.get<int>();
        if (i < 1 || i >= sys.ncomp()) fail(ctx, "component index out of range");
        return i;
    }
    if (v.is_string()) {
        const std::string name = v.get<std::string>();
        for (int i = 1; i < sys.ncomp(); ++i)
            if (sys.components.names[static_cast<std::size_t>(i)] == name) return i;
        fail(ctx, "unknown component '" + name + "'");
    }
    fail(ctx, "component must be a protein name or index");
}

inline BatchProtocol parse_protocol(const json& j, const SystemConfig& sys, int& target,
                                    double& mu) {
    check_keys(j, "protocol",
               {"interstitial_velocity", "feed", "load_salt", "t_load", "t_wash", "dt1", "dt2",
                "m1", "m2", "c_init0", "t_hold", "pool"});
    BatchProtocol p;
    p.u_int = num_or(j, "protocol", "interstitial_velocity", p.u_int);
    p.feed = num_list(j, "protocol", "feed");
    if (static_cast<int>(p.feed.size()) != sys.proteins())
        fail("protocol", "'feed' length must equal the protein count");
    p.load_salt = num_or(j, "protocol", "load_salt", p.load_salt);
    p.t_load = num_or(j, "protocol", "t_load", p.t_load);
    p.t_wash = num_or(j, "protocol", "t_wash", p.t_wash);
    p.dt1 = num(j, "protocol", "dt1");
    p.dt2 = num(j, "protocol", "dt2");
    p.m1 = num(j, "protocol", "m1");
    p.m2 = num(j, "protocol", "m2");
    p.c_init0 = num(j, "protocol", "c_init0");
    p.t_hold = num_or(j, "protocol", "t_hold", p.t_hold);
    const json& jp = need(j, "protocol", "pool");
    check_keys(jp, "protocol.pool", {"target", "mu"});
    target = component_index(sys, need(jp, "protocol.pool", "target"), "protocol.pool.target");
    mu = num(jp, "protocol.pool", "mu");
    return p;
}

inline FourZoneUnit parse_four_zone_unit(const json& j, const std::string& ctx,
                                         const std::vector<double>& feed_proteins,
                                         bool with_feed) {
    check_keys(j, ctx,
               {"zone_columns", "q_zone1", "q_feed", "q_raffinate", "q_desorbent", "q_extract",
                "salt_feed", "salt_desorbent"});
    FourZoneUnit u;
    if (j.contains("zone_columns")) {
        auto zc = num_list(j, ctx, "zone_columns");
        u.zone_cols.assign(zc.size(), 0);
        for (std::size_t i = 0; i < zc.size(); ++i) u.zone_cols[i] = static_cast<int>(zc[i]);
    }
    u.q_zone1 = num(j, ctx, "q_zone1");
    u.q_feed = num(j, ctx, "q_feed");
    u.q_raf = num(j, ctx, "q_raffinate");
    u.q_des = num(j, ctx, "q_desorbent");
    u.q_ext = num(j, ctx, "q_extract");
    u.salt_feed = num(j, ctx, "salt_feed");
    u.salt_des = num(j, ctx, "salt_desorbent");
    if (with_feed) u.feed_proteins = feed_proteins;
    return u;
}

inline ProcessScheme parse_scheme(const json& j, const SystemConfig& sys, CssSettings& css) {
    check_keys(j, "scheme",
               {"kind", "t_s", "buffer_salt", "feed_proteins", "unit1", "unit2",
                "columns_per_zone", "q_zone1", "q_feed1", "q_raffinate1", "q_desorbent1",
                "q_extract1", "q_feed2", "q_desorbent2", "q_extract2", "salt_feed1",
                "salt_desorbent1", "salt_feed2", "salt_desorbent2", "css"});
    const std::string kind = str(j, "scheme", "kind");
    const double t_s = num(j, "scheme", "t_s");
    const double buffer_salt = num_or(j, "scheme", "buffer_salt", 0.0);
    auto feed = num_list(j, "scheme", "feed_proteins");
    if (static_cast<int>(feed.size()) != sys.proteins())
        fail("scheme", "'feed_proteins' length must equal the protein count");
    if (j.contains("css")) {
        const json& jc = j.at("css");
        check_keys(jc, "scheme.css", {"e_t", "k_max"});
        css.e_t = num_or(jc, "scheme.css", "e_t", css.e_t);
        css.k_max = static_cast<int>(num_or(jc, "scheme.css", "k_max", css.k_max));
    }
    if (kind == "four-zone") {
        auto u = parse_four_zone_unit(need(j, "scheme", "unit1"), "scheme.unit1", feed, true);
        return build_four_zone(u, sys, t_s);
    }
    if (kind == "cascade") {
        auto u1 = parse_four_zone_unit(need(j, "scheme", "unit1"), "scheme.unit1", feed, true);
        auto u2 = parse_four_zone_unit(need(j, "scheme", "unit2"), "scheme.unit2", feed, false);
        return build_cascade(u1, u2, sys, t_s, buffer_salt);
    }
    if (kind == "eight-zone") {
        EightZoneSpecs u;
        u.cols_per_zone = static_cast<int>(num_or(j, "scheme", "columns_per_zone", 3.0));
        u.q_zone1 = num(j, "scheme", "q_zone1");
        u.q_feed1 = num(j, "scheme", "q_feed1");
        u.q_raf1 = num(j, "scheme", "q_raffinate1");
        u.q_des1 = num(j, "scheme", "q_desorbent1");
        u.q_ext1 = num(j, "scheme", "q_extract1");
        u.q_feed2 = num(j, "scheme", "q_feed2");
        u.q_des2 = num(j, "scheme", "q_desorbent2");
        u.q_ext2 = num(j, "scheme", "q_extract2");
        u.salt_feed1 = num(j, "scheme", "salt_feed1");
        u.salt_des1 = num(j, "scheme", "salt_desorbent1");
        u.salt_feed2 = num(j, "scheme", "salt_feed2");
        u.salt_des2 = num(j, "scheme", "salt_desorbent2");
        u.feed_proteins = feed;
        return build_eight_zone(u, sys, t_s, buffer_salt);
    }
    fail("scheme", "unknown kind '" + kind + "' (four-zone, cascade, eight-zone)");
}

inline OptimizeSettings parse_optimize(const json& j) {
    check_keys(j, "optimization",
               {"problem", "bounds", "eps", "sigma_schedule", "n_samples", "burn_in", "seed"});
    OptimizeSettings o;
    o.problem = str(j, "optimization", "problem");
    if (o.problem != "toy-gaussian" && o.problem != "batch")
        fail("optimization", "problem must be 'toy-gaussian' or 'batch'");
    const json& jb = need(j, "optimization", "bounds");
    check_keys(jb, "optimization.bounds", {"lo", "hi"});
    o.lo = num_list(jb, "optimization.bounds", "lo");
    o.hi = num_list(jb, "optimization.bounds", "hi");
    if (j.contains("eps")) o.eps = num_list(j, "optimization", "eps");
    if (j.contains("sigma_schedule")) o.sigma_schedule = num_list(j, "optimization", "sigma_schedule");
    o.n_samples = static_cast<int>(num(j, "optimization", "n_samples"));
    o.burn_in = num_or(j, "optimization", "burn_in", o.burn_in);
    o.seed = static_cast<std::uint64_t>(num_or(j, "optimization", "seed", 0.0));
    return o;
}

inline PredictiveSettings parse_predictive(const json& j) {
    check_keys(j, "predictive", {"chain", "draws", "seed"});
    PredictiveSettings p;
    p.chain = str(j, "predictive", "chain");
    p.draws = static_cast<int>(num(j, "predictive", "draws"));
    if (p.draws < 0) fail("predictive", "'draws' must be >= 0");
    p.seed = static_cast<std::uint64_t>(num_or(j, "predictive", "seed", 0.0));
    return p;
}

}  // namespace cfgdetail

inline RunConfig parse_config(const std::filesystem::path& path) {
    using cfgdetail::fail;
    using nlohmann::json;
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config: parse error in " + path.string() + ": " + e.what());
    }
    cfgdetail::check_keys(j, "top level",
                          {"schema", "mode", "system", "solver", "protocol", "scheme",
                           "optimization", "predictive", "out_dir"});
    const int schema = static_cast<int>(cfgdetail::num(j, "top level", "schema"));
    if (schema != 1) fail("top level", "unsupported schema version " + std::to_string(schema));

    RunConfig cfg;
    cfg.mode = cfgdetail::str(j, "top level", "mode");
    const std::set<std::string> modes{"simulate-batch", "simulate-smb", "optimize",
                                      "predictive-check"};
    if (!modes.count(cfg.mode)) fail("top level", "unknown mode '" + cfg.mode + "'");

    const std::filesystem::path base = path.parent_path();
    json jsys = cfgdetail::load_block(cfgdetail::need(j, "top level", "system"), base, "system");
    cfg.system = cfgdetail::parse_system(jsys);
    json jsolver = j.contains("solver")
                       ? cfgdetail::load_block(j.at("solver"), base, "solver")
                       : json();
    cfg.solver = cfgdetail::parse_solver(jsolver);
    if (j.contains("out_dir")) cfg.out_dir = cfgdetail::str(j, "top level", "out_dir");

    const bool needs_protocol =
        cfg.mode == "simulate-batch" ||
        ((cfg.mode == "optimize" || cfg.mode == "predictive-check") && j.contains("protocol"));
    json jproto, jscheme, jopt, jpred;
    if (cfg.mode == "simulate-batch" || j.contains("protocol")) {
        if (!j.contains("protocol")) fail("top level", "mode requires a 'protocol' block");
        jproto = cfgdetail::load_block(j.at("protocol"), base, "protocol");
        cfg.protocol = cfgdetail::parse_protocol(jproto, cfg.system, cfg.pool_target,
                                                 cfg.pool_mu);
    }
    if (cfg.mode == "simulate-smb" || j.contains("scheme")) {
        if (!j.contains("scheme")) fail("top level", "mode requires a 'scheme' block");
        jscheme = cfgdetail::load_block(j.at("scheme"), base, "scheme");
        cfg.scheme = cfgdetail::parse_scheme(jscheme, cfg.system, cfg.css);
    }
    if (cfg.mode == "optimize" || j.contains("optimization")) {
        if (!j.contains("optimization")) fail("top level", "mode requires an 'optimization' block");
        jopt = cfgdetail::load_block(j.at("optimization"), base, "optimization");
        cfg.optimize = cfgdetail::parse_optimize(jopt);
        if (cfg.optimize->problem == "batch" && !cfg.protocol)
            fail("optimization", "the batch problem needs a 'protocol' block as its baseline");
    }
    if (cfg.mode == "predictive-check" || j.contains("predictive")) {
        if (!j.contains("predictive")) fail("top level", "mode requires a 'predictive' block");
        jpred = cfgdetail::load_block(j.at("predictive"), base, "predictive");
        cfg.predictive = cfgdetail::parse_predictive(jpred);
        if (!cfg.protocol)
            fail("predictive", "predictive-check needs a 'protocol' block as its baseline");
    }
    if (needs_protocol && !cfg.protocol) fail("top level", "mode requires a 'protocol' block");

    // resolved echo: inline all referenced blocks and fill every default
    json r;
    r["schema"] = 1;
    r["mode"] = cfg.mode;
    r["out_dir"] = cfg.out_dir;
    r["system"] = jsys;
    r["solver"] = {{"nz", cfg.solver.nz},       {"nr", cfg.solver.nr},
                   {"abstol", cfg.solver.abstol}, {"reltol", cfg.solver.reltol},
                   {"h0", cfg.solver.h0},       {"hmax", cfg.solver.hmax}};
    if (cfg.protocol) {
        const BatchProtocol& p = *cfg.protocol;
        r["protocol"] = {{"interstitial_velocity", p.u_int},
                         {"feed", p.feed},
                         {"load_salt", p.load_salt},
                         {"t_load", p.t_load},
                         {"t_wash", p.t_wash},
                         {"dt1", p.dt1},
                         {"dt2", p.dt2},
                         {"m1", p.m1},
                         {"m2", p.m2},
                         {"c_init0", p.c_init0},
                         {"t_hold", p.t_hold},
                         {"pool", {{"target", cfg.pool_target}, {"mu", cfg.pool_mu}}}};
    }
    if (cfg.scheme) {
        jscheme["buffer_salt"] = cfg.scheme->buffer_salt;
        jscheme["css"] = {{"e_t", cfg.css.e_t}, {"k_max", cfg.css.k_max}};
        r["scheme"] = jscheme;
    }
    if (cfg.optimize) {
        const OptimizeSettings& o = *cfg.optimize;
        r["optimization"] = {{"problem", o.problem},
                             {"bounds", {{"lo", o.lo}, {"hi", o.hi}}},
                             {"eps", o.eps},
                             {"sigma_schedule", o.sigma_schedule},
                             {"n_samples", o.n_samples},
                             {"burn_in", o.burn_in},
                             {"seed", o.seed}};
    }
    if (cfg.predictive) {
        r["predictive"] = {{"chain", cfg.predictive->chain},
                           {"draws", cfg.predictive->draws},
                           {"seed", cfg.predictive->seed}};
    }
    cfg.resolved = std::move(r);
    return cfg;
}

}  // namespace smbforge

#endif
