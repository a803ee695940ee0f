// smbforge command-line front end: parse a run configuration, dispatch the
// requested mode, and write plot-ready CSV outputs plus a JSON manifest.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "smbforge/batch.hpp"
#include "smbforge/config.hpp"
#include "smbforge/csv.hpp"
#include "smbforge/network.hpp"
#include "smbforge/optimizer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace smbforge;

namespace {

struct RunContext {
    RunConfig cfg;
    fs::path out;
    std::optional<std::uint64_t> seed_override;
    int threads = 1;
    std::vector<std::string> outputs;
};

std::uint64_t effective_seed(const RunContext& ctx, std::uint64_t from_config) {
    return ctx.seed_override ? *ctx.seed_override : from_config;
}

fs::path out_file(RunContext& ctx, const std::string& name) {
    ctx.outputs.push_back(name);
    return ctx.out / name;
}

void write_indicators_csv(const fs::path& path, const SystemConfig& sys,
                          const std::vector<PerformanceRecord>& records) {
    CsvWriter w(path.string());
    w.row({"node", "component", "purity", "yield", "productivity_mol_m3_s"});
    for (const auto& r : records)
        for (std::size_t i = 0; i < r.purity.size(); ++i)
            w.row() << r.node << sys.components.names[i + 1] << r.purity[i] << r.yield[i]
                    << r.productivity[i];
}

void write_chromatogram_csv(const fs::path& path, const SystemConfig& sys,
                            const OutletRecord& rec) {
    CsvWriter w(path.string());
    {
        auto row = w.row();
        row << "time_s";
        for (const auto& n : sys.components.names) row << (n + "_mol_m3");
    }
    for (int k = 0; k < rec.samples(); ++k) {
        auto row = w.row();
        row << rec.time(k);
        for (int i = 0; i < rec.ncomp; ++i) row << rec.at(k, i);
    }
}

int run_simulate_batch(RunContext& ctx) {
    const RunConfig& cfg = ctx.cfg;
    auto res = evaluate_batch(*cfg.protocol, cfg.system, cfg.solver, cfg.pool_target,
                              cfg.pool_mu);
    write_chromatogram_csv(out_file(ctx, "chromatogram.csv"), cfg.system, res.chromatogram);
    write_indicators_csv(out_file(ctx, "indicators.csv"), cfg.system, {res.indicators});
    {
        CsvWriter w(out_file(ctx, "pool.csv").string());
        w.row({"t_start_s", "t_end_s", "mu"});
        if (res.pool) w.row() << res.pool->t_start << res.pool->t_end << res.pool->threshold;
    }
    if (!res.pool)
        std::cerr << "warning: no pooling window satisfies mu = " << cfg.pool_mu << "\n";
    return 0;
}

int run_simulate_smb(RunContext& ctx) {
    const RunConfig& cfg = ctx.cfg;
    const ProcessScheme& scheme = *cfg.scheme;
    auto st = initialize_smb(scheme, cfg.system, cfg.solver);

    CsvWriter wd(out_file(ctx, "withdrawals.csv").string());
    wd.row({"switch", "time_s", "node", "component", "conc_mol_m3"});
    CsvWriter trace(out_file(ctx, "css_trace.csv").string());
    trace.row({"switch", "distance"});

    std::map<std::string, OutletRecord> prev;
    bool converged = false;
    double dist = 0.0;
    for (int k = 0; k < cfg.css.k_max && !converged; ++k) {
        advance_switch(st, scheme, cfg.system, cfg.solver);
        for (const auto& [name, rec] : st.withdrawals)
            for (int s = 0; s < rec.samples(); ++s)
                for (int i = 0; i < rec.ncomp; ++i)
                    wd.row() << st.switches << rec.time(s) << name
                             << cfg.system.components.names[static_cast<std::size_t>(i)]
                             << rec.at(s, i);
        if (!prev.empty()) {
            dist = css_distance(prev, st.withdrawals);
            trace.row() << st.switches << dist;
            converged = dist <= cfg.css.e_t;
        }
        prev = st.withdrawals;
    }
    write_indicators_csv(out_file(ctx, "indicators.csv"), cfg.system,
                         smb_indicators(st, scheme, cfg.system));
    if (!converged)
        std::cerr << "warning: cyclic steady state not reached in " << st.switches
                  << " switches (last distance " << dist << ")\n";
    return 0;
}

// theta = {dt1, dt2, m1, m2, c_init0} over the baseline protocol
Evaluation evaluate_batch_theta(const RunConfig& cfg, const std::vector<double>& th) {
    BatchProtocol p = *cfg.protocol;
    p.dt1 = th.at(0);
    p.dt2 = th.at(1);
    p.m1 = th.at(2);
    p.m2 = th.at(3);
    p.c_init0 = th.at(4);
    auto res = evaluate_batch(p, cfg.system, cfg.solver, cfg.pool_target, cfg.pool_mu);
    Evaluation e;
    const std::size_t t = static_cast<std::size_t>(cfg.pool_target) - 1;
    e.purity = {res.indicators.purity[t]};
    e.yield = res.indicators.yield[t];
    e.failed = !res.pool.has_value();
    return e;
}

int run_optimize(RunContext& ctx) {
    const RunConfig& cfg = ctx.cfg;
    const OptimizeSettings& opt = *cfg.optimize;
    OptimizationProblem problem;
    problem.lo = opt.lo;
    problem.hi = opt.hi;
    problem.eps = opt.eps;
    problem.sigma_schedule = opt.sigma_schedule;
    if (opt.problem == "toy-gaussian") {
        problem.evaluate = [](const std::vector<double>& th) {
            Evaluation e;
            double s = 0.0;
            for (double v : th) s += v * v;
            e.yield = -s;
            return e;
        };
    } else {
        if (problem.lo.size() != 5)
            throw ConfigError("batch optimization needs 5 bounds: dt1, dt2, m1, m2, c_init0");
        problem.evaluate = [&cfg](const std::vector<double>& th) {
            return evaluate_batch_theta(cfg, th);
        };
    }
    auto res = mcmc_sample(problem, effective_seed(ctx, opt.seed), opt.n_samples, opt.burn_in);

    const int d = static_cast<int>(opt.lo.size());
    {
        CsvWriter w(out_file(ctx, "chain.csv").string());
        {
            auto hdr = w.row();
            hdr << "iter" << "accepted";
            for (int i = 0; i < d; ++i) hdr << ("theta_" + std::to_string(i));
            hdr << "H" << "logL" << "purity" << "yield" << "css_switches";
        }
        for (const auto& s : res.evaluations) {
            auto row = w.row();
            row << s.iter << (s.accepted ? 1 : 0);
            for (double v : s.theta) row << v;
            row << s.objective << s.log_l << (s.purity.empty() ? 0.0 : s.purity[0]) << s.yield
                << s.css_switches;
        }
    }
    {
        // Pareto front over all post-burn-in evaluations
        std::vector<std::pair<double, double>> pts;
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < res.evaluations.size(); ++i) {
            const auto& s = res.evaluations[i];
            if (static_cast<std::size_t>(s.iter) < res.burn_in || !std::isfinite(s.objective))
                continue;
            pts.emplace_back(s.purity.empty() ? 0.0 : s.purity[0], s.yield);
            idx.push_back(i);
        }
        auto front = pareto_front(pts);
        CsvWriter w(out_file(ctx, "pareto.csv").string());
        {
            auto hdr = w.row();
            hdr << "purity" << "yield";
            for (int i = 0; i < d; ++i) hdr << ("theta_" + std::to_string(i));
        }
        for (std::size_t f : front) {
            const auto& s = res.evaluations[idx[f]];
            auto row = w.row();
            row << pts[f].first << pts[f].second;
            for (double v : s.theta) row << v;
        }
    }
    std::cout << "acceptance rate " << res.acceptance_rate << "\n";
    return 0;
}

int run_predictive_check(RunContext& ctx) {
    const RunConfig& cfg = ctx.cfg;
    const PredictiveSettings& pred = *cfg.predictive;
    if (pred.draws == 0) return 0;  // manifest only

    const fs::path chain_path = pred.chain;
    CsvTable chain = read_csv(chain_path.string());
    const int c_iter = chain.column("iter");
    std::vector<std::vector<double>> thetas;
    for (const auto& row : chain.rows) {
        // use the accepted-state history past the midpoint as the posterior
        if (std::stol(row[static_cast<std::size_t>(c_iter)]) * 2 <
            static_cast<long>(chain.rows.empty() ? 0 : std::stol(chain.rows.back()[0])))
            continue;
        std::vector<double> th(5);
        for (int i = 0; i < 5; ++i)
            th[static_cast<std::size_t>(i)] =
                std::stod(row[static_cast<std::size_t>(chain.column("theta_" + std::to_string(i)))]);
        thetas.push_back(std::move(th));
    }
    if (thetas.empty()) throw ConfigError("predictive: chain file has no usable samples");

    std::mt19937_64 rng(effective_seed(ctx, pred.seed));
    std::uniform_int_distribution<std::size_t> pick(0, thetas.size() - 1);
    std::vector<std::vector<double>> draws(static_cast<std::size_t>(pred.draws));
    for (auto& d : draws) d = thetas[pick(rng)];

    std::vector<fs::path> files(draws.size());
    for (std::size_t k = 0; k < draws.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof(name), "ensemble_%03zu.csv", k);
        files[k] = out_file(ctx, name);
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::string error;
    std::mutex err_mx;
    auto worker = [&] {
        for (std::size_t k = next.fetch_add(1); k < draws.size(); k = next.fetch_add(1)) {
            if (failed.load()) return;
            try {
                BatchProtocol p = *cfg.protocol;
                p.dt1 = draws[k][0];
                p.dt2 = draws[k][1];
                p.m1 = draws[k][2];
                p.m2 = draws[k][3];
                p.c_init0 = draws[k][4];
                auto rec = run_batch(p, cfg.system, cfg.solver);
                write_chromatogram_csv(files[k], cfg.system, rec);
            } catch (const std::exception& e) {
                std::lock_guard lk(err_mx);
                error = e.what();
                failed = true;
            }
        }
    };
    std::vector<std::thread> pool;
    const int nthreads = std::max(1, ctx.threads);
    for (int i = 0; i < nthreads - 1; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failed) throw std::runtime_error("predictive ensemble member failed: " + error);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"process-design toolkit for ion-exchange SMB chromatography"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    std::vector<CLI::App*> subs;
    for (const char* mode : {"simulate-batch", "simulate-smb", "optimize", "predictive-check"}) {
        CLI::App* sub = app.add_subcommand(mode);
        sub->add_option("--config", config_path, "run configuration (JSON)")->required();
        sub->add_option("--out", out_dir, "output directory (overrides the config)");
        sub->add_option("--seed", seed, "seed override for stochastic modes");
        sub->add_option("--threads", threads, "worker threads for independent evaluations");
        subs.push_back(sub);
    }
    CLI11_PARSE(app, argc, argv);
    const std::string mode = app.get_subcommands().front()->get_name();

    const auto t_start = std::chrono::steady_clock::now();
    try {
        RunContext ctx;
        ctx.cfg = parse_config(config_path);
        if (ctx.cfg.mode != mode)
            throw ConfigError("config declares mode '" + ctx.cfg.mode +
                              "' but the command line says '" + mode + "'");
        ctx.out = out_dir.empty() ? fs::path(ctx.cfg.out_dir) : fs::path(out_dir);
        ctx.seed_override = seed;
        ctx.threads = threads;
        fs::create_directories(ctx.out);

        {
            std::ofstream rc(ctx.out / "resolved_config.json");
            rc << ctx.cfg.resolved.dump(2) << "\n";
            ctx.outputs.push_back("resolved_config.json");
        }

        int rc = 0;
        if (mode == "simulate-batch") rc = run_simulate_batch(ctx);
        else if (mode == "simulate-smb") rc = run_simulate_smb(ctx);
        else if (mode == "optimize") rc = run_optimize(ctx);
        else rc = run_predictive_check(ctx);

        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        json manifest;
        manifest["mode"] = mode;
        manifest["config"] = config_path;
        manifest["seed"] = ctx.seed_override ? json(*ctx.seed_override) : json();
        manifest["threads"] = ctx.threads;
        manifest["wall_time_s"] = wall;
        manifest["outputs"] = ctx.outputs;
        std::ofstream mf(ctx.out / "manifest.json");
        mf << manifest.dump(2) << "\n";
        return rc;
    } catch (const std::exception& e) {
        json err;
        err["error"] = e.what();
        err["mode"] = mode;
        std::cerr << err.dump(2) << "\n";
        return 1;
    }
}
