#ifndef SMBFORGE_BATCH_HPP
#define SMBFORGE_BATCH_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "smbforge/core.hpp"
#include "smbforge/indicators.hpp"
#include "smbforge/solver.hpp"

namespace smbforge {

// Load-wash-elute protocol with a two-segment salt gradient and final hold.
struct BatchProtocol {
    double u_int = 5.75e-4;             // interstitial velocity [m/s]
    std::vector<double> feed;           // protein feed concentrations [mol/m^3]
    double load_salt = 50.0;            // salt during load and wash [mol/m^3]
    double t_load = 10.0;               // [s]
    double t_wash = 40.0;               // [s]
    double dt1 = 0.0;                   // elution segment IIIa length [s]
    double dt2 = 0.0;                   // elution segment IIIb length [s]
    double m1 = 0.0;                    // gradient slope IIIa [mol/m^3/s]
    double m2 = 0.0;                    // gradient slope IIIb [mol/m^3/s]
    double c_init0 = 50.0;              // elution starting salt [mol/m^3]
    double t_hold = -1.0;               // IIIc length; < 0 means default (3 residence times)

    double elute_start() const { return t_load + t_wash; }
    double hold_length(const SystemConfig& cfg) const {
        if (t_hold >= 0.0) return t_hold;
        return 3.0 * cfg.geometry.length / u_int;
    }
    double total_time(const SystemConfig& cfg) const {
        return elute_start() + dt1 + dt2 + hold_length(cfg);
    }
};

struct PoolWindow {
    double t_start = 0.0;
    double t_end = 0.0;
    double threshold = 0.0;
};

// Inlet salt concentration at time t (Fig-2 style phase program).
inline double salt_program(const BatchProtocol& p, double t) {
    if (t < 0.0) throw std::invalid_argument("salt_program: t must be >= 0");
    const double te = p.elute_start();
    if (t < te) return p.load_salt;
    const double s = t - te;
    if (s <= p.dt1) return p.c_init0 + p.m1 * s;
    const double after_a = p.c_init0 + p.m1 * p.dt1;
    if (s <= p.dt1 + p.dt2) return after_a + p.m2 * (s - p.dt1);
    return after_a + p.m2 * p.dt2;
}

inline InletProfile batch_inlet(const BatchProtocol& p, const SystemConfig& cfg) {
    const int nc = cfg.ncomp();
    const double jump = 1e-9;  // duplicate breakpoints represent the program's steps
    std::vector<double> times;
    std::vector<double> vals;
    auto push = [&](double t, double salt, bool with_feed) {
        times.push_back(t);
        vals.push_back(salt);
        for (int i = 1; i < nc; ++i)
            vals.push_back(with_feed ? p.feed[static_cast<std::size_t>(i) - 1] : 0.0);
    };
    push(0.0, p.load_salt, true);
    push(p.t_load, p.load_salt, true);
    push(p.t_load + jump, p.load_salt, false);
    const double te = p.elute_start();
    push(te, p.load_salt, false);
    push(te + jump, p.c_init0, false);
    push(te + p.dt1, p.c_init0 + p.m1 * p.dt1, false);
    push(te + p.dt1 + p.dt2, p.c_init0 + p.m1 * p.dt1 + p.m2 * p.dt2, false);
    push(p.total_time(cfg) + 1.0, p.c_init0 + p.m1 * p.dt1 + p.m2 * p.dt2, false);
    return InletProfile::sampled(std::move(times), std::move(vals), nc);
}

// Simulate the full protocol on a column pre-equilibrated at load salt.
// Equilibration is an initial condition, not a simulated flush.
inline OutletRecord run_batch(const BatchProtocol& p, const SystemConfig& cfg,
                              const SolverSettings& settings, double dt_sample = 1.0,
                              ColumnState* state_out = nullptr) {
    if (static_cast<int>(p.feed.size()) != cfg.proteins())
        throw std::invalid_argument("batch feed composition length must equal protocol count");
    ColumnState state = fresh_state(cfg, settings.nz, settings.nr, p.load_salt);
    InletProfile inlet = batch_inlet(p, cfg);
    OutletRecord rec = integrate_column(state, inlet, p.u_int, settings, cfg, p.total_time(cfg),
                                        dt_sample, "B");
    if (state_out) *state_out = state;
    return rec;
}

// Continue a finished protocol run at the final salt level, appending outlet
// samples to `rec`. Used when the target is still eluting at program end.
inline void extend_batch(ColumnState& state, OutletRecord& rec, const BatchProtocol& p,
                         const SystemConfig& cfg, const SolverSettings& settings,
                         double duration, double dt_sample) {
    const double salt = salt_program(p, p.total_time(cfg) + 1.0);
    const int nc = cfg.ncomp();
    std::vector<double> times{state.t, state.t + duration + 1.0};
    std::vector<double> vals(static_cast<std::size_t>(2 * nc), 0.0);
    vals[0] = salt;
    vals[static_cast<std::size_t>(nc)] = salt;
    InletProfile hold = InletProfile::sampled(std::move(times), std::move(vals), nc);
    OutletRecord more =
        integrate_column(state, hold, p.u_int, settings, cfg, duration, dt_sample, rec.node);
    // first sample duplicates the last one already recorded
    rec.data.insert(rec.data.end(), more.data.begin() + more.ncomp, more.data.end());
}

// Maximal contiguous window in which every non-target protein is negligible:
// below the absolute threshold mu, or dominated by the target (below a fixed
// fraction of the target's concentration at the same instant). The absolute
// test governs the dilute tails; the dominance test keeps the product peak
// collectable when an impurity shoulder overlaps it, which is how reported
// pools behave when baseline separation is not achieved. The window is
// trimmed to where the target exceeds mu; among all feasible windows the one
// with the largest target mass wins. Returns nullopt when no sample
// qualifies.
inline std::optional<PoolWindow> compute_pool_window(const OutletRecord& rec, int target,
                                                     double mu, double dominance = 0.4) {
    if (rec.samples() == 0) throw std::invalid_argument("empty outlet record");
    if (target < 1 || target >= rec.ncomp) throw std::invalid_argument("invalid target index");
    auto feasible = [&](int k) {
        const double gate = dominance * rec.at(k, target);
        for (int i = 1; i < rec.ncomp; ++i)
            if (i != target && rec.at(k, i) >= mu && rec.at(k, i) >= gate) return false;
        return true;
    };
    std::optional<PoolWindow> best;
    double best_mass = -1.0;
    int k = 0;
    const int n = rec.samples();
    while (k < n) {
        if (!feasible(k)) {
            ++k;
            continue;
        }
        int run_end = k;
        while (run_end + 1 < n && feasible(run_end + 1)) ++run_end;
        // trim to the target's support inside the run
        int lo = k, hi = run_end;
        while (lo <= hi && rec.at(lo, target) <= mu) ++lo;
        while (hi >= lo && rec.at(hi, target) <= mu) --hi;
        if (lo < hi) {
            double mass = 0.0;
            for (int j = lo; j < hi; ++j)
                mass += 0.5 * (rec.at(j, target) + rec.at(j + 1, target)) * rec.dt;
            if (mass > best_mass) {
                best_mass = mass;
                best = PoolWindow{rec.time(lo), rec.time(hi), mu};
            }
        }
        k = run_end + 1;
    }
    return best;
}

struct BatchResult {
    OutletRecord chromatogram;
    std::optional<PoolWindow> pool;
    PerformanceRecord indicators;  // zeroed when the pool window is empty
};

inline BatchResult evaluate_batch(const BatchProtocol& p, const SystemConfig& cfg,
                                  const SolverSettings& settings, int target, double mu,
                                  double dt_sample = 1.0) {
    BatchResult res;
    ColumnState state;
    res.chromatogram = run_batch(p, cfg, settings, dt_sample, &state);
    // the programmed hold may end while the target is still eluting; keep
    // collecting at the final salt level until its outlet tail drops below
    // the pooling threshold (capped: a strongly retained target may never
    // come off at the final salt)
    const double t_cap = p.total_time(cfg) + 20000.0;
    while (state.t < t_cap &&
           res.chromatogram.at(res.chromatogram.samples() - 1, target) >= mu)
        extend_batch(state, res.chromatogram, p, cfg, settings,
                     std::min(500.0, t_cap - state.t), dt_sample);
    res.pool = compute_pool_window(res.chromatogram, target, mu);
    const double q = cfg.flow_from_velocity(p.u_int);
    if (res.pool) {
        const double t_pool = res.pool->t_end - res.pool->t_start;
        auto a = concentration_integral(res.chromatogram, res.pool->t_start, t_pool);
        // collection time for productivity is the pooling interval
        res.indicators = performance(a, q, q, p.feed, p.t_load, t_pool,
                                     cfg.geometry.volume(), cfg.geometry.col_porosity, 1, "B");
    } else {
        res.indicators.node = "B";
        res.indicators.purity.assign(cfg.proteins(), 0.0);
        res.indicators.yield.assign(cfg.proteins(), 0.0);
        res.indicators.productivity.assign(cfg.proteins(), 0.0);
    }
    return res;
}

}  // namespace smbforge

#endif
