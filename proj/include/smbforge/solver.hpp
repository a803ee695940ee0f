#ifndef SMBFORGE_SOLVER_HPP
#define SMBFORGE_SOLVER_HPP

#include <algorithm>
#include <cmath>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "smbforge/bdf.hpp"
#include "smbforge/core.hpp"
#include "smbforge/grm.hpp"

namespace smbforge {

struct SolverSettings {
    int nz = 40;
    int nr = 10;
    double abstol = 1e-8;
    double reltol = 1e-6;
    double h0 = 1e-14;
    double hmax = 5e6;
};

// Per-component piecewise-linear inlet concentrations over [t_start, t_end].
class InletProfile {
public:
    InletProfile() = default;

    static InletProfile constant(std::vector<double> values, double t_start, double t_end) {
        InletProfile p;
        p.times_ = {t_start, t_end};
        p.values_.insert(p.values_.end(), values.begin(), values.end());
        p.values_.insert(p.values_.end(), values.begin(), values.end());
        p.nc_ = static_cast<int>(values.size());
        return p;
    }

    static InletProfile sampled(std::vector<double> times, std::vector<double> values, int ncomp) {
        if (times.size() < 2 || values.size() != times.size() * ncomp)
            throw std::invalid_argument("inlet profile: inconsistent sample arrays");
        InletProfile p;
        p.times_ = std::move(times);
        p.values_ = std::move(values);
        p.nc_ = ncomp;
        return p;
    }

    double t_start() const { return times_.front(); }
    double t_end() const { return times_.back(); }
    int ncomp() const { return nc_; }

    void eval(double t, std::span<double> out) const {
        if (t <= times_.front()) {
            std::copy_n(values_.begin(), nc_, out.begin());
            return;
        }
        if (t >= times_.back()) {
            std::copy_n(values_.end() - nc_, nc_, out.begin());
            return;
        }
        auto it = std::upper_bound(times_.begin(), times_.end(), t);
        std::size_t hi = static_cast<std::size_t>(it - times_.begin());
        std::size_t lo = hi - 1;
        double w = (t - times_[lo]) / (times_[hi] - times_[lo]);
        for (int i = 0; i < nc_; ++i)
            out[i] = (1.0 - w) * values_[lo * nc_ + i] + w * values_[hi * nc_ + i];
    }

private:
    std::vector<double> times_;
    std::vector<double> values_;  // times.size() * nc_
    int nc_ = 0;
};

// Outlet concentrations on a uniform time grid.
struct OutletRecord {
    std::string node;
    double t0 = 0.0;
    double dt = 0.0;
    int ncomp = 0;
    std::vector<double> data;  // samples * ncomp

    int samples() const { return ncomp ? static_cast<int>(data.size()) / ncomp : 0; }
    double time(int k) const { return t0 + k * dt; }
    double at(int k, int i) const { return data[static_cast<std::size_t>(k) * ncomp + i]; }
    double span() const { return samples() > 1 ? (samples() - 1) * dt : 0.0; }
};

namespace detail {

inline int clamp_state(std::vector<double>& v, double hard_tol = 1e-4) {
    int warned = 0;
    for (double& x : v) {
        if (x < 0.0) {
            if (x < -hard_tol)
                throw std::runtime_error("concentration below hard negativity limit: " +
                                         std::to_string(x));
            if (x < -1e-8) ++warned;
            x = 0.0;
        }
    }
    return warned;
}

}  // namespace detail

// Advance one column by `duration`, sampling the outlet every dt_sample.
// The inlet profile must cover [state.t, state.t + duration].
inline OutletRecord integrate_column(ColumnState& state, const InletProfile& inlet, double u_int,
                                     const SolverSettings& settings, const SystemConfig& config,
                                     double duration, double dt_sample,
                                     const std::string& node = "outlet") {
    if (!(duration > 0.0)) throw std::invalid_argument("duration must be > 0");
    if (inlet.t_start() > state.t + 1e-9 || inlet.t_end() < state.t + duration - 1e-9)
        throw std::invalid_argument("inlet profile does not cover the integration interval");

    ColumnModel model(config, state.nz, state.nr, u_int,
                      [&inlet](double t, std::span<double> out) { inlet.eval(t, out); });
    BdfOptions opt;
    opt.abstol = settings.abstol;
    opt.reltol = settings.reltol;
    opt.h0 = settings.h0;
    opt.hmax = settings.hmax;
    BdfIntegrator ode(model.n(), model.bandwidth(), model.bandwidth(),
                      [&model](double t, std::span<const double> y, std::span<double> yd) {
                          model.rhs(t, y, yd);
                      },
                      opt);
    ode.jac_fn = [&model](double t, std::span<const double> y, std::span<double> band, int ldj,
                          int mu) { model.jacobian(t, y, band, ldj, mu); };

    // Concentrations at sub-roundoff magnitude are numerical noise; left in
    // place they get amplified step over step by the extremely fast binding
    // rates until the Newton iteration stops converging.
    const double snap = 1e-3 * settings.abstol;
    ode.post_accept = [snap](double, std::span<double> ys) {
        for (double& v : ys)
            if (std::abs(v) < snap) v = 0.0;
    };

    std::vector<double> y(model.n());
    model.pack(state, y);
    ode.init(y, state.t);

    const int nsamp = static_cast<int>(std::floor(duration / dt_sample + 1e-9)) + 1;
    std::vector<double> sample_times(nsamp);
    for (int k = 0; k < nsamp; ++k) sample_times[k] = state.t + k * dt_sample;

    OutletRecord rec;
    rec.node = node;
    rec.t0 = state.t;
    rec.dt = dt_sample;
    rec.ncomp = model.ncomp();
    rec.data.reserve(static_cast<std::size_t>(nsamp) * model.ncomp());
    const int last = model.nz() - 1;
    ode.integrate_to(state.t + duration, sample_times,
                     [&](double, std::span<const double> ys) {
                         for (int i = 0; i < model.ncomp(); ++i)
                             rec.data.push_back(std::max(ys[model.idx_bulk(last, i)], 0.0));
                     });

    std::vector<double> yend(ode.y().begin(), ode.y().end());
    detail::clamp_state(yend);
    model.unpack(yend, state);
    // re-establish the exact electro-neutrality relation for the bound salt
    for (int z = 0; z < state.nz; ++z)
        for (int r = 0; r < state.nr; ++r) {
            std::span<const double> qcell(&state.q[(static_cast<std::size_t>(z) * state.nr + r) *
                                                   state.ncomp],
                                          static_cast<std::size_t>(state.ncomp));
            state.bound(z, r, 0) = bound_salt(qcell, config.binding);
        }
    state.t += duration;
    return rec;
}

// Component holdup [mol] inside the column (bulk + pore + bound phases).
inline double column_holdup(const ColumnState& state, const SystemConfig& config, int comp) {
    const auto& g = config.geometry;
    const double cell_vol = g.volume() / state.nz;
    const double wr = 1.0 / state.nr;
    double total = 0.0;
    for (int z = 0; z < state.nz; ++z) {
        double particle = 0.0;
        for (int r = 0; r < state.nr; ++r)
            particle += wr * (g.par_porosity * state.pore(z, r, comp) +
                              (1.0 - g.par_porosity) * state.bound(z, r, comp));
        total += cell_vol * (g.col_porosity * state.bulk(z, comp) +
                             (1.0 - g.col_porosity) * particle);
    }
    return total;
}

// Debug dump: z_index,r_index,component,phase,value (r_index -1 for bulk).
inline void dump_state_csv(const ColumnState& state, std::ostream& os) {
    os << "z_index,r_index,component,phase,value\n";
    for (int z = 0; z < state.nz; ++z) {
        for (int i = 0; i < state.ncomp; ++i)
            os << z << ",-1," << i << ",bulk," << state.bulk(z, i) << "\n";
        for (int r = 0; r < state.nr; ++r)
            for (int i = 0; i < state.ncomp; ++i) {
                os << z << "," << r << "," << i << ",pore," << state.pore(z, r, i) << "\n";
                os << z << "," << r << "," << i << ",bound," << state.bound(z, r, i) << "\n";
            }
    }
}

}  // namespace smbforge

#endif
