#ifndef SMBFORGE_NETWORK_HPP
#define SMBFORGE_NETWORK_HPP

#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "smbforge/core.hpp"
#include "smbforge/indicators.hpp"
#include "smbforge/solver.hpp"

namespace smbforge {

enum class PortKind { None, Feed, Desorbent, Raffinate, Extract };
enum class SchemeKind { FourZone, Cascade, EightZone };

// Role of the node sitting downstream of a logical column. Roles live in
// logical (port-relative) space and stay fixed while the columns rotate.
struct NodeRole {
    PortKind kind = PortKind::None;
    double q = 0.0;                  // port flowrate
    std::vector<double> conc;        // inlet stream composition (Feed/Desorbent)
    std::string name;                // e.g. "E", "R1"
    bool bypass_fed = false;         // Feed node supplied by a diluted bypass stream
    int bypass_src_ring = -1;        // source raffinate node (ring, node index)
    int bypass_src_node = -1;
};

struct ProcessScheme {
    struct Ring {
        int ncols = 0;
        std::vector<double> col_flow;    // flow through logical column l
        std::vector<NodeRole> node;      // node l is downstream of logical column l
        std::vector<double> init_salt;   // initial salt per logical column
    };
    SchemeKind kind = SchemeKind::FourZone;
    double t_s = 0.0;
    std::vector<Ring> rings;
    double buffer_salt = 0.0;            // diluent salt of the bypass stream
    std::vector<double> feed_proteins;   // external feed composition (per protein)
    double q_feed_external = 0.0;        // flowrate of the external feed port

    int total_columns() const {
        int n = 0;
        for (const auto& r : rings) n += r.ncols;
        return n;
    }
};

// Eq-7/8 node balance for one time point. Withdrawal roles leave the
// concentration vector untouched (flow split only).
inline std::vector<double> node_balance(std::span<const double> c_out, double q_up,
                                        const NodeRole& role, double q_down,
                                        std::span<const double> injected = {}) {
    if (!(q_down > 0.0)) throw std::invalid_argument("node_balance: downstream flow must be > 0");
    auto check = [&](double expect) {
        if (std::abs(q_down - expect) > 1e-12 * std::max(std::abs(expect), 1e-30))
            throw std::invalid_argument("node_balance: flow balance violated at node " +
                                        role.name);
    };
    std::vector<double> c_in(c_out.begin(), c_out.end());
    switch (role.kind) {
        case PortKind::None:
            check(q_up);
            break;
        case PortKind::Feed:
        case PortKind::Desorbent: {
            check(q_up + role.q);
            std::span<const double> add = injected.empty() ? std::span<const double>(role.conc)
                                                           : injected;
            for (std::size_t i = 0; i < c_in.size(); ++i)
                c_in[i] = (c_out[i] * q_up + add[i] * role.q) / q_down;
            break;
        }
        case PortKind::Raffinate:
        case PortKind::Extract:
            check(q_up - role.q);
            break;  // delta = -c_out * Q^out cancels: concentration unchanged
    }
    return c_in;
}

// Eq-20 bypass dilution: proteins scaled by the flow ratio, salt mixed with
// the diluent buffer.
inline std::vector<double> dilute_bypass(std::span<const double> c_out, double q_source,
                                         double q_target, double buffer_salt) {
    if (!(q_source > 0.0) || q_target < q_source)
        throw std::invalid_argument("dilute_bypass: need q_target >= q_source > 0");
    const double ratio = q_source / q_target;
    std::vector<double> c(c_out.size());
    c[0] = (c_out[0] * q_source + buffer_salt * (q_target - q_source)) / q_target;
    for (std::size_t i = 1; i < c.size(); ++i) c[i] = c_out[i] * ratio;
    return c;
}

// Inputs of one four-zone unit (also used for each half of the composite
// schemes): zone-I flow plus the four port flows; the zone flows follow from
// the node balances.
struct FourZoneUnit {
    std::vector<int> zone_cols{3, 3, 3, 3};
    double q_zone1 = 0.0;
    double q_feed = 0.0, q_des = 0.0, q_raf = 0.0, q_ext = 0.0;
    double salt_feed = 0.0, salt_des = 0.0;
    std::vector<double> feed_proteins;  // per protein; empty = protein-free feed
};

namespace detail {

inline void require_flow(double q, const std::string& what) {
    if (!(q > 0.0)) throw ConfigError("scheme: derived " + what + " flow is not positive");
}

inline std::vector<double> port_conc(double salt, std::span<const double> proteins, int ncomp) {
    std::vector<double> c(ncomp, 0.0);
    c[0] = salt;
    for (std::size_t i = 0; i < proteins.size(); ++i) c[i + 1] = proteins[i];
    return c;
}

// Lay out one four-zone ring: zone I first, desorbent node at the end.
inline ProcessScheme::Ring make_four_zone_ring(const FourZoneUnit& u, int ncomp,
                                               const std::string& suffix) {
    if (u.zone_cols.size() != 4) throw ConfigError("scheme: four zones required");
    for (int n : u.zone_cols)
        if (n < 1) throw ConfigError("scheme: each zone needs at least one column");
    const double q1 = u.q_zone1;
    const double q2 = q1 - u.q_ext;
    const double q3 = q2 + u.q_feed;
    const double q4 = q3 - u.q_raf;
    require_flow(q1, "zone I" + suffix);
    require_flow(q2, "zone II" + suffix);
    require_flow(q3, "zone III" + suffix);
    require_flow(q4, "zone IV" + suffix);
    if (std::abs((q4 + u.q_des) - q1) > 1e-9 * q1)
        throw ConfigError("scheme: closed-loop flow balance violated (Q^D + Q^F != Q^E + Q^R)" +
                          suffix);
    ProcessScheme::Ring ring;
    const double zone_q[4] = {q1, q2, q3, q4};
    const double zone_salt[4] = {u.salt_des, u.salt_des, u.salt_feed, u.salt_feed};
    for (int zi = 0; zi < 4; ++zi)
        for (int c = 0; c < u.zone_cols[zi]; ++c) {
            ring.col_flow.push_back(zone_q[zi]);
            ring.init_salt.push_back(zone_salt[zi]);
            ring.node.push_back(NodeRole{});
        }
    ring.ncols = static_cast<int>(ring.col_flow.size());
    int e = u.zone_cols[0] - 1;
    int f = e + u.zone_cols[1];
    int r = f + u.zone_cols[2];
    int d = r + u.zone_cols[3];
    ring.node[e] = {PortKind::Extract, u.q_ext, {}, "E" + suffix};
    ring.node[f] = {PortKind::Feed, u.q_feed,
                    port_conc(u.salt_feed, u.feed_proteins, ncomp), "F" + suffix};
    ring.node[r] = {PortKind::Raffinate, u.q_raf, {}, "R" + suffix};
    ring.node[d] = {PortKind::Desorbent, u.q_des, port_conc(u.salt_des, {}, ncomp),
                    "D" + suffix};
    return ring;
}

}  // namespace detail

inline ProcessScheme build_four_zone(const FourZoneUnit& u, const SystemConfig& cfg, double t_s) {
    ProcessScheme s;
    s.kind = SchemeKind::FourZone;
    s.t_s = t_s;
    s.rings.push_back(detail::make_four_zone_ring(u, cfg.ncomp(), ""));
    s.feed_proteins = u.feed_proteins;
    s.q_feed_external = u.q_feed;
    return s;
}

// Two synchronously switched four-zone units; U1's raffinate is diluted with
// buffer and becomes U2's feed.
inline ProcessScheme build_cascade(const FourZoneUnit& u1, const FourZoneUnit& u2,
                                   const SystemConfig& cfg, double t_s, double buffer_salt) {
    if (u2.q_feed < u1.q_raf)
        throw ConfigError("cascade: U2 feed flow must be >= U1 raffinate flow (dilution)");
    ProcessScheme s;
    s.kind = SchemeKind::Cascade;
    s.t_s = t_s;
    s.buffer_salt = buffer_salt;
    s.rings.push_back(detail::make_four_zone_ring(u1, cfg.ncomp(), ""));
    s.rings.push_back(detail::make_four_zone_ring(u2, cfg.ncomp(), "2"));
    // rename U1 ports for clarity
    for (auto& n : s.rings[0].node)
        if (n.kind != PortKind::None) n.name += "1";
    int src = -1, dst = -1;
    for (int i = 0; i < s.rings[0].ncols; ++i)
        if (s.rings[0].node[i].kind == PortKind::Raffinate) src = i;
    for (int i = 0; i < s.rings[1].ncols; ++i)
        if (s.rings[1].node[i].kind == PortKind::Feed) dst = i;
    s.rings[1].node[dst].bypass_fed = true;
    s.rings[1].node[dst].bypass_src_ring = 0;
    s.rings[1].node[dst].bypass_src_node = src;
    s.feed_proteins = u1.feed_proteins;
    s.q_feed_external = u1.q_feed;
    return s;
}

struct EightZoneSpecs {
    int cols_per_zone = 3;
    double q_zone1 = 0.0;  // Q^I
    double q_des1 = 0.0, q_ext1 = 0.0, q_feed1 = 0.0, q_raf1 = 0.0;
    double q_des2 = 0.0, q_ext2 = 0.0, q_feed2 = 0.0;  // Q^R2 follows from the balances
    double salt_feed1 = 0.0, salt_des1 = 0.0, salt_feed2 = 0.0, salt_des2 = 0.0;
    std::vector<double> feed_proteins;
};

// Single integrated ring of eight zones; raffinate-I is diluted and re-enters
// at feed-II.
inline ProcessScheme build_eight_zone(const EightZoneSpecs& u, const SystemConfig& cfg,
                                      double t_s, double buffer_salt) {
    if (u.cols_per_zone < 1) throw ConfigError("scheme: each zone needs at least one column");
    const double q1 = u.q_zone1;
    const double q2 = q1 - u.q_ext1;
    const double q3 = q2 + u.q_feed1;
    const double q4 = q3 - u.q_raf1;
    const double q5 = q4 + u.q_des2;
    const double q6 = q5 - u.q_ext2;
    const double q7 = q6 + u.q_feed2;
    const double q8 = q1 - u.q_des1;
    const double q_raf2 = q7 - q8;
    const char* zn[8] = {"I", "II", "III", "IV", "V", "VI", "VII", "VIII"};
    const double qz[8] = {q1, q2, q3, q4, q5, q6, q7, q8};
    for (int i = 0; i < 8; ++i) detail::require_flow(qz[i], std::string("zone ") + zn[i]);
    detail::require_flow(q_raf2, "raffinate-II");
    if (u.q_feed2 < u.q_raf1)
        throw ConfigError("eight-zone: feed-II flow must be >= raffinate-I flow (dilution)");
    ProcessScheme s;
    s.kind = SchemeKind::EightZone;
    s.t_s = t_s;
    s.buffer_salt = buffer_salt;
    ProcessScheme::Ring ring;
    const double zone_salt[8] = {u.salt_des1, u.salt_des1, u.salt_feed1, u.salt_feed1,
                                 u.salt_des2, u.salt_des2, u.salt_feed2, u.salt_feed2};
    for (int zi = 0; zi < 8; ++zi)
        for (int c = 0; c < u.cols_per_zone; ++c) {
            ring.col_flow.push_back(qz[zi]);
            ring.init_salt.push_back(zone_salt[zi]);
            ring.node.push_back(NodeRole{});
        }
    ring.ncols = static_cast<int>(ring.col_flow.size());
    auto zone_end = [&](int zi) { return (zi + 1) * u.cols_per_zone - 1; };
    const int nc = cfg.ncomp();
    ring.node[zone_end(0)] = {PortKind::Extract, u.q_ext1, {}, "E1"};
    ring.node[zone_end(1)] = {PortKind::Feed, u.q_feed1,
                              detail::port_conc(u.salt_feed1, u.feed_proteins, nc), "F1"};
    ring.node[zone_end(2)] = {PortKind::Raffinate, u.q_raf1, {}, "R1"};
    ring.node[zone_end(3)] = {PortKind::Desorbent, u.q_des2,
                              detail::port_conc(u.salt_des2, {}, nc), "D2"};
    ring.node[zone_end(4)] = {PortKind::Extract, u.q_ext2, {}, "E2"};
    ring.node[zone_end(5)] = {PortKind::Feed, u.q_feed2,
                              detail::port_conc(u.salt_feed2, {}, nc), "F2", true, 0,
                              zone_end(2)};
    ring.node[zone_end(6)] = {PortKind::Raffinate, q_raf2, {}, "R2"};
    ring.node[zone_end(7)] = {PortKind::Desorbent, u.q_des1,
                              detail::port_conc(u.salt_des1, {}, nc), "D1"};
    s.rings.push_back(std::move(ring));
    s.feed_proteins = u.feed_proteins;
    s.q_feed_external = u.q_feed1;
    return s;
}

struct SMBState {
    // physical columns per ring; logical column l is phys[(l + offset) % N]
    std::vector<std::vector<ColumnState>> cols;
    std::vector<std::vector<OutletRecord>> prev_outlet;  // per ring, per physical column
    int switches = 0;
    double t = 0.0;
    std::map<std::string, OutletRecord> withdrawals;  // last completed switch
};

inline SMBState initialize_smb(const ProcessScheme& scheme, const SystemConfig& cfg,
                               const SolverSettings& settings) {
    SMBState st;
    st.cols.resize(scheme.rings.size());
    st.prev_outlet.resize(scheme.rings.size());
    for (std::size_t ri = 0; ri < scheme.rings.size(); ++ri) {
        const auto& ring = scheme.rings[ri];
        for (int l = 0; l < ring.ncols; ++l) {
            st.cols[ri].push_back(
                fresh_state(cfg, settings.nz, settings.nr, ring.init_salt[l]));
            // loop-closure stream for the very first switch: the column's own
            // initial uniform composition
            std::vector<double> c0(cfg.ncomp(), 0.0);
            c0[0] = ring.init_salt[l];
            OutletRecord rec;
            rec.node = "init";
            rec.t0 = 0.0;
            rec.dt = scheme.t_s / 200.0;
            rec.ncomp = cfg.ncomp();
            for (int k = 0; k <= 200; ++k)
                rec.data.insert(rec.data.end(), c0.begin(), c0.end());
            st.prev_outlet[ri].push_back(std::move(rec));
        }
    }
    return st;
}

namespace detail {

inline InletProfile profile_from_records(const OutletRecord& upstream, double q_up,
                                         const NodeRole& role, double q_down,
                                         const OutletRecord* bypass_src, double q_bypass_src,
                                         double buffer_salt, double t0) {
    const int nc = upstream.ncomp;
    const int ns = upstream.samples();
    std::vector<double> times(ns);
    std::vector<double> vals(static_cast<std::size_t>(ns) * nc);
    std::vector<double> c_out(nc), injected;
    for (int k = 0; k < ns; ++k) {
        times[k] = t0 + k * upstream.dt;
        for (int i = 0; i < nc; ++i) c_out[i] = upstream.at(k, i);
        std::vector<double> c_in;
        if (role.bypass_fed) {
            std::vector<double> src(nc);
            for (int i = 0; i < nc; ++i) src[i] = bypass_src->at(k, i);
            injected = dilute_bypass(src, q_bypass_src, role.q, buffer_salt);
            c_in = node_balance(c_out, q_up, role, q_down, injected);
        } else {
            c_in = node_balance(c_out, q_up, role, q_down);
        }
        std::copy(c_in.begin(), c_in.end(), vals.begin() + static_cast<std::size_t>(k) * nc);
    }
    return InletProfile::sampled(std::move(times), std::move(vals), nc);
}

}  // namespace detail

// Integrate every column over one switching interval in flow order, then
// advance the port roles by one column downstream. Columns are weakly
// coupled: the stream closing each loop uses the previous switch's outlet.
inline void advance_switch(SMBState& st, const ProcessScheme& scheme, const SystemConfig& cfg,
                           const SolverSettings& settings) {
    const double t0 = st.t;
    const double dt_sample = scheme.t_s / 200.0;
    std::map<std::string, OutletRecord> withdrawals;
    std::vector<std::vector<OutletRecord>> new_outlet(scheme.rings.size());
    // this switch's records in logical order, per ring (for bypass sourcing)
    std::vector<std::vector<OutletRecord>> logical(scheme.rings.size());

    for (std::size_t ri = 0; ri < scheme.rings.size(); ++ri) {
        const auto& ring = scheme.rings[ri];
        const int n = ring.ncols;
        const int offset = st.switches % n;
        new_outlet[ri].resize(n);
        logical[ri].resize(n);
        for (int l = 0; l < n; ++l) {
            const int up = (l - 1 + n) % n;
            const NodeRole& role = ring.node[up];
            const OutletRecord* upstream;
            OutletRecord closure;
            if (l == 0) {
                // recycle closure: previous switch's outlet of the physical
                // column currently sitting just upstream
                const int phys_up = (up + offset) % n;
                closure = st.prev_outlet[ri][phys_up];
                closure.t0 = t0;
                upstream = &closure;
            } else {
                upstream = &logical[ri][up];
            }
            const OutletRecord* bypass = nullptr;
            double q_bypass = 0.0;
            if (role.bypass_fed) {
                bypass = &logical[role.bypass_src_ring][role.bypass_src_node];
                if (bypass->samples() == 0)
                    throw std::logic_error("bypass source not yet solved in flow order");
                q_bypass = scheme.rings[role.bypass_src_ring].node[role.bypass_src_node].q;
            }
            InletProfile inlet = detail::profile_from_records(
                *upstream, ring.col_flow[up], role, ring.col_flow[l], bypass, q_bypass,
                scheme.buffer_salt, t0);
            const int phys = (l + offset) % n;
            ColumnState& col = st.cols[ri][phys];
            col.t = t0;
            const double u_int = cfg.velocity_from_flow(ring.col_flow[l]);
            OutletRecord rec;
            try {
                rec = integrate_column(col, inlet, u_int, settings, cfg, scheme.t_s,
                                       dt_sample, "col");
            } catch (const std::exception& e) {
                throw std::runtime_error("switch " + std::to_string(st.switches) + ", ring " +
                                         std::to_string(ri) + ", column " + std::to_string(l) +
                                         ": " + e.what());
            }
            logical[ri][l] = rec;
            new_outlet[ri][phys] = rec;
            const NodeRole& down = ring.node[l];
            if (down.kind == PortKind::Raffinate || down.kind == PortKind::Extract) {
                OutletRecord w = rec;
                w.node = down.name;
                withdrawals[down.name] = std::move(w);
            }
        }
    }
    st.prev_outlet = std::move(new_outlet);
    st.withdrawals = std::move(withdrawals);
    st.switches += 1;
    st.t = t0 + scheme.t_s;
}

struct CssResult {
    std::vector<PerformanceRecord> indicators;  // one per withdrawal node
    int switches = 0;
    bool converged = false;
    double last_distance = 0.0;
};

// Withdrawal-node indicators over the final completed switch.
inline std::vector<PerformanceRecord> smb_indicators(const SMBState& st,
                                                     const ProcessScheme& scheme,
                                                     const SystemConfig& cfg) {
    std::vector<PerformanceRecord> out;
    for (std::size_t ri = 0; ri < scheme.rings.size(); ++ri)
        for (int l = 0; l < scheme.rings[ri].ncols; ++l) {
            const NodeRole& node = scheme.rings[ri].node[l];
            if (node.kind != PortKind::Raffinate && node.kind != PortKind::Extract) continue;
            const auto& rec = st.withdrawals.at(node.name);
            auto a = concentration_integral(rec, rec.t0, rec.span());
            out.push_back(performance(a, node.q, scheme.q_feed_external, scheme.feed_proteins,
                                      scheme.t_s, scheme.t_s, cfg.geometry.volume(),
                                      cfg.geometry.col_porosity, scheme.total_columns(),
                                      node.name));
        }
    return out;
}

inline CssResult run_to_css(SMBState& st, const ProcessScheme& scheme, const SystemConfig& cfg,
                            const SolverSettings& settings, double e_t, int k_max,
                            const std::function<void(int, double)>& progress = {}) {
    if (!(e_t > 0.0) || k_max < 2) throw std::invalid_argument("run_to_css: bad e_t or k_max");
    CssResult res;
    std::map<std::string, OutletRecord> prev;
    for (int k = 0; k < k_max; ++k) {
        advance_switch(st, scheme, cfg, settings);
        if (!prev.empty()) {
            res.last_distance = css_distance(prev, st.withdrawals);
            if (progress) progress(st.switches, res.last_distance);
            if (res.last_distance <= e_t) {
                res.converged = true;
                break;
            }
        }
        prev = st.withdrawals;
    }
    res.switches = st.switches;
    res.indicators = smb_indicators(st, scheme, cfg);
    return res;
}

}  // namespace smbforge

#endif
