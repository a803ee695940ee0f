#ifndef SMBFORGE_INDICATORS_HPP
#define SMBFORGE_INDICATORS_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "smbforge/core.hpp"
#include "smbforge/solver.hpp"

namespace smbforge {

struct PerformanceRecord {
    std::string node;
    std::vector<double> purity;        // per protein, fraction
    std::vector<double> yield;         // per protein
    std::vector<double> productivity;  // per protein [mol/m^3/s]
    double t_c = 0.0;
};

// Trapezoidal concentration integrals over [tau, tau + t_c], proteins only
// (index 0 is returned as 0). Window endpoints may fall between samples.
inline std::vector<double> concentration_integral(const OutletRecord& rec, double tau,
                                                  double t_c) {
    const double t_end = tau + t_c;
    if (tau < rec.t0 - 1e-9 * std::max(1.0, std::abs(rec.t0)) ||
        t_end > rec.t0 + rec.span() + 1e-9 * std::max(1.0, rec.span()))
        throw std::invalid_argument("integration window outside outlet record");
    std::vector<double> a(rec.ncomp, 0.0);
    auto value = [&](double t, int i) {
        double s = (t - rec.t0) / rec.dt;
        int k = std::clamp(static_cast<int>(std::floor(s)), 0, rec.samples() - 2);
        double w = s - k;
        return (1.0 - w) * rec.at(k, i) + w * rec.at(k + 1, i);
    };
    for (int i = 1; i < rec.ncomp; ++i) {
        int k_first = static_cast<int>(std::ceil((tau - rec.t0) / rec.dt - 1e-9));
        int k_last = static_cast<int>(std::floor((t_end - rec.t0) / rec.dt + 1e-9));
        k_first = std::clamp(k_first, 0, rec.samples() - 1);
        k_last = std::clamp(k_last, 0, rec.samples() - 1);
        double sum = 0.0;
        // partial leading/trailing segments
        if (rec.time(k_first) > tau)
            sum += 0.5 * (value(tau, i) + rec.at(k_first, i)) * (rec.time(k_first) - tau);
        for (int k = k_first; k < k_last; ++k)
            sum += 0.5 * (rec.at(k, i) + rec.at(k + 1, i)) * rec.dt;
        if (t_end > rec.time(k_last))
            sum += 0.5 * (rec.at(k_last, i) + value(t_end, i)) * (t_end - rec.time(k_last));
        a[i] = sum;
    }
    return a;
}

// Eqs for purity / yield / productivity from per-protein concentration
// integrals. Feed composition c_feed has one entry per protein.
inline PerformanceRecord performance(std::span<const double> a_out, double q_node, double q_feed,
                                     std::span<const double> c_feed, double t_load, double t_c,
                                     double col_volume, double eps_c, int n_columns,
                                     const std::string& node = "outlet") {
    const int m = static_cast<int>(c_feed.size());
    PerformanceRecord r;
    r.node = node;
    r.t_c = t_c;
    r.purity.assign(m, 0.0);
    r.yield.assign(m, 0.0);
    r.productivity.assign(m, 0.0);
    double total = 0.0;
    for (int i = 1; i <= m; ++i) total += a_out[i];
    for (int i = 1; i <= m; ++i) {
        if (total > 0.0) r.purity[i - 1] = a_out[i] / total;
        const double feed_mass = q_feed * c_feed[i - 1] * t_load;
        if (feed_mass > 0.0) r.yield[i - 1] = q_node * a_out[i] / feed_mass;
        r.productivity[i - 1] =
            q_node * a_out[i] / (t_c * (1.0 - eps_c) * col_volume * n_columns);
    }
    return r;
}

// Cyclic-steady-state distance between the withdrawal records of two
// consecutive switches: max over nodes of sum_i (int |c_k - c_{k+1}|^n dt)^(1/n).
inline double css_distance(const std::map<std::string, OutletRecord>& prev,
                           const std::map<std::string, OutletRecord>& curr, int n = 1) {
    double worst = 0.0;
    for (const auto& [name, a] : prev) {
        auto it = curr.find(name);
        if (it == curr.end()) throw std::invalid_argument("css_distance: node sets differ");
        const OutletRecord& b = it->second;
        if (a.samples() != b.samples() || a.ncomp != b.ncomp ||
            std::abs(a.dt - b.dt) > 1e-12 * std::max(a.dt, 1.0))
            throw std::invalid_argument("css_distance: mismatched sampling grids");
        double node_sum = 0.0;
        for (int i = 1; i < a.ncomp; ++i) {
            double integral = 0.0;
            for (int k = 0; k + 1 < a.samples(); ++k) {
                double d0 = std::pow(std::abs(a.at(k, i) - b.at(k, i)), n);
                double d1 = std::pow(std::abs(a.at(k + 1, i) - b.at(k + 1, i)), n);
                integral += 0.5 * (d0 + d1) * a.dt;
            }
            node_sum += std::pow(integral, 1.0 / n);
        }
        worst = std::max(worst, node_sum);
    }
    return worst;
}

}  // namespace smbforge

#endif
