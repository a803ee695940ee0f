#ifndef SMBFORGE_SMA_HPP
#define SMBFORGE_SMA_HPP

#include <cmath>
#include <span>
#include <stdexcept>

#include "smbforge/core.hpp"

namespace smbforge {

// Ionic-capacity balance: q0_bar = Lambda - sum_i (nu_i + sigma_i) q_i.
inline double free_ligand(std::span<const double> q, const SMABinding& b) {
    double q0_bar = b.lambda;
    for (std::size_t i = 0; i < b.nu.size(); ++i)
        q0_bar -= (b.nu[i] + b.sigma[i]) * q[i + 1];
    return q0_bar;
}

// Bound salt from electro-neutrality: q_0 = q0_bar + sum_i sigma_i q_i.
inline double bound_salt(std::span<const double> q, const SMABinding& b) {
    double q0 = free_ligand(q, b);
    for (std::size_t i = 0; i < b.sigma.size(); ++i)
        q0 += b.sigma[i] * q[i + 1];
    return q0;
}

// SMA kinetics for one spatial cell.
//   dq_i/dt = k_a,i c_p,i q0_bar^nu_i - k_d,i q_i c_p,0^nu_i    (i = 1..M)
// dq[0] receives the induced bound-salt rate -sum_i nu_i dq_i/dt so that the
// electro-neutrality relation is preserved exactly along trajectories.
// Negative bases of the fractional powers are clamped to zero.
inline void sma_flux(std::span<const double> c_p, std::span<const double> q,
                     const SMABinding& b, std::span<double> dq,
                     double q0_bar_tol = 1e-6) {
    const std::size_t m = b.nu.size();
    const double q0_bar = free_ligand(q, b);
    if (q0_bar < -q0_bar_tol * b.lambda)
        throw std::runtime_error("SMA state exceeds ionic capacity (q0_bar = " +
                                 std::to_string(q0_bar) + ")");
    const double qb = q0_bar > 0.0 ? q0_bar : 0.0;
    const double salt = c_p[0] > 0.0 ? c_p[0] : 0.0;
    double dq0 = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        // c_p and q enter linearly: no clamping, a kink at zero would break
        // the smoothness the implicit solver relies on
        const double rate = b.k_a[i] * c_p[i + 1] * std::pow(qb, b.nu[i]) -
                            b.k_d[i] * q[i + 1] * std::pow(salt, b.nu[i]);
        dq[i + 1] = rate;
        dq0 -= b.nu[i] * rate;
    }
    dq[0] = dq0;
}

}  // namespace smbforge

#endif
