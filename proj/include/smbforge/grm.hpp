#ifndef SMBFORGE_GRM_HPP
#define SMBFORGE_GRM_HPP

#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "smbforge/core.hpp"
#include "smbforge/sma.hpp"

namespace smbforge {

// Finite-volume discretization of the general rate model for one column.
//
// Bulk: first-order upwind convection + central dispersion, Danckwerts flux
// inlet and zero-gradient outlet. Particle: Nr equal-volume spherical shells
// with film flux at the surface and zero flux at the center. SMA kinetics are
// fully coupled into the ODE system (no operator splitting).
//
// Flattened state layout, per axial cell z:
//   [ c(0..M) | r=0: c_p(0..M), q(0..M) | r=1: ... ]
// which keeps the Jacobian banded with bandwidth = one block.
class ColumnModel {
public:
    using InletFn = std::function<void(double, std::span<double>)>;  // t -> c_in per component

    ColumnModel(const SystemConfig& config, int nz, int nr, double u_int, InletFn inlet)
        : cfg_(config), nz_(nz), nr_(nr), nc_(config.ncomp()), u_(u_int), inlet_(std::move(inlet)) {
        const double rp = cfg_.geometry.particle_radius();
        dz_ = cfg_.geometry.length / nz_;
        // compensate the upwind scheme's modified-equation diffusion u*dz/2 so
        // the effective axial dispersion matches D_ax; clamped when the grid
        // is too coarse to represent D_ax at all
        d_eff_ = std::max(cfg_.transport.d_ax - 0.5 * u_ * dz_, 0.0);
        block_ = nc_ * (1 + 2 * nr_);
        // equal-volume shell boundaries and median-radius centers
        rb_.resize(nr_ + 1);
        rc_.resize(nr_);
        for (int j = 0; j <= nr_; ++j) rb_[j] = rp * std::cbrt(static_cast<double>(j) / nr_);
        for (int m = 0; m < nr_; ++m)
            rc_[m] = std::cbrt(0.5 * (rb_[m] * rb_[m] * rb_[m] + rb_[m + 1] * rb_[m + 1] * rb_[m + 1]));
        shell_vol_ = (4.0 / 3.0) * std::numbers::pi * rp * rp * rp / nr_;
        face_area_.resize(nr_ + 1);
        for (int j = 0; j <= nr_; ++j) face_area_[j] = 4.0 * std::numbers::pi * rb_[j] * rb_[j];
        cin_buf_.resize(nc_);
        dq_buf_.resize(nc_);
        jw_dcp0_.resize(static_cast<std::size_t>(nc_) - 1);
        jw_dcpi_.resize(static_cast<std::size_t>(nc_) - 1);
        jw_dqfac_.resize(static_cast<std::size_t>(nc_) - 1);
        jw_dqself_.resize(static_cast<std::size_t>(nc_) - 1);
    }

    int n() const { return nz_ * block_; }
    int bandwidth() const { return block_; }
    int nz() const { return nz_; }
    int nr() const { return nr_; }
    int ncomp() const { return nc_; }

    int idx_bulk(int z, int i) const { return z * block_ + i; }
    int idx_pore(int z, int r, int i) const { return z * block_ + nc_ + 2 * nc_ * r + i; }
    int idx_bound(int z, int r, int i) const { return z * block_ + nc_ + 2 * nc_ * r + nc_ + i; }

    void pack(const ColumnState& s, std::span<double> y) const {
        for (int z = 0; z < nz_; ++z) {
            for (int i = 0; i < nc_; ++i) y[idx_bulk(z, i)] = s.bulk(z, i);
            for (int r = 0; r < nr_; ++r)
                for (int i = 0; i < nc_; ++i) {
                    y[idx_pore(z, r, i)] = s.pore(z, r, i);
                    y[idx_bound(z, r, i)] = s.bound(z, r, i);
                }
        }
    }

    void unpack(std::span<const double> y, ColumnState& s) const {
        for (int z = 0; z < nz_; ++z) {
            for (int i = 0; i < nc_; ++i) s.bulk(z, i) = y[idx_bulk(z, i)];
            for (int r = 0; r < nr_; ++r)
                for (int i = 0; i < nc_; ++i) {
                    s.pore(z, r, i) = y[idx_pore(z, r, i)];
                    s.bound(z, r, i) = y[idx_bound(z, r, i)];
                }
        }
    }

    void rhs(double t, std::span<const double> y, std::span<double> yd) {
        const auto& g = cfg_.geometry;
        const double eps_c = g.col_porosity, eps_p = g.par_porosity;
        const double rp = g.particle_radius();
        const double film_bulk = (1.0 - eps_c) / eps_c * 3.0 / rp;
        const double solid_fac = (1.0 - eps_p) / eps_p;
        inlet_(t, cin_buf_);

        for (int z = 0; z < nz_; ++z) {
            for (int i = 0; i < nc_; ++i) {
                const double c = y[idx_bulk(z, i)];
                if (!std::isfinite(c)) throw std::runtime_error("non-finite bulk concentration");
                const double kf = cfg_.transport.film_coeff(i);
                // advective/dispersive face fluxes (per cross-section of liquid)
                const double c_up = (z == 0) ? 0.0 : y[idx_bulk(z - 1, i)];
                const double c_dn = (z == nz_ - 1) ? 0.0 : y[idx_bulk(z + 1, i)];
                double flux_in, flux_out;
                if (z == 0)
                    flux_in = u_ * cin_buf_[i];  // Danckwerts: total inlet flux = u c_in
                else
                    flux_in = u_ * c_up - d_eff_ * (c - c_up) / dz_;
                if (z == nz_ - 1)
                    flux_out = u_ * c;  // zero dispersive gradient at outlet
                else
                    flux_out = u_ * c - d_eff_ * (c_dn - c) / dz_;
                const double cp_surf = y[idx_pore(z, nr_ - 1, i)];
                yd[idx_bulk(z, i)] =
                    (flux_in - flux_out) / dz_ - film_bulk * kf * (c - cp_surf);
            }
            for (int r = 0; r < nr_; ++r) {
                sma_flux(y.subspan(idx_pore(z, r, 0), nc_), y.subspan(idx_bound(z, r, 0), nc_),
                         cfg_.binding, dq_buf_);
                for (int i = 0; i < nc_; ++i) yd[idx_bound(z, r, i)] = dq_buf_[i];
                for (int i = 0; i < nc_; ++i) {
                    const double dp = cfg_.transport.pore_diffusion(i);
                    const double kf = cfg_.transport.film_coeff(i);
                    const double cp = y[idx_pore(z, r, i)];
                    double flux_outer;  // D_p * outward gradient * area at outer face
                    if (r == nr_ - 1)
                        flux_outer = face_area_[nr_] * (kf / eps_p) *
                                     (y[idx_bulk(z, i)] - cp);
                    else
                        flux_outer = face_area_[r + 1] * dp *
                                     (y[idx_pore(z, r + 1, i)] - cp) / (rc_[r + 1] - rc_[r]);
                    double flux_inner = 0.0;  // zero flux at r = 0
                    if (r > 0)
                        flux_inner = face_area_[r] * dp *
                                     (cp - y[idx_pore(z, r - 1, i)]) / (rc_[r] - rc_[r - 1]);
                    yd[idx_pore(z, r, i)] =
                        (flux_outer - flux_inner) / shell_vol_ - solid_fac * dq_buf_[i];
                }
            }
        }
    }

    // Analytic band Jacobian dF/dy in the layout band[j*ldj + (mu + i - j)].
    // The transport terms are linear with constant coefficients; the binding
    // partials follow directly from the SMA rate law. Exactness matters: the
    // binding rates are stiff enough that finite-difference noise in the
    // Jacobian visibly shrinks the Newton convergence radius.
    void jacobian(double, std::span<const double> y, std::span<double> band, int ldj,
                  int mu) const {
        const auto& g = cfg_.geometry;
        const auto& b = cfg_.binding;
        const double eps_c = g.col_porosity, eps_p = g.par_porosity;
        const double rp = g.particle_radius();
        const double film_bulk = (1.0 - eps_c) / eps_c * 3.0 / rp;
        const double solid_fac = (1.0 - eps_p) / eps_p;
        const std::size_t m = b.nu.size();
        auto at = [&](int i, int j) -> double& {
            return band[static_cast<std::size_t>(j) * ldj + (mu + i - j)];
        };

        for (int z = 0; z < nz_; ++z) {
            for (int i = 0; i < nc_; ++i) {
                const int row = idx_bulk(z, i);
                const double kf = cfg_.transport.film_coeff(i);
                double diag = -u_ / dz_ - film_bulk * kf;
                if (z > 0) {
                    diag -= d_eff_ / (dz_ * dz_);
                    at(row, idx_bulk(z - 1, i)) += (u_ + d_eff_ / dz_) / dz_;
                }
                if (z < nz_ - 1) {
                    diag -= d_eff_ / (dz_ * dz_);
                    at(row, idx_bulk(z + 1, i)) += d_eff_ / (dz_ * dz_);
                }
                at(row, row) += diag;
                at(row, idx_pore(z, nr_ - 1, i)) += film_bulk * kf;
            }
            for (int r = 0; r < nr_; ++r) {
                // SMA partials for this cell, shared by bound and pore rows
                const auto cp = y.subspan(static_cast<std::size_t>(idx_pore(z, r, 0)),
                                          static_cast<std::size_t>(nc_));
                const auto q = y.subspan(static_cast<std::size_t>(idx_bound(z, r, 0)),
                                         static_cast<std::size_t>(nc_));
                const double q0_bar = free_ligand(q, b);
                const double qb = q0_bar > 0.0 ? q0_bar : 0.0;
                const double salt = cp[0] > 0.0 ? cp[0] : 0.0;
                // rate_i = k_a c_p,i qb^nu - k_d q_i salt^nu
                // drate_[i][x]: x = 0 -> d/dcp_0, 1 -> d/dcp_i,
                //               2 -> common factor for d/dq_j (times -(nu_j+sigma_j)),
                //               3 -> d/dq_i extra (self)
                for (std::size_t i = 0; i < m; ++i) {
                    const double p_qb = std::pow(qb, b.nu[i]);
                    const double p_salt = std::pow(salt, b.nu[i]);
                    const double d_qb =
                        qb > 0.0 ? b.k_a[i] * cp[i + 1] * b.nu[i] * std::pow(qb, b.nu[i] - 1.0)
                                 : 0.0;
                    const double d_salt =
                        salt > 0.0
                            ? -b.k_d[i] * q[i + 1] * b.nu[i] * std::pow(salt, b.nu[i] - 1.0)
                            : 0.0;
                    jw_dcp0_[i] = d_salt;
                    jw_dcpi_[i] = b.k_a[i] * p_qb;
                    jw_dqfac_[i] = d_qb;  // multiply by -(nu_j + sigma_j) for q_j
                    jw_dqself_[i] = -b.k_d[i] * p_salt;
                }
                for (std::size_t i = 0; i < m; ++i) {
                    const int row = idx_bound(z, r, static_cast<int>(i) + 1);
                    at(row, idx_pore(z, r, 0)) += jw_dcp0_[i];
                    at(row, idx_pore(z, r, static_cast<int>(i) + 1)) += jw_dcpi_[i];
                    for (std::size_t j = 0; j < m; ++j) {
                        double d = -jw_dqfac_[i] * (b.nu[j] + b.sigma[j]);
                        if (i == j) d += jw_dqself_[i];
                        at(row, idx_bound(z, r, static_cast<int>(j) + 1)) += d;
                    }
                }
                {  // bound salt: dq_0 = -sum nu_i rate_i
                    const int row = idx_bound(z, r, 0);
                    double s0 = 0.0, si = 0.0;
                    for (std::size_t i = 0; i < m; ++i) s0 -= b.nu[i] * jw_dcp0_[i];
                    at(row, idx_pore(z, r, 0)) += s0;
                    for (std::size_t i = 0; i < m; ++i)
                        at(row, idx_pore(z, r, static_cast<int>(i) + 1)) -=
                            b.nu[i] * jw_dcpi_[i];
                    for (std::size_t j = 0; j < m; ++j) {
                        double d = 0.0;
                        for (std::size_t i = 0; i < m; ++i) {
                            d -= b.nu[i] * (-jw_dqfac_[i] * (b.nu[j] + b.sigma[j]));
                            if (i == j) d -= b.nu[i] * jw_dqself_[i];
                        }
                        at(row, idx_bound(z, r, static_cast<int>(j) + 1)) += d;
                    }
                    (void)si;
                }
                for (int i = 0; i < nc_; ++i) {
                    const int row = idx_pore(z, r, i);
                    const double dp = cfg_.transport.pore_diffusion(i);
                    const double kf = cfg_.transport.film_coeff(i);
                    double diag = 0.0;
                    if (r == nr_ - 1) {
                        const double a = face_area_[nr_] * (kf / eps_p) / shell_vol_;
                        diag -= a;
                        at(row, idx_bulk(z, i)) += a;
                    } else {
                        const double a =
                            face_area_[r + 1] * dp / ((rc_[r + 1] - rc_[r]) * shell_vol_);
                        diag -= a;
                        at(row, idx_pore(z, r + 1, i)) += a;
                    }
                    if (r > 0) {
                        const double a =
                            face_area_[r] * dp / ((rc_[r] - rc_[r - 1]) * shell_vol_);
                        diag -= a;
                        at(row, idx_pore(z, r - 1, i)) += a;
                    }
                    at(row, row) += diag;
                    // -solid_fac * d(rate_i)/d(cell state)
                    if (i == 0) {
                        double s0 = 0.0;
                        for (std::size_t ii = 0; ii < m; ++ii) s0 -= b.nu[ii] * jw_dcp0_[ii];
                        at(row, idx_pore(z, r, 0)) -= solid_fac * s0;
                        for (std::size_t ii = 0; ii < m; ++ii)
                            at(row, idx_pore(z, r, static_cast<int>(ii) + 1)) -=
                                solid_fac * (-b.nu[ii] * jw_dcpi_[ii]);
                        for (std::size_t j = 0; j < m; ++j) {
                            double d = 0.0;
                            for (std::size_t ii = 0; ii < m; ++ii) {
                                d -= b.nu[ii] * (-jw_dqfac_[ii] * (b.nu[j] + b.sigma[j]));
                                if (ii == j) d -= b.nu[ii] * jw_dqself_[ii];
                            }
                            at(row, idx_bound(z, r, static_cast<int>(j) + 1)) -=
                                solid_fac * d;
                        }
                    } else {
                        const std::size_t ii = static_cast<std::size_t>(i) - 1;
                        at(row, idx_pore(z, r, 0)) -= solid_fac * jw_dcp0_[ii];
                        at(row, idx_pore(z, r, i)) -= solid_fac * jw_dcpi_[ii];
                        for (std::size_t j = 0; j < m; ++j) {
                            double d = -jw_dqfac_[ii] * (b.nu[j] + b.sigma[j]);
                            if (ii == j) d += jw_dqself_[ii];
                            at(row, idx_bound(z, r, static_cast<int>(j) + 1)) -=
                                solid_fac * d;
                        }
                    }
                }
            }
        }
    }

    double shell_volume_fraction() const { return 1.0 / nr_; }

private:
    SystemConfig cfg_;
    int nz_, nr_, nc_;
    double u_, dz_, d_eff_;
    int block_;
    InletFn inlet_;
    std::vector<double> rb_, rc_, face_area_;
    double shell_vol_;
    mutable std::vector<double> cin_buf_, dq_buf_;
    mutable std::vector<double> jw_dcp0_, jw_dcpi_, jw_dqfac_, jw_dqself_;
};

// Spec-level convenience: time derivatives of a full ColumnState for a given
// instantaneous inlet vector.
inline void assemble_rhs(const ColumnState& state, std::span<const double> c_in, double u_int,
                         const SystemConfig& config, ColumnState& deriv) {
    if (!(u_int > 0.0)) throw std::invalid_argument("u_int must be > 0");
    std::vector<double> cin(c_in.begin(), c_in.end());
    ColumnModel model(config, state.nz, state.nr, u_int,
                      [&cin](double, std::span<double> out) {
                          std::copy(cin.begin(), cin.end(), out.begin());
                      });
    std::vector<double> y(model.n()), yd(model.n());
    model.pack(state, y);
    model.rhs(state.t, y, yd);
    deriv = state;
    model.unpack(yd, deriv);
}

}  // namespace smbforge

#endif
