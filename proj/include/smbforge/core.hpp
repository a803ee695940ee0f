#ifndef SMBFORGE_CORE_HPP
#define SMBFORGE_CORE_HPP

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace smbforge {

// Component index 0 is always the salt; proteins are 1..M.
struct ComponentSet {
    std::vector<std::string> names;  // size M+1, names[0] = salt label

    int proteins() const { return static_cast<int>(names.size()) - 1; }
    int total() const { return static_cast<int>(names.size()); }
};

struct ColumnGeometry {
    double length;        // L [m]
    double diameter;      // d_c [m]
    double particle_d;    // d_p [m]
    double col_porosity;  // eps_c
    double par_porosity;  // eps_p

    double particle_radius() const { return 0.5 * particle_d; }
    double cross_section() const { return std::numbers::pi * diameter * diameter / 4.0; }
    double volume() const { return cross_section() * length; }
};

struct TransportParams {
    double d_ax;                // axial dispersion [m^2/s]
    std::vector<double> d_p;   // pore diffusion per protein [m^2/s]
    std::vector<double> k_f;   // film mass transfer per protein [m/s]
    // Salt transport defaults to the protein values (the proteins share one
    // coefficient set anyway); override here if needed.
    double d_p_salt = -1.0;
    double k_f_salt = -1.0;

    double pore_diffusion(int comp) const {
        if (comp == 0) return d_p_salt > 0.0 ? d_p_salt : d_p.front();
        return d_p[static_cast<std::size_t>(comp) - 1];
    }
    double film_coeff(int comp) const {
        if (comp == 0) return k_f_salt > 0.0 ? k_f_salt : k_f.front();
        return k_f[static_cast<std::size_t>(comp) - 1];
    }
};

struct SMABinding {
    double lambda;               // ionic capacity [mol/m^3]
    std::vector<double> k_a;     // adsorption coefficient per protein [1/s]
    std::vector<double> k_d;     // desorption coefficient per protein [1/s]
    std::vector<double> nu;      // characteristic charge per protein
    std::vector<double> sigma;   // steric factor per protein
};

class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Immutable parameter bundle; construct through validate_system().
struct SystemConfig {
    ComponentSet components;
    ColumnGeometry geometry;
    TransportParams transport;
    SMABinding binding;

    int proteins() const { return components.proteins(); }
    int ncomp() const { return components.total(); }
    // Q = eps_c * u_int * A (interstitial velocity convention)
    double flow_from_velocity(double u_int) const {
        return geometry.col_porosity * u_int * geometry.cross_section();
    }
    double velocity_from_flow(double q) const {
        return q / (geometry.col_porosity * geometry.cross_section());
    }
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ConfigError(msg);
}

inline void require_len(const std::vector<double>& v, int m, const std::string& field) {
    if (static_cast<int>(v.size()) != m)
        throw ConfigError("dimension mismatch: " + field + " has " + std::to_string(v.size()) +
                          " entries, expected " + std::to_string(m));
}

inline void require_positive(const std::vector<double>& v, const std::string& field) {
    for (double x : v)
        if (!(x > 0.0)) throw ConfigError("out of range: " + field + " must be > 0");
}

}  // namespace detail

inline SystemConfig validate_system(const ColumnGeometry& geometry, const TransportParams& transport,
                                    const SMABinding& binding, const ComponentSet& components) {
    using detail::require;
    const int m = components.proteins();
    require(m >= 1, "component set needs at least one protein (index 0 is salt)");
    {
        std::unordered_set<std::string> seen(components.names.begin(), components.names.end());
        require(seen.size() == components.names.size(), "component labels must be unique");
    }
    require(geometry.length > 0.0, "out of range: length must be > 0");
    require(geometry.diameter > 0.0, "out of range: diameter must be > 0");
    require(geometry.particle_d > 0.0, "out of range: particle_d must be > 0");
    require(geometry.col_porosity > 0.0 && geometry.col_porosity < 1.0,
            "out of range: eps_c must lie in (0,1)");
    require(geometry.par_porosity > 0.0 && geometry.par_porosity < 1.0,
            "out of range: eps_p must lie in (0,1)");
    require(transport.d_ax > 0.0, "out of range: d_ax must be > 0");
    detail::require_len(transport.d_p, m, "d_p");
    detail::require_len(transport.k_f, m, "k_f");
    detail::require_positive(transport.d_p, "d_p");
    detail::require_positive(transport.k_f, "k_f");
    require(binding.lambda > 0.0, "out of range: lambda must be > 0");
    detail::require_len(binding.k_a, m, "k_a");
    detail::require_len(binding.k_d, m, "k_d");
    detail::require_len(binding.nu, m, "nu");
    detail::require_len(binding.sigma, m, "sigma");
    detail::require_positive(binding.k_a, "k_a");
    detail::require_positive(binding.k_d, "k_d");
    detail::require_positive(binding.nu, "nu");
    for (double s : binding.sigma)
        require(s >= 0.0, "out of range: sigma must be >= 0");
    return SystemConfig{components, geometry, transport, binding};
}

// Full discretized state of one column: bulk c (Nz x ncomp), pore c_p and
// bound q (Nz x Nr x ncomp), plus the current simulation time.
struct ColumnState {
    int nz = 0;
    int nr = 0;
    int ncomp = 0;
    double t = 0.0;
    std::vector<double> c;    // nz * ncomp
    std::vector<double> c_p;  // nz * nr * ncomp
    std::vector<double> q;    // nz * nr * ncomp

    double& bulk(int z, int i) { return c[static_cast<std::size_t>(z) * ncomp + i]; }
    double bulk(int z, int i) const { return c[static_cast<std::size_t>(z) * ncomp + i]; }
    double& pore(int z, int r, int i) {
        return c_p[(static_cast<std::size_t>(z) * nr + r) * ncomp + i];
    }
    double pore(int z, int r, int i) const {
        return c_p[(static_cast<std::size_t>(z) * nr + r) * ncomp + i];
    }
    double& bound(int z, int r, int i) {
        return q[(static_cast<std::size_t>(z) * nr + r) * ncomp + i];
    }
    double bound(int z, int r, int i) const {
        return q[(static_cast<std::size_t>(z) * nr + r) * ncomp + i];
    }
};

// Equilibrated empty column: no protein anywhere, uniform salt c0_init in the
// mobile phases, bound salt at full ionic capacity.
inline ColumnState fresh_state(const SystemConfig& config, int nz, int nr, double c0_init) {
    detail::require(nz >= 2, "out of range: Nz must be >= 2");
    detail::require(nr >= 1, "out of range: Nr must be >= 1");
    detail::require(c0_init >= 0.0, "out of range: initial salt must be >= 0");
    ColumnState s;
    s.nz = nz;
    s.nr = nr;
    s.ncomp = config.ncomp();
    s.c.assign(static_cast<std::size_t>(nz) * s.ncomp, 0.0);
    s.c_p.assign(static_cast<std::size_t>(nz) * nr * s.ncomp, 0.0);
    s.q.assign(static_cast<std::size_t>(nz) * nr * s.ncomp, 0.0);
    for (int z = 0; z < nz; ++z) {
        s.bulk(z, 0) = c0_init;
        for (int r = 0; r < nr; ++r) {
            s.pore(z, r, 0) = c0_init;
            s.bound(z, r, 0) = config.binding.lambda;
        }
    }
    return s;
}

}  // namespace smbforge

#endif
