#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>

#include "smbforge/sma.hpp"
#include "test_systems.hpp"

using namespace smbforge;

TEST_CASE("sma_flux is zero at the empty equilibrium") {
    auto cfg = testsys::rnase_cyt_lyz();
    std::array<double, 4> cp{120.0, 0.0, 0.0, 0.0};
    std::array<double, 4> q{1200.0, 0.0, 0.0, 0.0};
    std::array<double, 4> dq{};
    sma_flux(cp, q, cfg.binding, dq);
    for (double v : dq) CHECK(v == 0.0);
    CHECK(bound_salt(q, cfg.binding) == 1200.0);
}

TEST_CASE("sma_flux matches direct arithmetic for a single adsorbing protein") {
    auto cfg = testsys::rnase_cyt_lyz();
    std::array<double, 4> cp{50.0, 1.0, 0.0, 0.0};
    std::array<double, 4> q{1200.0, 0.0, 0.0, 0.0};
    std::array<double, 4> dq{};
    sma_flux(cp, q, cfg.binding, dq);
    const double expect = 7.70 * 1.0 * std::pow(1200.0, 3.70);
    CHECK(dq[1] == Catch::Approx(expect).epsilon(1e-12));
    CHECK(dq[2] == 0.0);
    CHECK(dq[3] == 0.0);
    CHECK(dq[0] == Catch::Approx(-3.70 * expect).epsilon(1e-12));
}

namespace {

// Independent 1-D oracle: bisection on the single-protein equilibrium
// k_a c (Lambda - (nu+sigma) q)^nu = k_d q c0^nu.
double equilibrium_q(const SMABinding& b, int i, double c, double c0) {
    const double nu = b.nu[static_cast<std::size_t>(i)];
    const double sg = b.sigma[static_cast<std::size_t>(i)];
    auto f = [&](double q) {
        const double qb = b.lambda - (nu + sg) * q;
        return b.k_a[static_cast<std::size_t>(i)] * c * std::pow(qb, nu) -
               b.k_d[static_cast<std::size_t>(i)] * q * std::pow(c0, nu);
    };
    double lo = 0.0, hi = b.lambda / (nu + sg);
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        (f(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("sma_flux vanishes at the bisection-oracle equilibrium") {
    auto cfg = testsys::rnase_cyt_lyz();
    for (int i = 0; i < 3; ++i) {
        const double c = 0.5, c0 = 150.0;
        const double qeq = equilibrium_q(cfg.binding, i, c, c0);
        std::array<double, 4> cp{c0, 0.0, 0.0, 0.0};
        std::array<double, 4> q{0.0, 0.0, 0.0, 0.0};
        cp[static_cast<std::size_t>(i) + 1] = c;
        q[static_cast<std::size_t>(i) + 1] = qeq;
        q[0] = bound_salt(q, cfg.binding);
        std::array<double, 4> dq{};
        sma_flux(cp, q, cfg.binding, dq);
        const double scale = cfg.binding.k_d[static_cast<std::size_t>(i)] * qeq *
                             std::pow(c0, cfg.binding.nu[static_cast<std::size_t>(i)]);
        CHECK(std::abs(dq[static_cast<std::size_t>(i) + 1]) < 1e-9 * scale);
    }
}

TEST_CASE("sma_flux rejects states beyond the ionic capacity") {
    auto cfg = testsys::rnase_cyt_lyz();
    std::array<double, 4> cp{50.0, 1.0, 1.0, 1.0};
    std::array<double, 4> q{0.0, 100.0, 0.0, 0.0};  // (nu+sigma) q = 1370 > Lambda
    std::array<double, 4> dq{};
    CHECK_THROWS_AS(sma_flux(cp, q, cfg.binding, dq), std::runtime_error);
}

TEST_CASE("bound salt follows the steric shielding relation") {
    auto cfg = testsys::rnase_cyt_lyz();
    std::array<double, 4> q{0.0, 10.0, 5.0, 2.0};
    const double qb = 1200.0 - (3.70 + 10.0) * 10.0 - (5.29 + 10.6) * 5.0 - (4.70 + 11.83) * 2.0;
    CHECK(free_ligand(q, cfg.binding) == Catch::Approx(qb).epsilon(1e-14));
    CHECK(bound_salt(q, cfg.binding) ==
          Catch::Approx(qb + 10.0 * 10.0 + 10.6 * 5.0 + 11.83 * 2.0).epsilon(1e-14));
}
