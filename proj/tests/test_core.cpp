#include <catch2/catch_amalgamated.hpp>

#include "smbforge/core.hpp"
#include "smbforge/sma.hpp"
#include "test_systems.hpp"

using namespace smbforge;

TEST_CASE("validate_system accepts the reference parameter set") {
    auto cfg = testsys::rnase_cyt_lyz();
    CHECK(cfg.proteins() == 3);
    CHECK(cfg.ncomp() == 4);
    CHECK(cfg.geometry.particle_radius() == Catch::Approx(4.5e-5));
    CHECK(cfg.binding.lambda == 1200.0);
}

TEST_CASE("validate_system is pure") {
    auto a = testsys::rnase_cyt_lyz();
    auto b = testsys::rnase_cyt_lyz();
    CHECK(a.binding.k_a == b.binding.k_a);
    CHECK(a.geometry.length == b.geometry.length);
}

TEST_CASE("validate_system rejects out-of-range porosity naming the field") {
    ComponentSet comps{{"salt", "p1"}};
    ColumnGeometry geom{1.4e-2, 1e-2, 9.0e-5, 1.2, 0.75};
    TransportParams trans{5.75e-8, {6.07e-11}, {6.90e-6}};
    SMABinding bind{1200.0, {7.7}, {1000.0}, {3.7}, {10.0}};
    CHECK_THROWS_WITH(validate_system(geom, trans, bind, comps),
                      Catch::Matchers::ContainsSubstring("eps_c"));
}

TEST_CASE("validate_system rejects mismatched array lengths") {
    ComponentSet comps{{"salt", "a", "b", "c"}};
    ColumnGeometry geom{1.4e-2, 1e-2, 9.0e-5, 0.37, 0.75};
    TransportParams trans{5.75e-8, {6.07e-11, 6.07e-11, 6.07e-11},
                          {6.90e-6, 6.90e-6, 6.90e-6}};
    SMABinding bind{1200.0, {7.7, 1.6}, {1000.0, 1000.0, 1000.0},
                    {3.7, 5.3, 4.7}, {10.0, 10.6, 11.8}};
    CHECK_THROWS_WITH(validate_system(geom, trans, bind, comps),
                      Catch::Matchers::ContainsSubstring("k_a"));
}

TEST_CASE("validate_system rejects duplicate labels") {
    ComponentSet comps{{"salt", "x", "x"}};
    ColumnGeometry geom{1.4e-2, 1e-2, 9.0e-5, 0.37, 0.75};
    TransportParams trans{5.75e-8, {6.07e-11, 6.07e-11}, {6.9e-6, 6.9e-6}};
    SMABinding bind{1200.0, {7.7, 1.6}, {1e3, 1e3}, {3.7, 5.3}, {10.0, 10.6}};
    CHECK_THROWS_AS(validate_system(geom, trans, bind, comps), ConfigError);
}

TEST_CASE("fresh_state sets salt everywhere and full ionic capacity") {
    auto cfg = testsys::rnase_cyt_lyz();
    auto s = fresh_state(cfg, 40, 10, 50.0);
    CHECK(s.c.size() == 40u * 4);
    CHECK(s.c_p.size() == 40u * 10 * 4);
    CHECK(s.q.size() == 40u * 10 * 4);
    for (int z = 0; z < 40; ++z) {
        CHECK(s.bulk(z, 0) == 50.0);
        CHECK(s.bulk(z, 2) == 0.0);
        for (int r = 0; r < 10; ++r) {
            CHECK(s.pore(z, r, 0) == 50.0);
            CHECK(s.bound(z, r, 0) == 1200.0);
        }
    }
}

TEST_CASE("fresh_state with zero salt leaves empty mobile phases") {
    auto cfg = testsys::rnase_cyt_lyz();
    auto s = fresh_state(cfg, 5, 3, 0.0);
    for (double v : s.c) CHECK(v == 0.0);
    for (double v : s.c_p) CHECK(v == 0.0);
    for (int z = 0; z < 5; ++z)
        for (int r = 0; r < 3; ++r) CHECK(s.bound(z, r, 0) == 1200.0);
}

TEST_CASE("fresh_state satisfies electro-neutrality exactly") {
    auto cfg = testsys::rnase_cyt_lyz();
    auto s = fresh_state(cfg, 8, 4, 120.0);
    for (int z = 0; z < 8; ++z)
        for (int r = 0; r < 4; ++r) {
            std::span<const double> q(&s.q[(static_cast<std::size_t>(z) * 4 + r) * 4], 4);
            CHECK(free_ligand(q, cfg.binding) == cfg.binding.lambda);
            CHECK(bound_salt(q, cfg.binding) == s.bound(z, r, 0));
        }
}

TEST_CASE("fresh_state rejects bad grid sizes") {
    auto cfg = testsys::rnase_cyt_lyz();
    CHECK_THROWS_AS(fresh_state(cfg, 1, 10, 50.0), ConfigError);
    CHECK_THROWS_AS(fresh_state(cfg, 40, 0, 50.0), ConfigError);
}
