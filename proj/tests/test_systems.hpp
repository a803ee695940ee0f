#ifndef SMBFORGE_TEST_SYSTEMS_HPP
#define SMBFORGE_TEST_SYSTEMS_HPP

#include "smbforge/core.hpp"

namespace testsys {

// SP Sepharose FF column with the RNase/cyt/lyz protein set.
inline smbforge::SystemConfig rnase_cyt_lyz() {
    smbforge::ComponentSet comps{{"salt", "RNase", "cyt", "lyz"}};
    smbforge::ColumnGeometry geom{1.4e-2, 1e-2, 9.0e-5, 0.37, 0.75};
    smbforge::TransportParams trans{5.75e-8, {6.07e-11, 6.07e-11, 6.07e-11},
                                    {6.90e-6, 6.90e-6, 6.90e-6}};
    smbforge::SMABinding bind{1200.0,
                              {7.70, 1.59, 35.5},
                              {1000.0, 1000.0, 1000.0},
                              {3.70, 5.29, 4.70},
                              {10.0, 10.6, 11.83}};
    return smbforge::validate_system(geom, trans, bind, comps);
}

// Same column carrying a single inert component (k_a = 0): a tracer system.
// The tiny film coefficient isolates the bulk from the particles.
inline smbforge::SystemConfig tracer(double k_f = 1e-20) {
    smbforge::ComponentSet comps{{"salt", "tracer"}};
    smbforge::ColumnGeometry geom{1.4e-2, 1e-2, 9.0e-5, 0.37, 0.75};
    smbforge::TransportParams trans{5.75e-8, {6.07e-11}, {k_f}};
    smbforge::SMABinding bind{1200.0, {1e-30}, {1000.0}, {3.70}, {10.0}};
    return smbforge::validate_system(geom, trans, bind, comps);
}

}  // namespace testsys

#endif
