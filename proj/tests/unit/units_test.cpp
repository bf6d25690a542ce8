#include <tunnelex/units.hpp>

#include <cmath>

#include "test_util.hpp"

using namespace tunnelex;

TEST(Units, FreeElectronKineticCoefficient) {
    // hbar^2 / 2 m_e written as (hbar c)^2 / (2 m_e c^2), all in eV and nm.
    const double hbar_c = 0.6582119569 * 299.792458;
    const double expected = hbar_c * hbar_c / (2.0 * 510998.95);
    auto c = constants_for(1.0, 1.0);
    EXPECT_NEAR(c.kinetic_coeff, expected, 1e-12 * expected);
    EXPECT_NEAR(c.kinetic_coeff, 0.0381, 1e-4);
}

TEST(Units, GaAsCoefficient) {
    auto c = constants_for(0.067, 11.6);
    EXPECT_NEAR(c.kinetic_coeff, 0.0381 / 0.067, 2e-4);
    EXPECT_NEAR(c.kinetic_coeff, 0.568654, 1e-6);
    EXPECT_EQ(c.m_eff, 0.067);
    EXPECT_EQ(c.epsilon_r, 11.6);
}

TEST(Units, CoulombCoefficient) {
    auto c = constants_for(0.067, 11.6);
    EXPECT_NEAR(c.charge_coulomb_coeff, 1.43996 / 11.6, 1e-6);
}

TEST(Units, RejectsUnphysicalMaterial) {
    EXPECT_ERROR_KIND(constants_for(0.0, 1.0), ErrorKind::invalid_argument);
    EXPECT_ERROR_KIND(constants_for(-0.1, 1.0), ErrorKind::invalid_argument);
    EXPECT_ERROR_KIND(constants_for(0.067, 0.5), ErrorKind::invalid_argument);
}

TEST(Units, DispersionRoundTrip) {
    auto c = gaas_constants();
    std::uniform_real_distribution<double> log_e(-6.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        double e = std::pow(10.0, log_e(testutil::rng()));
        EXPECT_NEAR(c.energy(c.wave_number(e)), e, 1e-12 * e);
    }
}

TEST(Units, GroupVelocity) {
    // v = hbar k / m, with m = hbar^2 / (2 kinetic_coeff).
    auto c = gaas_constants();
    double k = c.wave_number(0.043);
    double m = c.hbar * c.hbar / (2.0 * c.kinetic_coeff);
    EXPECT_NEAR(c.velocity(k), c.hbar * k / m, 1e-12);
    // About 4.75e5 m/s = 0.475 nm/fs at 0.043 eV.
    EXPECT_NEAR(c.velocity(k), 0.475, 0.01);
}
