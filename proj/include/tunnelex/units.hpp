#pragma once

#include <cmath>

#include "errors.hpp"

// Unit system: length nm, time fs, energy eV. Charge in units of e.
namespace tunnelex {

namespace codata {
inline constexpr double hbar = 0.6582119569;          // eV fs
inline constexpr double electron_rest_energy = 510998.95;  // eV
inline constexpr double speed_of_light = 299.792458;  // nm/fs
inline constexpr double fine_structure = 7.2973525693e-3;
}  // namespace codata

// hbar^2 / (2 m_e) in eV nm^2
inline constexpr double free_kinetic_coeff =
    codata::hbar * codata::hbar * codata::speed_of_light * codata::speed_of_light /
    (2.0 * codata::electron_rest_energy);

// e^2 / (4 pi eps0) in eV nm
inline constexpr double coulomb_coeff_vacuum =
    codata::fine_structure * codata::hbar * codata::speed_of_light;

struct Constants {
    double hbar = codata::hbar;
    double m_eff = 1.0;
    double kinetic_coeff = free_kinetic_coeff;
    double epsilon_r = 1.0;
    double charge_coulomb_coeff = coulomb_coeff_vacuum;

    double wave_number(double energy) const { return std::sqrt(energy / kinetic_coeff); }
    double energy(double k) const { return kinetic_coeff * k * k; }
    // Group velocity in nm/fs.
    double velocity(double k) const { return 2.0 * kinetic_coeff * k / hbar; }
};

inline Constants constants_for(double material_mass_fraction, double epsilon_r) {
    require(material_mass_fraction > 0.0 && std::isfinite(material_mass_fraction),
            ErrorKind::invalid_argument, "mass fraction must be positive");
    require(epsilon_r >= 1.0 && std::isfinite(epsilon_r), ErrorKind::invalid_argument,
            "epsilon_r must be >= 1");
    Constants c;
    c.m_eff = material_mass_fraction;
    c.kinetic_coeff = free_kinetic_coeff / material_mass_fraction;
    c.epsilon_r = epsilon_r;
    c.charge_coulomb_coeff = coulomb_coeff_vacuum / epsilon_r;
    return c;
}

inline Constants gaas_constants() { return constants_for(0.067, 11.6); }

}  // namespace tunnelex
