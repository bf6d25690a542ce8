#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "errors.hpp"
#include "fft.hpp"
#include "grid.hpp"
#include "units.hpp"

namespace tunnelex {

// psi(x) ~ exp(-(x - x0)^2 / (2 sigma_x^2)) exp(i k0 x); the probability
// density then has the packet size 2 FWHM = 4 sqrt(ln 2) sigma_x.
struct WavePacketSpec {
    double x0 = 0.0;       // nm
    double k0 = 0.0;       // 1/nm, signed
    double sigma_x = 1.0;  // nm
};

// Packet at x0 with the given kinetic energy, moving toward x = 0.
inline WavePacketSpec packet_toward_origin(double x0, double kinetic_energy, double sigma_x,
                                           const Constants& c) {
    require(kinetic_energy > 0.0, ErrorKind::invalid_argument, "packet energy must be positive");
    require(sigma_x > 0.0, ErrorKind::invalid_argument, "sigma_x must be positive");
    double k = c.wave_number(kinetic_energy);
    return {x0, x0 < 0.0 ? k : -k, sigma_x};
}

inline WavePacketSpec mirror(const WavePacketSpec& s) { return {-s.x0, -s.k0, s.sigma_x}; }

// Width of the amplitude |g(k)| ~ exp(-(k - k0)^2 / (2 sigma_k^2)).
inline double sigma_k(double sigma_x) { return 1.0 / sigma_x; }

inline double packet_size(double sigma_x) { return 4.0 * std::sqrt(std::log(2.0)) * sigma_x; }
inline double sigma_from_size(double size) { return size / (4.0 * std::sqrt(std::log(2.0))); }

// Free-particle width parameter after time t.
inline double sigma_at(double sigma_x, double t, const Constants& c) {
    double tau = 2.0 * c.kinetic_coeff * t / (c.hbar * sigma_x * sigma_x);
    return sigma_x * std::sqrt(1.0 + tau * tau);
}

// Probability mass of the ideal packet outside [x_lo, x_hi].
inline double tail_mass_outside(const WavePacketSpec& s, double x_lo, double x_hi) {
    return 0.5 * std::erfc((s.x0 - x_lo) / s.sigma_x) + 0.5 * std::erfc((x_hi - s.x0) / s.sigma_x);
}

inline Field1D gaussian(const WavePacketSpec& s, const Grid1D& g) {
    require(s.sigma_x > 0.0, ErrorKind::invalid_argument, "sigma_x must be positive");
    double tail = tail_mass_outside(s, g.x_min(), g.x_max() - g.dx());
    require(tail <= 1e-6, ErrorKind::domain_too_small,
            "packet at x0 = " + std::to_string(s.x0) + " nm is clipped by the domain edge");
    Field1D f(g);
    double inv = 1.0 / (2.0 * s.sigma_x * s.sigma_x);
    for (std::size_t j = 0; j < g.size(); ++j) {
        double x = g.x(j);
        double u = x - s.x0;
        double phase = s.k0 * x;
        f[j] = std::exp(-u * u * inv) * cplx(std::cos(phase), std::sin(phase));
    }
    double scale = 1.0 / std::sqrt(norm(f));
    for (auto& v : f.values) v *= scale;
    return f;
}

inline Field1D gaussian(double x0, double k0, double sigma_x, const Grid1D& g) {
    return gaussian(WavePacketSpec{x0, k0, sigma_x}, g);
}

// g(k) = (2 pi)^(-1/2) \int f(x) exp(-i k x) dx on the FFT wave numbers of the grid.
struct SpectralAmplitude {
    Grid1D grid;
    std::vector<cplx> g;  // FFT order, see Grid1D::k

    std::size_t size() const { return g.size(); }
    double k(std::size_t m) const { return grid.k(m); }
    double dk() const { return grid.dk(); }

    double norm() const {
        double acc = 0.0;
        for (const auto& v : g) acc += std::norm(v);
        return acc * dk();
    }
    double mean_k() const {
        double acc = 0.0;
        for (std::size_t m = 0; m < g.size(); ++m) acc += k(m) * std::norm(g[m]);
        return acc * dk();
    }
    double mass_below_zero() const {
        double acc = 0.0;
        for (std::size_t m = 0; m < g.size(); ++m)
            if (k(m) < 0.0) acc += std::norm(g[m]);
        return acc * dk();
    }
};

inline SpectralAmplitude spectral_amplitude(const Field1D& f) {
    auto F = fft(f.values, true);
    const auto& grid = f.grid;
    double scale = grid.dx() / std::sqrt(2.0 * std::numbers::pi);
    double x0 = grid.x(0);
    SpectralAmplitude s{grid, std::move(F)};
    for (std::size_t m = 0; m < s.g.size(); ++m) {
        double ph = -grid.k(m) * x0;
        s.g[m] *= scale * cplx(std::cos(ph), std::sin(ph));
    }
    return s;
}

// Inverse of spectral_amplitude.
inline Field1D synthesize(const SpectralAmplitude& s) {
    const auto& grid = s.grid;
    std::vector<cplx> G(s.g.size());
    double x0 = grid.x(0);
    for (std::size_t m = 0; m < G.size(); ++m) {
        double ph = grid.k(m) * x0;
        G[m] = s.g[m] * cplx(std::cos(ph), std::sin(ph));
    }
    auto v = fft(G, false);
    double scale = std::sqrt(2.0 * std::numbers::pi) / (grid.dx() * static_cast<double>(G.size()));
    for (auto& x : v) x *= scale;
    return Field1D(grid, std::move(v));
}

inline cplx momentum_overlap(const SpectralAmplitude& a, const SpectralAmplitude& b) {
    require_same_grid(a.grid, b.grid);
    cplx acc = 0.0;
    for (std::size_t m = 0; m < a.size(); ++m) acc += a.g[m] * std::conj(b.g[m]);
    return acc * a.dk();
}

inline double mean_position(const Field1D& f) {
    double acc = 0.0, w = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j) {
        double p = std::norm(f[j]);
        acc += f.grid.x(j) * p;
        w += p;
    }
    return acc / w;
}

inline double mean_kinetic_energy(const Field1D& f, const Constants& c) {
    auto s = spectral_amplitude(f);
    double acc = 0.0;
    for (std::size_t m = 0; m < s.size(); ++m) acc += c.energy(s.k(m)) * std::norm(s.g[m]);
    return acc * s.dk() / s.norm();
}

}  // namespace tunnelex
