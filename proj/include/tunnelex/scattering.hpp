#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <vector>

#include "errors.hpp"
#include "potentials.hpp"
#include "propagator.hpp"
#include "units.hpp"
#include "wavepackets.hpp"

namespace tunnelex {

// Amplitudes of scattering states normalised to a unit incoming plane wave
// exp(+ikx) from the left (r, t) or exp(-ikx) from the right (r', t'), with
// absolute phases (x measured from the origin). t and t' carry the flux factor
// sqrt(k_out / k_in), so the matrix [[r, t'], [t, r']] is unitary.
struct ScatteringAmplitudes {
    double energy = 0.0;
    double k = 0.0;  // left contact wave number
    cplx r, t, r_prime, t_prime;

    double transmission() const { return std::norm(t); }
    double reflection() const { return std::norm(r); }
};

namespace detail {

struct Region {
    cplx q;           // local wave number, imaginary when evanescent
    double ref;       // plane waves measured from this point
    double length;    // ref to the next interface
};

inline cplx local_wave_number(double energy, double v, const Constants& c) {
    double e = (energy - v) / c.kinetic_coeff;
    if (std::abs(e) < 1e-14) e = e < 0.0 ? -1e-14 : 1e-14;
    return e > 0.0 ? cplx(std::sqrt(e), 0.0) : cplx(0.0, std::sqrt(-e));
}

}  // namespace detail

inline ScatteringAmplitudes transfer_matrix(const PotentialProfile& p, double energy,
                                            const Constants& c) {
    require(energy > p.left_level && energy > p.right_level, ErrorKind::unsupported_energy,
            "energy below a contact level has no propagating scattering state");
    std::vector<double> cuts;
    std::vector<double> values;
    for (const auto& s : p.segments) {
        cuts.push_back(s.x_lo);
        values.push_back(s.value);
    }
    double x_first = p.segments.empty() ? 0.0 : p.segments.front().x_lo;
    double x_last = p.segments.empty() ? 0.0 : p.segments.back().x_hi;

    // Amplitudes (A, B) of A e^{iq(x-ref)} + B e^{-iq(x-ref)}; M maps left to right.
    using M2 = std::array<cplx, 4>;
    M2 m{1.0, 0.0, 0.0, 1.0};
    cplx q_prev = detail::local_wave_number(energy, p.left_level, c);
    double ref_prev = x_first;
    auto cross = [&](double x_b, cplx q_next) {
        cplx e = std::exp(cplx(0.0, 1.0) * q_prev * (x_b - ref_prev));
        cplx ei = 1.0 / e;
        cplx ratio = q_prev / q_next;
        cplx u = 0.5 * (1.0 + ratio), w = 0.5 * (1.0 - ratio);
        M2 step{u * e, w * ei, w * e, u * ei};
        M2 out{step[0] * m[0] + step[1] * m[2], step[0] * m[1] + step[1] * m[3],
               step[2] * m[0] + step[3] * m[2], step[2] * m[1] + step[3] * m[3]};
        m = out;
        q_prev = q_next;
        ref_prev = x_b;
    };
    for (std::size_t i = 0; i < values.size(); ++i)
        cross(cuts[i], detail::local_wave_number(energy, values[i], c));
    cross(x_last, detail::local_wave_number(energy, p.right_level, c));

    double kl = std::sqrt((energy - p.left_level) / c.kinetic_coeff);
    double kr = std::sqrt((energy - p.right_level) / c.kinetic_coeff);
    const cplx i1(0.0, 1.0);
    cplx r_loc = -m[2] / m[3];
    cplx t_loc = m[0] + m[1] * r_loc;
    cplx tp_loc = 1.0 / m[3];
    cplx rp_loc = m[1] * tp_loc;

    ScatteringAmplitudes out;
    out.energy = energy;
    out.k = kl;
    cplx cross_phase = std::exp(i1 * (kl * x_first - kr * x_last));
    out.r = r_loc * std::exp(2.0 * i1 * kl * x_first);
    out.t = t_loc * cross_phase * std::sqrt(kr / kl);
    out.r_prime = rp_loc * std::exp(-2.0 * i1 * kr * x_last);
    out.t_prime = tp_loc * cross_phase * std::sqrt(kl / kr);
    return out;
}

inline ScatteringAmplitudes transfer_matrix(std::span<const double> v, const Grid1D& g,
                                            double energy, const Constants& c) {
    return transfer_matrix(profile_from_samples(v, g), energy, c);
}

inline double transmission(const PotentialProfile& p, double energy, const Constants& c) {
    return transfer_matrix(p, energy, c).transmission();
}

// Golden-section maximisation of |t(E)|^2 inside [e_lo, e_hi].
inline double find_resonance(const PotentialProfile& p, double e_lo, double e_hi,
                             const Constants& c, double tol = 1e-5) {
    require(e_lo < e_hi, ErrorKind::invalid_argument, "empty resonance bracket");
    constexpr int samples = 400;
    std::vector<double> e(samples + 1), tr(samples + 1);
    for (int i = 0; i <= samples; ++i) {
        e[i] = e_lo + (e_hi - e_lo) * i / samples;
        tr[i] = transmission(p, e[i], c);
    }
    int peaks = 0, best = -1;
    for (int i = 1; i < samples; ++i)
        if (tr[i] >= tr[i - 1] && tr[i] > tr[i + 1]) {
            ++peaks;
            if (best < 0 || tr[i] > tr[best]) best = i;
        }
    require(peaks >= 1, ErrorKind::bracket, "no interior transmission maximum in bracket");
    require(peaks == 1, ErrorKind::bracket, "more than one transmission maximum in bracket");

    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = e[best - 1], b = e[best + 1];
    double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
    double f1 = transmission(p, x1, c), f2 = transmission(p, x2, c);
    while (b - a > tol) {
        if (f1 > f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = transmission(p, x1, c);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = transmission(p, x2, c);
        }
    }
    return 0.5 * (a + b);
}

struct ScatteringMatrix {
    cplx r, t, r_prime, t_prime;
};

inline ScatteringMatrix s_matrix(const ScatteringAmplitudes& a) {
    return {a.r, a.t, a.r_prime, a.t_prime};
}

struct MonoenergeticProbabilities {
    double p_lr, p_ll, p_rr;
};

// Two fermions in mono-energetic states incident from opposite sides: the
// same-side amplitudes are r t' - t' r and t r' - r' t.
inline MonoenergeticProbabilities monoenergetic_probabilities(const ScatteringMatrix& s) {
    cplx a_lr = s.t_prime * s.t - s.r * s.r_prime;
    cplx a_ll = s.r * s.t_prime - s.t_prime * s.r;
    cplx a_rr = s.t * s.r_prime - s.r_prime * s.t;
    return {std::norm(a_lr), std::norm(a_ll), std::norm(a_rr)};
}

// k-space integrals over the spectral content of a right-moving packet:
// T = \int |g|^2 |t|^2, R = \int |g|^2 |r|^2, I = \int |g|^2 r t*.
struct SpectralCoefficients {
    double transmission = 0.0;
    double reflection = 0.0;
    cplx i_rt;
};

inline SpectralCoefficients overlap_I_rt(const SpectralAmplitude& g, const PotentialProfile& p,
                                         const Constants& c, double negative_k_tolerance = 1e-8) {
    require(g.mass_below_zero() < negative_k_tolerance, ErrorKind::invalid_argument,
            "packet has spectral weight at k < 0; expected a right-moving packet");
    double peak = 0.0;
    for (const auto& v : g.g) peak = std::max(peak, std::norm(v));
    SpectralCoefficients out;
    for (std::size_t m = 0; m < g.size(); ++m) {
        double w = std::norm(g.g[m]);
        double k = g.k(m);
        if (k <= 0.0 || w < 1e-16 * peak) continue;
        double e = c.energy(k) + p.left_level;
        if (e <= p.right_level) {
            out.reflection += w;
            continue;
        }
        auto a = transfer_matrix(p, e, c);
        out.transmission += w * a.transmission();
        out.reflection += w * a.reflection();
        out.i_rt += w * a.r * std::conj(a.t);
    }
    double dk = g.dk();
    out.transmission *= dk;
    out.reflection *= dk;
    out.i_rt *= dk;
    return out;
}

// |I^{rt}_{ab} + I^{tr}_{ab}| equals |\int g_a g_b^* dk| for packets starting
// outside the scattering region.
inline double integral_identity_check(const Field1D& a, const Field1D& b) {
    return std::abs(momentum_overlap(spectral_amplitude(a), spectral_amplitude(b)));
}

// Same residual from time-domain components after the interaction.
inline double integral_identity_check(const Components& a, const Components& b) {
    cplx i_rt = inner_product(a.reflected, b.transmitted, -kInf, 0.0);
    cplx i_tr = inner_product(a.transmitted, b.reflected, 0.0, kInf);
    return std::abs(i_rt + i_tr);
}

// Reflected packet of a left-incident packet at time t, synthesised from its
// spectral amplitude: (2 pi)^(-1/2) \int g(k) r(k) e^{-iE t/hbar} e^{-ikx} dk.
inline Field1D synthesize_reflected(const SpectralAmplitude& g, const PotentialProfile& p,
                                    double t, const Constants& c) {
    SpectralAmplitude out{g.grid, std::vector<cplx>(g.size())};
    const std::size_t n = g.size();
    double peak = 0.0;
    for (const auto& v : g.g) peak = std::max(peak, std::norm(v));
    for (std::size_t m = 0; m < n; ++m) {
        double k = g.k(m);
        if (k <= 0.0 || std::norm(g.g[m]) < 1e-20 * peak) continue;
        double e = c.energy(k);
        auto a = transfer_matrix(p, e + p.left_level, c);
        double ph = -e * t / c.hbar;
        std::size_t mirror_bin = (n - m) % n;  // bin of -k
        out.g[mirror_bin] = g.g[m] * a.r * cplx(std::cos(ph), std::sin(ph));
    }
    return synthesize(out);
}

struct ScanRow {
    double energy, transmission, reflection, arg_t, arg_r;
};

inline std::vector<ScanRow> scan_transmission(const PotentialProfile& p, double e_min, double e_max,
                                              std::size_t points, const Constants& c) {
    require(points >= 2 && e_min < e_max, ErrorKind::invalid_argument, "bad scan range");
    std::vector<ScanRow> rows;
    for (std::size_t i = 0; i < points; ++i) {
        double e = e_min + (e_max - e_min) * static_cast<double>(i) / static_cast<double>(points - 1);
        auto a = transfer_matrix(p, e, c);
        rows.push_back({e, a.transmission(), a.reflection(), std::arg(a.t), std::arg(a.r)});
    }
    return rows;
}

}  // namespace tunnelex
