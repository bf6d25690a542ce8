#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"
#include "propagator.hpp"

namespace tunnelex {

enum class Statistics { fermion, boson, distinguishable };

inline const char* to_string(Statistics s) {
    switch (s) {
        case Statistics::fermion: return "fermion";
        case Statistics::boson: return "boson";
        case Statistics::distinguishable: return "distinguishable";
    }
    return "?";
}

// +1 for the antisymmetric combination, -1 for the symmetric one.
inline double exchange_sign(Statistics s) {
    return s == Statistics::fermion ? 1.0 : s == Statistics::boson ? -1.0 : 0.0;
}

struct ProbabilityTriple {
    double p_lr = 0.0;
    double p_ll = 0.0;
    double p_rr = 0.0;
    double p_barrier = 0.0;
    double t = 0.0;

    double sum() const { return p_lr + p_ll + p_rr + p_barrier; }
};

inline Field2D build_two_particle(const Field1D& a, const Field1D& b, Statistics stats) {
    require_same_grid(a.grid, b.grid);
    const std::size_t n = a.size();
    Field2D phi(a.grid);
    if (stats == Statistics::distinguishable) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) phi(i, j) = a[i] * b[j];
        return phi;
    }
    double s = exchange_sign(stats);
    double overlap = std::norm(inner_product(a, b));
    double denom = 2.0 * (1.0 - s * overlap);
    require(denom > 1e-12, ErrorKind::degenerate_state,
            "fermion orbitals are linearly dependent (Pauli-forbidden state)");
    double c = 1.0 / std::sqrt(denom);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            cplx direct = a[i] * b[j];
            cplx swapped = a[j] * b[i];
            phi(i, j) = c * (stats == Statistics::fermion ? direct - swapped : direct + swapped);
        }
    return phi;
}

// Cell weights of the left lead (x < -w), barrier strip (|x| <= w) and right lead.
inline std::array<std::vector<double>, 3> lead_weights(const Grid1D& g, double strip_half_width) {
    double w = strip_half_width;
    return {g.weights(-kInf, -w), g.weights(-w, w), g.weights(w, kInf)};
}

inline ProbabilityTriple triple_from_regions(const std::array<std::array<double, 3>, 3>& m,
                                             double t) {
    ProbabilityTriple p;
    p.t = t;
    p.p_ll = m[0][0];
    p.p_rr = m[2][2];
    p.p_lr = m[0][2] + m[2][0];
    p.p_barrier = m[1][0] + m[1][1] + m[1][2] + m[0][1] + m[2][1];
    return p;
}

// Born-rule integration of |Phi|^2 over the lead quadrants.
inline ProbabilityTriple probabilities_2d(const Field2D& phi, double strip_half_width, double t,
                                          double barrier_tolerance = kInf) {
    auto p = triple_from_regions(region_masses(phi, lead_weights(phi.grid, strip_half_width)), t);
    require(p.p_barrier < barrier_tolerance, ErrorKind::interaction_not_finished,
            "barrier-strip probability " + std::to_string(p.p_barrier) + " exceeds tolerance");
    return p;
}

// Same regions for a (anti)symmetrised product state, from 1D overlaps only.
inline ProbabilityTriple probabilities_from_orbitals(const Field1D& a, const Field1D& b,
                                                     Statistics stats, double strip_half_width,
                                                     double t) {
    require_same_grid(a.grid, b.grid);
    auto w = lead_weights(a.grid, strip_half_width);
    std::array<double, 3> aa{}, bb{};
    std::array<cplx, 3> ba{};  // <b|a> over each region
    for (std::size_t j = 0; j < a.size(); ++j)
        for (std::size_t r = 0; r < 3; ++r) {
            if (w[r][j] == 0.0) continue;
            aa[r] += w[r][j] * std::norm(a[j]);
            bb[r] += w[r][j] * std::norm(b[j]);
            ba[r] += w[r][j] * std::conj(b[j]) * a[j];
        }
    double dx = a.grid.dx();
    for (std::size_t r = 0; r < 3; ++r) {
        aa[r] *= dx;
        bb[r] *= dx;
        ba[r] *= dx;
    }
    std::array<std::array<double, 3>, 3> m{};
    if (stats == Statistics::distinguishable) {
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t s = 0; s < 3; ++s) m[r][s] = aa[r] * bb[s];
    } else {
        double sign = exchange_sign(stats);
        cplx s_ab = ba[0] + ba[1] + ba[2];
        double c2 = 1.0 / (2.0 * (1.0 - sign * std::norm(s_ab)));
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t s = 0; s < 3; ++s)
                m[r][s] = c2 * (aa[r] * bb[s] + bb[r] * aa[s] -
                                sign * 2.0 * (ba[r] * std::conj(ba[s])).real());
    }
    return triple_from_regions(m, t);
}

// Reflected/transmitted norms and the cross overlaps of the two packets.
// Packet a starts on the left, b on the right.
struct ComponentIntegrals {
    double r_a = 0.0, t_a = 0.0, r_b = 0.0, t_b = 0.0;
    cplx i_rt;  // \int_{x<0} phi_a^r (phi_b^t)^*
    cplx i_tr;  // \int_{x>0} phi_a^t (phi_b^r)^*
};

inline ComponentIntegrals component_integrals(const Components& a, const Components& b) {
    ComponentIntegrals c;
    c.r_a = norm(a.reflected);
    c.t_a = norm(a.transmitted);
    c.r_b = norm(b.reflected);
    c.t_b = norm(b.transmitted);
    c.i_rt = inner_product(b.transmitted, a.reflected, -kInf, 0.0);
    c.i_tr = inner_product(b.reflected, a.transmitted, 0.0, kInf);
    return c;
}

// P_LL = R_a T_b -+ |I^{rt}|^2 and P_RR = T_a R_b -+ |I^{tr}|^2; the cross term
// of P_LR is -+2 Re(I^{rt} I^{tr*}), i.e. +-2|I^{rt}|^2 once I^{rt} = -I^{tr}.
// The full-line overlap of a and b enters the normalisation.
inline ProbabilityTriple probabilities_analytic(const ComponentIntegrals& c, Statistics stats,
                                                double t = 0.0) {
    ProbabilityTriple p;
    p.t = t;
    if (stats == Statistics::distinguishable) {
        p.p_ll = c.r_a * c.t_b;
        p.p_rr = c.t_a * c.r_b;
        p.p_lr = c.r_a * c.r_b + c.t_a * c.t_b;
    } else {
        double s = exchange_sign(stats);
        double norm_factor = 1.0 - s * std::norm(c.i_rt + c.i_tr);
        require(norm_factor > 1e-12, ErrorKind::degenerate_state, "degenerate two-particle state");
        p.p_ll = (c.r_a * c.t_b - s * std::norm(c.i_rt)) / norm_factor;
        p.p_rr = (c.t_a * c.r_b - s * std::norm(c.i_tr)) / norm_factor;
        p.p_lr = (c.r_a * c.r_b + c.t_a * c.t_b - s * 2.0 * (c.i_rt * std::conj(c.i_tr)).real()) /
                 norm_factor;
    }
    p.p_barrier = 1.0 - p.p_ll - p.p_rr - p.p_lr;
    return p;
}

inline ProbabilityTriple probabilities_analytic(const Components& a, const Components& b,
                                                Statistics stats, double t = 0.0) {
    return probabilities_analytic(component_integrals(a, b), stats, t);
}

enum class OverlapRegime { max_overlap, min_overlap };

inline ProbabilityTriple limit_probabilities(double r, double t, OverlapRegime regime,
                                             Statistics stats) {
    require(std::abs(r + t - 1.0) <= 1e-9, ErrorKind::invalid_argument, "R + T must equal 1");
    require(r >= 0.0 && t >= 0.0, ErrorKind::invalid_argument, "R and T must be non-negative");
    ProbabilityTriple p;
    double i2 = regime == OverlapRegime::max_overlap ? r * t : 0.0;
    double s = exchange_sign(stats);
    p.p_ll = r * t - s * i2;
    p.p_rr = p.p_ll;
    p.p_lr = r * r + t * t + 2.0 * s * i2;
    return p;
}

// Mirror-symmetric scenario from its one-particle k-space coefficients.
inline ProbabilityTriple probabilities_symmetric(double r, double t, double i_rt_squared,
                                                 Statistics stats) {
    double s = exchange_sign(stats);
    ProbabilityTriple p;
    p.p_ll = r * t - s * i_rt_squared;
    p.p_rr = p.p_ll;
    p.p_lr = r * r + t * t + 2.0 * s * i_rt_squared;
    p.p_barrier = 1.0 - p.p_ll - p.p_rr - p.p_lr;
    return p;
}

}  // namespace tunnelex
