#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "exchange.hpp"
#include "fft.hpp"
#include "grid.hpp"
#include "propagator.hpp"
#include "units.hpp"
#include "wavepackets.hpp"

namespace tunnelex {

using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

enum class Side { left, right };

// half_line(l, j) = \int_0^inf psi_l^* psi_j dx, gram(l, j) over the full line.
struct CorrelationMatrix {
    CMatrix half_line;
    CMatrix gram;

    std::size_t size() const { return static_cast<std::size_t>(half_line.rows()); }
};

inline CorrelationMatrix correlation_matrix(std::span<const Field1D> packets,
                                            std::span<const Side> initial_sides,
                                            double barrier_half_extent = 0.0,
                                            double barrier_tolerance = 1e-3) {
    require(!packets.empty(), ErrorKind::invalid_argument, "no packets");
    require(initial_sides.size() == packets.size(), ErrorKind::invalid_argument,
            "one initial side per packet");
    const Grid1D& g = packets.front().grid;
    for (const auto& p : packets) {
        require_same_grid(p.grid, g);
        if (barrier_half_extent > 0.0)
            require(norm(p, -barrier_half_extent, barrier_half_extent) < barrier_tolerance,
                    ErrorKind::interaction_not_finished, "packet still inside the barrier region");
    }
    const auto n = static_cast<Eigen::Index>(packets.size());
    CorrelationMatrix m{CMatrix(n, n), CMatrix(n, n)};
    auto w = g.weights(0.0, kInf);
    for (Eigen::Index l = 0; l < n; ++l)
        for (Eigen::Index j = l; j < n; ++j) {
            const auto& a = packets[static_cast<std::size_t>(l)];
            const auto& b = packets[static_cast<std::size_t>(j)];
            cplx half = 0.0, full = 0.0;
            for (std::size_t k = 0; k < g.size(); ++k) {
                cplx v = std::conj(a[k]) * b[k];
                full += v;
                half += w[k] * v;
            }
            half *= g.dx();
            full *= g.dx();
            m.half_line(l, j) = half;
            m.gram(l, j) = full;
            m.half_line(j, l) = std::conj(half);
            m.gram(j, l) = std::conj(full);
        }
    return m;
}

// Partial-pivot LU. The pivot row is normalised before elimination, so two
// identical columns cancel exactly and give a determinant of exactly zero.
inline cplx determinant(CMatrix a) {
    const Eigen::Index n = a.rows();
    require(a.cols() == n, ErrorKind::invalid_argument, "determinant needs a square matrix");
    cplx det = 1.0;
    for (Eigen::Index c = 0; c < n; ++c) {
        Eigen::Index piv = c;
        for (Eigen::Index r = c + 1; r < n; ++r)
            if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
        if (a(piv, c) == cplx(0.0)) return 0.0;
        if (piv != c) {
            a.row(piv).swap(a.row(c));
            det = -det;
        }
        cplx p = a(c, c);
        det *= p;
        for (Eigen::Index k = c + 1; k < n; ++k) a(c, k) = a(c, k) == p ? cplx(1.0) : a(c, k) / p;
        for (Eigen::Index r = c + 1; r < n; ++r) {
            cplx f = a(r, c);
            if (f == cplx(0.0)) continue;
            for (Eigen::Index k = c + 1; k < n; ++k) a(r, k) -= f * a(c, k);
        }
    }
    return det;
}

// Ryser's formula with Gray-code updates of the row sums.
inline cplx permanent(const CMatrix& a) {
    const Eigen::Index n = a.rows();
    require(a.cols() == n, ErrorKind::invalid_argument, "permanent needs a square matrix");
    require(n <= 30, ErrorKind::size, "permanent limited to N <= 30");
    if (n == 0) return 1.0;
    std::vector<cplx> row_sum(static_cast<std::size_t>(n), 0.0);
    cplx total = 0.0;
    std::uint64_t gray = 0;
    const std::uint64_t count = std::uint64_t{1} << n;
    for (std::uint64_t i = 1; i < count; ++i) {
        std::uint64_t next = i ^ (i >> 1);
        std::uint64_t changed = next ^ gray;
        auto col = static_cast<Eigen::Index>(std::countr_zero(changed));
        double sign = (next & changed) ? 1.0 : -1.0;
        for (Eigen::Index r = 0; r < n; ++r) row_sum[static_cast<std::size_t>(r)] += sign * a(r, col);
        gray = next;
        cplx prod = 1.0;
        for (const auto& s : row_sum) prod *= s;
        int bits = std::popcount(gray);
        total += ((n - bits) % 2 == 0) ? prod : -prod;
    }
    return total;
}

inline double clamp_probability(double p) {
    require(p >= -1e-10, ErrorKind::psd_violation,
            "negative probability " + std::to_string(p) + " (matrix not PSD)");
    require(p <= 1.0 + 1e-10, ErrorKind::psd_violation,
            "probability " + std::to_string(p) + " above one");
    return std::clamp(p, 0.0, 1.0);
}

inline double prob_all_right(const CorrelationMatrix& m, Statistics stats) {
    if (stats == Statistics::distinguishable) {
        double p = 1.0;
        for (Eigen::Index i = 0; i < m.half_line.rows(); ++i)
            p *= m.half_line(i, i).real() / m.gram(i, i).real();
        return clamp_probability(p);
    }
    if (stats == Statistics::fermion) {
        // A product of many moderate eigenvalues is small without being
        // singular; test the conditioning of the unit-diagonal Gram matrix.
        Eigen::VectorXd inv = m.gram.diagonal().real().cwiseSqrt().cwiseInverse();
        CMatrix unit = inv.asDiagonal() * m.gram * inv.asDiagonal();
        double lmin = Eigen::SelfAdjointEigenSolver<CMatrix>(unit, Eigen::EigenvaluesOnly)
                          .eigenvalues()
                          .minCoeff();
        require(lmin > 1e-12, ErrorKind::degenerate_state,
                "packet set is linearly dependent (singular gram matrix)");
        double norm_det = determinant(m.gram).real();
        return clamp_probability(determinant(m.half_line).real() / norm_det);
    }
    double norm_perm = permanent(m.gram).real();
    require(norm_perm > 1e-300, ErrorKind::degenerate_state, "vanishing boson normalisation");
    return clamp_probability(permanent(m.half_line).real() / norm_perm);
}

// Permutation expansion of the all-right orthant integral, used as an oracle.
inline double brute_force_prob(const CorrelationMatrix& m, Statistics stats) {
    const auto n = static_cast<std::size_t>(m.half_line.rows());
    require(n <= 4, ErrorKind::size, "brute force limited to N <= 4");
    std::vector<std::size_t> p(n), q(n);
    auto parity = [](const std::vector<std::size_t>& v) {
        int inv = 0;
        for (std::size_t i = 0; i < v.size(); ++i)
            for (std::size_t j = i + 1; j < v.size(); ++j)
                if (v[i] > v[j]) ++inv;
        return inv % 2 ? -1.0 : 1.0;
    };
    auto expand = [&](const CMatrix& h) {
        cplx total = 0.0;
        std::iota(p.begin(), p.end(), 0);
        do {
            std::iota(q.begin(), q.end(), 0);
            do {
                double sign = 1.0;
                if (stats == Statistics::fermion) sign = parity(p) * parity(q);
                if (stats == Statistics::distinguishable && p != q) continue;
                cplx prod = 1.0;
                for (std::size_t i = 0; i < n; ++i)
                    prod *= h(static_cast<Eigen::Index>(p[i]), static_cast<Eigen::Index>(q[i]));
                total += sign * prod;
            } while (std::next_permutation(q.begin(), q.end()));
        } while (std::next_permutation(p.begin(), p.end()));
        return total.real();
    };
    return clamp_probability(expand(m.half_line) / expand(m.gram));
}

inline double brute_force_prob(std::span<const Field1D> packets, std::span<const Side> sides,
                               Statistics stats) {
    require(packets.size() <= 4, ErrorKind::size, "brute force limited to N <= 4");
    return brute_force_prob(correlation_matrix(packets, sides), stats);
}

inline double min_eigenvalue(const CMatrix& m) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

inline void check_correlation_invariants(const CorrelationMatrix& m, double tol = 1e-10) {
    require((m.half_line - m.half_line.adjoint()).cwiseAbs().maxCoeff() <= tol,
            ErrorKind::psd_violation, "half-line matrix is not Hermitian");
    require(min_eigenvalue(m.half_line) >= -tol, ErrorKind::psd_violation,
            "half-line matrix has a negative eigenvalue");
}

struct CascadeStep {
    std::size_t k = 0;
    double lhs = 0.0;             // det of the full matrix
    double rhs = 0.0;             // D_N ... D_{K+1} det of the leading K x K block
    double schur_factor = 0.0;    // det(M_{K+1}) / (D_{K+1} det(M_K)), NaN if undefined
    bool ok = true;
};

// Checks 0 <= det M_N <= D_N ... D_{K+1} det M_K for K = N-1 .. 1 and the
// Schur-complement factor of each one-row extension.
inline std::vector<CascadeStep> cascade_bound_check(const CMatrix& m, double tol = 1e-10) {
    const Eigen::Index n = m.rows();
    std::vector<double> lead(static_cast<std::size_t>(n) + 1, 1.0);
    for (Eigen::Index k = 1; k <= n; ++k) lead[static_cast<std::size_t>(k)] =
        determinant(m.topLeftCorner(k, k)).real();
    std::vector<CascadeStep> out;
    double tail = 1.0;
    for (Eigen::Index k = n - 1; k >= 1; --k) {
        double d_next = m(k, k).real();
        tail *= d_next;
        CascadeStep s;
        s.k = static_cast<std::size_t>(k);
        s.lhs = lead[static_cast<std::size_t>(n)];
        s.rhs = tail * lead[static_cast<std::size_t>(k)];
        double denom = d_next * lead[static_cast<std::size_t>(k)];
        s.schur_factor = std::abs(denom) > 1e-300 ? lead[static_cast<std::size_t>(k) + 1] / denom
                                                  : std::nan("");
        s.ok = s.lhs >= -tol && s.lhs <= s.rhs + tol;
        if (!std::isnan(s.schur_factor) && std::abs(denom) > 1e-8)
            s.ok = s.ok && s.schur_factor >= -1e-6 && s.schur_factor <= 1.0 + 1e-6;
        out.push_back(s);
    }
    return out;
}

// |<a|b>|^2 = exp(-d) for two Gaussians of equal width.
inline double phase_space_distance(const WavePacketSpec& a, const WavePacketSpec& b) {
    require(a.sigma_x == b.sigma_x, ErrorKind::invalid_argument,
            "phase-space distance needs packets of equal width");
    double sk = sigma_k(a.sigma_x);
    double dk = a.k0 - b.k0, dx = a.x0 - b.x0;
    return dk * dk / (2.0 * sk * sk) + dx * dx / (2.0 * a.sigma_x * a.sigma_x);
}

enum class Spacing { position, momentum };

struct PhaseSpaceLayout {
    std::vector<WavePacketSpec> packets;  // packets[0] starts on the right, the rest on the left
    std::vector<Side> sides;
    double d = 0.0;
};

// N-1 left packets at consecutive phase-space distance d from each other; the
// first of them sits at `left`, further ones move away from the barrier (or up
// in momentum).
inline PhaseSpaceLayout make_layout(const WavePacketSpec& left, const WavePacketSpec& right,
                                    std::size_t n, double d, Spacing spacing) {
    require(n >= 1, ErrorKind::invalid_argument, "need at least one packet");
    require(d >= 0.0, ErrorKind::invalid_argument, "d must be non-negative");
    PhaseSpaceLayout lay;
    lay.d = d;
    lay.packets.push_back(right);
    lay.sides.push_back(Side::right);
    double step = std::sqrt(2.0 * d);
    for (std::size_t j = 0; j + 1 < n; ++j) {
        WavePacketSpec p = left;
        double u = static_cast<double>(j) * step;
        if (spacing == Spacing::position)
            p.x0 -= u * left.sigma_x;
        else
            p.k0 += u * sigma_k(left.sigma_x);
        lay.packets.push_back(p);
        lay.sides.push_back(Side::left);
    }
    return lay;
}

struct PhaseSpaceSetup {
    Grid1D grid;
    std::vector<double> potential;
    Constants constants;
    WavePacketSpec left;   // reference left packet
    WavePacketSpec right;  // the single right packet
    PropagatorConfig propagation;
    double barrier_half_extent = 0.0;
    Statistics stats = Statistics::fermion;
};

struct PhaseSpaceRow {
    std::size_t n = 0;
    double d = 0.0;
    double p_norm = 0.0;  // P / T^(N-2)
    double p_raw = 0.0;
};

// Correlations of outgoing components reused across layouts. A left packet
// shifted by u has the asymptotic outgoing state chi(x + u), so every entry is
// a spectral cross-correlation of two evolved reference packets.
class TranslationCorrelator {
public:
    explicit TranslationCorrelator(const PhaseSpaceSetup& s) : grid_(s.grid) {
        Field1D a0 = gaussian(s.left, s.grid);
        Field1D b0 = gaussian(s.right, s.grid);
        std::vector<Field1D> init{a0, b0};
        auto fin = evolve_1d(init, s.potential, s.propagation, s.constants);
        auto ca = split_components(fin[0], IncidentSide::left, s.barrier_half_extent);
        auto cb = split_components(fin[1], IncidentSide::right, s.barrier_half_extent);
        transmission_ = norm(ca.transmitted);
        chi_ = fft(ca.transmitted.values);
        rho_ = fft(cb.reflected.values);
        a0_ = fft(a0.values);
        b0_ = fft(b0.values);
    }

    double transmission() const { return transmission_; }

    // \int f^*(x + u) g(x + v) dx from transforms.
    cplx correlate(const std::vector<cplx>& f, double u, const std::vector<cplx>& g, double v) const {
        double s = v - u;
        cplx acc = 0.0;
        for (std::size_t m = 0; m < f.size(); ++m) {
            double ph = grid_.k(m) * s;
            acc += std::conj(f[m]) * g[m] * cplx(std::cos(ph), std::sin(ph));
        }
        return acc * grid_.dx() / static_cast<double>(f.size());
    }

    // Packet 0 is the right packet; packet j >= 1 is the left one shifted by shifts[j].
    CorrelationMatrix matrix(std::span<const double> shifts) const {
        const auto n = static_cast<Eigen::Index>(shifts.size());
        CorrelationMatrix m{CMatrix(n, n), CMatrix(n, n)};
        for (Eigen::Index l = 0; l < n; ++l)
            for (Eigen::Index j = l; j < n; ++j) {
                double ul = shifts[static_cast<std::size_t>(l)];
                double uj = shifts[static_cast<std::size_t>(j)];
                cplx h, g;
                if (l == 0 && j == 0) {
                    h = correlate(rho_, 0.0, rho_, 0.0);
                    g = correlate(b0_, 0.0, b0_, 0.0);
                } else if (l == 0) {
                    h = correlate(rho_, 0.0, chi_, uj);
                    g = correlate(b0_, 0.0, a0_, uj);
                } else {
                    h = correlate(chi_, ul, chi_, uj);
                    g = correlate(a0_, ul, a0_, uj);
                }
                m.half_line(l, j) = h;
                m.half_line(j, l) = std::conj(h);
                m.gram(l, j) = g;
                m.gram(j, l) = std::conj(g);
            }
        return m;
    }

private:
    Grid1D grid_;
    double transmission_ = 0.0;
    std::vector<cplx> chi_, rho_, a0_, b0_;
};

inline void check_layout_fits(const PhaseSpaceSetup& s, const PhaseSpaceLayout& lay) {
    for (const auto& p : lay.packets) {
        double lo = p.x0 - 5.0 * p.sigma_x, hi = p.x0 + 5.0 * p.sigma_x;
        require(lo > s.grid.x_min() + s.propagation.guard_width &&
                    hi < s.grid.x_max() - s.propagation.guard_width,
                ErrorKind::domain_too_small,
                "phase-space layout extends into the guard band (d = " + std::to_string(lay.d) +
                    ", N = " + std::to_string(lay.packets.size()) + ")");
    }
}

// Spectra g(k) h_j(z(k)), j < n, on the FFT bins of the grid: g is the analytic
// spectrum of the left packet and h_j the normalised Hermite polynomials.
// Analytic, so high degrees find no roundoff tail to amplify.
template <class ZOfDk>
CMatrix hermite_spectra(const WavePacketSpec& left, const Grid1D& grid, std::size_t n, ZOfDk z_of) {
    CMatrix out(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(n));
    std::vector<cplx> h(n);
    for (std::size_t q = 0; q < grid.size(); ++q) {
        double dk = grid.k(q) - left.k0;
        cplx g = std::exp(cplx(-0.5 * dk * dk * left.sigma_x * left.sigma_x, -dk * left.x0));
        cplx z = z_of(dk);
        h[0] = 1.0;
        if (n > 1) h[1] = z;
        for (std::size_t j = 2; j < n; ++j)
            h[j] = (z * h[j - 1] - std::sqrt(double(j - 1)) * h[j - 2]) / std::sqrt(double(j));
        for (std::size_t j = 0; j < n; ++j)
            out(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(j)) = g * h[j];
    }
    return out;
}

// Left packets at x0, x0 - U, x0 - 2U, ... span the polynomials of degree < n
// in w = exp(ikU). With z = sqrt(2) sigma (w e^{-ik0 U} - 1) / (iU), which tends
// to sqrt(2) sigma (k - k0) as U -> 0, the spectra above span the same space
// and stay well conditioned for closely spaced layouts. The determinant ratio
// does not depend on the basis; the permanent ratio does, so fermions only.
inline CMatrix polynomial_spectra(const WavePacketSpec& left, const Grid1D& grid, double step,
                                  std::size_t n) {
    require(step > 0.0 && n >= 1, ErrorKind::invalid_argument, "bad polynomial layout");
    const double scale = std::sqrt(2.0) * left.sigma_x;
    return hermite_spectra(left, grid, n, [&](double dk) {
        double th = dk * step;
        return scale * std::polar(2.0 * std::sin(0.5 * th) / step, 0.5 * th);
    });
}

inline std::vector<Field1D> polynomial_basis(const WavePacketSpec& left, const Grid1D& grid,
                                             double step, std::size_t n) {
    CMatrix spec = polynomial_spectra(left, grid, step, n);
    std::vector<Field1D> out;
    for (Eigen::Index j = 0; j < spec.cols(); ++j) {
        SpectralAmplitude sp{grid, std::vector<cplx>(spec.col(j).data(), spec.col(j).data() + spec.rows())};
        Field1D f = synthesize(sp);
        double c = 1.0 / std::sqrt(norm(f));
        for (auto& v : f.values) v *= c;
        out.push_back(std::move(f));
    }
    return out;
}

// Reference route for closely spaced layouts: the polynomial basis itself is
// evolved on the setup grid.
inline double phase_space_probability_polynomial(const PhaseSpaceSetup& s, std::size_t n, double d) {
    require(n >= 2 && d > 0.0, ErrorKind::invalid_argument, "polynomial basis needs N >= 2, d > 0");
    std::vector<Field1D> init{gaussian(s.right, s.grid)};
    for (auto& f : polynomial_basis(s.left, s.grid, std::sqrt(2.0 * d) * s.left.sigma_x, n - 1))
        init.push_back(std::move(f));
    std::vector<Side> sides(n, Side::left);
    sides[0] = Side::right;
    auto fin = evolve_1d(init, s.potential, s.propagation, s.constants);
    return prob_all_right(correlation_matrix(fin, sides, s.barrier_half_extent), Statistics::fermion);
}

// Hermite-Gauss states g(k) h_m(sqrt(2) sigma (k - k0)), m < M, and the right
// packet, evolved once. Every polynomial basis is projected onto this set, so
// all closely spaced layouts share one batch of evolutions. By linearity the
// references may wrap around the periodic domain; only the combined states are
// held to the barrier and guard-band tolerances.
class HermiteEvolution {
public:
    HermiteEvolution(const PhaseSpaceSetup& s, std::size_t m)
        : left_(s.left), grid_(s.grid), m_(m), barrier_tolerance_(1e-3),
          guard_tolerance_(s.propagation.guard_tolerance) {
        require(m >= 1, ErrorKind::invalid_argument, "empty Hermite set");
        const Grid1D& grid = s.grid;
        spectra_ = hermite_spectra(s.left, grid, m, [&](double dk) {
            return cplx(std::sqrt(2.0) * s.left.sigma_x * dk, 0.0);
        });
        qr_.compute(spectra_);
        std::vector<Field1D> init{gaussian(s.right, grid)};
        for (Eigen::Index j = 0; j < spectra_.cols(); ++j)
            init.push_back(synthesize(SpectralAmplitude{
                grid, std::vector<cplx>(spectra_.col(j).data(), spectra_.col(j).data() + spectra_.rows())}));
        PropagatorConfig cfg = s.propagation;
        cfg.guard_tolerance = kInf;
        auto fin = evolve_1d(init, s.potential, cfg, s.constants);

        const auto n = static_cast<Eigen::Index>(fin.size());
        const auto nx = static_cast<Eigen::Index>(grid.size());
        CMatrix f(nx, n);
        for (Eigen::Index j = 0; j < n; ++j)
            f.col(j) = Eigen::Map<const CVector>(fin[static_cast<std::size_t>(j)].values.data(), nx);
        auto weighted = [&](const std::vector<double>& w) {
            CMatrix g = f;
            for (Eigen::Index i = 0; i < nx; ++i) g.row(i) *= w[static_cast<std::size_t>(i)] * grid.dx();
            return CMatrix(f.adjoint() * g);
        };
        half_ = weighted(grid.weights(0.0, kInf));
        gram_ = weighted(std::vector<double>(grid.size(), 1.0));
        strip_ = weighted(grid.weights(-s.barrier_half_extent, s.barrier_half_extent));
        std::vector<double> guard(grid.size(), 0.0);
        for (auto j : detail::guard_cells(grid, s.propagation.guard_width)) guard[j] = 1.0;
        guard_ = weighted(guard);
    }

    std::size_t size() const { return m_; }

    // Coefficients of the polynomial basis in the reference set, with the
    // relative squared residual of the worst column.
    std::pair<CMatrix, double> project(double step, std::size_t n_left) const {
        CMatrix b = polynomial_spectra(left_, grid_, step, n_left);
        CMatrix c = qr_.solve(b);
        double worst = 0.0;
        for (Eigen::Index j = 0; j < b.cols(); ++j)
            worst = std::max(worst, (spectra_ * c.col(j) - b.col(j)).squaredNorm() / b.col(j).squaredNorm());
        return {c, worst};
    }

    CorrelationMatrix matrix(double step, std::size_t n_left, double tolerance) const {
        auto [c, residual] = project(step, n_left);
        require(residual <= tolerance, ErrorKind::resolution,
                "Hermite set of " + std::to_string(m_) + " states leaves a residual of " +
                    std::to_string(residual));
        const auto n = static_cast<Eigen::Index>(n_left) + 1;
        CMatrix full = CMatrix::Zero(static_cast<Eigen::Index>(m_) + 1, n);
        full(0, 0) = 1.0;
        full.bottomRightCorner(static_cast<Eigen::Index>(m_), n - 1) = c;
        CMatrix g = full.adjoint() * gram_ * full;
        CMatrix strip = full.adjoint() * strip_ * full;
        CMatrix guard = full.adjoint() * guard_ * full;
        for (Eigen::Index j = 0; j < n; ++j) {
            double nj = g(j, j).real();
            require(strip(j, j).real() / nj < barrier_tolerance_, ErrorKind::interaction_not_finished,
                    "packet still inside the barrier region");
            require(guard(j, j).real() / nj < guard_tolerance_, ErrorKind::domain_too_small,
                    "probability reached the guard band; enlarge the domain");
        }
        return {full.adjoint() * half_ * full, g};
    }

private:
    WavePacketSpec left_;
    Grid1D grid_;
    std::size_t m_;
    double barrier_tolerance_, guard_tolerance_;
    CMatrix spectra_;
    Eigen::ColPivHouseholderQR<CMatrix> qr_;
    CMatrix half_, gram_, strip_, guard_;
};

// Worst relative squared residual of projecting the polynomial bases of the
// given layouts onto the first m Hermite-Gauss spectra.
inline double hermite_residual(const WavePacketSpec& left, const Grid1D& grid, std::size_t m,
                               std::span<const std::pair<std::size_t, double>> layouts) {
    CMatrix a = hermite_spectra(left, grid, m, [&](double dk) {
        return cplx(std::sqrt(2.0) * left.sigma_x * dk, 0.0);
    });
    Eigen::ColPivHouseholderQR<CMatrix> qr(a);
    double worst = 0.0;
    for (auto [n_left, step] : layouts) {
        CMatrix b = polynomial_spectra(left, grid, step, n_left);
        CMatrix c = qr.solve(b);
        for (Eigen::Index j = 0; j < b.cols(); ++j)
            worst = std::max(worst, (a * c.col(j) - b.col(j)).squaredNorm() / b.col(j).squaredNorm());
    }
    return worst;
}

// Setup for layouts reaching max_extent to the left of the reference packet:
// the run is extended until the farthest packet has crossed as well, on the
// smallest centred sub-grid that holds the outgoing parts by then.
inline PhaseSpaceSetup compact_setup(const PhaseSpaceSetup& s, double max_extent) {
    const auto& c = s.constants;
    PhaseSpaceSetup out = s;
    double t = s.propagation.t_end + max_extent / c.velocity(std::abs(s.left.k0));
    out.propagation.t_end = t;
    // Fastest significant component; its travel already covers the spreading.
    double v = c.velocity(std::abs(s.left.k0) + 4.0 / s.left.sigma_x);
    double reach = 0.0;
    for (double a : {std::abs(s.right.x0), std::abs(s.left.x0), std::abs(s.left.x0) + max_extent})
        reach = std::max({reach, a, std::abs(v * t - a)});
    reach += 5.0 * s.left.sigma_x;
    double need = 2.0 * (reach + s.propagation.guard_width + 10.0) / s.grid.dx();
    std::size_t n = 2;
    while (static_cast<double>(n) < need) n *= 2;
    if (n >= s.grid.size()) return out;
    out.grid = Grid1D::centered(n, s.grid.dx());
    const std::size_t off = (s.grid.size() - n) / 2;
    out.potential.assign(s.potential.begin() + static_cast<std::ptrdiff_t>(off),
                         s.potential.begin() + static_cast<std::ptrdiff_t>(off + n));
    return out;
}

inline constexpr double kHermiteTolerance = 1e-10;

inline constexpr double kPolynomialBasisMaxD = 0.2;

inline std::vector<PhaseSpaceRow> phase_space_sweep(const PhaseSpaceSetup& s,
                                                    std::span<const std::size_t> ns,
                                                    std::span<const double> ds) {
    TranslationCorrelator corr(s);
    double t = corr.transmission();
    // Closely spaced packets are nearly parallel; their span is handled through
    // a shared, well-conditioned Hermite set instead.
    auto closely_spaced = [&](std::size_t n, double d) {
        return s.stats == Statistics::fermion && n > 2 && d > 0.0 && d <= kPolynomialBasisMaxD;
    };
    std::vector<std::pair<std::size_t, double>> close;
    double extent = 0.0;
    for (auto n : ns)
        for (double d : ds)
            if (closely_spaced(n, d)) {
                double step = std::sqrt(2.0 * d) * s.left.sigma_x;
                close.emplace_back(n - 1, step);
                extent = std::max(extent, static_cast<double>(n - 2) * step);
            }
    std::optional<HermiteEvolution> hermite;
    if (!close.empty()) {
        auto sc = compact_setup(s, extent);
        std::size_t m = 20;
        for (auto [n_left, step] : close) m = std::max(m, 2 * n_left);
        while (hermite_residual(s.left, sc.grid, m, close) > kHermiteTolerance) {
            m += 5;
            require(m <= 400, ErrorKind::resolution, "no Hermite set represents the closely spaced layouts");
        }
        hermite.emplace(sc, m);
    }
    std::vector<PhaseSpaceRow> rows;
    for (auto n : ns) {
        require(n >= 1, ErrorKind::invalid_argument, "N must be >= 1");
        for (double d : ds) {
            auto lay = make_layout(s.left, s.right, n, d, Spacing::position);
            check_layout_fits(s, lay);
            PhaseSpaceRow row;
            row.n = n;
            row.d = d;
            try {
                if (d == 0.0 && n > 2 && s.stats == Statistics::fermion) {
                    row.p_raw = 0.0;
                } else if (closely_spaced(n, d)) {
                    double step = std::sqrt(2.0 * d) * s.left.sigma_x;
                    row.p_raw = prob_all_right(hermite->matrix(step, n - 1, kHermiteTolerance), s.stats);
                } else {
                    std::vector<double> shifts{0.0};
                    for (std::size_t j = 1; j < n; ++j) shifts.push_back(s.left.x0 - lay.packets[j].x0);
                    row.p_raw = prob_all_right(corr.matrix(shifts), s.stats);
                }
            } catch (const Error& e) {
                fail(e.kind(), e.message() + " (N = " + std::to_string(n) + ", d = " + std::to_string(d) + ")");
            }
            row.p_norm = row.p_raw / std::pow(t, static_cast<double>(n) - 2.0);
            rows.push_back(row);
        }
    }
    return rows;
}

// Reference route: every packet of the layout is evolved on its own until all
// have left the barrier region, then the matrix is built from the fields.
inline double phase_space_probability_direct(const PhaseSpaceSetup& s, std::size_t n, double d,
                                             Spacing spacing, double t_end) {
    auto lay = make_layout(s.left, s.right, n, d, spacing);
    check_layout_fits(s, lay);
    std::vector<Field1D> init;
    for (const auto& p : lay.packets) init.push_back(gaussian(p, s.grid));
    PropagatorConfig cfg = s.propagation;
    cfg.t_end = t_end;
    auto fin = evolve_1d(init, s.potential, cfg, s.constants);
    auto m = correlation_matrix(fin, lay.sides, s.barrier_half_extent);
    return prob_all_right(m, s.stats);
}

}  // namespace tunnelex
