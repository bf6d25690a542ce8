#include <tunnelex/exchange.hpp>
#include <tunnelex/propagator.hpp>
#include <tunnelex/scattering.hpp>

#include <cmath>

#include "test_util.hpp"

using namespace tunnelex;

namespace {

const Grid1D kSmall = Grid1D::centered(256, 1.0);

Field1D packet(double x0, double k0, double s, const Grid1D& g = kSmall) { return gaussian({x0, k0, s}, g); }

// Restriction to x < 0 (or x > 0), renormalised. The x = 0 cell is dropped so
// left and right pieces are exactly orthogonal.
Field1D half(const Field1D& f, bool right) {
    Field1D o(f.grid);
    for (std::size_t j = 0; j < f.size(); ++j) {
        double x = f.grid.x(j);
        if (right ? x > 0.0 : x < 0.0) o[j] = f[j];
    }
    double n = std::sqrt(norm(o));
    for (auto& v : o.values) v /= n;
    return o;
}

Field1D combine(cplx a, const Field1D& f, cplx b, const Field1D& g) {
    Field1D o(f.grid);
    for (std::size_t j = 0; j < f.size(); ++j) o[j] = a * f[j] + b * g[j];
    return o;
}

// Components with prescribed norms and overlaps: f_l, g_l live on x < 0 and
// f_r, g_r on x > 0.
struct Synthetic {
    Components a, b;
};

Synthetic synthetic(double r, double t, cplx rt_phase, cplx tr_phase, const Field1D& f_l, const Field1D& f_r,
                    const Field1D& g_l, const Field1D& g_r) {
    Synthetic s;
    s.a.reflected = combine(std::sqrt(r), half(f_l, false), 0.0, f_l);
    s.a.transmitted = combine(std::sqrt(t), half(f_r, true), 0.0, f_r);
    s.b.transmitted = combine(std::sqrt(t) * rt_phase, half(g_l, false), 0.0, g_l);
    s.b.reflected = combine(std::sqrt(r) * tr_phase, half(g_r, true), 0.0, g_r);
    return s;
}

}  // namespace

TEST(BuildTwoParticle, DisjointOrbitals) {
    auto a = packet(-60, 0.3, 10), b = packet(60, -0.3, 10);
    for (auto stats : {Statistics::fermion, Statistics::boson, Statistics::distinguishable}) {
        auto phi = build_two_particle(a, b, stats);
        EXPECT_NEAR(norm(phi), 1.0, 1e-10);
    }
    auto phi = build_two_particle(a, b, Statistics::fermion);
    EXPECT_NEAR(std::abs(phi(96, 160)), std::abs(a[96] * b[160]) / std::sqrt(2.0), 1e-15);
}

TEST(BuildTwoParticle, FermionSymmetry) {
    auto a = packet(-20, 0.3, 15), b = packet(10, -0.1, 12);
    auto phi = build_two_particle(a, b, Statistics::fermion);
    const std::size_t n = kSmall.size();
    for (std::size_t i = 0; i < n; ++i) {
        ASSERT_EQ(phi(i, i), cplx(0.0));
        for (std::size_t j = 0; j < n; ++j) ASSERT_EQ(phi(i, j), -phi(j, i));
    }
    EXPECT_NEAR(norm(phi), 1.0, 1e-10);  // overlapping orbitals stay normalised
    auto bos = build_two_particle(a, b, Statistics::boson);
    EXPECT_NEAR(norm(bos), 1.0, 1e-10);
}

TEST(BuildTwoParticle, PauliForbidden) {
    auto a = packet(-20, 0.3, 15);
    EXPECT_ERROR_KIND(build_two_particle(a, a, Statistics::fermion), ErrorKind::degenerate_state);
    EXPECT_NEAR(norm(build_two_particle(a, a, Statistics::boson)), 1.0, 1e-10);
}

TEST(Probabilities2D, InitialState) {
    auto phi = build_two_particle(packet(-60, 0.3, 10), packet(60, -0.3, 10), Statistics::fermion);
    auto p = probabilities_2d(phi, 2.0, 0.0);
    EXPECT_NEAR(p.p_lr, 1.0, 1e-10);
    EXPECT_LT(p.p_ll, 1e-12);
    EXPECT_LT(p.p_rr, 1e-12);
    EXPECT_NEAR(p.sum(), 1.0, 1e-9);
}

TEST(Probabilities2D, BarrierToleranceEnforced) {
    auto phi = build_two_particle(packet(0, 0.3, 10), packet(60, -0.3, 10), Statistics::fermion);
    EXPECT_ERROR_KIND(probabilities_2d(phi, 4.0, 0.0, 1e-3), ErrorKind::interaction_not_finished);
}

TEST(ProbabilitiesFromOrbitals, MatchesConfigurationSpace) {
    // Random smooth orbitals with overlap; the 1D formula must equal the 2D integral.
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> x(-40, 40), k(-0.5, 0.5), s(5, 20);
    for (int trial = 0; trial < 5; ++trial) {
        auto a = packet(x(rng), k(rng), s(rng)), b = packet(x(rng), k(rng), s(rng));
        for (auto stats : {Statistics::fermion, Statistics::boson, Statistics::distinguishable}) {
            auto p2 = probabilities_2d(build_two_particle(a, b, stats), 3.0, 0.0);
            auto p1 = probabilities_from_orbitals(a, b, stats, 3.0, 0.0);
            EXPECT_NEAR(p1.p_lr, p2.p_lr, 1e-12);
            EXPECT_NEAR(p1.p_ll, p2.p_ll, 1e-12);
            EXPECT_NEAR(p1.p_rr, p2.p_rr, 1e-12);
            EXPECT_NEAR(p1.p_barrier, p2.p_barrier, 1e-12);
        }
    }
}

TEST(Analytic, MaximumOverlap) {
    auto f_l = packet(-60, 0.3, 10), f_r = packet(60, 0.3, 10);
    for (double r : {0.194, 0.5, 0.9}) {
        double t = 1 - r;
        // b^t = a^r shape, b^r = -a^t shape: I^{rt} = sqrt(RT) = -I^{tr}.
        auto s = synthetic(r, t, 1.0, -1.0, f_l, f_r, f_l, f_r);
        auto fer = probabilities_analytic(s.a, s.b, Statistics::fermion);
        EXPECT_NEAR(fer.p_lr, 1.0, 1e-10);
        EXPECT_NEAR(fer.p_ll, 0.0, 1e-10);
        EXPECT_NEAR(fer.p_rr, 0.0, 1e-10);
        auto bos = probabilities_analytic(s.a, s.b, Statistics::boson);
        EXPECT_NEAR(bos.p_ll, 2 * r * t, 1e-10);
        EXPECT_NEAR(bos.p_lr, (r - t) * (r - t), 1e-10);
    }
}

TEST(Analytic, SumsToOne) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 1), ph(-M_PI, M_PI), x(30, 60), s(5, 12);
    for (int i = 0; i < 200; ++i) {
        double r = u(rng);
        auto s1 = synthetic(r, 1 - r, std::polar(1.0, ph(rng)), std::polar(1.0, ph(rng)), packet(-x(rng), 0.2, s(rng)),
                            packet(x(rng), 0.2, s(rng)), packet(-x(rng), -0.1, s(rng)), packet(x(rng), 0.1, s(rng)));
        for (auto stats : {Statistics::fermion, Statistics::boson, Statistics::distinguishable}) {
            auto p = probabilities_analytic(s1.a, s1.b, stats);
            EXPECT_NEAR(p.p_lr + p.p_ll + p.p_rr, 1.0, 1e-9);
        }
    }
}

TEST(Analytic, FermionAndBosonBounds) {
    // With orthogonal initial packets (I^{rt} + I^{tr} = 0) the fermion P_LL lies
    // in [0, R_a T_b] and the boson one in [R_a T_b, 2 R_a T_b].
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0, 1), x(30, 60), s(5, 12), k(-0.3, 0.3);
    auto f_l = half(packet(-50, 0.2, 10), false);
    auto f_r = half(packet(50, 0.2, 10), true);
    auto h = half(packet(70, -0.1, 8), true);
    h = half(combine(1.0, h, -inner_product(f_r, h), f_r), true);  // orthogonal to f_r
    for (int i = 0; i < 200; ++i) {
        double r = u(rng);
        auto g_l = half(packet(-x(rng), k(rng), s(rng)), false);
        cplx ov = inner_product(g_l, f_l);
        auto g_r = combine(-std::conj(ov), f_r, std::sqrt(1.0 - std::norm(ov)), h);
        auto s1 = synthetic(r, 1 - r, 1.0, 1.0, f_l, f_r, g_l, g_r);
        auto ci = component_integrals(s1.a, s1.b);
        ASSERT_LT(std::abs(ci.i_rt + ci.i_tr), 1e-12);
        auto fer = probabilities_analytic(ci, Statistics::fermion);
        auto bos = probabilities_analytic(ci, Statistics::boson);
        EXPECT_GE(fer.p_ll, -1e-12);
        EXPECT_LE(fer.p_ll, ci.r_a * ci.t_b + 1e-12);
        EXPECT_GE(bos.p_ll, ci.r_a * ci.t_b - 1e-12);
        EXPECT_LE(bos.p_ll, 2 * ci.r_a * ci.t_b + 1e-12);
        EXPECT_NEAR(fer.p_lr + fer.p_ll + fer.p_rr, 1.0, 1e-12);
    }
}

TEST(Limits, ClosedForms) {
    auto p = limit_probabilities(0.194, 0.806, OverlapRegime::min_overlap, Statistics::fermion);
    EXPECT_NEAR(p.p_ll, 0.194 * 0.806, 1e-12);
    EXPECT_NEAR(p.p_lr, 0.194 * 0.194 + 0.806 * 0.806, 1e-12);
    auto m = limit_probabilities(0.5, 0.5, OverlapRegime::max_overlap, Statistics::fermion);
    EXPECT_NEAR(m.p_lr, 1.0, 1e-15);
    EXPECT_EQ(m.p_ll, 0.0);
    auto b = limit_probabilities(0.3, 0.7, OverlapRegime::max_overlap, Statistics::boson);
    EXPECT_NEAR(b.p_ll, 2 * 0.3 * 0.7, 1e-15);
    EXPECT_NEAR(b.p_lr, 0.16, 1e-15);
}

TEST(Limits, MinimumOverlapIgnoresStatistics) {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 100; ++i) {
        double r = u(rng);
        auto f = limit_probabilities(r, 1 - r, OverlapRegime::min_overlap, Statistics::fermion);
        auto b = limit_probabilities(r, 1 - r, OverlapRegime::min_overlap, Statistics::boson);
        auto d = limit_probabilities(r, 1 - r, OverlapRegime::min_overlap, Statistics::distinguishable);
        EXPECT_EQ(f.p_ll, d.p_ll);
        EXPECT_EQ(f.p_lr, d.p_lr);
        EXPECT_EQ(b.p_ll, d.p_ll);
    }
}

TEST(Limits, RequiresUnitSum) {
    EXPECT_ERROR_KIND(limit_probabilities(0.3, 0.6, OverlapRegime::min_overlap, Statistics::fermion),
                      ErrorKind::invalid_argument);
}

TEST(Routes, AnalyticMatchesConfigurationSpaceAfterScattering) {
    // Same grid, same potential: the 1D component formulas and the 2D quadrant
    // integration describe the same state.
    auto c = gaas_constants();
    auto g = Grid1D::centered(512, 0.75);
    auto barrier = BarrierSpec::single(0.1, 3.0);
    auto vb = sample_barrier(barrier, g);
    auto a = packet_toward_origin(-55, 0.2, 15, c);
    auto fa = gaussian(a, g), fb = gaussian(mirror(a), g);
    PropagatorConfig cfg{0.2, 110.0, 1000, 20.0, 1e-4};
    const double w = device_half_extent(barrier);
    auto fin = evolve_1d(std::vector<Field1D>{fa, fb}, vb, cfg, c);
    for (auto stats : {Statistics::fermion, Statistics::boson}) {
        auto phi = evolve_2d(build_two_particle(fa, fb, stats), total_potential_2d(vb, std::nullopt, g), cfg, c);
        auto pa = probabilities_analytic(split_components(fin[0], IncidentSide::left, w),
                                         split_components(fin[1], IncidentSide::right, w), stats);
        // Quadrants split at x = 0 are exactly what the component formulas integrate.
        auto p0 = probabilities_2d(phi, 0.0, cfg.t_end);
        EXPECT_NEAR(p0.p_ll, pa.p_ll, 1e-10);
        EXPECT_NEAR(p0.p_rr, pa.p_rr, 1e-10);
        EXPECT_NEAR(p0.p_lr, pa.p_lr, 1e-10);
        // Leads that exclude the barrier strip differ by the mass left in it.
        auto p2 = probabilities_2d(phi, w, cfg.t_end, 1e-3);
        EXPECT_NEAR(p2.p_ll, pa.p_ll, 1e-4);
        EXPECT_NEAR(p2.p_lr, pa.p_lr, 1e-4);
        EXPECT_NEAR(p2.p_ll, p2.p_rr, 1e-9);
        // Lies between the maximum- and minimum-overlap limits.
        double r = norm(split_components(fin[0], IncidentSide::left, w).reflected);
        auto hi = limit_probabilities(r, 1 - r, OverlapRegime::max_overlap, stats);
        auto lo = limit_probabilities(r, 1 - r, OverlapRegime::min_overlap, stats);
        EXPECT_GE(pa.p_ll, std::min(hi.p_ll, lo.p_ll) - 1e-6);
        EXPECT_LE(pa.p_ll, std::max(hi.p_ll, lo.p_ll) + 1e-6);
    }
}
