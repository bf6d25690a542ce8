// Two electrons meeting at a resonant double barrier, 1D orbital route.
#include <cstdio>

#include <tunnelex/exchange.hpp>
#include <tunnelex/propagator.hpp>
#include <tunnelex/scattering.hpp>

int main() {
    using namespace tunnelex;
    const auto c = gaas_constants();
    const auto barrier = BarrierSpec::double_barrier(0.4, 0.8, 5.6);
    const double e_r = find_resonance(staircase_profile(barrier), 0.03, 0.12, c);
    std::printf("resonance at %.5f eV, T = %.4f\n", e_r, transmission(staircase_profile(barrier), e_r, c));

    const auto grid = Grid1D::centered(4096, 0.8 / 3.0);
    const auto v = sample_barrier(barrier, grid);
    auto a = packet_toward_origin(-175.0, e_r, 35.0, c);
    std::vector<Field1D> psi{gaussian(a, grid), gaussian(mirror(a), grid)};

    PropagatorConfig cfg;
    cfg.t_end = 700.0;
    auto fin = evolve_1d(psi, v, cfg, c);

    const double strip = device_half_extent(barrier);
    auto ca = split_components(fin[0], IncidentSide::left, strip);
    auto cb = split_components(fin[1], IncidentSide::right, strip);
    for (auto s : {Statistics::fermion, Statistics::boson, Statistics::distinguishable}) {
        auto p = probabilities_analytic(ca, cb, s, cfg.t_end);
        std::printf("%-16s P_LR %.4f  P_LL %.4f  P_RR %.4f\n", to_string(s), p.p_lr, p.p_ll, p.p_rr);
    }
}
