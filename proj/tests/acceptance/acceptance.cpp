// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <tunnelex/builtins.hpp>
#include <tunnelex/runner.hpp>

namespace {

using namespace tunnelex;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string f(double v, const char* spec = "%.4g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

const ProbabilityTriple& final_row(const PointResult& pr, const std::string& route) {
    const ProbabilityTriple* out = nullptr;
    for (const auto& r : pr.rows)
        if (r.route == route) out = &r.p;
    require(out != nullptr, ErrorKind::invalid_argument, "no " + route + " row");
    return *out;
}

// A single 2D point and the separable 1D reference evaluated on the same grid.
struct Run2D {
    PointResult point;
    double wall = 0.0;
    std::optional<ProbabilityTriple> same_grid;  // only for C = 0
    ScenarioConfig config;
};

class Shared {
public:
    // Two-particle point of a builtin restricted to one sweep value, quadrant2d only.
    const Run2D& run_2d(const std::string& name, const EnergyValue& value) {
        std::string key = name + "@" + value.text();
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
        auto cfg = load_builtin(name);
        cfg.sweep.values = {value};
        cfg.routes = {"quadrant2d"};
        cfg.time_series = false;
        if (!cfg.coulomb) cfg.grid_2d = {0.8, 2048};
        std::fprintf(stderr, "  [2D] %s %s ...\n", name.c_str(), value.text().c_str());
        auto res = run(cfg);
        Run2D r;
        r.point = res.points.front();
        r.wall = res.wall_seconds;
        r.config = cfg;
        if (r.point.point.coulomb_strength == 0.0) r.same_grid = same_grid_analytic(res.scenario, r.point.point);
        std::fprintf(stderr, "  [2D] %s %s done in %.0f s\n", name.c_str(), value.text().c_str(), r.wall);
        return cache_.emplace(key, std::move(r)).first->second;
    }

    std::vector<const Run2D*> all_2d() {
        std::vector<const Run2D*> out;
        for (const auto& [k, v] : cache_) out.push_back(&v);
        return out;
    }

    const RunResult& fig4_1d() {
        if (!fig4_) {
            auto cfg = load_builtin("fig4");
            cfg.routes = {"analytic", "determinant", "kspace"};
            cfg.time_series = false;
            fig4_ = run(cfg);
        }
        return *fig4_;
    }

    void ensure_separable_2d() {
        run_2d("fig4", EnergyValue{true, 0.0});
        run_2d("fig4", EnergyValue{false, 0.12});
        run_2d("fig8", EnergyValue{false, 0.0});
        run_2d("fig9", EnergyValue{false, 0.0});
        run_2d("fig11", EnergyValue{false, 0.0});
    }
    void ensure_coulomb_2d() {
        for (double cv : {0.0, 5.0, 20.0}) run_2d("fig8", EnergyValue{false, cv});
        for (double cv : {0.0, 5.0}) run_2d("fig11", EnergyValue{false, cv});
    }

private:
    static ProbabilityTriple same_grid_analytic(const ResolvedScenario& rs, const ResolvedPoint& pt) {
        const auto& cfg = rs.config;
        const Grid1D& g = pt.grid_2d;
        auto v = sample_barrier(cfg.barrier, g);
        PropagatorConfig pc;
        pc.dt = cfg.propagation.dt_2d;
        pc.t_end = pt.t1;
        pc.guard_width = cfg.propagation.guard;
        std::vector<Field1D> init{gaussian(pt.a, g), gaussian(pt.b, g)};
        auto fin = evolve_1d(init, v, pc, rs.constants);
        double strip = device_half_extent(cfg.barrier);
        return probabilities_analytic(split_components(fin[0], IncidentSide::left, strip),
                                      split_components(fin[1], IncidentSide::right, strip), cfg.stats,
                                      pt.t1);
    }

    std::map<std::string, Run2D> cache_;
    std::optional<RunResult> fig4_;
};

// 1. Resonance location.
Outcome resonance_location(Shared&) {
    auto t0 = std::chrono::steady_clock::now();
    auto c = gaas_constants();
    double e0 = find_resonance(staircase_profile(BarrierSpec::double_barrier(0.4, 0.8, 5.6)), 0.03, 0.12, c);
    double e1 = find_resonance(staircase_profile(BarrierSpec::double_barrier(0.4, 0.8, 5.6, 0.05)), 0.02,
                               0.1, c);
    double wall = seconds_since(t0);
    bool ok = std::abs(e0 - 0.069) <= 0.002 && std::abs(e1 - 0.043) <= 0.003 && wall < 1.0;
    return {ok, "E_R = " + f(e0, "%.5f") + " eV (target 0.069 +- 0.002), biased E_R = " + f(e1, "%.5f") +
                    " eV (target 0.043 +- 0.003), " + f(wall, "%.3f") + " s"};
}

// 2. One-particle coefficients at resonance.
Outcome one_particle(Shared&) {
    auto cfg = load_builtin("fig4");
    cfg.sweep.values = {EnergyValue{true, 0.0}};
    cfg.routes = {"analytic", "kspace"};
    cfg.time_series = false;
    auto res = run(cfg);
    const auto& info = res.points.front().info;
    double t = info["T_a"], r = info["R_a"], tk = info["T_kspace"], rk = info["R_kspace"];
    bool ok = std::abs(t - 0.806) <= 0.01 && std::abs(r - 0.194) <= 0.01 && std::abs(tk - t) <= 1e-3 &&
              std::abs(rk - r) <= 1e-3 && res.wall_seconds < 10.0;
    return {ok, "T = " + f(t, "%.4f") + ", R = " + f(r, "%.4f") + " (target 0.806 / 0.194 +- 0.01); k-space T = " +
                    f(tk, "%.4f") + " (|diff| " + f(std::abs(tk - t), "%.1e") + "), " +
                    f(res.wall_seconds, "%.1f") + " s"};
}

// 3. Endpoints of the two-particle run at resonance and at 0.12 eV (2D route).
Outcome fig4_endpoints(Shared& s) {
    const auto& one = s.fig4_1d();
    const auto& info = one.points[2].info;
    double rt = info["R_a"].get<double>() * info["T_a"].get<double>();
    const auto& res = s.run_2d("fig4", EnergyValue{true, 0.0});
    const auto& hi = s.run_2d("fig4", EnergyValue{false, 0.12});
    auto p = final_row(res.point, "quadrant2d");
    auto q = final_row(hi.point, "quadrant2d");
    bool ok = std::abs(p.p_ll - rt) <= 0.015 && std::abs(p.p_rr - rt) <= 0.015 &&
              std::abs(p.p_lr - (1.0 - 2.0 * rt)) <= 0.02 && q.p_ll <= 0.02 && q.p_lr >= 0.96 &&
              res.wall <= 900.0 && hi.wall <= 900.0;
    return {ok, "resonance: P_LL = " + f(p.p_ll) + ", P_RR = " + f(p.p_rr) + " vs RT = " + f(rt) +
                    ", P_LR = " + f(p.p_lr) + " vs 1-2RT = " + f(1.0 - 2.0 * rt) + "; 0.12 eV: P_LL = " +
                    f(q.p_ll) + ", P_LR = " + f(q.p_lr) + "; 2D wall " + f(res.wall, "%.0f") + " s / " +
                    f(hi.wall, "%.0f") + " s"};
}

// 4. Single barrier half transmission and the sigma sweep.
Outcome single_barrier(Shared&) {
    auto c = gaas_constants();
    double t = transmission(staircase_profile(BarrierSpec::single(0.04, 12.4)), 0.045, c);
    auto cfg = load_builtin("fig10");
    cfg.curves = {EnergyValue{false, 0.045}};
    cfg.routes = {"analytic"};
    auto res = run(cfg);
    std::vector<std::pair<double, double>> sweep;  // sigma, P_LL
    for (const auto& pr : res.points) sweep.emplace_back(pr.point.sigma, final_row(pr, "analytic").p_ll);
    bool monotone = true;
    double at35 = -1.0, last = 1.0;
    std::string list;
    double prev = 2.0;
    for (auto [sig, pll] : sweep) {
        list += f(sig, "%.0f") + ":" + f(pll, "%.4f") + " ";
        if (sig == 35.0) at35 = pll;
        if (sig >= 35.0) {
            monotone = monotone && pll <= prev;
            prev = pll;
        }
        last = pll;
    }
    bool sweep_ok = monotone && at35 > 0.01 && last < 0.01;
    bool ok = std::abs(t - 0.5) <= 0.02 && sweep_ok;
    return {ok, "T(0.045 eV) = " + f(t, "%.4f") + " (target 0.5 +- 0.02); sigma sweep P_LL {" + list +
                    "} monotone for sigma >= 35: " + (monotone ? "yes" : "no") + ", P_LL(35) > 0.01: " +
                    (at35 > 0.01 ? "yes" : "no") + ", P_LL(150) < 0.01: " + (last < 0.01 ? "yes" : "no")};
}

// 5. Route equivalence.
Outcome route_equivalence(Shared& s) {
    s.ensure_separable_2d();
    double worst_same = 0.0, worst_cross = 0.0;
    std::string where;
    for (const auto* r : s.all_2d()) {
        if (!r->same_grid) continue;
        auto q = final_row(r->point, "quadrant2d");
        const auto& a = *r->same_grid;
        double d = std::max({std::abs(q.p_ll - a.p_ll), std::abs(q.p_rr - a.p_rr), std::abs(q.p_lr - a.p_lr)});
        if (d > worst_same) {
            worst_same = d;
            where = r->config.name + " E=" + f(r->point.point.energy);
        }
    }
    const auto& one = s.fig4_1d();
    double worst_det = 0.0;
    for (const auto& pr : one.points) {
        auto a = final_row(pr, "analytic");
        auto d = final_row(pr, "determinant");
        worst_det = std::max({worst_det, std::abs(a.p_ll - d.p_ll), std::abs(a.p_rr - d.p_rr),
                              std::abs(a.p_lr - d.p_lr)});
    }
    // Same check against the fine 1D grid, reported only.
    for (const auto* r : s.all_2d()) {
        if (r->config.name != "fig4") continue;
        auto q = final_row(r->point, "quadrant2d");
        for (const auto& pr : one.points)
            if (pr.point.energy == r->point.point.energy) {
                auto a = final_row(pr, "analytic");
                worst_cross = std::max({worst_cross, std::abs(q.p_ll - a.p_ll), std::abs(q.p_lr - a.p_lr)});
            }
    }
    bool ok = worst_same < 1e-3 && worst_det < 1e-6;
    return {ok, "max |quadrant2d - analytic| on the 2D grid = " + f(worst_same, "%.2e") +
                    (where.empty() ? "" : " (" + where + ")") + "; determinant vs analytic = " +
                    f(worst_det, "%.2e") + "; 2D vs fine-grid 1D (informational) = " + f(worst_cross, "%.2e")};
}

// 6. Conservation and symmetry.
Outcome conservation(Shared& s) {
    s.ensure_separable_2d();
    s.ensure_coulomb_2d();
    double drift = 0.0, anti = 0.0, sum_err = 0.0, asym = 0.0, mirror = 0.0;
    for (const auto& pr : s.fig4_1d().points) drift = std::max(drift, pr.info["norm_drift_1d"].get<double>());
    for (const auto* r : s.all_2d()) {
        const auto& info = r->point.info;
        drift = std::max(drift, info["norm_drift_2d"].get<double>());
        if (info.contains("exchange_residual_2d"))
            anti = std::max(anti, info["exchange_residual_2d"].get<double>());
        if (info.contains("mirror_residual_2d")) mirror = std::max(mirror, info["mirror_residual_2d"].get<double>());
        auto q = final_row(r->point, "quadrant2d");
        sum_err = std::max(sum_err, std::abs(q.p_ll + q.p_rr + q.p_lr - 1.0));
        asym = std::max(asym, std::abs(q.p_ll - q.p_rr));
    }
    bool ok = drift < 1e-9 && anti < 1e-8 && sum_err <= 1e-6 && asym < 1e-3;
    return {ok, "norm drift " + f(drift, "%.1e") + ", antisymmetry residual " + f(anti, "%.1e") +
                    ", |P_LL+P_RR+P_LR-1| " + f(sum_err, "%.1e") + ", |P_LL-P_RR| " + f(asym, "%.1e") +
                    " over " + std::to_string(s.all_2d().size()) + " 2D runs (mirror residual " +
                    f(mirror, "%.1e") + ")"};
}

// 7. Mono-energetic scattering states.
Outcome monoenergetic(Shared&) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n01;
    double worst_same = 0.0, worst_lr = 0.0;
    for (int i = 0; i < 1000; ++i) {
        Eigen::Matrix2cd m;
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) m(a, b) = cplx(n01(rng), n01(rng));
        Eigen::HouseholderQR<Eigen::Matrix2cd> qr(m);
        Eigen::Matrix2cd u = qr.householderQ();
        auto p = monoenergetic_probabilities({u(0, 0), u(1, 0), u(1, 1), u(0, 1)});
        worst_same = std::max({worst_same, p.p_ll, p.p_rr});
        worst_lr = std::max(worst_lr, std::abs(p.p_lr - 1.0));
    }
    bool ok = worst_same < 1e-24 && worst_lr <= 1e-12;
    return {ok, "1000 random unitary S: max P_LL, P_RR = " + f(worst_same, "%.1e") + ", max |P_LR - 1| = " +
                    f(worst_lr, "%.1e")};
}

// 8. Correlation-matrix properties.
Outcome correlation_suite(Shared&) {
    auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n01;
    std::uniform_real_distribution<double> u(0.05, 1.0);
    std::uniform_int_distribution<int> size(2, 6);
    double slack = kInf;
    bool identical_zero = true;
    double diag_err = 0.0;
    for (int i = 0; i < 1000; ++i) {
        int n = size(rng);
        CMatrix v(n, n);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) v(a, b) = cplx(n01(rng), n01(rng));
        for (int b = 0; b < n; ++b) v.col(b) *= std::sqrt(u(rng)) / v.col(b).norm();
        CMatrix m = v.adjoint() * v;
        for (const auto& st : cascade_bound_check(m)) slack = std::min({slack, st.lhs, st.rhs - st.lhs});
        CMatrix dup = m;
        dup.col(n - 1) = dup.col(0);
        identical_zero = identical_zero && determinant(dup) == cplx(0.0);
        CMatrix diag = CMatrix::Zero(n, n);
        double prod = 1.0;
        for (int a = 0; a < n; ++a) {
            diag(a, a) = m(a, a).real();
            prod *= m(a, a).real();
        }
        diag_err = std::max(diag_err, std::abs(determinant(diag).real() - prod));
    }

    PhaseSpaceSetup ps;
    ps.constants = gaas_constants();
    ps.grid = Grid1D::centered(4096, 0.5);
    auto barrier = BarrierSpec::single(0.05, 6.0);
    ps.potential = sample_barrier(barrier, ps.grid);
    ps.left = packet_toward_origin(-80, 0.05, 15, ps.constants);
    ps.right = mirror(ps.left);
    ps.propagation.t_end = 600;
    ps.propagation.dt = 0.1;
    double brute = 0.0;
    int layouts = 0;
    for (std::size_t n = 1; n <= 4; ++n)
        for (double d : {0.1, 0.5, 1.0, 2.0}) {
            auto lay = make_layout(ps.left, ps.right, n, d, Spacing::position);
            std::vector<Field1D> init;
            for (const auto& p : lay.packets) init.push_back(gaussian(p, ps.grid));
            auto fin = evolve_1d(init, ps.potential, ps.propagation, ps.constants);
            auto m = correlation_matrix(fin, lay.sides, device_half_extent(barrier));
            for (auto st : {Statistics::fermion, Statistics::boson, Statistics::distinguishable})
                brute = std::max(brute, std::abs(brute_force_prob(m, st) - prob_all_right(m, st)));
            ++layouts;
        }
    double wall = seconds_since(t0);
    bool ok = slack >= -1e-10 && identical_zero && diag_err <= 1e-12 && brute <= 1e-10 && wall < 30.0;
    return {ok, "cascade min slack " + f(slack, "%.1e") + ", identical columns exactly 0: " +
                    (identical_zero ? "yes" : "no") + ", diagonal error " + f(diag_err, "%.1e") +
                    ", brute force vs determinant over " + std::to_string(layouts) + " layouts " +
                    f(brute, "%.1e") + ", " + f(wall, "%.1f") + " s"};
}

// 9. Phase-space dependence of the all-right probability.
Outcome phase_space_shape(Shared&) {
    auto res = run(load_builtin("fig13"));
    std::map<std::size_t, std::vector<std::pair<double, double>>> curves;
    for (const auto& r : res.phase_rows) curves[r.n].emplace_back(r.d, r.p_norm);
    double ref = curves.at(2).front().second;
    bool ok = res.wall_seconds < 300.0;
    std::map<std::size_t, double> d_half;
    std::string detail = "P2 = " + f(ref, "%.4f");
    for (auto& [n, pts] : curves) {
        double hi_worst = 0.0, lo_worst = 0.0;
        for (auto [d, p] : pts) {
            if (d >= 8.0) hi_worst = std::max(hi_worst, std::abs(p / ref - 1.0));
            if (d <= 0.05 && n > 2) lo_worst = std::max(lo_worst, p / ref);
        }
        double dh = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i)
            if (pts[i].second >= 0.5 * ref) {
                if (i > 0) {
                    auto [d0, p0] = pts[i - 1];
                    auto [d1, p1] = pts[i];
                    dh = d0 + (0.5 * ref - p0) * (d1 - d0) / (p1 - p0);
                }
                break;
            }
        d_half[n] = dh;
        ok = ok && hi_worst <= 0.05 && lo_worst < 0.05;
        detail += "; N=" + std::to_string(n) + ": max dev at d>=8 " + f(100 * hi_worst, "%.2f") + "%";
        if (n > 2) detail += ", max at d<=0.05 " + f(100 * lo_worst, "%.2f") + "%, d_half " + f(dh, "%.3f");
    }
    double prev = -1.0;
    for (const auto& [n, dh] : d_half) {
        ok = ok && dh > prev;
        prev = dh;
    }
    return {ok, detail + ", " + f(res.wall_seconds, "%.0f") + " s"};
}

// 10. Ordering with the Coulomb term.
Outcome coulomb_ordering(Shared& s) {
    s.ensure_coulomb_2d();
    auto pll = [&](const std::string& name, double cv) {
        return final_row(s.run_2d(name, EnergyValue{false, cv}).point, "quadrant2d").p_ll;
    };
    double a0 = pll("fig8", 0), a5 = pll("fig8", 5), a20 = pll("fig8", 20);
    double b0 = pll("fig11", 0), b5 = pll("fig11", 5);
    double wall = 0.0;
    for (const auto* r : s.all_2d()) wall = std::max(wall, r->wall);
    bool ok = a20 >= a5 && a5 >= a0 - 1e-3 && b5 > b0 + 0.01 && wall <= 900.0;
    return {ok, "double barrier P_LL(C=0,5,20) = " + f(a0) + ", " + f(a5) + ", " + f(a20) +
                    "; single barrier P_LL(C=0,5) = " + f(b0) + ", " + f(b5) + "; slowest 2D run " +
                    f(wall, "%.0f") + " s"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tunnelex acceptance criteria"};
    std::vector<int> only;
    app.add_option("--only", only, "criteria to run (comma separated)")->delimiter(',');
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<const char*, std::function<Outcome(Shared&)>>> criteria = {
        {"resonance location", resonance_location},
        {"one-particle coefficients", one_particle},
        {"two-particle endpoints", fig4_endpoints},
        {"single barrier", single_barrier},
        {"route equivalence", route_equivalence},
        {"conservation and symmetry", conservation},
        {"mono-energetic states", monoenergetic},
        {"correlation matrices", correlation_suite},
        {"phase-space shape", phase_space_shape},
        {"Coulomb ordering", coulomb_ordering},
    };
    std::set<int> wanted(only.begin(), only.end());
    Shared shared;
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        int id = static_cast<int>(i) + 1;
        if (!wanted.empty() && !wanted.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second(shared);
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first,
                    o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
