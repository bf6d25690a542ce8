#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "config.hpp"
#include "errors.hpp"
#include "exchange.hpp"
#include "grid.hpp"
#include "nparticle.hpp"
#include "potentials.hpp"
#include "propagator.hpp"
#include "scattering.hpp"
#include "units.hpp"
#include "wavepackets.hpp"

#ifndef TUNNELEX_VERSION
#define TUNNELEX_VERSION "0.0.0"
#endif

namespace tunnelex {

inline constexpr const char* kVersion = TUNNELEX_VERSION;

struct ResolvedPoint {
    std::size_t index = 0;
    std::size_t curve = 0;
    double energy = 0.0;  // total energy, left contact = 0
    double sigma = 0.0;
    double coulomb_strength = 0.0;
    double t1 = 0.0;
    WavePacketSpec a, b;  // a starts left, b right
    Grid1D grid;
    Grid1D grid_2d;
};

struct ResolvedScenario {
    ScenarioConfig config;
    Constants constants;
    std::optional<double> resonance;
    std::vector<ResolvedPoint> points;
};

namespace detail {

inline double round_up_pow2(double v) {
    double n = 2.0;
    while (n < v) n *= 2.0;
    return n;
}

// Farthest distance from the origin any part of the packet reaches by t1.
inline double packet_reach(const WavePacketSpec& p, double v_fast, double t1, const Constants& c) {
    double start = std::abs(p.x0) + 5.0 * p.sigma_x;
    double late = std::abs(v_fast * t1 - std::abs(p.x0)) + 5.0 * sigma_at(p.sigma_x, t1, c);
    return std::max(start, late);
}

inline double scenario_reach(const ResolvedPoint& pt, const BarrierSpec& b, const Constants& c) {
    double e_fast = std::max(pt.energy, pt.energy + b.bias);
    double v = c.velocity(c.wave_number(e_fast));
    return std::max(packet_reach(pt.a, v, pt.t1, c), packet_reach(pt.b, v, pt.t1, c));
}

inline Grid1D fitted_grid(const GridConfig& g, double reach, double guard) {
    std::size_t n = g.n_points;
    if (n == 0) n = static_cast<std::size_t>(round_up_pow2(2.0 * (reach + guard + 10.0) / g.dx));
    return Grid1D::centered(n, g.dx);
}

}  // namespace detail

inline double resolve_energy(const EnergyValue& e, ResolvedScenario& r) {
    if (!e.resonance) return e.ev;
    if (!r.resonance)
        r.resonance = find_resonance(staircase_profile(r.config.barrier), r.config.bracket_lo,
                                     r.config.bracket_hi, r.constants);
    return *r.resonance;
}

inline ResolvedScenario resolve(const ScenarioConfig& cfg) {
    ResolvedScenario r;
    r.config = cfg;
    r.constants = constants_for(cfg.mass_fraction, cfg.epsilon_r);
    check_barrier(cfg.barrier);
    if (cfg.kind == ScenarioKind::profile) return r;

    require(cfg.packets.size() == 2, ErrorKind::config,
            "scenario needs exactly two packets (one left, one right)");
    const PacketConfig* pa = &cfg.packets[0];
    const PacketConfig* pb = &cfg.packets[1];
    if (pa->side == Side::right) std::swap(pa, pb);
    require(pa->side == Side::left && pb->side == Side::right, ErrorKind::config,
            "packets must be one left and one right");
    require(!pa->arrival_matched, ErrorKind::config, "arrival_matched applies to the right packet");
    require(pa->x0 < 0.0 && (pb->arrival_matched || pb->x0 > 0.0), ErrorKind::config,
            "left packet needs x0 < 0 and right packet x0 > 0");

    std::vector<EnergyValue> curves = cfg.curves;
    if (curves.empty()) curves.push_back(pa->energy);
    const auto& sw = cfg.sweep;
    std::vector<std::optional<EnergyValue>> sweep_values;
    if (sw.variable.empty() || cfg.kind == ScenarioKind::phase_space)
        sweep_values.push_back(std::nullopt);
    else
        for (const auto& v : sw.values) sweep_values.emplace_back(v);

    const auto& c = r.constants;
    std::size_t index = 0;
    for (std::size_t ci = 0; ci < curves.size(); ++ci)
        for (const auto& sv : sweep_values) {
            ResolvedPoint pt;
            pt.index = index++;
            pt.curve = ci;
            pt.energy = resolve_energy(curves[ci], r);
            pt.sigma = pa->sigma;
            pt.coulomb_strength = cfg.coulomb ? cfg.coulomb->strength : 0.0;
            pt.t1 = cfg.propagation.t1;
            double xa = pa->x0;
            if (sv) {
                if (sw.variable == "energy") {
                    pt.energy = resolve_energy(*sv, r);
                } else if (sw.variable == "sigma") {
                    require(!sv->resonance, ErrorKind::config, "sigma values must be numbers");
                    pt.sigma = sv->ev;
                    // Wider packets start proportionally farther out so they are
                    // clear of the barrier at t = 0; t1 stretches by the same factor.
                    double ratio = std::max(1.0, pt.sigma / pa->sigma);
                    xa = pa->x0 * ratio;
                    pt.t1 = cfg.propagation.t1 * ratio;
                } else if (sw.variable == "C") {
                    require(!sv->resonance, ErrorKind::config, "C values must be numbers");
                    pt.coulomb_strength = sv->ev;
                } else {
                    fail(ErrorKind::config, "unknown sweep variable '" + sw.variable + "'");
                }
            }
            double kin_a = pt.energy;
            double kin_b = pt.energy + cfg.barrier.bias;
            require(kin_a > 0.0 && kin_b > 0.0, ErrorKind::config,
                    "packet energy must exceed both contact levels");
            pt.a = packet_toward_origin(xa, kin_a, pt.sigma, c);
            double xb = pb->x0;
            if (pb->arrival_matched)
                xb = std::abs(xa) * c.velocity(c.wave_number(kin_b)) / c.velocity(c.wave_number(kin_a));
            else if (sv && sw.variable == "sigma")
                xb = std::max(pb->x0, -xa);
            pt.b = packet_toward_origin(xb, kin_b, pt.sigma, c);

            double reach = detail::scenario_reach(pt, cfg.barrier, c);
            if (cfg.kind == ScenarioKind::phase_space) {
                double dmax = 0.0;
                std::size_t nmax = 1;
                for (double d : cfg.phase_space.ds) dmax = std::max(dmax, d);
                for (auto n : cfg.phase_space.ns) nmax = std::max(nmax, n);
                double span = cfg.phase_space.spacing == Spacing::position
                                  ? static_cast<double>(nmax - 1) * std::sqrt(2.0 * dmax) * pt.sigma
                                  : 0.0;
                reach = std::max(reach, std::abs(xa) + span + 5.0 * pt.sigma);
                if (cfg.phase_space.spacing == Spacing::momentum) {
                    double kmax = pt.a.k0 + static_cast<double>(nmax - 1) *
                                                std::sqrt(2.0 * dmax) * sigma_k(pt.sigma);
                    double v = c.velocity(kmax);
                    reach = std::max(reach, v * pt.t1 + 5.0 * sigma_at(pt.sigma, pt.t1, c));
                }
            }
            pt.grid = detail::fitted_grid(cfg.grid, reach, cfg.propagation.guard);
            pt.grid_2d = detail::fitted_grid(cfg.grid_2d, reach, cfg.propagation.guard);
            r.points.push_back(pt);
        }
    return r;
}

struct Diagnostic {
    enum class Severity { error, warning };
    Severity severity = Severity::error;
    std::string message;
};

inline bool has_errors(const std::vector<Diagnostic>& d) {
    return std::any_of(d.begin(), d.end(),
                       [](const Diagnostic& x) { return x.severity == Diagnostic::Severity::error; });
}

inline bool has_route(const std::vector<std::string>& routes, const std::string& r) {
    return std::find(routes.begin(), routes.end(), r) != routes.end();
}

inline const std::vector<std::string>& known_routes() {
    static const std::vector<std::string> r{"analytic", "limits", "determinant", "kspace",
                                            "quadrant2d"};
    return r;
}

namespace detail {

inline std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    return buf;
}

inline void check_grid(std::vector<Diagnostic>& out, const std::string& tag, const Grid1D& g,
                       double reach, double guard) {
    if (reach + guard > g.half_width())
        out.push_back({Diagnostic::Severity::error,
                       tag + ": guard band violated: packets reach " + fmt(reach) +
                           " nm from the barrier by t1 but the domain half-width is " +
                           fmt(g.half_width()) + " nm with a " + fmt(guard) +
                           " nm guard; increase n_points or use n_points: auto"});
}

inline void check_dt(std::vector<Diagnostic>& out, const std::string& tag, double dt, double vmax,
                     double kmax, const Constants& c) {
    double pot = vmax * dt / c.hbar;
    if (pot >= 1.0)
        out.push_back({Diagnostic::Severity::error,
                       tag + ": potential phase max|V| dt / hbar = " + fmt(pot) +
                           " rad exceeds 1; reduce dt below " + fmt(c.hbar / vmax) + " fs"});
    double kin = c.energy(kmax) * dt / c.hbar;
    if (kin >= M_PI / 2)
        out.push_back({Diagnostic::Severity::error,
                       tag + ": kinetic phase per step at the packet's highest wave number is " +
                           fmt(kin) + " rad (limit pi/2); reduce dt"});
}

}  // namespace detail

inline double max_abs_potential_2d(const BarrierSpec& b, const std::optional<CoulombSpec>& coulomb,
                                   double strength, const Grid1D& g) {
    auto vb = sample_barrier(b, g);
    std::optional<CoulombSpec> cs = coulomb;
    if (cs) cs->strength = strength;
    double m = 0.0;
    for (double v : total_potential_2d(vb, cs, g)) m = std::max(m, std::abs(v));
    return m;
}

inline std::vector<Diagnostic> validate(const ScenarioConfig& cfg) {
    using detail::fmt;
    std::vector<Diagnostic> out;
    auto error = [&](const std::string& m) { out.push_back({Diagnostic::Severity::error, m}); };
    auto warn = [&](const std::string& m) { out.push_back({Diagnostic::Severity::warning, m}); };

    for (const auto& r : cfg.routes)
        if (!has_route(known_routes(), r)) error("unknown route '" + r + "'");
    const std::string& var = cfg.sweep.variable;
    if (cfg.kind == ScenarioKind::two_particle && !var.empty() && var != "energy" && var != "sigma" &&
        var != "C")
        error("sweep variable '" + var + "' is not valid for a two-particle scenario");
    if (cfg.kind == ScenarioKind::phase_space && !var.empty() && var != "d")
        error("phase-space scenarios sweep d only");
    if (var == "C" && !cfg.coulomb) error("sweep over C needs a coulomb section");
    bool interacting = cfg.coulomb.has_value();
    if (interacting && cfg.kind == ScenarioKind::two_particle && !has_route(cfg.routes, "quadrant2d"))
        error("Coulomb interaction is only available on the quadrant2d route");
    if (cfg.kind == ScenarioKind::phase_space) {
        if (cfg.phase_space.ds.empty()) error("phase_space needs a list of d values");
        if (cfg.phase_space.ns.empty()) error("phase_space needs a list of N values");
        if (interacting) error("phase-space scenarios need a separable Hamiltonian");
    }
    if (cfg.propagation.dt <= 0.0 || cfg.propagation.dt_2d <= 0.0 || cfg.propagation.t1 <= 0.0)
        error("dt, dt_2d and t1 must be positive");
    if (cfg.propagation.snapshot <= 0.0) error("snapshot_fs must be positive");
    if (has_errors(out)) return out;

    ResolvedScenario rs;
    try {
        rs = resolve(cfg);
    } catch (const Error& e) {
        error(e.what());
        return out;
    }
    const auto& c = rs.constants;
    const double guard = cfg.propagation.guard;
    const double edge = device_half_extent(cfg.barrier);
    bool want_1d = false;
    for (const auto& r : cfg.routes) want_1d = want_1d || r != "quadrant2d";
    want_1d = want_1d || cfg.kind == ScenarioKind::phase_space;
    bool want_2d = has_route(cfg.routes, "quadrant2d") && cfg.kind == ScenarioKind::two_particle;

    for (const auto& pt : rs.points) {
        std::string tag = "point " + std::to_string(pt.index) + " (E = " + fmt(pt.energy) +
                          " eV, sigma = " + fmt(pt.sigma) + " nm)";
        double reach = detail::scenario_reach(pt, cfg.barrier, c);
        double kmax = 0.0;
        for (const auto* p : {&pt.a, &pt.b}) {
            double gap = std::abs(p->x0) - edge;
            if (gap < 4.0 * p->sigma_x)
                error(tag + ": packet at x0 = " + fmt(p->x0) + " nm starts within 4 sigma of the barrier; move it to |x0| >= " +
                      fmt(edge + 4.0 * p->sigma_x) + " nm");
            kmax = std::max(kmax, std::abs(p->k0) + 6.0 * sigma_k(p->sigma_x));
        }
        if (cfg.barrier.bias != 0.0)
            kmax = std::max(kmax, c.wave_number(pt.energy + std::abs(cfg.barrier.bias)) +
                                      6.0 * sigma_k(pt.sigma));
        double v1 = cfg.barrier.height + std::abs(cfg.barrier.bias);
        auto check_res = [&](const Grid1D& g, const std::string& which) {
            if (cfg.barrier.width < g.dx() * (1.0 - 1e-12))
                error(tag + " " + which + ": barrier width " + fmt(cfg.barrier.width) +
                      " nm is narrower than dx = " + fmt(g.dx()) + " nm");
            if (kmax >= g.k_nyquist())
                error(tag + " " + which + ": packet content reaches k = " + fmt(kmax) +
                      "/nm beyond the grid Nyquist " + fmt(g.k_nyquist()) + "/nm; reduce dx");
        };
        if (want_1d) {
            check_res(pt.grid, "1D");
            detail::check_grid(out, tag + " 1D", pt.grid, reach, guard);
            detail::check_dt(out, tag + " 1D", cfg.propagation.dt, v1, kmax, c);
        }
        if (want_2d) {
            check_res(pt.grid_2d, "2D");
            detail::check_grid(out, tag + " 2D", pt.grid_2d, reach, guard);
            double vmax = 2.0 * cfg.barrier.height + 2.0 * std::abs(cfg.barrier.bias);
            if (cfg.coulomb && pt.coulomb_strength != 0.0 && pt.grid_2d.dx() >= cfg.barrier.width * (1 - 1e-12))
                vmax = max_abs_potential_2d(cfg.barrier, cfg.coulomb, pt.coulomb_strength, pt.grid_2d);
            detail::check_dt(out, tag + " 2D", cfg.propagation.dt_2d, vmax, kmax, c);
            double mb = 5.0 * 16.0 * static_cast<double>(pt.grid_2d.size() * pt.grid_2d.size()) / 1e6;
            if (mb > 2000.0) warn(tag + ": 2D route needs about " + fmt(mb) + " MB");
        }
    }
    return out;
}

struct CsvRow {
    std::size_t point = 0;
    double energy = 0.0, sigma = 0.0, coulomb = 0.0;
    ProbabilityTriple p;
    std::string route;
};

struct PointResult {
    ResolvedPoint point;
    std::vector<CsvRow> rows;
    nlohmann::json info = nlohmann::json::object();
};

struct RunOptions {
    std::vector<std::string> routes;  // overrides the config when non-empty
    std::size_t workers = 1;
    std::optional<double> dump_time;  // fs
    std::string out_dir;
};

struct RunResult {
    ResolvedScenario scenario;
    std::vector<PointResult> points;
    std::vector<PhaseSpaceRow> phase_rows;
    std::vector<ScanRow> scan_rows;
    nlohmann::json metadata;
    double wall_seconds = 0.0;
};

namespace detail {

inline double max_exchange_residual(const Field2D& f, double sign) {
    const std::size_t n = f.n();
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) m = std::max(m, std::abs(f(i, j) + sign * f(j, i)));
    return m;
}

// max |Phi(x1, x2) + s Phi(-x1, -x2)| on a symmetric grid; s = +1 for fermions.
inline double max_mirror_residual(const Field2D& f, double sign) {
    const std::size_t n = f.n();
    double m = 0.0;
    for (std::size_t i = 1; i < n; ++i)
        for (std::size_t j = 1; j < n; ++j)
            m = std::max(m, std::abs(f(i, j) + sign * f(n - i, n - j)));
    return m;
}

inline std::string dump_path(const RunOptions& o, const std::string& name, std::size_t point,
                             const std::string& what, double t) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "_p%zu_%s_t%.2f.bin", point, what.c_str(), t);
    return (std::filesystem::path(o.out_dir.empty() ? "." : o.out_dir) / (name + buf)).string();
}

inline PropagatorConfig propagation_for(const PropagationSettings& s, double dt, double t1) {
    PropagatorConfig p;
    p.dt = dt;
    p.t_end = t1;
    p.snapshot_stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(s.snapshot / dt)));
    p.guard_width = s.guard;
    return p;
}

// First time after which the barrier strip stays below 1e-3 for 50 steps.
inline double detect_t1(const std::vector<Field1D>& init, std::span<const double> v,
                        const PropagationSettings& s, double t_max, double strip, const Constants& c) {
    auto [steps, dt] = step_plan({s.dt, t_max, 1, s.guard, 1e-4});
    SplitStep1D prop(init.front().grid, v, dt, c, init.size());
    for (std::size_t b = 0; b < init.size(); ++b) prop.load(b, init[b]);
    std::vector<std::size_t> cells;
    for (std::size_t j = 0; j < init.front().grid.size(); ++j)
        if (std::abs(init.front().grid.x(j)) <= strip) cells.push_back(j);
    bool entered = false;
    std::size_t quiet = 0, first_quiet = 0;
    for (std::size_t st = 1; st <= steps; ++st) {
        prop.step();
        double m = 0.0;
        for (std::size_t b = 0; b < init.size(); ++b) m = std::max(m, prop.mass(b, cells));
        if (m >= 1e-3) {
            entered = true;
            quiet = 0;
            continue;
        }
        if (!entered) continue;
        if (quiet++ == 0) first_quiet = st;
        if (quiet >= 50) return static_cast<double>(first_quiet) * dt;
    }
    fail(ErrorKind::interaction_not_finished, "barrier strip never emptied before t1_fs");
}

}  // namespace detail

inline PointResult run_two_particle_point(const ResolvedScenario& rs, ResolvedPoint pt,
                                          const std::vector<std::string>& routes,
                                          const RunOptions& opt) {
    const auto& cfg = rs.config;
    const auto& c = rs.constants;
    const double strip = device_half_extent(cfg.barrier);
    PointResult res;
    auto add = [&](const ProbabilityTriple& p, const std::string& route) {
        res.rows.push_back({pt.index, pt.energy, pt.sigma, pt.coulomb_strength, p, route});
    };
    auto& info = res.info;
    auto& notes = info["notes"] = nlohmann::json::array();
    bool separable = pt.coulomb_strength == 0.0;
    bool want_1d = false;
    for (const auto& r : routes) want_1d = want_1d || r != "quadrant2d";

    if (want_1d && !separable) {
        notes.push_back("1D routes skipped: Coulomb term makes the Hamiltonian non-separable");
    } else if (want_1d) {
        const Grid1D& g = pt.grid;
        auto v = sample_barrier(cfg.barrier, g);
        std::vector<Field1D> init{gaussian(pt.a, g), gaussian(pt.b, g)};
        if (cfg.propagation.t1_auto) {
            pt.t1 = detail::detect_t1(init, v, cfg.propagation, pt.t1, strip, c);
            notes.push_back("t1 detected automatically");
        }
        auto pcfg = detail::propagation_for(cfg.propagation, cfg.propagation.dt, pt.t1);
        double drift = 0.0;
        bool dumped = false;
        bool series = cfg.time_series && has_route(routes, "analytic");
        auto fin = evolve_1d(init, v, pcfg, c, [&](double t, std::span<const Field1D> f) {
            drift = std::max({drift, std::abs(norm(f[0]) - 1.0), std::abs(norm(f[1]) - 1.0)});
            if (opt.dump_time && !dumped && t >= *opt.dump_time - 1e-9) {
                write_field(detail::dump_path(opt, cfg.name, pt.index, "a", t), f[0]);
                write_field(detail::dump_path(opt, cfg.name, pt.index, "b", t), f[1]);
                dumped = true;
            }
            if (series && t < pt.t1 - 1e-9)
                add(probabilities_from_orbitals(f[0], f[1], cfg.stats, strip, t), "analytic");
        });
        auto ca = split_components(fin[0], IncidentSide::left, strip);
        auto cb = split_components(fin[1], IncidentSide::right, strip);
        auto ci = component_integrals(ca, cb);
        info["R_a"] = ci.r_a;
        info["T_a"] = ci.t_a;
        info["R_b"] = ci.r_b;
        info["T_b"] = ci.t_b;
        info["I_rt_sq"] = std::norm(ci.i_rt);
        info["I_tr_sq"] = std::norm(ci.i_tr);
        info["identity_residual"] = std::abs(ci.i_rt + ci.i_tr);
        info["norm_drift_1d"] = drift;
        info["t1_fs"] = pt.t1;

        if (has_route(routes, "analytic")) add(probabilities_analytic(ci, cfg.stats, pt.t1), "analytic");
        if (has_route(routes, "limits")) {
            double r = ci.r_a / (ci.r_a + ci.t_a);
            for (auto [regime, label] : {std::pair{OverlapRegime::max_overlap, "limit_max"},
                                         std::pair{OverlapRegime::min_overlap, "limit_min"}}) {
                auto p = limit_probabilities(r, 1.0 - r, regime, cfg.stats);
                p.t = pt.t1;
                add(p, label);
            }
        }
        if (has_route(routes, "determinant")) {
            std::vector<Field1D> packets{fin[1], fin[0]};
            std::vector<Side> sides{Side::right, Side::left};
            auto m = correlation_matrix(packets, sides, strip);
            CorrelationMatrix left{m.gram - m.half_line, m.gram};
            ProbabilityTriple p;
            p.t = pt.t1;
            p.p_rr = prob_all_right(m, cfg.stats);
            p.p_ll = prob_all_right(left, cfg.stats);
            p.p_lr = 1.0 - p.p_ll - p.p_rr;
            add(p, "determinant");
        }
        if (has_route(routes, "kspace")) {
            bool mirror_pair = cfg.barrier.bias == 0.0 && pt.b.x0 == -pt.a.x0 && pt.b.k0 == -pt.a.k0;
            if (!mirror_pair) {
                notes.push_back("kspace route skipped: needs a symmetric profile and mirror packets");
            } else {
                auto sc = overlap_I_rt(spectral_amplitude(init[0]), staircase_profile(cfg.barrier), c);
                auto p = probabilities_symmetric(sc.reflection, sc.transmission, std::norm(sc.i_rt),
                                                 cfg.stats);
                p.t = pt.t1;
                info["T_kspace"] = sc.transmission;
                info["R_kspace"] = sc.reflection;
                info["I_rt_sq_kspace"] = std::norm(sc.i_rt);
                add(p, "kspace");
            }
        }
    }

    if (has_route(routes, "quadrant2d")) {
        const Grid1D& g = pt.grid_2d;
        std::optional<CoulombSpec> cs = cfg.coulomb;
        if (cs) cs->strength = pt.coulomb_strength;
        auto v2 = total_potential_2d(sample_barrier(cfg.barrier, g), cs, g);
        auto phi0 = build_two_particle(gaussian(pt.a, g), gaussian(pt.b, g), cfg.stats);
        auto pcfg = detail::propagation_for(cfg.propagation, cfg.propagation.dt_2d, pt.t1);
        double drift = 0.0;
        bool dumped = false;
        auto fin = evolve_2d(phi0, v2, pcfg, c, [&](double t, const Field2D& f) {
            drift = std::max(drift, std::abs(norm(f) - 1.0));
            if (opt.dump_time && !dumped && t >= *opt.dump_time - 1e-9) {
                write_field(detail::dump_path(opt, cfg.name, pt.index, "phi", t), f);
                dumped = true;
            }
            if (t < pt.t1 - 1e-9 && cfg.time_series) add(probabilities_2d(f, strip, t), "quadrant2d");
        });
        add(probabilities_2d(fin, strip, pt.t1, 1e-3), "quadrant2d");
        info["norm_drift_2d"] = drift;
        double sign = exchange_sign(cfg.stats);
        if (cfg.stats != Statistics::distinguishable)
            info["exchange_residual_2d"] = detail::max_exchange_residual(fin, sign);
        if (cfg.stats != Statistics::distinguishable && cfg.barrier.bias == 0.0 &&
            pt.b.x0 == -pt.a.x0 && pt.b.k0 == -pt.a.k0 && g.symmetric())
            info["mirror_residual_2d"] = detail::max_mirror_residual(fin, sign);
    }
    res.point = pt;
    return res;
}

inline std::vector<PhaseSpaceRow> run_phase_space(const ResolvedScenario& rs) {
    const auto& cfg = rs.config;
    const auto& pt = rs.points.front();
    PhaseSpaceSetup s;
    s.grid = pt.grid;
    s.potential = sample_barrier(cfg.barrier, pt.grid);
    s.constants = rs.constants;
    s.left = pt.a;
    s.right = pt.b;
    s.propagation = detail::propagation_for(cfg.propagation, cfg.propagation.dt, pt.t1);
    s.barrier_half_extent = device_half_extent(cfg.barrier);
    s.stats = cfg.stats;
    if (cfg.phase_space.spacing == Spacing::position)
        return phase_space_sweep(s, cfg.phase_space.ns, cfg.phase_space.ds);
    std::vector<PhaseSpaceRow> rows;
    double t_ref = 0.0;
    {
        auto init = std::vector<Field1D>{gaussian(s.left, s.grid)};
        auto fin = evolve_1d(init, s.potential, s.propagation, s.constants);
        t_ref = norm(fin[0], 0.0, kInf);
    }
    for (auto n : cfg.phase_space.ns)
        for (double d : cfg.phase_space.ds) {
            PhaseSpaceRow row{n, d, 0.0, 0.0};
            if (!(d == 0.0 && n > 2 && s.stats == Statistics::fermion))
                row.p_raw = phase_space_probability_direct(s, n, d, Spacing::momentum, pt.t1);
            row.p_norm = row.p_raw / std::pow(t_ref, static_cast<double>(n) - 2.0);
            rows.push_back(row);
        }
    return rows;
}

namespace detail {

inline std::string num(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

inline nlohmann::json grid_json(const Grid1D& g) {
    return {{"n_points", g.size()}, {"dx_nm", g.dx()}, {"x_min_nm", g.x_min()}};
}

inline nlohmann::json packet_json(const WavePacketSpec& p) {
    return {{"x0_nm", p.x0}, {"k0_per_nm", p.k0}, {"sigma_nm", p.sigma_x}};
}

}  // namespace detail

inline std::string csv_header(const ScenarioConfig& cfg) {
    return std::string("# tunnelex-csv v1 scenario=") + cfg.name + " kind=" + to_string(cfg.kind) + "\n";
}

inline std::string to_csv(const RunResult& r) {
    using detail::num;
    const auto& cfg = r.scenario.config;
    std::string out = csv_header(cfg);
    if (cfg.kind == ScenarioKind::phase_space) {
        out += "N,d,P_norm,P_raw\n";
        for (const auto& row : r.phase_rows)
            out += std::to_string(row.n) + "," + num(row.d) + "," + num(row.p_norm) + "," +
                   num(row.p_raw) + "\n";
        return out;
    }
    if (cfg.kind == ScenarioKind::profile) {
        out += "E_eV,T,R,arg_t,arg_r\n";
        for (const auto& s : r.scan_rows)
            out += num(s.energy) + "," + num(s.transmission) + "," + num(s.reflection) + "," +
                   num(s.arg_t) + "," + num(s.arg_r) + "\n";
        return out;
    }
    out += "point,energy_eV,sigma_nm,C,t_fs,P_LR,P_LL,P_RR,P_barrier,route\n";
    for (const auto& pr : r.points)
        for (const auto& row : pr.rows)
            out += std::to_string(row.point) + "," + num(row.energy) + "," + num(row.sigma) + "," +
                   num(row.coulomb) + "," + num(row.p.t) + "," + num(row.p.p_lr) + "," +
                   num(row.p.p_ll) + "," + num(row.p.p_rr) + "," + num(row.p.p_barrier) + "," +
                   row.route + "\n";
    return out;
}

inline RunResult run(const ScenarioConfig& cfg, const RunOptions& opt = {}) {
    auto start = std::chrono::steady_clock::now();
    ScenarioConfig effective = cfg;
    if (!opt.routes.empty()) effective.routes = opt.routes;
    auto diags = validate(effective);
    if (has_errors(diags)) {
        std::string msg = "scenario '" + cfg.name + "' failed validation:";
        for (const auto& d : diags)
            if (d.severity == Diagnostic::Severity::error) msg += "\n  " + d.message;
        fail(ErrorKind::config, msg);
    }

    RunResult result;
    result.scenario = resolve(effective);
    const auto& rs = result.scenario;
    auto& meta = result.metadata;
    meta["schema"] = "tunnelex-meta v1";
    meta["scenario"] = cfg.name;
    meta["description"] = cfg.description;
    meta["code_version"] = kVersion;
    meta["kind"] = to_string(cfg.kind);
    meta["routes"] = effective.routes;
    meta["statistics"] = to_string(cfg.stats);
    meta["material"] = {{"mass_fraction", cfg.mass_fraction},
                        {"epsilon_r", cfg.epsilon_r},
                        {"kinetic_coeff_eV_nm2", rs.constants.kinetic_coeff}};
    meta["barrier"] = {{"kind", cfg.barrier.kind == BarrierKind::single ? "single" : "double"},
                       {"height_eV", cfg.barrier.height},
                       {"width_nm", cfg.barrier.width},
                       {"well_nm", cfg.barrier.well_width},
                       {"bias_V", cfg.barrier.bias}};
    if (cfg.coulomb)
        meta["coulomb"] = {{"a_c_nm", cfg.coulomb->a_c},
                           {"sigma_c", cfg.coulomb->sigma_c},
                           {"window", cfg.coulomb->window == CoulombWindow::as_printed ? "as_printed"
                                                                                       : "squared"}};
    meta["propagation"] = {{"t1_fs", cfg.propagation.t1},
                           {"t1_mode", cfg.propagation.t1_auto ? "auto" : "fixed"},
                           {"dt_fs", cfg.propagation.dt},
                           {"dt_2d_fs", cfg.propagation.dt_2d},
                           {"snapshot_fs", cfg.propagation.snapshot},
                           {"guard_nm", cfg.propagation.guard}};
    if (rs.resonance) meta["resonance_eV"] = *rs.resonance;
    for (const auto& d : diags) meta["warnings"].push_back(d.message);

    if (cfg.kind == ScenarioKind::profile) {
        result.scan_rows = scan_transmission(staircase_profile(cfg.barrier), cfg.scan_e_min,
                                             cfg.scan_e_max, cfg.scan_points, rs.constants);
    } else if (cfg.kind == ScenarioKind::phase_space) {
        result.phase_rows = run_phase_space(rs);
        const auto& pt = rs.points.front();
        meta["points"].push_back({{"grid", detail::grid_json(pt.grid)},
                                  {"packet_a", detail::packet_json(pt.a)},
                                  {"packet_b", detail::packet_json(pt.b)},
                                  {"t1_fs", pt.t1}});
        meta["phase_space"] = {{"N", cfg.phase_space.ns},
                               {"d", cfg.phase_space.ds},
                               {"spacing", cfg.phase_space.spacing == Spacing::position ? "position"
                                                                                        : "momentum"}};
    } else {
        std::vector<PointResult> out(rs.points.size());
        std::vector<std::exception_ptr> errors(rs.points.size());
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t i = next++; i < rs.points.size(); i = next++) {
                try {
                    out[i] = run_two_particle_point(rs, rs.points[i], effective.routes, opt);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        };
        std::size_t nw = std::clamp<std::size_t>(opt.workers, 1, std::max<std::size_t>(1, rs.points.size()));
        std::vector<std::thread> pool;
        for (std::size_t w = 1; w < nw; ++w) pool.emplace_back(worker);
        worker();
        for (auto& t : pool) t.join();
        for (std::size_t i = 0; i < errors.size(); ++i)
            if (errors[i]) {
                try {
                    std::rethrow_exception(errors[i]);
                } catch (const Error& e) {
                    throw Error(e.kind(), "point " + std::to_string(i) + " of '" + cfg.name +
                                              "': " + e.what());
                }
            }
        result.points = std::move(out);
        for (const auto& pr : result.points) {
            const auto& pt = pr.point;
            nlohmann::json j = {{"index", pt.index},
                                {"energy_eV", pt.energy},
                                {"sigma_nm", pt.sigma},
                                {"C", pt.coulomb_strength},
                                {"t1_fs", pt.t1},
                                {"packet_a", detail::packet_json(pt.a)},
                                {"packet_b", detail::packet_json(pt.b)},
                                {"grid", detail::grid_json(pt.grid)},
                                {"grid_2d", detail::grid_json(pt.grid_2d)}};
            j.update(pr.info);
            meta["points"].push_back(j);
        }
    }
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    meta["wall_time_s"] = result.wall_seconds;
    return result;
}

// Writes <out>/<name>.csv and <out>/<name>.meta.json.
inline std::pair<std::string, std::string> write_outputs(const RunResult& r, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::path dir = out_dir.empty() ? fs::path(".") : fs::path(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, ErrorKind::io, "cannot create output directory " + dir.string());
    auto csv = dir / (r.scenario.config.name + ".csv");
    auto meta = dir / (r.scenario.config.name + ".meta.json");
    std::ofstream(csv) << to_csv(r);
    std::ofstream(meta) << r.metadata.dump(2) << "\n";
    require(fs::exists(csv) && fs::exists(meta), ErrorKind::io, "failed to write outputs");
    return {csv.string(), meta.string()};
}

}  // namespace tunnelex
