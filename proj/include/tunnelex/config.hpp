#pragma once

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "exchange.hpp"
#include "nparticle.hpp"
#include "potentials.hpp"

namespace tunnelex {

enum class ScenarioKind { two_particle, phase_space, profile };

inline const char* to_string(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::two_particle: return "two_particle";
        case ScenarioKind::phase_space: return "phase_space";
        case ScenarioKind::profile: return "profile";
    }
    return "?";
}

// Energies are written as a number of eV or the keyword `resonance`.
struct EnergyValue {
    bool resonance = false;
    double ev = 0.0;

    std::string text() const {
        if (resonance) return "resonance";
        std::ostringstream os;
        os.precision(17);
        os << ev;
        return os.str();
    }
};

struct PacketConfig {
    Side side = Side::left;
    double x0 = -175.0;
    bool arrival_matched = false;  // x0 from x_a / v_a = x_b / v_b
    EnergyValue energy;            // total energy, measured from the left contact
    double sigma = 35.0;
};

struct GridConfig {
    double dx = 0.8 / 3.0;
    std::size_t n_points = 0;  // 0: smallest power of two that fits the run
};

struct PropagationSettings {
    double t1 = 700.0;        // fs
    bool t1_auto = false;
    double dt = 0.05;         // fs, 1D routes
    double dt_2d = 0.25;      // fs, 2D route
    double snapshot = 10.0;   // fs between time-series rows
    double guard = 20.0;      // nm
};

struct SweepConfig {
    std::string variable;  // empty, energy, sigma, C, d
    std::vector<EnergyValue> values;
};

struct PhaseSpaceConfig {
    std::vector<std::size_t> ns{2, 4, 16};
    std::vector<double> ds;
    Spacing spacing = Spacing::position;
};

struct ScenarioConfig {
    std::string name;
    std::string description;
    ScenarioKind kind = ScenarioKind::two_particle;
    double mass_fraction = 0.067;
    double epsilon_r = 11.6;
    BarrierSpec barrier;
    double bracket_lo = 0.03, bracket_hi = 0.12;
    std::optional<CoulombSpec> coulomb;
    std::vector<PacketConfig> packets;
    std::vector<EnergyValue> curves;  // energies of separate curves, overriding the packets
    Statistics stats = Statistics::fermion;
    GridConfig grid;
    GridConfig grid_2d{0.8, 2048};
    PropagationSettings propagation;
    SweepConfig sweep;
    PhaseSpaceConfig phase_space;
    std::vector<std::string> routes{"analytic", "limits", "determinant"};
    bool time_series = true;
    double scan_e_min = 0.001, scan_e_max = 0.2;
    std::size_t scan_points = 400;
};

namespace detail {

[[noreturn]] inline void config_error(const std::string& what) { fail(ErrorKind::config, what); }

template <class T>
T get(const YAML::Node& node, const char* key, T fallback) {
    if (!node || !node[key]) return fallback;
    try {
        return node[key].as<T>();
    } catch (const YAML::Exception& e) {
        config_error(std::string("bad value for '") + key + "': " + e.what());
    }
}

inline EnergyValue parse_energy(const YAML::Node& n) {
    EnergyValue e;
    auto s = n.as<std::string>();
    if (s == "resonance") {
        e.resonance = true;
        return e;
    }
    try {
        e.ev = n.as<double>();
    } catch (const YAML::Exception&) {
        config_error("energy must be a number or 'resonance', got '" + s + "'");
    }
    return e;
}

inline Statistics parse_statistics(const std::string& s) {
    if (s == "fermion") return Statistics::fermion;
    if (s == "boson") return Statistics::boson;
    if (s == "distinguishable") return Statistics::distinguishable;
    config_error("unknown statistics '" + s + "'");
}

inline void check_keys(const YAML::Node& node, std::initializer_list<const char*> allowed,
                       const std::string& where) {
    if (!node || !node.IsMap()) return;
    for (const auto& kv : node) {
        auto key = kv.first.as<std::string>();
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) config_error("unknown key '" + key + "' in " + where);
    }
}

inline GridConfig parse_grid(const YAML::Node& n, GridConfig g) {
    check_keys(n, {"dx_nm", "n_points"}, "grid");
    g.dx = get(n, "dx_nm", g.dx);
    if (n && n["n_points"]) {
        auto s = n["n_points"].as<std::string>();
        g.n_points = s == "auto" ? 0 : n["n_points"].as<std::size_t>();
    }
    return g;
}

}  // namespace detail

inline ScenarioConfig parse_scenario(const YAML::Node& root) {
    using namespace detail;
    if (!root || !root.IsMap()) config_error("scenario must be a mapping");
    check_keys(root,
               {"name", "description", "kind", "material", "barrier", "resonance_bracket_eV",
                "coulomb", "packets", "curves_eV", "statistics", "grid", "grid_2d", "propagation",
                "sweep", "phase_space", "routes", "output", "scan"},
               "scenario");
    ScenarioConfig c;
    c.name = get<std::string>(root, "name", "");
    if (c.name.empty()) config_error("scenario needs a name");
    c.description = get<std::string>(root, "description", "");
    auto kind = get<std::string>(root, "kind", "two_particle");
    if (kind == "two_particle")
        c.kind = ScenarioKind::two_particle;
    else if (kind == "phase_space")
        c.kind = ScenarioKind::phase_space;
    else if (kind == "profile")
        c.kind = ScenarioKind::profile;
    else
        config_error("unknown kind '" + kind + "'");

    if (auto m = root["material"]) {
        check_keys(m, {"mass_fraction", "epsilon_r"}, "material");
        c.mass_fraction = get(m, "mass_fraction", c.mass_fraction);
        c.epsilon_r = get(m, "epsilon_r", c.epsilon_r);
    }

    auto b = root["barrier"];
    if (!b) config_error("scenario needs a barrier section");
    check_keys(b, {"kind", "height_eV", "width_nm", "well_nm", "bias_V"}, "barrier");
    auto bk = get<std::string>(b, "kind", "double");
    if (bk == "single")
        c.barrier.kind = BarrierKind::single;
    else if (bk == "double")
        c.barrier.kind = BarrierKind::double_barrier;
    else
        config_error("barrier kind must be single or double");
    c.barrier.height = get(b, "height_eV", c.barrier.height);
    c.barrier.width = get(b, "width_nm", c.barrier.width);
    c.barrier.well_width =
        c.barrier.kind == BarrierKind::single ? 0.0 : get(b, "well_nm", c.barrier.well_width);
    c.barrier.bias = get(b, "bias_V", 0.0);

    if (auto br = root["resonance_bracket_eV"]) {
        if (!br.IsSequence() || br.size() != 2) config_error("resonance_bracket_eV needs two values");
        c.bracket_lo = br[0].as<double>();
        c.bracket_hi = br[1].as<double>();
    }

    if (auto cn = root["coulomb"]) {
        check_keys(cn, {"strength", "a_c_nm", "sigma_c", "window"}, "coulomb");
        CoulombSpec cs;
        cs.epsilon_r = c.epsilon_r;
        cs.strength = get(cn, "strength", 0.0);
        cs.a_c = get(cn, "a_c_nm", cs.a_c);
        cs.sigma_c = get(cn, "sigma_c", cs.sigma_c);
        auto w = get<std::string>(cn, "window", "as_printed");
        if (w == "as_printed")
            cs.window = CoulombWindow::as_printed;
        else if (w == "squared")
            cs.window = CoulombWindow::squared;
        else
            config_error("coulomb window must be as_printed or squared");
        c.coulomb = cs;
    }

    if (auto ps = root["packets"]) {
        if (!ps.IsSequence()) config_error("packets must be a list");
        for (const auto& p : ps) {
            check_keys(p, {"side", "x0_nm", "energy_eV", "sigma_nm"}, "packet");
            PacketConfig pc;
            auto side = get<std::string>(p, "side", "");
            if (side == "left")
                pc.side = Side::left;
            else if (side == "right")
                pc.side = Side::right;
            else
                config_error("packet side must be left or right");
            if (!p["x0_nm"]) config_error("packet needs x0_nm");
            if (p["x0_nm"].as<std::string>() == "arrival_matched")
                pc.arrival_matched = true;
            else
                pc.x0 = p["x0_nm"].as<double>();
            if (!p["energy_eV"]) config_error("packet needs energy_eV");
            pc.energy = parse_energy(p["energy_eV"]);
            pc.sigma = get(p, "sigma_nm", pc.sigma);
            c.packets.push_back(pc);
        }
    }
    if (auto cv = root["curves_eV"])
        for (const auto& e : cv) c.curves.push_back(parse_energy(e));

    c.stats = parse_statistics(get<std::string>(root, "statistics", "fermion"));
    c.grid = parse_grid(root["grid"], c.grid);
    c.grid_2d = parse_grid(root["grid_2d"], c.grid_2d);

    if (auto pr = root["propagation"]) {
        check_keys(pr, {"t1_fs", "t1_mode", "dt_fs", "dt_2d_fs", "snapshot_fs", "guard_nm"},
                   "propagation");
        auto& p = c.propagation;
        p.t1 = get(pr, "t1_fs", p.t1);
        auto mode = get<std::string>(pr, "t1_mode", "fixed");
        if (mode != "fixed" && mode != "auto") config_error("t1_mode must be fixed or auto");
        p.t1_auto = mode == "auto";
        p.dt = get(pr, "dt_fs", p.dt);
        p.dt_2d = get(pr, "dt_2d_fs", p.dt_2d);
        p.snapshot = get(pr, "snapshot_fs", p.snapshot);
        p.guard = get(pr, "guard_nm", p.guard);
    }

    if (auto sw = root["sweep"]) {
        check_keys(sw, {"variable", "values"}, "sweep");
        c.sweep.variable = get<std::string>(sw, "variable", "");
        for (const auto& v : sw["values"]) c.sweep.values.push_back(parse_energy(v));
    }

    if (auto ph = root["phase_space"]) {
        check_keys(ph, {"N", "d", "spacing"}, "phase_space");
        if (ph["N"]) c.phase_space.ns = ph["N"].as<std::vector<std::size_t>>();
        if (ph["d"]) c.phase_space.ds = ph["d"].as<std::vector<double>>();
        auto sp = get<std::string>(ph, "spacing", "position");
        if (sp == "position")
            c.phase_space.spacing = Spacing::position;
        else if (sp == "momentum")
            c.phase_space.spacing = Spacing::momentum;
        else
            config_error("phase_space spacing must be position or momentum");
    }

    if (auto r = root["routes"]) c.routes = r.as<std::vector<std::string>>();
    if (auto o = root["output"]) {
        check_keys(o, {"time_series"}, "output");
        c.time_series = get(o, "time_series", c.time_series);
    }
    if (auto s = root["scan"]) {
        check_keys(s, {"e_min_eV", "e_max_eV", "points"}, "scan");
        c.scan_e_min = get(s, "e_min_eV", c.scan_e_min);
        c.scan_e_max = get(s, "e_max_eV", c.scan_e_max);
        c.scan_points = get(s, "points", c.scan_points);
    }
    return c;
}

inline ScenarioConfig parse_scenario_text(const std::string& text) {
    try {
        return parse_scenario(YAML::Load(text));
    } catch (const YAML::Exception& e) {
        fail(ErrorKind::config, std::string("YAML: ") + e.what());
    }
}

inline ScenarioConfig load_scenario_file(const std::string& path) {
    std::ifstream is(path);
    require(bool(is), ErrorKind::config, "cannot open config " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_scenario_text(ss.str());
}

inline std::string energy_list_yaml(const std::vector<EnergyValue>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i].text();
    return s + "]";
}

}  // namespace tunnelex
