#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <tunnelex/builtins.hpp>
#include <tunnelex/runner.hpp>

namespace {

using namespace tunnelex;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

void report(const std::vector<Diagnostic>& diags) {
    for (const auto& d : diags)
        std::cerr << (d.severity == Diagnostic::Severity::error ? "error: " : "warning: ")
                  << d.message << "\n";
}

void emit(const RunResult& r, const std::string& out) {
    if (out.empty()) {
        std::cout << to_csv(r);
        return;
    }
    auto [csv, meta] = write_outputs(r, out);
    std::cerr << "wrote " << csv << " and " << meta << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-electron exchange and tunnelling simulator"};
    app.require_subcommand(1);

    std::string scenario, out, routes_arg, dump_arg;
    std::size_t workers = 1;
    auto* sim = app.add_subcommand("simulate", "Run a scenario file or builtin and write CSV + metadata");
    sim->add_option("scenario", scenario, "YAML file or builtin name")->required();
    sim->add_option("--out", out, "Output directory (default: CSV to stdout)");
    sim->add_option("--routes", routes_arg, "Comma-separated routes overriding the config");
    sim->add_option("--workers", workers, "Concurrent sweep points")->check(CLI::PositiveNumber);
    sim->add_option("--dump-state", dump_arg, "Write the wave function(s) at this time in fs");

    double e_min = -1, e_max = -1;
    std::size_t points = 0;
    auto* scan = app.add_subcommand("scan-transmission", "Transfer-matrix T(E) of a scenario's barrier");
    scan->add_option("scenario", scenario, "YAML file or builtin name")->required();
    scan->add_option("--e-min", e_min, "Lowest energy in eV");
    scan->add_option("--e-max", e_max, "Highest energy in eV");
    scan->add_option("--points", points, "Number of energies");
    scan->add_option("--out", out, "Output directory");

    std::vector<std::size_t> ns;
    std::vector<double> ds;
    std::string spacing;
    auto* sweep = app.add_subcommand("sweep-phase-space", "All-right probability against phase-space distance");
    sweep->add_option("scenario", scenario, "YAML file or builtin name")->required();
    sweep->add_option("--N", ns, "Particle counts")->delimiter(',');
    sweep->add_option("--d", ds, "Phase-space distances")->delimiter(',');
    sweep->add_option("--spacing", spacing, "position or momentum")->check(CLI::IsMember({"position", "momentum"}));
    sweep->add_option("--out", out, "Output directory");

    auto* val = app.add_subcommand("validate", "Check a scenario and print diagnostics");
    val->add_option("scenario", scenario, "YAML file or builtin name")->required();

    auto* list = app.add_subcommand("list", "List builtin scenarios");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (list->parsed()) {
            for (const auto& n : list_builtins()) std::cout << n << "\n";
            return kExitOk;
        }
        auto cfg = load_scenario(scenario);
        if (val->parsed()) {
            auto diags = validate(cfg);
            report(diags);
            if (has_errors(diags)) return kExitConfig;
            std::cout << cfg.name << ": ok\n";
            return kExitOk;
        }
        if (scan->parsed()) {
            cfg.kind = ScenarioKind::profile;
            if (e_min >= 0) cfg.scan_e_min = e_min;
            if (e_max >= 0) cfg.scan_e_max = e_max;
            if (points > 0) cfg.scan_points = points;
            cfg.name += "_scan";
            emit(run(cfg), out);
            return kExitOk;
        }
        if (sweep->parsed()) {
            require(cfg.kind == ScenarioKind::phase_space, ErrorKind::config,
                    "sweep-phase-space needs a phase_space scenario (e.g. fig13)");
            if (!ns.empty()) cfg.phase_space.ns = ns;
            if (!ds.empty()) cfg.phase_space.ds = ds;
            if (!spacing.empty())
                cfg.phase_space.spacing = spacing == "position" ? Spacing::position : Spacing::momentum;
            emit(run(cfg), out);
            return kExitOk;
        }
        RunOptions opt;
        opt.workers = workers;
        opt.out_dir = out;
        if (!routes_arg.empty()) opt.routes = CLI::detail::split(routes_arg, ',');
        if (!dump_arg.empty()) {
            try {
                opt.dump_time = std::stod(dump_arg);
            } catch (const std::exception&) {
                fail(ErrorKind::config, "--dump-state needs a time in fs");
            }
        }
        emit(run(cfg, opt), out);
        return kExitOk;
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
        return e.is_config_error() ? kExitConfig : kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
}
