#pragma once

#include "pnpk/harness/config.hpp"
#include "pnpk/harness/csv.hpp"
#include "pnpk/harness/simulation.hpp"
#include "pnpk/harness/state_io.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace pnpk {

enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitConfigError = 2, kExitSolverFailure = 3 };

/// Thresholds applied by `--check`.
struct CheckLimits {
    double rate_min = 0.8, rate_max = 1.2;
    int newton_max = 15;
    double mass_drift = 1e-10;
    double energy_increase = 1e-9;
    double cross_term = 1e-10;
    double divergence = 1e-12;
};

struct CliOptions {
    std::string command;
    std::string config;
    std::string out;
    bool check = false;
    int threads = 1;
};

namespace detail {

inline void emit(const std::string& text, const std::string& path, std::ostream& out) {
    if (path.empty()) out << text;
    else write_text_file(path, text);
}

inline int cmd_convergence(const CliOptions& o, const Scenario& sc, std::ostream& out, std::ostream& log) {
    const ConvergenceTable t = convergence_study(sc.convergence_nx, sc.convergence_eps, sc.newton, o.threads);
    emit(emit_csv(rates_table(t)), o.out, out);
    const CheckLimits lim;
    bool ok = true;
    for (const auto& [eps, rate] : t.rates) {
        const bool pass = rate >= lim.rate_min && rate <= lim.rate_max;
        ok = ok && pass;
        log << "eps=" << format_double(eps) << " rate=" << format_double(rate) << (pass ? "" : "  [out of range]") << '\n';
    }
    for (const auto& r : t.rows)
        if (r.newton_iters > lim.newton_max) {
            ok = false;
            log << "nx=" << r.nx << " eps=" << format_double(r.eps) << " newton_iters=" << r.newton_iters << "  [too many]\n";
        }
    return o.check && !ok ? kExitCheckFailed : kExitOk;
}

inline bool report_ledger(const SimulationResult& res, bool flow, std::ostream& log) {
    const CheckLimits lim;
    const double drift = res.ledger.max_relative_mass_drift();
    bool ok = res.ledger.flagged_count() == 0 && drift <= lim.mass_drift;
    log << "steps=" << res.ledger.rows.size() - 1 << " termination=" << res.ledger.termination
        << " flagged=" << res.ledger.flagged_count() << " mass_drift=" << format_double(drift) << '\n';
    for (const auto& r : res.ledger.rows)
        if (r.flagged) log << "flagged step " << r.step << ": delta_E=" << format_double(r.delta_E)
                           << " dissipation=" << format_double(r.dissipation) << '\n';
    if (flow) {
        double ct = 0.0, dv = 0.0;
        for (const auto& d : res.steps) {
            ct = std::max(ct, d.cross_term_ratio);
            dv = std::max(dv, d.max_divergence);
        }
        const double inc = res.max_relative_energy_increase();
        log << "total_energy_increase=" << format_double(inc) << " cross_term_ratio=" << format_double(ct)
            << " max_divergence=" << format_double(dv) << '\n';
        ok = ok && inc <= lim.energy_increase && ct <= lim.cross_term && dv <= lim.divergence;
    }
    return ok;
}

/// A run cut short by the solver exits 3, unless --check already sees a violation in the recorded rows.
inline int ledger_exit(const CliOptions& o, const SimulationResult& res, bool ok, std::ostream& log) {
    if (o.check && !ok) return kExitCheckFailed;
    if (!res.failure.empty()) {
        log << "solver failure: " << res.failure << '\n';
        return kExitSolverFailure;
    }
    return kExitOk;
}

inline int cmd_energy(const CliOptions& o, const Scenario& sc, std::ostream& out, std::ostream& log) {
    const Simulation sim(sc);
    const SimulationResult res = sim.run();
    emit(emit_csv(ledger_table(res.ledger, sc.species.size())), o.out, out);
    const bool ok = report_ledger(res, sc.flow_enabled, log);
    return ledger_exit(o, res, ok, log);
}

/// Writes <out>/ledger.csv, <out>/diagnostics.csv and one JSON state per level under <out>/states/.
inline int cmd_run(const CliOptions& o, const Scenario& sc, std::ostream&, std::ostream& log) {
    namespace fs = std::filesystem;
    const fs::path dir = o.out.empty() ? fs::path("run") : fs::path(o.out);
    fs::create_directories(dir / "states");
    const Simulation sim(sc);
    const SimulationResult res = sim.run([&](int level, const PnpState& s, const FlowState* f) {
        char name[32];
        std::snprintf(name, sizeof name, "level_%05d.json", level);
        write_text_file((dir / "states" / name).string(), state_to_json(s, f).dump());
    });
    write_text_file((dir / "ledger.csv").string(), emit_csv(ledger_table(res.ledger, sc.species.size())));
    CsvTable diag{{"step", "newton_iters", "coupling_iters", "substeps", "cross_term_ratio", "max_divergence", "total_energy"}, {}};
    for (std::size_t j = 0; j < res.steps.size(); ++j) {
        const auto& d = res.steps[j];
        diag.rows.push_back({static_cast<double>(j), static_cast<double>(d.newton_iterations), static_cast<double>(d.coupling_iterations),
                             static_cast<double>(d.substeps), d.cross_term_ratio, d.max_divergence, d.total_energy});
    }
    write_text_file((dir / "diagnostics.csv").string(), emit_csv(diag));
    const bool ok = report_ledger(res, sc.flow_enabled, log);
    return ledger_exit(o, res, ok, log);
}

inline int cmd_check_mesh(const CliOptions& o, const Scenario& sc, std::ostream& out, std::ostream& log) {
    const Mesh mesh = build_scenario_mesh(sc);
    const std::vector<double> eps(mesh.cell_count(), sc.permittivity);
    const auto geom = compute_edge_geometry(mesh, eps);
    const auto rep = check_max_principle_condition(geom);
    CsvTable t{{"edge", "omega"}, {}};
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& g : geom) {
        t.rows.push_back({static_cast<double>(g.edge), g.omega});
        lo = std::min(lo, g.omega);
    }
    if (!o.out.empty()) write_text_file(o.out, emit_csv(t));
    (o.out.empty() ? out : log) << "vertices=" << mesh.vertex_count() << " cells=" << mesh.cell_count()
                                << " edges=" << mesh.edge_count() << " min_omega=" << format_double(lo)
                                << " violating=" << rep.violating_edges.size()
                                << (rep.satisfied ? " PASS" : " FAIL") << '\n';
    for (const auto& [e, w] : rep.violating_edges) log << "edge " << e << " omega=" << format_double(w) << '\n';
    return o.check && !rep.satisfied ? kExitCheckFailed : kExitOk;
}

} // namespace detail

/// Entry point of the pnp-kinetics tool. `args` excludes the program name.
/// Exit codes: 0 success, 1 failed --check, 2 bad arguments or config, 3 solver failure.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Poisson-Nernst-Planck and electrokinetic flow experiments", "pnp-kinetics"};
    app.require_subcommand(1);
    CliOptions o;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "scenario file")->required();
        sub->add_option("--out", o.out, "output file (run: output directory)");
        sub->add_flag("--check", o.check, "exit 1 if an acceptance check fails");
        sub->add_option("--threads", o.threads, "parallel sweep members")->check(CLI::PositiveNumber);
    };
    for (const char* name : {"convergence", "energy", "run", "check-mesh"}) {
        static const std::map<std::string, std::string> help{
            {"convergence", "manufactured steady problem, H1 rates per eps"},
            {"energy", "energy/mass ledger of a scenario"},
            {"run", "general scenario run with per-level states"},
            {"check-mesh", "omega_E report for the scenario mesh"}};
        add_common(app.add_subcommand(name, help.at(name)));
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        std::ostringstream so, se;
        const int code = app.exit(e, so, se);
        out << so.str();
        err << se.str();
        return code == 0 ? kExitOk : kExitConfigError;
    }
    o.command = app.get_subcommands().front()->get_name();

    Scenario sc;
    try {
        sc = load_scenario(o.config);
    } catch (const ConfigError& e) {
        err << o.config << ": " << e.what() << '\n';
        return kExitConfigError;
    }
    try {
        if (o.command == "convergence") return detail::cmd_convergence(o, sc, out, err);
        if (o.command == "energy") return detail::cmd_energy(o, sc, out, err);
        if (o.command == "run") return detail::cmd_run(o, sc, out, err);
        return detail::cmd_check_mesh(o, sc, out, err);
    } catch (const InvalidArgument& e) {
        err << "invalid scenario: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const std::exception& e) {
        err << "solver failure: " << e.what() << '\n';
        return kExitSolverFailure;
    }
}

} // namespace pnpk
