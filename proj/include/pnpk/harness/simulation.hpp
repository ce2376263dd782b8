#pragma once

#include "pnpk/harness/energy.hpp"
#include "pnpk/harness/scenario.hpp"

namespace pnpk {

struct StepDiagnostics {
    int newton_iterations = 0;
    int coupling_iterations = 0;
    int substeps = 1;
    double cross_term_ratio = 0.0; ///< |(u, grad zeta)| / (||u|| ||grad zeta||)
    double max_divergence = 0.0;
    double total_energy = 0.0;     ///< E + (zeta, phi_D) + kinetic energy
};

struct SimulationResult {
    EnergyLedger ledger;
    std::vector<StepDiagnostics> steps;
    PnpState final_pnp;
    FlowState final_flow;
    double initial_total_energy = 0.0;
    std::string failure; ///< solver error that ended the run early, empty on success

    /// max over steps of the total energy increase, relative to |initial total energy|
    double max_relative_energy_increase() const {
        double worst = 0.0;
        for (std::size_t j = 1; j < steps.size(); ++j)
            worst = std::max(worst, (steps[j].total_energy - steps[j - 1].total_energy) / std::abs(initial_total_energy));
        return worst;
    }
};

/// Runs the scenario over its time partition (PNP alone, or coupled to the flow),
/// recording one ledger row per level. Stops early once the dissipation drops below
/// the scenario tolerance; the first step is always taken. `on_level` sees every accepted level. A solver failure
/// ends the run with termination "solver_failure"; the rows recorded so far are kept.
class Simulation {
public:
    explicit Simulation(Scenario sc)
        : sc_(std::move(sc)), mesh_((sc_.validate(), build_scenario_mesh(sc_))), pnp_(build_pnp_problem(sc_, mesh_)) {
        if (sc_.flow_enabled) flow_.emplace(mesh_, sc_.flow);
        lift_ = pnp_.dirichlet_lift();
    }
    Simulation(const Simulation&) = delete;
    Simulation& operator=(const Simulation&) = delete;

    const Scenario& scenario() const noexcept { return sc_; }
    const Mesh& mesh() const noexcept { return mesh_; }
    const PnpSystem& pnp() const noexcept { return pnp_; }
    const FlowDiscretization* flow() const noexcept { return flow_ ? &*flow_ : nullptr; }
    const FieldP1& lift() const noexcept { return lift_; }

    SimulationResult run(const std::function<void(int, const PnpState&, const FlowState*)>& on_level = {}) const {
        SimulationResult res;
        PnpState s = pnp_.solve_initial_state();
        FlowState f = flow_ ? flow_->zero_state() : FlowState{};
        if (on_level) on_level(0, s, flow_ ? &f : nullptr);
        LedgerRow row0 = make_row(0, s, f);
        row0.delta_E = std::numeric_limits<double>::quiet_NaN();
        row0.margin = std::numeric_limits<double>::quiet_NaN();
        StepDiagnostics d0;
        d0.total_energy = total_energy(s, f);
        d0.max_divergence = flow_ ? flow_->max_cell_divergence(f.velocity) : 0.0;
        res.initial_total_energy = d0.total_energy;
        res.ledger.rows.push_back(row0);
        res.steps.push_back(d0);
        res.ledger.termination = "steps";
        const auto dts = sc_.time_steps();
        for (std::size_t j = 0; j < dts.size(); ++j) {
            StepDiagnostics diag;
            PnpState sn;
            FlowState fn;
            try {
                std::tie(sn, fn) = step(s, f, dts[j], 0, diag);
            } catch (const ConvergenceFailure& e) {
                res.failure = e.what();
            } catch (const DivergenceError& e) {
                res.failure = e.what();
            } catch (const SingularMatrixError& e) {
                res.failure = e.what();
            }
            if (!res.failure.empty()) {
                res.ledger.termination = "solver_failure";
                break;
            }
            LedgerRow row = make_row(static_cast<int>(j + 1), sn, fn);
            double change = energy_change(pnp_, sn, s, &lift_);
            if (flow_) change += 0.5 * flow_->params().rho_f * kinetic_change(fn.velocity, f.velocity);
            row.delta_E = change / dts[j];
            row.margin = energy_margin(row.delta_E, row.dissipation);
            diag.total_energy = total_energy(sn, fn);
            const bool increased = change > 1e-9 * std::abs(res.initial_total_energy);
            row.flagged = increased || (row.dissipation >= sc_.dissipation_tolerance && !(row.margin > 0.0));
            if (flow_) {
                const auto q = species_charges(pnp_);
                const double un = std::sqrt(bilinear(flow_->mass(), fn.velocity, fn.velocity));
                const double gz = grad_zeta_norm(sn.eta, q);
                const double ct = advection_cross_term(sn.eta, q, flow_->space(), fn.velocity);
                diag.cross_term_ratio = (un > 0.0 && gz > 0.0) ? std::abs(ct) / (un * gz) : std::abs(ct);
                diag.max_divergence = flow_->max_cell_divergence(fn.velocity);
            }
            res.ledger.rows.push_back(row);
            res.steps.push_back(diag);
            s = std::move(sn);
            f = std::move(fn);
            if (on_level) on_level(static_cast<int>(j + 1), s, flow_ ? &f : nullptr);
            if (row.dissipation < sc_.dissipation_tolerance) {
                res.ledger.termination = "dissipation";
                break;
            }
        }
        res.final_pnp = std::move(s);
        res.final_flow = std::move(f);
        return res;
    }

    double total_energy(const PnpState& s, const FlowState& f) const {
        double e = compute_energy(pnp_, s, EnergyForm::lumped) + dirichlet_correction(pnp_, s, lift_);
        if (flow_) e += flow_->kinetic_energy(f.velocity);
        return e;
    }

    LedgerRow make_row(int j, const PnpState& s, const FlowState& f) const {
        LedgerRow r;
        r.step = j;
        r.t = s.t;
        r.energy = compute_energy(pnp_, s, EnergyForm::lumped);
        r.dissipation = compute_dissipation(pnp_, s, EnergyForm::lumped);
        r.masses = species_masses(pnp_, s);
        r.dirichlet_correction = dirichlet_correction(pnp_, s, lift_);
        if (flow_) {
            r.kinetic_energy = flow_->kinetic_energy(f.velocity);
            r.dissipation += bilinear(flow_->viscous(), f.velocity, f.velocity);
        }
        return r;
    }

private:
    double kinetic_change(std::span<const double> un, std::span<const double> uo) const {
        std::vector<double> d(un.size()), s(un.size());
        for (std::size_t k = 0; k < un.size(); ++k) {
            d[k] = un[k] - uo[k];
            s[k] = un[k] + uo[k];
        }
        return bilinear(flow_->mass(), d, s);
    }

    /// One partition step; on Newton failure the step is split in two (at most 4 levels deep).
    std::pair<PnpState, FlowState> step(const PnpState& s, const FlowState& f, double dt, int depth,
                                        StepDiagnostics& diag) const {
        try {
            if (!flow_) {
                auto [sn, rep] = advance_timestep(pnp_, s, dt, sc_.newton);
                diag.newton_iterations += rep.iterations;
                return {std::move(sn), f};
            }
            EkState prev{s.t, s, f};
            EkConfig cfg{sc_.newton, sc_.coupling_tolerance, sc_.coupling_max_iterations};
            auto [en, rep] = advance_ek_timestep(pnp_, *flow_, prev, dt, cfg);
            for (const auto& nr : rep.newton) diag.newton_iterations += nr.iterations;
            diag.coupling_iterations += rep.outer_iterations;
            return {std::move(en.pnp), std::move(en.flow)};
        } catch (const ConvergenceFailure&) {
            if (depth >= 4) throw;
            diag.substeps += 1;
            auto [sh, fh] = step(s, f, 0.5 * dt, depth + 1, diag);
            return step(sh, fh, 0.5 * dt, depth + 1, diag);
        }
    }

    Scenario sc_;
    Mesh mesh_;
    PnpSystem pnp_;
    std::optional<FlowDiscretization> flow_;
    FieldP1 lift_;
};

/// Energy-decay experiment: ledger over the scenario, margin per step.
inline SimulationResult energy_experiment(const Scenario& sc) {
    return Simulation(sc).run();
}

} // namespace pnpk
