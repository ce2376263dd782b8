#pragma once

#include "pnpk/flow_dg.hpp"
#include "pnpk/pnp.hpp"

namespace pnpk {

/// Velocity samples at the points of `rule` in every cell.
inline AdvectionField advection_samples(const Bdm1Space& space, std::span<const double> u,
                                        const TriangleRule& rule = high_order_rule()) {
    const Mesh& m = space.mesh();
    AdvectionField f(m.cell_count());
    for (Index c = 0; c < m.cell_count(); ++c) {
        f[c].reserve(rule.size());
        for (std::size_t q = 0; q < rule.size(); ++q)
            f[c].push_back({rule.points[q], rule.weights[q] * m.cell_area(c), space.eval(u, c, rule.points[q])});
    }
    return f;
}

/// Entries (e^{eta_h} u, grad w_k) for every hat function w_k.
inline std::vector<double> assemble_advection_coupling(const FieldP1& eta, const Bdm1Space& space, std::span<const double> u,
                                                       const TriangleRule& rule = high_order_rule()) {
    const Mesh& m = space.mesh();
    const P1Space& p1 = *eta.space;
    std::vector<double> r(p1.dof_count(), 0.0);
    for (Index c = 0; c < m.cell_count(); ++c) {
        const auto& t = m.cell(c);
        const auto& g = p1.gradients(c);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const Vec2 flux = (rule.weights[q] * m.cell_area(c) * std::exp(eta.at(c, rule.points[q]))) * space.eval(u, c, rule.points[q]);
            for (int k = 0; k < 3; ++k) r[t[k]] += dot(flux, g[k]);
        }
    }
    return r;
}

/// Moments -sum_i q_i (e^{eta_i} grad phi, s) against every velocity basis function.
inline std::vector<double> assemble_body_force(const std::vector<FieldP1>& eta, std::span<const double> charges,
                                               const FieldP1& phi, const Bdm1Space& space,
                                               const TriangleRule& rule = high_order_rule()) {
    require(eta.size() == charges.size(), "assemble_body_force: one charge per species expected");
    const Mesh& m = space.mesh();
    std::vector<double> r(space.dof_count(), 0.0);
    for (Index c = 0; c < m.cell_count(); ++c) {
        const Vec2 gphi = phi.gradient(c);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            double zeta = 0.0;
            for (std::size_t i = 0; i < eta.size(); ++i) zeta += charges[i] * std::exp(eta[i].at(c, rule.points[q]));
            const double w = -rule.weights[q] * m.cell_area(c) * zeta;
            for (int j = 0; j < 6; ++j) r[space.basis(c)[j].dof] += w * dot(gphi, space.basis_value(c, j, rule.points[q]));
        }
    }
    return r;
}

/// (u, grad zeta) with zeta = sum_i q_i e^{eta_i}.
inline double advection_cross_term(const std::vector<FieldP1>& eta, std::span<const double> charges, const Bdm1Space& space,
                                   std::span<const double> u, const TriangleRule& rule = high_order_rule()) {
    const Mesh& m = space.mesh();
    double s = 0.0;
    for (Index c = 0; c < m.cell_count(); ++c)
        for (std::size_t q = 0; q < rule.size(); ++q) {
            Vec2 gz;
            for (std::size_t i = 0; i < eta.size(); ++i)
                gz += (charges[i] * std::exp(eta[i].at(c, rule.points[q]))) * eta[i].gradient(c);
            s += rule.weights[q] * m.cell_area(c) * dot(space.eval(u, c, rule.points[q]), gz);
        }
    return s;
}

/// ||grad zeta||_0
inline double grad_zeta_norm(const std::vector<FieldP1>& eta, std::span<const double> charges,
                             const TriangleRule& rule = high_order_rule()) {
    const Mesh& m = eta.front().space->mesh();
    double s = 0.0;
    for (Index c = 0; c < m.cell_count(); ++c)
        for (std::size_t q = 0; q < rule.size(); ++q) {
            Vec2 gz;
            for (std::size_t i = 0; i < eta.size(); ++i)
                gz += (charges[i] * std::exp(eta[i].at(c, rule.points[q]))) * eta[i].gradient(c);
            s += rule.weights[q] * m.cell_area(c) * dot(gz, gz);
        }
    return std::sqrt(s);
}

struct EkState {
    double t = 0.0;
    PnpState pnp;
    FlowState flow;
};

struct EkConfig {
    NewtonConfig newton;
    double tolerance = 1e-8;
    int max_iterations = 30;
};

struct EkReport {
    int outer_iterations = 0;
    std::vector<double> increments;
    std::vector<NewtonReport> newton;
    std::vector<FlowReport> flow;
};

class EkConvergenceFailure : public ConvergenceFailure {
public:
    EkConvergenceFailure(const std::string& what, EkReport r)
        : ConvergenceFailure(what, r.increments), report(std::move(r)) {}

    EkReport report;
};

inline std::vector<double> species_charges(const PnpSystem& sys) {
    std::vector<double> q;
    for (const auto& s : sys.problem().species) q.push_back(s.charge);
    return q;
}

/// One coupled step: alternate the PNP Newton solve (velocity frozen) and the
/// flow step (body force frozen) until the combined relative increment is below tolerance.
inline std::pair<EkState, EkReport> advance_ek_timestep(const PnpSystem& pnp, const FlowDiscretization& flow,
                                                        const EkState& prev, double dt, const EkConfig& cfg = {}) {
    require(dt > 0.0 && std::isfinite(dt), "advance_ek_timestep: dt must be positive");
    require(&pnp.mesh() == &flow.space().mesh(), "advance_ek_timestep: PNP and flow must share the mesh");
    require(cfg.tolerance > 0.0 && cfg.max_iterations >= 1, "advance_ek_timestep: invalid outer settings");
    const auto charges = species_charges(pnp);
    EkReport report;
    std::vector<double> u = prev.flow.velocity;
    std::vector<double> x = pnp.pack(prev.pnp);
    FlowState flow_next = prev.flow;
    for (int it = 1; it <= cfg.max_iterations; ++it) {
        const AdvectionField adv = advection_samples(flow.space(), u);
        NewtonReport nr;
        std::vector<double> x_new;
        try {
            x_new = newton_solve(pnp, x, &prev.pnp, dt, &adv, cfg.newton, nr);
        } catch (const ConvergenceFailure& e) {
            report.newton.push_back({nr.iterations, e.residual_history});
            throw EkConvergenceFailure(std::string("advance_ek_timestep: ") + e.what(), report);
        }
        report.newton.push_back(nr);
        const PnpState ps = pnp.unpack(x_new, prev.t + dt);
        const auto load = assemble_body_force(ps.eta, charges, ps.phi, flow.space());
        auto [fs, fr] = solve_flow_step(flow, prev.flow, load, dt);
        report.flow.push_back(fr);

        double dx = 0.0, sx = 0.0, du = 0.0, su = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            dx = std::max(dx, std::abs(x_new[k] - x[k]));
            sx = std::max(sx, std::abs(x_new[k]));
        }
        for (std::size_t k = 0; k < u.size(); ++k) {
            du = std::max(du, std::abs(fs.velocity[k] - u[k]));
            su = std::max(su, std::abs(fs.velocity[k]));
        }
        const double inc = std::max(sx > 0.0 ? dx / sx : dx, su > 0.0 ? du / su : du);
        report.increments.push_back(inc);
        report.outer_iterations = it;
        x = std::move(x_new);
        u = fs.velocity;
        flow_next = std::move(fs);
        if (inc <= cfg.tolerance) {
            EkState out;
            out.t = prev.t + dt;
            out.pnp = pnp.unpack(x, out.t);
            out.flow = std::move(flow_next);
            out.flow.t = out.t;
            return {std::move(out), std::move(report)};
        }
    }
    throw EkConvergenceFailure("advance_ek_timestep: outer coupling did not converge", report);
}

} // namespace pnpk
