#pragma once

#include "pnpk/pnp.hpp"

namespace pnpk {

/// Which discrete form of the free energy and dissipation to evaluate.
///  lumped:     nodal entropy, exact electrostatic term, exponentially fitted edge dissipation
///              (the functionals the time-stepping scheme dissipates exactly);
///  quadrature: cell quadrature of e^{eta}(eta-1) and D e^{eta} |grad(eta + q phi)|^2.
enum class EnergyForm { lumped, quadrature };

/// (1/2)(eps grad phi, grad phi) + (1/2) <kappa phi, phi>_{R,h}
inline double electrostatic_energy(const PnpSystem& sys, const FieldP1& phi) {
    return 0.5 * bilinear(sys.permittivity_stiffness(), phi.values, phi.values) +
           0.5 * robin_lumped_product(sys.space(), sys.capacitance(), phi, phi);
}

inline double lumped_entropy(const PnpSystem& sys, const PnpState& s) {
    const auto& m = sys.space().lumped_weights();
    double e = 0.0;
    for (const auto& eta : s.eta)
        for (Index v = 0; v < sys.vertex_count(); ++v) e += m[v] * std::exp(eta[v]) * (eta[v] - 1.0);
    return e;
}

inline double compute_energy(const PnpSystem& sys, const PnpState& s, EnergyForm form = EnergyForm::quadrature,
                             const TriangleRule& rule = degree4_rule()) {
    if (form == EnergyForm::lumped) return lumped_entropy(sys, s) + electrostatic_energy(sys, s.phi);
    const Mesh& m = sys.mesh();
    double e = 0.0;
    for (Index c = 0; c < m.cell_count(); ++c) {
        const double a = m.cell_area(c);
        for (std::size_t q = 0; q < rule.size(); ++q)
            for (const auto& eta : s.eta) {
                const double x = eta.at(c, rule.points[q]);
                e += rule.weights[q] * a * std::exp(x) * (x - 1.0);
            }
    }
    return e + electrostatic_energy(sys, s.phi);
}

/// Edge-flux dissipation sum_i sum_E D_i omega_E F_E (u_b - u_a), u = eta_i + q_i phi.
inline double edge_dissipation(const PnpSystem& sys, const PnpState& s) {
    const Mesh& m = sys.mesh();
    const auto& w = sys.space().geometric_edge_weights();
    double d = 0.0;
    for (Index i = 0; i < sys.species_count(); ++i) {
        const auto& sp = sys.problem().species[i];
        for (Index e = 0; e < m.edge_count(); ++e) {
            if (w[e] == 0.0) continue;
            const Index a = m.edge(e).vertices[0], b = m.edge(e).vertices[1];
            const double dpsi = sp.charge * (s.phi[b] - s.phi[a]);
            const double du = s.eta[i][b] - s.eta[i][a] + dpsi;
            const double flux = bernoulli(-dpsi) * std::exp(s.eta[i][b]) - bernoulli(dpsi) * std::exp(s.eta[i][a]);
            d += sp.diffusivity * w[e] * flux * du;
        }
    }
    return d;
}

inline double compute_dissipation(const PnpSystem& sys, const PnpState& s, EnergyForm form = EnergyForm::quadrature,
                                  const TriangleRule& rule = degree4_rule()) {
    if (form == EnergyForm::lumped) return edge_dissipation(sys, s);
    const Mesh& m = sys.mesh();
    double d = 0.0;
    for (Index c = 0; c < m.cell_count(); ++c) {
        const double a = m.cell_area(c);
        const Vec2 gphi = s.phi.gradient(c);
        for (Index i = 0; i < sys.species_count(); ++i) {
            const auto& sp = sys.problem().species[i];
            const Vec2 g = s.eta[i].gradient(c) + sp.charge * gphi;
            const double g2 = dot(g, g);
            for (std::size_t q = 0; q < rule.size(); ++q)
                d += rule.weights[q] * a * sp.diffusivity * std::exp(s.eta[i].at(c, rule.points[q])) * g2;
        }
    }
    return d;
}

inline std::vector<double> species_masses(const PnpSystem& sys, const PnpState& s) {
    const auto& m = sys.space().lumped_weights();
    std::vector<double> out;
    for (const auto& eta : s.eta) {
        double t = 0.0;
        for (Index v = 0; v < sys.vertex_count(); ++v) t += m[v] * std::exp(eta[v]);
        out.push_back(t);
    }
    return out;
}

/// (zeta, phi_D) with zeta = sum_i q_i e^{eta_i}, lumped like the charge term.
inline double dirichlet_correction(const PnpSystem& sys, const PnpState& s, const FieldP1& lift) {
    const auto& m = sys.space().lumped_weights();
    double t = 0.0;
    for (Index i = 0; i < sys.species_count(); ++i) {
        const double q = sys.problem().species[i].charge;
        for (Index v = 0; v < sys.vertex_count(); ++v) t += q * m[v] * std::exp(s.eta[i][v]) * lift[v];
    }
    return t;
}

/// [E + (zeta, phi_D)](next) - [E + (zeta, phi_D)](prev) for the lumped energy,
/// accumulated node by node so that small changes survive cancellation.
inline double energy_change(const PnpSystem& sys, const PnpState& next, const PnpState& prev, const FieldP1* lift = nullptr) {
    const auto& m = sys.space().lumped_weights();
    double d = 0.0;
    for (Index i = 0; i < sys.species_count(); ++i) {
        const double q = sys.problem().species[i].charge;
        for (Index v = 0; v < sys.vertex_count(); ++v) {
            const double en = next.eta[i][v], eo = prev.eta[i][v];
            const double em1 = std::expm1(en - eo);
            d += m[v] * std::exp(eo) * (em1 * (en - 1.0) + (en - eo));
            if (lift) d += q * m[v] * std::exp(eo) * em1 * (*lift)[v];
        }
    }
    std::vector<double> diff(sys.vertex_count()), sum(sys.vertex_count());
    for (Index v = 0; v < sys.vertex_count(); ++v) {
        diff[v] = next.phi[v] - prev.phi[v];
        sum[v] = next.phi[v] + prev.phi[v];
    }
    d += 0.5 * bilinear(sys.permittivity_stiffness(), diff, sum);
    const auto& rw = sys.space().robin_weights();
    for (Index v = 0; v < sys.vertex_count(); ++v) d += 0.5 * rw[v] * sys.capacitance()[v] * diff[v] * sum[v];
    return d;
}

struct LedgerRow {
    int step = 0;
    double t = 0.0;
    double energy = 0.0;
    double dissipation = 0.0;
    double delta_E = 0.0; ///< (energy change)/dt
    double margin = 0.0;  ///< log(-delta_E) - log(dissipation)
    std::vector<double> masses;
    double kinetic_energy = 0.0;
    double dirichlet_correction = 0.0;
    bool flagged = false;
};

struct EnergyLedger {
    std::vector<LedgerRow> rows;
    std::string termination; ///< "dissipation" or "steps"

    std::size_t flagged_count() const {
        return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const LedgerRow& r) { return r.flagged; }));
    }
    /// max over steps of |mass_j - mass_0| / mass_0, all species.
    double max_relative_mass_drift() const {
        double d = 0.0;
        if (rows.empty()) return d;
        const auto& m0 = rows.front().masses;
        for (const auto& r : rows)
            for (std::size_t i = 0; i < m0.size(); ++i) d = std::max(d, std::abs(r.masses[i] - m0[i]) / m0[i]);
        return d;
    }
};

inline double energy_margin(double delta_e, double dissipation) {
    if (!(delta_e < 0.0) || !(dissipation > 0.0)) return -std::numeric_limits<double>::infinity();
    return std::log(-delta_e) - std::log(dissipation);
}

} // namespace pnpk
