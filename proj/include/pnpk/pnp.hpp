#pragma once

#include "pnpk/fem.hpp"

#include <limits>

namespace pnpk {

/// Bernoulli function B(x) = x / (e^x - 1), B(0) = 1.
inline double bernoulli(double x) {
    if (std::abs(x) < 1e-2) {
        const double x2 = x * x;
        return 1.0 - 0.5 * x + x2 / 12.0 * (1.0 - x2 / 60.0 * (1.0 - x2 / 42.0));
    }
    return x / std::expm1(x);
}

/// Derivative of the Bernoulli function.
inline double bernoulli_derivative(double x) {
    if (std::abs(x) < 1e-2) {
        const double x2 = x * x;
        return -0.5 + x / 6.0 * (1.0 - x2 / 30.0 * (1.0 - x2 / 28.0));
    }
    // e^x / (e^x - 1) written so that neither branch overflows
    const double ratio = x > 0.0 ? -1.0 / std::expm1(-x) : std::exp(x) / std::expm1(x);
    return bernoulli(x) * (1.0 / x - ratio);
}

/// Largest log-density accepted before e^eta is treated as overflow.
inline constexpr double kMaxExponent = 700.0;

inline double checked_exp(double eta) {
    if (!(eta <= kMaxExponent)) throw DivergenceError("log-density exponent overflow (eta = " + std::to_string(eta) + ")");
    return std::exp(eta);
}

/// Edge flux D omega_E [B(-d) e^{eta_b} - B(d) e^{eta_a}], d = psi_b - psi_a, from a to b.
inline double eafe_edge_flux(double eta_a, double eta_b, double psi_a, double psi_b) {
    const double d = psi_b - psi_a;
    return bernoulli(-d) * std::exp(eta_b) - bernoulli(d) * std::exp(eta_a);
}

/// Edge average H_E of e^eta for which the fitted flux equals H_E (u_b - u_a), u = eta + psi.
/// Symmetric in (a, b); the logarithmic mean of e^eta when psi is constant.
inline double eafe_edge_average(double eta_a, double eta_b, double psi_a, double psi_b) {
    const double du = (eta_b + psi_b) - (eta_a + psi_a);
    return bernoulli(psi_b - psi_a) * std::exp(eta_a) / bernoulli(du);
}

struct EafeAssembly {
    CsrMatrix matrix;              ///< weighted Laplacian, off-diagonals -D omega_E H_E
    std::vector<double> residual;  ///< matrix * (eta + psi), i.e. the nodal flux balance
};

/// Exponentially fitted assembly of -div(D e^eta grad(eta + psi)) on P1, psi = q phi.
inline EafeAssembly assemble_np_flux_eafe(const P1Space& space, double diffusivity, const FieldP1& eta, const FieldP1& psi) {
    const Mesh& m = space.mesh();
    const auto& w = space.geometric_edge_weights();
    TripletBuilder tb(space.dof_count(), space.dof_count());
    std::vector<double> r(space.dof_count(), 0.0);
    for (Index e = 0; e < m.edge_count(); ++e) {
        if (w[e] == 0.0) continue;
        const Index a = m.edge(e).vertices[0], b = m.edge(e).vertices[1];
        const double h = diffusivity * w[e] * eafe_edge_average(eta[a], eta[b], psi[a], psi[b]);
        tb.add(a, a, h);
        tb.add(b, b, h);
        tb.add(a, b, -h);
        tb.add(b, a, -h);
        const double flux = diffusivity * w[e] * eafe_edge_flux(eta[a], eta[b], psi[a], psi[b]);
        r[a] -= flux;
        r[b] += flux;
    }
    return {tb.build(), std::move(r)};
}

/// Ion species. Units are chosen so that mobility equals diffusivity.
struct Species {
    std::string label;
    double charge = 0.0;
    double diffusivity = 1.0;
    ScalarFunction initial_log_density = [](Vec2) { return 0.0; };

    double mobility() const noexcept { return diffusivity; }
};

/// Potential boundary data: voltage on Dirichlet edges, surface charge S on
/// Neumann edges, capacitance kappa and datum C on Robin edges.
struct PnpBoundary {
    ScalarFunction voltage = [](Vec2) { return 0.0; };
    ScalarFunction surface_charge = [](Vec2) { return 0.0; };
    ScalarFunction capacitance = [](Vec2) { return 1.0; };
    ScalarFunction robin_data = [](Vec2) { return 0.0; };
};

struct PnpProblem {
    const Mesh* mesh = nullptr;
    std::vector<Species> species;
    std::vector<double> permittivity; ///< one value per cell
    PnpBoundary boundary;

    /// Optional volume sources (manufactured solutions): f0 in Poisson, f_i per species.
    ScalarFunction poisson_source;
    std::vector<ScalarFunction> species_sources;
    /// Optional log-density values imposed on Dirichlet vertices (steady manufactured problems only).
    std::vector<ScalarFunction> species_dirichlet;

    /// Test-only mutation: reverses the drift direction in the flux.
    bool flip_drift_sign = false;
};

struct PnpState {
    double t = 0.0;
    std::vector<FieldP1> eta;
    FieldP1 phi;

    bool finite() const {
        return phi.finite() && std::all_of(eta.begin(), eta.end(), [](const FieldP1& f) { return f.finite(); });
    }
};

/// Velocity samples at cell quadrature points; drives the advective flux.
struct AdvectionSample {
    std::array<double, 3> bary;
    double weight; ///< quadrature weight times cell area
    Vec2 velocity;
};
using AdvectionField = std::vector<std::vector<AdvectionSample>>;

struct NewtonConfig {
    double relative_tolerance = 1e-10;
    double absolute_tolerance = 1e-13;
    int max_iterations = 25;
    double backtrack_factor = 0.5;
    double sufficient_decrease = 1e-4;
    int max_backtracks = 10;

    void validate() const {
        require(relative_tolerance > 0.0 && relative_tolerance < 1.0, "NewtonConfig: relative tolerance must lie in (0,1)");
        require(max_iterations >= 1, "NewtonConfig: max_iterations must be at least 1");
    }
};

struct NewtonReport {
    int iterations = 0;
    std::vector<double> residual_history;
};

struct LinearizedSystem {
    CsrMatrix jacobian;
    std::vector<double> residual;
};

/// Discrete log-density PNP system: lumped time and charge terms,
/// exponentially fitted edge fluxes, lumped Robin product.
/// Unknowns are interleaved per vertex as (eta_1..eta_N, phi), followed by a
/// mean-zero multiplier when the potential has no Dirichlet or Robin boundary.
class PnpSystem {
public:
    explicit PnpSystem(PnpProblem problem) : problem_(std::move(problem)), space_(*problem_.mesh) {
        const Mesh& m = *problem_.mesh;
        require(!problem_.species.empty(), "PnpSystem: at least one species required");
        require(static_cast<Index>(problem_.permittivity.size()) == m.cell_count(), "PnpSystem: permittivity per cell expected");
        for (double e : problem_.permittivity) require(e > 0.0, "PnpSystem: permittivity must be positive");
        for (const auto& s : problem_.species) require(s.diffusivity > 0.0, "PnpSystem: diffusivity must be positive");
        require(problem_.species_sources.empty() || problem_.species_sources.size() == problem_.species.size(),
                "PnpSystem: one source per species expected");
        require(problem_.species_dirichlet.empty() || problem_.species_dirichlet.size() == problem_.species.size(),
                "PnpSystem: one Dirichlet datum per species expected");
        nspec_ = static_cast<Index>(problem_.species.size());
        nv_ = space_.dof_count();
        stiffness_ = assemble_p1_stiffness(space_, problem_.permittivity);
        kappa_.assign(nv_, 0.0);
        robin_load_.assign(nv_, 0.0);
        const auto& rw = space_.robin_weights();
        for (Index v = 0; v < nv_; ++v) {
            if (rw[v] == 0.0) continue;
            const Vec2 x = m.vertex(v);
            kappa_[v] = problem_.boundary.capacitance(x);
            require(kappa_[v] > 0.0, "PnpSystem: capacitance must be positive on Robin edges");
            robin_load_[v] = rw[v] * problem_.boundary.robin_data(x);
        }
        neumann_load_ = assemble_boundary_load(space_, problem_.boundary.surface_charge, BoundaryTag::Neumann);
        if (problem_.poisson_source) {
            // nodal quadrature, like the charge term
            poisson_load_.assign(nv_, 0.0);
            for (Index v = 0; v < nv_; ++v) poisson_load_[v] = space_.lumped_weights()[v] * problem_.poisson_source(m.vertex(v));
        }
        for (const auto& f : problem_.species_sources) species_load_.push_back(f ? assemble_load(space_, f) : std::vector<double>(nv_, 0.0));
        voltage_.assign(nv_, 0.0);
        for (Index v = 0; v < nv_; ++v)
            if (space_.is_dirichlet(v)) voltage_[v] = problem_.boundary.voltage(m.vertex(v));
        has_robin_ = m.has_tag(BoundaryTag::Robin);
        needs_multiplier_ = !space_.has_dirichlet() && !has_robin_;
        if (!problem_.species_dirichlet.empty()) {
            require(space_.has_dirichlet(), "PnpSystem: species Dirichlet data needs Dirichlet-tagged edges");
            species_fixed_.assign(nspec_, std::vector<double>(nv_, 0.0));
            for (Index i = 0; i < nspec_; ++i)
                for (Index v = 0; v < nv_; ++v)
                    if (space_.is_dirichlet(v)) species_fixed_[i][v] = problem_.species_dirichlet[i](m.vertex(v));
        }
    }

    const PnpProblem& problem() const noexcept { return problem_; }
    const P1Space& space() const noexcept { return space_; }
    const Mesh& mesh() const noexcept { return *problem_.mesh; }
    Index species_count() const noexcept { return nspec_; }
    Index vertex_count() const noexcept { return nv_; }
    bool has_multiplier() const noexcept { return needs_multiplier_; }
    bool has_robin() const noexcept { return has_robin_; }
    bool species_dirichlet() const noexcept { return !species_fixed_.empty(); }
    Index unknown_count() const noexcept { return nv_ * (nspec_ + 1) + (needs_multiplier_ ? 1 : 0); }
    Index eta_dof(Index species, Index v) const noexcept { return v * (nspec_ + 1) + species; }
    Index phi_dof(Index v) const noexcept { return v * (nspec_ + 1) + nspec_; }

    /// (eps grad u, grad v) without boundary conditions.
    const CsrMatrix& permittivity_stiffness() const noexcept { return stiffness_; }
    /// kappa at vertices (zero off Robin edges).
    const std::vector<double>& capacitance() const noexcept { return kappa_; }
    /// Interpolated voltage at Dirichlet vertices (zero elsewhere).
    const std::vector<double>& dirichlet_values() const noexcept { return voltage_; }
    double effective_charge(Index i) const {
        return problem_.flip_drift_sign ? -problem_.species[i].charge : problem_.species[i].charge;
    }

    std::vector<double> pack(const PnpState& s) const {
        std::vector<double> x(unknown_count(), 0.0);
        for (Index v = 0; v < nv_; ++v) {
            for (Index i = 0; i < nspec_; ++i) x[eta_dof(i, v)] = s.eta[i][v];
            x[phi_dof(v)] = s.phi[v];
        }
        return x;
    }

    PnpState unpack(std::span<const double> x, double t) const {
        PnpState s;
        s.t = t;
        for (Index i = 0; i < nspec_; ++i) {
            std::vector<double> e(nv_);
            for (Index v = 0; v < nv_; ++v) e[v] = x[eta_dof(i, v)];
            s.eta.emplace_back(space_, std::move(e));
        }
        std::vector<double> p(nv_);
        for (Index v = 0; v < nv_; ++v) p[v] = x[phi_dof(v)];
        s.phi = FieldP1(space_, std::move(p));
        return s;
    }

    /// Residual (and optionally Jacobian) of the discrete equations at `x`
    /// given the previous level. `dt` = infinity drops the time terms.
    LinearizedSystem evaluate(std::span<const double> x, const PnpState* prev, double dt,
                              const AdvectionField* advection, bool with_jacobian) const {
        require(dt > 0.0, "PnpSystem: time step must be positive");
        const bool transient = std::isfinite(dt);
        require(!transient || prev != nullptr, "PnpSystem: transient residual needs the previous state");
        const Mesh& m = mesh();
        const Index n = unknown_count();
        std::vector<double> r(n, 0.0);
        TripletBuilder jac(n, n);
        if (with_jacobian) jac.reserve(static_cast<std::size_t>(nv_) * (nspec_ + 1) * 12);

        std::vector<double> rho(static_cast<std::size_t>(nv_) * nspec_);
        for (Index v = 0; v < nv_; ++v)
            for (Index i = 0; i < nspec_; ++i) rho[v * nspec_ + i] = checked_exp(x[eta_dof(i, v)]);

        const auto& lump = space_.lumped_weights();
        const auto& rw = space_.robin_weights();

        // Poisson rows
        for (Index v = 0; v < nv_; ++v) {
            const Index row = phi_dof(v);
            if (space_.is_dirichlet(v)) {
                r[row] = x[row] - voltage_[v];
                if (with_jacobian) jac.add(row, row, 1.0);
                continue;
            }
            double s = 0.0;
            for (Index k = stiffness_.offsets()[v]; k < stiffness_.offsets()[v + 1]; ++k) {
                const Index w = stiffness_.indices()[k];
                s += stiffness_.values()[k] * x[phi_dof(w)];
                if (with_jacobian) jac.add(row, phi_dof(w), stiffness_.values()[k]);
            }
            if (rw[v] != 0.0) {
                s += rw[v] * kappa_[v] * x[row] - robin_load_[v];
                if (with_jacobian) jac.add(row, row, rw[v] * kappa_[v]);
            }
            for (Index i = 0; i < nspec_; ++i) {
                const double q = problem_.species[i].charge;
                if (q == 0.0) continue;
                s -= q * lump[v] * rho[v * nspec_ + i];
                if (with_jacobian) jac.add(row, eta_dof(i, v), -q * lump[v] * rho[v * nspec_ + i]);
            }
            s -= neumann_load_[v];
            if (!poisson_load_.empty()) s -= poisson_load_[v];
            if (needs_multiplier_) {
                s += lump[v] * x[n - 1];
                if (with_jacobian) jac.add(row, n - 1, lump[v]);
            }
            r[row] = s;
        }
        if (needs_multiplier_) {
            double s = 0.0;
            for (Index v = 0; v < nv_; ++v) {
                s += lump[v] * x[phi_dof(v)];
                if (with_jacobian) jac.add(n - 1, phi_dof(v), lump[v]);
            }
            r[n - 1] = s;
        }

        // Nernst-Planck rows: time term and sources
        for (Index i = 0; i < nspec_; ++i) {
            for (Index v = 0; v < nv_; ++v) {
                const Index row = eta_dof(i, v);
                if (transient) {
                    const double prev_rho = std::exp(prev->eta[i][v]);
                    r[row] += lump[v] * (rho[v * nspec_ + i] - prev_rho) / dt;
                    if (with_jacobian) jac.add(row, row, lump[v] * rho[v * nspec_ + i] / dt);
                }
                if (!species_load_.empty()) r[row] -= species_load_[i][v];
            }
        }

        // exponentially fitted edge fluxes
        const auto& weights = space_.geometric_edge_weights();
        for (Index e = 0; e < m.edge_count(); ++e) {
            if (weights[e] == 0.0) continue;
            const Index a = m.edge(e).vertices[0], b = m.edge(e).vertices[1];
            for (Index i = 0; i < nspec_; ++i) {
                const double q = effective_charge(i);
                const double w = problem_.species[i].diffusivity * weights[e];
                const double d = q * (x[phi_dof(b)] - x[phi_dof(a)]);
                const double ra = rho[a * nspec_ + i], rb = rho[b * nspec_ + i];
                const double bm = bernoulli(-d), bp = bernoulli(d);
                const double flux = w * (bm * rb - bp * ra);
                r[eta_dof(i, a)] -= flux;
                r[eta_dof(i, b)] += flux;
                if (!with_jacobian) continue;
                const double df_db = w * bm * rb;
                const double df_da = -w * bp * ra;
                const double df_dd = w * (-bernoulli_derivative(-d) * rb - bernoulli_derivative(d) * ra);
                const std::array<std::pair<Index, double>, 4> cols = {
                    std::pair{eta_dof(i, a), df_da}, std::pair{eta_dof(i, b), df_db},
                    std::pair{phi_dof(a), -q * df_dd}, std::pair{phi_dof(b), q * df_dd}};
                for (const auto& [col, val] : cols) {
                    if (val == 0.0) continue;
                    jac.add(eta_dof(i, a), col, -val);
                    jac.add(eta_dof(i, b), col, val);
                }
            }
        }

        // advection by a prescribed divergence-free velocity: -(e^eta u, grad w)
        if (advection) {
            require(static_cast<Index>(advection->size()) == m.cell_count(), "PnpSystem: advection samples per cell expected");
            for (Index c = 0; c < m.cell_count(); ++c) {
                const auto& t = m.cell(c);
                const auto& g = space_.gradients(c);
                for (const auto& smp : (*advection)[c]) {
                    for (Index i = 0; i < nspec_; ++i) {
                        double eta_q = 0.0;
                        for (int k = 0; k < 3; ++k) eta_q += smp.bary[k] * x[eta_dof(i, t[k])];
                        const double wr = smp.weight * checked_exp(eta_q);
                        for (int k = 0; k < 3; ++k) {
                            const double flux = wr * dot(smp.velocity, g[k]);
                            r[eta_dof(i, t[k])] -= flux;
                            if (with_jacobian)
                                for (int l = 0; l < 3; ++l) jac.add(eta_dof(i, t[k]), eta_dof(i, t[l]), -flux * smp.bary[l]);
                        }
                    }
                }
            }
        }

        // species held at boundary data
        if (!species_fixed_.empty()) {
            for (Index i = 0; i < nspec_; ++i)
                for (Index v = 0; v < nv_; ++v)
                    if (space_.is_dirichlet(v)) r[eta_dof(i, v)] = x[eta_dof(i, v)] - species_fixed_[i][v];
        }

        LinearizedSystem out;
        out.residual = std::move(r);
        if (with_jacobian) {
            if (!species_fixed_.empty()) {
                TripletBuilder filtered(n, n);
                CsrMatrix full = jac.build();
                for (Index row = 0; row < n; ++row) {
                    const bool fixed_row = row < nv_ * (nspec_ + 1) && (row % (nspec_ + 1)) != nspec_ &&
                                           space_.is_dirichlet(row / (nspec_ + 1));
                    if (fixed_row) {
                        filtered.add(row, row, 1.0);
                        continue;
                    }
                    for (Index k = full.offsets()[row]; k < full.offsets()[row + 1]; ++k)
                        filtered.add(row, full.indices()[k], full.values()[k]);
                }
                out.jacobian = filtered.build();
            } else {
                out.jacobian = jac.build();
            }
        }
        return out;
    }

    /// Assembled Jacobian and residual at `iter` for the step from `prev`.
    LinearizedSystem newton_step_system(const PnpState& prev, const PnpState& iter, double dt,
                                        const AdvectionField* advection = nullptr) const {
        const auto x = pack(iter);
        return evaluate(x, &prev, dt, advection, true);
    }

    /// Solves the linear Poisson problem for given log-densities; returns phi.
    FieldP1 solve_poisson(const std::vector<FieldP1>& eta) const {
        const Index nvx = nv_ + (needs_multiplier_ ? 1 : 0);
        TripletBuilder b(nvx, nvx);
        b.add_block(stiffness_, 0, 0);
        std::vector<double> rhs(nvx, 0.0);
        const auto& lump = space_.lumped_weights();
        const auto& rw = space_.robin_weights();
        for (Index v = 0; v < nv_; ++v) {
            if (rw[v] != 0.0) b.add(v, v, rw[v] * kappa_[v]);
            double s = robin_load_[v] + neumann_load_[v];
            if (!poisson_load_.empty()) s += poisson_load_[v];
            for (Index i = 0; i < nspec_; ++i) s += problem_.species[i].charge * lump[v] * checked_exp(eta[i][v]);
            rhs[v] = s;
            if (needs_multiplier_) {
                b.add(v, nv_, lump[v]);
                b.add(nv_, v, lump[v]);
            }
        }
        std::vector<bool> fixed(nvx, false);
        std::vector<double> values(nvx, 0.0);
        for (Index v = 0; v < nv_; ++v) {
            fixed[v] = space_.is_dirichlet(v);
            values[v] = voltage_[v];
        }
        const CsrMatrix a = eliminate_dirichlet(b.build(), rhs, fixed, values);
        auto sol = solve_sparse(a, rhs);
        sol.resize(nv_);
        return FieldP1(space_, std::move(sol));
    }

    /// Discrete harmonic lift of the interpolated voltage (zero when there is no Dirichlet boundary).
    FieldP1 dirichlet_lift() const {
        if (!space_.has_dirichlet()) return FieldP1::zero(space_);
        TripletBuilder b(nv_, nv_);
        b.add_block(stiffness_, 0, 0);
        const auto& rw = space_.robin_weights();
        for (Index v = 0; v < nv_; ++v)
            if (rw[v] != 0.0) b.add(v, v, rw[v] * kappa_[v]);
        std::vector<double> rhs(nv_, 0.0);
        const CsrMatrix a = eliminate_dirichlet(b.build(), rhs, space_.dirichlet_mask(), voltage_);
        return FieldP1(space_, solve_sparse(a, rhs));
    }

    /// Initial state: consistent L2 projection of eta_{i,0}, then the linear Poisson solve.
    PnpState solve_initial_state() const {
        const CsrMatrix mass = assemble_p1_mass(space_);
        const SparseLu lu(mass);
        PnpState s;
        s.t = 0.0;
        for (Index i = 0; i < nspec_; ++i) {
            const auto load = assemble_load(space_, problem_.species[i].initial_log_density);
            s.eta.emplace_back(space_, lu.solve(load));
        }
        s.phi = solve_poisson(s.eta);
        return s;
    }

private:
    PnpProblem problem_;
    P1Space space_;
    Index nspec_ = 0, nv_ = 0;
    CsrMatrix stiffness_;
    std::vector<double> kappa_, robin_load_, neumann_load_, poisson_load_, voltage_;
    std::vector<std::vector<double>> species_load_;
    std::vector<std::vector<double>> species_fixed_;
    bool has_robin_ = false, needs_multiplier_ = false;
};

inline constexpr double kStagnationFactor = 64.0;

/// Damped Newton iteration on the full (eta_1..eta_N, phi) system with
/// backtracking on the residual 2-norm. A failed line search ends the iteration
/// as converged when the full update is below kStagnationFactor ulps of max(1, |x|_inf).
inline std::vector<double> newton_solve(const PnpSystem& sys, std::vector<double> x, const PnpState* prev, double dt,
                                        const AdvectionField* advection, const NewtonConfig& cfg, NewtonReport& report) {
    cfg.validate();
    auto lin = sys.evaluate(x, prev, dt, advection, true);
    double rnorm = norm2(lin.residual);
    report.residual_history.assign(1, rnorm);
    report.iterations = 0;
    const double r0 = rnorm;
    auto converged = [&](double rn) { return rn <= std::max(cfg.relative_tolerance * r0, cfg.absolute_tolerance); };
    while (!converged(rnorm)) {
        if (report.iterations >= cfg.max_iterations)
            throw ConvergenceFailure("Newton: no convergence in " + std::to_string(cfg.max_iterations) + " iterations",
                                     report.residual_history);
        std::vector<double> rhs(lin.residual.size());
        for (std::size_t k = 0; k < rhs.size(); ++k) rhs[k] = -lin.residual[k];
        const auto dx = solve_sparse(lin.jacobian, rhs);
        double lambda = 1.0;
        bool accepted = false;
        std::vector<double> trial(x.size());
        LinearizedSystem next;
        double tnorm = 0.0;
        for (int bt = 0; bt <= cfg.max_backtracks; ++bt) {
            for (std::size_t k = 0; k < x.size(); ++k) trial[k] = x[k] + lambda * dx[k];
            try {
                next = sys.evaluate(trial, prev, dt, advection, false);
                tnorm = norm2(next.residual);
                if (std::isfinite(tnorm) && tnorm <= (1.0 - cfg.sufficient_decrease * lambda) * rnorm) {
                    accepted = true;
                    break;
                }
            } catch (const DivergenceError&) {
            }
            lambda *= cfg.backtrack_factor;
        }
        ++report.iterations;
        if (!accepted) {
            // residual at its round-off floor: the full update no longer moves x
            double step = 0.0, scale = 1.0;
            for (std::size_t k = 0; k < x.size(); ++k) {
                step = std::max(step, std::abs(dx[k]));
                scale = std::max(scale, std::abs(x[k]));
            }
            if (step <= kStagnationFactor * std::numeric_limits<double>::epsilon() * scale) {
                report.residual_history.push_back(rnorm);
                break;
            }
            report.residual_history.push_back(tnorm);
            throw ConvergenceFailure("Newton: line search failed to reduce the residual", report.residual_history);
        }
        x = std::move(trial);
        lin = sys.evaluate(x, prev, dt, advection, true);
        rnorm = norm2(lin.residual);
        report.residual_history.push_back(rnorm);
    }
    return x;
}

/// One implicit step from `prev`; throws ConvergenceFailure with the residual history.
inline std::pair<PnpState, NewtonReport> advance_timestep(const PnpSystem& sys, const PnpState& prev, double dt,
                                                          const NewtonConfig& cfg = {},
                                                          const AdvectionField* advection = nullptr) {
    require(dt > 0.0 && std::isfinite(dt), "advance_timestep: dt must be positive");
    require(prev.finite(), "advance_timestep: previous state is not finite");
    NewtonReport report;
    auto x = newton_solve(sys, sys.pack(prev), &prev, dt, advection, cfg, report);
    PnpState next = sys.unpack(x, prev.t + dt);
    if (!next.finite()) throw NumericDomainError("advance_timestep: non-finite state");
    return {std::move(next), std::move(report)};
}

/// Steady problem (time terms dropped) from an initial guess.
inline std::pair<PnpState, NewtonReport> solve_steady(const PnpSystem& sys, const PnpState& guess,
                                                      const NewtonConfig& cfg = {}) {
    NewtonReport report;
    auto x = newton_solve(sys, sys.pack(guess), nullptr, std::numeric_limits<double>::infinity(), nullptr, cfg, report);
    return {sys.unpack(x, guess.t), std::move(report)};
}

} // namespace pnpk
