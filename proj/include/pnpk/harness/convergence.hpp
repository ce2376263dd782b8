#pragma once

#include "pnpk/harness/manufactured.hpp"

#include <future>
#include <map>

namespace pnpk {

inline constexpr Rectangle kManufacturedDomain{-1.0, 1.0, -0.5, 0.5};

struct ConvergenceRow {
    double h = 0.0;
    double eps = 0.0;
    double error = 0.0;
    int newton_iters = 0;
    int nx = 0;
};

struct ConvergenceTable {
    std::vector<ConvergenceRow> rows;
    std::map<double, double> rates; ///< fitted rate per eps
};

/// Least-squares slope of log(error) against log(h).
inline double fit_rate(std::span<const double> h, std::span<const double> error) {
    require(h.size() == error.size() && h.size() >= 2, "fit_rate: need at least two matching samples");
    double mx = 0.0, my = 0.0;
    const double n = static_cast<double>(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
        require(h[i] > 0.0 && error[i] > 0.0, "fit_rate: samples must be positive");
        mx += std::log(h[i]) / n;
        my += std::log(error[i]) / n;
    }
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        const double dx = std::log(h[i]) - mx;
        sxy += dx * (std::log(error[i]) - my);
        sxx += dx * dx;
    }
    require(sxx > 0.0, "fit_rate: mesh sizes must differ");
    return sxy / sxx;
}

inline double max_edge_length(const Mesh& m) {
    return *std::max_element(m.edge_lengths().begin(), m.edge_lengths().end());
}

/// Mesh of [-1,1]x[-1/2,1/2] with ny = nx/2, Dirichlet at x1 = +-1, no-flux elsewhere.
inline Mesh manufactured_mesh(int nx, DiagonalRule rule = DiagonalRule::right) {
    require(nx >= 2 && nx % 2 == 0, "manufactured_mesh: nx must be even and at least 2");
    Mesh m = build_rect_mesh(kManufacturedDomain, nx, nx / 2, rule);
    m.tag_boundary([](Vec2 x) { return std::abs(std::abs(x.x) - 1.0) < 1e-12; }, BoundaryTag::Dirichlet);
    return m;
}

inline PnpProblem manufactured_problem(const Mesh& mesh, double eps, const ManufacturedExact& exact) {
    const auto src = manufactured_sources(exact, eps);
    PnpProblem p;
    p.mesh = &mesh;
    p.species = {Species{"cation", 1.0, 1.0, [exact](Vec2 x) { return exact.eta1.value(x.x); }},
                 Species{"anion", -1.0, 1.0, [exact](Vec2 x) { return exact.eta2.value(x.x); }}};
    p.permittivity.assign(mesh.cell_count(), eps);
    p.boundary.voltage = [exact](Vec2 x) { return exact.phi.value(x.x); };
    p.poisson_source = src.f0;
    p.species_sources = {src.f1, src.f2};
    p.species_dirichlet = {[exact](Vec2 x) { return exact.eta1.value(x.x); },
                           [exact](Vec2 x) { return exact.eta2.value(x.x); }};
    return p;
}

/// Newton starting point: each unknown blended linearly in x1 between its values at x1 = -1 and x1 = 1.
inline PnpState manufactured_initial_guess(const PnpSystem& sys, const ManufacturedExact& exact) {
    auto blend = [](const Profile1D& f) {
        const double a = f.value(-1.0), b = f.value(1.0);
        return [a, b](Vec2 x) { return a + 0.5 * (b - a) * (x.x + 1.0); };
    };
    PnpState s;
    s.eta = {interpolate(sys.space(), blend(exact.eta1)), interpolate(sys.space(), blend(exact.eta2))};
    s.phi = interpolate(sys.space(), blend(exact.phi));
    return s;
}

/// (|e^{eta1} - e^{eta1_h}|_1^2 + |e^{eta2} - e^{eta2_h}|_1^2 + |phi - phi_h|_1^2)^{1/2}
inline double manufactured_h1_error(const PnpState& s, const ManufacturedExact& exact) {
    const P1Space& space = *s.phi.space;
    auto density_error = [&](const FieldP1& eta, const Profile1D& ex) {
        const CellGradient gh = [&eta](Index c, const std::array<double, 3>& bary) {
            return std::exp(eta.at(c, bary)) * eta.gradient(c);
        };
        const VectorFunction ge = [&ex](Vec2 x) { return Vec2{std::exp(ex.value(x.x)) * ex.d1(x.x), 0.0}; };
        return h1_seminorm_diff(space, gh, ge);
    };
    const double e1 = density_error(s.eta[0], exact.eta1);
    const double e2 = density_error(s.eta[1], exact.eta2);
    const double e0 = h1_seminorm_diff(s.phi, [&exact](Vec2 x) { return Vec2{exact.phi.d1(x.x), 0.0}; });
    return std::sqrt(e1 * e1 + e2 * e2 + e0 * e0);
}

inline ConvergenceRow solve_manufactured(int nx, double eps, const NewtonConfig& cfg = {},
                                         const ManufacturedExact& exact = log_density_profiles()) {
    const Mesh mesh = manufactured_mesh(nx);
    const PnpSystem sys(manufactured_problem(mesh, eps, exact));
    const PnpState guess = manufactured_initial_guess(sys, exact);
    auto [state, report] = solve_steady(sys, guess, cfg);
    return {max_edge_length(mesh), eps, manufactured_h1_error(state, exact), report.iterations, nx};
}

/// Steady manufactured solves over every (eps, nx) pair; rates fitted over all resolutions.
/// With threads > 1 the eps sweeps run concurrently; rows keep the eps-major order.
inline ConvergenceTable convergence_study(std::span<const int> nx_list, std::span<const double> eps_list,
                                          const NewtonConfig& cfg = {}, int threads = 1) {
    auto sweep = [&](double eps) {
        std::vector<ConvergenceRow> rows;
        for (int nx : nx_list) {
            try {
                rows.push_back(solve_manufactured(nx, eps, cfg));
            } catch (const ConvergenceFailure& e) {
                throw ConvergenceFailure("convergence study failed at nx=" + std::to_string(nx) +
                                             ", eps=" + std::to_string(eps) + ": " + e.what(),
                                         e.residual_history);
            }
        }
        return rows;
    };
    std::vector<std::vector<ConvergenceRow>> sweeps(eps_list.size());
    const std::size_t width = static_cast<std::size_t>(std::max(threads, 1));
    for (std::size_t first = 0; first < eps_list.size(); first += width) {
        std::vector<std::future<std::vector<ConvergenceRow>>> jobs;
        const std::size_t last = std::min(eps_list.size(), first + width);
        for (std::size_t k = first + 1; k < last; ++k) jobs.push_back(std::async(std::launch::async, sweep, eps_list[k]));
        sweeps[first] = sweep(eps_list[first]);
        for (std::size_t k = first + 1; k < last; ++k) sweeps[k] = jobs[k - first - 1].get();
    }
    ConvergenceTable t;
    for (std::size_t k = 0; k < eps_list.size(); ++k) {
        std::vector<double> hs, errs;
        for (const auto& row : sweeps[k]) {
            hs.push_back(row.h);
            errs.push_back(row.error);
            t.rows.push_back(row);
        }
        t.rates[eps_list[k]] = hs.size() >= 2 ? fit_rate(hs, errs) : std::numeric_limits<double>::quiet_NaN();
    }
    return t;
}

} // namespace pnpk
