#pragma once

#include "pnpk/electrokinetics.hpp"

#include <map>

namespace pnpk {

enum class Side { left, right, bottom, top };

inline constexpr std::array<Side, 4> kSides{Side::left, Side::right, Side::bottom, Side::top};

inline std::string side_name(Side s) {
    switch (s) {
    case Side::left: return "left";
    case Side::right: return "right";
    case Side::bottom: return "bottom";
    case Side::top: return "top";
    }
    return "";
}

/// Boundary data on one side of the rectangle. `values` holds one value, or
/// two values for the lower and upper half of the side (split at its midpoint).
struct SideSpec {
    BoundaryTag tag = BoundaryTag::NoFlux;
    std::vector<double> values{0.0};
    double kappa = 1.0;
    FlowTag flow = FlowTag::FluxFree;
};

struct SpeciesSpec {
    std::string label;
    double charge = 0.0;
    double diffusivity = 1.0;
    double initial_log_density = 0.0;
};

struct Scenario {
    Rectangle domain{-1.0, 1.0, -0.1, 0.1};
    int nx = 40, ny = 8;
    DiagonalRule diagonal = DiagonalRule::right;
    double permittivity = 0.01;
    std::vector<SpeciesSpec> species;
    std::map<Side, SideSpec> sides;
    /// t_1 < t_2 < ... (t_0 = 0 implied)
    std::vector<double> times;
    double dissipation_tolerance = 1e-8;
    NewtonConfig newton;
    bool flow_enabled = false;
    FlowParams flow;
    double coupling_tolerance = 1e-8;
    int coupling_max_iterations = 30;
    std::vector<int> convergence_nx{8, 16, 32, 64};
    std::vector<double> convergence_eps{1.0, 1e-2, 1e-4};
    bool flip_drift_sign = false;

    void validate() const {
        require(nx >= 1 && ny >= 1, "mesh: nx and ny must be positive");
        require(domain.x1 > domain.x0 && domain.y1 > domain.y0, "mesh: degenerate domain");
        require(permittivity > 0.0, "physics: permittivity must be positive");
        double prev = 0.0;
        for (double t : times) {
            require(t > prev, "time: partition must be strictly increasing from 0");
            prev = t;
        }
        for (const auto& s : species) require(s.diffusivity > 0.0, "species: diffusivity must be positive");
        for (const auto& [side, spec] : sides) {
            require(spec.values.size() == 1 || spec.values.size() == 2, "boundary: one or two values per side");
            require(spec.tag != BoundaryTag::Robin || spec.kappa > 0.0, "boundary: kappa must be positive");
        }
        newton.validate();
        if (flow_enabled) flow.validate();
    }

    std::vector<double> time_steps() const {
        std::vector<double> dt;
        double prev = 0.0;
        for (double t : times) {
            dt.push_back(t - prev);
            prev = t;
        }
        return dt;
    }
};

inline bool on_side(const Rectangle& r, Side s, Vec2 x, double tol) {
    switch (s) {
    case Side::left: return std::abs(x.x - r.x0) <= tol;
    case Side::right: return std::abs(x.x - r.x1) <= tol;
    case Side::bottom: return std::abs(x.y - r.y0) <= tol;
    case Side::top: return std::abs(x.y - r.y1) <= tol;
    }
    return false;
}

inline double side_value(const Rectangle& r, Side s, const SideSpec& spec, Vec2 x) {
    if (spec.values.size() == 1) return spec.values[0];
    const bool horizontal = s == Side::bottom || s == Side::top;
    const double mid = horizontal ? 0.5 * (r.x0 + r.x1) : 0.5 * (r.y0 + r.y1);
    return (horizontal ? x.x : x.y) <= mid ? spec.values[0] : spec.values[1];
}

/// Mesh with potential and flow tags applied per side.
inline Mesh build_scenario_mesh(const Scenario& sc) {
    Mesh m = build_rect_mesh(sc.domain, sc.nx, sc.ny, sc.diagonal);
    const double tol = 1e-9 * std::max(sc.domain.x1 - sc.domain.x0, sc.domain.y1 - sc.domain.y0);
    for (const auto& [side, spec] : sc.sides) {
        const Side s = side;
        const Rectangle r = sc.domain;
        m.tag_boundary([=](Vec2 x) { return on_side(r, s, x, tol); }, spec.tag);
        m.tag_flow_boundary([=](Vec2 x) { return on_side(r, s, x, tol); }, spec.flow);
    }
    return m;
}

/// Pointwise datum of the first side carrying `tag` that contains x.
inline ScalarFunction side_datum(const Scenario& sc, BoundaryTag tag, bool kappa, double fallback) {
    const double tol = 1e-9 * std::max(sc.domain.x1 - sc.domain.x0, sc.domain.y1 - sc.domain.y0);
    return [sides = sc.sides, r = sc.domain, tag, kappa, fallback, tol](Vec2 x) {
        for (Side s : kSides) {
            auto it = sides.find(s);
            if (it == sides.end() || it->second.tag != tag || !on_side(r, s, x, tol)) continue;
            return kappa ? it->second.kappa : side_value(r, s, it->second, x);
        }
        return fallback;
    };
}

inline PnpProblem build_pnp_problem(const Scenario& sc, const Mesh& mesh) {
    PnpProblem p;
    p.mesh = &mesh;
    for (const auto& s : sc.species) {
        const double eta0 = s.initial_log_density;
        p.species.push_back(Species{s.label, s.charge, s.diffusivity, [eta0](Vec2) { return eta0; }});
    }
    p.permittivity.assign(mesh.cell_count(), sc.permittivity);
    p.boundary.voltage = side_datum(sc, BoundaryTag::Dirichlet, false, 0.0);
    p.boundary.surface_charge = side_datum(sc, BoundaryTag::Neumann, false, 0.0);
    p.boundary.robin_data = side_datum(sc, BoundaryTag::Robin, false, 0.0);
    p.boundary.capacitance = side_datum(sc, BoundaryTag::Robin, true, 1.0);
    p.flip_drift_sign = sc.flip_drift_sign;
    return p;
}

inline std::vector<double> uniform_times(double dt, int steps) {
    std::vector<double> t;
    for (int j = 1; j <= steps; ++j) t.push_back(dt * j);
    return t;
}

/// Charged channel: surface charge +-1 alternating along the two long walls,
/// grounded ends, two monovalent species starting at unit density.
inline Scenario channel_scenario() {
    Scenario sc;
    sc.domain = {-1.0, 1.0, -0.1, 0.1};
    sc.nx = 40;
    sc.ny = 8;
    sc.permittivity = 0.01;
    sc.species = {{"cation", 1.0, 1.0, 0.0}, {"anion", -1.0, 1.0, 0.0}};
    sc.sides[Side::left] = {BoundaryTag::Dirichlet, {0.0}, 1.0, FlowTag::NoSlip};
    sc.sides[Side::right] = {BoundaryTag::Dirichlet, {0.0}, 1.0, FlowTag::NoSlip};
    sc.sides[Side::top] = {BoundaryTag::Neumann, {1.0, -1.0}, 1.0, FlowTag::NoSlip};
    sc.sides[Side::bottom] = {BoundaryTag::Neumann, {-1.0, 1.0}, 1.0, FlowTag::NoSlip};
    sc.times = uniform_times(1.0 / 3000.0, 90);
    return sc;
}

/// Coarse charged channel with an applied voltage and flow switched on.
inline Scenario ek_channel_scenario(int steps = 20) {
    Scenario sc = channel_scenario();
    sc.nx = 16;
    sc.ny = 8;
    sc.sides[Side::left].values = {-0.5};
    sc.sides[Side::right].values = {0.5};
    sc.flow_enabled = true;
    sc.flow.rho_f = 1.0;
    sc.flow.mu = 0.1;
    sc.times = uniform_times(1.0 / 3000.0, steps);
    return sc;
}

} // namespace pnpk
