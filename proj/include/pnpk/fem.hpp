#pragma once

#include "pnpk/mesh.hpp"
#include "pnpk/quadrature.hpp"
#include "pnpk/sparse.hpp"

#include <functional>

namespace pnpk {

using ScalarFunction = std::function<double(Vec2)>;
using VectorFunction = std::function<Vec2(Vec2)>;

/// Continuous piecewise-linear space on a mesh; dof i is vertex i.
class P1Space {
public:
    explicit P1Space(const Mesh& mesh) : mesh_(&mesh) {
        const Index nv = mesh.vertex_count();
        dirichlet_.assign(nv, false);
        robin_weight_.assign(nv, 0.0);
        patch_area_.assign(nv, 0.0);
        for (const auto& [e, tag] : mesh.boundary_markers()) {
            const auto& ed = mesh.edge(e);
            if (tag == BoundaryTag::Dirichlet)
                for (Index v : ed.vertices) dirichlet_[v] = true;
            if (tag == BoundaryTag::Robin)
                for (Index v : ed.vertices) robin_weight_[v] += 0.5 * mesh.edge_length(e);
        }
        for (Index c = 0; c < mesh.cell_count(); ++c)
            for (Index v : mesh.cell(c)) patch_area_[v] += mesh.cell_area(c) / 3.0;
        grads_.resize(mesh.cell_count());
        for (Index c = 0; c < mesh.cell_count(); ++c) {
            const auto& t = mesh.cell(c);
            const double twice_area = 2.0 * mesh.cell_area(c);
            for (int k = 0; k < 3; ++k) {
                const Vec2 p = mesh.vertex(t[(k + 1) % 3]), q = mesh.vertex(t[(k + 2) % 3]);
                // gradient of the hat function is the inward normal of the opposite edge over its height
                grads_[c][k] = Vec2{p.y - q.y, q.x - p.x} * (1.0 / twice_area);
            }
        }
        geometric_weights_.assign(mesh.edge_count(), 0.0);
        for (Index c = 0; c < mesh.cell_count(); ++c) {
            const double area = mesh.cell_area(c);
            for (int k = 0; k < 3; ++k) {
                const int a = (k + 1) % 3, b = (k + 2) % 3;
                geometric_weights_[mesh.cell_edges(c)[k]] -= area * dot(grads_[c][a], grads_[c][b]);
            }
        }
    }

    const Mesh& mesh() const noexcept { return *mesh_; }
    Index dof_count() const noexcept { return mesh_->vertex_count(); }

    bool is_dirichlet(Index v) const { return dirichlet_[v]; }
    const std::vector<bool>& dirichlet_mask() const noexcept { return dirichlet_; }
    bool has_dirichlet() const {
        return std::find(dirichlet_.begin(), dirichlet_.end(), true) != dirichlet_.end();
    }

    /// Per-vertex weight of the lumped Robin product: sum of h_e/2 over Robin edges.
    const std::vector<double>& robin_weights() const noexcept { return robin_weight_; }
    /// Per-vertex lumped mass weight: sum of |cell|/3 over the vertex patch.
    const std::vector<double>& lumped_weights() const noexcept { return patch_area_; }
    /// Gradients of the three hat functions on cell c (local vertex order).
    const std::array<Vec2, 3>& gradients(Index c) const { return grads_[c]; }
    /// Off-diagonal Laplacian weight of each edge (1/2 sum of cot), equal to -K_ab for K the unit stiffness.
    const std::vector<double>& geometric_edge_weights() const noexcept { return geometric_weights_; }

    Vec2 point(Index c, const std::array<double, 3>& bary) const {
        const auto& t = mesh_->cell(c);
        return bary[0] * mesh_->vertex(t[0]) + bary[1] * mesh_->vertex(t[1]) + bary[2] * mesh_->vertex(t[2]);
    }

private:
    const Mesh* mesh_;
    std::vector<bool> dirichlet_;
    std::vector<double> robin_weight_;
    std::vector<double> patch_area_;
    std::vector<std::array<Vec2, 3>> grads_;
    std::vector<double> geometric_weights_;
};

/// Coefficient vector of a P1 function.
struct FieldP1 {
    const P1Space* space = nullptr;
    std::vector<double> values;

    FieldP1() = default;
    FieldP1(const P1Space& s, std::vector<double> v) : space(&s), values(std::move(v)) {
        require(static_cast<Index>(values.size()) == s.dof_count(), "FieldP1: coefficient count must equal dof count");
    }
    static FieldP1 zero(const P1Space& s) { return FieldP1(s, std::vector<double>(s.dof_count(), 0.0)); }

    double operator[](Index i) const { return values[i]; }
    double& operator[](Index i) { return values[i]; }

    double at(Index c, const std::array<double, 3>& bary) const {
        const auto& t = space->mesh().cell(c);
        return bary[0] * values[t[0]] + bary[1] * values[t[1]] + bary[2] * values[t[2]];
    }
    Vec2 gradient(Index c) const {
        const auto& t = space->mesh().cell(c);
        const auto& g = space->gradients(c);
        return values[t[0]] * g[0] + values[t[1]] * g[1] + values[t[2]] * g[2];
    }
    bool finite() const {
        return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
    }
};

inline FieldP1 interpolate(const P1Space& space, const ScalarFunction& f) {
    std::vector<double> v(space.dof_count());
    for (Index i = 0; i < space.dof_count(); ++i) {
        v[i] = f(space.mesh().vertex(i));
        if (!std::isfinite(v[i]))
            throw NumericDomainError("interpolate: non-finite value at vertex " + std::to_string(i));
    }
    return FieldP1(space, std::move(v));
}

/// Stiffness matrix of (coeff grad u, grad v) with one coefficient per cell.
inline CsrMatrix assemble_p1_stiffness(const P1Space& space, std::span<const double> coeff) {
    const Mesh& m = space.mesh();
    require(static_cast<Index>(coeff.size()) == m.cell_count(), "assemble_p1_stiffness: one coefficient per cell expected");
    TripletBuilder b(space.dof_count(), space.dof_count());
    b.reserve(static_cast<std::size_t>(9 * m.cell_count()));
    for (Index c = 0; c < m.cell_count(); ++c) {
        const auto& t = m.cell(c);
        const auto& g = space.gradients(c);
        const double w = coeff[c] * m.cell_area(c);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) b.add(t[i], t[j], w * dot(g[i], g[j]));
    }
    return b.build();
}

/// Consistent P1 mass matrix (exact).
inline CsrMatrix assemble_p1_mass(const P1Space& space) {
    const Mesh& m = space.mesh();
    TripletBuilder b(space.dof_count(), space.dof_count());
    for (Index c = 0; c < m.cell_count(); ++c) {
        const auto& t = m.cell(c);
        const double a = m.cell_area(c);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) b.add(t[i], t[j], a * (i == j ? 2.0 : 1.0) / 12.0);
    }
    return b.build();
}

/// Diagonal of the lumped mass matrix with a per-vertex weight.
inline std::vector<double> assemble_lumped_mass(const P1Space& space, std::span<const double> weight) {
    require(static_cast<Index>(weight.size()) == space.dof_count(), "assemble_lumped_mass: one weight per vertex expected");
    std::vector<double> d(weight.size());
    const auto& m = space.lumped_weights();
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (!std::isfinite(weight[i])) throw NumericDomainError("assemble_lumped_mass: non-finite weight");
        d[i] = m[i] * weight[i];
    }
    return d;
}

/// <u, v>_{R,h} with kappa: trapezoidal integral of the nodal interpolant of kappa*u*v over Robin edges.
inline double robin_lumped_product(const P1Space& space, std::span<const double> kappa, const FieldP1& u, const FieldP1& v) {
    require(static_cast<Index>(kappa.size()) == space.dof_count(), "robin_lumped_product: one kappa value per vertex expected");
    const auto& w = space.robin_weights();
    double s = 0.0;
    for (Index i = 0; i < space.dof_count(); ++i)
        if (w[i] != 0.0) s += w[i] * kappa[i] * u[i] * v[i];
    return s;
}

/// (f, w_i) for every hat function, by the given cell rule.
inline std::vector<double> assemble_load(const P1Space& space, const ScalarFunction& f,
                                         const TriangleRule& rule = degree4_rule()) {
    const Mesh& m = space.mesh();
    std::vector<double> r(space.dof_count(), 0.0);
    for (Index c = 0; c < m.cell_count(); ++c) {
        const auto& t = m.cell(c);
        const double a = m.cell_area(c);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const double fv = f(space.point(c, rule.points[q])) * rule.weights[q] * a;
            for (int k = 0; k < 3; ++k) r[t[k]] += fv * rule.points[q][k];
        }
    }
    return r;
}

/// <S, w_i> over edges carrying `tag`, two-point Gauss per edge.
inline std::vector<double> assemble_boundary_load(const P1Space& space, const ScalarFunction& s, BoundaryTag tag) {
    const Mesh& m = space.mesh();
    const LineRule g = gauss_legendre(2);
    std::vector<double> r(space.dof_count(), 0.0);
    for (const auto& [e, t] : m.boundary_markers()) {
        if (t != tag) continue;
        const auto& ed = m.edge(e);
        const Vec2 a = m.vertex(ed.vertices[0]), b = m.vertex(ed.vertices[1]);
        const double len = m.edge_length(e);
        for (std::size_t q = 0; q < g.size(); ++q) {
            const double x = g.points[q];
            const double val = s((1.0 - x) * a + x * b) * g.weights[q] * len;
            r[ed.vertices[0]] += val * (1.0 - x);
            r[ed.vertices[1]] += val * x;
        }
    }
    return r;
}

/// Gradient of a discrete quantity evaluated at (cell, point).
using CellGradient = std::function<Vec2(Index, const std::array<double, 3>&)>;

/// ( sum_cells int |grad_h - exact_grad|^2 )^{1/2} by the given cell rule.
inline double h1_seminorm_diff(const P1Space& space, const CellGradient& grad_h, const VectorFunction& exact_grad,
                               const TriangleRule& rule = degree4_rule()) {
    const Mesh& m = space.mesh();
    double s = 0.0;
    for (Index c = 0; c < m.cell_count(); ++c) {
        const double a = m.cell_area(c);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const Vec2 d = grad_h(c, rule.points[q]) - exact_grad(space.point(c, rule.points[q]));
            s += rule.weights[q] * a * dot(d, d);
        }
    }
    return std::sqrt(s);
}

inline double h1_seminorm_diff(const FieldP1& field, const VectorFunction& exact_grad,
                               const TriangleRule& rule = degree4_rule()) {
    return h1_seminorm_diff(
        *field.space, [&](Index c, const std::array<double, 3>&) { return field.gradient(c); }, exact_grad, rule);
}

/// Symmetric Dirichlet elimination: rows and columns of constrained dofs are
/// replaced by identity, their known values moved to the right-hand side.
inline CsrMatrix eliminate_dirichlet(const CsrMatrix& a, std::vector<double>& rhs, const std::vector<bool>& fixed,
                                     std::span<const double> values) {
    TripletBuilder b(a.rows(), a.cols());
    b.reserve(a.values().size());
    for (Index r = 0; r < a.rows(); ++r) {
        for (Index k = a.offsets()[r]; k < a.offsets()[r + 1]; ++k) {
            const Index c = a.indices()[k];
            const bool rf = r < static_cast<Index>(fixed.size()) && fixed[r];
            const bool cf = c < static_cast<Index>(fixed.size()) && fixed[c];
            if (rf) continue;
            if (cf) {
                rhs[r] -= a.values()[k] * values[c];
                continue;
            }
            b.add(r, c, a.values()[k]);
        }
    }
    for (Index r = 0; r < static_cast<Index>(fixed.size()); ++r)
        if (fixed[r]) {
            b.add(r, r, 1.0);
            rhs[r] = values[r];
        }
    return b.build();
}

} // namespace pnpk
