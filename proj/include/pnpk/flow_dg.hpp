#pragma once

#include "pnpk/fem.hpp"

namespace pnpk {

/// One BDM1 basis function restricted to a cell: lambda_k(x) * vec.
struct Bdm1LocalBasis {
    Index dof = -1;
    int vertex = 0; ///< local vertex k carrying the hat function
    Vec2 vec;
};

/// Lowest-order Brezzi-Douglas-Marini space on triangles (full P1 vector
/// fields with continuous normal component). Dofs are the normal component
/// u.n_e at the two endpoints of every edge: dof 2e+j sits at edge vertex j.
/// n_e is the edge tangent rotated clockwise.
class Bdm1Space {
public:
    explicit Bdm1Space(const Mesh& mesh) : mesh_(&mesh), p1_(mesh) {
        normals_.resize(mesh.edge_count());
        for (Index e = 0; e < mesh.edge_count(); ++e) {
            const auto& ed = mesh.edge(e);
            const Vec2 t = mesh.vertex(ed.vertices[1]) - mesh.vertex(ed.vertices[0]);
            normals_[e] = Vec2{t.y, -t.x} * (1.0 / norm(t));
        }
        basis_.resize(mesh.cell_count());
        for (Index c = 0; c < mesh.cell_count(); ++c) {
            const auto& t = mesh.cell(c);
            const auto& ce = mesh.cell_edges(c);
            for (int k = 0; k < 3; ++k) {
                const Index e1 = ce[(k + 1) % 3], e2 = ce[(k + 2) % 3];
                const Vec2 n1 = normals_[e1], n2 = normals_[e2];
                const double det = cross(n1, n2);
                basis_[c][2 * k] = {endpoint_dof(e1, t[k]), k, Vec2{n2.y, -n2.x} * (1.0 / det)};
                basis_[c][2 * k + 1] = {endpoint_dof(e2, t[k]), k, Vec2{-n1.y, n1.x} * (1.0 / det)};
            }
        }
        boundary_.assign(dof_count(), false);
        for (Index e : mesh.boundary_edges()) boundary_[2 * e] = boundary_[2 * e + 1] = true;
    }

    const Mesh& mesh() const noexcept { return *mesh_; }
    const P1Space& scalar_space() const noexcept { return p1_; }
    Index dof_count() const noexcept { return 2 * mesh_->edge_count(); }
    Vec2 normal(Index e) const { return normals_[e]; }
    const std::array<Bdm1LocalBasis, 6>& basis(Index c) const { return basis_[c]; }
    /// Normal dofs on the boundary, held at zero.
    const std::vector<bool>& boundary_dofs() const noexcept { return boundary_; }

    Index endpoint_dof(Index e, Index v) const {
        const auto& ed = mesh_->edge(e);
        if (ed.vertices[0] == v) return 2 * e;
        if (ed.vertices[1] == v) return 2 * e + 1;
        throw InvalidArgument("Bdm1Space: vertex is not an endpoint of the edge");
    }

    Vec2 eval(std::span<const double> u, Index c, const std::array<double, 3>& bary) const {
        Vec2 r;
        for (const auto& b : basis_[c]) r += (u[b.dof] * bary[b.vertex]) * b.vec;
        return r;
    }
    /// Cellwise constant gradient, a[i][j] = d u_i / d x_j.
    Mat2 grad(std::span<const double> u, Index c) const {
        Mat2 g;
        const auto& lg = p1_.gradients(c);
        for (const auto& b : basis_[c]) g = g + u[b.dof] * outer(b.vec, lg[b.vertex]);
        return g;
    }
    double div(std::span<const double> u, Index c) const { return grad(u, c).trace(); }

    Vec2 basis_value(Index c, int j, const std::array<double, 3>& bary) const {
        return bary[basis_[c][j].vertex] * basis_[c][j].vec;
    }
    Mat2 basis_grad(Index c, int j) const {
        return outer(basis_[c][j].vec, p1_.gradients(c)[basis_[c][j].vertex]);
    }

private:
    const Mesh* mesh_;
    P1Space p1_;
    std::vector<Vec2> normals_;
    std::vector<std::array<Bdm1LocalBasis, 6>> basis_;
    std::vector<bool> boundary_;
};

/// Barycentric coordinates of x in cell c.
inline std::array<double, 3> barycentric(const Mesh& m, Index c, Vec2 x) {
    const auto& t = m.cell(c);
    const Vec2 a = m.vertex(t[0]), b = m.vertex(t[1]), d = m.vertex(t[2]);
    const double det = cross(b - a, d - a);
    const double l1 = cross(x - a, d - a) / det;
    const double l2 = cross(b - a, x - a) / det;
    return {1.0 - l1 - l2, l1, l2};
}

/// Quadrature data on one edge. `normal` points out of `left`; `right` is -1 on the boundary.
struct FacetQuadrature {
    Index edge = -1;
    Index left = -1, right = -1;
    Vec2 normal;
    double length = 0.0;
    std::vector<Vec2> points;
    std::vector<double> weights; ///< include the edge length
    std::vector<std::array<double, 3>> bary_left, bary_right;

    bool is_boundary() const noexcept { return right < 0; }
};

inline std::vector<FacetQuadrature> facet_quadrature(const Mesh& m, int npoints = 2) {
    const LineRule g = gauss_legendre(npoints);
    std::vector<FacetQuadrature> out(m.edge_count());
    for (Index e = 0; e < m.edge_count(); ++e) {
        const auto& ed = m.edge(e);
        FacetQuadrature& f = out[e];
        f.edge = e;
        const Vec2 a = m.vertex(ed.vertices[0]), b = m.vertex(ed.vertices[1]);
        const Vec2 t = b - a;
        f.length = norm(t);
        Vec2 n = Vec2{t.y, -t.x} * (1.0 / f.length);
        Index l = ed.cells[0], r = ed.cells[1];
        if (dot(n, m.edge_midpoint(e) - m.cell_centroid(l)) < 0.0) {
            if (r >= 0) std::swap(l, r);
            else n = -n;
        }
        f.left = l;
        f.right = r;
        f.normal = n;
        for (std::size_t q = 0; q < g.size(); ++q) {
            const Vec2 x = (1.0 - g.points[q]) * a + g.points[q] * b;
            f.points.push_back(x);
            f.weights.push_back(g.weights[q] * f.length);
            f.bary_left.push_back(barycentric(m, l, x));
            if (r >= 0) f.bary_right.push_back(barycentric(m, r, x));
        }
    }
    return out;
}

/// Edges carrying interior-penalty terms: interior edges and no-slip boundary edges.
inline bool penalized_facet(const Mesh& m, const FacetQuadrature& f) {
    return !f.is_boundary() || m.flow_tag(f.edge) == FlowTag::NoSlip;
}

/// Velocity interpolant: endpoint values of the edgewise L2 projection of s.n_e onto P1.
/// Preserves the flux through every edge, hence cell-mean divergence.
inline std::vector<double> interpolate_bdm1(const Bdm1Space& space, const VectorFunction& s, int npoints = 4) {
    const Mesh& m = space.mesh();
    const LineRule g = gauss_legendre(npoints);
    std::vector<double> u(space.dof_count(), 0.0);
    for (Index e = 0; e < m.edge_count(); ++e) {
        const auto& ed = m.edge(e);
        const Vec2 a = m.vertex(ed.vertices[0]), b = m.vertex(ed.vertices[1]);
        double r0 = 0.0, r1 = 0.0;
        for (std::size_t q = 0; q < g.size(); ++q) {
            const double t = g.points[q];
            const double sn = dot(s((1.0 - t) * a + t * b), space.normal(e)) * g.weights[q];
            r0 += sn * (1.0 - t);
            r1 += sn * t;
        }
        // inverse of the unit-length P1 mass matrix [[1/3,1/6],[1/6,1/3]]
        u[2 * e] = 4.0 * r0 - 2.0 * r1;
        u[2 * e + 1] = 4.0 * r1 - 2.0 * r0;
    }
    return u;
}

/// Pressure space: one value per cell.
struct P0Space {
    const Mesh* mesh;
    Index dof_count() const noexcept { return mesh->cell_count(); }
};

/// (u, s) over the domain, exact.
inline CsrMatrix assemble_velocity_mass(const Bdm1Space& space) {
    const Mesh& m = space.mesh();
    TripletBuilder b(space.dof_count(), space.dof_count());
    for (Index c = 0; c < m.cell_count(); ++c) {
        const auto& bs = space.basis(c);
        const double a = m.cell_area(c);
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j) {
                const double ll = a * (bs[i].vertex == bs[j].vertex ? 2.0 : 1.0) / 12.0;
                b.add(bs[i].dof, bs[j].dof, ll * dot(bs[i].vec, bs[j].vec));
            }
    }
    return b.build();
}

/// Symmetric interior penalty form
///   (2 mu eps(u), eps(s)) - <2 mu {eps(u)}, [[s]]> - <2 mu [[u]], {eps(s)}> + alpha mu / h_e <[[u]], [[s]]>
/// over interior and no-slip boundary edges, [[u]] = u_L (x) n_L + u_R (x) n_R.
inline CsrMatrix assemble_Ah(const Bdm1Space& space, double mu, double alpha) {
    require(mu > 0.0, "assemble_Ah: viscosity must be positive");
    require(alpha > 0.0, "assemble_Ah: penalty must be positive");
    const Mesh& m = space.mesh();
    TripletBuilder b(space.dof_count(), space.dof_count());
    for (Index c = 0; c < m.cell_count(); ++c) {
        const auto& bs = space.basis(c);
        std::array<Mat2, 6> eps;
        for (int j = 0; j < 6; ++j) eps[j] = space.basis_grad(c, j).sym();
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j) b.add(bs[i].dof, bs[j].dof, 2.0 * mu * m.cell_area(c) * ddot(eps[j], eps[i]));
    }
    for (const auto& f : facet_quadrature(m, 2)) {
        if (!penalized_facet(m, f)) continue;
        struct Trace {
            Index dof;
            Mat2 avg_eps;
            std::vector<Mat2> jump;
        };
        std::vector<Trace> tr;
        auto collect = [&](Index c, const std::vector<std::array<double, 3>>& bary, double sign, double avg) {
            for (int j = 0; j < 6; ++j) {
                Trace t{space.basis(c)[j].dof, avg * space.basis_grad(c, j).sym(), {}};
                for (const auto& bq : bary) t.jump.push_back(outer(sign * space.basis_value(c, j, bq), f.normal));
                tr.push_back(std::move(t));
            }
        };
        if (f.is_boundary()) {
            collect(f.left, f.bary_left, 1.0, 1.0);
        } else {
            collect(f.left, f.bary_left, 1.0, 0.5);
            collect(f.right, f.bary_right, -1.0, 0.5);
        }
        const double pen = alpha * mu / f.length;
        for (const auto& ti : tr)
            for (const auto& tj : tr) {
                double v = 0.0;
                for (std::size_t q = 0; q < f.weights.size(); ++q) {
                    v += f.weights[q] * (-2.0 * mu * ddot(tj.avg_eps, ti.jump[q]) - 2.0 * mu * ddot(tj.jump[q], ti.avg_eps) +
                                         pen * ddot(tj.jump[q], ti.jump[q]));
                }
                b.add(ti.dof, tj.dof, v);
            }
    }
    return b.build();
}

/// B_h(u, q) = -(div u, q); rows are cells, columns velocity dofs.
inline CsrMatrix assemble_Bh(const Bdm1Space& space, const P0Space& pressure) {
    const Mesh& m = space.mesh();
    require(pressure.mesh == &m, "assemble_Bh: velocity and pressure spaces must share the mesh");
    TripletBuilder b(pressure.dof_count(), space.dof_count());
    for (Index c = 0; c < m.cell_count(); ++c)
        for (int j = 0; j < 6; ++j) b.add(c, space.basis(c)[j].dof, -m.cell_area(c) * space.basis_grad(c, j).trace());
    return b.build();
}

/// Convective form rho_f [ -((w.grad) s, u) + sum_cells int_{dcell} (w.n)(u^w . s) ],
/// upwind trace chosen per facet quadrature point, averaged where w.n = 0.
inline CsrMatrix assemble_convection(const Bdm1Space& space, std::span<const double> w, double rho_f) {
    const Mesh& m = space.mesh();
    require(static_cast<Index>(w.size()) == space.dof_count(), "assemble_convection: wrong coefficient count");
    TripletBuilder b(space.dof_count(), space.dof_count());
    const TriangleRule rule = degree4_rule();
    for (Index c = 0; c < m.cell_count(); ++c) {
        const auto& bs = space.basis(c);
        const double a = m.cell_area(c);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const Vec2 wq = space.eval(w, c, rule.points[q]);
            for (int i = 0; i < 6; ++i) {
                const Vec2 conv = space.basis_grad(c, i).apply(wq);
                for (int j = 0; j < 6; ++j)
                    b.add(bs[i].dof, bs[j].dof, -rho_f * rule.weights[q] * a * dot(conv, space.basis_value(c, j, rule.points[q])));
            }
        }
    }
    for (const auto& f : facet_quadrature(m, 2)) {
        if (f.is_boundary()) continue;
        const auto& bl = space.basis(f.left);
        const auto& br = space.basis(f.right);
        for (std::size_t q = 0; q < f.weights.size(); ++q) {
            const double wn = dot(space.eval(w, f.left, f.bary_left[q]), f.normal);
            const double up_l = wn > 0.0 ? 1.0 : (wn < 0.0 ? 0.0 : 0.5);
            const double up_r = 1.0 - up_l;
            const double s = rho_f * f.weights[q] * wn;
            for (int i = 0; i < 6; ++i) {
                const Vec2 sl = space.basis_value(f.left, i, f.bary_left[q]);
                const Vec2 sr = space.basis_value(f.right, i, f.bary_right[q]);
                for (int j = 0; j < 6; ++j) {
                    const Vec2 ul = space.basis_value(f.left, j, f.bary_left[q]);
                    const Vec2 ur = space.basis_value(f.right, j, f.bary_right[q]);
                    // test jump (s_L - s_R) against the upwind trial trace
                    b.add(bl[i].dof, bl[j].dof, s * up_l * dot(ul, sl));
                    b.add(bl[i].dof, br[j].dof, s * up_r * dot(ur, sl));
                    b.add(br[i].dof, bl[j].dof, -s * up_l * dot(ul, sr));
                    b.add(br[i].dof, br[j].dof, -s * up_r * dot(ur, sr));
                }
            }
        }
    }
    return b.build();
}

/// D_{h,t}(w; u, s) = (rho_f/dt)(u, s) + convective form.
inline CsrMatrix assemble_Dht(const Bdm1Space& space, std::span<const double> w, double dt, double rho_f) {
    require(dt > 0.0, "assemble_Dht: dt must be positive");
    require(rho_f > 0.0, "assemble_Dht: density must be positive");
    TripletBuilder b(space.dof_count(), space.dof_count());
    b.add_block(assemble_velocity_mass(space), 0, 0, rho_f / dt);
    b.add_block(assemble_convection(space, w, rho_f), 0, 0);
    return b.build();
}

/// (rho_f/2) sum over interior edges of int |w.n| |[[u]]|^2, by the facet rule of the convective form.
inline double upwind_jump_energy(const Bdm1Space& space, std::span<const double> w, std::span<const double> u, double rho_f) {
    const Mesh& m = space.mesh();
    double s = 0.0;
    for (const auto& f : facet_quadrature(m, 2)) {
        if (f.is_boundary()) continue;
        for (std::size_t q = 0; q < f.weights.size(); ++q) {
            const double wn = dot(space.eval(w, f.left, f.bary_left[q]), f.normal);
            const Vec2 j = space.eval(u, f.left, f.bary_left[q]) - space.eval(u, f.right, f.bary_right[q]);
            s += 0.5 * rho_f * f.weights[q] * std::abs(wn) * dot(j, j);
        }
    }
    return s;
}

/// (f, s) for every velocity basis function, degree-4 rule.
inline std::vector<double> assemble_velocity_load(const Bdm1Space& space, const VectorFunction& f) {
    const Mesh& m = space.mesh();
    const TriangleRule rule = degree4_rule();
    std::vector<double> r(space.dof_count(), 0.0);
    for (Index c = 0; c < m.cell_count(); ++c) {
        const double a = m.cell_area(c);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const Vec2 fq = f(space.scalar_space().point(c, rule.points[q]));
            for (int j = 0; j < 6; ++j) r[space.basis(c)[j].dof] += rule.weights[q] * a * dot(fq, space.basis_value(c, j, rule.points[q]));
        }
    }
    return r;
}

/// ||s||_DG^2 = broken H1 seminorm + sum over penalized edges of h_e^{-1} int |[[s_t]]|^2.
inline double dg_norm(const Bdm1Space& space, std::span<const double> s) {
    const Mesh& m = space.mesh();
    double v = 0.0;
    for (Index c = 0; c < m.cell_count(); ++c) {
        const Mat2 g = space.grad(s, c);
        v += m.cell_area(c) * ddot(g, g);
    }
    for (const auto& f : facet_quadrature(m, 2)) {
        if (!penalized_facet(m, f)) continue;
        const Vec2 t{-f.normal.y, f.normal.x};
        for (std::size_t q = 0; q < f.weights.size(); ++q) {
            Vec2 j = space.eval(s, f.left, f.bary_left[q]);
            if (!f.is_boundary()) j -= space.eval(s, f.right, f.bary_right[q]);
            const double jt = dot(j, t);
            v += f.weights[q] / f.length * jt * jt;
        }
    }
    return std::sqrt(v);
}

struct FlowParams {
    double rho_f = 1.0;
    double mu = 1.0;
    double alpha = 10.0;
    double picard_tolerance = 1e-10;
    double picard_absolute_tolerance = 1e-14;
    int picard_max_iterations = 50;

    void validate() const {
        require(rho_f > 0.0 && mu > 0.0 && alpha > 0.0, "FlowParams: rho_f, mu and alpha must be positive");
        require(picard_tolerance > 0.0 && picard_max_iterations >= 1, "FlowParams: invalid Picard settings");
    }
};

struct FlowState {
    double t = 0.0;
    std::vector<double> velocity;
    std::vector<double> pressure;
};

struct FlowReport {
    int picard_iterations = 0;
    std::vector<double> increments;
};

/// Mesh-dependent flow operators assembled once.
class FlowDiscretization {
public:
    FlowDiscretization(const Mesh& mesh, FlowParams params)
        : params_(params), space_(mesh), pressure_{&mesh} {
        params_.validate();
        mass_ = assemble_velocity_mass(space_);
        a_ = assemble_Ah(space_, params_.mu, params_.alpha);
        b_ = assemble_Bh(space_, pressure_);
        bt_ = b_.transpose();
    }

    const Bdm1Space& space() const noexcept { return space_; }
    const P0Space& pressure_space() const noexcept { return pressure_; }
    const FlowParams& params() const noexcept { return params_; }
    const CsrMatrix& mass() const noexcept { return mass_; }
    const CsrMatrix& viscous() const noexcept { return a_; }
    const CsrMatrix& divergence() const noexcept { return b_; }

    FlowState zero_state(double t = 0.0) const {
        return {t, std::vector<double>(space_.dof_count(), 0.0), std::vector<double>(pressure_.dof_count(), 0.0)};
    }

    double kinetic_energy(std::span<const double> u) const { return 0.5 * params_.rho_f * bilinear(mass_, u, u); }

    double max_cell_divergence(std::span<const double> u) const {
        double d = 0.0;
        for (Index c = 0; c < space_.mesh().cell_count(); ++c) d = std::max(d, std::abs(space_.div(u, c)));
        return d;
    }

    /// Saddle-point solve for the velocity at the next level with convecting field w.
    FlowState solve_linear(const FlowState& prev, std::span<const double> w, std::span<const double> load, double dt) const {
        const Mesh& m = space_.mesh();
        const Index nu = space_.dof_count(), np = pressure_.dof_count(), n = nu + np + 1;
        TripletBuilder k(n, n);
        k.add_block(assemble_Dht(space_, w, dt, params_.rho_f), 0, 0);
        k.add_block(a_, 0, 0);
        k.add_block(bt_, 0, nu);
        k.add_block(b_, nu, 0);
        for (Index c = 0; c < np; ++c) {
            k.add(nu + c, n - 1, m.cell_area(c));
            k.add(n - 1, nu + c, m.cell_area(c));
        }
        std::vector<double> rhs(n, 0.0);
        const auto mu_prev = spmv(mass_, prev.velocity);
        for (Index i = 0; i < nu; ++i) rhs[i] = params_.rho_f / dt * mu_prev[i] + load[i];
        std::vector<bool> fixed(n, false);
        for (Index i = 0; i < nu; ++i) fixed[i] = space_.boundary_dofs()[i];
        const std::vector<double> zeros(n, 0.0);
        const CsrMatrix sys = eliminate_dirichlet(k.build(), rhs, fixed, zeros);
        const SparseLu lu(sys);
        auto x = lu.solve(rhs);
        // two rounds of iterative refinement
        for (int round = 0; round < 2; ++round) {
            auto r = spmv(sys, x);
            for (Index i = 0; i < n; ++i) r[i] = rhs[i] - r[i];
            const auto dx = lu.solve(r);
            for (Index i = 0; i < n; ++i) x[i] += dx[i];
        }
        FlowState s;
        s.t = prev.t + dt;
        s.velocity.assign(x.begin(), x.begin() + nu);
        s.pressure.assign(x.begin() + nu, x.begin() + nu + np);
        return s;
    }

private:
    FlowParams params_;
    Bdm1Space space_;
    P0Space pressure_;
    CsrMatrix mass_, a_, b_, bt_;
};

/// One implicit step; the convecting field is lagged by Picard iteration.
inline std::pair<FlowState, FlowReport> solve_flow_step(const FlowDiscretization& disc, const FlowState& prev,
                                                        std::span<const double> load, double dt) {
    require(dt > 0.0, "solve_flow_step: dt must be positive");
    require(static_cast<Index>(load.size()) == disc.space().dof_count(), "solve_flow_step: load has wrong length");
    FlowReport report;
    std::vector<double> w = prev.velocity;
    const auto& p = disc.params();
    for (int it = 1; it <= p.picard_max_iterations; ++it) {
        FlowState next = disc.solve_linear(prev, w, load, dt);
        double diff = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) diff = std::max(diff, std::abs(next.velocity[i] - w[i]));
        double scale = 0.0;
        for (double v : next.velocity) scale = std::max(scale, std::abs(v));
        report.picard_iterations = it;
        report.increments.push_back(diff);
        if (diff <= std::max(p.picard_tolerance * scale, p.picard_absolute_tolerance)) return {std::move(next), std::move(report)};
        w = std::move(next.velocity);
    }
    throw ConvergenceFailure("solve_flow_step: Picard iteration did not converge", report.increments);
}

inline std::pair<FlowState, FlowReport> solve_flow_step(const FlowDiscretization& disc, const FlowState& prev,
                                                        const VectorFunction& force, double dt) {
    const auto load = assemble_velocity_load(disc.space(), force);
    return solve_flow_step(disc, prev, load, dt);
}

} // namespace pnpk
