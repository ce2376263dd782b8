#pragma once

#include "pnpk/core.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <numbers>
#include <span>
#include <utility>

namespace pnpk {

/// Boundary region for the electrostatic potential.
enum class BoundaryTag { Dirichlet, Neumann, Robin, NoFlux };

/// Boundary region for the fluid velocity.
enum class FlowTag { NoSlip, FluxFree };

enum class DiagonalRule { right, union_jack };

struct Rectangle {
    double x0 = 0.0, x1 = 1.0;
    double y0 = 0.0, y1 = 1.0;
};

struct MeshEdge {
    std::array<Index, 2> vertices{};
    std::array<Index, 2> cells{-1, -1};
    int cell_count = 0;

    bool is_boundary() const noexcept { return cell_count == 1; }
};

/// Conforming 2D triangulation. Cells are counterclockwise; local edge k of a
/// cell is the edge opposite its local vertex k.
class Mesh {
public:
    Mesh(std::vector<Vec2> vertices, std::vector<std::array<Index, 3>> cells)
        : vertices_(std::move(vertices)), cells_(std::move(cells)) {
        build();
    }

    Index vertex_count() const noexcept { return static_cast<Index>(vertices_.size()); }
    Index cell_count() const noexcept { return static_cast<Index>(cells_.size()); }
    Index edge_count() const noexcept { return static_cast<Index>(edges_.size()); }

    const std::vector<Vec2>& vertices() const noexcept { return vertices_; }
    const std::vector<std::array<Index, 3>>& cells() const noexcept { return cells_; }
    const std::vector<MeshEdge>& edges() const noexcept { return edges_; }

    Vec2 vertex(Index v) const { return vertices_[v]; }
    const std::array<Index, 3>& cell(Index c) const { return cells_[c]; }
    const MeshEdge& edge(Index e) const { return edges_[e]; }
    const std::array<Index, 3>& cell_edges(Index c) const { return cell_edges_[c]; }

    double cell_area(Index c) const { return cell_areas_[c]; }
    double edge_length(Index e) const { return edge_lengths_[e]; }
    const std::vector<double>& cell_areas() const noexcept { return cell_areas_; }
    const std::vector<double>& edge_lengths() const noexcept { return edge_lengths_; }

    Vec2 edge_midpoint(Index e) const {
        const auto& ed = edges_[e];
        return 0.5 * (vertices_[ed.vertices[0]] + vertices_[ed.vertices[1]]);
    }
    Vec2 cell_centroid(Index c) const {
        const auto& t = cells_[c];
        return (1.0 / 3.0) * (vertices_[t[0]] + vertices_[t[1]] + vertices_[t[2]]);
    }
    double total_area() const {
        double a = 0.0;
        for (double x : cell_areas_) a += x;
        return a;
    }

    const std::vector<Index>& boundary_edges() const noexcept { return boundary_edges_; }

    BoundaryTag tag(Index e) const {
        auto it = tags_.find(e);
        if (it == tags_.end()) throw InvalidArgument("edge " + std::to_string(e) + " is not a boundary edge");
        return it->second;
    }
    FlowTag flow_tag(Index e) const {
        auto it = flow_tags_.find(e);
        if (it == flow_tags_.end()) throw InvalidArgument("edge " + std::to_string(e) + " is not a boundary edge");
        return it->second;
    }
    const std::map<Index, BoundaryTag>& boundary_markers() const noexcept { return tags_; }
    const std::map<Index, FlowTag>& flow_markers() const noexcept { return flow_tags_; }

    /// Retag every boundary edge whose midpoint satisfies `where`.
    void tag_boundary(const std::function<bool(Vec2)>& where, BoundaryTag t) {
        for (Index e : boundary_edges_)
            if (where(edge_midpoint(e))) tags_[e] = t;
    }
    void tag_flow_boundary(const std::function<bool(Vec2)>& where, FlowTag t) {
        for (Index e : boundary_edges_)
            if (where(edge_midpoint(e))) flow_tags_[e] = t;
    }

    bool has_tag(BoundaryTag t) const {
        return std::any_of(tags_.begin(), tags_.end(), [t](const auto& kv) { return kv.second == t; });
    }

    /// Local index (0..2) of edge e within cell c.
    int local_edge(Index c, Index e) const {
        const auto& ce = cell_edges_[c];
        for (int k = 0; k < 3; ++k)
            if (ce[k] == e) return k;
        throw InvalidArgument("edge not incident to cell");
    }

private:
    void build() {
        const Index nv = vertex_count();
        cell_edges_.resize(cells_.size());
        cell_areas_.resize(cells_.size());
        std::map<std::pair<Index, Index>, Index> lookup;
        for (Index c = 0; c < cell_count(); ++c) {
            const auto& t = cells_[c];
            for (Index v : t)
                if (v < 0 || v >= nv) throw InvalidArgument("cell references a missing vertex");
            const Vec2 a = vertices_[t[0]], b = vertices_[t[1]], d = vertices_[t[2]];
            const double area = 0.5 * cross(b - a, d - a);
            if (!(area > 0.0))
                throw InvalidArgument("cell " + std::to_string(c) + " is not counterclockwise or is degenerate");
            cell_areas_[c] = area;
            for (int k = 0; k < 3; ++k) {
                Index p = t[(k + 1) % 3], q = t[(k + 2) % 3];
                auto key = std::minmax(p, q);
                auto [it, inserted] = lookup.try_emplace({key.first, key.second}, static_cast<Index>(edges_.size()));
                if (inserted) {
                    MeshEdge ed;
                    ed.vertices = {key.first, key.second};
                    edges_.push_back(ed);
                }
                MeshEdge& ed = edges_[it->second];
                if (ed.cell_count >= 2) throw InvalidArgument("non-manifold edge");
                ed.cells[ed.cell_count++] = c;
                cell_edges_[c][k] = it->second;
            }
        }
        edge_lengths_.resize(edges_.size());
        for (Index e = 0; e < edge_count(); ++e) {
            const auto& ed = edges_[e];
            edge_lengths_[e] = norm(vertices_[ed.vertices[1]] - vertices_[ed.vertices[0]]);
            if (ed.is_boundary()) {
                boundary_edges_.push_back(e);
                tags_[e] = BoundaryTag::NoFlux;
                flow_tags_[e] = FlowTag::FluxFree;
            }
        }
    }

    std::vector<Vec2> vertices_;
    std::vector<std::array<Index, 3>> cells_;
    std::vector<MeshEdge> edges_;
    std::vector<std::array<Index, 3>> cell_edges_;
    std::vector<double> cell_areas_;
    std::vector<double> edge_lengths_;
    std::vector<Index> boundary_edges_;
    std::map<Index, BoundaryTag> tags_;
    std::map<Index, FlowTag> flow_tags_;
};

/// Structured triangulation of an axis-aligned rectangle: 2*nx*ny triangles,
/// (nx+1)(ny+1) vertices, every boundary edge tagged NoFlux / FluxFree.
inline Mesh build_rect_mesh(const Rectangle& r, int nx, int ny, DiagonalRule rule = DiagonalRule::right) {
    require(nx >= 1 && ny >= 1, "build_rect_mesh: subdivision counts must be positive");
    require(r.x1 > r.x0 && r.y1 > r.y0, "build_rect_mesh: degenerate rectangle");
    std::vector<Vec2> verts;
    verts.reserve(static_cast<std::size_t>((nx + 1) * (ny + 1)));
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i)
            verts.push_back({r.x0 + (r.x1 - r.x0) * i / nx, r.y0 + (r.y1 - r.y0) * j / ny});
    auto id = [nx](int i, int j) { return static_cast<Index>(j * (nx + 1) + i); };
    std::vector<std::array<Index, 3>> cells;
    cells.reserve(static_cast<std::size_t>(2 * nx * ny));
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const Index p00 = id(i, j), p10 = id(i + 1, j), p01 = id(i, j + 1), p11 = id(i + 1, j + 1);
            const bool anti = rule == DiagonalRule::union_jack && ((i + j) % 2 == 1);
            if (!anti) {
                cells.push_back({p00, p10, p11});
                cells.push_back({p00, p11, p01});
            } else {
                cells.push_back({p00, p10, p01});
                cells.push_back({p10, p11, p01});
            }
        }
    }
    return Mesh(std::move(verts), std::move(cells));
}

struct EdgeCellAngle {
    Index cell = -1;
    double theta = 0.0;       ///< interior angle opposite the edge, radians
    double permittivity = 0.0; ///< cell-average permittivity
};

struct EdgeGeometry {
    Index edge = -1;
    std::vector<EdgeCellAngle> adjacent;
    double omega = 0.0;
};

/// Angle at `apex` between the rays to p and q.
inline double opposite_angle(Vec2 apex, Vec2 p, Vec2 q) {
    const Vec2 a = p - apex, b = q - apex;
    return std::atan2(std::abs(cross(a, b)), dot(a, b));
}

/// Cotangent of the angle at `apex`, evaluated without going through the angle.
inline double opposite_cot(Vec2 apex, Vec2 p, Vec2 q) {
    const Vec2 a = p - apex, b = q - apex;
    return dot(a, b) / std::abs(cross(a, b));
}

/// Per-edge omega_E = 1/2 * sum over adjacent cells of <eps>_cell * cot(theta).
/// `permittivity` holds one value (the cell average) per cell.
inline std::vector<EdgeGeometry> compute_edge_geometry(const Mesh& mesh, std::span<const double> permittivity) {
    require(static_cast<Index>(permittivity.size()) == mesh.cell_count(),
            "compute_edge_geometry: one permittivity value per cell expected");
    for (double e : permittivity)
        if (!(e > 0.0) || !std::isfinite(e)) throw InvalidArgument("compute_edge_geometry: permittivity must be positive");
    std::vector<EdgeGeometry> out(static_cast<std::size_t>(mesh.edge_count()));
    for (Index e = 0; e < mesh.edge_count(); ++e) out[e].edge = e;
    for (Index c = 0; c < mesh.cell_count(); ++c) {
        const auto& t = mesh.cell(c);
        for (int k = 0; k < 3; ++k) {
            const Index e = mesh.cell_edges(c)[k];
            const Vec2 apex = mesh.vertex(t[k]);
            const Vec2 p = mesh.vertex(t[(k + 1) % 3]), q = mesh.vertex(t[(k + 2) % 3]);
            EdgeCellAngle a{c, opposite_angle(apex, p, q), permittivity[c]};
            out[e].omega += 0.5 * a.permittivity * opposite_cot(apex, p, q);
            out[e].adjacent.push_back(a);
        }
    }
    return out;
}

struct MaxPrincipleReport {
    bool satisfied = true;
    std::vector<std::pair<Index, double>> violating_edges; ///< (edge, omega_E)
};

inline constexpr double kGeometryTolerance = 1e-14;

inline MaxPrincipleReport check_max_principle_condition(std::span<const EdgeGeometry> geometry,
                                                        double tol = kGeometryTolerance) {
    MaxPrincipleReport r;
    for (const auto& g : geometry) {
        if (g.omega < -tol) {
            r.satisfied = false;
            r.violating_edges.emplace_back(g.edge, g.omega);
        }
    }
    return r;
}

} // namespace pnpk
