#pragma once

#include "pnpk/sparse.hpp"
#include "pnpk/mesh.hpp"

#include <Eigen/Dense>

#include <random>

namespace pnpk::testing {

/// Right-diagonal mesh of the unit square with interior vertices moved by up to `jitter` cell widths.
inline Mesh jittered_mesh(int nx, int ny, unsigned seed, double jitter = 0.2) {
    const Mesh base = build_rect_mesh({0.0, 1.0, 0.0, 1.0}, nx, ny);
    std::mt19937 gen(seed);
    std::uniform_real_distribution<double> u(-jitter, jitter);
    std::vector<Vec2> v = base.vertices();
    for (auto& p : v) {
        const bool interior = p.x > 1e-12 && p.x < 1.0 - 1e-12 && p.y > 1e-12 && p.y < 1.0 - 1e-12;
        if (interior) p += Vec2{u(gen) / nx, u(gen) / ny};
    }
    return Mesh(std::move(v), base.cells());
}

/// Two triangles sharing the long edge (0,0)-(2,0); both opposite angles are obtuse.
inline Mesh obtuse_pair() {
    return Mesh({{0.0, 0.0}, {2.0, 0.0}, {1.0, 0.3}, {1.0, -0.3}}, {{{0, 1, 2}}, {{0, 3, 1}}});
}

inline Index find_edge(const Mesh& m, Index a, Index b) {
    for (Index e = 0; e < m.edge_count(); ++e) {
        const auto& v = m.edge(e).vertices;
        if ((v[0] == a && v[1] == b) || (v[0] == b && v[1] == a)) return e;
    }
    return -1;
}

inline std::vector<double> random_vector(std::size_t n, unsigned seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937 gen(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> x(n);
    for (auto& v : x) v = u(gen);
    return x;
}

inline Eigen::MatrixXd dense(const CsrMatrix& a) {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(a.rows(), a.cols());
    for (Index r = 0; r < a.rows(); ++r)
        for (Index k = a.offsets()[r]; k < a.offsets()[r + 1]; ++k) d(r, a.indices()[k]) += a.values()[k];
    return d;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, std::abs(a[k] - b[k]));
    return d;
}

} // namespace pnpk::testing
