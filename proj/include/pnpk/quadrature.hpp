#pragma once

#include "pnpk/core.hpp"

#include <numbers>

namespace pnpk {

/// Triangle quadrature in barycentric coordinates; weights sum to one and are
/// scaled by the cell area at the call site.
struct TriangleRule {
    std::vector<std::array<double, 3>> points;
    std::vector<double> weights;

    std::size_t size() const noexcept { return weights.size(); }
};

/// Quadrature on the unit interval [0, 1]; weights sum to one.
struct LineRule {
    std::vector<double> points;
    std::vector<double> weights;

    std::size_t size() const noexcept { return weights.size(); }
};

/// Gauss-Legendre rule with n points mapped to [0, 1].
inline LineRule gauss_legendre(int n) {
    require(n >= 1, "gauss_legendre: need at least one point");
    LineRule r;
    r.points.resize(n);
    r.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 1.0;
        for (int it = 0; it < 100; ++it) {
            double p1 = 1.0, p2 = 0.0;
            for (int k = 1; k <= n; ++k) {
                const double p3 = p2;
                p2 = p1;
                p1 = ((2.0 * k - 1.0) * x * p2 - (k - 1.0) * p3) / k;
            }
            dp = n * (x * p1 - p2) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        r.points[i] = 0.5 * (1.0 - x);
        r.weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    return r;
}

inline TriangleRule centroid_rule() { return {{{1.0 / 3, 1.0 / 3, 1.0 / 3}}, {1.0}}; }

/// Six-point symmetric rule, exact for polynomials of degree 4.
inline TriangleRule degree4_rule() {
    constexpr double a1 = 0.445948490915965, b1 = 1.0 - 2.0 * a1, w1 = 0.223381589678011;
    constexpr double a2 = 0.091576213509771, b2 = 1.0 - 2.0 * a2, w2 = 0.109951743655322;
    TriangleRule r;
    r.points = {{b1, a1, a1}, {a1, b1, a1}, {a1, a1, b1}, {b2, a2, a2}, {a2, b2, a2}, {a2, a2, b2}};
    r.weights = {w1, w1, w1, w2, w2, w2};
    return r;
}

/// Collapsed (Duffy) tensor Gauss rule with n*n points, exact through degree 2n-2.
inline TriangleRule collapsed_gauss_rule(int n) {
    const LineRule g = gauss_legendre(n);
    TriangleRule r;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double s = g.points[i];
            const double t = g.points[j];
            const double l1 = s;
            const double l2 = (1.0 - s) * t;
            r.points.push_back({1.0 - l1 - l2, l1, l2});
            r.weights.push_back(2.0 * g.weights[i] * g.weights[j] * (1.0 - s));
        }
    }
    return r;
}

/// Rule used where the integrand carries e^{eta_h}: degree 18, so cross terms
/// that cancel analytically also cancel to roundoff.
inline const TriangleRule& high_order_rule() {
    static const TriangleRule r = collapsed_gauss_rule(10);
    return r;
}

} // namespace pnpk
