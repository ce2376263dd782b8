#pragma once

#include "pnpk/pnp.hpp"

#include <numbers>

namespace pnpk {

/// Smooth function of x1 with its first two derivatives.
struct Profile1D {
    std::function<double(double)> value;
    std::function<double(double)> d1;
    std::function<double(double)> d2;
};

/// Closed-form steady state (eta_1, eta_2, phi) depending on x1 only,
/// for two species with charges +1 and -1.
struct ManufacturedExact {
    Profile1D eta1, eta2, phi;
};

struct ManufacturedSources {
    ScalarFunction f0, f1, f2;
};

inline Profile1D constant_profile(double c) {
    return {[c](double) { return c; }, [](double) { return 0.0; }, [](double) { return 0.0; }};
}

inline Profile1D linear_profile(double a, double b) {
    return {[a, b](double x) { return a + b * x; }, [b](double) { return b; }, [](double) { return 0.0; }};
}

/// eta_1 = exp(k(x1-1)), eta_2 = exp(-k(x1+1)) with k = ln(10)/2, phi = -2 sinh(x1)/(e - 1/e).
inline ManufacturedExact log_density_profiles() {
    const double k = 0.5 * std::numbers::ln10;
    const double s1 = std::sinh(1.0);
    ManufacturedExact m;
    m.eta1 = {[k](double x) { return std::exp(k * (x - 1.0)); }, [k](double x) { return k * std::exp(k * (x - 1.0)); },
              [k](double x) { return k * k * std::exp(k * (x - 1.0)); }};
    m.eta2 = {[k](double x) { return std::exp(-k * (x + 1.0)); }, [k](double x) { return -k * std::exp(-k * (x + 1.0)); },
              [k](double x) { return k * k * std::exp(-k * (x + 1.0)); }};
    m.phi = {[s1](double x) { return -std::sinh(x) / s1; }, [s1](double x) { return -std::cosh(x) / s1; },
             [s1](double x) { return -std::sinh(x) / s1; }};
    return m;
}

/// Sources making `exact` a steady solution:
///   f0 = -eps phi'' - e^{eta1} + e^{eta2}
///   f_i = -(e^{eta_i} (eta_i + q_i phi)')' = -e^{eta_i} [eta_i' (eta_i + q_i phi)' + eta_i'' + q_i phi'']
inline ManufacturedSources manufactured_sources(const ManufacturedExact& exact, double eps) {
    require(eps > 0.0, "manufactured_sources: permittivity must be positive");
    ManufacturedSources s;
    s.f0 = [exact, eps](Vec2 x) {
        return -eps * exact.phi.d2(x.x) - std::exp(exact.eta1.value(x.x)) + std::exp(exact.eta2.value(x.x));
    };
    auto np = [](const Profile1D& eta, const Profile1D& phi, double q) {
        return [eta, phi, q](Vec2 x) {
            const double e1 = eta.d1(x.x);
            return -std::exp(eta.value(x.x)) * (e1 * (e1 + q * phi.d1(x.x)) + eta.d2(x.x) + q * phi.d2(x.x));
        };
    };
    s.f1 = np(exact.eta1, exact.phi, 1.0);
    s.f2 = np(exact.eta2, exact.phi, -1.0);
    return s;
}

} // namespace pnpk
