#include "pnpk/harness/convergence.hpp"
#include "pnpk/harness/energy.hpp"
#include "pnpk/harness/scenario.hpp"
#include "pnpk/quadrature.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace pnpk;
using pnpk::testing::dense;
using pnpk::testing::random_vector;

namespace {

FieldP1 field_from(const P1Space& s, std::span<const double> v) { return FieldP1(s, std::vector<double>(v.begin(), v.end())); }

/// Unit square, Dirichlet left, Robin right, Neumann top, no-flux bottom.
Mesh mixed_mesh(int n) {
    Mesh m = build_rect_mesh({0, 1, 0, 1}, n, n);
    m.tag_boundary([](Vec2 x) { return x.x < 1e-12; }, BoundaryTag::Dirichlet);
    m.tag_boundary([](Vec2 x) { return x.x > 1 - 1e-12; }, BoundaryTag::Robin);
    m.tag_boundary([](Vec2 x) { return x.y > 1 - 1e-12 && x.x > 1e-12 && x.x < 1 - 1e-12; }, BoundaryTag::Neumann);
    return m;
}

PnpProblem three_species(const Mesh& m) {
    PnpProblem p;
    p.mesh = &m;
    p.species = {Species{"a", 1.0, 1.0}, Species{"b", -1.0, 0.7}, Species{"c", 2.0, 1.3}};
    p.permittivity.assign(m.cell_count(), 0.3);
    p.boundary.voltage = [](Vec2 x) { return 0.2 * x.y; };
    p.boundary.surface_charge = [](Vec2 x) { return 1.0 - x.x; };
    p.boundary.capacitance = [](Vec2 x) { return 2.0 + x.y; };
    p.boundary.robin_data = [](Vec2) { return 0.4; };
    return p;
}

AdvectionField swirl(const P1Space& s) {
    const Mesh& m = s.mesh();
    const TriangleRule rule = degree4_rule();
    AdvectionField f(m.cell_count());
    for (Index c = 0; c < m.cell_count(); ++c)
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const Vec2 x = s.point(c, rule.points[q]);
            f[c].push_back({rule.points[q], rule.weights[q] * m.cell_area(c), Vec2{std::sin(3 * x.y), std::cos(2 * x.x)}});
        }
    return f;
}

/// Max over random directions of |FD - Jv| / |Jv|, central differences with step h.
double jacobian_mismatch(const PnpSystem& sys, std::span<const double> x, const PnpState* prev, double dt,
                         const AdvectionField* adv, unsigned seed) {
    const auto lin = sys.evaluate(x, prev, dt, adv, true);
    const double h = 1e-7;
    double worst = 0.0;
    for (unsigned k = 0; k < 3; ++k) {
        const auto v = random_vector(x.size(), seed * 31 + k);
        std::vector<double> xp(x.begin(), x.end()), xm(x.begin(), x.end());
        for (std::size_t i = 0; i < x.size(); ++i) {
            xp[i] += h * v[i];
            xm[i] -= h * v[i];
        }
        const auto rp = sys.evaluate(xp, prev, dt, adv, false).residual;
        const auto rm = sys.evaluate(xm, prev, dt, adv, false).residual;
        const auto jv = spmv(lin.jacobian, v);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < jv.size(); ++i) {
            const double fd = (rp[i] - rm[i]) / (2 * h);
            num += (fd - jv[i]) * (fd - jv[i]);
            den += jv[i] * jv[i];
        }
        worst = std::max(worst, std::sqrt(num / den));
    }
    return worst;
}

PnpState random_state(const PnpSystem& sys, unsigned seed, double spread) {
    PnpState s;
    for (Index i = 0; i < sys.species_count(); ++i)
        s.eta.push_back(field_from(sys.space(), random_vector(sys.vertex_count(), seed + i, -spread, spread)));
    s.phi = field_from(sys.space(), random_vector(sys.vertex_count(), seed + 97, -spread, spread));
    return s;
}

} // namespace

TEST(Bernoulli, ValuesAndIdentity) {
    EXPECT_EQ(bernoulli(0.0), 1.0);
    EXPECT_NEAR(bernoulli(1.0), 1.0 / (std::exp(1.0) - 1.0), 1e-15);
    for (double x : {-30.0, -2.0, -0.3, -1e-3, 1e-5, 0.009, 0.011, 0.7, 5.0, 40.0})
        EXPECT_NEAR(bernoulli(-x) - bernoulli(x), x, 1e-12 * (1 + std::abs(x))) << x;
    EXPECT_NEAR(bernoulli(0.00999999), bernoulli(0.01000001), 1e-7);
    EXPECT_GT(bernoulli(-800.0), 0.0);
    EXPECT_EQ(bernoulli(800.0), 800.0 / std::expm1(800.0));
}

TEST(Bernoulli, DerivativeMatchesCentralDifference) {
    for (double x : {-20.0, -1.5, -0.02, -0.005, 0.0, 0.003, 0.0101, 0.4, 3.0, 25.0}) {
        const double h = 1e-6;
        const double fd = (bernoulli(x + h) - bernoulli(x - h)) / (2 * h);
        EXPECT_NEAR(bernoulli_derivative(x), fd, 1e-8) << x;
    }
    EXPECT_TRUE(std::isfinite(bernoulli_derivative(-750.0)));
    EXPECT_TRUE(std::isfinite(bernoulli_derivative(750.0)));
}

TEST(CheckedExp, OverflowIsDivergence) {
    EXPECT_NO_THROW(checked_exp(699.0));
    EXPECT_THROW(checked_exp(701.0), DivergenceError);
    EXPECT_THROW(checked_exp(std::numeric_limits<double>::quiet_NaN()), DivergenceError);
}

TEST(EafeAssembly, ZeroLogDensityIsUnitStiffness) {
    const Mesh m = pnpk::testing::jittered_mesh(4, 3, 8);
    const P1Space s(m);
    const auto zero = FieldP1::zero(s);
    const auto eafe = assemble_np_flux_eafe(s, 1.0, zero, zero);
    const auto k = assemble_p1_stiffness(s, std::vector<double>(m.cell_count(), 1.0));
    EXPECT_LT((dense(eafe.matrix) - dense(k)).cwiseAbs().maxCoeff(), 1e-13);
    for (double r : eafe.residual) EXPECT_EQ(r, 0.0);
}

TEST(EafeAssembly, ConstantLogDensityFactorsOut) {
    const Mesh m = pnpk::testing::jittered_mesh(4, 4, 12);
    const P1Space s(m);
    const double c = 0.8, d = 1.7;
    const auto eta = interpolate(s, [c](Vec2) { return c; });
    const auto psi = interpolate(s, [](Vec2 x) { return std::sin(3 * x.x) + x.y * x.y; });
    const auto eafe = assemble_np_flux_eafe(s, d, eta, psi);
    const Eigen::MatrixXd k = d * std::exp(c) * dense(assemble_p1_stiffness(s, std::vector<double>(m.cell_count(), 1.0)));
    EXPECT_LT((dense(eafe.matrix) - k).cwiseAbs().maxCoeff(), 1e-12);
    std::vector<double> u(s.dof_count());
    for (Index v = 0; v < s.dof_count(); ++v) u[v] = eta[v] + psi[v];
    const auto ku = spmv(eafe.matrix, u);
    for (Index v = 0; v < s.dof_count(); ++v) EXPECT_NEAR(eafe.residual[v], ku[v], 1e-12);
}

TEST(EafeAssembly, MatrixTimesPotentialIsResidual) {
    for (unsigned seed : {3u, 4u, 5u}) {
        const Mesh m = pnpk::testing::jittered_mesh(5, 4, seed);
        const P1Space s(m);
        const auto eta = field_from(s, random_vector(s.dof_count(), seed, -2.0, 2.0));
        const auto psi = field_from(s, random_vector(s.dof_count(), seed + 50, -3.0, 3.0));
        const auto eafe = assemble_np_flux_eafe(s, 0.6, eta, psi);
        std::vector<double> u(s.dof_count());
        for (Index v = 0; v < s.dof_count(); ++v) u[v] = eta[v] + psi[v];
        const auto ku = spmv(eafe.matrix, u);
        for (Index v = 0; v < s.dof_count(); ++v) EXPECT_NEAR(eafe.residual[v], ku[v], 1e-11 * (1 + std::abs(ku[v])));
        const Eigen::MatrixXd a = dense(eafe.matrix);
        EXPECT_LT((a - a.transpose()).cwiseAbs().maxCoeff(), 1e-13);
        EXPECT_LT(a.rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(EafeAssembly, EdgeAverageIsLogMeanWithoutDrift) {
    const double a = -0.4, b = 1.1;
    const double logmean = (std::exp(b) - std::exp(a)) / (b - a);
    EXPECT_NEAR(eafe_edge_average(a, b, 0.3, 0.3), logmean, 1e-14);
    EXPECT_NEAR(eafe_edge_average(a, b, 0.2, -0.5), eafe_edge_average(b, a, -0.5, 0.2), 1e-14);
    EXPECT_NEAR(eafe_edge_average(0.7, 0.7, 0.0, 0.0), std::exp(0.7), 1e-14);
}

namespace {

/// Largest relative gap between EAFE entries and a dense quadrature assembly of
/// int e^{eta_h} grad(lambda_a) . grad(lambda_b) on the two-cell square of side h, eta = x1.
double two_cell_gap(double h) {
    const Mesh m = build_rect_mesh({0, h, 0, h}, 1, 1);
    const P1Space s(m);
    const auto eta = interpolate(s, [](Vec2 x) { return x.x; });
    const auto eafe = assemble_np_flux_eafe(s, 1.0, eta, FieldP1::zero(s));
    const TriangleRule rule = collapsed_gauss_rule(8);
    Eigen::MatrixXd oracle = Eigen::MatrixXd::Zero(4, 4);
    for (Index c = 0; c < m.cell_count(); ++c) {
        const auto& t = m.cell(c);
        double avg = 0.0;
        for (std::size_t q = 0; q < rule.size(); ++q) avg += rule.weights[q] * std::exp(eta.at(c, rule.points[q]));
        const auto& g = s.gradients(c);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) oracle(t[i], t[j]) += avg * m.cell_area(c) * dot(g[i], g[j]);
    }
    const Eigen::MatrixXd a = dense(eafe.matrix);
    double gap = 0.0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            if (std::abs(oracle(i, j)) < 1e-14)
                gap = std::max(gap, std::abs(a(i, j)));
            else
                gap = std::max(gap, std::abs(a(i, j) / oracle(i, j) - 1.0));
        }
    return gap;
}

} // namespace

TEST(EafeAssembly, TwoCellWeightsMatchDenseQuadrature) {
    EXPECT_LE(two_cell_gap(0.1), 0.05);
    // the gap is first order in h
    const double ratio = two_cell_gap(0.1) / two_cell_gap(0.05);
    EXPECT_GE(ratio, 1.8);
    EXPECT_LE(ratio, 2.2);
}

TEST(EafeAssembly, AgreesWithSystemFluxRows) {
    const Mesh m = build_rect_mesh({0, 1, 0, 1}, 4, 4);
    PnpProblem p;
    p.mesh = &m;
    p.species = {Species{"x", 2.0, 0.9}};
    p.permittivity.assign(m.cell_count(), 1.0);
    const PnpSystem sys(p);
    const auto st = random_state(sys, 21, 1.0);
    // steady residual without sources: eta rows hold exactly the flux balance
    const auto r = sys.evaluate(sys.pack(st), nullptr, std::numeric_limits<double>::infinity(), nullptr, false).residual;
    std::vector<double> psi(sys.vertex_count());
    for (Index v = 0; v < sys.vertex_count(); ++v) psi[v] = 2.0 * st.phi[v];
    const auto eafe = assemble_np_flux_eafe(sys.space(), 0.9, st.eta[0], field_from(sys.space(), psi));
    for (Index v = 0; v < sys.vertex_count(); ++v) EXPECT_NEAR(r[sys.eta_dof(0, v)], eafe.residual[v], 1e-12);
}

class JacobianCheck : public ::testing::TestWithParam<unsigned> {};

TEST_P(JacobianCheck, TransientWithMixedBoundaries) {
    const unsigned seed = GetParam();
    const Mesh m = mixed_mesh(4);
    const PnpSystem sys(three_species(m));
    const auto prev = random_state(sys, seed, 0.8);
    const auto x = sys.pack(random_state(sys, seed + 7, 0.8));
    EXPECT_LT(jacobian_mismatch(sys, x, &prev, 0.05, nullptr, seed), 1e-6);
}

TEST_P(JacobianCheck, WithAdvection) {
    const unsigned seed = GetParam();
    const Mesh m = mixed_mesh(4);
    const PnpSystem sys(three_species(m));
    const auto adv = swirl(sys.space());
    const auto prev = random_state(sys, seed + 3, 0.5);
    const auto x = sys.pack(random_state(sys, seed + 11, 0.5));
    EXPECT_LT(jacobian_mismatch(sys, x, &prev, 0.02, &adv, seed), 1e-6);
}

TEST_P(JacobianCheck, SteadyWithMeanZeroMultiplier) {
    const unsigned seed = GetParam();
    const Mesh m = build_rect_mesh({0, 1, 0, 1}, 4, 4);
    PnpProblem p;
    p.mesh = &m;
    p.species = {Species{"a", 1.0, 1.0}, Species{"b", -1.0, 2.0}};
    p.permittivity.assign(m.cell_count(), 0.05);
    const PnpSystem sys(p);
    ASSERT_TRUE(sys.has_multiplier());
    auto x = sys.pack(random_state(sys, seed + 5, 1.0));
    x.back() = 0.3;
    EXPECT_LT(jacobian_mismatch(sys, x, nullptr, std::numeric_limits<double>::infinity(), nullptr, seed), 1e-6);
}

TEST_P(JacobianCheck, ManufacturedWithFixedSpecies) {
    const unsigned seed = GetParam();
    const Mesh m = manufactured_mesh(4);
    const PnpSystem sys(manufactured_problem(m, 0.1, log_density_profiles()));
    const auto x = sys.pack(random_state(sys, seed + 9, 1.0));
    EXPECT_LT(jacobian_mismatch(sys, x, nullptr, std::numeric_limits<double>::infinity(), nullptr, seed), 1e-6);
}

INSTANTIATE_TEST_SUITE_P(RandomStates, JacobianCheck, ::testing::Values(1u, 2u, 3u, 4u, 5u));

TEST(NewtonSystem, UnchargedSpeciesDecouplesPoisson) {
    const Mesh m = mixed_mesh(4);
    PnpProblem p = three_species(m);
    p.species = {Species{"neutral", 0.0, 1.0}};
    const PnpSystem sys(p);
    const auto prev = random_state(sys, 40, 1.0);
    const auto it = random_state(sys, 41, 1.0);
    const auto lin = sys.newton_step_system(prev, it, 0.1);
    for (Index v = 0; v < sys.vertex_count(); ++v)
        for (Index w = 0; w < sys.vertex_count(); ++w) EXPECT_EQ(lin.jacobian.at(sys.phi_dof(v), sys.eta_dof(0, w)), 0.0);
    const auto phi_a = sys.solve_poisson(it.eta);
    const auto phi_b = sys.solve_poisson(prev.eta);
    EXPECT_LT(pnpk::testing::max_abs_diff(phi_a.values, phi_b.values), 1e-14);
}

TEST(NewtonSystem, ConvergedStateHasSmallResidual) {
    const Mesh m = manufactured_mesh(16);
    const auto exact = log_density_profiles();
    const PnpSystem sys(manufactured_problem(m, 1e-2, exact));
    const auto [st, rep] = solve_steady(sys, manufactured_initial_guess(sys, exact));
    const double r0 = rep.residual_history.front();
    const auto r = sys.evaluate(sys.pack(st), nullptr, std::numeric_limits<double>::infinity(), nullptr, false).residual;
    EXPECT_LE(norm2(r), std::max(1e-10 * r0, 1e-13));
}

TEST(InitialState, ZeroDataGivesZeroPotential) {
    Mesh m = build_rect_mesh({0, 1, 0, 1}, 6, 6);
    m.tag_boundary([](Vec2) { return true; }, BoundaryTag::Dirichlet);
    PnpProblem p;
    p.mesh = &m;
    p.species = {Species{"+", 1.0, 1.0}, Species{"-", -1.0, 1.0}};
    p.permittivity.assign(m.cell_count(), 1.0);
    const PnpSystem sys(p);
    const auto s = sys.solve_initial_state();
    for (double v : s.phi.values) EXPECT_NEAR(v, 0.0, 1e-14);
    for (const auto& e : s.eta)
        for (double v : e.values) EXPECT_NEAR(v, 0.0, 1e-14);
}

TEST(InitialState, LinearDataProjectsToInterpolant) {
    const Mesh m = pnpk::testing::jittered_mesh(5, 5, 31);
    PnpProblem p = three_species(m);
    p.species[0].initial_log_density = [](Vec2 x) { return 0.3 - 0.5 * x.x + 0.25 * x.y; };
    p.species[1].initial_log_density = [](Vec2 x) { return -1.0 + x.y; };
    p.species[2].initial_log_density = [](Vec2) { return 0.1; };
    const PnpSystem sys(p);
    const auto s = sys.solve_initial_state();
    for (Index i = 0; i < 3; ++i) {
        const auto ref = interpolate(sys.space(), p.species[i].initial_log_density);
        EXPECT_LT(pnpk::testing::max_abs_diff(s.eta[i].values, ref.values), 1e-12);
    }
    ASSERT_TRUE(sys.has_multiplier());
    double mean = 0.0;
    for (Index v = 0; v < sys.vertex_count(); ++v) mean += sys.space().lumped_weights()[v] * s.phi[v];
    EXPECT_NEAR(mean, 0.0, 1e-12);
}

TEST(InitialState, PotentialConvergesAtFirstOrder) {
    const auto exact = log_density_profiles();
    std::vector<double> hs, errs;
    for (int nx : {20, 40, 80}) {
        const Mesh m = manufactured_mesh(nx);
        const PnpSystem sys(manufactured_problem(m, 1.0, exact));
        const auto s = sys.solve_initial_state();
        hs.push_back(2.0 / nx);
        errs.push_back(h1_seminorm_diff(s.phi, [&exact](Vec2 x) { return Vec2{exact.phi.d1(x.x), 0.0}; }));
    }
    const double rate = fit_rate(hs, errs);
    EXPECT_GE(rate, 0.8);
    EXPECT_LE(rate, 1.2);
}

TEST(AdvanceTimestep, SteadyManufacturedStateStaysPut) {
    const Mesh m = manufactured_mesh(32);
    const auto exact = log_density_profiles();
    const PnpSystem sys(manufactured_problem(m, 1e-2, exact));
    const auto [steady, rep] = solve_steady(sys, manufactured_initial_guess(sys, exact));
    const auto [next, srep] = advance_timestep(sys, steady, 1e-2);
    EXPECT_LT(pnpk::testing::max_abs_diff(sys.pack(next), sys.pack(steady)), 1e-9);
    EXPECT_DOUBLE_EQ(next.t, steady.t + 1e-2);

    // from the interpolated exact solution the step stays at discretization distance
    PnpState interp;
    interp.eta = {interpolate(sys.space(), [&](Vec2 x) { return exact.eta1.value(x.x); }),
                  interpolate(sys.space(), [&](Vec2 x) { return exact.eta2.value(x.x); })};
    interp.phi = interpolate(sys.space(), [&](Vec2 x) { return exact.phi.value(x.x); });
    const auto [stepped, irep] = advance_timestep(sys, interp, 1e-3);
    const double bound = std::max(manufactured_h1_error(interp, exact), manufactured_h1_error(steady, exact));
    EXPECT_LE(manufactured_h1_error(stepped, exact), 1.05 * bound);
}

TEST(AdvanceTimestep, UniformUnchargedStateUnchanged) {
    const Mesh m = build_rect_mesh({0, 2, 0, 1}, 6, 3);
    PnpProblem p;
    p.mesh = &m;
    p.species = {Species{"n", 0.0, 1.5, [](Vec2) { return 0.4; }}};
    p.permittivity.assign(m.cell_count(), 1.0);
    const PnpSystem sys(p);
    const auto s0 = sys.solve_initial_state();
    const auto [s1, rep] = advance_timestep(sys, s0, 0.1);
    for (double v : s1.eta[0].values) EXPECT_NEAR(v, 0.4, 1e-13);
    EXPECT_LT(pnpk::testing::max_abs_diff(s1.phi.values, s0.phi.values), 1e-13);
}

TEST(AdvanceTimestep, SmallPermittivityIterationBound) {
    const auto row = solve_manufactured(40, 1e-4);
    EXPECT_LE(row.newton_iters, 15);
    EXPECT_TRUE(std::isfinite(row.error));
}

TEST(AdvanceTimestep, ReportsResidualHistory) {
    const Mesh m = mixed_mesh(6);
    const PnpSystem sys(three_species(m));
    const auto s0 = sys.solve_initial_state();
    const auto [s1, rep] = advance_timestep(sys, s0, 0.01);
    ASSERT_EQ(static_cast<int>(rep.residual_history.size()), rep.iterations + 1);
    EXPECT_LE(rep.residual_history.back(), std::max(1e-10 * rep.residual_history.front(), 1e-13));
    EXPECT_TRUE(s1.finite());
    NewtonConfig one;
    one.max_iterations = 1;
    PnpState far = s0;
    for (auto& e : far.eta)
        for (double& v : e.values) v += 3.0;
    EXPECT_THROW(advance_timestep(sys, far, 1.0, one), ConvergenceFailure);
}

TEST(AdvanceTimestep, StagnationAtRoundOffCountsAsConverged) {
    const Mesh m = mixed_mesh(6);
    const PnpSystem sys(three_species(m));
    const auto s0 = sys.solve_initial_state();
    const auto [s1, rep] = advance_timestep(sys, s0, 0.01);
    // unreachable targets: the iteration must stop on stagnation, not fail
    NewtonConfig strict;
    strict.relative_tolerance = 1e-300;
    strict.absolute_tolerance = 0.0;
    NewtonReport again;
    const auto x = newton_solve(sys, sys.pack(s1), &s0, 0.01, nullptr, strict, again);
    EXPECT_LT(again.iterations, strict.max_iterations);
    EXPECT_LE(again.residual_history.back(), 1e-12);
    EXPECT_LE(pnpk::testing::max_abs_diff(x, sys.pack(s1)), 1e-12);
}

TEST(AdvanceTimestep, RejectsBadStep) {
    const Mesh m = mixed_mesh(3);
    const PnpSystem sys(three_species(m));
    const auto s0 = sys.solve_initial_state();
    EXPECT_THROW(advance_timestep(sys, s0, 0.0), InvalidArgument);
    EXPECT_THROW(advance_timestep(sys, s0, -1.0), InvalidArgument);
}

TEST(DirichletLift, ZeroAndConstantData) {
    Mesh m = pnpk::testing::jittered_mesh(6, 6, 4);
    m.tag_boundary([](Vec2) { return true; }, BoundaryTag::Dirichlet);
    PnpProblem p;
    p.mesh = &m;
    p.species = {Species{"a", 1.0, 1.0}};
    p.permittivity.assign(m.cell_count(), 1.0);
    for (double v : PnpSystem(p).dirichlet_lift().values) EXPECT_EQ(v, 0.0);
    p.boundary.voltage = [](Vec2) { return 1.0; };
    for (double v : PnpSystem(p).dirichlet_lift().values) EXPECT_NEAR(v, 1.0, 1e-13);
}

TEST(DirichletLift, EmptyDirichletBoundaryGivesZero) {
    const Mesh m = build_rect_mesh({0, 1, 0, 1}, 3, 3);
    PnpProblem p;
    p.mesh = &m;
    p.species = {Species{"a", 1.0, 1.0}};
    p.permittivity.assign(m.cell_count(), 1.0);
    p.boundary.voltage = [](Vec2) { return 5.0; };
    for (double v : PnpSystem(p).dirichlet_lift().values) EXPECT_EQ(v, 0.0);
}

class LiftMaxPrinciple : public ::testing::TestWithParam<int> {};

TEST_P(LiftMaxPrinciple, BoundedByBoundaryData) {
    const int k = GetParam();
    Mesh m = build_rect_mesh({-1, 1, -0.2, 0.2}, 10 + 4 * k, 2 + k, k % 2 ? DiagonalRule::union_jack : DiagonalRule::right);
    m.tag_boundary([](Vec2 x) { return std::abs(std::abs(x.x) - 1) < 1e-12; }, BoundaryTag::Dirichlet);
    if (k % 3 == 2) m.tag_boundary([](Vec2 x) { return x.y > 0.2 - 1e-12; }, BoundaryTag::Robin);
    std::vector<double> eps(m.cell_count());
    for (Index c = 0; c < m.cell_count(); ++c) eps[c] = 0.5 + (c % 5) * 0.3;
    ASSERT_TRUE(check_max_principle_condition(compute_edge_geometry(m, eps)).satisfied);
    PnpProblem p;
    p.mesh = &m;
    p.species = {Species{"a", 1.0, 1.0}};
    p.permittivity = eps;
    p.boundary.voltage = [](Vec2 x) { return x.x < 0 ? -1.0 : 1.0; };
    const auto lift = PnpSystem(p).dirichlet_lift();
    for (double v : lift.values) EXPECT_LE(std::abs(v), 1.0 + 1e-12);
}

INSTANTIATE_TEST_SUITE_P(StripMeshes, LiftMaxPrinciple, ::testing::Values(0, 1, 2, 3, 4, 5));

TEST(MassConservation, NoFluxSpeciesKeepTheirMass) {
    Scenario sc = channel_scenario();
    sc.nx = 12;
    sc.ny = 4;
    const Mesh m = build_scenario_mesh(sc);
    const PnpSystem sys(build_pnp_problem(sc, m));
    PnpState s = sys.solve_initial_state();
    const auto m0 = species_masses(sys, s);
    for (int j = 0; j < 6; ++j) {
        s = advance_timestep(sys, s, 2e-3).first;
        ASSERT_TRUE(s.finite());
        const auto mj = species_masses(sys, s);
        for (std::size_t i = 0; i < m0.size(); ++i) EXPECT_LE(std::abs(mj[i] - m0[i]) / m0[i], 1e-10);
    }
}

TEST(MassConservation, HoldsUnderAdvection) {
    const Mesh m = build_rect_mesh({0, 1, 0, 1}, 5, 5);
    PnpProblem p;
    p.mesh = &m;
    p.species = {Species{"a", 1.0, 1.0, [](Vec2 x) { return x.x; }}, Species{"b", -1.0, 1.0}};
    p.permittivity.assign(m.cell_count(), 0.1);
    const PnpSystem sys(p);
    // u = curl of x^2 (1-x)^2 y^2 (1-y)^2 vanishes on the boundary
    const TriangleRule rule = degree4_rule();
    AdvectionField adv(m.cell_count());
    for (Index c = 0; c < m.cell_count(); ++c)
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const Vec2 x = sys.space().point(c, rule.points[q]);
            const double fx = x.x * x.x * (1 - x.x) * (1 - x.x), fy = x.y * x.y * (1 - x.y) * (1 - x.y);
            const double dfx = 2 * x.x * (1 - x.x) * (1 - 2 * x.x), dfy = 2 * x.y * (1 - x.y) * (1 - 2 * x.y);
            adv[c].push_back({rule.points[q], rule.weights[q] * m.cell_area(c), Vec2{fx * dfy, -dfx * fy} * 20.0});
        }
    PnpState s = sys.solve_initial_state();
    const auto m0 = species_masses(sys, s);
    for (int j = 0; j < 3; ++j) {
        s = advance_timestep(sys, s, 0.05, {}, &adv).first;
        const auto mj = species_masses(sys, s);
        for (std::size_t i = 0; i < m0.size(); ++i) EXPECT_LE(std::abs(mj[i] - m0[i]) / m0[i], 1e-10);
    }
}
