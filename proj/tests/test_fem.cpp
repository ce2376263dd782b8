#include "pnpk/fem.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace pnpk;
using pnpk::testing::dense;

TEST(Interpolate, ConstantsLinearsAndExponentials) {
    const Mesh m = build_rect_mesh({0, 1, 0, 1}, 1, 1);
    const P1Space s(m);
    for (double v : interpolate(s, [](Vec2) { return 1.0; }).values) EXPECT_EQ(v, 1.0);
    const auto lin = interpolate(s, [](Vec2 x) { return x.x; });
    for (Index v = 0; v < m.vertex_count(); ++v) EXPECT_EQ(lin[v], m.vertex(v).x);
    const Mesh m2 = build_rect_mesh({0, 1, 0, 1}, 2, 2);
    const P1Space s2(m2);
    const auto ex = interpolate(s2, [](Vec2 x) { return std::exp(x.x); });
    for (Index v = 0; v < m2.vertex_count(); ++v) EXPECT_DOUBLE_EQ(ex[v], std::exp(m2.vertex(v).x));
}

TEST(Interpolate, NonFiniteRejected) {
    const Mesh m = build_rect_mesh({0, 1, 0, 1}, 1, 1);
    const P1Space s(m);
    EXPECT_THROW(interpolate(s, [](Vec2) { return std::numeric_limits<double>::quiet_NaN(); }), NumericDomainError);
}

TEST(Stiffness, TwoRightTrianglesByHand) {
    const Mesh m = build_rect_mesh({0, 1, 0, 1}, 1, 1);
    const P1Space s(m);
    const Eigen::MatrixXd k = dense(assemble_p1_stiffness(s, std::vector<double>{1.0, 1.0}));
    Eigen::MatrixXd ref(4, 4);
    // vertices (0,0) (1,0) (0,1) (1,1), diagonal from (0,0) to (1,1)
    ref << 1.0, -0.5, -0.5, 0.0,
          -0.5, 1.0, 0.0, -0.5,
          -0.5, 0.0, 1.0, -0.5,
           0.0, -0.5, -0.5, 1.0;
    EXPECT_LT((k - ref).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Stiffness, KillsConstantsAndIsLinearInCoefficient) {
    const Mesh m = pnpk::testing::jittered_mesh(5, 4, 3);
    const P1Space s(m);
    std::vector<double> eps(m.cell_count());
    for (Index c = 0; c < m.cell_count(); ++c) eps[c] = 0.5 + (c % 3);
    const CsrMatrix k = assemble_p1_stiffness(s, eps);
    for (double v : spmv(k, std::vector<double>(s.dof_count(), 3.0))) EXPECT_NEAR(v, 0.0, 1e-13);
    std::vector<double> eps2 = eps;
    for (double& e : eps2) e *= 2.0;
    const CsrMatrix k2 = assemble_p1_stiffness(s, eps2);
    ASSERT_EQ(k.indices(), k2.indices());
    for (std::size_t i = 0; i < k.values().size(); ++i) EXPECT_EQ(k2.values()[i], 2.0 * k.values()[i]);
}

TEST(Stiffness, SymmetricOnRandomMeshes) {
    for (unsigned seed : {1u, 2u, 3u, 4u}) {
        const Mesh m = pnpk::testing::jittered_mesh(6, 6, seed, 0.3);
        const P1Space s(m);
        const Eigen::MatrixXd k = dense(assemble_p1_stiffness(s, std::vector<double>(m.cell_count(), 1.7)));
        EXPECT_LE((k - k.transpose()).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(Stiffness, OffDiagonalsAgreeWithEdgeGeometry) {
    for (const Mesh& m : {build_rect_mesh({0, 2, 0, 1}, 6, 3), pnpk::testing::obtuse_pair(), pnpk::testing::jittered_mesh(5, 5, 9, 0.35)}) {
        const P1Space s(m);
        const std::vector<double> eps(m.cell_count(), 2.5);
        const CsrMatrix k = assemble_p1_stiffness(s, eps);
        const auto geom = compute_edge_geometry(m, eps);
        bool nonpositive = true;
        for (Index e = 0; e < m.edge_count(); ++e) {
            const auto& v = m.edge(e).vertices;
            EXPECT_NEAR(k.at(v[0], v[1]), -geom[e].omega, 1e-12);
            nonpositive = nonpositive && k.at(v[0], v[1]) <= 1e-12;
        }
        EXPECT_EQ(nonpositive, check_max_principle_condition(geom).satisfied);
    }
}

TEST(Mass, ConsistentMassIntegratesProducts) {
    const Mesh m = pnpk::testing::jittered_mesh(4, 3, 5);
    const P1Space s(m);
    const CsrMatrix mm = assemble_p1_mass(s);
    const std::vector<double> one(s.dof_count(), 1.0);
    EXPECT_NEAR(bilinear(mm, one, one), m.total_area(), 1e-14);
    // (x, y) over the unit square = 1/4, exact for P1 products
    const auto x = interpolate(s, [](Vec2 p) { return p.x; });
    const auto y = interpolate(s, [](Vec2 p) { return p.y; });
    EXPECT_NEAR(bilinear(mm, x.values, y.values), 0.25, 1e-14);
}

TEST(LumpedMass, PartitionOfUnityAndZeroWeight) {
    const Mesh m = build_rect_mesh({0, 1, 0, 1}, 1, 1);
    const P1Space s(m);
    const auto d = assemble_lumped_mass(s, std::vector<double>(4, 1.0));
    EXPECT_NEAR(d[0] + d[1] + d[2] + d[3], 1.0, 1e-15);
    for (double v : assemble_lumped_mass(s, std::vector<double>(4, 0.0))) EXPECT_EQ(v, 0.0);
}

TEST(LumpedMass, MatchesBruteForcePatchAreas) {
    const Mesh m = build_rect_mesh({0, 1, 0, 1}, 2, 2);
    const P1Space s(m);
    const auto eta = interpolate(s, [](Vec2 x) { return x.x; });
    std::vector<double> w(s.dof_count());
    for (Index v = 0; v < s.dof_count(); ++v) w[v] = std::exp(eta[v]);
    const auto d = assemble_lumped_mass(s, w);
    for (Index v = 0; v < m.vertex_count(); ++v) {
        double patch = 0.0;
        for (const auto& t : m.cells()) {
            if (std::find(t.begin(), t.end(), v) == t.end()) continue;
            const Vec2 a = m.vertex(t[0]), b = m.vertex(t[1]), c = m.vertex(t[2]);
            patch += 0.5 * std::abs((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
        }
        EXPECT_NEAR(d[v], patch / 3.0 * std::exp(m.vertex(v).x), 1e-15);
        EXPECT_GT(d[v], 0.0);
    }
}

TEST(RobinProduct, LengthZeroAndTrapezoid) {
    Mesh m = build_rect_mesh({0, 2, 0, 1}, 2, 1);
    m.tag_boundary([](Vec2) { return true; }, BoundaryTag::Robin);
    const P1Space s(m);
    const std::vector<double> kappa(s.dof_count(), 1.0);
    const FieldP1 one(s, std::vector<double>(s.dof_count(), 1.0));
    EXPECT_NEAR(robin_lumped_product(s, kappa, one, one), 6.0, 1e-15);
    EXPECT_EQ(robin_lumped_product(s, kappa, FieldP1::zero(s), one), 0.0);

    Mesh single = build_rect_mesh({0, 1, 0, 1}, 1, 1);
    single.tag_boundary([](Vec2 x) { return x.y < 1e-12; }, BoundaryTag::Robin);
    const P1Space s1(single);
    const FieldP1 u(s1, {1.0, 2.0, 7.0, 9.0});
    EXPECT_NEAR(robin_lumped_product(s1, std::vector<double>(4, 1.0), u, u), 2.5, 1e-15);
}

TEST(H1Seminorm, ExactOnLinearsAndUnitForZeroField) {
    const Mesh m = pnpk::testing::jittered_mesh(4, 4, 2);
    const P1Space s(m);
    const auto f = interpolate(s, [](Vec2 x) { return 3.0 * x.x - 2.0 * x.y; });
    EXPECT_LE(h1_seminorm_diff(f, [](Vec2) { return Vec2{3.0, -2.0}; }), 1e-13);
    EXPECT_NEAR(h1_seminorm_diff(FieldP1::zero(s), [](Vec2) { return Vec2{1.0, 0.0}; }), 1.0, 1e-14);
}

TEST(H1Seminorm, FirstOrderForSmoothFunction) {
    auto err = [](int n) {
        const Mesh m = build_rect_mesh({0, 1, 0, 1}, n, n);
        const P1Space s(m);
        return h1_seminorm_diff(interpolate(s, [](Vec2 x) { return std::exp(x.x); }),
                                [](Vec2 x) { return Vec2{std::exp(x.x), 0.0}; });
    };
    const double ratio = err(4) / err(8);
    EXPECT_GE(ratio, 1.8);
    EXPECT_LE(ratio, 2.2);
}

TEST(P1Space, DirichletDofsLieOnDirichletEdges) {
    Mesh m = build_rect_mesh({0, 1, 0, 1}, 3, 3);
    m.tag_boundary([](Vec2 x) { return x.x < 1e-12; }, BoundaryTag::Dirichlet);
    const P1Space s(m);
    int count = 0;
    for (Index v = 0; v < s.dof_count(); ++v)
        if (s.is_dirichlet(v)) {
            ++count;
            EXPECT_EQ(m.vertex(v).x, 0.0);
        }
    EXPECT_EQ(count, 4);
}

TEST(BoundaryLoad, IntegratesLinearDatumExactly) {
    Mesh m = build_rect_mesh({0, 1, 0, 1}, 2, 2);
    m.tag_boundary([](Vec2 x) { return x.y > 1 - 1e-12; }, BoundaryTag::Neumann);
    const P1Space s(m);
    const auto b = assemble_boundary_load(s, [](Vec2 x) { return 1.0 + x.x; }, BoundaryTag::Neumann);
    double total = 0.0;
    for (double v : b) total += v;
    EXPECT_NEAR(total, 1.5, 1e-15);
}
