#include <cmath>
#include <complex>
#include <random>

#include <gtest/gtest.h>

#include <aoctl/conic.hpp>

using namespace aoctl::conic;

TEST(Hermitian2x2, Identity) { EXPECT_TRUE(hermitian2x2_psd(1.0, 0.0, 1.0)); }
TEST(Hermitian2x2, DeterminantNegative) { EXPECT_FALSE(hermitian2x2_psd(1.0, Complex(1.0, 0.0), 0.5)); }
TEST(Hermitian2x2, Boundary) { EXPECT_TRUE(hermitian2x2_psd(0.0, 0.0, 5.0)); }
TEST(Hermitian2x2, NegativeDiagonal) { EXPECT_FALSE(hermitian2x2_psd(-1.0, 0.0, -1.0)); }

// Eigenvalue oracle: both eigenvalues (a+c)/2 +- sqrt(((a-c)/2)^2 + |b|^2) nonnegative.
TEST(Hermitian2x2, AgreesWithEigenvaluesAndRotatedCone) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int i = 0; i < 5000; ++i) {
        const double a = u(rng), c = u(rng);
        const Complex b(u(rng), u(rng));
        const double lmin = 0.5 * (a + c) - std::sqrt(0.25 * (a - c) * (a - c) + std::norm(b));
        if (std::abs(lmin) < 1e-9) continue;
        EXPECT_EQ(hermitian2x2_psd(a, b, c), lmin > 0.0);
        EXPECT_EQ(rotated_soc_member(a, b, c), lmin > 0.0);
    }
}

namespace {

// t_i >= |g - y_i|^2 as [[t_i, g - y_i], [., 1]] >= 0, minimize sum t_i.
BlockProgram least_squares(const std::vector<Complex>& y) {
    BlockProgram p;
    p.n_global = 2;  // Re g, Im g
    p.n_local = static_cast<int>(y.size());
    p.cost_global = Eigen::VectorXd::Zero(2);
    p.cost_local = Eigen::VectorXd::Ones(p.n_local);
    for (std::size_t i = 0; i < y.size(); ++i) {
        HermitianBlock b;
        b.local = static_cast<int>(i);
        b.a_local = 1.0;
        b.b0 = -y[i];
        b.b_global = Eigen::VectorXcd(2);
        b.b_global << Complex(1.0, 0.0), Complex(0.0, 1.0);
        b.c0 = 1.0;
        p.blocks.push_back(b);
    }
    return p;
}

}  // namespace

TEST(Barrier, EpigraphOfFixedModulus) {
    BlockProgram p = least_squares({Complex(3.0, 4.0)});
    p.n_global = 0;
    p.cost_global = Eigen::VectorXd();
    p.blocks[0].b_global = Eigen::VectorXcd();
    p.blocks[0].b0 = Complex(3.0, 4.0);
    Eigen::VectorXd l(1);
    l << 100.0;
    const BlockSolution s = solve_from_interior(p, Eigen::VectorXd(), l);
    EXPECT_EQ(s.status, SolveStatus::optimal);
    EXPECT_NEAR(s.objective, 25.0, 1e-6);
}

TEST(Barrier, LeastSquaresMean) {
    const std::vector<Complex> y{{1.0, 2.0}, {-0.5, 0.0}, {2.0, -1.0}, {0.3, 0.7}};
    Complex mean = 0.0;
    for (const Complex& v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double spread = 0.0;
    for (const Complex& v : y) spread += std::norm(v - mean);

    const BlockProgram p = least_squares(y);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(2), l = Eigen::VectorXd::Constant(4, 50.0);
    const BlockSolution s = solve_from_interior(p, g, l);
    ASSERT_EQ(s.status, SolveStatus::optimal);
    EXPECT_NEAR(s.global(0), mean.real(), 1e-4);
    EXPECT_NEAR(s.global(1), mean.imag(), 1e-4);
    EXPECT_NEAR(s.objective, spread, 1e-6 * spread);
}

TEST(Barrier, NonInteriorStartReportsInfeasible) {
    const BlockProgram p = least_squares({Complex(1.0, 0.0)});
    Eigen::VectorXd g = Eigen::VectorXd::Zero(2), l = Eigen::VectorXd::Zero(1);
    EXPECT_EQ(solve_from_interior(p, g, l).status, SolveStatus::infeasible);
}

TEST(PhaseOne, FindsInteriorPoint) {
    // x >= 1 from [[x, 1], [1, x]] >= 0, started at x = 0.
    BlockProgram p;
    p.n_global = 1;
    p.cost_global = Eigen::VectorXd::Ones(1);
    HermitianBlock b;
    b.a_global = Eigen::VectorXd::Ones(1);
    b.b0 = 1.0;
    b.c_global = Eigen::VectorXd::Ones(1);
    p.blocks.push_back(b);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(1), l;
    ASSERT_TRUE(find_interior(p, g, l));
    EXPECT_GT(g(0), 1.0);
    const BlockSolution s = solve_from_interior(p, g, l);
    EXPECT_EQ(s.status, SolveStatus::optimal);
    EXPECT_NEAR(s.objective, 1.0, 1e-6);
}

TEST(PhaseOne, DetectsInfeasibleProgram) {
    // x >= 1 and -x >= 0 cannot hold together.
    BlockProgram p;
    p.n_global = 1;
    p.cost_global = Eigen::VectorXd::Zero(1);
    HermitianBlock b1;
    b1.a_global = Eigen::VectorXd::Ones(1);
    b1.b0 = 1.0;
    b1.c_global = Eigen::VectorXd::Ones(1);
    HermitianBlock b2;
    b2.a_global = -Eigen::VectorXd::Ones(1);
    b2.c0 = 1.0;
    p.blocks = {b1, b2};
    Eigen::VectorXd g = Eigen::VectorXd::Zero(1), l;
    EXPECT_FALSE(find_interior(p, g, l));
}
