#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ebm/legendre.hpp"

using namespace ebm;

TEST(LegendrePoly, LowDegreeValues)
{
    EXPECT_DOUBLE_EQ(legendre_poly(0, 0.7), 1.0);
    EXPECT_DOUBLE_EQ(legendre_poly(1, 0.7), 0.7);
    EXPECT_DOUBLE_EQ(legendre_poly(2, 0.5), -0.125);
}

TEST(LegendrePoly, MatchesExplicitFormulas)
{
    for (double x : {-1.0, -0.63, 0.0, 0.21, 0.9, 1.0}) {
        EXPECT_NEAR(legendre_poly(3, x), 0.5 * x * (5 * x * x - 3), 1e-15);
        EXPECT_NEAR(legendre_poly(4, x), (35 * std::pow(x, 4) - 30 * x * x + 3) / 8, 1e-15);
        EXPECT_NEAR(legendre_poly(20, 1.0), 1.0, 1e-14);
        EXPECT_NEAR(legendre_poly(21, -1.0), -1.0, 1e-14);
    }
}

TEST(LegendrePoly, DerivativeMatchesFiniteDifference)
{
    const double h = 1e-6;
    for (int n : {1, 2, 5, 11}) {
        for (double x : {-0.8, -0.1, 0.35, 0.77}) {
            const double fd = (legendre_poly(n, x + h) - legendre_poly(n, x - h)) / (2 * h);
            EXPECT_NEAR(legendre_poly_derivative(n, x), fd, 1e-7) << n << " " << x;
        }
        EXPECT_NEAR(legendre_poly_derivative(n, 1.0), 0.5 * n * (n + 1), 1e-12);
    }
}

TEST(BasisEval, Normalization)
{
    EXPECT_DOUBLE_EQ(basis_eval(0, 0.3), 1.0 / std::sqrt(2.0));
    EXPECT_DOUBLE_EQ(basis_eval(0, -0.9), 1.0 / std::sqrt(2.0));
    EXPECT_NEAR(basis_eval(1, 1.0), std::sqrt(1.5), 1e-15);
    const auto basis = build_basis(4, 8);
    Eigen::VectorXd e2(basis.quadrature_order());
    for (int j = 0; j < e2.size(); ++j)
        e2(j) = basis_eval(2, basis.nodes()(j));
    EXPECT_NEAR(basis.integrate(e2.cwiseProduct(e2)), 1.0, 1e-10);
}

TEST(BuildBasis, EigenvaluesAndSizes)
{
    const auto b = build_basis(4, 8);
    EXPECT_EQ(b.size(), 4);
    EXPECT_EQ(b.quadrature_order(), 8);
    EXPECT_EQ(b.eigenvalues(), (Eigen::Vector4d() << 0, 2, 6, 12).finished());

    const auto one = build_basis(1, 2);
    EXPECT_EQ(one.size(), 1);
    EXPECT_EQ(one.eigenvalue(0), 0.0);
}

TEST(BuildBasis, QuadratureInvariants)
{
    for (auto [n, q] : {std::pair{8, 16}, {32, 64}, {5, 6}, {3, 7}}) {
        const auto b = build_basis(n, q);
        EXPECT_NEAR(b.weights().sum(), 2.0, 1e-12);
        EXPECT_TRUE((b.weights().array() > 0.0).all());
        EXPECT_TRUE((b.nodes().array().abs() < 1.0).all());
        for (int j = 1; j < q; ++j)
            EXPECT_LT(b.nodes()(j - 1), b.nodes()(j));
    }
}

TEST(BuildBasis, QuadratureExactForPolynomials)
{
    // q-point Gauss rule integrates x^k exactly for k <= 2q - 1.
    const auto b = build_basis(4, 6);
    for (int k = 0; k <= 11; ++k) {
        Eigen::VectorXd v = b.nodes().array().pow(k);
        const double exact = (k % 2 == 1) ? 0.0 : 2.0 / (k + 1);
        EXPECT_NEAR(b.integrate(v), exact, 1e-14) << k;
    }
}

TEST(BuildBasis, RejectsLowQuadratureOrder)
{
    EXPECT_THROW(build_basis(4, 4), QuadratureOrderTooLow);
    EXPECT_THROW(build_basis(0, 4), InvalidArgument);
    EXPECT_NO_THROW(build_basis(4, 5));
}

TEST(BuildBasis, OrthonormalityUpTo32Modes)
{
    for (int n : {1, 4, 16, 32}) {
        const auto b = build_basis(n, 2 * n < n + 1 ? n + 1 : std::max(2 * n, n + 1));
        const Eigen::MatrixXd gram = b.table().transpose() * b.weights().asDiagonal() * b.table();
        EXPECT_LT((gram - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-10) << n;
    }
}

TEST(BuildBasis, EigenResidual)
{
    // -d/dx[(1-x^2) e_n'] - mu_n e_n at the nodes, with the flux derivative
    // n (P_{n-1}' - P_n - x P_n') from the analytic identity.
    const auto b = build_basis(32, 64);
    for (int n = 0; n < 32; ++n) {
        Eigen::VectorXd r(b.quadrature_order());
        for (int j = 0; j < r.size(); ++j) {
            const double x = b.nodes()(j);
            const double dflux = n == 0 ? 0.0
                                        : n * (legendre_poly_derivative(n - 1, x) - legendre_poly(n, x) -
                                               x * legendre_poly_derivative(n, x));
            r(j) = basis_normalization(n) * (-dflux) - b.eigenvalue(n) * basis_eval(n, x);
        }
        EXPECT_LT(std::sqrt(b.integrate(r.cwiseProduct(r))), 1e-8) << n;
    }
}

TEST(Transforms, UnitAndConstant)
{
    const auto b = build_basis(6, 12);
    Eigen::VectorXd e1(12);
    for (int j = 0; j < 12; ++j)
        e1(j) = basis_eval(1, b.nodes()(j));
    const auto c = to_spectral(e1, b);
    EXPECT_NEAR((c - SpectralField::unit(6, 1)).norm(), 0.0, 1e-14);

    const auto one = to_spectral(Eigen::VectorXd::Ones(12), b);
    EXPECT_NEAR(one[0], std::sqrt(2.0), 1e-14);
    EXPECT_NEAR(one.coeffs().tail(5).norm(), 0.0, 1e-14);
}

TEST(Transforms, DimensionMismatch)
{
    const auto b = build_basis(6, 12);
    EXPECT_THROW(to_spectral(Eigen::VectorXd::Ones(11), b), DimensionMismatch);
    EXPECT_THROW(to_nodal(SpectralField(5), b), DimensionMismatch);
}

TEST(Transforms, RoundTripAndParsevalProperty)
{
    std::mt19937_64 rng(20241019);
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 32);
        const auto b = build_basis(n, 2 * n + 1);
        SpectralField f(n);
        for (int i = 0; i < n; ++i)
            f[i] = normal(rng);
        const Eigen::VectorXd nodal = to_nodal(f, b);
        EXPECT_LT((to_spectral(nodal, b) - f).coeffs().cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_NEAR(f.coeffs().squaredNorm(), b.integrate(nodal.cwiseProduct(nodal)), 1e-10 * (1 + f.norm()));
        const double x = std::uniform_real_distribution<double>(-1, 1)(rng);
        double direct = 0;
        for (int i = 0; i < n; ++i)
            direct += f[i] * basis_eval(i, x);
        EXPECT_NEAR(evaluate(f, x), direct, 1e-12);
    }
}

TEST(Operator, DiagonalAction)
{
    const auto b = build_basis(8, 16);
    EXPECT_EQ(apply_operator(SpectralField::unit(8, 0), b).norm(), 0.0);
    EXPECT_EQ(apply_operator(SpectralField::unit(8, 1), b), 2.0 * SpectralField::unit(8, 1));
    EXPECT_EQ(apply_operator(SpectralField::unit(8, 3), b), 12.0 * SpectralField::unit(8, 3));
}

TEST(Semigroup, IdentityDecayAndErrors)
{
    const auto b = build_basis(8, 16);
    SpectralField f(8);
    f.coeffs() << 1, -2, 0.5, 3, 0, 0.1, -0.7, 2;
    EXPECT_EQ(semigroup_apply(f, 0.0, b), f);
    EXPECT_NEAR((semigroup_apply(SpectralField::unit(8, 1), 1.0, b) - std::exp(-2.0) * SpectralField::unit(8, 1)).norm(),
                0.0, 1e-16);
    EXPECT_THROW(semigroup_apply(f, -0.1, b), NegativeTime);
}

TEST(Semigroup, ContractionAndSemigroupProperty)
{
    std::mt19937_64 rng(7);
    std::normal_distribution<double> normal;
    const auto b = build_basis(32, 64);
    for (int trial = 0; trial < 20; ++trial) {
        SpectralField f(32);
        for (int i = 0; i < 32; ++i)
            f[i] = normal(rng);
        const double s = std::uniform_real_distribution<double>(0, 1)(rng);
        const double t = std::uniform_real_distribution<double>(0, 1)(rng);
        EXPECT_LE(semigroup_apply(f, 0.37, b).norm(), f.norm());
        const auto composed = semigroup_apply(semigroup_apply(f, s, b), t, b);
        EXPECT_LT((semigroup_apply(f, s + t, b) - composed).coeffs().cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Operator, DirichletEnergyMatchesQuadratureOfFlux)
{
    // 1/2 int (1-x^2) u'^2 evaluated from derivatives at nodes.
    const auto b = build_basis(10, 20);
    SpectralField f(10);
    f.coeffs() << 0.3, 1, -0.5, 0.25, 0.1, 0, -0.2, 0.05, 0.01, 0.3;
    Eigen::VectorXd integrand(20);
    for (int j = 0; j < 20; ++j) {
        const double x = b.nodes()(j);
        double du = 0;
        for (int n = 0; n < 10; ++n)
            du += f[n] * basis_normalization(n) * legendre_poly_derivative(n, x);
        integrand(j) = 0.5 * (1 - x * x) * du * du;
    }
    EXPECT_NEAR(dirichlet_energy(f, b), b.integrate(integrand), 1e-11);
}
