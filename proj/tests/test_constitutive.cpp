#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ebm/constitutive.hpp"

using namespace ebm;

namespace {

const CoalbedoGraph kSellers = Sellers{0.2, 0.8, -10.0, 1.0};
const CoalbedoGraph kBudyko = Budyko{0.2, 0.8, -10.0};

// Composite Simpson of the single-valued branch from u_c to r; independent of
// the closed-form antiderivative.
double j_by_quadrature(const CoalbedoGraph& graph, double param, double r)
{
    const Ramp ramp = regularized_branch(graph, param);
    const double a = ice_temperature(graph);
    const int n = 200000;
    const double h = (r - a) / n;
    double s = ramp(a) + ramp(r);
    for (int i = 1; i < n; ++i)
        s += (i % 2 == 1 ? 4.0 : 2.0) * ramp(a + i * h);
    return s * h / 3.0;
}

} // namespace

TEST(Sellers, RampValues)
{
    EXPECT_DOUBLE_EQ(beta_eval(kSellers, -20.0), 0.2);
    EXPECT_DOUBLE_EQ(beta_eval(kSellers, 0.0), 0.8);
    EXPECT_DOUBLE_EQ(beta_eval(kSellers, -10.0), 0.5);
    EXPECT_THROW(beta_eval(kBudyko, -10.0), WrongVariant);
}

TEST(Sellers, LipschitzConstant)
{
    EXPECT_DOUBLE_EQ(sellers_ramp(std::get<Sellers>(kSellers)).lipschitz(), 0.3);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-14, -6);
    for (int i = 0; i < 1000; ++i) {
        const double a = u(rng), b = u(rng);
        EXPECT_LE(std::abs(beta_eval(kSellers, a) - beta_eval(kSellers, b)), 0.3 * std::abs(a - b) + 1e-15);
    }
}

TEST(Yosida, ClosedFormValues)
{
    EXPECT_DOUBLE_EQ(yosida_eval(kBudyko, 0.1, -10.0), 0.2);
    EXPECT_NEAR(yosida_eval(kBudyko, 0.1, -10.0 + 0.08), 0.8, 1e-12);
    EXPECT_DOUBLE_EQ(yosida_eval(kBudyko, 0.1, 50.0), 0.8);
    EXPECT_DOUBLE_EQ(yosida_eval(kBudyko, 1e-3, 50.0), 0.8);
    EXPECT_THROW(yosida_eval(kBudyko, 0.0, -10.0), NonpositiveLambda);
    EXPECT_THROW(yosida_eval(kBudyko, -1.0, -10.0), NonpositiveLambda);
    EXPECT_THROW(yosida_eval(kSellers, 0.1, -10.0), WrongVariant);
}

TEST(Yosida, SolvesResolventEquation)
{
    // beta_lambda(r) = (r - J_lambda r)/lambda with s = J_lambda r solving
    // s + lambda beta(s) ∋ r. Check r - lambda beta_lambda(r) lies in the
    // graph preimage: it is < u_c with value m, > u_c with value M, or = u_c.
    const auto& b = std::get<Budyko>(kBudyko);
    for (double lambda : {0.5, 0.1, 1e-2}) {
        for (double r = -12.0; r <= -8.0; r += 0.0137) {
            const double v = yosida_eval(kBudyko, lambda, r);
            const double s = r - lambda * v;
            if (std::abs(s - b.u_c) > 1e-12) {
                EXPECT_NEAR(v, s < b.u_c ? b.m : b.M, 1e-12) << r;
            } else {
                EXPECT_GE(v, b.m - 1e-12);
                EXPECT_LE(v, b.M + 1e-12);
            }
        }
    }
}

TEST(Yosida, BoundsMonotoneLipschitzProperty)
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-11, -9);
    for (double lambda : {1.0, 0.1, 1e-2, 1e-3}) {
        for (int i = 0; i < 2000; ++i) {
            const double a = u(rng), c = u(rng);
            const double va = yosida_eval(kBudyko, lambda, a), vc = yosida_eval(kBudyko, lambda, c);
            EXPECT_GE(va, 0.2);
            EXPECT_LE(va, 0.8);
            EXPECT_LE(std::abs(va - vc), std::abs(a - c) / lambda + 1e-12);
            if (a < c)
                EXPECT_LE(va, vc);
        }
    }
}

TEST(Yosida, ConvergesToBudykoGraphAwayFromJump)
{
    const auto& b = std::get<Budyko>(kBudyko);
    for (double lambda : {1e-1, 1e-2, 1e-3}) {
        for (double r : {b.u_c - 0.5, b.u_c + 0.5}) {
            const double dev = std::abs(yosida_eval(kBudyko, lambda, r) - budyko_section(b, r));
            EXPECT_LE(dev, lambda * b.M);
        }
    }
    EXPECT_DOUBLE_EQ(budyko_section(b, b.u_c), 0.5);
}

TEST(Sellers, AgreesWithBudykoOutsideRamp)
{
    const auto& b = std::get<Budyko>(kBudyko);
    for (double r : {-30.0, -11.0001, -10.9, -9.1, -8.0, 20.0}) {
        if (std::abs(r - b.u_c) > 1.0)
            EXPECT_EQ(beta_eval(kSellers, r), budyko_section(b, r)) << r;
    }
}

TEST(Emission, LinearLaw)
{
    const EmissionLaw id = LinearEmission{1.0};
    const EmissionLaw two = LinearEmission{2.0};
    EXPECT_DOUBLE_EQ(g_eval(id, -11.0), -11.0);
    EXPECT_DOUBLE_EQ(g_inverse(two, -6.0), -3.0);
    EXPECT_DOUBLE_EQ(g_primitive(id, 3.0), 4.5);
    EXPECT_THROW(validate(EmissionLaw{LinearEmission{0.0}}), NonMonotoneLaw);
    EXPECT_THROW(validate(EmissionLaw{StefanLinearized{-1.0, 200.0}}), NonMonotoneLaw);
}

TEST(Emission, InverseAndPrimitiveProperties)
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-40, 40);
    const EmissionLaw laws[] = {LinearEmission{1.0}, LinearEmission{2.5}, StefanLinearized{2.1, 203.3}};
    for (const auto& law : laws) {
        for (int i = 0; i < 200; ++i) {
            const double r = u(rng);
            EXPECT_NEAR(g_inverse(law, g_eval(law, r)), r, 1e-12 * (1 + std::abs(r)));
            const double h = 1e-4;
            const double fd = (g_primitive(law, r + h) - g_primitive(law, r - h)) / (2 * h);
            EXPECT_NEAR(fd, g_eval(law, r), 1e-6 * (1 + std::abs(g_eval(law, r))));
        }
    }
}

TEST(JPrimitive, AnchoredAndMatchesQuadrature)
{
    EXPECT_DOUBLE_EQ(j_primitive(kSellers, 0.0, -10.0), 0.0);
    // Oracle values from Simpson quadrature of beta.
    EXPECT_NEAR(j_primitive(kSellers, 0.0, -8.0), j_by_quadrature(kSellers, 0.0, -8.0), 1e-10);
    EXPECT_NEAR(j_primitive(kSellers, 0.0, -15.0), j_by_quadrature(kSellers, 0.0, -15.0), 1e-10);
    EXPECT_NEAR(j_primitive(kSellers, 0.0, -8.0), 1.45, 1e-12);
    EXPECT_NEAR(j_primitive(kSellers, 0.0, -15.0), -1.15, 1e-12);
    for (double lambda : {0.1, 0.01}) {
        for (double r : {-10.5, -10.0, -9.99, -9.95, -9.0}) {
            EXPECT_NEAR(j_primitive(kBudyko, lambda, r), j_by_quadrature(kBudyko, lambda, r), 1e-10);
        }
    }
    EXPECT_THROW(j_primitive(kBudyko, 0.0, -10.0), NonpositiveLambda);
}

TEST(JPrimitive, ConvexWithSlopeInRange)
{
    for (double r = -14.0; r < -6.0; r += 0.05) {
        const double h = 1e-5;
        const double slope = (j_primitive(kSellers, 0, r + h) - j_primitive(kSellers, 0, r - h)) / (2 * h);
        EXPECT_GE(slope, 0.2 - 1e-6);
        EXPECT_LE(slope, 0.8 + 1e-6);
        const double mid = j_primitive(kSellers, 0, r);
        EXPECT_LE(mid, 0.5 * (j_primitive(kSellers, 0, r - 0.3) + j_primitive(kSellers, 0, r + 0.3)) + 1e-14);
    }
}

TEST(Graph, Validation)
{
    EXPECT_THROW(validate(CoalbedoGraph{Sellers{0.8, 0.2, -10, 1}}), InvalidArgument);
    EXPECT_THROW(validate(CoalbedoGraph{Sellers{0.2, 0.8, -10, 0}}), InvalidArgument);
    EXPECT_THROW(validate(CoalbedoGraph{Budyko{0.0, 0.8, -10}}), InvalidArgument);
    EXPECT_NO_THROW(validate(kSellers));
}

TEST(Forcing, BoundsAndInterpolation)
{
    ForcingData fd;
    fd.insolation = PolyProfile{{1.0, 0.0, -0.482}};
    fd.forcing = {ForcingKnot{0.0, PolyProfile::constant(-10.0)}, ForcingKnot{2.0, PolyProfile::constant(-14.0)}};
    EXPECT_NO_THROW(fd.validate());
    // S = 1 - 0.482 P2: min at x = +-1 (0.518), max at x = 0 (1.241).
    EXPECT_NEAR(fd.insolation_min(), 0.518, 1e-12);
    EXPECT_NEAR(fd.insolation_max(), 1.241, 1e-6);
    EXPECT_DOUBLE_EQ(fd.forcing_sup_norm(), 14.0);
    EXPECT_DOUBLE_EQ(fd.forcing_gap(), 14.0);
    const auto basis = build_basis(4, 6);
    EXPECT_NEAR(fd.forcing_nodal(1.0, basis)(0), -12.0, 1e-14);
    EXPECT_NEAR(fd.forcing_nodal(5.0, basis)(3), -14.0, 1e-14);

    ForcingData bad;
    bad.insolation = PolyProfile::constant(-1.0);
    EXPECT_THROW(bad.validate(), InvalidArgument);
}
