#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include <aoctl/iirfilter.hpp>

using namespace aoctl;
using std::numbers::pi;

TEST(IirController, RejectsBadLengths) {
    EXPECT_THROW(IirController({1.0, 2.0}, {0.5, 0.1}), ParameterError);
    EXPECT_THROW(IirController({}, {}), ParameterError);
    EXPECT_THROW(IirController({1.0, NAN}, {0.0}), ParameterError);
}

TEST(Step, IntegratorHandIteration) {
    const IirController k = integrator(0.5);
    FilterState s(k.order());
    EXPECT_DOUBLE_EQ(step(k, s, 1.0), 0.5);
    EXPECT_DOUBLE_EQ(step(k, s, 1.0), 1.0);
    EXPECT_DOUBLE_EQ(step(k, s, 1.0), 1.5);
}

TEST(Step, ZeroInputZeroState) {
    const IirController k({0.3, -0.2, 0.1}, {-0.5, 0.25});
    FilterState s(k.order());
    for (int i = 0; i < 5; ++i) EXPECT_EQ(step(k, s, 0.0), 0.0);
}

TEST(Step, Passthrough) {
    const IirController k = passthrough();
    FilterState s(0);
    for (double x : {1.0, -2.5, 3.25}) EXPECT_EQ(step(k, s, x), x);
}

TEST(Step, ZeroGainIntegratorStaysAtRest) {
    const IirController k = integrator(0.0);
    FilterState s(1);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(step(k, s, 1.0), 0.0);
}

TEST(Step, IntegratorImpulseResponseIsUnitStep) {
    const IirController k = integrator(1.0);
    FilterState s(1);
    EXPECT_EQ(step(k, s, 1.0), 1.0);
    for (int i = 0; i < 20; ++i) EXPECT_EQ(step(k, s, 0.0), 1.0);
}

TEST(Step, StateSizeMismatch) {
    FilterState s(2);
    EXPECT_THROW(step(integrator(0.1), s, 1.0), ParameterError);
}

TEST(Step, FlagsNonFiniteCommand) {
    FilterState s(1);
    step(integrator(1.0), s, INFINITY);
    EXPECT_TRUE(s.nonfinite());
    s.reset();
    EXPECT_FALSE(s.nonfinite());
}

TEST(EvalFreq, IntegratorAtNyquist) {
    const FrequencyGrid g = make_grid(2.0, 2, Spacing::linear, 0.5);
    const auto K = eval_freq(integrator(0.8), g);
    EXPECT_NEAR(std::abs(K[1] - 0.4), 0.0, 1e-15);
}

TEST(EvalFreq, PassthroughIsUnity) {
    const FrequencyGrid g = make_grid(100.0, 30, Spacing::log, 0.01);
    const auto K = eval_freq(passthrough(), g);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(K[i], Complex(1.0));
}

TEST(EvalFreq, IntegratorDivergesAtDc) {
    const FrequencyGrid g = make_grid(1000.0, 4, Spacing::log, 1e-6);
    EXPECT_GT(std::abs(eval_freq(integrator(0.5), g)[0]), 1e6);
}

TEST(EvalFreq, PoleOnUnitCircleThrows) {
    EXPECT_THROW((void)IirController({1.0, 0.0}, {1.0}).response(pi), SingularityError);
}

// Steady-state response of the filter to a cosine, read off by least squares on the tail.
TEST(EvalFreq, MatchesTimeDomainSinusoid) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-0.9, 0.9);
    for (int trial = 0; trial < 5; ++trial) {
        const double p1 = u(rng), p2 = 0.5 * u(rng);
        const IirController k({u(rng), u(rng), u(rng)}, {-(p1 + p2), p1 * p2});
        const double w = 0.05 + 0.5 * std::abs(u(rng));
        FilterState s(2);
        const int n = 4000, tail = 1000;
        double cc = 0, cs = 0, sc = 0, ss = 0, yc = 0, ys = 0;
        for (int i = 0; i < n; ++i) {
            const double y = step(k, s, std::cos(w * i));
            if (i >= n - tail) {
                const double c = std::cos(w * i), sn = std::sin(w * i);
                cc += c * c;
                cs += c * sn;
                ss += sn * sn;
                yc += y * c;
                ys += y * sn;
            }
        }
        sc = cs;
        const double det = cc * ss - cs * sc;
        const double a = (yc * ss - ys * cs) / det, b = (ys * cc - yc * sc) / det;
        const Complex measured(a, -b);  // y = Re(H e^{jwk}) = a cos - (-b) sin
        const Complex expect = k.response(w);
        EXPECT_LT(std::abs(measured - expect) / std::abs(expect), 1e-6);
    }
}

TEST(Poles, Integrator) {
    const auto p = denominator_poles(integrator(0.3));
    ASSERT_EQ(p.size(), 1u);
    EXPECT_NEAR(std::abs(p[0] - 1.0), 0.0, 1e-12);
}

TEST(Poles, ImaginaryPair) {
    const auto p = denominator_poles(IirController({1.0, 0.0, 0.0}, {0.0, 0.25}));
    ASSERT_EQ(p.size(), 2u);
    for (const Complex& z : p) {
        EXPECT_NEAR(z.real(), 0.0, 1e-12);
        EXPECT_NEAR(std::abs(z.imag()), 0.5, 1e-12);
    }
    EXPECT_NEAR(p[0].imag() + p[1].imag(), 0.0, 1e-12);
}

TEST(Poles, StaticGainHasNone) { EXPECT_TRUE(denominator_poles(passthrough()).empty()); }

TEST(ControllerJson, RoundTrip) {
    const IirController k({0.1, 0.2, -0.3}, {-1.2, 0.4});
    const auto back = controller_from_json(to_json(k, 3000.0));
    EXPECT_EQ(back.controller, k);
    EXPECT_EQ(back.rate_hz, 3000.0);
}

TEST(ControllerJson, OrderMismatch) {
    nlohmann::json j = to_json(integrator(0.5), 100.0);
    j["order"] = 2;
    EXPECT_THROW(controller_from_json(j), ParameterError);
}
