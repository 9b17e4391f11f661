#include <gtest/gtest.h>

#include <cmath>

#include "agedep/errors.hpp"
#include "agedep/rate_spec.hpp"
#include "oracles.hpp"

using agedep::Matrix;
using agedep::RateSpec;

namespace {

RateSpec constant_two_state(double a = 1.0, double b = 1.0) {
    return RateSpec({Matrix{{-a, a}, {b, -b}}}, 10.0);
}

// lambda_12(y) = 1 + 2y, lambda_21(y) = 1.
RateSpec linear_two_state() {
    return RateSpec({Matrix{{0, 1}, {1, 0}}, Matrix{{0, 2}, {0, 0}}}, 10.0);
}

RateSpec linear_three_state() {
    return RateSpec({Matrix{{0, 1.0, 0.5}, {0.3, 0, 1.0}, {1.0, 1.0, 0}},
                     Matrix{{0, 0.5, 1.0}, {0.2, 0, 0.1}, {0.0, 0.5, 0}}},
                    4.0);
}

}  // namespace

TEST(RateSpec, ConstantRatesAndRowSum) {
    const RateSpec spec = constant_two_state();
    EXPECT_DOUBLE_EQ(spec.lambda_at(0, 1, 5.0), 1.0);
    EXPECT_DOUBLE_EQ(spec.lambda_at(0, 0, 5.0), -1.0);
    EXPECT_EQ(spec.degree(), 0);
    EXPECT_EQ(spec.states(), 2);
}

TEST(RateSpec, LinearFamilyRate) {
    EXPECT_DOUBLE_EQ(linear_two_state().lambda_at(0, 1, 3.0), 7.0);
}

TEST(RateSpec, DiagonalInputIsIgnored) {
    const RateSpec a({Matrix{{-5.0, 1.0}, {2.0, 42.0}}}, 3.0);
    EXPECT_DOUBLE_EQ(a.lambda_at(0, 0, 1.0), -1.0);
    EXPECT_DOUBLE_EQ(a.lambda_at(1, 1, 1.0), -2.0);
}

TEST(RateSpec, RatesFreezeAtAgeCap) {
    const RateSpec spec({Matrix{{0, 1}, {1, 0}}, Matrix{{0, 2}, {0, 0}}}, 2.0);
    EXPECT_DOUBLE_EQ(spec.lambda_at(0, 1, 5.0), 5.0);
    EXPECT_DOUBLE_EQ(spec.sup_row_rate(0), 5.0);
    EXPECT_DOUBLE_EQ(spec.sup_row_rate(), 5.0);
    // Exact integral to the cap, then linear continuation.
    EXPECT_NEAR(spec.big_lambda(0, 3.0), (2.0 + 4.0) + 5.0 * 1.0, 1e-12);
}

TEST(RateSpec, IntegratedHazard) {
    EXPECT_NEAR(constant_two_state().big_lambda(0, 2.0), 2.0, 1e-14);
    EXPECT_NEAR(linear_two_state().big_lambda(0, 3.0), 12.0, 1e-12);
    EXPECT_DOUBLE_EQ(linear_two_state().big_lambda(1, 0.0), 0.0);
    const RateSpec spec = linear_three_state();
    double prev = 0.0;
    for (int q = 1; q <= 50; ++q) {
        const double v = spec.big_lambda(2, 0.1 * q);
        EXPECT_GE(v, prev);
        prev = v;
    }
}

TEST(RateSpec, HoldingDistribution) {
    EXPECT_NEAR(constant_two_state().holding_cdf(0, 1.0), 1.0 - std::exp(-1.0), 1e-12);
    EXPECT_DOUBLE_EQ(linear_two_state().holding_cdf(0, 0.0), 0.0);
    EXPECT_NEAR(linear_two_state().holding_pdf(0, 1.0), 3.0 * std::exp(-2.0), 1e-12);
    EXPECT_NEAR(linear_two_state().holding_pdf(0, 1.0), 0.406006, 1e-6);
    // f / (1 - F) is the leaving rate.
    const RateSpec spec = linear_three_state();
    for (int i = 0; i < 3; ++i)
        for (double y : {0.0, 0.4, 1.7, 3.9}) {
            EXPECT_NEAR(spec.holding_pdf(i, y) / (1.0 - spec.holding_cdf(i, y)), spec.row_rate(i, y), 1e-8 * spec.row_rate(i, y));
        }
}

TEST(RateSpec, JumpProbabilities) {
    EXPECT_DOUBLE_EQ(linear_two_state().jump_prob(0, 1, 0.7), 1.0);
    const RateSpec spec = linear_three_state();
    const double y = 1.3;
    // (L1_ij + y L2_ij) / (-(L1_ii + y L2_ii))
    const double row = (1.0 + 0.5) + y * (0.5 + 1.0);
    EXPECT_NEAR(spec.jump_prob(0, 1, y), (1.0 + 0.5 * y) / row, 1e-14);
    EXPECT_NEAR(spec.jump_prob(0, 2, y), (0.5 + 1.0 * y) / row, 1e-14);
    EXPECT_DOUBLE_EQ(spec.jump_prob(0, 0, y), 0.0);
}

TEST(RateSpec, JumpProbabilityIndicatorWhenRowRateVanishes) {
    // lambda_12(y) = y: no way out at age zero.
    const RateSpec spec({Matrix{{0, 0}, {1, 0}}, Matrix{{0, 1}, {0, 0}}}, 5.0);
    EXPECT_DOUBLE_EQ(spec.jump_prob(0, 0, 0.0), 1.0);
    EXPECT_DOUBLE_EQ(spec.jump_prob(0, 1, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(spec.jump_prob(0, 1, 0.5), 1.0);
}

TEST(RateSpec, JumpProbabilitiesSumToOne) {
    const RateSpec spec = linear_three_state();
    for (int i = 0; i < 3; ++i)
        for (int q = 0; q <= 400; ++q) {
            const double y = 4.0 * q / 400;
            double sum = 0.0;
            for (int j = 0; j < 3; ++j) sum += spec.jump_prob(i, j, y);
            EXPECT_NEAR(sum, 1.0, 1e-12);
        }
}

TEST(RateSpec, JumpProbabilityTimesHazardIsRate) {
    const RateSpec spec = linear_three_state();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            if (i == j) continue;
            for (double y : {0.05, 0.5, 1.5, 3.0}) {
                const double lhs = spec.jump_prob(i, j, y) * spec.holding_pdf(i, y) / (1.0 - spec.holding_cdf(i, y));
                EXPECT_NEAR(lhs, spec.lambda_at(i, j, y), 1e-10 * std::max(1.0, spec.lambda_at(i, j, y)));
            }
        }
}

TEST(RateSpec, KernelConstantRatesClosedForm) {
    const RateSpec spec({Matrix{{0, 0.7, 0.3}, {1.0, 0, 2.0}, {0.5, 0.5, 0}}}, 10.0);
    for (double y : {0.1, 0.8, 2.5}) {
        EXPECT_NEAR(spec.kernel(0, 1, y), 0.7 / 1.0 * (1.0 - std::exp(-1.0 * y)), 1e-9);
        EXPECT_NEAR(spec.kernel(1, 2, y), 2.0 / 3.0 * (1.0 - std::exp(-3.0 * y)), 1e-9);
    }
    EXPECT_DOUBLE_EQ(spec.kernel(0, 1, 0.0), 0.0);
}

TEST(RateSpec, KernelTailMass) {
    EXPECT_NEAR(constant_two_state().kernel(0, 1, 50.0), 1.0, 1e-9);
    const RateSpec spec = linear_three_state();
    for (int i = 0; i < 3; ++i) {
        double total = 0.0;
        for (int j = 0; j < 3; ++j)
            if (j != i) total += spec.kernel(i, j, spec.infinity_proxy(i));
        EXPECT_NEAR(total, 1.0, 1e-9);
    }
}

TEST(RateSpec, KernelDerivative) {
    const RateSpec spec = linear_three_state();
    const double e = 1e-4;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            if (i == j) continue;
            for (double y : {0.3, 1.1, 2.2}) {
                const double fd = (spec.kernel(i, j, y + e) - spec.kernel(i, j, y - e)) / (2 * e);
                const double exact = std::exp(-spec.big_lambda(i, y)) * spec.lambda_at(i, j, y);
                if (exact > 0.0) EXPECT_NEAR(fd / exact, 1.0, 1e-6);
            }
        }
}

TEST(RateSpec, EmbeddedChain) {
    const RateSpec c({Matrix{{0, 0.7, 0.3}, {1.0, 0, 2.0}, {0.5, 0.5, 0}}}, 10.0);
    const auto e = c.embedded_matrix();
    EXPECT_NEAR(e.p[0][1], 0.7, 1e-10);
    EXPECT_NEAR(e.p[1][2], 2.0 / 3.0, 1e-10);
    EXPECT_TRUE(e.irreducible);
    EXPECT_TRUE(constant_two_state().embedded_matrix().irreducible);

    const RateSpec spec = linear_three_state();
    const auto em = spec.embedded_matrix();
    for (int i = 0; i < 3; ++i) {
        double row = 0.0;
        for (int j = 0; j < 3; ++j) {
            row += em.p[i][j];
            if (j != i) EXPECT_NEAR(em.p[i][j], spec.kernel(i, j, spec.infinity_proxy(i)), 1e-8);
        }
        EXPECT_NEAR(row, 1.0, 1e-10);
    }
}

TEST(RateSpec, ReducibleChainIsFlagged) {
    // State 3 only returns to itself through 1 -> 3; 3 -> 1 allowed, 1 <-> 2 closed.
    const RateSpec spec({Matrix{{0, 1, 0}, {1, 0, 0}, {1, 0, 0}}}, 5.0);
    EXPECT_FALSE(spec.embedded_matrix().irreducible);
}

TEST(RateSpec, AbsorbingStateRejected) {
    EXPECT_THROW(RateSpec({Matrix{{0, 1, 1}, {1, 0, 1}, {0, 0, 0}}}, 5.0), agedep::ValidationError);
}

TEST(RateSpec, NegativeRateNamesEntry) {
    try {
        RateSpec({Matrix{{0, 1}, {1, 0}}, Matrix{{0, -1}, {0, 0}}}, 4.0);
        FAIL() << "expected a validation error";
    } catch (const agedep::ValidationError& e) {
        ASSERT_FALSE(e.issues().empty());
        EXPECT_NE(e.issues()[0].find("i=1, j=2, power=1"), std::string::npos) << e.issues()[0];
    }
}

TEST(RateSpec, NegativeOnlyNearCapIsCaught) {
    // 1 - y/2 turns negative at y = 2 < cap.
    EXPECT_THROW(RateSpec({Matrix{{0, 1}, {1, 0}}, Matrix{{0, -0.5}, {0, 0}}}, 3.0), agedep::ValidationError);
    EXPECT_NO_THROW(RateSpec({Matrix{{0, 1}, {1, 0}}, Matrix{{0, -0.5}, {0, 0}}}, 1.5));
}

TEST(RateSpec, IndexChecks) {
    EXPECT_THROW(constant_two_state().lambda_at(2, 0, 1.0), std::out_of_range);
    EXPECT_THROW(constant_two_state().lambda_at(-1, 0, 1.0), std::out_of_range);
}

TEST(RateSpec, ResidualHoldingTimeInvertsHazard) {
    const RateSpec lin = linear_two_state();
    const RateSpec cubic({Matrix{{0, 1}, {1, 0}}, Matrix{{0, 0}, {0.5, 0}}, Matrix{{0, 0.3}, {0, 0}},
                          Matrix{{0, 0.1}, {0.2, 0}}},
                         6.0);
    for (const RateSpec* spec : {&lin, &cubic})
        for (int i = 0; i < 2; ++i)
            for (double y0 : {0.0, 0.7, 5.5})
                for (double e : {0.01, 0.7, 3.0}) {
                    const double u = spec->residual_holding_time(i, y0, e);
                    EXPECT_NEAR(spec->big_lambda(i, y0 + u) - spec->big_lambda(i, y0), e, 1e-10);
                }
}

TEST(RateSpec, SurvivalRatioAndConditionalDensity) {
    const RateSpec spec = linear_three_state();
    for (int i = 0; i < 3; ++i)
        for (double y : {0.0, 0.8, 2.0})
            for (double v : {0.0, 0.3, 1.2}) {
                const double sr = (1.0 - spec.holding_cdf(i, y + v)) / (1.0 - spec.holding_cdf(i, y));
                EXPECT_NEAR(spec.survival_ratio(i, y, v), sr, 1e-12);
                const double cd = spec.holding_pdf(i, y + v) / (1.0 - spec.holding_cdf(i, y));
                EXPECT_NEAR(spec.conditional_density(i, y, v), cd, 1e-12);
            }
    // Ages far beyond practical support still give finite hazard-form values.
    EXPECT_NEAR(spec.conditional_density(0, 300.0, 0.0), spec.row_rate(0, 300.0), 1e-12);
    EXPECT_TRUE(std::isfinite(spec.survival_ratio(0, 300.0, 0.5)));
}
