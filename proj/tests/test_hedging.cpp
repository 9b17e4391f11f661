#include <gtest/gtest.h>

#include <cmath>

#include "agedep/hedging.hpp"
#include "oracles.hpp"

using namespace agedep;

namespace {

RateSpec rates() { return RateSpec({Matrix{{0, 1}, {2, 0}}, Matrix{{0, 0.5}, {0.5, 0}}}, 4.0); }

RegimeModel two_regime() {
    RegimeModel m;
    m.r = {0.03, 0.07};
    m.mu = {0.08, 0.12};
    m.kappa = {0.0, 0.0};
    m.vol.sigma0 = {0.15, 0.35};
    return m;
}

RegimeModel identical() {
    RegimeModel m = two_regime();
    m.r = {0.05, 0.05};
    m.mu = {0.09, 0.09};
    m.vol.sigma0 = {0.2, 0.2};
    return m;
}

GridSpec grid(int nt, int ns, double lo, double hi, int ny = 11) {
    GridSpec g;
    g.n_t = nt;
    g.n_logs = ns;
    g.s_min = lo;
    g.s_max = hi;
    g.n_y = ny;
    return g;
}

double stdev(const std::vector<double>& x) { return oracle::summarize(x).se * std::sqrt(double(x.size())); }

}  // namespace

TEST(HedgeRatio, IdenticalRegimesGiveBlackScholesDelta) {
    const GridSpec g = grid(26, 801, std::exp(-1.5), std::exp(1.5));
    const VolterraOperator op(identical(), rates(), SolverClaim::vanilla(PayoffSpec::call(1.0)), g);
    const auto surf = solve(op);
    for (double x = -0.75; x <= 0.75; x += 0.125) {
        const double s = std::exp(x);
        for (int i = 0; i < 2; ++i) {
            const double psi = hedge_ratio_psi(op, surf, {0.0, s, i, 0.0});
            EXPECT_NEAR(psi, oracle::bs_call_delta(s, 1.0, 0.05, 0.2, 1.0), 1e-4) << s;
        }
    }
    EXPECT_NEAR(hedge_ratio_psi(op, surf, {0.0, std::exp(1.3), 0, 0.0}), 1.0, 1e-3);
}

TEST(HedgeRatio, TwoRegimeAgreesWithSurfaceSlope) {
    const GridSpec g = grid(26, 201, std::exp(-2.0), std::exp(2.0));
    const VolterraOperator op(two_regime(), rates(), SolverClaim::vanilla(PayoffSpec::call(1.0)), g);
    const auto surf = solve(op);
    for (double s : {0.6, 0.9, 1.0, 1.2, 1.8})
        for (double y : {0.0, 0.5}) {
            const MarketState st{0.2, s, 1, y};
            MarketState up = st, dn = st;
            up.s *= 1.0001;
            dn.s /= 1.0001;
            const double fd = (op.evaluate(surf, up) - op.evaluate(surf, dn)) / (up.s - dn.s);
            EXPECT_NEAR(hedge_ratio_psi(op, surf, st), fd, 1e-3);
            EXPECT_GE(hedge_ratio_psi(op, surf, st), 0.0);
            EXPECT_LE(hedge_ratio_psi(op, surf, st), 1.0 + 1e-3);
        }
}

TEST(Strategy, PortfolioReproducesValue) {
    const GridSpec g = grid(21, 121, std::exp(-2.0), std::exp(2.0));
    const VolterraOperator op(two_regime(), rates(), SolverClaim::vanilla(PayoffSpec::call(1.0)), g);
    const auto surf = solve(op);
    const MarketState st{0.4, 1.1, 0, 0.2};
    const double disc = std::exp(-0.02);
    const Strategy s = strategy_at(op, surf, st, disc);
    EXPECT_NEAR(s.xi * st.s + s.eps / disc, s.value, 1e-12);
    EXPECT_NEAR(s.value, op.evaluate(surf, st), 1e-15);
    EXPECT_EQ(strategy_at(op, surf, {1.0, 1.1, 0, 0.0}, disc).xi, 0.0);
    EXPECT_THROW(strategy_at(op, surf, st, 0.0), std::invalid_argument);
}

TEST(ResidualRisk, VanishesWhenRegimesAgree) {
    GridSpec g = grid(21, 121, std::exp(-2.0), 1.4);
    const auto surf = solve_barrier_uo(identical(), rates(), 1.0, 1.4, g);
    const auto rr = residual_risk_barrier(surf, identical(), rates(), {0.0, 1.0, 0, 0.0}, {200, 3, 128});
    EXPECT_LT(rr.mean, 1e-6);
}

TEST(ResidualRisk, PositiveWhenRegimesDiffer) {
    GridSpec g = grid(21, 121, std::exp(-2.0), 1.4);
    const auto surf = solve_barrier_uo(two_regime(), rates(), 1.0, 1.4, g);
    const auto rr = residual_risk_barrier(surf, two_regime(), rates(), {0.0, 1.0, 0, 0.0}, {500, 3, 128});
    EXPECT_GT(rr.mean, 0.0);
    EXPECT_GT(rr.mean, 3.0 * rr.std_error);
    const auto vanilla = solve_vanilla(two_regime(), rates(), PayoffSpec::call(1.0), g);
    EXPECT_THROW(residual_risk_barrier(vanilla, two_regime(), rates(), {}, {10, 1}), std::invalid_argument);
}

TEST(Pnl, ZeroCouponNeedsNoHedge) {
    RegimeModel m = two_regime();
    m.r = {0.04, 0.04};
    const auto z = solve_zcb(m, rates(), grid(21, 11, 0.5, 2.0));
    const auto pnl = pnl_simulate(hedge_target(z), m, rates(), {0.0, 1.0, 0, 0.0}, 0.05, Measure::physical, {200, 5});
    for (double c : pnl) EXPECT_NEAR(c, 0.0, 1e-7);
}

TEST(Pnl, ZeroCouponCostIsMeanZeroRiskNeutral) {
    const auto z = solve_zcb(two_regime(), rates(), grid(51, 11, 0.5, 2.0));
    const auto pnl =
        pnl_simulate(hedge_target(z), two_regime(), rates(), {0.0, 1.0, 0, 0.0}, 0.05, Measure::risk_neutral, {20000, 5});
    const auto e = oracle::summarize(pnl);
    EXPECT_NEAR(e.mean, 0.0, 3.0 * e.se + 1e-4);
}

TEST(Pnl, CallCostIsMeanZeroRiskNeutral) {
    const GridSpec g = grid(26, 201, std::exp(-2.0), std::exp(2.0));
    const auto surf = solve_vanilla(two_regime(), rates(), PayoffSpec::call(1.0), g);
    const auto pnl = pnl_simulate(hedge_target(surf), two_regime(), rates(), {0.0, 1.0, 1, 0.0}, 0.02,
                                  Measure::risk_neutral, {8000, 9});
    const auto e = oracle::summarize(pnl);
    EXPECT_NEAR(e.mean, 0.0, 3.0 * e.se + 1e-3);
}

TEST(Pnl, IdenticalRegimesHedgeErrorShrinksWithRebalancing) {
    const GridSpec g = grid(26, 201, std::exp(-2.0), std::exp(2.0));
    const auto surf = solve_vanilla(identical(), rates(), PayoffSpec::call(1.0), g);
    const auto target = hedge_target(surf);
    const auto coarse = pnl_simulate(target, identical(), rates(), {0.0, 1.0, 0, 0.0}, 0.1, Measure::physical, {3000, 4});
    const auto fine = pnl_simulate(target, identical(), rates(), {0.0, 1.0, 0, 0.0}, 0.01, Measure::physical, {3000, 4});
    // Discrete-hedging error scales like sqrt(dt).
    EXPECT_LT(stdev(fine), 0.5 * stdev(coarse));
}

TEST(Pnl, KnockedOutPathsCloseAtBarrier) {
    GridSpec g = grid(21, 121, std::exp(-2.0), 1.2);
    const auto surf = solve_barrier_uo(two_regime(), rates(), 1.0, 1.2, g);
    const auto pnl = pnl_simulate(hedge_target(surf), two_regime(), rates(), {0.0, 1.0, 1, 0.0}, 0.01,
                                  Measure::risk_neutral, {2000, 2});
    for (double c : pnl) EXPECT_TRUE(std::isfinite(c));
    EXPECT_THROW(pnl_simulate(hedge_target(surf), two_regime(), rates(), {0.0, 1.0, 1, 0.0}, 0.0,
                              Measure::risk_neutral, {10, 2}),
                 std::invalid_argument);
}
