#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "agedep/path_sim.hpp"
#include "agedep/volterra_solver.hpp"

namespace agedep {

/// Locally risk-minimising strategy at one state: xi units of stock, eps units of
/// the money-market account B_t = exp(int_0^t r), portfolio value V = xi s + eps B.
struct Strategy {
    double xi = 0.0;
    double eps = 0.0;
    double value = 0.0;
};

/// Hedge ratio from the integral representation of d phi / d s: the closed-form
/// single-regime delta weighted by the no-jump probability, plus the score-weighted
/// transition integral.
double hedge_ratio_psi(const VolterraOperator& op, const PriceSurface& surface, const MarketState& state);

/// `path_discount` is exp(-int_0^t r(X_u) du) along the realised path.
Strategy strategy_at(const VolterraOperator& op, const PriceSurface& surface, const MarketState& state,
                     double path_discount);

/// MC estimate of the residual risk of a knock-out claim:
///   E[ int_t^T e^{-2 int_t^u r} sum_{j != X_u} lambda_{X_u j}(Y_u)
///          (phi(u, S_u, j, 0) - phi(u, S_u, X_u, Y_u))^2 1(tau > u) du ]
/// with phi read from the full surface and the time integral taken on the
/// monitoring grid (barrier_steps points per unit time).
McEstimate residual_risk_barrier(const PriceSurface& surface, const RegimeModel& model, const RateSpec& spec,
                                 const MarketState& state, const McOptions& options);

/// Claim to be hedged by pnl_simulate.
struct HedgeTarget {
    double maturity = 1.0;
    std::function<double(const MarketState&)> value;
    std::function<double(const MarketState&)> delta;
    std::function<double(double)> payoff;
    /// Knock-out level for barrier claims (the position is closed at the first
    /// monitored crossing and pays zero).
    std::optional<FirstPassage> knock_out;
};

/// Target backed by a price surface; the hedge ratio is the central log-price
/// difference of the interpolated surface.
HedgeTarget hedge_target(const PriceSurface& surface);
/// Zero-coupon bond target; holds no stock.
HedgeTarget hedge_target(const ZcbSurface& zcb);

/// Discounted hedging cost C*_T - C*_0 per path under discrete rebalancing every
/// `rebalance_dt`. Holdings change only at rebalancing dates; regime switches in
/// between are carried unhedged.
std::vector<double> pnl_simulate(const HedgeTarget& target, const RegimeModel& model, const RateSpec& spec,
                                 const MarketState& state, double rebalance_dt, Measure measure,
                                 const McOptions& options);

}  // namespace agedep
