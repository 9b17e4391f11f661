#pragma once

#include "agedep/market.hpp"

namespace agedep {

/// Standardised log-displacement of x from the risk-neutral centre over [t, t+v]
/// in regime i:
///   L = (ln(x/s) - int_t^{t+v} (r_i - sigma^2/2)) / sqrt(int_t^{t+v} sigma^2).
double log_kernel_L(const RegimeModel& model, double t, double x, double s, int i, double v);

/// Risk-neutral lognormal transition density of S_{t+v} = x given S_t = s, regime
/// i held throughout.
double lognormal_alpha(const RegimeModel& model, double x, double t, double s, int i, double v);

/// Black-Scholes call with total variance `var` over time-to-expiry tau.
double black_scholes_call(double s, double k, double r, double var, double tau);
double black_scholes_put(double s, double k, double r, double var, double tau);

/// Single-regime price rho_i(t, s) = e^{-r_i (T-t)} E[K(S_T)], S lognormal under
/// regime i. Closed form for call/put/constant; tabulated payoffs are integrated in
/// log space over +-8 standard deviations.
double bsm_rho(const RegimeModel& model, int i, double t, double s, double maturity,
               const PayoffSpec& payoff);

/// d rho_i / d s.
double bsm_delta(const RegimeModel& model, int i, double t, double s, double maturity,
                 const PayoffSpec& payoff);

/// P(max_{[0,v]} S < b | S_0 = s) for constant-vol regime i (reflection principle).
double survival_prob_up(const RegimeModel& model, int i, double s, double b, double v);
/// P(min_{[0,v]} S > b | S_0 = s).
double survival_prob_down(const RegimeModel& model, int i, double s, double b, double v);

/// Up-and-out call, constant parameters of regime i; zero for s >= b or K >= b.
double barrier_up_out_call_closed(const RegimeModel& model, int i, double t, double s, double k,
                                  double b, double maturity);
/// Down-and-out call with barrier below spot; zero for s <= b.
double barrier_down_out_call_closed(const RegimeModel& model, int i, double t, double s, double k,
                                    double b, double maturity);

}  // namespace agedep
