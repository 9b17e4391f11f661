#pragma once

#include <optional>

#include "agedep/path_sim.hpp"
#include "agedep/volterra_solver.hpp"

namespace agedep {

/// Structural bond on firm assets A with face value K, default threshold J < K and
/// maturity T.
///
///   Model 1: debt pays min(A_T, K); equity pays (A_T - K)^+.
///   Model 2: debt pays min(A_T, K) + (A_T - K)^+ 1(min_{u <= T} A_u < J), so after a
///            premature default the bondholders keep the whole firm. The add-on is a
///            down-and-in call, priced as vanilla call minus down-and-out call.
///   Model 3: default at tau = first passage below J (or T if A_T < K); recovery
///            delta K B(tau, T, X_tau, Y_tau) paid at tau, min(A_T, K) otherwise.
struct BondTerms {
    double face = 1.0;
    double threshold = 0.0;
    double maturity = 1.0;
};

/// Surfaces shared by the three models.
struct BondSurfaces {
    BondTerms terms;
    PriceSurface call;
    PriceSurface put;
    ZcbSurface zcb;
    /// Present when threshold > 0: down-and-out call and a vanilla call solved on
    /// the same log-price grid starting at J.
    std::optional<PriceSurface> down_out;
    std::optional<PriceSurface> call_above_j;
};

/// Solves everything the bond models need. `grid` sets the vanilla log-price range;
/// the knock-out grid reuses its resolution on [J, s_max]. Model 3 needs no
/// knock-out surfaces, so `with_knock_out = false` skips them.
BondSurfaces build_bond_surfaces(const RegimeModel& model, const RateSpec& spec, const BondTerms& terms,
                                 const GridSpec& grid, const SolverOptions& options = {},
                                 bool with_knock_out = true);

struct BondQuote {
    double debt = 0.0;
    double equity = 0.0;
};

BondQuote price_model1(const BondSurfaces& b, const MarketState& state);

/// Throws DefaultedStateError when s <= J.
double price_model2(const BondSurfaces& b, const MarketState& state);

/// MC price of the Model 3 debt. Throws std::invalid_argument unless
/// 0 <= delta <= J / K.
McEstimate price_model3(const BondSurfaces& b, const RegimeModel& model, const RateSpec& spec,
                        const MarketState& state, double delta, const McOptions& options);

}  // namespace agedep
