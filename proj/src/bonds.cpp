#include "agedep/bonds.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "agedep/errors.hpp"

namespace agedep {

namespace {

void check_terms(const BondTerms& t) {
    std::vector<std::string> issues;
    if (!(t.face > 0.0)) issues.push_back("bond.face: must be positive");
    if (!(t.threshold >= 0.0)) issues.push_back("bond.threshold: must be non-negative");
    if (!(t.threshold < t.face)) issues.push_back("bond.threshold: must be below the face value");
    if (!(t.maturity > 0.0)) issues.push_back("bond.maturity: must be positive");
    if (!issues.empty()) throw ValidationError(std::move(issues));
}

}  // namespace

BondSurfaces build_bond_surfaces(const RegimeModel& model, const RateSpec& spec, const BondTerms& terms,
                                 const GridSpec& grid, const SolverOptions& options, bool with_knock_out) {
    check_terms(terms);
    GridSpec g = grid;
    g.maturity = terms.maturity;
    BondSurfaces out{terms,
                     solve_vanilla(model, spec, PayoffSpec::call(terms.face), g, options),
                     solve_vanilla(model, spec, PayoffSpec::put(terms.face), g, options),
                     solve_zcb(model, spec, g, options),
                     std::nullopt,
                     std::nullopt};
    if (with_knock_out && terms.threshold > 0.0) {
        if (!(terms.threshold < g.s_max)) {
            throw ValidationError({"bond.threshold: must lie below grid.s_max"});
        }
        GridSpec gj = g;
        gj.s_min = terms.threshold;
        out.down_out = solve_barrier_do(model, spec, terms.face, terms.threshold, gj, options);
        out.call_above_j = solve_vanilla(model, spec, PayoffSpec::call(terms.face), gj, options);
    }
    return out;
}

BondQuote price_model1(const BondSurfaces& b, const MarketState& state) {
    const double zcb = b.zcb.evaluate(state.t, state.regime, state.age);
    BondQuote q;
    q.debt = b.terms.face * zcb - b.put.value(state);
    q.equity = b.call.value(state);
    return q;
}

double price_model2(const BondSurfaces& b, const MarketState& state) {
    if (!b.down_out || !b.call_above_j) {
        throw std::invalid_argument("price_model2: surfaces were built without a default threshold");
    }
    if (state.s <= b.terms.threshold) {
        throw DefaultedStateError("price_model2: asset value at or below the default threshold");
    }
    const double down_in = b.call_above_j->value(state) - b.down_out->value(state);
    return price_model1(b, state).debt + down_in;
}

McEstimate price_model3(const BondSurfaces& b, const RegimeModel& model, const RateSpec& spec,
                        const MarketState& state, double delta, const McOptions& options) {
    if (!(delta >= 0.0) || delta > b.terms.threshold / b.terms.face) {
        throw std::invalid_argument("price_model3: recovery must lie in [0, J/K]");
    }
    const ZcbSurface* z = &b.zcb;
    ClaimSpec claim;
    claim.kind = ClaimSpec::Kind::bond_model_3;
    claim.strike = b.terms.face;
    claim.barrier = b.terms.threshold;
    claim.maturity = b.terms.maturity;
    claim.recovery = delta;
    claim.zcb = [z](double t, int i, double y) { return z->evaluate(t, i, y); };
    return mc_price(claim, model, spec, state, options);
}

}  // namespace agedep
