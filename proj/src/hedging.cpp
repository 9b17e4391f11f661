#include "agedep/hedging.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace agedep {

double hedge_ratio_psi(const VolterraOperator& op, const PriceSurface& surface, const MarketState& state) {
    return op.evaluate_delta(surface, state);
}

Strategy strategy_at(const VolterraOperator& op, const PriceSurface& surface, const MarketState& state,
                     double path_discount) {
    if (!(path_discount > 0.0)) throw std::invalid_argument("strategy_at: path discount must be positive");
    Strategy out;
    out.value = op.evaluate(surface, state);
    out.xi = state.t >= surface.grid.maturity ? 0.0 : op.evaluate_delta(surface, state);
    out.eps = path_discount * (out.value - out.xi * state.s);
    return out;
}

namespace {

bool is_transition_time(const PathRecord& path, double t) {
    for (const auto& tr : path.transitions) {
        if (tr.time == t) return true;
        if (tr.time > t) break;
    }
    return false;
}

template <class F>
std::vector<double> per_path(const McOptions& options, F&& body) {
    if (options.n_paths < 1) throw std::invalid_argument("n_paths must be >= 1");
    std::vector<double> out(static_cast<std::size_t>(options.n_paths));
    if (options.exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t p = 0; p < options.n_paths; ++p) out[p] = body(p);
    } else {
        for (std::int64_t p = 0; p < options.n_paths; ++p) out[p] = body(p);
    }
    return out;
}

}  // namespace

McEstimate residual_risk_barrier(const PriceSurface& surface, const RegimeModel& model, const RateSpec& spec,
                                 const MarketState& state, const McOptions& options) {
    if (!surface.claim.is_barrier()) throw std::invalid_argument("residual_risk_barrier: knock-out surface required");
    if (!surface.has_full()) throw std::invalid_argument("residual_risk_barrier: full surface required");
    const double T = surface.grid.maturity;
    if (!(state.t < T)) throw std::invalid_argument("residual_risk_barrier: state must precede maturity");
    const bool upward = surface.claim.kind == SolverClaim::Kind::up_out_call;
    const double dt = 1.0 / options.barrier_steps;
    const int k = spec.states();

    auto body = [&](std::int64_t p) {
        Rng chain_rng(options.seed, static_cast<std::uint64_t>(p), 0);
        Rng asset_rng(options.seed, static_cast<std::uint64_t>(p), 1);
        PathRecord path = simulate_chain(spec, state.regime, state.age, T - state.t, chain_rng,
                                         ChainMethod::thinning, state.t);
        simulate_asset(path, model, state.s, Measure::risk_neutral, asset_rng, dt,
                       FirstPassage{surface.claim.barrier, upward, std::nullopt});
        const auto& samples = path.asset_samples;
        const double tau = path.first_passage->hit_time.value_or(std::numeric_limits<double>::infinity());
        double acc = 0.0;
        for (std::size_t q = 0; q + 1 < samples.size(); ++q) {
            const double u = samples[q].time;
            if (u >= tau) break;
            const int x = path.state_at(u);
            const double y = path.age_at(u);
            const double s = samples[q].price;
            const double here = surface.value(u, s, x, y);
            double jump = 0.0;
            for (int j = 0; j < k; ++j) {
                if (j == x) continue;
                const double diff = surface.value(u, s, j, 0.0) - here;
                jump += spec.lambda_at(x, j, y) * diff * diff;
            }
            const double disc = std::exp(-2.0 * path.integrated(model.r, state.t, u));
            acc += disc * jump * (samples[q + 1].time - u);
        }
        return acc;
    };
    return summarize(per_path(options, body));
}

HedgeTarget hedge_target(const PriceSurface& surface) {
    HedgeTarget t;
    t.maturity = surface.grid.maturity;
    const double h = (std::log(surface.grid.s_max) - std::log(surface.grid.s_min)) / (surface.grid.n_logs - 1);
    const PriceSurface* sp = &surface;
    t.value = [sp](const MarketState& st) { return sp->value(st); };
    t.delta = [sp, h](const MarketState& st) {
        const double up = st.s * std::exp(h);
        const double dn = st.s * std::exp(-h);
        return (sp->value(st.t, up, st.regime, st.age) - sp->value(st.t, dn, st.regime, st.age)) / (up - dn);
    };
    const SolverClaim claim = surface.claim;
    t.payoff = [claim](double s) { return claim.payoff(s); };
    if (claim.is_barrier()) {
        t.knock_out = FirstPassage{claim.barrier, claim.kind == SolverClaim::Kind::up_out_call, std::nullopt};
    }
    return t;
}

HedgeTarget hedge_target(const ZcbSurface& zcb) {
    HedgeTarget t;
    t.maturity = zcb.maturity;
    const ZcbSurface* zp = &zcb;
    t.value = [zp](const MarketState& st) { return zp->evaluate(st.t, st.regime, st.age); };
    t.delta = [](const MarketState&) { return 0.0; };
    t.payoff = [](double) { return 1.0; };
    return t;
}

std::vector<double> pnl_simulate(const HedgeTarget& target, const RegimeModel& model, const RateSpec& spec,
                                 const MarketState& state, double rebalance_dt, Measure measure,
                                 const McOptions& options) {
    if (!(rebalance_dt > 0.0)) throw std::invalid_argument("pnl_simulate: rebalance_dt must be positive");
    if (!target.value || !target.delta || !target.payoff) throw std::invalid_argument("pnl_simulate: empty target");
    const double T = target.maturity;
    if (!(state.t < T)) throw std::invalid_argument("pnl_simulate: state must precede maturity");
    const double v0 = target.value(state);
    const double xi0 = target.delta(state);

    auto body = [&](std::int64_t p) {
        Rng chain_rng(options.seed, static_cast<std::uint64_t>(p), 0);
        Rng asset_rng(options.seed, static_cast<std::uint64_t>(p), 1);
        PathRecord path = simulate_chain(spec, state.regime, state.age, T - state.t, chain_rng,
                                         ChainMethod::thinning, state.t);
        simulate_asset(path, model, state.s, measure, asset_rng, rebalance_dt, target.knock_out);
        const auto& samples = path.asset_samples;
        const double tau = path.first_passage && path.first_passage->hit_time
                               ? *path.first_passage->hit_time
                               : std::numeric_limits<double>::infinity();
        double xi = xi0;
        double gains = 0.0;
        double prev_disc_s = samples.front().price;
        for (std::size_t q = 1; q < samples.size(); ++q) {
            const double u = samples[q].time;
            const double disc = std::exp(-path.integrated(model.r, state.t, u));
            const double disc_s = disc * samples[q].price;
            gains += xi * (disc_s - prev_disc_s);
            prev_disc_s = disc_s;
            if (u >= tau) return 0.0 - v0 - gains;
            if (q + 1 == samples.size()) return disc * target.payoff(samples[q].price) - v0 - gains;
            if (!is_transition_time(path, u)) {
                xi = target.delta(MarketState{u, samples[q].price, path.state_at(u), path.age_at(u)});
            }
        }
        return -v0 - gains;
    };
    return per_path(options, body);
}

}  // namespace agedep
