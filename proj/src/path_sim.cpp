#include "agedep/path_sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "agedep/market.hpp"

namespace agedep {

int PathRecord::state_at(double t) const {
    int state = x0;
    for (const auto& tr : transitions) {
        if (tr.time > t) break;
        state = tr.state;
    }
    return state;
}

double PathRecord::age_at(double t) const {
    double last = start - y0;
    for (const auto& tr : transitions) {
        if (tr.time > t) break;
        last = tr.time;
    }
    return t - last;
}

double PathRecord::age_before(double t) const {
    double last = start - y0;
    for (const auto& tr : transitions) {
        if (tr.time >= t) break;
        last = tr.time;
    }
    return t - last;
}

double PathRecord::integrated(const std::vector<double>& rates, double from, double to) const {
    if (to <= from) return 0.0;
    double acc = 0.0;
    double cursor = from;
    int state = x0;
    for (const auto& tr : transitions) {
        if (tr.time <= from) {
            state = tr.state;
            continue;
        }
        if (tr.time >= to) break;
        acc += rates[state] * (tr.time - cursor);
        cursor = tr.time;
        state = tr.state;
    }
    acc += rates[state] * (to - cursor);
    return acc;
}

double sample_holding(const RateSpec& spec, int i, double y0, Rng& rng) {
    return spec.residual_holding_time(i, y0, rng.exponential());
}

namespace {

// Destination selected by a mark z against intervals of length lambda_ij(y) laid out
// from 0 in increasing j, left-closed and right-open. -1 when z misses them all.
int locate_mark(const RateSpec& spec, int i, double y, double z) {
    double acc = 0.0;
    for (int j = 0; j < spec.states(); ++j) {
        if (j == i) continue;
        acc += spec.lambda_at(i, j, y);
        if (z < acc) return j;
    }
    return -1;
}

PathRecord thinning(const RateSpec& spec, const TimeChange* eta, double deriv_bound, int x0, double y0,
                    double horizon, Rng& rng, double start) {
    PathRecord path;
    path.x0 = x0;
    path.y0 = y0;
    path.start = start;
    path.horizon = horizon;
    const double c = spec.sup_row_rate();
    const double candidate_rate = c * deriv_bound;
    const double end = start + horizon;
    int state = x0;
    double last_jump = start - y0;
    double t = start;
    while (true) {
        t += rng.exponential() / candidate_rate;
        if (t > end) break;
        const double w = rng.uniform();
        double z = c * w;
        if (eta != nullptr) {
            const double d = eta->derivative(t);
            if (d > deriv_bound * (1.0 + 1e-12)) {
                throw std::invalid_argument("simulate_inhomogeneous: eta' exceeds its declared bound");
            }
            if (!(w * deriv_bound < d)) continue;
            z = c * w * deriv_bound / d;
        }
        const int j = locate_mark(spec, state, t - last_jump, z);
        if (j < 0) continue;
        path.transitions.push_back({t, j});
        state = j;
        last_jump = t;
    }
    return path;
}

PathRecord inversion(const RateSpec& spec, int x0, double y0, double horizon, Rng& rng, double start) {
    PathRecord path;
    path.x0 = x0;
    path.y0 = y0;
    path.start = start;
    path.horizon = horizon;
    const double end = start + horizon;
    int state = x0;
    double age = y0;
    double t = start;
    while (true) {
        const double u = sample_holding(spec, state, age, rng);
        t += u;
        if (t > end) break;
        const double exit_age = age + u;
        const double row = spec.row_rate(state, exit_age);
        const double z = rng.uniform() * row;
        const int j = locate_mark(spec, state, exit_age, z);
        if (j < 0) {
            // Exit at an isolated zero of the row rate (probability zero); keep ageing.
            age = exit_age;
            continue;
        }
        path.transitions.push_back({t, j});
        state = j;
        age = 0.0;
    }
    return path;
}

void check_chain_args(const RateSpec& spec, int x0, double y0, double horizon) {
    if (x0 < 0 || x0 >= spec.states()) throw std::out_of_range("simulate: initial state out of range");
    if (y0 < 0.0) throw std::invalid_argument("simulate: negative initial age");
    if (!(horizon > 0.0)) throw std::invalid_argument("simulate: horizon must be positive");
}

}  // namespace

PathRecord simulate_chain(const RateSpec& spec, int x0, double y0, double horizon, Rng& rng,
                          ChainMethod method, double start) {
    check_chain_args(spec, x0, y0, horizon);
    if (method == ChainMethod::thinning) return thinning(spec, nullptr, 1.0, x0, y0, horizon, rng, start);
    return inversion(spec, x0, y0, horizon, rng, start);
}

TimeChange TimeChange::identity() {
    return TimeChange{[](double t) { return t; }, [](double) { return 1.0; }, 1.0};
}

PathRecord simulate_inhomogeneous(const RateSpec& spec, const TimeChange& eta, int x0, double y0,
                                  double horizon, Rng& rng, double start) {
    check_chain_args(spec, x0, y0, horizon);
    if (!eta.eta || !eta.derivative) throw std::invalid_argument("simulate_inhomogeneous: eta is empty");
    if (std::abs(eta.eta(0.0)) > 1e-12) throw std::invalid_argument("simulate_inhomogeneous: eta(0) != 0");
    constexpr int samples = 4096;
    double sup = 0.0;
    double prev = eta.eta(start);
    for (int s = 0; s <= samples; ++s) {
        const double t = start + horizon * s / samples;
        const double d = eta.derivative(t);
        const double e = eta.eta(t);
        if (!(d > 0.0) || (s > 0 && !(e > prev))) {
            throw std::invalid_argument("simulate_inhomogeneous: eta must be strictly increasing with eta' > 0");
        }
        prev = e;
        sup = std::max(sup, d);
    }
    const double bound = eta.derivative_bound.value_or(sup);
    if (bound < sup) throw std::invalid_argument("simulate_inhomogeneous: derivative bound below sampled eta'");
    return thinning(spec, &eta, bound, x0, y0, horizon, rng, start);
}

void simulate_asset(PathRecord& path, const RegimeModel& model, double s0, Measure measure, Rng& rng,
                    double monitor_dt, std::optional<FirstPassage> barrier) {
    if (!(s0 > 0.0)) throw std::invalid_argument("simulate_asset: s0 must be positive");
    struct Event {
        double time;
        bool monitor;
    };
    std::vector<Event> events;
    const double end = path.end();
    events.reserve(path.transitions.size() + 2 +
                   (monitor_dt > 0.0 ? static_cast<std::size_t>(path.horizon / monitor_dt) + 1 : 0));
    for (const auto& tr : path.transitions) events.push_back({tr.time, false});
    if (monitor_dt > 0.0) {
        const auto steps = static_cast<long>(std::floor(path.horizon / monitor_dt * (1.0 + 1e-12)));
        for (long s = 1; s <= steps; ++s) {
            const double t = path.start + s * monitor_dt;
            if (t < end) events.push_back({t, true});
        }
    }
    events.push_back({end, true});
    std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.time < b.time; });

    path.asset_samples.clear();
    path.asset_samples.reserve(events.size() + 1);
    path.asset_samples.push_back({path.start, s0});
    if (barrier) {
        barrier->hit_time.reset();
        const bool hit0 = barrier->upward ? s0 >= barrier->level : s0 <= barrier->level;
        if (hit0) barrier->hit_time = path.start;
    }
    double s = s0;
    double cursor = path.start;
    std::size_t next_tr = 0;
    int state = path.x0;
    for (const auto& ev : events) {
        while (next_tr < path.transitions.size() && path.transitions[next_tr].time <= cursor) {
            state = path.transitions[next_tr].state;
            ++next_tr;
        }
        if (ev.time > cursor) {
            const double dt = ev.time - cursor;
            const double var = integrated_var(model.vol, state, cursor, ev.time);
            const double drift_rate =
                measure == Measure::risk_neutral ? model.r[state] : model.mu[state] - model.kappa[state];
            s *= std::exp(drift_rate * dt - 0.5 * var + std::sqrt(var) * rng.normal());
            cursor = ev.time;
        }
        if (path.asset_samples.back().time == ev.time) {
            path.asset_samples.back().price = s;
        } else {
            path.asset_samples.push_back({ev.time, s});
        }
        if (barrier && ev.monitor && !barrier->hit_time) {
            const bool hit = barrier->upward ? s >= barrier->level : s <= barrier->level;
            if (hit) barrier->hit_time = ev.time;
        }
    }
    path.first_passage = barrier;
}

McEstimate summarize(const std::vector<double>& samples) {
    McEstimate est;
    est.n = static_cast<std::int64_t>(samples.size());
    if (samples.empty()) return est;
    double mean = 0.0;
    for (double x : samples) mean += x;
    mean /= static_cast<double>(samples.size());
    double ss = 0.0;
    for (double x : samples) ss += (x - mean) * (x - mean);
    est.mean = mean;
    if (samples.size() > 1) {
        const double var = ss / static_cast<double>(samples.size() - 1);
        est.std_error = std::sqrt(var / static_cast<double>(samples.size()));
    }
    return est;
}

namespace {

double path_payoff(const ClaimSpec& claim, const RegimeModel& model, const RateSpec& spec,
                   const MarketState& state, std::uint64_t seed, std::int64_t index, int barrier_steps) {
    const double horizon = claim.maturity - state.t;
    Rng chain_rng(seed, static_cast<std::uint64_t>(index), 0);
    Rng asset_rng(seed, static_cast<std::uint64_t>(index), 1);
    PathRecord path = simulate_chain(spec, state.regime, state.age, horizon, chain_rng, ChainMethod::thinning,
                                     state.t);
    const double discount = std::exp(-path.integrated(model.r, state.t, claim.maturity));
    using K = ClaimSpec::Kind;
    if (claim.kind == K::zcb) return discount;

    const bool path_dependent = claim.kind == K::up_out_call || claim.kind == K::down_out_call ||
                                claim.kind == K::bond_model_2 || claim.kind == K::bond_model_3;
    std::optional<FirstPassage> barrier;
    if (path_dependent) barrier = FirstPassage{claim.barrier, claim.kind == K::up_out_call, std::nullopt};
    const double dt = path_dependent ? 1.0 / barrier_steps : 0.0;
    simulate_asset(path, model, state.s, Measure::risk_neutral, asset_rng, dt, barrier);
    const double sT = path.asset_samples.back().price;
    const bool hit = path.first_passage && path.first_passage->hit_time.has_value();
    const double k = claim.strike;

    switch (claim.kind) {
        case K::call: return discount * std::max(sT - k, 0.0);
        case K::put: return discount * std::max(k - sT, 0.0);
        case K::up_out_call:
        case K::down_out_call: return hit ? 0.0 : discount * std::max(sT - k, 0.0);
        case K::bond_model_1: return discount * std::min(sT, k);
        case K::bond_model_2: return discount * (std::min(sT, k) + (hit ? std::max(sT - k, 0.0) : 0.0));
        case K::bond_model_3: {
            const double tau = hit ? *path.first_passage->hit_time : claim.maturity;
            if (hit && tau < claim.maturity) {
                const double df = std::exp(-path.integrated(model.r, state.t, tau));
                const int x = path.state_at(tau);
                const double y = path.age_at(tau);
                return df * claim.recovery * k * claim.zcb(tau, x, y);
            }
            return discount * std::min(sT, k);
        }
        case K::zcb: break;
    }
    return discount;
}

void check_mc_args(const ClaimSpec& claim, const RegimeModel& model, const RateSpec& spec, const MarketState& state,
                   const McOptions& options) {
    if (options.n_paths < 1) throw std::invalid_argument("mc_price: n_paths must be >= 1");
    if (model.states() != spec.states()) throw std::invalid_argument("mc_price: model and rates disagree on k");
    if (!(claim.maturity > state.t)) throw std::invalid_argument("mc_price: maturity must follow t");
    if (options.barrier_steps < 1) throw std::invalid_argument("mc_price: barrier_steps must be >= 1");
    if (claim.kind == ClaimSpec::Kind::bond_model_3) {
        if (!claim.zcb) throw std::invalid_argument("mc_price: bond model 3 needs a discount function");
        if (claim.recovery < 0.0 || claim.recovery > claim.barrier / claim.strike) {
            throw std::invalid_argument("mc_price: recovery must lie in [0, J/K]");
        }
    }
    const auto k = static_cast<int>(claim.kind);
    if (k < 0 || k > static_cast<int>(ClaimSpec::Kind::bond_model_3)) {
        throw std::invalid_argument("mc_price: unknown claim kind");
    }
}

}  // namespace

std::vector<double> mc_payoffs(const ClaimSpec& claim, const RegimeModel& model, const RateSpec& spec,
                               const MarketState& state, const McOptions& options) {
    check_mc_args(claim, model, spec, state, options);
    const std::int64_t n = options.n_paths;
    std::vector<double> out(static_cast<std::size_t>(n));
    if (claim.kind == ClaimSpec::Kind::up_out_call && state.s >= claim.barrier) return out;
    if (options.exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t p = 0; p < n; ++p) {
            out[p] = path_payoff(claim, model, spec, state, options.seed, p, options.barrier_steps);
        }
    } else {
        for (std::int64_t p = 0; p < n; ++p) {
            out[p] = path_payoff(claim, model, spec, state, options.seed, p, options.barrier_steps);
        }
    }
    return out;
}

McEstimate mc_price(const ClaimSpec& claim, const RegimeModel& model, const RateSpec& spec,
                    const MarketState& state, const McOptions& options) {
    return summarize(mc_payoffs(claim, model, spec, state, options));
}

}  // namespace agedep
