#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "agedep/market.hpp"
#include "agedep/rate_spec.hpp"
#include "agedep/rng.hpp"

namespace agedep {

/// (t, s, i, y): calendar time, asset price, regime, age since the last switch.
struct MarketState {
    double t = 0.0;
    double s = 1.0;
    int regime = 0;
    double age = 0.0;
};

struct Transition {
    double time;
    int state;
    bool operator==(const Transition&) const = default;
};

struct AssetSample {
    double time;
    double price;
    bool operator==(const AssetSample&) const = default;
};

struct FirstPassage {
    double level = 0.0;
    bool upward = true;
    std::optional<double> hit_time;
    bool operator==(const FirstPassage&) const = default;
};

/// One simulated trajectory on [start, start + horizon].
///
/// Transition times are strictly increasing and every recorded transition
/// changes the state. The age grows linearly between transitions and is reset to
/// zero at each one.
struct PathRecord {
    int x0 = 0;
    double y0 = 0.0;
    double start = 0.0;
    double horizon = 0.0;
    std::vector<Transition> transitions;
    std::vector<AssetSample> asset_samples;
    std::optional<FirstPassage> first_passage;

    double end() const noexcept { return start + horizon; }
    int state_at(double t) const;
    /// Age at t (right-continuous: zero at a transition time).
    double age_at(double t) const;
    /// Age just before t.
    double age_before(double t) const;
    /// int_from^to rates[X_u] du.
    double integrated(const std::vector<double>& rates, double from, double to) const;

    bool operator==(const PathRecord&) const = default;
};

enum class ChainMethod { thinning, inversion };
enum class Measure { physical, risk_neutral };
enum class Exec { serial, parallel };

/// Residual holding time in state i given current age y0, by inversion of the
/// conditional survival function.
double sample_holding(const RateSpec& spec, int i, double y0, Rng& rng);

/// Regime path from (x0, y0) at `start` up to start + horizon.
///
/// thinning: candidate epochs from a rate-c Poisson stream with uniform marks on
/// [0, c); a mark in [sum_{j'<j} lambda_ij', sum_{j'<=j} lambda_ij') at the current
/// age moves the chain to j (destinations in increasing order, skipping i).
/// inversion: holding time by sample_holding, destination from p_ij at the exit age.
PathRecord simulate_chain(const RateSpec& spec, int x0, double y0, double horizon, Rng& rng,
                          ChainMethod method = ChainMethod::thinning, double start = 0.0);

/// Deterministic clock change eta with eta(0) = 0 and eta' > 0.
struct TimeChange {
    std::function<double(double)> eta;
    std::function<double(double)> derivative;
    /// Upper bound on eta' over the horizon; estimated by sampling when absent.
    std::optional<double> derivative_bound;

    static TimeChange identity();
};

/// Time-inhomogeneous variant: jump intensity eta'(t) lambda_ij(Y_{t-}). Uses the
/// same draws as simulate_chain(thinning) when eta is the identity.
PathRecord simulate_inhomogeneous(const RateSpec& spec, const TimeChange& eta, int x0, double y0,
                                  double horizon, Rng& rng, double start = 0.0);

/// Adds asset prices at start, at every transition, at the horizon and at each point
/// of a uniform monitoring grid with spacing `monitor_dt` (0 disables the grid).
/// Each segment is an exact lognormal step. When `barrier` is given, its first
/// passage is checked on the monitoring grid only.
void simulate_asset(PathRecord& path, const RegimeModel& model, double s0, Measure measure, Rng& rng,
                    double monitor_dt = 0.0, std::optional<FirstPassage> barrier = std::nullopt);

/// Claims priced by the Monte Carlo oracle.
struct ClaimSpec {
    enum class Kind { call, put, zcb, up_out_call, down_out_call, bond_model_1, bond_model_2, bond_model_3 };

    Kind kind = Kind::call;
    double strike = 1.0;
    /// Knock-out level for barrier calls, default threshold J for bond models 2 and 3.
    double barrier = 0.0;
    double maturity = 1.0;
    /// Recovery rate for bond model 3.
    double recovery = 0.0;
    /// Default-free discount B(t, T, i, y) used by bond model 3.
    std::function<double(double, int, double)> zcb;
};

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::int64_t n = 0;
};

struct McOptions {
    std::int64_t n_paths = 10000;
    std::uint64_t seed = 1;
    /// Monitoring points per unit time for path-dependent claims.
    int barrier_steps = 512;
    Exec exec = Exec::parallel;
};

/// Discounted risk-neutral payoff averaged over paths started at `state`.
McEstimate mc_price(const ClaimSpec& claim, const RegimeModel& model, const RateSpec& spec,
                    const MarketState& state, const McOptions& options);

/// Per-path discounted payoffs in path order (what mc_price averages).
std::vector<double> mc_payoffs(const ClaimSpec& claim, const RegimeModel& model, const RateSpec& spec,
                               const MarketState& state, const McOptions& options);

McEstimate summarize(const std::vector<double>& samples);

}  // namespace agedep
