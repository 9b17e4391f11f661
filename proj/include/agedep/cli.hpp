#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "agedep/market.hpp"
#include "agedep/path_sim.hpp"
#include "agedep/rate_spec.hpp"
#include "agedep/volterra_solver.hpp"

namespace agedep::cli {

using Json = nlohmann::ordered_json;

/// Claim section of the model config. `kind` is one of call, put, up_out_call,
/// down_out_call, zcb, bond.
struct ClaimConfig {
    std::string kind = "call";
    double strike = 1.0;
    /// Knock-out level for barrier calls, default threshold J for bonds.
    double barrier = 0.0;
    double maturity = 1.0;
    double recovery = 0.0;
    int bond_model = 1;
};

struct RunConfig {
    double tol = 1e-8;
    std::int64_t n_paths = 10000;
    std::uint64_t seed = 1;
    double rebalance_dt = 0.01;
    int barrier_steps = 512;
    /// Added to 3 s.e. in crosscheck; defaults to 5e-3 for path-dependent claims.
    std::optional<double> bias_allowance;
    /// Iteration cap; defaults to the contraction-based estimate.
    std::optional<int> max_iter;
    BarrierKernel barrier_kernel = BarrierKernel::bridge;
    std::int64_t sim_paths = 100;
    std::int64_t hedge_paths = 2000;
    /// Extra (t, s, state, age) evaluations for `price`; state is 1-based.
    std::vector<MarketState> eval_points;
};

/// Parsed and typed config. The grid's maturity (and its barrier edge for
/// knock-out claims) is taken from the claim.
struct ModelConfig {
    std::vector<Matrix> rates;
    double age_cap = 0.0;
    RegimeModel model;
    ClaimConfig claim;
    MarketState state;
    GridSpec grid;
    RunConfig run;
};

Json load_json(const std::string& path);

/// Applies `a.b.c=value`. The value is read as JSON when it parses, otherwise as a
/// string. Numeric segments index into arrays.
void apply_override(Json& config, const std::string& assignment);

/// Throws ValidationError listing every unknown field, wrong type and bad value.
ModelConfig parse_config(const Json& config);

/// Full pre-flight: rate spec construction, model, grid and claim checks.
/// Throws ValidationError.
RateSpec validate_config(const ModelConfig& cfg);

std::string sha256_hex(const std::string& data);

/// Entry point shared by the executable and the tests. Returns the exit status:
/// 0 ok, 1 crosscheck mismatch or runtime error, 2 invalid input, 3 no convergence.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace agedep::cli
