#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "agedep/market.hpp"
#include "agedep/path_sim.hpp"
#include "agedep/rate_spec.hpp"

namespace agedep {

/// Discretisation of [0, T] x [ln s_min, ln s_max] x [0, y_max].
///
/// Time and age grids are uniform. The v-integral runs over the time nodes with
/// hat-function weights integrated exactly against the holding-time density, so
/// there is no separate v resolution. The x-integral is product integration of the
/// piecewise-linear log-price interpolant against the lognormal density over
/// +-trunc_sd standard deviations; the bridge kernel scales each weight by the
/// non-crossing probability at its node. The survival kernel uses an n_x-point
/// Gauss-Legendre rule in the standard normal score.
struct GridSpec {
    double maturity = 1.0;
    int n_t = 101;
    int n_logs = 201;
    double s_min = 0.2;
    double s_max = 5.0;
    int n_y = 21;
    /// Upper end of the age grid; defaults to the maturity when <= 0.
    double y_max = 0.0;
    int n_x = 64;
    double trunc_sd = 8.0;

    double dt() const noexcept { return maturity / (n_t - 1); }
    double age_max() const noexcept { return y_max > 0.0 ? y_max : maturity; }
    double time(int n) const noexcept { return dt() * n; }
    double log_s(int m) const;
    double age(int a) const noexcept { return n_y > 1 ? age_max() * a / (n_y - 1) : 0.0; }
    /// Throws ValidationError.
    void validate() const;
};

/// What the integral equation prices.
struct SolverClaim {
    enum class Kind { vanilla, up_out_call, down_out_call };

    Kind kind = Kind::vanilla;
    PayoffSpec payoff = PayoffSpec::call(1.0);
    /// Knock-out level; the grid must end (up) or start (down) exactly there.
    double barrier = 0.0;

    static SolverClaim vanilla(PayoffSpec p) { return {Kind::vanilla, std::move(p), 0.0}; }
    static SolverClaim up_out_call(double k, double b) { return {Kind::up_out_call, PayoffSpec::call(k), b}; }
    static SolverClaim down_out_call(double k, double b) { return {Kind::down_out_call, PayoffSpec::call(k), b}; }
    bool is_barrier() const noexcept { return kind != Kind::vanilla; }
};

/// How knock-out enters the transition term of the barrier equation.
///   bridge:   the lognormal density is multiplied by the Brownian-bridge
///             non-crossing probability given both endpoints (exact killed density).
///   survival: the transition term is multiplied by the unconditional survival
///             probability over the holding period and x is truncated at the barrier.
enum class BarrierKernel { bridge, survival };

struct SolverOptions {
    double tol = 1e-8;
    /// Defaults to ceil(ln tol / ln J_est) + 10.
    std::optional<int> max_iter;
    Exec exec = Exec::parallel;
    bool full_surface = true;
    BarrierKernel barrier_kernel = BarrierKernel::bridge;
};

/// Discretised price function phi(t, s, i, y).
///
/// Storage is row-major: zero slice [n][i][m], full surface [n][i][a][m].
/// Interpolation is linear in t, y and ln s. Outside the log-price range values are
/// extended linearly in s (clamped at zero), or set to zero beyond a knock-out level.
struct PriceSurface {
    GridSpec grid;
    int states = 0;
    SolverClaim claim;
    std::vector<double> zero_slice;
    std::vector<double> full;
    std::vector<double> residual_history;
    int iterations = 0;
    int max_iter = 0;
    double contraction_bound = 0.0;

    bool has_full() const noexcept { return !full.empty(); }
    double zero_at(int n, int i, int m) const {
        return zero_slice[(static_cast<std::size_t>(n) * states + i) * grid.n_logs + m];
    }
    double full_at(int n, int i, int a, int m) const {
        return full[((static_cast<std::size_t>(n) * states + i) * grid.n_y + a) * grid.n_logs + m];
    }
    double& zero_ref(int n, int i, int m) {
        return zero_slice[(static_cast<std::size_t>(n) * states + i) * grid.n_logs + m];
    }
    double& full_ref(int n, int i, int a, int m) {
        return full[((static_cast<std::size_t>(n) * states + i) * grid.n_y + a) * grid.n_logs + m];
    }

    /// u(t, s, j) = phi(t, s, j, 0) by interpolation of the zero slice.
    double zero_value(double t, double s, int j) const;
    /// phi(t, s, i, y) by interpolation of the full surface (y = 0 uses the zero slice).
    double value(double t, double s, int i, double y) const;
    double value(const MarketState& st) const { return value(st.t, st.s, st.regime, st.age); }
};

/// Regime-switching zero-coupon bond B(t, T, i, y), unit face.
struct ZcbSurface {
    double maturity = 1.0;
    int n_t = 0;
    int n_y = 0;
    double y_max = 0.0;
    int states = 0;
    /// [n][i] values at age zero and [n][i][a] on the age grid.
    std::vector<double> zero_slice;
    std::vector<double> full;
    std::vector<double> residual_history;
    int iterations = 0;
    int max_iter = 0;
    std::vector<double> r;
    std::shared_ptr<const RateSpec> spec;

    double dt() const noexcept { return maturity / (n_t - 1); }
    double age(int a) const noexcept { return n_y > 1 ? y_max * a / (n_y - 1) : 0.0; }
    double zero_at(int n, int i) const { return zero_slice[static_cast<std::size_t>(n) * states + i]; }
    double full_at(int n, int i, int a) const {
        return full[(static_cast<std::size_t>(n) * states + i) * n_y + a];
    }
    /// Grid interpolation (linear in t and y).
    double value(double t, int i, double y) const;
    /// Evaluates the integral equation at (t, i, y) from the converged zero slice;
    /// accurate at arbitrary off-grid points and ages.
    double evaluate(double t, int i, double y) const;
};

/// Precomputed discretisation of the integral operator A for one claim.
///
/// A u(t, s, i) = (1 - F(T-t|i)) rho_i(t, s)
///              + int_0^{T-t} e^{-r_i v} f(v|i) sum_{j != i} p_ij(v) E_i[u(t+v, S_{t+v}, j)] dv
///
/// with E_i the one-regime lognormal expectation (killed at the barrier for
/// knock-out claims). The fast path precomputes one log-price stencil per (regime,
/// lag) or, for time-dependent volatility, per (regime, time, lag).
class VolterraOperator {
public:
    VolterraOperator(const RegimeModel& model, const RateSpec& spec, SolverClaim claim, GridSpec grid,
                     BarrierKernel kernel = BarrierKernel::bridge);
    ~VolterraOperator();
    VolterraOperator(VolterraOperator&&) noexcept;
    VolterraOperator& operator=(VolterraOperator&&) noexcept;

    const GridSpec& grid() const noexcept;
    const SolverClaim& claim() const noexcept;
    int states() const noexcept;
    std::size_t slice_size() const noexcept;

    /// A applied to u, where u is a zero slice laid out [n][i][m].
    /// Exec::serial evaluates point by point without the precomputed stencils.
    std::vector<double> apply(const std::vector<double>& u, Exec exec) const;
    /// A 0 = (1 - F) rho.
    std::vector<double> first_term() const;
    /// phi at every (n, i, a, m) from the zero slice u, by one application of the
    /// general-age equation.
    std::vector<double> extend_to_ages(const std::vector<double>& u, Exec exec) const;

    /// max_i F(T|i).
    double contraction_bound() const;
    int predicted_max_iter(double tol) const;
    /// max |a - b| / (1 + s).
    double weighted_distance(const std::vector<double>& a, const std::vector<double>& b) const;

    /// Evaluates the equation at an arbitrary state from a zero slice, with the
    /// v-grid anchored at t and the slice interpolated in time.
    double evaluate(const PriceSurface& surface, const MarketState& state) const;
    /// d/ds of `evaluate`, through the score of the lognormal density.
    double evaluate_delta(const PriceSurface& surface, const MarketState& state) const;

    struct Impl;

private:
    std::unique_ptr<Impl> impl_;
};

/// Fixed-point iteration from u0 = A 0 to the weighted-norm tolerance. Throws
/// ConvergenceError (with the residual history) when max_iter is exhausted.
PriceSurface solve(const VolterraOperator& op, const SolverOptions& options = {});

PriceSurface solve_vanilla(const RegimeModel& model, const RateSpec& spec, const PayoffSpec& payoff,
                           const GridSpec& grid, const SolverOptions& options = {});

/// Up-and-out call; the log-price grid must end at b. Constant volatility only.
PriceSurface solve_barrier_uo(const RegimeModel& model, const RateSpec& spec, double strike, double barrier,
                              const GridSpec& grid, const SolverOptions& options = {});

/// Down-and-out call; the log-price grid must start at b. Constant volatility only.
PriceSurface solve_barrier_do(const RegimeModel& model, const RateSpec& spec, double strike, double barrier,
                              const GridSpec& grid, const SolverOptions& options = {});

/// Zero-coupon bond on the time/age part of `grid`.
ZcbSurface solve_zcb(const RegimeModel& model, const RateSpec& spec, const GridSpec& grid,
                     const SolverOptions& options = {});

/// Region of the full surface on which the PDE residual is reported, as fractions of
/// the respective grid ranges.
struct ResidualWindow {
    double t_hi = 0.75;
    double logs_lo = 0.25;
    double logs_hi = 0.75;
    double y_lo = 0.0;
    double y_hi = 1.0;
};

struct PdeResidual {
    /// |residual| at every evaluated node.
    std::vector<double> field;
    double sup = 0.0;
    double mean = 0.0;
};

/// phi_t + phi_y + (r - sigma^2/2) phi_x + sigma^2/2 phi_xx
///   + sum_{j != i} lambda_ij(y) (phi(t, s, j, 0) - phi) - r phi,   x = ln s,
/// by central differences at interior nodes inside `window`.
PdeResidual pde_residual(const PriceSurface& surface, const RegimeModel& model, const RateSpec& spec,
                         const ResidualWindow& window = {});

}  // namespace agedep
