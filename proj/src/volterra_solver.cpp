#include "agedep/volterra_solver.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

#include "agedep/bsm.hpp"
#include "agedep/errors.hpp"
#include "agedep/numerics.hpp"

namespace agedep {

double GridSpec::log_s(int m) const {
    const double lo = std::log(s_min);
    const double hi = std::log(s_max);
    return n_logs > 1 ? lo + (hi - lo) * m / (n_logs - 1) : lo;
}

void GridSpec::validate() const {
    std::vector<std::string> issues;
    if (!(maturity > 0.0)) issues.push_back("grid.maturity must be positive");
    if (n_t < 2) issues.push_back("grid.n_t must be >= 2");
    if (n_logs < 3) issues.push_back("grid.n_logs must be >= 3");
    if (n_y < 2) issues.push_back("grid.n_y must be >= 2");
    if (n_x < 2) issues.push_back("grid.n_x must be >= 2");
    if (!(s_min > 0.0)) issues.push_back("grid.s_min must be positive");
    if (!(s_max > s_min)) issues.push_back("grid.s_max must exceed grid.s_min");
    if (!(trunc_sd > 0.0)) issues.push_back("grid.trunc_sd must be positive");
    if (y_max < 0.0) issues.push_back("grid.y_max must be non-negative");
    if (!issues.empty()) throw ValidationError(std::move(issues));
}

namespace {

enum class Ext { linear, zero };

struct LineExt {
    Ext lo = Ext::linear;
    Ext hi = Ext::linear;
};

LineExt extension_for(const SolverClaim& claim) {
    switch (claim.kind) {
        case SolverClaim::Kind::up_out_call: return {Ext::linear, Ext::zero};
        case SolverClaim::Kind::down_out_call: return {Ext::zero, Ext::linear};
        case SolverClaim::Kind::vanilla: break;
    }
    return {};
}

// Value of a log-price line at virtual node m, extended outside [0, M) linearly in s.
double virtual_node(const double* line, int M, double x0, double h, long m, LineExt ext) {
    if (m >= 0 && m < M) return line[m];
    if (m < 0) {
        if (ext.lo == Ext::zero) return 0.0;
        const double s0 = std::exp(x0);
        const double s1 = std::exp(x0 + h);
        const double s = std::exp(x0 + h * static_cast<double>(m));
        return std::max(0.0, line[0] + (s - s0) * (line[1] - line[0]) / (s1 - s0));
    }
    if (ext.hi == Ext::zero) return 0.0;
    const double sa = std::exp(x0 + h * (M - 2));
    const double sb = std::exp(x0 + h * (M - 1));
    const double s = std::exp(x0 + h * static_cast<double>(m));
    return std::max(0.0, line[M - 1] + (s - sb) * (line[M - 1] - line[M - 2]) / (sb - sa));
}

double line_interp(const double* line, int M, double x0, double h, double logs, LineExt ext) {
    const double pos = (logs - x0) / h;
    const double fl = std::floor(pos);
    const long m0 = static_cast<long>(fl);
    const double fr = pos - fl;
    const double a = virtual_node(line, M, x0, h, m0, ext);
    if (fr == 0.0) return a;
    return (1.0 - fr) * a + fr * virtual_node(line, M, x0, h, m0 + 1, ext);
}

// Exact integrals of the linear-interpolation basis against a Gaussian.
//
// With c ~ N(mu, sigma^2) in grid units, tap d is E[hat(c - d)] and the score tap is
// E[hat(c - d) (c - mu)] / sigma^2, where hat(x) = max(0, 1 - |x|). Summing taps
// against node values integrates the piecewise-linear interpolant exactly.
struct HatWeights {
    long lo = 0;
    std::vector<double> tap;
    std::vector<double> score;
};

HatWeights hat_weights(double mu, double sigma, double trunc, bool with_score) {
    using numerics::normal_cdf;
    using numerics::normal_pdf;
    HatWeights out;
    out.lo = static_cast<long>(std::floor(mu - trunc * sigma)) - 1;
    const long hi = static_cast<long>(std::ceil(mu + trunc * sigma)) + 1;
    const std::size_t n = static_cast<std::size_t>(hi - out.lo + 1);
    out.tap.assign(n, 0.0);
    if (with_score) out.score.assign(n, 0.0);
    // Moments of (c - mu) over the cell [e, e + 1], accumulated per cell.
    for (long e = out.lo - 1; e <= hi; ++e) {
        const double a = (static_cast<double>(e) - mu) / sigma;
        const double b = (static_cast<double>(e + 1) - mu) / sigma;
        const double pa = normal_pdf(a), pb = normal_pdf(b);
        const double P = a > 0.0 ? normal_cdf(-a) - normal_cdf(-b) : normal_cdf(b) - normal_cdf(a);
        if (P == 0.0 && pa == 0.0 && pb == 0.0) continue;
        const double M1 = sigma * (pa - pb);
        const double M2 = sigma * sigma * (P + a * pa - b * pb);
        const double left = mu - static_cast<double>(e);  // c - e = (c - mu) + left
        // Rising part of hat(c - (e + 1)) is c - e; falling part of hat(c - e) is e + 1 - c.
        const double rise = M1 + left * P;
        const double fall = P - rise;
        const long up = e + 1 - out.lo;
        const long dn = e - out.lo;
        if (up >= 0 && up < static_cast<long>(n)) out.tap[up] += rise;
        if (dn >= 0 && dn < static_cast<long>(n)) out.tap[dn] += fall;
        if (with_score) {
            const double rise_s = (M2 + left * M1) / (sigma * sigma);
            const double fall_s = M1 / (sigma * sigma) - rise_s;
            if (up >= 0 && up < static_cast<long>(n)) out.score[up] += rise_s;
            if (dn >= 0 && dn < static_cast<long>(n)) out.score[dn] += fall_s;
        }
    }
    return out;
}

// Moves mass between the two taps around mu so that the taps reproduce
// E[exp(h c)] exactly. Functions linear in s then pass through the operator without
// interpolation error, which keeps put-call parity exact on the grid.
void match_exp_moment(HatWeights& hw, double mu, double sigma, double h) {
    const long base = static_cast<long>(std::floor(mu));
    const long d0 = base - hw.lo;
    if (d0 < 0 || d0 + 1 >= static_cast<long>(hw.tap.size())) return;
    double current = 0.0;
    for (std::size_t d = 0; d < hw.tap.size(); ++d) {
        current += hw.tap[d] * std::exp(h * (static_cast<double>(hw.lo + static_cast<long>(d)) - mu));
    }
    double mass = 0.0;
    for (double w : hw.tap) mass += w;
    const double target = mass * std::exp(0.5 * h * h * sigma * sigma);
    const double e0 = std::exp(h * (static_cast<double>(base) - mu));
    const double eps = (target - current) / (e0 * std::expm1(h));
    if (hw.tap[d0] - eps < 0.0 || hw.tap[d0 + 1] + eps < 0.0) return;
    hw.tap[d0] -= eps;
    hw.tap[d0 + 1] += eps;
}

double claim_payoff(const SolverClaim& claim, double s) {
    switch (claim.kind) {
        case SolverClaim::Kind::up_out_call: return s < claim.barrier ? claim.payoff(s) : 0.0;
        case SolverClaim::Kind::down_out_call: return s > claim.barrier ? claim.payoff(s) : 0.0;
        case SolverClaim::Kind::vanilla: break;
    }
    return claim.payoff(s);
}

bool knocked(const SolverClaim& claim, double s) {
    if (claim.kind == SolverClaim::Kind::up_out_call) return s >= claim.barrier;
    if (claim.kind == SolverClaim::Kind::down_out_call) return s <= claim.barrier;
    return false;
}

// Single-regime price of the claim (no switching) at (t, s).
double claim_rho(const RegimeModel& model, const SolverClaim& claim, int i, double t, double s, double T) {
    if (t >= T) return claim_payoff(claim, s);
    switch (claim.kind) {
        case SolverClaim::Kind::up_out_call:
            return barrier_up_out_call_closed(model, i, t, s, claim.payoff.strike, claim.barrier, T);
        case SolverClaim::Kind::down_out_call:
            return barrier_down_out_call_closed(model, i, t, s, claim.payoff.strike, claim.barrier, T);
        case SolverClaim::Kind::vanilla: break;
    }
    return bsm_rho(model, i, t, s, T, claim.payoff);
}

double claim_rho_delta(const RegimeModel& model, const SolverClaim& claim, int i, double t, double s, double T) {
    if (claim.kind == SolverClaim::Kind::vanilla && t < T) return bsm_delta(model, i, t, s, T, claim.payoff);
    const double e = 1e-5 * s;
    return (claim_rho(model, claim, i, t, s + e, T) - claim_rho(model, claim, i, t, s - e, T)) / (2.0 * e);
}

// Probability that the log-price path from ln s to ln s + w stays on the live side of
// the barrier, given total variance var.
double bridge_factor(const SolverClaim& claim, double logs, double w, double var) {
    const double lb = std::log(claim.barrier);
    double ds = 0.0;
    double dx = 0.0;
    if (claim.kind == SolverClaim::Kind::up_out_call) {
        ds = lb - logs;
        dx = ds - w;
    } else {
        ds = logs - lb;
        dx = ds + w;
    }
    if (ds <= 0.0 || dx <= 0.0) return 0.0;
    return -std::expm1(-2.0 * ds * dx / var);
}

double survival_factor(const RegimeModel& model, const SolverClaim& claim, int i, double s, double v) {
    if (claim.kind == SolverClaim::Kind::up_out_call) {
        return s < claim.barrier ? survival_prob_up(model, i, s, claim.barrier, v) : 0.0;
    }
    return s > claim.barrier ? survival_prob_down(model, i, s, claim.barrier, v) : 0.0;
}

// e^{-r v} times the integral of the hat basis function at v (support
// [v - left, v + right]) against f(y + w | i) / (1 - F(y | i)). Exact density weights
// keep the holding-time mass consistent where f moves fast near w = 0; discounting
// at the node keeps claims linear in s exact.
double hat_density_weight(const RateSpec& spec, double r, int i, double y, double v, double left, double right) {
    static const numerics::GaussLegendre gl = numerics::gauss_legendre(8);
    auto g = [&](double w) { return spec.conditional_density(i, y, w); };
    double acc = 0.0;
    for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
        const double x = 0.5 * (gl.nodes[q] + 1.0);  // in (0, 1), distance from v in units of the half-width
        const double w = 0.5 * gl.weights[q] * (1.0 - x);
        if (left > 0.0) acc += left * w * g(v - left * x);
        if (right > 0.0) acc += right * w * g(v + right * x);
    }
    return std::exp(-r * v) * acc;
}

// Hat weights on a uniform lag grid: right[i][a][lag] and left[i][a][lag] halves.
struct LagWeights {
    int A = 0;
    int N = 0;
    std::vector<double> right;
    std::vector<double> left;

    double at(int i, int a, int n, int l) const {
        const std::size_t idx = (static_cast<std::size_t>(i) * A + a) * N + (l - n);
        return (l < N - 1 ? right[idx] : 0.0) + left[idx];
    }
};

LagWeights lag_weights(const RateSpec& spec, const std::vector<double>& r, int A, int N, double dt,
                       const std::function<double(int)>& age) {
    const int k = spec.states();
    LagWeights lw{A, N, std::vector<double>(static_cast<std::size_t>(k) * A * N),
                  std::vector<double>(static_cast<std::size_t>(k) * A * N)};
    for (int i = 0; i < k; ++i)
        for (int a = 0; a < A; ++a)
            for (int lag = 0; lag < N; ++lag) {
                const std::size_t idx = (static_cast<std::size_t>(i) * A + a) * N + lag;
                const double y = age(a);
                lw.right[idx] = hat_density_weight(spec, r[i], i, y, lag * dt, 0.0, dt);
                lw.left[idx] = lag > 0 ? hat_density_weight(spec, r[i], i, y, lag * dt, dt, 0.0) : 0.0;
            }
    return lw;
}

}  // namespace

struct VolterraOperator::Impl {
    Impl(const RegimeModel& m, const RateSpec& r, SolverClaim c, const GridSpec& grid, BarrierKernel kern)
        : model(m), spec(r), claim(std::move(c)), g(grid), kernel(kern) {}

    RegimeModel model;
    RateSpec spec;
    SolverClaim claim;
    GridSpec g;
    BarrierKernel kernel;
    LineExt ext{};

    int k = 0;
    int N = 0;
    int M = 0;
    int A = 0;
    double dt = 0.0;
    double h = 0.0;
    double x0 = 0.0;
    bool time_dep = false;

    std::vector<double> z;   // standard-score nodes
    std::vector<double> wz;  // GL weight times normal density

    // Per-stencil data; a stencil is identified by (i, lag) or (i, n, l).
    struct Stencil {
        double mean = 0.0;  // int (r - sigma^2/2)
        double var = 0.0;
        std::vector<int> off;      // floor of the fractional offset, per GL node
        std::vector<double> frac;  // fractional part, per GL node
        int tap_lo = 0;            // dense tap form: I(m) = sum_d taps[d] * line[m + tap_lo + d]
        std::vector<double> taps;
        double bridge_a = 0.0;     // 2 h^2 / var; nonzero when taps carry the bridge factor
        std::vector<double> factor;  // survival kernel: knock-out survival per start node
    };
    std::vector<Stencil> stencils;
    int pad = 0;

    std::vector<double> rho;       // [n][i][m]
    std::vector<double> sr;        // [i][a][n]: survival ratio over T - t_n from age y_a
    LagWeights vw;                 // hat integrals of e^{-r v} f(y_a + v) / (1 - F(y_a))
    std::vector<double> pj;        // [i][j][a][lag]: p_ij(y_a + v)

    int stencil_id(int i, int n, int l) const {
        return time_dep ? (i * N + n) * N + l : i * N + (l - n);
    }
    std::size_t ext_len() const { return static_cast<std::size_t>(M + 2 * pad); }

    void build();
    void build_stencil(Stencil& st, int i, double t, double v);
    std::vector<double> extended(const std::vector<double>& u) const;
    double convolve(const Stencil& st, const double* line, int m) const;
    std::vector<double> apply_fast(const std::vector<double>& u) const;
    std::vector<double> apply_reference(const std::vector<double>& u) const;
    double inner_reference(const std::vector<double>& u, int n, int l, int i, int j, int m) const;
};

void VolterraOperator::Impl::build_stencil(Stencil& st, int i, double t, double v) {
    st.var = integrated_var(model.vol, i, t, t + v);
    st.mean = model.r[i] * v - 0.5 * st.var;
    const double sd = std::sqrt(st.var);
    if (!claim.is_barrier() || kernel == BarrierKernel::bridge) {
        auto hw = hat_weights(st.mean / h, sd / h, g.trunc_sd, false);
        match_exp_moment(hw, st.mean / h, sd / h, h);
        st.tap_lo = static_cast<int>(hw.lo);
        st.taps = std::move(hw.tap);
        if (claim.is_barrier()) st.bridge_a = 2.0 * h * h / st.var;
        pad = std::max(pad, std::max(-st.tap_lo, st.tap_lo + static_cast<int>(st.taps.size())) + 1);
        return;
    }
    const int nx = g.n_x;
    st.off.resize(nx);
    st.frac.resize(nx);
    int lo = std::numeric_limits<int>::max();
    int hi = std::numeric_limits<int>::min();
    for (int q = 0; q < nx; ++q) {
        const double c = (st.mean + sd * z[q]) / h;
        const double fl = std::floor(c);
        st.off[q] = static_cast<int>(fl);
        st.frac[q] = c - fl;
        lo = std::min(lo, st.off[q]);
        hi = std::max(hi, st.off[q] + 1);
    }
    pad = std::max(pad, std::max(-lo, hi) + 1);
    st.factor.resize(M);
    for (int m = 0; m < M; ++m) st.factor[m] = survival_factor(model, claim, i, std::exp(g.log_s(m)), v);
}

void VolterraOperator::Impl::build() {
    k = spec.states();
    N = g.n_t;
    M = g.n_logs;
    A = g.n_y;
    dt = g.dt();
    x0 = std::log(g.s_min);
    h = (std::log(g.s_max) - x0) / (M - 1);
    time_dep = !model.vol.is_constant();
    ext = extension_for(claim);

    const auto gl = numerics::gauss_legendre(g.n_x);
    z.resize(g.n_x);
    wz.resize(g.n_x);
    for (int q = 0; q < g.n_x; ++q) {
        z[q] = g.trunc_sd * gl.nodes[q];
        wz[q] = g.trunc_sd * gl.weights[q] * numerics::normal_pdf(z[q]);
    }

    pad = 1;
    if (time_dep) {
        stencils.resize(static_cast<std::size_t>(k) * N * N);
        for (int i = 0; i < k; ++i)
            for (int n = 0; n < N; ++n)
                for (int l = n + 1; l < N; ++l) build_stencil(stencils[stencil_id(i, n, l)], i, g.time(n), g.time(l) - g.time(n));
    } else {
        stencils.resize(static_cast<std::size_t>(k) * N);
        for (int i = 0; i < k; ++i)
            for (int lag = 1; lag < N; ++lag) build_stencil(stencils[stencil_id(i, 0, lag)], i, 0.0, lag * dt);
    }

    const double T = g.maturity;
    rho.resize(static_cast<std::size_t>(N) * k * M);
    for (int n = 0; n < N; ++n)
        for (int i = 0; i < k; ++i)
            for (int m = 0; m < M; ++m) {
                const double s = std::exp(g.log_s(m));
                rho[(static_cast<std::size_t>(n) * k + i) * M + m] =
                    knocked(claim, s) ? 0.0 : claim_rho(model, claim, i, g.time(n), s, T);
            }

    sr.resize(static_cast<std::size_t>(k) * A * N);
    vw = lag_weights(spec, model.r, A, N, dt, [this](int a) { return g.age(a); });
    pj.resize(static_cast<std::size_t>(k) * k * A * N);
    for (int i = 0; i < k; ++i)
        for (int a = 0; a < A; ++a) {
            const double y = g.age(a);
            for (int n = 0; n < N; ++n) {
                const std::size_t idx = (static_cast<std::size_t>(i) * A + a) * N + n;
                sr[idx] = spec.survival_ratio(i, y, T - g.time(n));
                const double v = n * dt;
                for (int j = 0; j < k; ++j) {
                    pj[((static_cast<std::size_t>(i) * k + j) * A + a) * N + n] = j == i ? 0.0 : spec.jump_prob(i, j, y + v);
                }
            }
        }
}

std::vector<double> VolterraOperator::Impl::extended(const std::vector<double>& u) const {
    const std::size_t L = ext_len();
    std::vector<double> out(static_cast<std::size_t>(N) * k * L);
    for (int n = 0; n < N; ++n)
        for (int j = 0; j < k; ++j) {
            const double* line = &u[(static_cast<std::size_t>(n) * k + j) * M];
            double* dst = &out[(static_cast<std::size_t>(n) * k + j) * L];
            for (int e = 0; e < static_cast<int>(L); ++e) dst[e] = virtual_node(line, M, x0, h, e - pad, ext);
        }
    return out;
}

double VolterraOperator::Impl::convolve(const Stencil& st, const double* line, int m) const {
    // `line` points at virtual node 0 of an extended array.
    if (!st.taps.empty()) {
        const double* p = line + m + st.tap_lo;
        const int T = static_cast<int>(st.taps.size());
        double acc = 0.0;
        if (st.bridge_a == 0.0) {
            for (int d = 0; d < T; ++d) acc += st.taps[d] * p[d];
            return acc;
        }
        // Non-crossing factor 1 - exp(-a K D) at each tap, with K and D the node
        // distances (in cells) of the start and the tap from the barrier. The
        // exponential is stepped away from the barrier so underflow only ever yields 1.
        if (claim.kind == SolverClaim::Kind::up_out_call) {
            const int K = M - 1 - m;
            const int d_hi = std::min(K - st.tap_lo, T - 1);
            if (d_hi < 0) return 0.0;
            const double step = std::exp(-st.bridge_a * K);
            double term = std::exp(-st.bridge_a * K * (K - st.tap_lo - d_hi));
            for (int d = d_hi; d >= 0; --d) {
                acc += st.taps[d] * (1.0 - term) * p[d];
                term *= step;
            }
        } else {
            const int K = m;
            const int d_lo = std::max(-K - st.tap_lo, 0);
            if (d_lo >= T) return 0.0;
            const double step = std::exp(-st.bridge_a * K);
            double term = std::exp(-st.bridge_a * K * (K + st.tap_lo + d_lo));
            for (int d = d_lo; d < T; ++d) {
                acc += st.taps[d] * (1.0 - term) * p[d];
                term *= step;
            }
        }
        return acc;
    }
    const int nx = g.n_x;
    double acc = 0.0;
    for (int q = 0; q < nx; ++q) {
        const double* p = line + m + st.off[q];
        acc += wz[q] * ((1.0 - st.frac[q]) * p[0] + st.frac[q] * p[1]);
    }
    return acc * st.factor[m];
}

std::vector<double> VolterraOperator::Impl::apply_fast(const std::vector<double>& u) const {
    const std::size_t L = ext_len();
    const std::vector<double> E = extended(u);
    std::vector<double> out(u.size());
    const long pairs = static_cast<long>(N) * k;

#pragma omp parallel
    {
        std::vector<double> comb(L);
        std::vector<double> acc(M);
#pragma omp for schedule(dynamic, 1)
        for (long p = 0; p < pairs; ++p) {
            const int n = static_cast<int>(p / k);
            const int i = static_cast<int>(p % k);
            const double* r0 = &rho[(static_cast<std::size_t>(n) * k + i) * M];
            const double s_ratio = sr[static_cast<std::size_t>(i) * A * N + n];
            for (int m = 0; m < M; ++m) acc[m] = s_ratio * r0[m];
            for (int l = n; l < N; ++l) {
                const int lag = l - n;
                const double c = vw.at(i, 0, n, l);
                if (c == 0.0) continue;
                std::fill(comb.begin(), comb.end(), 0.0);
                for (int j = 0; j < k; ++j) {
                    const double pij = pj[(static_cast<std::size_t>(i) * k + j) * A * N + lag];
                    if (pij == 0.0) continue;
                    const double* src = &E[(static_cast<std::size_t>(l) * k + j) * L];
                    for (std::size_t e = 0; e < L; ++e) comb[e] += pij * src[e];
                }
                const double* line = comb.data() + pad;
                if (lag == 0) {
                    for (int m = 0; m < M; ++m) acc[m] += c * line[m];
                } else {
                    const Stencil& st = stencils[stencil_id(i, n, l)];
                    for (int m = 0; m < M; ++m) acc[m] += c * convolve(st, line, m);
                }
            }
            double* dst = &out[(static_cast<std::size_t>(n) * k + i) * M];
            for (int m = 0; m < M; ++m) dst[m] = acc[m];
            if (claim.kind == SolverClaim::Kind::up_out_call) dst[M - 1] = 0.0;
            if (claim.kind == SolverClaim::Kind::down_out_call) dst[0] = 0.0;
        }
    }
    return out;
}

double VolterraOperator::Impl::inner_reference(const std::vector<double>& u, int n, int l, int i, int j,
                                               int m) const {
    const double* line = &u[(static_cast<std::size_t>(l) * k + j) * M];
    if (l == n) return line[m];
    const double t = g.time(n);
    const double v = g.time(l) - t;
    const double var = integrated_var(model.vol, i, t, t + v);
    const double mean = model.r[i] * v - 0.5 * var;
    const double sd = std::sqrt(var);
    const double logs = g.log_s(m);
    double acc = 0.0;
    if (!claim.is_barrier() || kernel == BarrierKernel::bridge) {
        auto hw = hat_weights(m + mean / h, sd / h, g.trunc_sd, false);
        match_exp_moment(hw, m + mean / h, sd / h, h);
        for (std::size_t d = 0; d < hw.tap.size(); ++d) {
            const long node = hw.lo + static_cast<long>(d);
            double w = hw.tap[d];
            if (claim.is_barrier()) w *= bridge_factor(claim, logs, static_cast<double>(node - m) * h, var);
            acc += w * virtual_node(line, M, x0, h, node, ext);
        }
        return acc;
    }
    for (int q = 0; q < g.n_x; ++q) {
        acc += wz[q] * line_interp(line, M, x0, h, logs + mean + sd * z[q], ext);
    }
    return acc * survival_factor(model, claim, i, std::exp(logs), v);
}

std::vector<double> VolterraOperator::Impl::apply_reference(const std::vector<double>& u) const {
    std::vector<double> out(u.size());
    const double T = g.maturity;
    for (int n = 0; n < N; ++n)
        for (int i = 0; i < k; ++i)
            for (int m = 0; m < M; ++m) {
                const double t = g.time(n);
                const double s = std::exp(g.log_s(m));
                if (knocked(claim, s)) {
                    out[(static_cast<std::size_t>(n) * k + i) * M + m] = 0.0;
                    continue;
                }
                double acc = spec.survival_ratio(i, 0.0, T - t) * claim_rho(model, claim, i, t, s, T);
                for (int l = n; l < N; ++l) {
                    const double v = g.time(l) - t;
                    const double c = hat_density_weight(spec, model.r[i], i, 0.0, v, l > n ? dt : 0.0,
                                                        l < N - 1 ? dt : 0.0);
                    double sum = 0.0;
                    for (int j = 0; j < k; ++j) {
                        if (j == i) continue;
                        const double pij = spec.jump_prob(i, j, v);
                        if (pij == 0.0) continue;
                        sum += pij * inner_reference(u, n, l, i, j, m);
                    }
                    acc += c * sum;
                }
                out[(static_cast<std::size_t>(n) * k + i) * M + m] = acc;
            }
    return out;
}

VolterraOperator::VolterraOperator(const RegimeModel& model, const RateSpec& spec, SolverClaim claim, GridSpec grid,
                                   BarrierKernel kernel)
    : impl_(std::make_unique<Impl>(model, spec, std::move(claim), grid, kernel)) {
    model.validate();
    grid.validate();
    if (model.states() != spec.states()) {
        throw ValidationError({"model has " + std::to_string(model.states()) + " regimes but rates have " +
                               std::to_string(spec.states())});
    }
    auto& c = impl_->claim;
    c.payoff.validate();
    if (c.is_barrier()) {
        if (!model.vol.is_constant()) {
            throw UnsupportedModelError("barrier equation requires constant volatility in every regime");
        }
        if (c.payoff.kind != PayoffSpec::Kind::call) throw std::invalid_argument("barrier claims are calls");
        if (!(c.barrier > 0.0)) throw ValidationError({"barrier must be positive"});
        const double edge = c.kind == SolverClaim::Kind::up_out_call ? grid.s_max : grid.s_min;
        if (std::abs(edge - c.barrier) > 1e-12 * c.barrier) {
            throw ValidationError({"log-price grid must end at the barrier (grid edge " + std::to_string(edge) +
                                   ", barrier " + std::to_string(c.barrier) + ")"});
        }
        if (c.kind == SolverClaim::Kind::up_out_call && !(c.payoff.strike < c.barrier)) {
            throw ValidationError({"up-and-out call needs strike below the barrier"});
        }
    }
    impl_->build();
}

VolterraOperator::~VolterraOperator() = default;
VolterraOperator::VolterraOperator(VolterraOperator&&) noexcept = default;
VolterraOperator& VolterraOperator::operator=(VolterraOperator&&) noexcept = default;

const GridSpec& VolterraOperator::grid() const noexcept { return impl_->g; }
const SolverClaim& VolterraOperator::claim() const noexcept { return impl_->claim; }
int VolterraOperator::states() const noexcept { return impl_->k; }
std::size_t VolterraOperator::slice_size() const noexcept {
    return static_cast<std::size_t>(impl_->N) * impl_->k * impl_->M;
}

std::vector<double> VolterraOperator::apply(const std::vector<double>& u, Exec exec) const {
    if (u.size() != slice_size()) throw std::invalid_argument("apply: slice has the wrong size");
    return exec == Exec::parallel ? impl_->apply_fast(u) : impl_->apply_reference(u);
}

std::vector<double> VolterraOperator::first_term() const {
    const auto& d = *impl_;
    std::vector<double> out(slice_size());
    for (int n = 0; n < d.N; ++n)
        for (int i = 0; i < d.k; ++i)
            for (int m = 0; m < d.M; ++m) {
                const std::size_t idx = (static_cast<std::size_t>(n) * d.k + i) * d.M + m;
                out[idx] = d.sr[static_cast<std::size_t>(i) * d.A * d.N + n] * d.rho[idx];
            }
    return out;
}

std::vector<double> VolterraOperator::extend_to_ages(const std::vector<double>& u, Exec exec) const {
    const auto& d = *impl_;
    if (u.size() != slice_size()) throw std::invalid_argument("extend_to_ages: slice has the wrong size");
    const std::size_t L = d.ext_len();
    const std::vector<double> E = d.extended(u);
    const int N = d.N, M = d.M, A = d.A, k = d.k;
    std::vector<double> out(static_cast<std::size_t>(N) * k * A * M);
    const long pairs = static_cast<long>(N) * k;

    auto work = [&](long p, std::vector<double>& inner, std::vector<double>& acc) {
        const int n = static_cast<int>(p / k);
        const int i = static_cast<int>(p % k);
        const double* r0 = &d.rho[(static_cast<std::size_t>(n) * k + i) * M];
        for (int a = 0; a < A; ++a) {
            const double s_ratio = d.sr[(static_cast<std::size_t>(i) * A + a) * N + n];
            for (int m = 0; m < M; ++m) acc[static_cast<std::size_t>(a) * M + m] = s_ratio * r0[m];
        }
        for (int l = n; l < N; ++l) {
            const int lag = l - n;
            for (int j = 0; j < k; ++j) {
                if (j == i) continue;
                const double* line = &E[(static_cast<std::size_t>(l) * k + j) * L] + d.pad;
                if (lag == 0) {
                    for (int m = 0; m < M; ++m) inner[m] = line[m];
                } else {
                    const auto& st = d.stencils[d.stencil_id(i, n, l)];
                    for (int m = 0; m < M; ++m) inner[m] = d.convolve(st, line, m);
                }
                for (int a = 0; a < A; ++a) {
                    const double c = d.vw.at(i, a, n, l) *
                                     d.pj[((static_cast<std::size_t>(i) * k + j) * A + a) * N + lag];
                    if (c == 0.0) continue;
                    double* dst = &acc[static_cast<std::size_t>(a) * M];
                    for (int m = 0; m < M; ++m) dst[m] += c * inner[m];
                }
            }
        }
        for (int a = 0; a < A; ++a) {
            double* dst = &out[((static_cast<std::size_t>(n) * k + i) * A + a) * M];
            std::copy_n(&acc[static_cast<std::size_t>(a) * M], M, dst);
            if (d.claim.kind == SolverClaim::Kind::up_out_call) dst[M - 1] = 0.0;
            if (d.claim.kind == SolverClaim::Kind::down_out_call) dst[0] = 0.0;
        }
    };

    if (exec == Exec::parallel) {
#pragma omp parallel
        {
            std::vector<double> inner(M), acc(static_cast<std::size_t>(A) * M);
#pragma omp for schedule(dynamic, 1)
            for (long p = 0; p < pairs; ++p) work(p, inner, acc);
        }
    } else {
        std::vector<double> inner(M), acc(static_cast<std::size_t>(A) * M);
        for (long p = 0; p < pairs; ++p) work(p, inner, acc);
    }
    return out;
}

double VolterraOperator::contraction_bound() const {
    double J = 0.0;
    for (int i = 0; i < impl_->k; ++i) J = std::max(J, impl_->spec.holding_cdf(i, impl_->g.maturity));
    return J;
}

int VolterraOperator::predicted_max_iter(double tol) const {
    const double J = contraction_bound();
    if (!(J > 0.0)) return 10;
    return static_cast<int>(std::ceil(std::log(tol) / std::log(J))) + 10;
}

double VolterraOperator::weighted_distance(const std::vector<double>& a, const std::vector<double>& b) const {
    const auto& d = *impl_;
    double worst = 0.0;
    for (std::size_t idx = 0; idx < a.size(); ++idx) {
        const int m = static_cast<int>(idx % d.M);
        const double s = std::exp(d.g.log_s(m));
        worst = std::max(worst, std::abs(a[idx] - b[idx]) / (1.0 + s));
    }
    return worst;
}

namespace {

struct DirectNode {
    double time;
    double v;
    double left;   // spacing to the previous node
    double right;  // spacing to the next node
};

// v-nodes for an off-grid start time: t itself, then every grid time after t.
std::vector<DirectNode> direct_nodes(const GridSpec& g, double t) {
    std::vector<double> times{t};
    for (int l = 0; l < g.n_t; ++l) {
        const double tl = g.time(l);
        if (tl > t + 1e-12 * g.maturity) times.push_back(tl);
    }
    std::vector<DirectNode> nodes(times.size());
    for (std::size_t q = 0; q < times.size(); ++q) {
        const double left = q > 0 ? times[q] - times[q - 1] : 0.0;
        const double right = q + 1 < times.size() ? times[q + 1] - times[q] : 0.0;
        nodes[q] = {times[q], times[q] - t, left, right};
    }
    return nodes;
}

int nearest_node(const GridSpec& g, double t) {
    return static_cast<int>(std::lround(t / g.dt()));
}

}  // namespace

double VolterraOperator::evaluate(const PriceSurface& surface, const MarketState& st) const {
    const auto& d = *impl_;
    const double T = d.g.maturity;
    if (st.regime < 0 || st.regime >= d.k) throw std::out_of_range("evaluate: regime out of range");
    if (!(st.s > 0.0) || st.age < 0.0 || st.t < 0.0) throw std::invalid_argument("evaluate: bad state");
    if (knocked(d.claim, st.s)) return 0.0;
    if (st.t >= T) return claim_payoff(d.claim, st.s);
    const int i = st.regime;
    const double logs = std::log(st.s);
    double acc = d.spec.survival_ratio(i, st.age, T - st.t) * claim_rho(d.model, d.claim, i, st.t, st.s, T);
    for (const auto& node : direct_nodes(d.g, st.t)) {
        const double c = hat_density_weight(d.spec, d.model.r[i], i, st.age, node.v, node.left, node.right);
        if (c == 0.0) continue;
        double sum = 0.0;
        const double var = node.v > 0.0 ? integrated_var(d.model.vol, i, st.t, node.time) : 0.0;
        const double mean = d.model.r[i] * node.v - 0.5 * var;
        const double sd = std::sqrt(var);
        for (int j = 0; j < d.k; ++j) {
            if (j == i) continue;
            const double pij = d.spec.jump_prob(i, j, st.age + node.v);
            if (pij == 0.0) continue;
            double inner = 0.0;
            if (node.v == 0.0) {
                inner = surface.zero_value(node.time, st.s, j);
            } else {
                const int l = nearest_node(d.g, node.time);
                const double* line = &surface.zero_slice[(static_cast<std::size_t>(l) * d.k + j) * d.M];
                if (!d.claim.is_barrier() || d.kernel == BarrierKernel::bridge) {
                    const double mu = (logs - d.x0 + mean) / d.h;
                    auto hw = hat_weights(mu, sd / d.h, d.g.trunc_sd, false);
                    match_exp_moment(hw, mu, sd / d.h, d.h);
                    for (std::size_t q = 0; q < hw.tap.size(); ++q) {
                        const long m = hw.lo + static_cast<long>(q);
                        double w = hw.tap[q];
                        if (d.claim.is_barrier()) {
                            w *= bridge_factor(d.claim, logs, d.x0 + static_cast<double>(m) * d.h - logs, var);
                        }
                        inner += w * virtual_node(line, d.M, d.x0, d.h, m, d.ext);
                    }
                } else {
                    for (int q = 0; q < d.g.n_x; ++q) {
                        inner += d.wz[q] * line_interp(line, d.M, d.x0, d.h, logs + mean + sd * d.z[q], d.ext);
                    }
                    inner *= survival_factor(d.model, d.claim, i, st.s, node.v);
                }
            }
            sum += pij * inner;
        }
        acc += c * sum;
    }
    return acc;
}

double VolterraOperator::evaluate_delta(const PriceSurface& surface, const MarketState& st) const {
    const auto& d = *impl_;
    const double T = d.g.maturity;
    if (d.claim.is_barrier()) {
        const double e = 1e-4 * st.s;
        MarketState up = st, dn = st;
        up.s += e;
        dn.s -= e;
        return (evaluate(surface, up) - evaluate(surface, dn)) / (2.0 * e);
    }
    if (st.t >= T) {
        const double e = 1e-6 * st.s;
        return (d.claim.payoff(st.s + e) - d.claim.payoff(st.s - e)) / (2.0 * e);
    }
    const int i = st.regime;
    const double logs = std::log(st.s);
    double acc = d.spec.survival_ratio(i, st.age, T - st.t) * claim_rho_delta(d.model, d.claim, i, st.t, st.s, T);
    for (const auto& node : direct_nodes(d.g, st.t)) {
        const double c = hat_density_weight(d.spec, d.model.r[i], i, st.age, node.v, node.left, node.right);
        if (c == 0.0) continue;
        const double var = node.v > 0.0 ? integrated_var(d.model.vol, i, st.t, node.time) : 0.0;
        const double mean = d.model.r[i] * node.v - 0.5 * var;
        const double sd = std::sqrt(var);
        double sum = 0.0;
        for (int j = 0; j < d.k; ++j) {
            if (j == i) continue;
            const double pij = d.spec.jump_prob(i, j, st.age + node.v);
            if (pij == 0.0) continue;
            double inner = 0.0;
            if (node.v == 0.0) {
                // Limit of the score integral: the s-derivative of u(t, ., j).
                const double e = 1e-4;
                inner = (surface.zero_value(node.time, st.s * std::exp(e), j) -
                         surface.zero_value(node.time, st.s * std::exp(-e), j)) /
                        (st.s * (std::exp(e) - std::exp(-e)));
            } else {
                const int l = nearest_node(d.g, node.time);
                const double* line = &surface.zero_slice[(static_cast<std::size_t>(l) * d.k + j) * d.M];
                const auto hw = hat_weights((logs - d.x0 + mean) / d.h, sd / d.h, d.g.trunc_sd, true);
                for (std::size_t q = 0; q < hw.score.size(); ++q) {
                    inner += hw.score[q] * virtual_node(line, d.M, d.x0, d.h, hw.lo + static_cast<long>(q), d.ext);
                }
                inner /= st.s * d.h;
            }
            sum += pij * inner;
        }
        acc += c * sum;
    }
    return acc;
}

double PriceSurface::zero_value(double t, double s, int j) const {
    const int N = grid.n_t;
    const int M = grid.n_logs;
    const double x0 = std::log(grid.s_min);
    const double h = (std::log(grid.s_max) - x0) / (M - 1);
    const LineExt ext = extension_for(claim);
    if (knocked(claim, s)) return 0.0;
    const double pos = std::clamp(t / grid.dt(), 0.0, static_cast<double>(N - 1));
    const int n0 = std::min(static_cast<int>(pos), N - 2);
    const double ft = pos - n0;
    const double logs = std::log(s);
    const double a = line_interp(&zero_slice[(static_cast<std::size_t>(n0) * states + j) * M], M, x0, h, logs, ext);
    if (ft == 0.0) return a;
    const double b =
        line_interp(&zero_slice[(static_cast<std::size_t>(n0 + 1) * states + j) * M], M, x0, h, logs, ext);
    return (1.0 - ft) * a + ft * b;
}

double PriceSurface::value(double t, double s, int i, double y) const {
    if (y <= 0.0) return zero_value(t, s, i);
    if (!has_full()) throw std::logic_error("PriceSurface::value: no full surface stored for y > 0");
    if (knocked(claim, s)) return 0.0;
    const int N = grid.n_t;
    const int M = grid.n_logs;
    const int A = grid.n_y;
    const double x0 = std::log(grid.s_min);
    const double h = (std::log(grid.s_max) - x0) / (M - 1);
    const LineExt ext = extension_for(claim);
    const double tp = std::clamp(t / grid.dt(), 0.0, static_cast<double>(N - 1));
    const int n0 = std::min(static_cast<int>(tp), N - 2);
    const double ft = tp - n0;
    const double ap = std::clamp(y / grid.age_max() * (A - 1), 0.0, static_cast<double>(A - 1));
    const int a0 = std::min(static_cast<int>(ap), A - 2);
    const double fa = ap - a0;
    const double logs = std::log(s);
    auto line = [&](int n, int a) {
        return line_interp(&full[((static_cast<std::size_t>(n) * states + i) * A + a) * M], M, x0, h, logs, ext);
    };
    const double v00 = line(n0, a0), v01 = line(n0, a0 + 1), v10 = line(n0 + 1, a0), v11 = line(n0 + 1, a0 + 1);
    return (1.0 - ft) * ((1.0 - fa) * v00 + fa * v01) + ft * ((1.0 - fa) * v10 + fa * v11);
}

PriceSurface solve(const VolterraOperator& op, const SolverOptions& options) {
    if (!(options.tol > 0.0)) throw std::invalid_argument("solve: tol must be positive");
    PriceSurface out;
    out.grid = op.grid();
    out.states = op.states();
    out.claim = op.claim();
    out.contraction_bound = op.contraction_bound();
    out.max_iter = options.max_iter.value_or(op.predicted_max_iter(options.tol));
    std::vector<double> u = op.first_term();
    while (true) {
        if (out.iterations >= out.max_iter) {
            throw ConvergenceError("fixed-point iteration did not reach tol " + std::to_string(options.tol) +
                                       " within " + std::to_string(out.max_iter) + " iterations",
                                   out.residual_history);
        }
        std::vector<double> next = op.apply(u, options.exec);
        const double d = op.weighted_distance(next, u);
        u = std::move(next);
        ++out.iterations;
        out.residual_history.push_back(d);
        if (!std::isfinite(d)) {
            throw ConvergenceError("fixed-point iteration produced non-finite values", out.residual_history);
        }
        if (d <= options.tol) break;
    }
    if (options.full_surface) {
        out.full = op.extend_to_ages(u, options.exec);
        const auto& g = out.grid;
        out.zero_slice.resize(u.size());
        for (int n = 0; n < g.n_t; ++n)
            for (int i = 0; i < out.states; ++i)
                for (int m = 0; m < g.n_logs; ++m) out.zero_ref(n, i, m) = out.full_at(n, i, 0, m);
    } else {
        out.zero_slice = std::move(u);
    }
    return out;
}

PriceSurface solve_vanilla(const RegimeModel& model, const RateSpec& spec, const PayoffSpec& payoff,
                           const GridSpec& grid, const SolverOptions& options) {
    return solve(VolterraOperator(model, spec, SolverClaim::vanilla(payoff), grid), options);
}

PriceSurface solve_barrier_uo(const RegimeModel& model, const RateSpec& spec, double strike, double barrier,
                              const GridSpec& grid, const SolverOptions& options) {
    return solve(VolterraOperator(model, spec, SolverClaim::up_out_call(strike, barrier), grid,
                                  options.barrier_kernel),
                 options);
}

PriceSurface solve_barrier_do(const RegimeModel& model, const RateSpec& spec, double strike, double barrier,
                              const GridSpec& grid, const SolverOptions& options) {
    return solve(VolterraOperator(model, spec, SolverClaim::down_out_call(strike, barrier), grid,
                                  options.barrier_kernel),
                 options);
}

// ---- zero-coupon bond ------------------------------------------------------

namespace {

struct ZcbTables {
    int k, N, A;
    double dt;
    std::vector<double> first;  // [n][i][a]
    LagWeights vw;
    std::vector<double> pj;     // [i][j][a][lag]
};

ZcbTables zcb_tables(const RegimeModel& model, const RateSpec& spec, const ZcbSurface& z) {
    ZcbTables t{z.states, z.n_t, z.n_y, z.dt(), {}, {}, {}};
    t.vw = lag_weights(spec, model.r, t.A, t.N, t.dt, [&z](int a) { return z.age(a); });
    const int k = t.k, N = t.N, A = t.A;
    t.first.resize(static_cast<std::size_t>(N) * k * A);
    t.pj.resize(static_cast<std::size_t>(k) * k * A * N);
    for (int i = 0; i < k; ++i)
        for (int a = 0; a < A; ++a) {
            const double y = z.age(a);
            for (int n = 0; n < N; ++n) {
                const double tau = z.maturity - n * t.dt;
                t.first[(static_cast<std::size_t>(n) * k + i) * A + a] =
                    spec.survival_ratio(i, y, tau) * std::exp(-model.r[i] * tau);
                const double v = n * t.dt;
                for (int j = 0; j < k; ++j)
                    t.pj[((static_cast<std::size_t>(i) * k + j) * A + a) * N + n] = j == i ? 0.0 : spec.jump_prob(i, j, y + v);
            }
        }
    return t;
}

// Applies the zero-coupon equation at every (n, i) for age node a.
double zcb_apply_at(const ZcbTables& t, const std::vector<double>& u, int n, int i, int a) {
    double acc = t.first[(static_cast<std::size_t>(n) * t.k + i) * t.A + a];
    for (int l = n; l < t.N; ++l) {
        const int lag = l - n;
        if (n == t.N - 1) break;
        double sum = 0.0;
        for (int j = 0; j < t.k; ++j) {
            if (j == i) continue;
            sum += t.pj[((static_cast<std::size_t>(i) * t.k + j) * t.A + a) * t.N + lag] *
                   u[static_cast<std::size_t>(l) * t.k + j];
        }
        acc += t.vw.at(i, a, n, l) * sum;
    }
    return acc;
}

}  // namespace

ZcbSurface solve_zcb(const RegimeModel& model, const RateSpec& spec, const GridSpec& grid,
                     const SolverOptions& options) {
    model.validate();
    grid.validate();
    if (model.states() != spec.states()) throw ValidationError({"model and rate spec disagree on regime count"});
    if (!(options.tol > 0.0)) throw std::invalid_argument("solve_zcb: tol must be positive");
    ZcbSurface z;
    z.maturity = grid.maturity;
    z.n_t = grid.n_t;
    z.n_y = grid.n_y;
    z.y_max = grid.age_max();
    z.states = spec.states();
    z.r = model.r;
    z.spec = std::make_shared<const RateSpec>(spec);
    const auto t = zcb_tables(model, spec, z);
    const int k = t.k, N = t.N, A = t.A;

    double J = 0.0;
    for (int i = 0; i < k; ++i) J = std::max(J, spec.holding_cdf(i, grid.maturity));
    z.max_iter = options.max_iter.value_or(
        J > 0.0 ? static_cast<int>(std::ceil(std::log(options.tol) / std::log(J))) + 10 : 10);

    std::vector<double> u(static_cast<std::size_t>(N) * k, 0.0);
    for (int n = 0; n < N; ++n)
        for (int i = 0; i < k; ++i) u[static_cast<std::size_t>(n) * k + i] = t.first[(static_cast<std::size_t>(n) * k + i) * A];
    while (true) {
        if (z.iterations >= z.max_iter) {
            throw ConvergenceError("zero-coupon iteration did not converge", z.residual_history);
        }
        std::vector<double> next(u.size());
        for (int n = 0; n < N; ++n)
            for (int i = 0; i < k; ++i) next[static_cast<std::size_t>(n) * k + i] = zcb_apply_at(t, u, n, i, 0);
        double d = 0.0;
        for (std::size_t q = 0; q < u.size(); ++q) d = std::max(d, std::abs(next[q] - u[q]));
        u = std::move(next);
        ++z.iterations;
        z.residual_history.push_back(d);
        if (d <= options.tol) break;
    }
    z.full.resize(static_cast<std::size_t>(N) * k * A);
    for (int n = 0; n < N; ++n)
        for (int i = 0; i < k; ++i)
            for (int a = 0; a < A; ++a) z.full[(static_cast<std::size_t>(n) * k + i) * A + a] = zcb_apply_at(t, u, n, i, a);
    z.zero_slice.resize(u.size());
    for (int n = 0; n < N; ++n)
        for (int i = 0; i < k; ++i) z.zero_slice[static_cast<std::size_t>(n) * k + i] = z.full_at(n, i, 0);
    return z;
}

double ZcbSurface::value(double t, int i, double y) const {
    const double tp = std::clamp(t / dt(), 0.0, static_cast<double>(n_t - 1));
    const int n0 = std::min(static_cast<int>(tp), n_t - 2);
    const double ft = tp - n0;
    const double ap = std::clamp(y / y_max * (n_y - 1), 0.0, static_cast<double>(n_y - 1));
    const int a0 = std::min(static_cast<int>(ap), n_y - 2);
    const double fa = ap - a0;
    return (1.0 - ft) * ((1.0 - fa) * full_at(n0, i, a0) + fa * full_at(n0, i, a0 + 1)) +
           ft * ((1.0 - fa) * full_at(n0 + 1, i, a0) + fa * full_at(n0 + 1, i, a0 + 1));
}

double ZcbSurface::evaluate(double t, int i, double y) const {
    if (t >= maturity) return 1.0;
    const RateSpec& sp = *spec;
    auto u_at = [&](double time, int j) {
        const double tp = std::clamp(time / dt(), 0.0, static_cast<double>(n_t - 1));
        const int n0 = std::min(static_cast<int>(tp), n_t - 2);
        const double ft = tp - n0;
        return (1.0 - ft) * zero_at(n0, j) + ft * zero_at(n0 + 1, j);
    };
    GridSpec g;
    g.maturity = maturity;
    g.n_t = n_t;
    double acc = sp.survival_ratio(i, y, maturity - t) * std::exp(-r[i] * (maturity - t));
    for (const auto& node : direct_nodes(g, t)) {
        double sum = 0.0;
        for (int j = 0; j < states; ++j) {
            if (j == i) continue;
            sum += sp.jump_prob(i, j, y + node.v) * u_at(node.time, j);
        }
        acc += hat_density_weight(sp, r[i], i, y, node.v, node.left, node.right) * sum;
    }
    return acc;
}

// ---- PDE residual ----------------------------------------------------------

PdeResidual pde_residual(const PriceSurface& surface, const RegimeModel& model, const RateSpec& spec,
                         const ResidualWindow& window) {
    if (!surface.has_full()) throw std::invalid_argument("pde_residual: full surface required");
    const auto& g = surface.grid;
    const int N = g.n_t, M = g.n_logs, A = g.n_y, k = surface.states;
    const double dt = g.dt();
    const double h = (std::log(g.s_max) - std::log(g.s_min)) / (M - 1);
    const double dy = g.age_max() / (A - 1);
    const int n_hi = std::min(N - 2, static_cast<int>(std::floor(window.t_hi * (N - 1))));
    const int m_lo = std::max(1, static_cast<int>(std::ceil(window.logs_lo * (M - 1))));
    const int m_hi = std::min(M - 2, static_cast<int>(std::floor(window.logs_hi * (M - 1))));
    const int a_lo = std::max(1, static_cast<int>(std::ceil(window.y_lo * (A - 1))));
    const int a_hi = std::min(A - 2, static_cast<int>(std::floor(window.y_hi * (A - 1))));
    PdeResidual out;
    double total = 0.0;
    for (int n = 1; n <= n_hi; ++n) {
        const double t = g.time(n);
        for (int i = 0; i < k; ++i) {
            const double sig = vol_at(model.vol, i, t);
            const double r = model.r[i];
            for (int a = a_lo; a <= a_hi; ++a) {
                const double y = g.age(a);
                for (int m = m_lo; m <= m_hi; ++m) {
                    const double p = surface.full_at(n, i, a, m);
                    const double pt = (surface.full_at(n + 1, i, a, m) - surface.full_at(n - 1, i, a, m)) / (2.0 * dt);
                    const double py = (surface.full_at(n, i, a + 1, m) - surface.full_at(n, i, a - 1, m)) / (2.0 * dy);
                    const double px = (surface.full_at(n, i, a, m + 1) - surface.full_at(n, i, a, m - 1)) / (2.0 * h);
                    const double pxx =
                        (surface.full_at(n, i, a, m + 1) - 2.0 * p + surface.full_at(n, i, a, m - 1)) / (h * h);
                    double jump = 0.0;
                    for (int j = 0; j < k; ++j) {
                        if (j == i) continue;
                        jump += spec.lambda_at(i, j, y) * (surface.zero_at(n, j, m) - p);
                    }
                    const double res = pt + py + (r - 0.5 * sig * sig) * px + 0.5 * sig * sig * pxx + jump - r * p;
                    out.field.push_back(std::abs(res));
                    out.sup = std::max(out.sup, std::abs(res));
                    total += std::abs(res);
                }
            }
        }
    }
    if (!out.field.empty()) out.mean = total / static_cast<double>(out.field.size());
    return out;
}

}  // namespace agedep
