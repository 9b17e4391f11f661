#include "agedep/bsm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "agedep/errors.hpp"
#include "agedep/numerics.hpp"

namespace agedep {

using numerics::normal_cdf;
using numerics::normal_pdf;

double log_kernel_L(const RegimeModel& model, double t, double x, double s, int i, double v) {
    if (!(x > 0.0 && s > 0.0 && v > 0.0)) throw std::invalid_argument("log_kernel_L: needs x, s, v > 0");
    const double var = integrated_var(model.vol, i, t, t + v);
    return (std::log(x / s) - (model.r[i] * v - 0.5 * var)) / std::sqrt(var);
}

double lognormal_alpha(const RegimeModel& model, double x, double t, double s, int i, double v) {
    if (x <= 0.0) return 0.0;
    const double var = integrated_var(model.vol, i, t, t + v);
    const double L = (std::log(x / s) - (model.r[i] * v - 0.5 * var)) / std::sqrt(var);
    return std::exp(-0.5 * L * L) / (std::sqrt(2.0 * std::numbers::pi) * x * std::sqrt(var));
}

double black_scholes_call(double s, double k, double r, double var, double tau) {
    const double df = std::exp(-r * tau);
    if (var <= 0.0) return std::max(s - k * df, 0.0);
    const double sd = std::sqrt(var);
    const double d1 = (std::log(s / k) + r * tau + 0.5 * var) / sd;
    const double d2 = d1 - sd;
    return s * normal_cdf(d1) - k * df * normal_cdf(d2);
}

double black_scholes_put(double s, double k, double r, double var, double tau) {
    const double df = std::exp(-r * tau);
    if (var <= 0.0) return std::max(k * df - s, 0.0);
    const double sd = std::sqrt(var);
    const double d1 = (std::log(s / k) + r * tau + 0.5 * var) / sd;
    const double d2 = d1 - sd;
    return k * df * normal_cdf(-d2) - s * normal_cdf(-d1);
}

namespace {

// E[g(S_T)] with ln S_T ~ N(m, sd^2), by adaptive Simpson in the standard score.
template <class G>
double lognormal_expectation(G&& g, double m, double sd) {
    return numerics::integrate([&](double z) { return g(std::exp(m + sd * z)) * normal_pdf(z); }, -8.0,
                               8.0, 1e-12);
}

}  // namespace

double bsm_rho(const RegimeModel& model, int i, double t, double s, double maturity,
               const PayoffSpec& payoff) {
    const double tau = maturity - t;
    if (tau < 0.0) throw std::invalid_argument("bsm_rho: t after maturity");
    if (tau == 0.0) return payoff(s);
    const double r = model.r[i];
    const double var = integrated_var(model.vol, i, t, maturity);
    switch (payoff.kind) {
        case PayoffSpec::Kind::call: return black_scholes_call(s, payoff.strike, r, var, tau);
        case PayoffSpec::Kind::put: return black_scholes_put(s, payoff.strike, r, var, tau);
        case PayoffSpec::Kind::constant: return payoff.level * std::exp(-r * tau);
        case PayoffSpec::Kind::tabulated: {
            const double m = std::log(s) + r * tau - 0.5 * var;
            return std::exp(-r * tau) * lognormal_expectation(payoff, m, std::sqrt(var));
        }
    }
    return 0.0;
}

double bsm_delta(const RegimeModel& model, int i, double t, double s, double maturity,
                 const PayoffSpec& payoff) {
    const double tau = maturity - t;
    if (tau < 0.0) throw std::invalid_argument("bsm_delta: t after maturity");
    const double r = model.r[i];
    const double var = integrated_var(model.vol, i, t, maturity);
    if (tau == 0.0 || var <= 0.0) {
        switch (payoff.kind) {
            case PayoffSpec::Kind::call: return s > payoff.strike ? 1.0 : 0.0;
            case PayoffSpec::Kind::put: return s < payoff.strike ? -1.0 : 0.0;
            case PayoffSpec::Kind::constant: return 0.0;
            case PayoffSpec::Kind::tabulated: {
                const double h = 1e-6 * std::max(s, 1e-8);
                return (payoff(s + h) - payoff(s - h)) / (2.0 * h);
            }
        }
    }
    const double sd = std::sqrt(var);
    switch (payoff.kind) {
        case PayoffSpec::Kind::call:
        case PayoffSpec::Kind::put: {
            const double d1 = (std::log(s / payoff.strike) + r * tau + 0.5 * var) / sd;
            return payoff.kind == PayoffSpec::Kind::call ? normal_cdf(d1) : normal_cdf(d1) - 1.0;
        }
        case PayoffSpec::Kind::constant: return 0.0;
        case PayoffSpec::Kind::tabulated: {
            // Score-function form: d/ds E[K(S_T)] = E[K(S_T) z] / (s sd).
            const double m = std::log(s) + r * tau - 0.5 * var;
            const double e = numerics::integrate(
                [&](double z) { return payoff(std::exp(m + sd * z)) * z * normal_pdf(z); }, -8.0, 8.0, 1e-12);
            return std::exp(-r * tau) * e / (s * sd);
        }
    }
    return 0.0;
}

namespace {

void require_constant_vol(const RegimeModel& model, const char* what) {
    if (!model.vol.is_constant()) {
        throw UnsupportedModelError(std::string(what) + ": requires a time-independent volatility");
    }
}

}  // namespace

double survival_prob_up(const RegimeModel& model, int i, double s, double b, double v) {
    require_constant_vol(model, "survival_prob_up");
    if (s >= b) return 0.0;
    if (v <= 0.0) return 1.0;
    const double sig = model.vol.sigma0[i];
    const double r = model.r[i];
    const double h = std::log(b / s);
    const double nu = r - 0.5 * sig * sig;
    const double sd = sig * std::sqrt(v);
    const double p = normal_cdf((h - nu * v) / sd) -
                     std::exp((2.0 * r / (sig * sig) - 1.0) * h) * normal_cdf((-h - nu * v) / sd);
    return std::clamp(p, 0.0, 1.0);
}

double survival_prob_down(const RegimeModel& model, int i, double s, double b, double v) {
    require_constant_vol(model, "survival_prob_down");
    if (s <= b) return 0.0;
    if (v <= 0.0) return 1.0;
    const double sig = model.vol.sigma0[i];
    const double r = model.r[i];
    const double h = std::log(b / s);  // negative
    const double nu = r - 0.5 * sig * sig;
    const double sd = sig * std::sqrt(v);
    const double p = normal_cdf((-h + nu * v) / sd) -
                     std::exp((2.0 * r / (sig * sig) - 1.0) * h) * normal_cdf((h + nu * v) / sd);
    return std::clamp(p, 0.0, 1.0);
}

// Both closed forms use the method of images: the killed log-price density is
// p(x) - e^{2 nu h / sigma^2} p(x - 2h), so the price is G(s) - (b/s)^{2nu/sigma^2} G(b^2/s)
// where G integrates the payoff over the allowed side of the barrier without killing.

double barrier_up_out_call_closed(const RegimeModel& model, int i, double t, double s, double k,
                                  double b, double maturity) {
    require_constant_vol(model, "barrier_up_out_call_closed");
    if (s >= b || k >= b) return 0.0;
    const double tau = maturity - t;
    if (tau <= 0.0) return std::max(s - k, 0.0);
    const double sig = model.vol.sigma0[i];
    const double r = model.r[i];
    const double var = sig * sig * tau;
    const double sd = std::sqrt(var);
    const double df = std::exp(-r * tau);
    // Value of (x - k) 1(k < x < b) at expiry; tail differences avoid cancellation
    // when x sits far above b.
    auto G = [&](double x) {
        const double d2k = (std::log(x / k) + r * tau - 0.5 * var) / sd;
        const double d2b = (std::log(x / b) + r * tau - 0.5 * var) / sd;
        const double pk = normal_cdf(-d2k - sd), pb = normal_cdf(-d2b - sd);
        const double qk = normal_cdf(-d2k), qb = normal_cdf(-d2b);
        return x * (pb - pk) - k * df * (qb - qk);
    };
    const double expo = 2.0 * r / (sig * sig) - 1.0;
    const double price = G(s) - std::pow(b / s, expo) * G(b * b / s);
    return std::max(price, 0.0);
}

double barrier_down_out_call_closed(const RegimeModel& model, int i, double t, double s, double k,
                                    double b, double maturity) {
    require_constant_vol(model, "barrier_down_out_call_closed");
    if (s <= b) return 0.0;
    const double tau = maturity - t;
    if (tau <= 0.0) return std::max(s - k, 0.0);
    const double sig = model.vol.sigma0[i];
    const double r = model.r[i];
    const double var = sig * sig * tau;
    const double sd = std::sqrt(var);
    const double df = std::exp(-r * tau);
    const double m = std::max(k, b);
    auto G = [&](double x) {
        const double d2m = (std::log(x / m) + r * tau - 0.5 * var) / sd;
        return black_scholes_call(x, m, r, var, tau) + (m - k) * df * normal_cdf(d2m);
    };
    const double expo = 2.0 * r / (sig * sig) - 1.0;
    const double price = G(s) - std::pow(b / s, expo) * G(b * b / s);
    return std::max(price, 0.0);
}

}  // namespace agedep
