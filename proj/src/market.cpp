#include "agedep/market.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "agedep/errors.hpp"

namespace agedep {

namespace {

void check_state(const VolProfile& p, int i) {
    if (i < 0 || i >= static_cast<int>(p.sigma0.size())) {
        throw std::out_of_range("volatility profile: state " + std::to_string(i) + " out of range");
    }
}

// int_0^w (alpha + 4(1-alpha)(x^beta - 1/2)^2)^2 dx, 0 <= w <= 1.
double monday_unit_integral(double alpha, double beta, double w) {
    if (w <= 0.0) return 0.0;
    const double a = alpha;
    const double c = 4.0 * (1.0 - alpha);
    // g = x^beta - 1/2;  g^2 = x^{2b} - x^b + 1/4
    // g^4 = x^{4b} - 2x^{3b} + 1.5x^{2b} - 0.5x^b + 1/16
    // (a + c g^2)^2 = a^2 + 2ac g^2 + c^2 g^4
    auto pw = [&](double m) { return std::pow(w, m * beta + 1.0) / (m * beta + 1.0); };
    const double g2 = pw(2) - pw(1) + 0.25 * w;
    const double g4 = pw(4) - 2.0 * pw(3) + 1.5 * pw(2) - 0.5 * pw(1) + w / 16.0;
    return a * a * w + 2.0 * a * c * g2 + c * c * g4;
}

double monday_cumulative(const VolProfile& p, double t) {
    const double x = t / p.period;
    const double whole = std::floor(x);
    const double frac = x - whole;
    const double per_period = monday_unit_integral(p.alpha, p.beta, 1.0);
    return p.period * (whole * per_period + monday_unit_integral(p.alpha, p.beta, frac));
}

}  // namespace

double vol_at(const VolProfile& profile, int i, double t) {
    check_state(profile, i);
    if (profile.is_constant()) return profile.sigma0[i];
    const double x = t / profile.period;
    const double w = x - std::floor(x);
    const double g = std::pow(w, profile.beta) - 0.5;
    return profile.sigma0[i] * (profile.alpha + 4.0 * (1.0 - profile.alpha) * g * g);
}

double integrated_var(const VolProfile& profile, int i, double t, double u) {
    check_state(profile, i);
    if (u <= t) return 0.0;
    const double s0 = profile.sigma0[i];
    if (profile.is_constant()) return s0 * s0 * (u - t);
    return s0 * s0 * (monday_cumulative(profile, u) - monday_cumulative(profile, t));
}

void RegimeModel::validate() const {
    std::vector<std::string> issues;
    const int k = states();
    if (k < 1) issues.push_back("model: at least one regime is required");
    if (static_cast<int>(mu.size()) != k) issues.push_back("model: mu must have one entry per regime");
    if (static_cast<int>(kappa.size()) != k) issues.push_back("model: kappa must have one entry per regime");
    if (static_cast<int>(vol.sigma0.size()) != k) issues.push_back("model: sigma0 must have one entry per regime");
    for (int i = 0; i < k; ++i) {
        if (!(r[i] > 0.0) || !std::isfinite(r[i])) {
            issues.push_back("model: r[" + std::to_string(i + 1) + "] must be positive");
        }
    }
    for (std::size_t i = 0; i < vol.sigma0.size(); ++i) {
        if (!(vol.sigma0[i] > 0.0) || !std::isfinite(vol.sigma0[i])) {
            issues.push_back("model: sigma0[" + std::to_string(i + 1) + "] must be positive");
        }
    }
    if (vol.kind == VolProfile::Kind::monday) {
        if (!(vol.alpha > 0.0 && vol.alpha < 1.0)) issues.push_back("model: monday alpha must lie in (0, 1)");
        if (!(vol.beta > 0.0)) issues.push_back("model: monday beta must be positive");
        if (!(vol.period > 0.0)) issues.push_back("model: monday period must be positive");
    }
    if (!issues.empty()) throw ValidationError(std::move(issues));
}

double PayoffSpec::operator()(double s) const {
    switch (kind) {
        case Kind::call: return std::max(s - strike, 0.0);
        case Kind::put: return std::max(strike - s, 0.0);
        case Kind::constant: return level;
        case Kind::tabulated: {
            const std::size_t n = xs.size();
            std::size_t a = 0;
            if (s <= xs.front()) {
                a = 0;
            } else if (s >= xs.back()) {
                a = n - 2;
            } else {
                a = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), s) - xs.begin()) - 1;
            }
            const double w = (s - xs[a]) / (xs[a + 1] - xs[a]);
            return std::max(0.0, ys[a] + w * (ys[a + 1] - ys[a]));
        }
    }
    return 0.0;
}

std::pair<double, double> PayoffSpec::growth() const {
    switch (kind) {
        case Kind::call: return {0.0, 1.0};
        case Kind::put: return {strike, 0.0};
        case Kind::constant: return {level, 0.0};
        case Kind::tabulated: {
            const std::size_t n = xs.size();
            const double slope = std::max(0.0, (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]));
            double k1 = 0.0;
            for (std::size_t a = 0; a < n; ++a) k1 = std::max(k1, ys[a] - slope * xs[a]);
            k1 = std::max(k1, (*this)(0.0));
            return {k1, slope};
        }
    }
    return {0.0, 0.0};
}

void PayoffSpec::validate() const {
    std::vector<std::string> issues;
    switch (kind) {
        case Kind::call:
        case Kind::put:
            if (!(strike > 0.0)) issues.push_back("payoff: strike must be positive");
            break;
        case Kind::constant:
            if (!(level >= 0.0)) issues.push_back("payoff: constant level must be non-negative");
            break;
        case Kind::tabulated: {
            if (xs.size() < 2 || xs.size() != ys.size()) {
                issues.push_back("payoff: tabulated payoff needs >= 2 nodes and matching values");
                break;
            }
            for (std::size_t a = 0; a < xs.size(); ++a) {
                if (!(ys[a] >= 0.0)) issues.push_back("payoff: tabulated values must be non-negative");
                if (a > 0 && !(xs[a] > xs[a - 1])) issues.push_back("payoff: tabulated nodes must increase");
                if (!(xs[a] >= 0.0)) issues.push_back("payoff: tabulated nodes must be non-negative");
            }
            if (!issues.empty()) break;
            const std::size_t n = xs.size();
            const double last_slope = (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]);
            if (last_slope < 0.0) {
                issues.push_back("payoff: decreasing last segment would extrapolate below zero");
            }
            const double first_slope = (ys[1] - ys[0]) / (xs[1] - xs[0]);
            if (ys[0] - first_slope * xs[0] < -1e-12) {
                issues.push_back("payoff: first segment would extrapolate below zero before s = 0");
            }
            break;
        }
    }
    if (!issues.empty()) throw ValidationError(std::move(issues));
}

}  // namespace agedep
