#pragma once

#include <vector>

namespace agedep {

/// Per-state volatility sigma(t, i).
///
/// `constant`: sigma(t, i) = sigma0[i].
/// `monday`:   sigma(t, i) = sigma0[i] * (alpha + 4 (1 - alpha) (w^beta - 1/2)^2),
///             w = frac(t / period). With period = 1 the model clock is in weeks.
///             The profile peaks at the start of each week and bottoms out at
///             alpha * sigma0[i] when w = (1/2)^(1/beta).
struct VolProfile {
    enum class Kind { constant, monday };

    Kind kind = Kind::constant;
    std::vector<double> sigma0;
    double alpha = 0.5;
    double beta = 1.0;
    double period = 1.0;

    bool is_constant() const noexcept { return kind == Kind::constant; }
};

double vol_at(const VolProfile& profile, int i, double t);

/// int_t^u sigma(w, i)^2 dw. Exact for both kinds (the monday profile squared is a
/// sum of powers of the week fraction).
double integrated_var(const VolProfile& profile, int i, double t, double u);

/// Regime-dependent market parameters. r, mu, kappa are constant within a regime.
struct RegimeModel {
    std::vector<double> r;
    std::vector<double> mu;
    std::vector<double> kappa;
    VolProfile vol;

    int states() const noexcept { return static_cast<int>(r.size()); }
    /// Throws ValidationError listing every violated constraint.
    void validate() const;
};

/// Terminal payoff K(s). Every kind is non-negative with at most linear growth.
struct PayoffSpec {
    enum class Kind { call, put, constant, tabulated };

    Kind kind = Kind::call;
    double strike = 1.0;
    double level = 1.0;
    /// Tabulated nodes (strictly increasing) and values; linear between nodes and
    /// linear beyond the table using the end segments.
    std::vector<double> xs;
    std::vector<double> ys;

    static PayoffSpec call(double k) { return {Kind::call, k, 0.0, {}, {}}; }
    static PayoffSpec put(double k) { return {Kind::put, k, 0.0, {}, {}}; }
    static PayoffSpec constant(double c) { return {Kind::constant, 0.0, c, {}, {}}; }
    static PayoffSpec tabulated(std::vector<double> x, std::vector<double> y) {
        return {Kind::tabulated, 0.0, 0.0, std::move(x), std::move(y)};
    }

    double operator()(double s) const;
    /// Constants with K(s) <= k1 + k2 s for all s >= 0.
    std::pair<double, double> growth() const;
    void validate() const;
};

}  // namespace agedep
