#pragma once

#include <vector>

namespace agedep {

using Matrix = std::vector<std::vector<double>>;

/// Embedded jump chain of the age-dependent process: p~_ij = int p_ij(y) dF_i(y).
struct EmbeddedChain {
    Matrix p;
    bool irreducible = false;
};

/// Age-dependent transition rates from the polynomial family
///
///   lambda(y) = L1 + y L2 + ... + y^n L(n+1),    0 <= y <= y_cap,
///
/// frozen at lambda(y_cap) for older ages. States are 0-based here; user-facing
/// messages report them 1-based. Diagonal coefficients supplied by the caller are
/// ignored: lambda_ii(y) is always the negative off-diagonal row sum.
///
/// Construction validates that every off-diagonal rate is non-negative on
/// [0, y_cap] and that every row rate at the cap is positive, so the integrated
/// hazard diverges and holding times are finite. Immutable afterwards.
class RateSpec {
public:
    /// `coeff[p][i][j]` multiplies y^p. Throws ValidationError.
    RateSpec(std::vector<Matrix> coeff, double age_cap);

    int states() const noexcept { return k_; }
    int degree() const noexcept { return static_cast<int>(coeff_.size()) - 1; }
    double age_cap() const noexcept { return cap_; }
    const std::vector<Matrix>& coefficients() const noexcept { return coeff_; }

    /// sup_y sum_{j != i} lambda_ij(y) for one row, and the max over rows (c).
    double sup_row_rate(int i) const;
    double sup_row_rate() const noexcept { return c_; }

    /// lambda_ij(y); for i == j the negative row sum.
    double lambda_at(int i, int j, double y) const;
    /// -lambda_ii(y), the hazard of leaving i at age y.
    double row_rate(int i, double y) const;
    /// Lambda_i(y) = int_0^y row_rate(i, u) du, exact.
    double big_lambda(int i, double y) const;

    double holding_cdf(int i, double y) const;
    double holding_pdf(int i, double y) const;
    /// (1 - F(y + v | i)) / (1 - F(y | i)), stable for arbitrarily old ages.
    double survival_ratio(int i, double y, double v) const;
    /// f(y + v | i) / (1 - F(y | i)).
    double conditional_density(int i, double y, double v) const;

    /// p_ij(y), including the indicator branch when the row rate vanishes.
    double jump_prob(int i, int j, double y) const;

    /// Q_ij(y) = int_0^y exp(-Lambda_i(s)) lambda_ij(s) ds, i != j.
    double kernel(int i, int j, double y) const;

    /// Age by which exp(-Lambda_i) has fallen below 1e-12.
    double infinity_proxy(int i) const;

    EmbeddedChain embedded_matrix() const;

    /// Residual holding time u >= 0 solving Lambda_i(y0 + u) - Lambda_i(y0) = e.
    /// Closed form for degree <= 1, safeguarded Newton otherwise.
    double residual_holding_time(int i, double y0, double e) const;

private:
    void check_index(int i) const;
    double poly(int i, int j, double y) const;

    int k_ = 0;
    double cap_ = 0.0;
    double c_ = 0.0;
    std::vector<Matrix> coeff_;
    // Row-rate polynomial and its antiderivative, per state.
    std::vector<std::vector<double>> row_poly_;
    std::vector<std::vector<double>> row_anti_;
    std::vector<double> row_sup_;
    std::vector<double> cap_hazard_;
};

namespace detail {
/// Minimum and maximum of a polynomial (ascending coefficients) on [a, b]:
/// endpoints plus critical points found by sampling the derivative and bisecting
/// on sign changes.
std::pair<double, double> poly_range(const std::vector<double>& c, double a, double b);
double poly_eval(const std::vector<double>& c, double y);
}  // namespace detail

}  // namespace agedep
