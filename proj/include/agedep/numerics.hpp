#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace agedep::numerics {

inline double normal_pdf(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_cdf(double z) {
    return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussLegendre {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Nodes via Newton iteration on P_n; accurate to ~1e-15 for n up to a few hundred.
GaussLegendre gauss_legendre(int n);

struct AdaptiveResult {
    double value = 0.0;
    double error_estimate = 0.0;
    bool converged = true;
};

/// Adaptive Simpson on [a, b] with absolute tolerance. Subintervals that hit
/// max_depth are accepted and flagged through `converged`.
AdaptiveResult adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                                double abs_tol, int max_depth = 48);

/// Same as adaptive_simpson but throws NumericError when any subinterval fails.
double integrate(const std::function<double(double)>& f, double a, double b, double abs_tol,
                 int max_depth = 48);

/// Smallest root of a monotone non-decreasing g on [lo, hi] with g(lo) <= 0 <= g(hi),
/// by safeguarded Newton. `dg` may return 0.
double monotone_root(const std::function<double(double)>& g,
                     const std::function<double(double)>& dg, double lo, double hi,
                     double rel_tol = 1e-14, int max_iter = 200);

}  // namespace agedep::numerics
