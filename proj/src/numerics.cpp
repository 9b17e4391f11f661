#include "agedep/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "agedep/errors.hpp"

namespace agedep::numerics {

GaussLegendre gauss_legendre(int n) {
    GaussLegendre gl;
    gl.nodes.resize(n);
    gl.weights.resize(n);
    const int half = (n + 1) / 2;
    for (int i = 0; i < half; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            double p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if (n == 1) {
                p0 = 1.0;
                p1 = x;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        gl.nodes[i] = -x;
        gl.nodes[n - 1 - i] = x;
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        gl.weights[i] = w;
        gl.weights[n - 1 - i] = w;
    }
    return gl;
}

namespace {

struct Simpson {
    const std::function<double(double)>& f;
    double tol_floor;
    bool ok = true;
    double err = 0.0;

    double recurse(double a, double b, double fa, double fm, double fb, double whole,
                   double tol, int depth) {
        const double m = 0.5 * (a + b);
        const double lm = 0.5 * (a + m);
        const double rm = 0.5 * (m + b);
        const double flm = f(lm);
        const double frm = f(rm);
        const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        const double delta = left + right - whole;
        if (std::abs(delta) <= 15.0 * tol) {
            err += std::abs(delta) / 15.0;
            return left + right + delta / 15.0;
        }
        if (depth <= 0) {
            ok = false;
            err += std::abs(delta) / 15.0;
            return left + right + delta / 15.0;
        }
        const double half_tol = std::max(0.5 * tol, tol_floor);
        return recurse(a, m, fa, flm, fm, left, half_tol, depth - 1) +
               recurse(m, b, fm, frm, fb, right, half_tol, depth - 1);
    }
};

}  // namespace

AdaptiveResult adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                                double abs_tol, int max_depth) {
    AdaptiveResult res;
    if (b <= a) return res;
    // Seed with a few panels so narrow features are not missed by the first estimate.
    constexpr int panels = 8;
    Simpson s{f, 1e-300};
    const double h = (b - a) / panels;
    double total = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double lo = a + p * h;
        const double hi = (p + 1 == panels) ? b : lo + h;
        const double flo = f(lo);
        const double fhi = f(hi);
        const double fmid = f(0.5 * (lo + hi));
        const double whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        total += s.recurse(lo, hi, flo, fmid, fhi, whole, abs_tol / panels, max_depth);
    }
    res.value = total;
    res.error_estimate = s.err;
    res.converged = s.ok;
    return res;
}

double integrate(const std::function<double(double)>& f, double a, double b, double abs_tol,
                 int max_depth) {
    const auto r = adaptive_simpson(f, a, b, abs_tol, max_depth);
    if (!r.converged) {
        std::ostringstream os;
        os << "adaptive quadrature on [" << a << ", " << b << "] did not reach tolerance "
           << abs_tol << " (residual estimate " << r.error_estimate << ")";
        throw NumericError(os.str(), r.error_estimate);
    }
    return r.value;
}

double monotone_root(const std::function<double(double)>& g,
                     const std::function<double(double)>& dg, double lo, double hi,
                     double rel_tol, int max_iter) {
    double glo = g(lo);
    double ghi = g(hi);
    if (glo > 0.0 || ghi < 0.0) {
        throw NumericError("monotone_root: root not bracketed", std::min(std::abs(glo), std::abs(ghi)));
    }
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < max_iter; ++it) {
        const double gx = g(x);
        if (gx == 0.0) return x;
        if (gx < 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        if (hi - lo <= rel_tol * std::max(1.0, std::abs(hi))) return 0.5 * (lo + hi);
        const double d = dg(x);
        double next = (d > 0.0) ? x - gx / d : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - x) <= rel_tol * std::max(1.0, std::abs(x))) return next;
        // Newton can stall on one side; fall back to bisection when the step is tiny
        // relative to the bracket.
        if (std::abs(next - x) < 1e-3 * (hi - lo) && it % 4 == 3) next = 0.5 * (lo + hi);
        x = next;
    }
    throw NumericError("monotone_root: no convergence", hi - lo);
}

}  // namespace agedep::numerics
