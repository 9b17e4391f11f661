#include "agedep/rate_spec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "agedep/errors.hpp"
#include "agedep/numerics.hpp"

namespace agedep {

namespace detail {

double poly_eval(const std::vector<double>& c, double y) {
    double acc = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * y + *it;
    return acc;
}

std::pair<double, double> poly_range(const std::vector<double>& c, double a, double b) {
    double lo = std::min(poly_eval(c, a), poly_eval(c, b));
    double hi = std::max(poly_eval(c, a), poly_eval(c, b));
    if (c.size() <= 2) return {lo, hi};
    std::vector<double> d(c.size() - 1);
    for (std::size_t p = 1; p < c.size(); ++p) d[p - 1] = static_cast<double>(p) * c[p];
    constexpr int samples = 2048;
    double prev_y = a;
    double prev_d = poly_eval(d, a);
    for (int s = 1; s <= samples; ++s) {
        const double y = a + (b - a) * s / samples;
        const double dy = poly_eval(d, y);
        if (prev_d == 0.0 || (prev_d < 0.0) != (dy < 0.0)) {
            double l = prev_y;
            double r = y;
            double dl = prev_d;
            for (int it = 0; it < 200 && r - l > 1e-15 * std::max(1.0, std::abs(r)); ++it) {
                const double m = 0.5 * (l + r);
                const double dm = poly_eval(d, m);
                if ((dm < 0.0) == (dl < 0.0) && dm != 0.0) {
                    l = m;
                    dl = dm;
                } else {
                    r = m;
                }
            }
            const double v = poly_eval(c, 0.5 * (l + r));
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const double v = poly_eval(c, y);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        prev_y = y;
        prev_d = dy;
    }
    return {lo, hi};
}

}  // namespace detail

RateSpec::RateSpec(std::vector<Matrix> coeff, double age_cap) : cap_(age_cap), coeff_(std::move(coeff)) {
    std::vector<std::string> issues;
    if (coeff_.empty()) throw ValidationError({"rates: at least one coefficient matrix is required"});
    k_ = static_cast<int>(coeff_.front().size());
    if (k_ < 1) throw ValidationError({"rates: state count must be positive"});
    for (std::size_t p = 0; p < coeff_.size(); ++p) {
        if (static_cast<int>(coeff_[p].size()) != k_) {
            issues.push_back("rates[" + std::to_string(p) + "]: expected " + std::to_string(k_) + " rows");
            continue;
        }
        for (int i = 0; i < k_; ++i) {
            if (static_cast<int>(coeff_[p][i].size()) != k_) {
                issues.push_back("rates[" + std::to_string(p) + "] row " + std::to_string(i + 1) +
                                 ": expected " + std::to_string(k_) + " columns");
            }
            for (double v : coeff_[p][i]) {
                if (!std::isfinite(v)) issues.push_back("rates[" + std::to_string(p) + "]: non-finite entry");
            }
        }
    }
    if (!(age_cap > 0.0) || !std::isfinite(age_cap)) issues.push_back("age_cap must be a positive finite number");
    if (!issues.empty()) throw ValidationError(std::move(issues));

    // Derived diagonal, never stored independently.
    for (auto& m : coeff_) {
        for (int i = 0; i < k_; ++i) {
            double s = 0.0;
            for (int j = 0; j < k_; ++j) {
                if (j != i) s += m[i][j];
            }
            m[i][i] = -s;
        }
    }

    const int n = degree();
    for (int i = 0; i < k_; ++i) {
        for (int j = 0; j < k_; ++j) {
            if (i == j) continue;
            std::vector<double> c(n + 1);
            for (int p = 0; p <= n; ++p) c[p] = coeff_[p][i][j];
            const auto [lo, hi] = detail::poly_range(c, 0.0, cap_);
            if (lo < 0.0) {
                int power = 0;
                for (int p = 0; p <= n; ++p) {
                    if (c[p] < 0.0) {
                        power = p;
                        break;
                    }
                }
                std::ostringstream os;
                os << "negative rate: lambda_" << i + 1 << j + 1 << "(y) reaches " << lo
                   << " on [0, " << cap_ << "]; entry (i=" << i + 1 << ", j=" << j + 1
                   << ", power=" << power << ")";
                issues.push_back(os.str());
            }
        }
    }
    if (!issues.empty()) throw ValidationError(std::move(issues));

    row_poly_.assign(k_, std::vector<double>(n + 1, 0.0));
    row_anti_.assign(k_, std::vector<double>(n + 2, 0.0));
    row_sup_.assign(k_, 0.0);
    cap_hazard_.assign(k_, 0.0);
    for (int i = 0; i < k_; ++i) {
        for (int p = 0; p <= n; ++p) {
            row_poly_[i][p] = -coeff_[p][i][i];
            row_anti_[i][p + 1] = row_poly_[i][p] / (p + 1);
        }
        row_sup_[i] = std::max(0.0, detail::poly_range(row_poly_[i], 0.0, cap_).second);
        cap_hazard_[i] = detail::poly_eval(row_poly_[i], cap_);
        if (!(cap_hazard_[i] > 0.0)) {
            std::ostringstream os;
            os << "state " << i + 1
               << ": total leaving rate at the age cap is zero, so the integrated hazard stays "
                  "bounded and holding times are not finite";
            issues.push_back(os.str());
        }
    }
    if (!issues.empty()) throw ValidationError(std::move(issues));
    c_ = *std::max_element(row_sup_.begin(), row_sup_.end());
}

void RateSpec::check_index(int i) const {
    if (i < 0 || i >= k_) {
        throw std::out_of_range("state index " + std::to_string(i) + " outside [0, " + std::to_string(k_) + ")");
    }
}

double RateSpec::sup_row_rate(int i) const {
    check_index(i);
    return row_sup_[i];
}

double RateSpec::poly(int i, int j, double y) const {
    const double a = std::min(y, cap_);
    double acc = 0.0;
    for (int p = degree(); p >= 0; --p) acc = acc * a + coeff_[p][i][j];
    return acc;
}

double RateSpec::lambda_at(int i, int j, double y) const {
    check_index(i);
    check_index(j);
    if (y < 0.0) throw std::invalid_argument("lambda_at: negative age");
    return poly(i, j, y);
}

double RateSpec::row_rate(int i, double y) const {
    check_index(i);
    return detail::poly_eval(row_poly_[i], std::min(y, cap_));
}

double RateSpec::big_lambda(int i, double y) const {
    check_index(i);
    if (y <= 0.0) return 0.0;
    if (y <= cap_) return detail::poly_eval(row_anti_[i], y);
    return detail::poly_eval(row_anti_[i], cap_) + cap_hazard_[i] * (y - cap_);
}

double RateSpec::holding_cdf(int i, double y) const { return -std::expm1(-big_lambda(i, y)); }

double RateSpec::holding_pdf(int i, double y) const {
    return row_rate(i, y) * std::exp(-big_lambda(i, y));
}

double RateSpec::survival_ratio(int i, double y, double v) const {
    return std::exp(-(big_lambda(i, y + v) - big_lambda(i, y)));
}

double RateSpec::conditional_density(int i, double y, double v) const {
    return row_rate(i, y + v) * survival_ratio(i, y, v);
}

double RateSpec::jump_prob(int i, int j, double y) const {
    check_index(i);
    check_index(j);
    const double row = row_rate(i, y);
    if (i == j) return row > 0.0 ? 0.0 : 1.0;
    if (!(row > 0.0)) return 0.0;
    return poly(i, j, y) / row;
}

double RateSpec::infinity_proxy(int i) const {
    check_index(i);
    const double target = -std::log(1e-12);
    const double at_cap = big_lambda(i, cap_);
    if (at_cap >= target) {
        return numerics::monotone_root([&](double y) { return big_lambda(i, y) - target; },
                                       [&](double y) { return row_rate(i, y); }, 0.0, cap_);
    }
    return cap_ + (target - at_cap) / cap_hazard_[i];
}

double RateSpec::kernel(int i, int j, double y) const {
    check_index(i);
    check_index(j);
    if (i == j) throw std::invalid_argument("kernel: requires i != j");
    if (y <= 0.0) return 0.0;
    const double proxy = infinity_proxy(i);
    const double upper = std::min({y, cap_, proxy});
    const double body = numerics::integrate(
        [&](double s) { return std::exp(-big_lambda(i, s)) * poly(i, j, s); }, 0.0, upper, 1e-10);
    if (y <= cap_ || proxy <= cap_) return body;
    // Frozen rates beyond the cap: exponential tail in closed form.
    const double lam = poly(i, j, cap_);
    return body + lam / cap_hazard_[i] * std::exp(-big_lambda(i, cap_)) *
                      (-std::expm1(-cap_hazard_[i] * (y - cap_)));
}

EmbeddedChain RateSpec::embedded_matrix() const {
    EmbeddedChain out;
    out.p.assign(k_, std::vector<double>(k_, 0.0));
    for (int i = 0; i < k_; ++i) {
        const double upper = std::min(cap_, infinity_proxy(i));
        for (int j = 0; j < k_; ++j) {
            if (j == i) continue;
            // p_ij(y) f(y|i) integrated over the holding-time law.
            double v = numerics::integrate(
                [&](double y) { return jump_prob(i, j, y) * holding_pdf(i, y); }, 0.0, upper, 1e-10);
            if (upper >= cap_) v += jump_prob(i, j, cap_) * std::exp(-big_lambda(i, cap_));
            out.p[i][j] = v;
        }
    }
    // Reachability closure on the support graph.
    std::vector<std::vector<bool>> reach(k_, std::vector<bool>(k_, false));
    for (int i = 0; i < k_; ++i) {
        reach[i][i] = true;
        for (int j = 0; j < k_; ++j) {
            if (out.p[i][j] > 0.0) reach[i][j] = true;
        }
    }
    for (int m = 0; m < k_; ++m) {
        for (int i = 0; i < k_; ++i) {
            if (!reach[i][m]) continue;
            for (int j = 0; j < k_; ++j) {
                if (reach[m][j]) reach[i][j] = true;
            }
        }
    }
    out.irreducible = true;
    for (int i = 0; i < k_; ++i) {
        for (int j = 0; j < k_; ++j) {
            if (!reach[i][j]) out.irreducible = false;
        }
    }
    return out;
}

double RateSpec::residual_holding_time(int i, double y0, double e) const {
    check_index(i);
    if (y0 < 0.0) throw std::invalid_argument("residual_holding_time: negative age");
    if (e <= 0.0) return 0.0;
    if (y0 >= cap_) return e / cap_hazard_[i];
    const double base = big_lambda(i, y0);
    const double target = base + e;
    const double at_cap = big_lambda(i, cap_);
    if (target >= at_cap) return (cap_ - y0) + (target - at_cap) / cap_hazard_[i];
    const int n = degree();
    if (n <= 1) {
        const double a0 = row_poly_[i][0];
        const double a1 = n == 1 ? row_poly_[i][1] : 0.0;
        // Solve a0 u + a1/2 ((y0+u)^2 - y0^2) = e, i.e.
        // (a1/2) u^2 + (a0 + a1 y0) u - e = 0 with b = rate at y0.
        const double b = a0 + a1 * y0;
        if (a1 == 0.0) return e / b;
        const double disc = b * b + 2.0 * a1 * e;
        return 2.0 * e / (b + std::sqrt(std::max(disc, 0.0)));
    }
    const double y = numerics::monotone_root([&](double yy) { return big_lambda(i, yy) - target; },
                                             [&](double yy) { return row_rate(i, yy); }, y0, cap_);
    return std::max(0.0, y - y0);
}

}  // namespace agedep
