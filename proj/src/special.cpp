#include "dirmixe/special.hpp"

#include <cmath>
#include <limits>

#include "dirmixe/error.hpp"

namespace dirmixe {

namespace {

constexpr int kMaxIterations = 10000;
constexpr double kEpsilon = 1e-16;
constexpr double kTiny = 1e-300;

// P(s, x) by the series  e^{-x} x^s / Γ(s+1) · Σ x^n / ((s+1)...(s+n)).
double gamma_series(double s, double x) {
    double term = 1.0 / s;
    double sum = term;
    for (int n = 1; n < kMaxIterations; ++n) {
        term *= x / (s + n);
        sum += term;
        if (std::fabs(term) < std::fabs(sum) * kEpsilon) break;
    }
    return sum * std::exp(-x + s * std::log(x) - std::lgamma(s));
}

// Q(s, x) by the modified Lentz continued fraction.
double gamma_continued_fraction(double s, double x) {
    double b = x + 1.0 - s;
    double c = 1.0 / kTiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < kMaxIterations; ++i) {
        const double an = -i * (i - s);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < kEpsilon) break;
    }
    return std::exp(-x + s * std::log(x) - std::lgamma(s)) * h;
}

void check_domain(double s, double x) {
    if (!(s > 0.0) || !std::isfinite(s)) throw InvalidParameter("incomplete gamma: s must be positive");
    if (!(x >= 0.0)) throw InvalidParameter("incomplete gamma: x must be non-negative");
}

}  // namespace

double lower_incomplete_gamma_regularized(double s, double x) {
    check_domain(s, x);
    if (x == 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    if (x < s + 1.0) return gamma_series(s, x);
    return 1.0 - gamma_continued_fraction(s, x);
}

double upper_incomplete_gamma_regularized(double s, double x) {
    check_domain(s, x);
    if (x == 0.0) return 1.0;
    if (std::isinf(x)) return 0.0;
    if (x < s + 1.0) return 1.0 - gamma_series(s, x);
    return gamma_continued_fraction(s, x);
}

}  // namespace dirmixe
