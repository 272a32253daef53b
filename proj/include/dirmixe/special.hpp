#pragma once

namespace dirmixe {

/// Regularized lower incomplete gamma P(s, x) = (1/Γ(s)) ∫₀ˣ t^{s-1} e^{-t} dt.
///
/// Power series for x < s + 1, Lentz continued fraction for the complement
/// otherwise. Absolute error below 1e-12 for s in (0, 1e3], x >= 0.
/// Throws InvalidParameter for s <= 0 or x < 0.
double lower_incomplete_gamma_regularized(double s, double x);

/// Q(s, x) = 1 - P(s, x), computed directly to avoid cancellation in the tail.
double upper_incomplete_gamma_regularized(double s, double x);

}  // namespace dirmixe
