#pragma once

#include <cmath>
#include <numbers>

namespace pcprior {

/// Exponentially scaled modified Bessel function of the second kind,
/// e^x K_nu(x), for nu >= 0 and x > 0. Temme's series for x <= 2 and
/// Steed's continued fraction above, followed by upward recurrence in nu.
double bessel_k_scaled(double nu, double x);

/// K_nu(x). Underflows to 0 for very large x; use the scaled form there.
double bessel_k(double nu, double x);

inline double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double normal_logpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

/// x - 1 - log x written in terms of t = -log x, i.e. expm1(-t) + t, with a
/// series near t = 0 where the subtraction cancels.
inline double kld_term_from_log(double t) {
  if (std::abs(t) < 1e-3) {
    const double t2 = t * t;
    return t2 * (0.5 - t / 6.0 + t2 / 24.0 - t2 * t / 120.0);
  }
  return std::expm1(-t) + t;
}

}  // namespace pcprior
