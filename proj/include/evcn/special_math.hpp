#pragma once

#include <cmath>

#include "evcn/errors.hpp"

namespace evcn {

// Scalar special functions used by the evidential losses. digamma/trigamma
// use upward recurrence to push the argument past 10, then the asymptotic
// series; relative accuracy is better than 1e-12 for x in [1e-4, 1e6].

inline double digamma(double x) {
  if (!(x > 0.0)) throw NumericError("digamma: argument must be positive, got " + std::to_string(x));
  double acc = 0.0;
  while (x < 10.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // psi(x) ~ ln x - 1/(2x) - sum B_2n / (2n x^{2n})
  double series = inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * 691.0 / 32760.0)))));
  return acc + std::log(x) - 0.5 * inv - series;
}

inline double trigamma(double x) {
  if (!(x > 0.0)) throw NumericError("trigamma: argument must be positive, got " + std::to_string(x));
  double acc = 0.0;
  while (x < 10.0) {
    acc += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // psi'(x) ~ 1/x + 1/(2x^2) + sum B_2n / x^{2n+1}
  double series = inv * (1.0 + inv * (0.5 + inv * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0))))));
  return acc + series;
}

inline double log_gamma(double x) {
  if (!(x > 0.0)) throw NumericError("log_gamma: argument must be positive, got " + std::to_string(x));
  return std::lgamma(x);
}

// Overflow-safe softplus: ln(1 + e^x).
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

// Logistic function, the derivative of softplus.
inline double logistic(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace evcn
