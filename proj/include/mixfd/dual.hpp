#pragma once

#include <cmath>

namespace mixfd {

/// First-order forward-mode number: value plus one tangent component.
struct Dual {
  double v = 0.0;
  double d = 0.0;

  constexpr Dual() = default;
  constexpr Dual(double value) : v(value) {}  // NOLINT: implicit constant lift
  constexpr Dual(double value, double tangent) : v(value), d(tangent) {}

  Dual& operator+=(const Dual& o) {
    v += o.v;
    d += o.d;
    return *this;
  }
};

inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }

inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.v; }

enum class Activation { swish, tanh, square };

/// Activation value and its first three derivatives at u.
struct Jet {
  double f, d1, d2, d3;
};

inline Jet activation_jet(Activation a, double u) {
  switch (a) {
    case Activation::swish: {
      const double s = 1.0 / (1.0 + std::exp(-u));
      const double ds = s * (1.0 - s);
      const double t = 1.0 - 2.0 * s;
      return {u * s, s * (1.0 + u * (1.0 - s)), ds * (2.0 + u * t),
              ds * (t * (3.0 + u * t) - 2.0 * u * ds)};
    }
    case Activation::tanh: {
      const double t = std::tanh(u);
      const double sech2 = 1.0 - t * t;
      return {t, sech2, -2.0 * t * sech2, sech2 * (6.0 * t * t - 2.0)};
    }
    case Activation::square:
      return {u * u, 2.0 * u, 2.0, 0.0};
  }
  return {0, 0, 0, 0};
}

// Scalar-generic activation and slope, so the same backward sweep runs on
// plain doubles (gradient) and on Dual numbers (Hessian-vector products).
inline double activate(Activation a, double u) { return activation_jet(a, u).f; }
inline double activate_slope(Activation a, double u) { return activation_jet(a, u).d1; }

inline Dual activate(Activation a, Dual u) {
  const Jet j = activation_jet(a, u.v);
  return {j.f, j.d1 * u.d};
}
inline Dual activate_slope(Activation a, Dual u) {
  const Jet j = activation_jet(a, u.v);
  return {j.d1, j.d2 * u.d};
}

}  // namespace mixfd
