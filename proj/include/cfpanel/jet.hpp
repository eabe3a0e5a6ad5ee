#pragma once

#include <array>
#include <cstddef>

namespace cfpanel {

// Truncated multivariate Taylor number in four variables where each
// variable appears at most once per term: coefficient c[mask] multiplies
// prod_{i in mask} e_i with e_i^2 = 0. c[15] of f(x, y, z, w) seeded with
// unit infinitesimals is the mixed partial d^4 f / dx dy dz dw.
class Jet4 {
 public:
  static constexpr std::size_t kTerms = 16;

  Jet4() { c_.fill(0.0); }
  explicit Jet4(double value) : Jet4() { c_[0] = value; }
  static Jet4 variable(double value, std::size_t index) {
    Jet4 j(value);
    j.c_[std::size_t{1} << index] = 1.0;
    return j;
  }

  double operator[](std::size_t mask) const { return c_[mask]; }
  double& operator[](std::size_t mask) { return c_[mask]; }
  double value() const { return c_[0]; }

  Jet4& operator+=(const Jet4& o) {
    for (std::size_t m = 0; m < kTerms; ++m) c_[m] += o.c_[m];
    return *this;
  }
  Jet4& operator*=(double s) {
    for (double& v : c_) v *= s;
    return *this;
  }
  friend Jet4 operator+(Jet4 a, const Jet4& b) { return a += b; }
  friend Jet4 operator+(Jet4 a, double b) {
    a.c_[0] += b;
    return a;
  }
  friend Jet4 operator*(Jet4 a, double s) { return a *= s; }
  friend Jet4 operator*(double s, Jet4 a) { return a *= s; }
  friend Jet4 operator-(const Jet4& a) { return a * -1.0; }
  friend Jet4 operator-(Jet4 a, const Jet4& b) { return a += -b; }

  // Subset convolution.
  friend Jet4 operator*(const Jet4& a, const Jet4& b) {
    Jet4 r;
    for (std::size_t m = 0; m < kTerms; ++m) {
      double acc = 0.0;
      for (std::size_t s = m;; s = (s - 1) & m) {
        acc += a.c_[s] * b.c_[m ^ s];
        if (s == 0) break;
      }
      r.c_[m] = acc;
    }
    return r;
  }

  // The part without a constant term; its fifth power vanishes.
  Jet4 infinitesimal() const {
    Jet4 d = *this;
    d.c_[0] = 0.0;
    return d;
  }

  // f(x) given f and its first four derivatives at x.value().
  Jet4 apply(const std::array<double, 5>& derivs) const {
    const Jet4 d = infinitesimal();
    const Jet4 d2 = d * d;
    const Jet4 d3 = d2 * d;
    const Jet4 d4 = d3 * d;
    Jet4 r(derivs[0]);
    r += d * derivs[1];
    r += d2 * (derivs[2] / 2.0);
    r += d3 * (derivs[3] / 6.0);
    r += d4 * (derivs[4] / 24.0);
    return r;
  }

 private:
  std::array<double, kTerms> c_;
};

}  // namespace cfpanel
