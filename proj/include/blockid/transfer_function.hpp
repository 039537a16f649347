#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "blockid/polynomial.hpp"

namespace blockid {

/// Discrete-time rational transfer function z^-delay * B(z^-1) / A(z^-1).
/// Coefficients ascend in powers of z^-1; den[0] is 1 once normalized.
struct RationalTF {
  Poly num{1.0};
  Poly den{1.0};
  std::size_t delay = 0;

  /// Validates and normalizes to den[0] = 1, folding leading numerator zeros
  /// into the delay.
  static RationalTF make(Poly num, Poly den, std::size_t delay = 0) {
    RationalTF tf{std::move(num), std::move(den), delay};
    tf.normalize();
    return tf;
  }

  static RationalTF gain(double k) { return make({k}, {1.0}, 0); }

  void normalize() {
    if (den.empty() || den[0] == 0.0)
      throw std::invalid_argument("denominator leading coefficient must be nonzero");
    if (num.empty() || poly::is_zero(num))
      throw std::invalid_argument("numerator must not be identically zero");
    const double a0 = den[0];
    if (a0 != 1.0) {
      for (auto &c : den) c /= a0;
      for (auto &c : num) c /= a0;
    }
    const std::size_t lead = poly::leading_zeros(num);
    if (lead > 0) {
      num.erase(num.begin(), num.begin() + static_cast<std::ptrdiff_t>(lead));
      delay += lead;
    }
    num = poly::trim(std::move(num));
    den = poly::trim(std::move(den));
  }

  /// Numerator with the delay folded in as leading zeros.
  Poly shifted_num() const { return poly::shift(num, delay); }

  /// Response at normalized frequency f (cycles/sample).
  Complex at(double f) const {
    const Complex x = std::polar(1.0, -2.0 * std::numbers::pi * f);
    return std::pow(x, static_cast<double>(delay)) * poly::eval(num, x) / poly::eval(den, x);
  }

  /// B(1)/A(1).
  double dc_gain() const {
    const double a = poly::sum(den);
    if (a == 0.0) throw std::domain_error("DC gain undefined: denominator vanishes at z = 1");
    return poly::sum(num) / a;
  }

  /// Output at time t needs the input at time t.
  bool has_feedthrough() const { return delay == 0 && num[0] != 0.0; }

  std::vector<Complex> poles() const { return poly::roots(den); }

  /// Zeros of B plus one zero at the origin per sample of delay.
  std::vector<Complex> zeros() const { return poly::roots(shifted_num()); }

  bool is_stable() const {
    for (const auto &p : poles())
      if (std::abs(p) >= 1.0) return false;
    return true;
  }

  /// Largest pole magnitude, 0 for FIR blocks.
  double spectral_radius() const {
    double r = 0.0;
    for (const auto &p : poles()) r = std::max(r, std::abs(p));
    return r;
  }

  std::size_t nb() const { return num.size() - 1; }
  std::size_t na() const { return den.size() - 1; }

  bool operator==(const RationalTF &) const = default;
};

namespace tf {

inline RationalTF scaled(const RationalTF &g, double k) {
  if (k == 0.0) throw std::invalid_argument("scaling a transfer function by zero");
  return RationalTF{poly::scale(g.num, k), g.den, g.delay};
}

inline RationalTF series(const RationalTF &a, const RationalTF &b) {
  return RationalTF::make(poly::conv(a.num, b.num), poly::conv(a.den, b.den), a.delay + b.delay);
}

/// a + b over the uncancelled common denominator A_a A_b.
inline RationalTF sum(const RationalTF &a, const RationalTF &b) {
  const Poly n = poly::add(poly::conv(a.shifted_num(), b.den), poly::conv(b.shifted_num(), a.den));
  return RationalTF::make(n, poly::conv(a.den, b.den), 0);
}

} // namespace tf
} // namespace blockid
