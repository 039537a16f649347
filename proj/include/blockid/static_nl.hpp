#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "blockid/polynomial.hpp"

namespace blockid {

/// Regularity of a static nonlinearity at a point.
///   jump:  the value is discontinuous (linearization slope is unbounded)
///   kink:  continuous, but left and right derivatives differ
///   smooth: continuously differentiable
enum class Regularity { jump, kink, smooth };

/// Static nonlinearity: a single polynomial, or a piecewise polynomial with
/// breakpoints b_1 < ... < b_m and m + 1 segments. Segment i covers
/// [b_i, b_{i+1}); a breakpoint belongs to the segment on its right.
class StaticNL {
public:
  StaticNL() : segments_{{0.0, 1.0}} {}

  static StaticNL polynomial(Poly coeffs) {
    if (coeffs.empty()) throw std::invalid_argument("polynomial nonlinearity needs coefficients");
    StaticNL nl;
    nl.segments_ = {std::move(coeffs)};
    return nl;
  }

  static StaticNL identity() { return polynomial({0.0, 1.0}); }

  static StaticNL piecewise(std::vector<double> breakpoints, std::vector<Poly> segments) {
    if (segments.size() != breakpoints.size() + 1)
      throw std::invalid_argument("piecewise nonlinearity needs one more segment than breakpoints");
    if (!std::is_sorted(breakpoints.begin(), breakpoints.end()) ||
        std::adjacent_find(breakpoints.begin(), breakpoints.end()) != breakpoints.end())
      throw std::invalid_argument("breakpoints must be strictly increasing");
    for (const auto &s : segments)
      if (s.empty()) throw std::invalid_argument("empty segment polynomial");
    StaticNL nl;
    nl.breakpoints_ = std::move(breakpoints);
    nl.segments_ = std::move(segments);
    return nl;
  }

  /// |x|
  static StaticNL abs() { return piecewise({0.0}, {{0.0, -1.0}, {0.0, 1.0}}); }

  /// Unit step: 0 for x < 0, 1 for x >= 0.
  static StaticNL step() { return piecewise({0.0}, {{0.0}, {1.0}}); }

  /// Continuous piecewise-linear map through the origin with slopes
  /// `left` for x < 0 and `right` for x >= 0.
  static StaticNL kink(double left, double right) {
    return piecewise({0.0}, {{0.0, left}, {0.0, right}});
  }

  bool is_polynomial() const { return breakpoints_.empty(); }
  const std::vector<double> &breakpoints() const { return breakpoints_; }
  const std::vector<Poly> &segments() const { return segments_; }

  double operator()(double x) const { return poly::eval(segments_[segment_of(x)], x); }

  /// Derivative from the right.
  double right_derivative(double x) const { return slope(segments_[segment_of(x)], x); }

  /// Derivative from the left.
  double left_derivative(double x) const {
    const std::size_t i = segment_of(x);
    if (i > 0 && x == breakpoints_[i - 1]) return slope(segments_[i - 1], x);
    return slope(segments_[i], x);
  }

  /// Mean of the one-sided derivatives; the plain derivative away from breakpoints.
  double derivative(double x) const { return 0.5 * (left_derivative(x) + right_derivative(x)); }

  double left_limit(double x) const {
    const std::size_t i = segment_of(x);
    if (i > 0 && x == breakpoints_[i - 1]) return poly::eval(segments_[i - 1], x);
    return poly::eval(segments_[i], x);
  }

  Regularity regularity(double x) const {
    const std::size_t i = segment_of(x);
    if (i == 0 || x != breakpoints_[i - 1]) return Regularity::smooth;
    const double scale = 1.0 + std::abs((*this)(x));
    if (std::abs(left_limit(x) - (*this)(x)) > 1e-12 * scale) return Regularity::jump;
    if (std::abs(left_derivative(x) - right_derivative(x)) > 1e-12 * (1.0 + std::abs(right_derivative(x))))
      return Regularity::kink;
    return Regularity::smooth;
  }

  /// Jump/kink record, one entry per breakpoint.
  std::vector<Regularity> breakpoint_regularity() const {
    std::vector<Regularity> out;
    out.reserve(breakpoints_.size());
    for (double b : breakpoints_) out.push_back(regularity(b));
    return out;
  }

  /// True when the map is f(x) = a + b x everywhere.
  bool is_affine() const {
    for (const auto &s : segments_)
      for (std::size_t k = 2; k < s.size(); ++k)
        if (s[k] != 0.0) return false;
    if (segments_.size() == 1) return true;
    for (std::size_t i = 1; i < segments_.size(); ++i) {
      const double b = breakpoints_[i - 1];
      if (slope(segments_[i], b) != slope(segments_[0], b) ||
          poly::eval(segments_[i], b) != poly::eval(segments_[i - 1], b))
        return false;
    }
    return true;
  }

  bool operator==(const StaticNL &) const = default;

private:
  static double slope(const Poly &p, double x) { return poly::eval(poly::derivative(p), x); }

  std::size_t segment_of(double x) const {
    return static_cast<std::size_t>(std::upper_bound(breakpoints_.begin(), breakpoints_.end(), x) -
                                    breakpoints_.begin());
  }

  std::vector<double> breakpoints_;
  std::vector<Poly> segments_;
};

} // namespace blockid
