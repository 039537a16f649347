#pragma once

// Polynomials in the backward shift x = z^-1, stored as ascending coefficient
// vectors: p[0] + p[1] x + p[2] x^2 + ...

#include <algorithm>
#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Eigenvalues>

namespace blockid {

using Complex = std::complex<double>;
using Poly = std::vector<double>;

namespace poly {

inline Poly conv(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  Poly out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

inline Poly add(std::span<const double> a, std::span<const double> b) {
  Poly out(std::max(a.size(), b.size()), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += a[i];
  for (std::size_t i = 0; i < b.size(); ++i) out[i] += b[i];
  return out;
}

inline Poly scale(std::span<const double> a, double k) {
  Poly out(a.begin(), a.end());
  for (auto &c : out) c *= k;
  return out;
}

/// Multiply by x^d.
inline Poly shift(std::span<const double> a, std::size_t d) {
  Poly out(d, 0.0);
  out.insert(out.end(), a.begin(), a.end());
  return out;
}

inline bool is_zero(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double c) { return c == 0.0; });
}

/// Drop exactly-zero highest-power coefficients (degree padding).
inline Poly trim(Poly a) {
  while (a.size() > 1 && a.back() == 0.0) a.pop_back();
  return a;
}

/// Number of exactly-zero lowest-power coefficients.
inline std::size_t leading_zeros(std::span<const double> a) {
  std::size_t n = 0;
  while (n < a.size() && a[n] == 0.0) ++n;
  return n;
}

inline double sum(std::span<const double> a) {
  double s = 0.0;
  for (double c : a) s += c;
  return s;
}

/// Horner evaluation at x (x = z^-1 on the unit circle for frequency responses).
inline Complex eval(std::span<const double> a, Complex x) {
  Complex acc{0.0, 0.0};
  for (std::size_t i = a.size(); i-- > 0;) acc = acc * x + a[i];
  return acc;
}

inline double eval(std::span<const double> a, double x) {
  double acc = 0.0;
  for (std::size_t i = a.size(); i-- > 0;) acc = acc * x + a[i];
  return acc;
}

inline Poly derivative(std::span<const double> a) {
  if (a.size() <= 1) return {0.0};
  Poly out(a.size() - 1);
  for (std::size_t i = 1; i < a.size(); ++i) out[i - 1] = a[i] * static_cast<double>(i);
  return out;
}

/// Roots in z of a0 + a1 z^-1 + ... + an z^-n, i.e. of a0 z^n + ... + an.
/// Leading zero coefficients are pure delays and contribute roots at z = 0.
/// Companion-matrix eigenvalues; complex roots come out as exact conjugate pairs.
inline std::vector<Complex> roots(std::span<const double> a) {
  if (is_zero(a)) throw std::invalid_argument("roots of the zero polynomial are undefined");
  const std::size_t delay = leading_zeros(a);
  Poly p = trim(Poly(a.begin() + static_cast<std::ptrdiff_t>(delay), a.end()));
  std::vector<Complex> out(delay, Complex{0.0, 0.0});
  const std::size_t n = p.size() - 1;
  if (n == 0) return out;
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                                    static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) companion(0, static_cast<Eigen::Index>(j)) = -p[j + 1] / p[0];
  for (std::size_t i = 1; i < n; ++i)
    companion(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  if (solver.info() != Eigen::Success) throw std::runtime_error("companion eigenvalue solver failed");
  const auto &ev = solver.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) out.push_back(ev(i));
  return out;
}

/// Monic polynomial 1 + c1 z^-1 + ... whose z-roots are the given values.
/// Complex roots must come in conjugate pairs; the imaginary residue is dropped.
inline Poly from_roots(std::span<const Complex> r) {
  std::vector<Complex> c{Complex{1.0, 0.0}};
  for (const auto &root : r) {
    std::vector<Complex> next(c.size() + 1, Complex{0.0, 0.0});
    for (std::size_t i = 0; i < c.size(); ++i) {
      next[i] += c[i];
      next[i + 1] -= root * c[i];
    }
    c = std::move(next);
  }
  Poly out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i].real();
  return out;
}

/// Sort by (real, imag) so root lists can be compared elementwise.
inline void sort_roots(std::vector<Complex> &r) {
  std::sort(r.begin(), r.end(), [](const Complex &a, const Complex &b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
}

} // namespace poly
} // namespace blockid
