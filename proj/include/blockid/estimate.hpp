#pragma once

// Empirical best linear approximation: nonparametric FRF over periodic
// realizations, the static Bussgang gain, and a weighted rational fit in the
// frequency domain (Sanathanan-Koerner start, Levenberg-Marquardt refinement).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <future>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "blockid/error.hpp"
#include "blockid/linearize.hpp"
#include "blockid/signals.hpp"
#include "blockid/simulate.hpp"

namespace blockid {

/// FRF samples at the excited bins of a period-N experiment.
struct FrfEstimate {
  std::size_t N = 0;
  std::vector<std::size_t> bins;
  std::vector<Complex> G;
  /// Sample variance of the per-realization ratios Y/U (M >= 2 only).
  std::vector<double> var;
  bool variance_available = false;
  std::size_t M = 0;
  /// var * mean |U_k|^2: power of the output part not coherent with the input.
  std::vector<double> y_s_level;

  double frequency(std::size_t i) const { return static_cast<double>(bins[i]) / static_cast<double>(N); }
  std::vector<double> frequencies() const {
    std::vector<double> f(bins.size());
    for (std::size_t i = 0; i < bins.size(); ++i) f[i] = frequency(i);
    return f;
  }
};

/// Noise-free FRF samples of a transfer function.
inline FrfEstimate frf_from_tf(const RationalTF &g, std::size_t N, std::span<const std::size_t> bins) {
  FrfEstimate e;
  e.N = N;
  e.bins.assign(bins.begin(), bins.end());
  e.M = 1;
  for (std::size_t i = 0; i < e.bins.size(); ++i) e.G.push_back(g.at(e.frequency(i)));
  e.var.assign(e.bins.size(), 0.0);
  e.y_s_level.assign(e.bins.size(), 0.0);
  return e;
}

struct Record {
  Signal input;
  Signal output;
};

/// Mean over realizations of Y_k / U_k on the given bins (means removed).
inline FrfEstimate estimate_frf(std::span<const Record> records, std::span<const std::size_t> bins) {
  if (records.empty()) throw std::invalid_argument("no records");
  const std::size_t N = records.front().input.samples.size();
  for (const auto &r : records)
    if (r.input.samples.size() != N || r.output.samples.size() != N)
      throw std::invalid_argument("records must share one length");
  for (auto k : bins)
    if (k == 0 || k > N / 2) throw std::invalid_argument("bin outside 1 .. N/2");

  const std::size_t M = records.size();
  FrfEstimate e;
  e.N = N;
  e.bins.assign(bins.begin(), bins.end());
  e.M = M;
  std::vector<std::vector<Complex>> ratios(bins.size());
  std::vector<double> u_power(bins.size(), 0.0);
  auto centred = [](const std::vector<double> &x) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - mean;
    return out;
  };
  for (std::size_t m = 0; m < M; ++m) {
    const auto U = fourier_coefficients(centred(records[m].input.samples));
    const auto Y = fourier_coefficients(centred(records[m].output.samples));
    for (std::size_t i = 0; i < bins.size(); ++i) {
      const auto k = bins[i];
      if (std::abs(U[k]) < 1e-12)
        throw NumericError("input spectrum vanishes at bin " + std::to_string(k));
      ratios[i].push_back(Y[k] / U[k]);
      u_power[i] += std::norm(U[k]) / static_cast<double>(M);
    }
  }
  e.variance_available = M >= 2;
  for (std::size_t i = 0; i < bins.size(); ++i) {
    Complex mean{0.0, 0.0};
    for (const auto &g : ratios[i]) mean += g;
    mean /= static_cast<double>(M);
    double v = 0.0;
    if (M >= 2) {
      for (const auto &g : ratios[i]) v += std::norm(g - mean);
      v /= static_cast<double>(M - 1);
    }
    e.G.push_back(mean);
    e.var.push_back(v);
    e.y_s_level.push_back(v * u_power[i]);
  }
  return e;
}

/// E{y u} / E{u^2} after removing the means of both records.
inline double bussgang_gain(std::span<const double> u, std::span<const double> y) {
  if (u.size() != y.size() || u.empty()) throw std::invalid_argument("u and y must have the same nonzero length");
  double mu = 0.0, my = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    mu += u[i];
    my += y[i];
  }
  mu /= static_cast<double>(u.size());
  my /= static_cast<double>(u.size());
  double uy = 0.0, uu = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uy += (u[i] - mu) * (y[i] - my);
    uu += (u[i] - mu) * (u[i] - mu);
  }
  if (uu == 0.0) throw std::invalid_argument("input has no AC power");
  return uy / uu;
}

inline double bussgang_gain(const Signal &u, const Signal &y) { return bussgang_gain(u.samples, y.samples); }

struct FitResult {
  RationalTF model;
  double residual = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

struct FitOptions {
  std::size_t max_iterations = 100;
  std::size_t sk_iterations = 30;
  double tolerance = 1e-10;
};

namespace detail {

struct FitProblem {
  std::vector<Complex> x;  // z^-1 at each bin
  std::vector<Complex> G;
  std::vector<double> sqrt_w;
  std::size_t nb, na, delay;

  std::size_t params() const { return nb + 1 + na; }

  RationalTF model(const Eigen::VectorXd &theta) const {
    Poly b(nb + 1), a(na + 1);
    for (std::size_t i = 0; i <= nb; ++i) b[i] = theta(static_cast<Eigen::Index>(i));
    a[0] = 1.0;
    for (std::size_t j = 1; j <= na; ++j) a[j] = theta(static_cast<Eigen::Index>(nb + j));
    RationalTF tf;
    tf.num = std::move(b);
    tf.den = std::move(a);
    tf.delay = delay;
    return tf;
  }

  /// Weighted complex residuals stacked as [Re; Im] and their Jacobian.
  double evaluate(const Eigen::VectorXd &theta, Eigen::VectorXd &r, Eigen::MatrixXd *J) const {
    const auto K = static_cast<Eigen::Index>(x.size());
    const auto P = static_cast<Eigen::Index>(params());
    r.resize(2 * K);
    if (J) J->resize(2 * K, P);
    const RationalTF tf = model(theta);
    for (Eigen::Index k = 0; k < K; ++k) {
      const auto &xk = x[static_cast<std::size_t>(k)];
      const Complex xd = std::pow(xk, static_cast<double>(delay));
      const Complex A = poly::eval(tf.den, xk);
      const Complex B = poly::eval(tf.num, xk);
      const Complex Mk = xd * B / A;
      const double s = sqrt_w[static_cast<std::size_t>(k)];
      const Complex e = s * (G[static_cast<std::size_t>(k)] - Mk);
      r(k) = e.real();
      r(K + k) = e.imag();
      if (J) {
        Complex xp{1.0, 0.0};
        for (std::size_t i = 0; i <= nb; ++i, xp *= xk) {
          const Complex d = -s * xd * xp / A;
          (*J)(k, static_cast<Eigen::Index>(i)) = d.real();
          (*J)(K + k, static_cast<Eigen::Index>(i)) = d.imag();
        }
        xp = xk;
        for (std::size_t j = 1; j <= na; ++j, xp *= xk) {
          const Complex d = s * Mk * xp / A;
          (*J)(k, static_cast<Eigen::Index>(nb + j)) = d.real();
          (*J)(K + k, static_cast<Eigen::Index>(nb + j)) = d.imag();
        }
      }
    }
    return r.squaredNorm();
  }
};

} // namespace detail

/// Weighted least-squares rational model z^-delay B/A of orders (nb, na) for
/// the FRF samples; weights 1 / max(var_k, 1e-12 max|G|^2) when the variance
/// is available, uniform otherwise.
inline FitResult fit_rational(const FrfEstimate &frf, std::size_t nb, std::size_t na, std::size_t delay,
                              const FitOptions &opt = {}) {
  const std::size_t K = frf.bins.size();
  if (K < nb + na + 1) throw std::invalid_argument("not enough frequency bins for the requested orders");
  detail::FitProblem pb;
  pb.nb = nb;
  pb.na = na;
  pb.delay = delay;
  double gmax = 0.0;
  for (const auto &g : frf.G) {
    if (!std::isfinite(g.real()) || !std::isfinite(g.imag())) throw NumericError("FRF contains non-finite values");
    gmax = std::max(gmax, std::abs(g));
  }
  const double floor = 1e-12 * gmax * gmax;
  for (std::size_t i = 0; i < K; ++i) {
    pb.x.push_back(std::polar(1.0, -2.0 * std::numbers::pi * frf.frequency(i)));
    pb.G.push_back(frf.G[i]);
    const double w = frf.variance_available ? 1.0 / std::max(frf.var[i], floor > 0.0 ? floor : 1e-300) : 1.0;
    pb.sqrt_w.push_back(std::sqrt(w));
  }
  const auto P = static_cast<Eigen::Index>(pb.params());
  const auto Kx = static_cast<Eigen::Index>(K);

  // Sanathanan-Koerner: minimize |(G A - x^d B) / A_prev|^2, linear in theta.
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(P);
  std::vector<Complex> a_prev(K, Complex{1.0, 0.0});
  for (std::size_t it = 0; it < std::max<std::size_t>(opt.sk_iterations, 1); ++it) {
    Eigen::MatrixXd A(2 * Kx, P);
    Eigen::VectorXd rhs(2 * Kx);
    for (Eigen::Index k = 0; k < Kx; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      const Complex scale = pb.sqrt_w[ks] / a_prev[ks];
      const Complex xd = std::pow(pb.x[ks], static_cast<double>(delay));
      Complex xp{1.0, 0.0};
      for (std::size_t i = 0; i <= nb; ++i, xp *= pb.x[ks]) {
        const Complex c = scale * xd * xp;
        A(k, static_cast<Eigen::Index>(i)) = c.real();
        A(Kx + k, static_cast<Eigen::Index>(i)) = c.imag();
      }
      xp = pb.x[ks];
      for (std::size_t j = 1; j <= na; ++j, xp *= pb.x[ks]) {
        const Complex c = -scale * pb.G[ks] * xp;
        A(k, static_cast<Eigen::Index>(nb + j)) = c.real();
        A(Kx + k, static_cast<Eigen::Index>(nb + j)) = c.imag();
      }
      const Complex b = scale * pb.G[ks];
      rhs(k) = b.real();
      rhs(Kx + k) = b.imag();
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    if (qr.rank() < P) throw NumericError("rank-deficient normal equations: model order too high for the data");
    const Eigen::VectorXd next = qr.solve(rhs);
    if (!next.allFinite()) throw NumericError("non-finite parameters in linear fit");
    const double change = (next - theta).norm() / std::max(1e-300, next.norm());
    theta = next;
    const auto tf = pb.model(theta);
    for (std::size_t k = 0; k < K; ++k) a_prev[k] = poly::eval(tf.den, pb.x[k]);
    if (na == 0 || change < 1e-12) break;
  }

  // Levenberg-Marquardt on the output-error criterion.
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  double cost = pb.evaluate(theta, r, &J);
  if (!std::isfinite(cost)) throw NumericError("non-finite residual");
  double lambda = 1e-6;
  FitResult res;
  std::size_t it = 0;
  bool converged = cost == 0.0;
  double data_scale = 0.0;
  for (std::size_t k = 0; k < K; ++k) data_scale += std::norm(pb.sqrt_w[k] * pb.G[k]);
  while (!converged && it < opt.max_iterations) {
    ++it;
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    bool accepted = false;
    for (int attempt = 0; attempt < 40 && !accepted; ++attempt) {
      Eigen::MatrixXd Hd = JtJ;
      for (Eigen::Index i = 0; i < P; ++i) Hd(i, i) += lambda * std::max(JtJ(i, i), 1e-300);
      const Eigen::VectorXd step = Hd.ldlt().solve(-g);
      const Eigen::VectorXd trial = theta + step;
      Eigen::VectorXd rt;
      const double ct = pb.evaluate(trial, rt, nullptr);
      if (std::isfinite(ct) && ct <= cost) {
        const double rel = (cost - ct) / std::max(cost, 1e-300);
        theta = trial;
        cost = pb.evaluate(theta, r, &J);
        lambda = std::max(lambda * 0.1, 1e-12);
        accepted = true;
        if (rel < opt.tolerance || cost <= 1e-30 * data_scale) converged = true;
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) converged = true;  // no descent direction left at this precision
  }
  if (!std::isfinite(cost)) throw NumericError("non-finite residual");
  res.model = pb.model(theta);
  res.residual = cost;
  res.iterations = it;
  res.converged = converged;
  return res;
}

struct OrderScanEntry {
  std::size_t nb = 0, na = 0;
  double residual = 0.0;
  /// Smallest |pole - zero| distance; small values hint at overmodeling.
  double closest_pole_zero = 0.0;
};

struct OrderScan {
  std::vector<OrderScanEntry> entries;
  /// Requested order leaves a residual that one extra order cuts by > 100x.
  bool undermodeled = false;
  /// An extra order yields a near-cancelling pole/zero pair, or is not
  /// identifiable from the data at all (rank-deficient fit).
  bool overmodeled_hint = false;
};

/// Fits at (nb, na), (nb+1, na+1), (nb+2, na+2).
inline OrderScan order_scan(const FrfEstimate &frf, std::size_t nb, std::size_t na, std::size_t delay,
                            double cancel_distance = 1e-3) {
  OrderScan scan;
  for (std::size_t i = 0; i < 3; ++i) {
    if (frf.bins.size() < nb + na + 2 * i + 1) break;
    OrderScanEntry e{nb + i, na + i, 0.0, std::numeric_limits<double>::infinity()};
    try {
      const auto fit = fit_rational(frf, nb + i, na + i, delay);
      e.residual = fit.residual;
      for (const auto &z : poly::roots(fit.model.num))
        for (const auto &p : fit.model.poles()) e.closest_pole_zero = std::min(e.closest_pole_zero, std::abs(z - p));
    } catch (const NumericError &) {
      e.residual = std::numeric_limits<double>::quiet_NaN();
      if (i > 0) scan.overmodeled_hint = true;
    }
    scan.entries.push_back(e);
  }
  if (scan.entries.size() >= 2) {
    scan.undermodeled = scan.entries[1].residual < 1e-2 * scan.entries[0].residual;
    for (std::size_t i = 1; i < scan.entries.size(); ++i)
      scan.overmodeled_hint = scan.overmodeled_hint || scan.entries[i].closest_pole_zero < cancel_distance;
  }
  return scan;
}

// ------------------------------------------------------- multi-setpoint BLA

enum class ExcitationKind { multisine, gaussian };

struct ExcitationSpec {
  ExcitationKind kind = ExcitationKind::multisine;
  std::size_t samples = 4096;          // period (multisine) or processed record length
  std::vector<std::size_t> bins;       // empty: every bin with positive power
  PowerSpectrum spectrum;
  PhaseLaw phase_law = PhaseLaw::uniform;
  double eps = 0.01;
  SignalClass cls = SignalClass::s_eps;
  std::size_t records = 8;
  std::optional<std::size_t> warmup;   // empty: derived from the slowest pole
  double noise_std = 0.0;              // additive output noise
  /// Excite odd bins only: even-order distortion then falls on unexcited
  /// bins and leaves the FRF at the excited ones.
  bool odd_bins = false;
};

struct FitOrders {
  std::size_t nb = 1;
  std::size_t na = 1;
  std::size_t delay = 0;
};

struct SetpointResult {
  OperatingPoint op;
  FrfEstimate frf;
  FitResult fit;
  std::size_t warmup = 0;
};

/// splitmix64 finalizer; derives independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::vector<std::size_t> excited_bins(const ExcitationSpec &x) {
  std::vector<std::size_t> out;
  for (auto k : x.bins.empty() ? all_bins(x.samples) : x.bins)
    if ((!x.odd_bins || k % 2 == 1) && (!x.bins.empty() || x.spectrum.at(static_cast<double>(k) / static_cast<double>(x.samples)) > 0.0))
      out.push_back(k);
  return out;
}

/// One record pair at setpoint r_dc: excitation around r_dc and the
/// steady-state response (plus optional output noise).
inline Record simulate_record(const BlockGraph &g, const OperatingPoint &op, const ExcitationSpec &x,
                              std::size_t warmup, std::uint64_t seed) {
  Signal u;
  if (x.kind == ExcitationKind::multisine) {
    MultisineSpec ms{x.samples, excited_bins(x), x.spectrum, x.phase_law, seed};
    u = generate_multisine(ms);
  } else {
    u = generate_gaussian(x.spectrum, x.samples + warmup, seed);
  }
  u = with_dc(scale_to_class(u, x.eps, x.cls), op.r_dc);
  Record rec;
  rec.output = simulate(g, u, warmup, op);
  if (x.kind == ExcitationKind::gaussian) {
    u.samples.erase(u.samples.begin(), u.samples.begin() + static_cast<std::ptrdiff_t>(warmup));
  }
  rec.input = u;
  if (x.noise_std > 0.0) {
    std::mt19937_64 rng(mix_seed(seed, 0xa0d1));
    std::normal_distribution<double> noise(0.0, x.noise_std);
    for (auto &v : rec.output.samples) v += noise(rng);
  }
  return rec;
}

/// For each setpoint: DC solve (continued from the previous setpoint), M
/// simulated realizations, FRF estimate and rational fit. Deterministic given
/// the seed; up to `jobs` setpoints are processed concurrently.
inline std::vector<SetpointResult> bla_at_setpoints(const BlockGraph &g, std::span<const double> setpoints,
                                                    const ExcitationSpec &x, const FitOrders &orders,
                                                    std::uint64_t seed, std::size_t jobs = 1) {
  if (setpoints.empty()) throw std::invalid_argument("no setpoints");
  if (x.records == 0) throw std::invalid_argument("at least one realization is needed");
  std::vector<OperatingPoint> ops;
  for (std::size_t k = 0; k < setpoints.size(); ++k) {
    SetpointOptions so;
    if (k > 0) so.initial_tears = ops.back().tears;
    try {
      ops.push_back(solve_setpoint(g, setpoints[k], so));
      check_local_stability(g, ops.back());
    } catch (const NumericError &e) {
      throw NumericError("setpoint " + std::to_string(k) + " (r_dc = " + std::to_string(setpoints[k]) + "): " + e.what());
    }
  }
  const auto bins = excited_bins(x);
  auto work = [&](std::size_t k) {
    SetpointResult res;
    res.op = ops[k];
    res.warmup = x.warmup ? *x.warmup : warmup_at(g, ops[k]);
    std::vector<Record> recs;
    try {
      for (std::size_t m = 0; m < x.records; ++m)
        recs.push_back(simulate_record(g, ops[k], x, res.warmup, mix_seed(seed, k, m)));
      res.frf = estimate_frf(recs, bins);
      res.fit = fit_rational(res.frf, orders.nb, orders.na, orders.delay);
    } catch (const std::exception &e) {
      throw NumericError("setpoint " + std::to_string(k) + " (r_dc = " + std::to_string(setpoints[k]) + "): " + e.what());
    }
    return res;
  };
  std::vector<SetpointResult> out(setpoints.size());
  jobs = std::max<std::size_t>(jobs, 1);
  for (std::size_t start = 0; start < setpoints.size(); start += jobs) {
    const std::size_t end = std::min(setpoints.size(), start + jobs);
    if (jobs == 1) {
      out[start] = work(start);
      continue;
    }
    std::vector<std::future<SetpointResult>> futs;
    for (std::size_t k = start; k < end; ++k) futs.push_back(std::async(std::launch::async, work, k));
    for (std::size_t k = start; k < end; ++k) out[k] = futs[k - start].get();
  }
  return out;
}

} // namespace blockid
