#pragma once

// Excitation signals: random-phase multisines, spectrally shaped Gaussian
// noise, and rescaling into the small-signal classes S_eps / S_delta.
// Frequencies are normalized (sample rate 1): f = k / N, f in [0, 0.5].

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "blockid/polynomial.hpp"

namespace blockid {

/// Two-sided power density, even in f, piecewise constant on [0, 0.5].
/// Piece i has density `levels[i]` on [edges[i], edges[i+1]), the last piece
/// runs up to 0.5. edges[0] must be 0.
class PowerSpectrum {
public:
  PowerSpectrum() = default;

  PowerSpectrum(std::vector<double> edges, std::vector<double> levels)
      : edges_(std::move(edges)), levels_(std::move(levels)) {
    if (edges_.empty() || edges_.size() != levels_.size())
      throw std::invalid_argument("spectrum needs one level per edge");
    if (edges_.front() != 0.0) throw std::invalid_argument("spectrum must start at f = 0");
    for (std::size_t i = 1; i < edges_.size(); ++i)
      if (!(edges_[i] > edges_[i - 1])) throw std::invalid_argument("spectrum edges must increase");
    if (edges_.back() >= 0.5) throw std::invalid_argument("spectrum edges must lie below f = 0.5");
    bool positive = false;
    for (double l : levels_) {
      if (!(l >= 0.0) || !std::isfinite(l)) throw std::invalid_argument("spectrum levels must be finite and nonnegative");
      positive = positive || l > 0.0;
    }
    if (!positive) throw std::invalid_argument("spectrum has no band with positive power");
  }

  static PowerSpectrum flat(double level = 1.0) { return PowerSpectrum({0.0}, {level}); }

  /// `level` on [lo, hi), zero elsewhere.
  static PowerSpectrum band(double lo, double hi, double level = 1.0) {
    std::vector<double> e{0.0}, l{0.0};
    if (lo > 0.0) {
      e.push_back(lo);
      l.push_back(level);
    } else {
      l[0] = level;
    }
    if (hi < 0.5) {
      e.push_back(hi);
      l.push_back(0.0);
    }
    return PowerSpectrum(std::move(e), std::move(l));
  }

  const std::vector<double> &edges() const { return edges_; }
  const std::vector<double> &levels() const { return levels_; }

  /// Density at f, folded into [0, 0.5] by evenness and unit periodicity.
  double at(double f) const {
    f = std::abs(std::remainder(f, 1.0));
    const auto it = std::upper_bound(edges_.begin(), edges_.end(), f);
    return levels_[static_cast<std::size_t>(it - edges_.begin()) - 1];
  }

  /// Exact integral of the density over [lo, hi] with 0 <= lo <= hi <= 0.5.
  double integral(double lo, double hi) const {
    double total = 0.0;
    for (std::size_t i = 0; i < edges_.size(); ++i) {
      const double a = std::max(lo, edges_[i]);
      const double b = std::min(hi, i + 1 < edges_.size() ? edges_[i + 1] : 0.5);
      if (b > a) total += levels_[i] * (b - a);
    }
    return total;
  }

  /// Variance of a signal with this spectrum.
  double total_power() const { return 2.0 * integral(0.0, 0.5); }

private:
  std::vector<double> edges_{0.0};
  std::vector<double> levels_{1.0};
};

/// Phase distributions with E{exp(j phi)} = 0.
enum class PhaseLaw { uniform, binary };

struct MultisineSpec {
  std::size_t N = 1024;
  std::vector<std::size_t> bins;
  PowerSpectrum spectrum;
  PhaseLaw phase_law = PhaseLaw::uniform;
  std::uint64_t seed = 0;
};

/// Every bin 1 .. N/2-1.
inline std::vector<std::size_t> all_bins(std::size_t N) {
  std::vector<std::size_t> k;
  for (std::size_t i = 1; i < N / 2; ++i) k.push_back(i);
  return k;
}

/// Bins with lo <= k/N < hi, restricted to 1 .. N/2-1.
inline std::vector<std::size_t> bins_in_band(std::size_t N, double lo, double hi) {
  std::vector<std::size_t> k;
  for (std::size_t i = 1; i < N / 2; ++i) {
    const double f = static_cast<double>(i) / static_cast<double>(N);
    if (f >= lo && f < hi) k.push_back(i);
  }
  return k;
}

enum class SignalClass { riemann, s_eps, s_delta };

struct Signal {
  std::vector<double> samples;
  double dc = 0.0;
  double eps = 0.0;
  SignalClass cls = SignalClass::riemann;
  /// One period of a periodic signal (simulation may wrap around it).
  bool periodic = false;
};

namespace detail {

/// Uniform double in [0, 1) from the top 53 bits.
inline double unit_uniform(std::mt19937_64 &rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::vector<double> real_ifft_hermitian(std::vector<Complex> half, std::size_t N) {
  // half[k] = coefficient of exp(j 2 pi k t / N) for k = 0..N/2
  std::vector<Complex> full(N, Complex{0.0, 0.0});
  for (std::size_t k = 0; k < half.size() && k <= N / 2; ++k) {
    full[k] = half[k];
    if (k != 0 && N - k != k) full[N - k] = std::conj(half[k]);
  }
  Eigen::FFT<double> fft;
  std::vector<Complex> time;
  fft.inv(time, full);
  std::vector<double> out(N);
  for (std::size_t t = 0; t < N; ++t) out[t] = time[t].real() * static_cast<double>(N);
  return out;
}

inline double rms_about(std::span<const double> x, double centre) {
  double s = 0.0;
  for (double v : x) s += (v - centre) * (v - centre);
  return std::sqrt(s / static_cast<double>(x.size()));
}

inline double max_abs_about(std::span<const double> x, double centre) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v - centre));
  return m;
}

} // namespace detail

/// DFT / N for bins 0 .. N/2: the U_k of u(t) = sum_k U_k exp(j 2 pi k t / N).
inline std::vector<Complex> fourier_coefficients(std::span<const double> x) {
  if (x.empty()) return {};
  Eigen::FFT<double> fft;
  std::vector<double> in(x.begin(), x.end());
  std::vector<Complex> spec;
  fft.fwd(spec, in);
  const std::size_t N = x.size();
  std::vector<Complex> out(N / 2 + 1);
  for (std::size_t k = 0; k <= N / 2; ++k) out[k] = spec[k] / static_cast<double>(N);
  return out;
}

/// Real multisine with prescribed positive-frequency coefficients U_k
/// (bins 0 .. N/2); u(t) = sum over k != 0 of U_k exp(j 2 pi k t / N) + c.c.
inline Signal synthesize_multisine(std::size_t N, const std::vector<Complex> &coefficients) {
  if (N == 0 || N % 2 != 0) throw std::invalid_argument("multisine period must be positive and even");
  std::vector<Complex> half(N / 2 + 1, Complex{0.0, 0.0});
  for (std::size_t k = 1; k < N / 2 && k < coefficients.size(); ++k) half[k] = coefficients[k];
  Signal s;
  s.samples = detail::real_ifft_hermitian(std::move(half), N);
  s.eps = detail::rms_about(s.samples, 0.0);
  s.periodic = true;
  return s;
}

/// Random-phase multisine: |U_k| = sqrt(S(k/N)) / sqrt(N) on the excited
/// bins, zero elsewhere, phases i.i.d. from the phase law.
inline Signal generate_multisine(const MultisineSpec &spec) {
  if (spec.N == 0 || spec.N % 2 != 0) throw std::invalid_argument("multisine period must be positive and even");
  if (spec.bins.empty()) throw std::invalid_argument("multisine needs at least one excited bin");
  std::vector<std::size_t> bins = spec.bins;
  std::sort(bins.begin(), bins.end());
  if (std::adjacent_find(bins.begin(), bins.end()) != bins.end())
    throw std::invalid_argument("excited bins must be distinct");
  if (bins.front() < 1 || bins.back() >= spec.N / 2)
    throw std::invalid_argument("excited bins must lie in 1 .. N/2-1");

  std::mt19937_64 rng(spec.seed);
  const double N = static_cast<double>(spec.N);
  std::vector<Complex> coeff(spec.N / 2 + 1, Complex{0.0, 0.0});
  for (std::size_t k : bins) {
    double phase = 0.0;
    if (spec.phase_law == PhaseLaw::uniform)
      phase = 2.0 * std::numbers::pi * detail::unit_uniform(rng);
    else
      phase = (rng() >> 63) ? std::numbers::pi : 0.0;
    const double amplitude = std::sqrt(spec.spectrum.at(static_cast<double>(k) / N)) / std::sqrt(N);
    coeff[k] = std::polar(amplitude, phase);
  }
  return synthesize_multisine(spec.N, coeff);
}

namespace detail {

inline double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  for (int k = 1; k < 200; ++k) {
    term *= (x / (2.0 * k)) * (x / (2.0 * k));
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

constexpr double kKaiserBeta = 10.0;

} // namespace detail

/// Linear-phase FIR of `length` taps whose magnitude approximates sqrt(S).
/// The ideal response is sampled on a fine grid, inverse transformed, cut to
/// an odd number of taps around the centre and Kaiser-windowed. Band edges
/// are pulled inward by one transition width so stopbands stay clean.
inline std::vector<double> shaping_filter(const PowerSpectrum &spectrum, std::size_t length) {
  if (length == 0) throw std::invalid_argument("filter length must be positive");
  const std::size_t taps = length % 2 == 1 ? length : length - 1;
  if (taps == 0) return {std::sqrt(spectrum.total_power())};
  const std::size_t grid = std::max<std::size_t>(16 * length, 256);
  const double dgrid = static_cast<double>(grid);

  std::vector<double> mag(grid);
  for (std::size_t m = 0; m < grid; ++m) mag[m] = std::sqrt(spectrum.at(static_cast<double>(m) / dgrid));

  if (taps >= 16) {
    const double atten = detail::kKaiserBeta / 0.1102 + 8.7;
    const double transition = (atten - 8.0) / (2.285 * 2.0 * std::numbers::pi * static_cast<double>(taps - 1));
    const auto half_width = static_cast<std::ptrdiff_t>(std::ceil(transition * dgrid));
    std::vector<double> eroded(grid);
    const auto g = static_cast<std::ptrdiff_t>(grid);
    for (std::ptrdiff_t m = 0; m < g; ++m) {
      double lo = mag[static_cast<std::size_t>(m)];
      for (std::ptrdiff_t d = -half_width; d <= half_width; ++d)
        lo = std::min(lo, mag[static_cast<std::size_t>(((m + d) % g + g) % g)]);
      eroded[static_cast<std::size_t>(m)] = lo;
    }
    mag = std::move(eroded);
  }

  std::vector<Complex> spec(mag.begin(), mag.end());
  Eigen::FFT<double> fft;
  std::vector<Complex> impulse;
  fft.inv(impulse, spec);

  const std::size_t centre = (taps - 1) / 2;
  std::vector<double> h(length, 0.0);
  const double i0beta = detail::bessel_i0(detail::kKaiserBeta);
  for (std::size_t i = 0; i < taps; ++i) {
    const auto lag = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(centre);
    const auto idx = static_cast<std::size_t>((lag + static_cast<std::ptrdiff_t>(grid)) % static_cast<std::ptrdiff_t>(grid));
    double w = 1.0;
    if (taps > 1) {
      const double r = 2.0 * static_cast<double>(i) / static_cast<double>(taps - 1) - 1.0;
      w = detail::bessel_i0(detail::kKaiserBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0beta;
    }
    h[i] = impulse[idx].real() * w;
  }
  return h;
}

/// Zero-mean Gaussian record of N samples with power spectrum S. White noise
/// is passed through shaping_filter of min(N, 1024) taps; the first
/// filter-length output samples are discarded as warm-up.
inline Signal generate_gaussian(const PowerSpectrum &spectrum, std::size_t N, std::uint64_t seed) {
  if (N < 2) throw std::invalid_argument("Gaussian record needs at least 2 samples");
  const std::size_t L = std::min<std::size_t>(N, 1024);
  const auto h = shaping_filter(spectrum, L);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> white(N);
  for (auto &w : white) w = normal(rng);
  // The filter runs over the periodic extension of the white record, so the
  // warm-up samples are the record's own tail and its DFT carries no leakage.
  Signal s;
  s.samples.assign(N, 0.0);
  for (std::size_t t = 0; t < N; ++t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < L; ++i) acc += h[i] * white[(t + N - i) % N];
    s.samples[t] = acc;
  }
  s.eps = detail::rms_about(s.samples, 0.0);
  s.cls = SignalClass::riemann;
  return s;
}

/// Rescale the AC part (samples - dc) so that its RMS (S_eps) or peak
/// (S_delta) equals eps. A signal already in class is returned unchanged.
inline Signal scale_to_class(const Signal &signal, double eps, SignalClass cls) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw std::invalid_argument("eps must be positive");
  if (cls == SignalClass::riemann) throw std::invalid_argument("target class must be S_eps or S_delta");
  if (signal.samples.empty()) throw std::invalid_argument("empty signal");
  const double level = cls == SignalClass::s_eps ? detail::rms_about(signal.samples, signal.dc)
                                                 : detail::max_abs_about(signal.samples, signal.dc);
  if (level == 0.0) throw std::invalid_argument("signal has no AC part to rescale");
  Signal out = signal;
  out.eps = eps;
  out.cls = cls;
  const double factor = eps / level;
  if (std::abs(factor - 1.0) <= 8.0 * std::numeric_limits<double>::epsilon()) return out;
  for (auto &v : out.samples) v = signal.dc + (v - signal.dc) * factor;
  return out;
}

/// Same samples around a new setpoint.
inline Signal with_dc(const Signal &signal, double dc) {
  Signal out = signal;
  for (auto &v : out.samples) v += dc - signal.dc;
  out.dc = dc;
  return out;
}

struct BandPower {
  double lo = 0.0;
  double hi = 0.0;
  double empirical = 0.0;
  double target = 0.0;
  double deviation = 0.0;
};

/// Per band (lo, hi) in normalized frequency, 0 < lo < hi < 0.5: the summed
/// power of U_k over k = int(lo N) .. int(hi N), averaged over records,
/// against the spectrum integral over the band.
inline std::vector<BandPower> check_riemann_equivalence(std::span<const Signal> records,
                                                        const PowerSpectrum &spectrum,
                                                        std::span<const std::pair<double, double>> bands) {
  if (records.empty()) throw std::invalid_argument("no records");
  for (const auto &[lo, hi] : bands)
    if (!(lo > 0.0) || !(hi < 0.5) || !(lo < hi))
      throw std::invalid_argument("bands must satisfy 0 < lo < hi < 0.5");
  std::vector<BandPower> out;
  for (const auto &[lo, hi] : bands) out.push_back({lo, hi, 0.0, spectrum.integral(lo, hi), 0.0});
  for (const auto &rec : records) {
    std::vector<double> ac(rec.samples.size());
    for (std::size_t t = 0; t < ac.size(); ++t) ac[t] = rec.samples[t] - rec.dc;
    const auto U = fourier_coefficients(ac);
    const double N = static_cast<double>(ac.size());
    for (auto &b : out) {
      const auto k1 = static_cast<std::size_t>(b.lo * N);
      const auto k2 = static_cast<std::size_t>(b.hi * N);
      for (std::size_t k = k1; k <= k2 && k < U.size(); ++k) b.empirical += std::norm(U[k]);
    }
  }
  for (auto &b : out) {
    b.empirical /= static_cast<double>(records.size());
    b.deviation = b.empirical - b.target;
  }
  return out;
}

inline std::vector<BandPower> check_riemann_equivalence(const Signal &signal, const PowerSpectrum &spectrum,
                                                        std::span<const std::pair<double, double>> bands) {
  return check_riemann_equivalence(std::span<const Signal>(&signal, 1), spectrum, bands);
}

/// Two-column CSV: index,value.
inline void write_csv(std::ostream &os, const Signal &signal) {
  os << "index,value\n" << std::setprecision(17);
  for (std::size_t t = 0; t < signal.samples.size(); ++t) os << t << ',' << signal.samples[t] << '\n';
}

} // namespace blockid
