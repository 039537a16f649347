#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "blockid/signals.hpp"

using namespace blockid;

namespace {

MultisineSpec spec_of(std::size_t N, std::vector<std::size_t> bins, std::uint64_t seed = 1,
                      PhaseLaw law = PhaseLaw::uniform) {
  return {N, std::move(bins), PowerSpectrum::flat(), law, seed};
}

double variance(const std::vector<double> &x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size());
}

} // namespace

TEST(PowerSpectrum, RejectsInvalidShapes) {
  EXPECT_THROW(PowerSpectrum({0.1}, {1.0}), std::invalid_argument);
  EXPECT_THROW(PowerSpectrum({0.0, 0.2}, {1.0}), std::invalid_argument);
  EXPECT_THROW(PowerSpectrum({0.0}, {-1.0}), std::invalid_argument);
  EXPECT_THROW(PowerSpectrum({0.0}, {0.0}), std::invalid_argument);
  EXPECT_THROW(PowerSpectrum({0.0, 0.3, 0.2}, {1.0, 1.0, 1.0}), std::invalid_argument);
}

TEST(PowerSpectrum, PiecewiseConstantAndEven) {
  const auto s = PowerSpectrum::band(0.1, 0.3, 2.0);
  EXPECT_EQ(s.at(0.05), 0.0);
  EXPECT_EQ(s.at(0.1), 2.0);
  EXPECT_EQ(s.at(0.2), 2.0);
  EXPECT_EQ(s.at(-0.2), 2.0);
  EXPECT_EQ(s.at(0.35), 0.0);
  EXPECT_NEAR(s.integral(0.0, 0.5), 0.4, 1e-15);
  EXPECT_NEAR(s.total_power(), 0.8, 1e-15);
}

TEST(Multisine, SingleBinAmplitude) {
  const auto u = generate_multisine(spec_of(8, {1}, 42));
  const auto U = fourier_coefficients(u.samples);
  EXPECT_NEAR(std::abs(U[1]), 1.0 / std::sqrt(8.0), 1e-15);
  for (std::size_t k : {0u, 2u, 3u, 4u}) EXPECT_NEAR(std::abs(U[k]), 0.0, 1e-15) << "bin " << k;
}

TEST(Multisine, ZeroPhaseIsCosine) {
  std::vector<Complex> c(5, 0.0);
  c[1] = 1.0 / std::sqrt(8.0);
  const auto u = synthesize_multisine(8, c);
  for (std::size_t t = 0; t < 8; ++t)
    EXPECT_NEAR(u.samples[t], 2.0 / std::sqrt(8.0) * std::cos(2.0 * std::numbers::pi * t / 8.0), 1e-15);
}

TEST(Multisine, AmplitudesSeedIndependentPhasesSeedDependent) {
  std::vector<std::size_t> bins;
  for (std::size_t k = 1; k <= 200; ++k) bins.push_back(k);
  const auto a = fourier_coefficients(generate_multisine(spec_of(1024, bins, 1)).samples);
  const auto b = fourier_coefficients(generate_multisine(spec_of(1024, bins, 2)).samples);
  double phase_diff = 0.0;
  for (std::size_t k = 1; k <= 200; ++k) {
    EXPECT_NEAR(std::abs(a[k]), std::abs(b[k]), 1e-14);
    phase_diff += std::abs(std::arg(a[k] / b[k]));
  }
  EXPECT_GT(phase_diff, 10.0);
  for (std::size_t k = 201; k <= 512; ++k) EXPECT_NEAR(std::abs(a[k]), 0.0, 1e-15);
}

TEST(Multisine, DeterministicGivenSeed) {
  const auto a = generate_multisine(spec_of(256, all_bins(256), 9));
  const auto b = generate_multisine(spec_of(256, all_bins(256), 9));
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_TRUE(a.periodic);
}

TEST(Multisine, Errors) {
  EXPECT_THROW(generate_multisine(spec_of(8, {})), std::invalid_argument);
  EXPECT_THROW(generate_multisine(spec_of(7, {1})), std::invalid_argument);
  EXPECT_THROW(generate_multisine(spec_of(8, {4})), std::invalid_argument);
  EXPECT_THROW(generate_multisine(spec_of(8, {0})), std::invalid_argument);
  EXPECT_THROW(generate_multisine(spec_of(8, {1, 1})), std::invalid_argument);
}

TEST(Multisine, PhaseLawsHaveZeroMeanExponential) {
  for (auto law : {PhaseLaw::uniform, PhaseLaw::binary}) {
    std::vector<std::size_t> bins;
    for (std::size_t k = 1; k <= 10000; ++k) bins.push_back(k);
    const auto U = fourier_coefficients(generate_multisine(spec_of(20002 + 2, bins, 5, law)).samples);
    Complex mean = 0.0;
    for (std::size_t k = 1; k <= 10000; ++k) mean += U[k] / std::abs(U[k]);
    mean /= 10000.0;
    EXPECT_LT(std::abs(mean), 0.05);
  }
}

TEST(Multisine, IsPeriodic) {
  // synthesis over two periods equals the one-period signal repeated
  const auto spec = spec_of(64, all_bins(64), 3);
  const auto u = generate_multisine(spec);
  const auto U = fourier_coefficients(u.samples);
  std::vector<Complex> twice(65, 0.0);
  for (std::size_t k = 1; k < 32; ++k) twice[2 * k] = U[k];
  const auto v = synthesize_multisine(128, twice);
  for (std::size_t t = 0; t < 128; ++t) EXPECT_NEAR(v.samples[t], u.samples[t % 64], 1e-14);
}

TEST(Gaussian, FlatSpectrumVariance) {
  const auto g = generate_gaussian(PowerSpectrum::flat(1.0), 1u << 16, 11);
  EXPECT_NEAR(variance(g.samples), 1.0, 0.05);
  EXPECT_EQ(g.cls, SignalClass::riemann);
}

TEST(Gaussian, StopbandBelowMinus60dB) {
  const std::size_t N = 1u << 14;
  const auto spec = PowerSpectrum::band(0.0, 0.25);
  std::vector<double> pass(N / 2 + 1, 0.0);
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto g = generate_gaussian(spec, N, seed);
    const auto U = fourier_coefficients(g.samples);
    for (std::size_t k = 0; k <= N / 2; ++k) pass[k] += std::norm(U[k]);
  }
  double in = 0.0, out = 0.0;
  std::size_t nin = 0, nout = 0;
  for (std::size_t k = 1; k < N / 2; ++k) {
    if (k < N / 4) {
      in += pass[k];
      ++nin;
    } else {
      out = std::max(out, pass[k]);
      ++nout;
    }
  }
  ASSERT_GT(nout, 0u);
  EXPECT_LT(10.0 * std::log10(out / (in / static_cast<double>(nin))), -60.0);
}

TEST(Gaussian, MinimalLength) {
  const auto g = generate_gaussian(PowerSpectrum::flat(), 2, 0);
  EXPECT_EQ(g.samples.size(), 2u);
  EXPECT_THROW(generate_gaussian(PowerSpectrum::flat(), 1, 0), std::invalid_argument);
}

TEST(ScaleToClass, ExactRescale) {
  Signal s;
  s.samples = {2.0, -2.0, 2.0, -2.0};
  const auto e = scale_to_class(s, 0.01, SignalClass::s_eps);
  EXPECT_NEAR(std::sqrt(variance(e.samples)), 0.01, 1e-15);
  Signal t;
  t.samples = {3.0, -1.0, 0.5};
  const auto d = scale_to_class(t, 0.5, SignalClass::s_delta);
  double peak = 0.0;
  for (double v : d.samples) peak = std::max(peak, std::abs(v));
  EXPECT_DOUBLE_EQ(peak, 0.5);
}

TEST(ScaleToClass, PreservesDcAndIsIdempotent) {
  auto u = with_dc(generate_multisine(spec_of(256, all_bins(256), 4)), 0.7);
  const auto a = scale_to_class(u, 0.01, SignalClass::s_eps);
  EXPECT_EQ(a.dc, 0.7);
  double m = 0.0, ss = 0.0;
  for (double v : a.samples) m += v;
  m /= 256.0;
  EXPECT_NEAR(m, 0.7, 1e-12);
  for (double v : a.samples) ss += (v - 0.7) * (v - 0.7);
  EXPECT_NEAR(std::sqrt(ss / 256.0), 0.01, 1e-12);
  const auto b = scale_to_class(a, 0.01, SignalClass::s_eps);
  EXPECT_EQ(a.samples, b.samples);
}

TEST(ScaleToClass, ConstantSignalRejected) {
  Signal s;
  s.samples = {1.0, 1.0};
  s.dc = 1.0;
  EXPECT_THROW(scale_to_class(s, 0.1, SignalClass::s_eps), std::invalid_argument);
}

TEST(Riemann, MultisineDeviationHalvesWithN) {
  const auto spec = PowerSpectrum::band(0.0, 0.4);
  const std::vector<std::pair<double, double>> bands{{0.125, 0.25}};
  auto dev = [&](std::size_t N) {
    const auto u = generate_multisine({N, bins_in_band(N, 0.0, 0.4), spec, PhaseLaw::uniform, 3});
    return check_riemann_equivalence(u, spec, bands).front().deviation;
  };
  const double d1 = dev(1024), d2 = dev(2048);
  EXPECT_NE(d1, 0.0);
  EXPECT_NEAR(d1 / d2, 2.0, 0.4);
}

TEST(Riemann, ZeroPowerBand) {
  const auto spec = PowerSpectrum::band(0.0, 0.2);
  const auto u = generate_multisine({512, bins_in_band(512, 0.0, 0.2), spec, PhaseLaw::uniform, 3});
  const std::vector<std::pair<double, double>> bands{{0.3, 0.4}};
  const auto r = check_riemann_equivalence(u, spec, bands).front();
  EXPECT_NEAR(r.empirical, 0.0, 1e-28);
  EXPECT_EQ(r.target, 0.0);
}

TEST(Riemann, AveragedGaussianWithinTenPercent) {
  const auto spec = PowerSpectrum({0.0, 0.2}, {1.0, 0.25});
  std::vector<Signal> recs;
  for (std::uint64_t s = 0; s < 64; ++s) recs.push_back(generate_gaussian(spec, 4096, 100 + s));
  const std::vector<std::pair<double, double>> bands{{0.05, 0.15}, {0.25, 0.45}};
  for (const auto &b : check_riemann_equivalence(recs, spec, bands))
    EXPECT_LT(std::abs(b.deviation) / b.target, 0.1) << b.lo << ".." << b.hi;
}

TEST(Riemann, RejectsBandsOutsideRange) {
  Signal s;
  s.samples = {0.0, 1.0, 0.0, -1.0};
  const std::vector<std::pair<double, double>> bad{{0.1, 0.6}};
  EXPECT_THROW(check_riemann_equivalence(s, PowerSpectrum::flat(), bad), std::invalid_argument);
}

TEST(Signal, CsvExport) {
  Signal s;
  s.samples = {0.5, -0.25};
  std::ostringstream os;
  write_csv(os, s);
  EXPECT_EQ(os.str(), "index,value\n0,0.5\n1,-0.25\n");
}
