#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "modalgraph/dsp.hpp"

using namespace modalgraph;
using namespace modalgraph::dsp;

TEST(Butterworth, HalfPowerAtCutoffUnitDc) {
  for (int order : {2, 4, 8}) {
    const auto sos = butterworth_lowpass(order, 20.0, 200.0);
    EXPECT_EQ(static_cast<int>(sos.size()), order / 2);
    EXPECT_NEAR(magnitude_response(sos, 0.0, 200.0), 1.0, 1e-12);
    EXPECT_NEAR(magnitude_response(sos, 20.0, 200.0), 1.0 / std::sqrt(2.0), 1e-9);
    // maximally flat: monotone decreasing
    double prev = 1.0 + 1e-12;
    for (double f = 1.0; f < 100.0; f += 1.0) {
      const double m = magnitude_response(sos, f, 200.0);
      EXPECT_LT(m, prev);
      prev = m;
    }
  }
}

TEST(Butterworth, StopbandRollOffMatchesOrder) {
  // far below Nyquist the bilinear warp is small: about -6n dB per octave
  const auto sos = butterworth_lowpass(8, 5.0, 1000.0);
  const double r = magnitude_response(sos, 40.0, 1000.0) / magnitude_response(sos, 20.0, 1000.0);
  EXPECT_NEAR(20 * std::log10(r), -48.0, 1.5);
}

TEST(Butterworth, RejectsBadArguments) {
  EXPECT_THROW(butterworth_lowpass(3, 20.0, 200.0), InvalidArgument);
  EXPECT_THROW(butterworth_lowpass(8, 100.0, 200.0), InvalidArgument);
  EXPECT_THROW(butterworth_lowpass(8, 0.0, 200.0), InvalidArgument);
}

TEST(Filtfilt, ConstantPassesAndSineAmplitudeSquared) {
  const auto sos = butterworth_lowpass(8, 20.0, 200.0);
  std::vector<double> c(500, 3.25);
  const auto y = sosfiltfilt(sos, c);
  for (double v : y) EXPECT_NEAR(v, 3.25, 1e-9);

  // zero phase: a sine comes back in phase, scaled by |H|^2
  const double f = 15.0, fs = 200.0;
  std::vector<double> x(4000);
  for (std::size_t k = 0; k < x.size(); ++k) x[k] = std::sin(2 * kPi * f * k / fs);
  const auto z = sosfiltfilt(sos, x);
  const double g = std::pow(magnitude_response(sos, f, fs), 2);
  for (std::size_t k = 1000; k < 3000; ++k) EXPECT_NEAR(z[k], g * x[k], 1e-6);
}

TEST(Fft, MatchesNaiveDftAndInverts) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  for (int n : {1, 2, 8, 64}) {
    std::vector<Complex> x(n);
    for (auto& v : x) v = {n01(rng), n01(rng)};
    const auto X = fft(x);
    for (int k = 0; k < n; ++k) {
      Complex ref = 0;
      for (int t = 0; t < n; ++t) ref += x[t] * std::polar(1.0, -2 * kPi * k * t / n);
      EXPECT_NEAR(std::abs(X[k] - ref), 0.0, 1e-10);
    }
    const auto back = ifft(X);
    for (int t = 0; t < n; ++t) EXPECT_NEAR(std::abs(back[t] - x[t]), 0.0, 1e-12);
  }
}

TEST(Fft, RfftIsHalfSpectrumOfZeroPadded) {
  const std::vector<double> x{1.0, -2.0, 0.5, 4.0, 3.0};
  const auto R = rfft(x, 8);
  ASSERT_EQ(R.size(), 5u);
  std::vector<Complex> padded(8, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) padded[i] = x[i];
  const auto F = fft(padded);
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(std::abs(R[k] - F[k]), 0.0, 1e-12);
}

TEST(Fft, NextPow2) {
  EXPECT_EQ(next_pow2(1), 1);
  EXPECT_EQ(next_pow2(2), 2);
  EXPECT_EQ(next_pow2(1000), 1024);
  EXPECT_EQ(next_pow2(1024), 1024);
  EXPECT_EQ(next_pow2(1025), 2048);
}

TEST(Periodogram, ParsevalAndPeakBin) {
  const double fs = 50.0;
  const int T = 1024;
  std::vector<double> x(T);
  for (int k = 0; k < T; ++k) x[k] = 2.0 * std::cos(2 * kPi * 100.0 * k / T);  // bin 100
  const auto s = periodogram(x, fs);
  ASSERT_EQ(s.freq_hz.size(), static_cast<std::size_t>(T / 2 + 1));
  EXPECT_DOUBLE_EQ(s.resolution(), fs / T);
  std::size_t peak = 0;
  for (std::size_t k = 0; k < s.power.size(); ++k)
    if (s.power[k] > s.power[peak]) peak = k;
  EXPECT_EQ(peak, 100u);
  double area = 0.0, var = 0.0;
  for (double p : s.power) area += p * s.resolution();
  for (double v : x) var += v * v / T;
  EXPECT_NEAR(area, var, 1e-9 * var);
}
