#pragma once

#include <complex>
#include <span>
#include <vector>

#include "modalgraph/common.hpp"

namespace modalgraph::dsp {

using Complex = std::complex<double>;

// One biquad in direct-form-II-transposed layout: b0 b1 b2 / 1 a1 a2.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

// Digital Butterworth low-pass via the bilinear transform with pre-warping.
// order must be even; each section is normalised to unit DC gain.
std::vector<Biquad> butterworth_lowpass(int order, double cutoff_hz, double fs_hz);

// |H(e^{jw})| of the cascade at frequency f.
double magnitude_response(const std::vector<Biquad>& sos, double f_hz, double fs_hz);

// Single causal pass with explicit initial states (two per section).
void sosfilt(const std::vector<Biquad>& sos, std::span<double> x, std::vector<double> zi);

// Forward-backward filtering with odd extension and steady-state initial
// conditions, so constant signals pass unchanged.
std::vector<double> sosfiltfilt(const std::vector<Biquad>& sos, std::span<const double> x);

int next_pow2(int n);

// One-sided spectrum of x zero-padded to n_fft: n_fft / 2 + 1 bins.
std::vector<Complex> rfft(std::span<const double> x, int n_fft);

// Full complex DFT (forward, unnormalised) and inverse (normalised by 1/n).
std::vector<Complex> fft(const std::vector<Complex>& x);
std::vector<Complex> ifft(const std::vector<Complex>& x);

struct Spectrum {
  std::vector<double> freq_hz;
  std::vector<double> power;

  double resolution() const { return freq_hz.size() > 1 ? freq_hz[1] - freq_hz[0] : 0.0; }
};

// Periodogram of the whole record, zero-padded to the next power of two >= T.
// Density scaling: |X_k|^2 / (fs T), doubled on interior bins.
Spectrum periodogram(std::span<const double> x, double fs_hz);

}  // namespace modalgraph::dsp
