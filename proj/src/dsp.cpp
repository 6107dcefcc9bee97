#include "modalgraph/dsp.hpp"

#include <algorithm>
#include <cmath>

#include <unsupported/Eigen/FFT>

namespace modalgraph::dsp {

std::vector<Biquad> butterworth_lowpass(int order, double cutoff_hz, double fs_hz) {
  require(order >= 2 && order % 2 == 0, "butterworth_lowpass: order must be even and >= 2");
  require(fs_hz > 0.0, "butterworth_lowpass: fs must be positive");
  require(cutoff_hz > 0.0 && cutoff_hz < 0.5 * fs_hz,
          "butterworth_lowpass: cutoff must lie strictly between 0 and Nyquist");
  const double warped = 2.0 * fs_hz * std::tan(kPi * cutoff_hz / fs_hz);
  std::vector<Biquad> sos;
  for (int k = 0; k < order / 2; ++k) {
    const double theta = kPi * (2.0 * k + order + 1) / (2.0 * order);
    const Complex s_pole = warped * Complex(std::cos(theta), std::sin(theta));
    const Complex z_pole = (1.0 + s_pole / (2.0 * fs_hz)) / (1.0 - s_pole / (2.0 * fs_hz));
    Biquad q;
    q.a1 = -2.0 * z_pole.real();
    q.a2 = std::norm(z_pole);
    const double gain = (1.0 + q.a1 + q.a2) / 4.0;
    q.b0 = gain;
    q.b1 = 2.0 * gain;
    q.b2 = gain;
    sos.push_back(q);
  }
  return sos;
}

double magnitude_response(const std::vector<Biquad>& sos, double f_hz, double fs_hz) {
  const Complex z = std::polar(1.0, 2.0 * kPi * f_hz / fs_hz);
  const Complex zi = 1.0 / z;
  Complex h = 1.0;
  for (const auto& q : sos)
    h *= (q.b0 + q.b1 * zi + q.b2 * zi * zi) / (1.0 + q.a1 * zi + q.a2 * zi * zi);
  return std::abs(h);
}

void sosfilt(const std::vector<Biquad>& sos, std::span<double> x, std::vector<double> zi) {
  zi.resize(2 * sos.size(), 0.0);
  for (double& sample : x) {
    double v = sample;
    for (std::size_t s = 0; s < sos.size(); ++s) {
      const Biquad& q = sos[s];
      double& z1 = zi[2 * s];
      double& z2 = zi[2 * s + 1];
      const double y = q.b0 * v + z1;
      z1 = q.b1 * v - q.a1 * y + z2;
      z2 = q.b2 * v - q.a2 * y;
      v = y;
    }
    sample = v;
  }
}

namespace {

// States reached after an infinitely long unit step.
std::vector<double> step_states(const std::vector<Biquad>& sos) {
  std::vector<double> zi;
  double input = 1.0;
  for (const auto& q : sos) {
    const double y = input * (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
    const double z2 = q.b2 * input - q.a2 * y;
    const double z1 = q.b1 * input - q.a1 * y + z2;
    zi.push_back(z1);
    zi.push_back(z2);
    input = y;
  }
  return zi;
}

}  // namespace

std::vector<double> sosfiltfilt(const std::vector<Biquad>& sos, std::span<const double> x) {
  const int n = static_cast<int>(x.size());
  if (n == 0) return {};
  const int pad = std::min(n - 1, 3 * (2 * static_cast<int>(sos.size()) + 1));
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (int i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (int i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  const std::vector<double> unit = step_states(sos);
  auto scaled = [&](double s) {
    std::vector<double> z = unit;
    for (double& v : z) v *= s;
    return z;
  };
  sosfilt(sos, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  sosfilt(sos, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  return std::vector<double>(ext.begin() + pad, ext.begin() + pad + n);
}

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

std::vector<Complex> rfft(std::span<const double> x, int n_fft) {
  require(n_fft >= static_cast<int>(x.size()), "rfft: n_fft shorter than the input");
  std::vector<double> buf(n_fft, 0.0);
  std::copy(x.begin(), x.end(), buf.begin());
  if (n_fft <= 1) return {buf.begin(), buf.end()};
  Eigen::FFT<double> engine;
  engine.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<Complex> out;
  engine.fwd(out, buf);
  out.resize(n_fft / 2 + 1);
  return out;
}

// kissfft has no stage for n = 1 and reads past its factor table
std::vector<Complex> fft(const std::vector<Complex>& x) {
  if (x.size() <= 1) return x;
  Eigen::FFT<double> engine;
  std::vector<Complex> out;
  engine.fwd(out, x);
  return out;
}

std::vector<Complex> ifft(const std::vector<Complex>& x) {
  if (x.size() <= 1) return x;
  Eigen::FFT<double> engine;
  std::vector<Complex> out;
  engine.inv(out, x);
  return out;
}

Spectrum periodogram(std::span<const double> x, double fs_hz) {
  const int T = static_cast<int>(x.size());
  require(T >= 16, "psd: need at least 16 samples");
  require(fs_hz > 0.0, "psd: fs must be positive");
  const int n_fft = next_pow2(T);
  const auto X = rfft(x, n_fft);
  Spectrum s;
  s.freq_hz.resize(X.size());
  s.power.resize(X.size());
  const double scale = 1.0 / (fs_hz * T);
  for (std::size_t k = 0; k < X.size(); ++k) {
    s.freq_hz[k] = fs_hz * static_cast<double>(k) / n_fft;
    double p = std::norm(X[k]) * scale;
    if (k != 0 && k != X.size() - 1) p *= 2.0;
    s.power[k] = p;
  }
  return s;
}

}  // namespace modalgraph::dsp
