#pragma once

#include <complex>
#include <string>
#include <vector>

#include "modalgraph/common.hpp"
#include "modalgraph/identify.hpp"

namespace modalgraph {

using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

struct CrossSpectralStack {
  std::vector<double> freq_hz;
  std::vector<ComplexMatrix> G;  // per line, M x M Hermitian
  int segments = 0;
  bool single_segment_fallback = false;

  double resolution() const { return freq_hz.size() > 1 ? freq_hz[1] - freq_hz[0] : 0.0; }
};

// Welch cross-spectral densities (Hann window, segment length, fractional
// overlap). Records shorter than one segment use a single zero-padded segment.
CrossSpectralStack cross_psd(const Matrix& X, double fs_hz, int segment = 512, double overlap = 0.5);

struct EfddParams {
  int segment = 512;
  double overlap = 0.5;
  double bell_mac = 0.8;
  int min_separation = 3;  // bins between picked peaks
  int damping_peaks = 5;
};

// Complex MAC |a^H b|^2 / (|a|^2 |b|^2).
double complex_mac(const ComplexVector& a, const ComplexVector& b);

// Rotates a complex shape so its largest entry is real and returns the real
// part scaled to unit max-abs with a positive dominant entry.
Vector realize_shape(const ComplexVector& v);

std::vector<IdentifiedMode> efdd_identify(const CrossSpectralStack& stack, int n_target, double fs_hz,
                                          const EfddParams& p = {});

struct SsiModel {
  Matrix A;
  Matrix C;
  int order = 0;
  std::vector<std::complex<double>> poles;  // continuous-time, 1/s
};

struct SsiParams {
  int order = 0;  // 0 means 2 * n_target
  double max_damping = 0.2;
};

// Covariance-driven SSI. Block rows = order; shapes returned on the M channels.
std::vector<IdentifiedMode> ssi_identify(const Matrix& X, double fs_hz, int n_target, const SsiParams& p = {},
                                         SsiModel* model = nullptr);

// Piecewise-linear in x between measured positions, linear extrapolation
// outside; duplicate measured x values are averaged first. shapes: M x k.
Matrix interpolate_shapes(const Matrix& shapes, const std::vector<double>& measured_x,
                          const std::vector<double>& query_x);

enum class BaselineMethod { efdd, ssi };
const char* baseline_name(BaselineMethod m);
BaselineMethod parse_baseline(const std::string& s);

struct BaselineParams {
  int n_target = 4;
  EfddParams efdd;
  SsiParams ssi;
};

// Runs a baseline on the measured rows of one structure and extends the shapes
// to every node by interpolation in x.
StructureIdentification baseline_structure(BaselineMethod method, const Matrix& signals,
                                           const std::vector<int>& measured, const std::vector<double>& node_x,
                                           double fs_hz, const BaselineParams& p);

}  // namespace modalgraph
