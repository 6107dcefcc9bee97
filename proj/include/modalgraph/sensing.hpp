#pragma once

#include <cstdint>
#include <vector>

#include "modalgraph/common.hpp"
#include "modalgraph/population.hpp"

namespace modalgraph {

using Mask = std::vector<std::uint8_t>;  // 1 = measured

struct SignalSet {
  Matrix signals;  // N x T
  Mask mask;
  double fs_hz = 200.0;
  double normalization_scale = 1.0;

  int node_count() const { return static_cast<int>(signals.rows()); }
  int length() const { return static_cast<int>(signals.cols()); }
  int measured_count() const;
  std::vector<int> measured_nodes() const;
};

struct NormalizedAdjacency {
  Matrix A;        // binary, symmetric, zero diagonal
  Matrix A_tilde;  // D^-1/2 A D^-1/2
  Vector degree;
};

struct SensingParams {
  double keep_fraction = 0.18;
  double cutoff_hz = 20.0;
  int filter_order = 8;
  // Integer down-sampling applied after the low-pass; 1 keeps the input rate.
  int decimation = 1;
  int fp_iterations = 40;
};

// Zero-phase Butterworth low-pass applied to each row.
Matrix lowpass(const Matrix& signals, double cutoff_hz, double fs_hz, int order = 8);

Matrix decimate(const Matrix& signals, int factor);

// Evenly spaced selection in x-order: m = max(2, round(N keep_fraction)) nodes at
// positions round((i + 1/2) N / m - 1/2).
Mask select_sensors(const TrussSpec& truss, double keep_fraction = 0.18);

struct Normalized {
  Matrix signals;
  double scale = 1.0;
};

// Divides the whole matrix by its global max-absolute entry.
Normalized max_normalize(const Matrix& signals);

NormalizedAdjacency normalized_adjacency(const TrussSpec& truss);

// Known rows are copied, unknown rows start at zero and follow
// X_u <- A~_uk X_k + A~_uu X_u. deltas, when given, receives max |X^(n) - X^(n-1)|
// over unknown rows for n = 1..iters.
Matrix feature_propagate(const Matrix& signals, const Mask& mask, const NormalizedAdjacency& adj,
                         int iters = 40, std::vector<double>* deltas = nullptr);

// lowpass -> decimate -> mask -> feature propagation -> max-normalisation.
SignalSet sense(const Matrix& accelerations, double fs_hz, const TrussSpec& truss,
                const SensingParams& params = {});

}  // namespace modalgraph
