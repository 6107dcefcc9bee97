#include "modalgraph/sensing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "modalgraph/dsp.hpp"

namespace modalgraph {

int SignalSet::measured_count() const {
  return static_cast<int>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

std::vector<int> SignalSet::measured_nodes() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.push_back(static_cast<int>(i));
  return out;
}

Matrix lowpass(const Matrix& signals, double cutoff_hz, double fs_hz, int order) {
  require(cutoff_hz < 0.5 * fs_hz, "lowpass: cutoff must be below Nyquist");
  const auto sos = dsp::butterworth_lowpass(order, cutoff_hz, fs_hz);
  Matrix out(signals.rows(), signals.cols());
  std::vector<double> row(signals.cols());
  for (Eigen::Index i = 0; i < signals.rows(); ++i) {
    for (Eigen::Index t = 0; t < signals.cols(); ++t) row[t] = signals(i, t);
    const auto y = dsp::sosfiltfilt(sos, row);
    for (Eigen::Index t = 0; t < signals.cols(); ++t) out(i, t) = y[t];
  }
  return out;
}

Matrix decimate(const Matrix& signals, int factor) {
  require(factor >= 1, "decimate: factor must be >= 1");
  if (factor == 1) return signals;
  const Eigen::Index T = signals.cols() / factor;
  Matrix out(signals.rows(), T);
  for (Eigen::Index t = 0; t < T; ++t) out.col(t) = signals.col(t * factor);
  return out;
}

Mask select_sensors(const TrussSpec& truss, double keep_fraction) {
  require(keep_fraction > 0.0 && keep_fraction <= 1.0, "select_sensors: keep_fraction must be in (0, 1]");
  const int n = truss.node_count();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& p = truss.nodes[a];
    const auto& q = truss.nodes[b];
    return p.x < q.x || (p.x == q.x && p.y < q.y);
  });
  Mask mask(n, 0);
  if (keep_fraction >= 1.0) {
    std::fill(mask.begin(), mask.end(), std::uint8_t{1});
    return mask;
  }
  const int m = std::min(n, std::max(2, static_cast<int>(std::lround(n * keep_fraction))));
  for (int i = 0; i < m; ++i) {
    const long pos = std::lround((i + 0.5) * n / m - 0.5);
    mask[order[std::clamp<long>(pos, 0, n - 1)]] = 1;
  }
  require(std::count(mask.begin(), mask.end(), std::uint8_t{1}) >= 2,
          "select_sensors: fewer than 2 sensors kept");
  return mask;
}

Normalized max_normalize(const Matrix& signals) {
  const double peak = signals.size() ? signals.cwiseAbs().maxCoeff() : 0.0;
  require(peak > 0.0, "max_normalize: all-zero input");
  return {signals / peak, peak};
}

NormalizedAdjacency normalized_adjacency(const TrussSpec& truss) {
  const int n = truss.node_count();
  NormalizedAdjacency out;
  out.A = Matrix::Zero(n, n);
  for (const auto& [i, j] : truss.edges) {
    out.A(i, j) = 1.0;
    out.A(j, i) = 1.0;
  }
  out.degree = out.A.rowwise().sum();
  for (int i = 0; i < n; ++i) require(out.degree(i) > 0.0, "normalized_adjacency: isolated node");
  const Vector inv_sqrt = out.degree.cwiseSqrt().cwiseInverse();
  out.A_tilde = inv_sqrt.asDiagonal() * out.A * inv_sqrt.asDiagonal();
  return out;
}

Matrix feature_propagate(const Matrix& signals, const Mask& mask, const NormalizedAdjacency& adj,
                         int iters, std::vector<double>* deltas) {
  const Eigen::Index n = signals.rows();
  require(static_cast<Eigen::Index>(mask.size()) == n, "feature_propagate: mask length != node count");
  require(adj.A_tilde.rows() == n, "feature_propagate: adjacency size != node count");
  require(iters >= 0, "feature_propagate: iters must be >= 0");
  std::vector<int> known, unknown;
  for (Eigen::Index i = 0; i < n; ++i) (mask[i] ? known : unknown).push_back(static_cast<int>(i));

  Matrix out = signals;
  for (int u : unknown) out.row(u).setZero();
  if (unknown.empty()) return out;

  const Eigen::Index nu = static_cast<Eigen::Index>(unknown.size());
  const Eigen::Index nk = static_cast<Eigen::Index>(known.size());
  Matrix A_uk(nu, nk), A_uu(nu, nu), X_k(nk, signals.cols());
  for (Eigen::Index a = 0; a < nu; ++a) {
    for (Eigen::Index b = 0; b < nk; ++b) A_uk(a, b) = adj.A_tilde(unknown[a], known[b]);
    for (Eigen::Index b = 0; b < nu; ++b) A_uu(a, b) = adj.A_tilde(unknown[a], unknown[b]);
  }
  for (Eigen::Index b = 0; b < nk; ++b) X_k.row(b) = signals.row(known[b]);

  const Matrix drive = A_uk * X_k;
  Matrix X_u = Matrix::Zero(nu, signals.cols());
  if (deltas) deltas->clear();
  for (int it = 0; it < iters; ++it) {
    Matrix next = drive + A_uu * X_u;
    if (deltas) deltas->push_back((next - X_u).cwiseAbs().maxCoeff());
    X_u = std::move(next);
  }
  for (Eigen::Index a = 0; a < nu; ++a) out.row(unknown[a]) = X_u.row(a);
  return out;
}

SignalSet sense(const Matrix& accelerations, double fs_hz, const TrussSpec& truss,
                const SensingParams& params) {
  require(accelerations.rows() == truss.node_count(), "sense: signal rows != node count");
  Matrix filtered = lowpass(accelerations, params.cutoff_hz, fs_hz, params.filter_order);
  filtered = decimate(filtered, params.decimation);
  SignalSet out;
  out.fs_hz = fs_hz / params.decimation;
  out.mask = select_sensors(truss, params.keep_fraction);
  const Matrix propagated =
      feature_propagate(filtered, out.mask, normalized_adjacency(truss), params.fp_iterations);
  auto norm = max_normalize(propagated);
  out.signals = std::move(norm.signals);
  out.normalization_scale = norm.scale;
  return out;
}

}  // namespace modalgraph
