#include "modalgraph/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>

#include "modalgraph/dsp.hpp"

namespace modalgraph {

using dsp::Complex;

CrossSpectralStack cross_psd(const Matrix& X, double fs_hz, int segment, double overlap) {
  const Eigen::Index M = X.rows(), T = X.cols();
  require(M >= 1, "cross_psd: need at least one channel");
  require(segment >= 4 && overlap >= 0.0 && overlap < 1.0, "cross_psd: invalid segment/overlap");
  require(T >= 4, "cross_psd: record too short");
  CrossSpectralStack out;
  const int n_fft = segment;
  int len = segment;
  if (T < segment) {
    len = static_cast<int>(T);
    out.single_segment_fallback = true;
    std::cerr << "warning: cross_psd: record (" << T << " samples) shorter than segment (" << segment
              << "); using a single zero-padded segment\n";
  }
  const int step = std::max(1, static_cast<int>(std::lround(len * (1.0 - overlap))));
  // periodic Hann
  std::vector<double> w(len);
  double wss = 0.0;
  for (int i = 0; i < len; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / len);
    wss += w[i] * w[i];
  }
  const int n_bins = n_fft / 2 + 1;
  out.freq_hz.resize(n_bins);
  for (int k = 0; k < n_bins; ++k) out.freq_hz[k] = k * fs_hz / n_fft;
  out.G.assign(n_bins, ComplexMatrix::Zero(M, M));

  std::vector<double> buf(len);
  std::vector<std::vector<Complex>> spectra(M);
  for (Eigen::Index start = 0; start + len <= T; start += step) {
    for (Eigen::Index m = 0; m < M; ++m) {
      const double mean = X.row(m).segment(start, len).mean();
      for (int i = 0; i < len; ++i) buf[i] = (X(m, start + i) - mean) * w[i];
      spectra[m] = dsp::rfft(buf, n_fft);
    }
    for (int k = 0; k < n_bins; ++k)
      for (Eigen::Index a = 0; a < M; ++a)
        for (Eigen::Index b = 0; b < M; ++b) out.G[k](a, b) += spectra[a][k] * std::conj(spectra[b][k]);
    ++out.segments;
  }
  const double base = 1.0 / (fs_hz * wss * out.segments);
  for (int k = 0; k < n_bins; ++k) {
    const bool edge = k == 0 || (n_fft % 2 == 0 && k == n_bins - 1);
    out.G[k] *= edge ? base : 2.0 * base;
    // exact Hermitian symmetry
    out.G[k] = (0.5 * (out.G[k] + out.G[k].adjoint())).eval();
  }
  return out;
}

double complex_mac(const ComplexVector& a, const ComplexVector& b) {
  require(a.size() == b.size(), "complex_mac: length mismatch");
  const double aa = a.squaredNorm(), bb = b.squaredNorm();
  require(aa > 0.0 && bb > 0.0, "complex_mac: zero vector");
  return std::norm(a.dot(b)) / (aa * bb);
}

Vector realize_shape(const ComplexVector& v) {
  Eigen::Index idx = 0;
  v.cwiseAbs().maxCoeff(&idx);
  Vector out(v.size());
  if (std::abs(v(idx)) == 0.0) return Vector::Zero(v.size());
  const Complex rot = std::conj(v(idx)) / std::abs(v(idx));
  for (Eigen::Index i = 0; i < v.size(); ++i) out(i) = (v(i) * rot).real();
  return out / out(idx);
}

namespace {

// Peak prominence on a 1-D series (height above the higher of the two bases).
double prominence(const std::vector<double>& s, int k) {
  const int n = static_cast<int>(s.size());
  double left_min = s[k];
  for (int i = k - 1; i >= 0 && s[i] <= s[k]; --i) left_min = std::min(left_min, s[i]);
  double right_min = s[k];
  for (int i = k + 1; i < n && s[i] <= s[k]; ++i) right_min = std::min(right_min, s[i]);
  return s[k] - std::max(left_min, right_min);
}

std::vector<int> pick_peaks(const std::vector<double>& s, int n_target, int min_sep) {
  std::vector<std::pair<double, int>> cand;
  for (int k = 1; k + 1 < static_cast<int>(s.size()); ++k)
    if (s[k] > s[k - 1] && s[k] >= s[k + 1]) cand.push_back({prominence(s, k), k});
  std::stable_sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<int> picked;
  for (const auto& [prom, k] : cand) {
    if (static_cast<int>(picked.size()) >= n_target) break;
    bool ok = true;
    for (int j : picked) ok = ok && std::abs(j - k) >= min_sep;
    if (ok) picked.push_back(k);
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

}  // namespace

std::vector<IdentifiedMode> efdd_identify(const CrossSpectralStack& stack, int n_target, double fs_hz,
                                          const EfddParams& p) {
  require(n_target >= 1, "efdd_identify: n_target must be >= 1");
  const int n_bins = static_cast<int>(stack.G.size());
  require(n_bins >= 3, "efdd_identify: empty spectral stack");
  std::vector<double> s1(n_bins);
  std::vector<ComplexVector> u1(n_bins);
  for (int k = 0; k < n_bins; ++k) {
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(stack.G[k]);
    const Eigen::Index last = stack.G[k].rows() - 1;
    s1[k] = std::max(0.0, es.eigenvalues()(last));
    u1[k] = es.eigenvectors().col(last);
  }
  const int n_fft = 2 * (n_bins - 1);
  std::vector<IdentifiedMode> modes;
  int rank = 0;
  for (int kp : pick_peaks(s1, n_target, p.min_separation)) {
    IdentifiedMode m;
    m.source_index = rank++;
    m.frequency_hz = stack.freq_hz[kp];
    m.psd_peak_magnitude = s1[kp];
    m.dominance = 1.0;
    m.mode_shape = realize_shape(u1[kp]);
    int lo = kp, hi = kp;
    while (lo > 0 && complex_mac(u1[lo - 1], u1[kp]) >= p.bell_mac) --lo;
    while (hi + 1 < n_bins && complex_mac(u1[hi + 1], u1[kp]) >= p.bell_mac) ++hi;
    if (hi - lo + 1 >= 3) {
      // SDOF bell back to the lag domain
      std::vector<Complex> full(n_fft, Complex(0.0, 0.0));
      for (int k = lo; k <= hi; ++k) {
        full[k] = s1[k];
        if (k > 0 && k < n_fft - k) full[n_fft - k] = s1[k];
      }
      const auto r_c = dsp::ifft(full);
      std::vector<double> r(n_fft / 2);
      for (int t = 0; t < n_fft / 2; ++t) r[t] = r_c[t].real();
      const auto fit = fit_damping(r, fs_hz, p.damping_peaks);
      m.damping_ratio = fit.damping_ratio;
      m.damping_valid = fit.valid;
      // zero crossings up to the last peak used by the damping fit
      int n_peaks = 0;
      int last = static_cast<int>(r.size()) - 1;
      for (int t = 1; t + 1 < static_cast<int>(r.size()); ++t) {
        if (r[t] > 0.0 && r[t] > r[t - 1] && r[t] >= r[t + 1] && ++n_peaks == std::max(fit.peaks_used, 2)) {
          last = t;
          break;
        }
      }
      std::vector<double> crossings;
      for (int t = 0; t < last; ++t)
        if ((r[t] > 0.0) != (r[t + 1] > 0.0)) crossings.push_back(t + r[t] / (r[t] - r[t + 1]));
      if (crossings.size() >= 2) {
        const double fd = 0.5 * (crossings.size() - 1) / ((crossings.back() - crossings.front()) / fs_hz);
        const double z = fit.valid ? fit.damping_ratio : 0.0;
        m.frequency_hz = fd / std::sqrt(1.0 - z * z);
      }
    }
    modes.push_back(std::move(m));
  }
  return modes;
}

std::vector<IdentifiedMode> ssi_identify(const Matrix& X, double fs_hz, int n_target, const SsiParams& p,
                                         SsiModel* model) {
  require(n_target >= 1, "ssi_identify: n_target must be >= 1");
  const int order = p.order > 0 ? p.order : 2 * n_target;
  require(order % 2 == 0, "ssi_identify: model order must be even");
  const Eigen::Index M = X.rows(), T = X.cols();
  const int i = order;  // block rows
  require(M * i >= order, "ssi_identify: too few channels for the requested order");
  require(T > 4 * i, "ssi_identify: record too short for a Hankel of 2*order block rows");

  Matrix Y = X;
  Y.colwise() -= Y.rowwise().mean();
  std::vector<Matrix> R(2 * i);
  for (int k = 1; k < 2 * i; ++k)
    R[k] = Y.rightCols(T - k) * Y.leftCols(T - k).transpose() / static_cast<double>(T - k);

  Matrix H(i * M, i * M);
  for (int r = 0; r < i; ++r)
    for (int c = 0; c < i; ++c) H.block(r * M, c * M, M, M) = R[i + r - c];

  Eigen::JacobiSVD<Matrix> svd(H, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector sq = svd.singularValues().head(order).cwiseSqrt();
  const Matrix O = svd.matrixU().leftCols(order) * sq.asDiagonal();
  const Matrix Delta = sq.asDiagonal() * svd.matrixV().leftCols(order).transpose();
  const Matrix C = O.topRows(M);
  const Matrix A = O.topRows((i - 1) * M).completeOrthogonalDecomposition().solve(O.bottomRows((i - 1) * M));
  const Matrix G = Delta.rightCols(M);

  Eigen::EigenSolver<Matrix> es(A);
  const Eigen::VectorXcd mu = es.eigenvalues();
  const ComplexMatrix Psi = es.eigenvectors();
  const ComplexMatrix L = Psi.fullPivLu().solve(G.cast<Complex>());
  const ComplexMatrix CPsi = C.cast<Complex>() * Psi;

  if (model) {
    model->A = A;
    model->C = C;
    model->order = order;
    model->poles.clear();
  }
  struct Pole {
    double f, z, contribution;
    int j;
  };
  std::vector<Pole> poles;
  for (Eigen::Index j = 0; j < mu.size(); ++j) {
    if (std::abs(mu(j)) == 0.0) continue;
    const Complex lambda = std::log(mu(j)) * fs_hz;
    if (model) model->poles.push_back(lambda);
    if (lambda.imag() <= 0.0) continue;
    const double f = std::abs(lambda) / (2.0 * kPi);
    const double z = -lambda.real() / std::abs(lambda);
    if (!(z > 0.0 && z < p.max_damping && f < 0.5 * fs_hz)) continue;
    const double contrib = CPsi.col(j).norm() * L.row(j).norm() / std::max(1e-12, 1.0 - std::abs(mu(j)));
    poles.push_back({f, z, contrib, static_cast<int>(j)});
  }
  if (poles.empty()) {
    std::cerr << "warning: ssi_identify: no physical modes at order " << order << "\n";
    return {};
  }
  std::stable_sort(poles.begin(), poles.end(),
                   [](const Pole& a, const Pole& b) { return a.contribution > b.contribution; });
  if (static_cast<int>(poles.size()) > n_target) poles.resize(n_target);
  std::sort(poles.begin(), poles.end(), [](const Pole& a, const Pole& b) { return a.f < b.f; });

  std::vector<IdentifiedMode> modes;
  int rank = 0;
  for (const auto& pl : poles) {
    IdentifiedMode m;
    m.source_index = rank++;
    m.frequency_hz = pl.f;
    m.damping_ratio = pl.z;
    m.damping_valid = true;
    m.psd_peak_magnitude = pl.contribution;
    m.dominance = 1.0;
    m.mode_shape = realize_shape(CPsi.col(pl.j));
    modes.push_back(std::move(m));
  }
  return modes;
}

Matrix interpolate_shapes(const Matrix& shapes, const std::vector<double>& measured_x,
                          const std::vector<double>& query_x) {
  require(static_cast<Eigen::Index>(measured_x.size()) == shapes.rows(),
          "interpolate_shapes: measured_x length != shape rows");
  require(shapes.rows() >= 2, "interpolate_shapes: need at least 2 measured nodes");
  // average duplicates
  std::map<double, std::pair<Vector, int>> acc;
  for (std::size_t i = 0; i < measured_x.size(); ++i) {
    auto [it, fresh] = acc.try_emplace(measured_x[i], Vector::Zero(shapes.cols()), 0);
    it->second.first += shapes.row(i).transpose();
    it->second.second += 1;
  }
  std::vector<double> xs;
  std::vector<Vector> ys;
  for (const auto& [x, v] : acc) {
    xs.push_back(x);
    ys.push_back(v.first / v.second);
  }
  Matrix out(static_cast<Eigen::Index>(query_x.size()), shapes.cols());
  if (xs.size() == 1) {
    for (Eigen::Index q = 0; q < out.rows(); ++q) out.row(q) = ys[0].transpose();
    return out;
  }
  for (std::size_t q = 0; q < query_x.size(); ++q) {
    const double x = query_x[q];
    std::size_t seg = std::upper_bound(xs.begin(), xs.end(), x) - xs.begin();
    seg = std::clamp<std::size_t>(seg, 1, xs.size() - 1);
    const double x0 = xs[seg - 1], x1 = xs[seg];
    const double t = (x - x0) / (x1 - x0);
    out.row(q) = ((1.0 - t) * ys[seg - 1] + t * ys[seg]).transpose();
  }
  return out;
}

const char* baseline_name(BaselineMethod m) { return m == BaselineMethod::efdd ? "efdd" : "ssi"; }

BaselineMethod parse_baseline(const std::string& s) {
  if (s == "efdd") return BaselineMethod::efdd;
  if (s == "ssi") return BaselineMethod::ssi;
  throw InvalidArgument("unknown baseline method '" + s + "' (expected efdd or ssi)");
}

StructureIdentification baseline_structure(BaselineMethod method, const Matrix& signals,
                                           const std::vector<int>& measured, const std::vector<double>& node_x,
                                           double fs_hz, const BaselineParams& p) {
  require(measured.size() >= 2, "baseline_structure: need at least 2 measured nodes");
  require(static_cast<Eigen::Index>(node_x.size()) == signals.rows(), "baseline_structure: node_x length mismatch");
  Matrix Xm(static_cast<Eigen::Index>(measured.size()), signals.cols());
  std::vector<double> mx;
  for (std::size_t i = 0; i < measured.size(); ++i) {
    Xm.row(i) = signals.row(measured[i]);
    mx.push_back(node_x[measured[i]]);
  }
  std::vector<IdentifiedMode> modes;
  if (method == BaselineMethod::efdd) {
    modes = efdd_identify(cross_psd(Xm, fs_hz, p.efdd.segment, p.efdd.overlap), p.n_target, fs_hz, p.efdd);
  } else {
    modes = ssi_identify(Xm, fs_hz, p.n_target, p.ssi);
  }
  StructureIdentification out;
  for (auto& m : modes) {
    Matrix full = interpolate_shapes(m.mode_shape, mx, node_x);
    m.mode_shape = full.col(0);
    Eigen::Index idx = 0;
    if (m.mode_shape.cwiseAbs().maxCoeff(&idx) > 0.0) m.mode_shape /= m.mode_shape(idx);
    out.modes.push_back(std::move(m));
  }
  out.failed = out.modes.empty();
  return out;
}

}  // namespace modalgraph
