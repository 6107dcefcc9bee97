#include "modalgraph/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "modalgraph/dsp.hpp"

namespace modalgraph {

using dsp::Complex;

Matrix correlation_matrix(const Matrix& Q, CorrelationCache* cache) {
  require(Q.cols() >= 2, "correlation_matrix: need T >= 2");
  CorrelationCache local;
  CorrelationCache& c = cache ? *cache : local;
  c.centered = Q.colwise() - Q.rowwise().mean();
  const Matrix C = c.centered * c.centered.transpose();
  c.scale = (C.diagonal().array() + kCorrelationGuard).sqrt().matrix();
  c.R = C.array() / (c.scale * c.scale.transpose()).array();
  return c.R;
}

Matrix correlation_backward(const Matrix& dR, const CorrelationCache& c) {
  const Vector& s = c.scale;
  const Matrix ss = s * s.transpose();
  Matrix dC = dR.array() / ss.array();
  const Matrix GR = dR.cwiseProduct(c.R);
  // R_ij depends on s_i and s_j, each through C_ii
  const Vector ds = -(GR.rowwise().sum() + GR.colwise().sum().transpose()).cwiseQuotient(s);
  dC.diagonal() += ds.cwiseQuotient(2.0 * s);
  Matrix dQc = (dC + dC.transpose()) * c.centered;
  dQc.colwise() -= dQc.rowwise().mean();
  return dQc;
}

namespace {

std::vector<Complex> row_spectrum(const Matrix& Q, Eigen::Index i) {
  std::vector<double> row(Q.cols());
  for (Eigen::Index t = 0; t < Q.cols(); ++t) row[t] = Q(i, t);
  return dsp::rfft(row, static_cast<int>(Q.cols()));
}

}  // namespace

Matrix amplitude_spectrum(const Matrix& Q) {
  const Eigen::Index bins = Q.cols() / 2 + 1;
  Matrix A(Q.rows(), bins);
  for (Eigen::Index i = 0; i < Q.rows(); ++i) {
    const auto F = row_spectrum(Q, i);
    for (Eigen::Index k = 0; k < bins; ++k) A(i, k) = std::abs(F[k]);
  }
  return A;
}

Matrix spectrum_correlation(const Matrix& Q, SpectrumCorrelationCache* cache) {
  require(Q.cols() >= 2, "spectrum_correlation: need T >= 2");
  SpectrumCorrelationCache local;
  SpectrumCorrelationCache& c = cache ? *cache : local;
  const Eigen::Index bins = Q.cols() / 2 + 1;
  c.length = Q.cols();
  c.spectra.resize(Q.rows());
  c.amplitude.resize(Q.rows(), bins);
  for (Eigen::Index i = 0; i < Q.rows(); ++i) {
    c.spectra[i] = row_spectrum(Q, i);
    for (Eigen::Index k = 0; k < bins; ++k) c.amplitude(i, k) = std::abs(c.spectra[i][k]);
  }
  return correlation_matrix(c.amplitude, &c.corr);
}

Matrix spectrum_correlation_backward(const Matrix& dR, const SpectrumCorrelationCache& c) {
  const Matrix dA = correlation_backward(dR, c.corr);
  const Eigen::Index T = c.length;
  Matrix dQ(dA.rows(), T);
  std::vector<Complex> u(T);
  for (Eigen::Index i = 0; i < dA.rows(); ++i) {
    std::fill(u.begin(), u.end(), Complex(0.0, 0.0));
    for (Eigen::Index k = 0; k < dA.cols(); ++k) {
      const double mag = c.amplitude(i, k);
      if (mag > 0.0) u[k] = dA(i, k) * std::conj(c.spectra[i][k]) / mag;
    }
    // d|F_k|/dq_t = Re(conj(F_k) e^{-2 pi i k t / T}) / |F_k|
    const auto F = dsp::fft(u);
    for (Eigen::Index t = 0; t < T; ++t) dQ(i, t) = F[t].real();
  }
  return dQ;
}

LossTerms& LossTerms::operator+=(const LossTerms& o) {
  reconstruction += o.reconstruction;
  time_independence += o.time_independence;
  spectral_independence += o.spectral_independence;
  total += o.total;
  return *this;
}

LossTerms LossTerms::scaled(double s) const {
  LossTerms r = *this;
  r.reconstruction *= s;
  r.time_independence *= s;
  r.spectral_independence *= s;
  r.total *= s;
  return r;
}

LossTerms decomposition_loss(const Matrix& Q, const Matrix& Phi, const Matrix& X, const LossWeights& w,
                             Matrix* dQ, Matrix* dPhi) {
  require(Phi.cols() == Q.rows(), "decomposition_loss: Phi columns != Q rows");
  require(X.rows() == Phi.rows() && X.cols() == Q.cols(), "decomposition_loss: target shape mismatch");
  const double P = static_cast<double>(Q.rows());
  LossTerms L;
  const Matrix resid = Phi * Q - X;
  L.reconstruction = resid.squaredNorm() / static_cast<double>(resid.size());

  const bool need_grad = dQ || dPhi;
  Matrix gQ = Matrix::Zero(Q.rows(), Q.cols());
  Matrix gPhi;
  if (need_grad) {
    const Matrix dres = (2.0 * w.lambda1 / static_cast<double>(resid.size())) * resid;
    gPhi = dres * Q.transpose();
    gQ.noalias() += Phi.transpose() * dres;
  }
  const Matrix I = Matrix::Identity(Q.rows(), Q.rows());
  if (w.lambda2 != 0.0 || !need_grad) {
    CorrelationCache cc;
    const Matrix R = correlation_matrix(Q, &cc);
    L.time_independence = (R - I).squaredNorm() / (P * P);
    if (need_grad && w.lambda2 != 0.0) gQ += correlation_backward((2.0 * w.lambda2 / (P * P)) * (R - I), cc);
  }
  if (w.lambda3 != 0.0 || !need_grad) {
    SpectrumCorrelationCache sc;
    const Matrix R = spectrum_correlation(Q, &sc);
    L.spectral_independence = (R - I).squaredNorm() / (P * P);
    if (need_grad && w.lambda3 != 0.0)
      gQ += spectrum_correlation_backward((2.0 * w.lambda3 / (P * P)) * (R - I), sc);
  }
  L.total = w.lambda1 * L.reconstruction + w.lambda2 * L.time_independence + w.lambda3 * L.spectral_independence;
  if (!std::isfinite(L.reconstruction) || !std::isfinite(L.time_independence) ||
      !std::isfinite(L.spectral_independence)) {
    std::ostringstream os;
    os << "non-finite loss term (reconstruction=" << L.reconstruction << ", time=" << L.time_independence
       << ", spectral=" << L.spectral_independence << ")";
    throw NumericalError(os.str());
  }
  if (dQ) *dQ = std::move(gQ);
  if (dPhi) *dPhi = std::move(gPhi);
  return L;
}

LossTerms graph_loss(DecompositionModel& model, const GraphInput& g, const LossWeights& w,
                     double accumulate_scale) {
  DecompositionModel::Cache cache;
  const auto out = model.forward(g, cache);
  Matrix X(static_cast<Eigen::Index>(out.rows.size()), g.signals.cols());
  for (std::size_t i = 0; i < out.rows.size(); ++i) X.row(i) = g.signals.row(out.rows[i]);
  if (accumulate_scale == 0.0) return decomposition_loss(out.Q, out.Phi, X, w);
  Matrix dQ, dPhi;
  const LossTerms L = decomposition_loss(out.Q, out.Phi, X, w, &dQ, &dPhi);
  model.backward(accumulate_scale * dQ, accumulate_scale * dPhi, cache);
  return L;
}

LossWeights TrainConfig::effective_weights() const {
  LossWeights w = loss_weights;
  if (!independence_enabled) w.lambda2 = w.lambda3 = 0.0;
  return w;
}

void TrainConfig::validate() const {
  require(learning_rate >= 0.0, "TrainConfig: learning_rate must be >= 0");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "TrainConfig: betas must be in [0, 1)");
  require(adam_eps > 0.0, "TrainConfig: adam_eps must be > 0");
  require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
  require(epochs >= 1, "TrainConfig: epochs must be >= 1");
  require(loss_weights.lambda1 >= 0.0 && loss_weights.lambda2 >= 0.0 && loss_weights.lambda3 >= 0.0,
          "TrainConfig: loss weights must be >= 0");
  require(divergence_factor > 1.0, "TrainConfig: divergence_factor must be > 1");
  require(grad_clip_norm >= 0.0, "TrainConfig: grad_clip_norm must be >= 0");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"beta1", beta1},
          {"beta2", beta2},
          {"adam_eps", adam_eps},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"seed", seed},
          {"lambda1", loss_weights.lambda1},
          {"lambda2", loss_weights.lambda2},
          {"lambda3", loss_weights.lambda3},
          {"independence_enabled", independence_enabled},
          {"divergence_factor", divergence_factor},
          {"grad_clip_norm", grad_clip_norm}};
}

void TrainLog::write_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  f.precision(12);
  f << "epoch,train_loss,validation_loss,train_reconstruction,train_time_independence,"
       "train_spectral_independence,validation_reconstruction,validation_time_independence,"
       "validation_spectral_independence,wall_time_s\n";
  for (const auto& e : epochs)
    f << e.epoch << ',' << e.train.total << ',' << e.validation.total << ',' << e.train.reconstruction << ','
      << e.train.time_independence << ',' << e.train.spectral_independence << ','
      << e.validation.reconstruction << ',' << e.validation.time_independence << ','
      << e.validation.spectral_independence << ',' << e.wall_time_s << '\n';
}

TrainLog TrainLog::read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open '" + path + "'");
  TrainLog log;
  std::string line;
  std::getline(f, line);
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() != 10) throw FormatError(path + ": malformed training log row");
    EpochRecord e;
    e.epoch = static_cast<int>(v[0]);
    e.train.total = v[1];
    e.validation.total = v[2];
    e.train.reconstruction = v[3];
    e.train.time_independence = v[4];
    e.train.spectral_independence = v[5];
    e.validation.reconstruction = v[6];
    e.validation.time_independence = v[7];
    e.validation.spectral_independence = v[8];
    e.wall_time_s = v[9];
    log.epochs.push_back(e);
  }
  return log;
}

Adam::Adam(nn::ParamSet& params, double lr, double beta1, double beta2, double eps)
    : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_.all()) {
    m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::size_t i = 0;
  for (auto& p : params_.all()) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseAbs2();
    p.value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    ++i;
  }
}

namespace {

LossTerms mean_loss(DecompositionModel& model, const std::vector<GraphInput>& set, const LossWeights& w) {
  LossTerms sum;
  for (const auto& g : set) sum += graph_loss(model, g, w);
  return set.empty() ? sum : sum.scaled(1.0 / static_cast<double>(set.size()));
}

std::vector<Matrix> snapshot(const nn::ParamSet& ps) {
  std::vector<Matrix> out;
  for (const auto& p : ps.all()) out.push_back(p.value);
  return out;
}

}  // namespace

double clip_grad_norm(nn::ParamSet& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params.all()) sq += p.grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& p : params.all()) p.grad *= s;
  }
  return norm;
}

TrainResult train(DecompositionModel& model, const std::vector<GraphInput>& train_set,
                  const std::vector<GraphInput>& validation_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  require(!train_set.empty(), "train: empty training split");
  require(!validation_set.empty(), "train: empty validation split");
  const LossWeights w = config.effective_weights();
  Adam adam(model.params(), config.learning_rate, config.beta1, config.beta2, config.adam_eps);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult res;
  res.best_validation = std::numeric_limits<double>::infinity();
  const auto t0 = std::chrono::steady_clock::now();
  double first_loss = 0.0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossTerms epoch_sum;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const double scale = 1.0 / static_cast<double>(end - start);
      model.params().zero_grad();
      for (std::size_t b = start; b < end; ++b) {
        try {
          epoch_sum += graph_loss(model, train_set[order[b]], w, scale);
        } catch (const NumericalError& e) {
          res.diverged = true;
          res.diagnostic = "epoch " + std::to_string(epoch) + ", training graph position " +
                           std::to_string(order[b]) + ": " + e.what();
          return res;
        }
      }
      clip_grad_norm(model.params(), config.grad_clip_norm);
      adam.step();
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train = epoch_sum.scaled(1.0 / static_cast<double>(train_set.size()));
    rec.validation = mean_loss(model, validation_set, w);
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.validation.total < res.best_validation) {
      res.best_validation = rec.validation.total;
      res.best_epoch = epoch;
      res.best_params = snapshot(model.params());
    }
    if (epoch == 1) first_loss = rec.train.total;
    if (epoch > 1 && rec.train.total > config.divergence_factor * first_loss) {
      std::ostringstream os;
      os << "training diverged at epoch " << epoch << ": train loss " << rec.train.total << " exceeds "
         << config.divergence_factor << "x the epoch-1 loss " << first_loss << " (reconstruction "
         << rec.train.reconstruction << ", time independence " << rec.train.time_independence
         << ", spectral independence " << rec.train.spectral_independence << ")";
      res.diverged = true;
      res.diagnostic = os.str();
      return res;
    }
  }
  return res;
}

std::vector<GraphInput> graph_inputs(const Dataset& data, const std::vector<std::size_t>& positions) {
  std::vector<GraphInput> out;
  for (std::size_t i : positions) {
    const auto& g = data.graphs.at(i);
    if (!g.signals)
      throw ConfigError("graph " + std::to_string(g.id) + " has no sensed signals; run the 'sense' stage first");
    out.push_back(make_graph_input(g.truss, g.signals->signals));
  }
  return out;
}

TrainResult train(DecompositionModel& model, const Dataset& data, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  const auto tr = data.indices(Split::train);
  const auto va = data.indices(Split::validation);
  require(!tr.empty() && !va.empty(), "train: dataset needs non-empty train and validation splits");
  return train(model, graph_inputs(data, tr), graph_inputs(data, va), config, on_epoch);
}

GraphInput synthetic_graph(int nodes, int length, std::uint64_t seed, bool zero_signal) {
  require(nodes >= 2 && length >= 2, "synthetic_graph: need >= 2 nodes and length >= 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TrussSpec t;
  for (int i = 0; i < nodes; ++i) t.nodes.push_back({static_cast<double>(i) + 0.1 * u(rng), (i % 2) + 0.1 * u(rng)});
  for (int i = 0; i + 1 < nodes; ++i) t.edges.push_back({i, i + 1});
  for (int i = 0; i + 2 < nodes; i += 2) t.edges.push_back({i, i + 2});
  Matrix X(nodes, length);
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    for (Eigen::Index i = 0; i < X.rows(); ++i) X(i, j) = zero_signal ? 0.0 : n01(rng);
  if (!zero_signal) X /= X.cwiseAbs().maxCoeff();
  return make_graph_input(t, X);
}

GradientCheckReport gradient_check(ModelConfig config, const GradientCheckOptions& o) {
  require(o.nodes >= 2 && o.nodes <= 5, "gradient_check: graph must have 2..5 nodes");
  require(o.length >= 4 && o.length <= 64, "gradient_check: length must be in [4, 64]");
  config.input_length = o.length;
  DecompositionModel model(config, o.seed);
  const GraphInput g = synthetic_graph(o.nodes, o.length, o.seed + 1, o.zero_signal);

  model.params().zero_grad();
  const double base = graph_loss(model, g, o.weights, 1.0).total;
  // central differences carry ~eps |L| / h of round-off, so tiny gradients are
  // compared on an absolute scale tied to the loss magnitude
  const double floor = o.abs_floor * std::max(1.0, std::abs(base));

  // sample coordinates uniformly over all scalars
  std::vector<std::pair<std::size_t, Eigen::Index>> coords;
  for (std::size_t pi = 0; pi < model.params().all().size(); ++pi)
    for (Eigen::Index k = 0; k < model.params().all()[pi].value.size(); ++k) coords.push_back({pi, k});
  std::mt19937_64 rng(o.seed + 2);
  std::shuffle(coords.begin(), coords.end(), rng);
  if (static_cast<int>(coords.size()) > o.coordinates) coords.resize(o.coordinates);

  GradientCheckReport rep;
  for (const auto& [pi, k] : coords) {
    auto& p = model.params().all()[pi];
    const double orig = p.value.data()[k];
    p.value.data()[k] = orig + o.step;
    const double lp = graph_loss(model, g, o.weights).total;
    p.value.data()[k] = orig - o.step;
    const double lm = graph_loss(model, g, o.weights).total;
    p.value.data()[k] = orig;
    GradientEntry e;
    e.name = p.name;
    e.index = k;
    e.analytic = p.grad.data()[k];
    e.numeric = (lp - lm) / (2.0 * o.step);
    e.relative_error =
        std::abs(e.analytic - e.numeric) / std::max({std::abs(e.analytic), std::abs(e.numeric), floor});
    if (!std::isfinite(e.analytic) || !std::isfinite(e.numeric) || e.relative_error > o.tolerance)
      rep.failures.push_back(e);
    rep.max_relative_error = std::max(rep.max_relative_error, e.relative_error);
    rep.entries.push_back(e);
  }
  return rep;
}

}  // namespace modalgraph
