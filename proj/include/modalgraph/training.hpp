#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "modalgraph/graphdata.hpp"
#include "modalgraph/network.hpp"

namespace modalgraph {

inline constexpr double kCorrelationGuard = 1e-8;

struct CorrelationCache {
  Matrix centered;  // rows minus their means
  Vector scale;     // sqrt(sum of squares + guard)
  Matrix R;
};

// Pearson correlation between rows with the guard added under every square root.
Matrix correlation_matrix(const Matrix& Q, CorrelationCache* cache = nullptr);
// dL/dQ given dL/dR.
Matrix correlation_backward(const Matrix& dR, const CorrelationCache& cache);

// |rfft| of every row (T/2 + 1 bins, no zero padding).
Matrix amplitude_spectrum(const Matrix& Q);

struct SpectrumCorrelationCache {
  std::vector<std::vector<std::complex<double>>> spectra;
  Matrix amplitude;
  CorrelationCache corr;
  Eigen::Index length = 0;
};

Matrix spectrum_correlation(const Matrix& Q, SpectrumCorrelationCache* cache = nullptr);
Matrix spectrum_correlation_backward(const Matrix& dR, const SpectrumCorrelationCache& cache);

struct LossWeights {
  double lambda1 = 10.0;
  double lambda2 = 1.0;
  double lambda3 = 1.0;
};

struct LossTerms {
  double reconstruction = 0.0;          // MSE(Phi Q, X)
  double time_independence = 0.0;       // MSE(R(Q), I)
  double spectral_independence = 0.0;   // MSE(R(|FFT Q|), I)
  double total = 0.0;                   // weighted sum

  LossTerms& operator+=(const LossTerms& o);
  LossTerms scaled(double s) const;
};

// Per-graph loss. X holds the target rows matching Phi. Gradients are written
// (not accumulated) when the pointers are given. Throws NumericalError when a
// term is not finite.
LossTerms decomposition_loss(const Matrix& Q, const Matrix& Phi, const Matrix& X, const LossWeights& w,
                             Matrix* dQ = nullptr, Matrix* dPhi = nullptr);

// Loss of a model on one graph; gradients accumulate into the model when
// accumulate_scale != 0 (scaled by it).
LossTerms graph_loss(DecompositionModel& model, const GraphInput& g, const LossWeights& w,
                     double accumulate_scale = 0.0);

struct TrainConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 64;
  int epochs = 5000;
  std::uint64_t seed = 0;
  LossWeights loss_weights;
  bool independence_enabled = true;
  double divergence_factor = 10.0;
  // global L2 norm cap on each step's gradient; 0 disables clipping
  double grad_clip_norm = 0.0;

  LossWeights effective_weights() const;
  void validate() const;
  nlohmann::json to_json() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  LossTerms train;
  LossTerms validation;
  double wall_time_s = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;

  void write_csv(const std::string& path) const;
  static TrainLog read_csv(const std::string& path);
};

struct TrainResult {
  TrainLog log;
  int best_epoch = 0;
  double best_validation = 0.0;
  std::vector<Matrix> best_params;  // parameter values at best_epoch, ParamSet order
  bool diverged = false;
  std::string diagnostic;
};

class Adam {
 public:
  Adam(nn::ParamSet& params, double lr, double beta1, double beta2, double eps);
  void step();
  long steps() const { return t_; }

 private:
  nn::ParamSet& params_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

// Rescales all gradients so their global L2 norm is at most max_norm. Returns
// the norm before clipping.
double clip_grad_norm(nn::ParamSet& params, double max_norm);

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(DecompositionModel& model, const std::vector<GraphInput>& train_set,
                  const std::vector<GraphInput>& validation_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// Builds model inputs from the sensed signals of the given dataset positions.
// Reads only graph structure and signals, never the modal references.
std::vector<GraphInput> graph_inputs(const Dataset& data, const std::vector<std::size_t>& positions);

// Requires non-empty train and validation splits.
TrainResult train(DecompositionModel& model, const Dataset& data, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

struct GradientEntry {
  std::string name;
  Eigen::Index index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

struct GradientCheckReport {
  std::vector<GradientEntry> entries;
  std::vector<GradientEntry> failures;
  double max_relative_error = 0.0;
  bool passed() const { return failures.empty(); }
};

struct GradientCheckOptions {
  int nodes = 5;
  int length = 32;
  int coordinates = 120;  // sampled parameter coordinates
  double step = 1e-5;
  double tolerance = 1e-4;
  double abs_floor = 1e-6;  // denominator floor (times max(1, loss)) for near-zero gradients
  std::uint64_t seed = 7;
  LossWeights weights;
  bool zero_signal = false;
};

// Central differences of the full loss on a tiny synthetic graph vs the
// analytic gradient. The config's input_length is replaced by options.length.
GradientCheckReport gradient_check(ModelConfig config, const GradientCheckOptions& options = {});

// Small connected test graph with random signals (used by checks and tests).
GraphInput synthetic_graph(int nodes, int length, std::uint64_t seed, bool zero_signal = false);

}  // namespace modalgraph
