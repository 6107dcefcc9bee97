#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "modalgraph/training.hpp"

using namespace modalgraph;

namespace {

Matrix sines(const std::vector<double>& freqs, double fs, int T, const std::vector<double>& phases = {}) {
  Matrix Q(static_cast<Eigen::Index>(freqs.size()), T);
  for (std::size_t i = 0; i < freqs.size(); ++i)
    for (int t = 0; t < T; ++t)
      Q(i, t) = std::sin(2.0 * kPi * freqs[i] * t / fs + (phases.empty() ? 0.0 : phases[i]));
  return Q;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = n01(rng);
  return m;
}

ModelConfig small_config(Variant v = Variant::full) {
  ModelConfig c;
  c.P = 3;
  c.hidden_dim = 16;
  c.n_attention_heads = 4;
  c.n_inducing_points = 4;
  c.variant = v;
  return c;
}

}  // namespace

TEST(Correlation, SineCosineOverWholePeriodsAreUncorrelated) {
  const Matrix Q = sines({1.0, 1.0}, 100.0, 400, {0.0, kPi / 2});
  const Matrix R = correlation_matrix(Q);
  EXPECT_LT(std::abs(R(0, 1)), 1e-6);
  EXPECT_NEAR(R(0, 0), 1.0, 1e-9);
}

TEST(Correlation, IdenticalRowsGiveAllOnes) {
  Matrix Q(3, 50);
  const Matrix row = random_matrix(1, 50, 3);
  for (int i = 0; i < 3; ++i) Q.row(i) = row;
  const Matrix R = correlation_matrix(Q);
  EXPECT_LT((R - Matrix::Ones(3, 3)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Correlation, ConstantRowIsGuardedNotNan) {
  Matrix Q = random_matrix(2, 40, 4);
  Q.row(1).setConstant(3.5);
  const Matrix R = correlation_matrix(Q);
  ASSERT_TRUE(R.allFinite());
  EXPECT_NEAR(R(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(R(1, 1), 0.0, 1e-12);
}

TEST(Correlation, SymmetricWithUnitDiagonal) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Matrix R = correlation_matrix(random_matrix(5, 64, 100 + s));
    EXPECT_LT((R - R.transpose()).cwiseAbs().maxCoeff(), 1e-14);
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(R(i, i), 1.0, 1e-9);
    EXPECT_LE(R.cwiseAbs().maxCoeff(), 1.0 + 1e-12);
  }
}

TEST(SpectrumCorrelation, DisjointTonesMatchDeltaOracle) {
  // On-bin tones have single-bin amplitude spectra; two centred deltas over n
  // bins correlate at exactly -1/(n-1).
  const int T = 2000;
  const Matrix R = spectrum_correlation(sines({3.0, 7.0}, 200.0, T));
  const double n = T / 2 + 1;
  EXPECT_NEAR(R(0, 1), -1.0 / (n - 1.0), 1e-9);
  EXPECT_LT(std::abs(R(0, 1)), 2e-3);
}

TEST(SpectrumCorrelation, IdenticalRowsAllOnes) {
  const Matrix R = spectrum_correlation(sines({5.0, 5.0, 5.0}, 200.0, 512));
  EXPECT_LT((R - Matrix::Ones(3, 3)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(SpectrumCorrelation, PhaseShiftDoesNotChangeAmplitudeSpectrum) {
  const Matrix R = spectrum_correlation(sines({4.0, 4.0}, 200.0, 1000, {0.0, 1.1}));
  EXPECT_NEAR(R(0, 1), 1.0, 1e-9);
}

TEST(Loss, ExactOrthogonalDecompositionIsNearZero) {
  const int T = 2000, P = 7;
  const Matrix Q = sines({2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0}, 200.0, T) * std::sqrt(2.0);
  const Matrix Phi = random_matrix(25, P, 9);
  const Matrix X = Phi * Q;
  const LossTerms L = decomposition_loss(Q, Phi, X, {});
  EXPECT_LT(L.reconstruction, 1e-6);
  EXPECT_LT(L.time_independence, 1e-6);
  EXPECT_LT(L.spectral_independence, 1e-6);
}

TEST(Loss, DuplicatedResponseRowsPayTheTimeTerm) {
  const int P = 4;
  Matrix Q = sines({2.0, 3.0, 5.0, 7.0}, 200.0, 1000);
  Q.row(1) = Q.row(0);
  const Matrix Phi = random_matrix(6, P, 2);
  const LossTerms L = decomposition_loss(Q, Phi, Phi * Q, {});
  EXPECT_GE(L.time_independence, 2.0 / (P * P) - 1e-9);
}

TEST(Loss, IndependenceDisabledLeavesOnlyReconstruction) {
  TrainConfig cfg;
  cfg.independence_enabled = false;
  const Matrix Q = random_matrix(3, 64, 5), Phi = random_matrix(4, 3, 6), X = random_matrix(4, 64, 7);
  const LossTerms L = decomposition_loss(Q, Phi, X, cfg.effective_weights());
  EXPECT_DOUBLE_EQ(L.total, cfg.loss_weights.lambda1 * L.reconstruction);
}

TEST(Loss, TermsAreNonNegative) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const LossTerms L = decomposition_loss(random_matrix(4, 32, s), random_matrix(5, 4, s + 50),
                                           random_matrix(5, 32, s + 99), {});
    EXPECT_GE(L.reconstruction, 0.0);
    EXPECT_GE(L.time_independence, 0.0);
    EXPECT_GE(L.spectral_independence, 0.0);
  }
}

TEST(Loss, AnalyticGradientMatchesFiniteDifferencesOnQAndPhi) {
  const Matrix Q = random_matrix(3, 24, 11), Phi = random_matrix(4, 3, 12), X = random_matrix(4, 24, 13);
  Matrix dQ, dPhi;
  decomposition_loss(Q, Phi, X, {}, &dQ, &dPhi);
  const double h = 1e-6;
  for (Eigen::Index k = 0; k < Q.size(); ++k) {
    Matrix qp = Q, qm = Q;
    qp.data()[k] += h;
    qm.data()[k] -= h;
    const double fd = (decomposition_loss(qp, Phi, X, {}).total - decomposition_loss(qm, Phi, X, {}).total) / (2 * h);
    EXPECT_NEAR(dQ.data()[k], fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
  for (Eigen::Index k = 0; k < Phi.size(); ++k) {
    Matrix pp = Phi, pm = Phi;
    pp.data()[k] += h;
    pm.data()[k] -= h;
    const double fd = (decomposition_loss(Q, pp, X, {}).total - decomposition_loss(Q, pm, X, {}).total) / (2 * h);
    EXPECT_NEAR(dPhi.data()[k], fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Loss, NonFiniteInputAborts) {
  Matrix Q = random_matrix(2, 16, 1);
  Q(0, 3) = std::nan("");
  const Matrix Phi = random_matrix(3, 2, 2), X = random_matrix(3, 16, 3);
  EXPECT_THROW(decomposition_loss(Q, Phi, X, {}), NumericalError);
}

TEST(GradientCheck, FullVariantPasses) {
  ModelConfig cfg;  // paper widths
  cfg.P = 3;
  const auto rep = gradient_check(cfg, {});
  for (const auto& f : rep.failures)
    ADD_FAILURE() << f.name << "[" << f.index << "] analytic " << f.analytic << " numeric " << f.numeric;
  EXPECT_TRUE(rep.passed());
  EXPECT_EQ(rep.entries.size(), 120u);
}

TEST(GradientCheck, TimeTermOnlyPasses) {
  GradientCheckOptions o;
  o.weights = {0.0, 1.0, 0.0};
  const auto rep = gradient_check(small_config(), o);
  EXPECT_TRUE(rep.passed()) << "max rel error " << rep.max_relative_error;
}

TEST(GradientCheck, SpectralTermOnlyPasses) {
  GradientCheckOptions o;
  o.weights = {0.0, 0.0, 1.0};
  const auto rep = gradient_check(small_config(), o);
  EXPECT_TRUE(rep.passed()) << "max rel error " << rep.max_relative_error;
}

TEST(GradientCheck, AblationVariantsPass) {
  for (Variant v : {Variant::no_gnn, Variant::set_lstm}) {
    GradientCheckOptions o;
    o.coordinates = 200;
    const auto rep = gradient_check(small_config(v), o);
    EXPECT_TRUE(rep.passed()) << variant_name(v) << " max rel error " << rep.max_relative_error;
  }
}

TEST(GradientCheck, ZeroSignalGraphHasFiniteGradients) {
  GradientCheckOptions o;
  o.zero_signal = true;
  const auto rep = gradient_check(small_config(), o);
  for (const auto& e : rep.entries) {
    EXPECT_TRUE(std::isfinite(e.analytic)) << e.name;
    EXPECT_TRUE(std::isfinite(e.numeric)) << e.name;
  }
}

TEST(Adam, FirstStepMovesByLearningRateTimesSign) {
  nn::ParamSet ps;
  auto& p = ps.add("w", 1, 3);
  p.value << 1.0, 2.0, 3.0;
  p.grad << 0.5, -2.0, 0.0;
  Adam opt(ps, 0.1, 0.9, 0.999, 1e-8);
  opt.step();
  // bias-corrected m/sqrt(v) = g/|g| on the first step
  EXPECT_NEAR(p.value(0, 0), 0.9, 1e-7);
  EXPECT_NEAR(p.value(0, 1), 2.1, 1e-7);
  EXPECT_DOUBLE_EQ(p.value(0, 2), 3.0);
}

namespace {

std::vector<GraphInput> tiny_set(int count, int T, std::uint64_t seed) {
  std::vector<GraphInput> out;
  for (int i = 0; i < count; ++i) out.push_back(synthetic_graph(4 + i % 3, T, seed + i));
  return out;
}

}  // namespace

TEST(Train, ZeroLearningRateLeavesParametersAndLossFlat) {
  ModelConfig mc = small_config();
  mc.input_length = 32;
  DecompositionModel model(mc, 1);
  std::vector<Matrix> before;
  for (const auto& p : model.params().all()) before.push_back(p.value);
  TrainConfig tc;
  tc.learning_rate = 0.0;
  tc.epochs = 3;
  const auto res = train(model, tiny_set(4, 32, 10), tiny_set(2, 32, 20), tc);
  ASSERT_EQ(res.log.epochs.size(), 3u);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(model.params().all()[i].value, before[i]);
  EXPECT_DOUBLE_EQ(res.log.epochs[0].train.total, res.log.epochs[2].train.total);
}

TEST(Train, SameSeedIsBitIdentical) {
  ModelConfig mc = small_config();
  mc.input_length = 32;
  TrainConfig tc;
  tc.epochs = 5;
  tc.batch_size = 2;
  tc.learning_rate = 1e-3;
  tc.seed = 42;
  DecompositionModel a(mc, 3), b(mc, 3);
  const auto ra = train(a, tiny_set(5, 32, 10), tiny_set(2, 32, 20), tc);
  const auto rb = train(b, tiny_set(5, 32, 10), tiny_set(2, 32, 20), tc);
  for (std::size_t e = 0; e < ra.log.epochs.size(); ++e) {
    EXPECT_EQ(ra.log.epochs[e].train.total, rb.log.epochs[e].train.total);
    EXPECT_EQ(ra.log.epochs[e].validation.total, rb.log.epochs[e].validation.total);
  }
  for (std::size_t i = 0; i < a.params().all().size(); ++i)
    EXPECT_EQ(a.params().all()[i].value, b.params().all()[i].value);
}

TEST(Train, LossDecreasesOnTinyProblem) {
  ModelConfig mc = small_config();
  mc.input_length = 32;
  DecompositionModel model(mc, 5);
  TrainConfig tc;
  tc.epochs = 60;
  tc.learning_rate = 3e-3;
  const auto res = train(model, tiny_set(4, 32, 30), tiny_set(2, 32, 40), tc);
  ASSERT_FALSE(res.diverged) << res.diagnostic;
  EXPECT_LT(res.log.epochs.back().train.total, res.log.epochs.front().train.total);
  EXPECT_GE(res.best_epoch, 1);
  EXPECT_EQ(res.best_params.size(), model.params().all().size());
}

TEST(Train, EmptyValidationSplitRejected) {
  ModelConfig mc = small_config();
  mc.input_length = 32;
  DecompositionModel model(mc, 5);
  EXPECT_THROW(train(model, tiny_set(2, 32, 1), {}, TrainConfig{}), InvalidArgument);
}

TEST(Train, NeverReadsModalReferences) {
  Dataset data;
  for (int i = 0; i < 4; ++i) {
    const GraphInput g = synthetic_graph(5, 32, 70 + i);
    GraphRecord r;
    r.id = i;
    for (const auto& c : g.coords) r.truss.nodes.push_back(c);
    for (int v = 0; v < 5; ++v)
      for (std::size_t k = 1; k < g.neighbours[v].size(); ++k)
        if (g.neighbours[v][k] > v) r.truss.edges.push_back({v, g.neighbours[v][k]});
    r.split = i < 3 ? Split::train : Split::validation;
    SignalSet s;
    s.signals = g.signals;
    s.mask.assign(5, 1);
    r.signals = s;
    data.graphs.push_back(r);
    ModalReference ref;
    ref.frequencies_hz = {1.0};
    ref.damping_ratios = {0.01};
    ref.mode_shapes = Matrix::Ones(5, 1);
    data.set_reference(static_cast<std::size_t>(i), ref);
  }
  data.reset_reference_audit();
  ModelConfig mc = small_config();
  mc.input_length = 32;
  DecompositionModel model(mc, 8);
  TrainConfig tc;
  tc.epochs = 3;
  const auto res = train(model, data, tc);
  EXPECT_EQ(res.log.epochs.size(), 3u);
  EXPECT_EQ(data.reference_reads(), 0u);
}

TEST(TrainLog, CsvRoundTrip) {
  TrainLog log;
  for (int e = 1; e <= 3; ++e) {
    EpochRecord r;
    r.epoch = e;
    r.train.total = 1.0 / e;
    r.validation.total = 2.0 / e;
    r.train.reconstruction = 0.1 * e;
    r.wall_time_s = 0.5 * e;
    log.epochs.push_back(r);
  }
  const std::string path = testing::TempDir() + "/log.csv";
  log.write_csv(path);
  const auto back = TrainLog::read_csv(path);
  ASSERT_EQ(back.epochs.size(), 3u);
  EXPECT_NEAR(back.epochs[2].train.total, 1.0 / 3, 1e-11);
  EXPECT_NEAR(back.epochs[1].train.reconstruction, 0.2, 1e-11);
}

TEST(Training, ClipGradNormCapsGlobalNorm) {
  nn::ParamSet ps;
  ps.add("a", 1, 2).grad << 3.0, 0.0;
  ps.add("b", 2, 1).grad << 0.0, 4.0;
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 10.0), 5.0);
  EXPECT_EQ(ps.find("a")->grad(0, 0), 3.0);  // under the cap: untouched
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 1.0), 5.0);
  EXPECT_NEAR(ps.find("a")->grad(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(ps.find("b")->grad(1, 0), 0.8, 1e-15);
  EXPECT_NEAR(clip_grad_norm(ps, 0.0), 1.0, 1e-15);  // 0 disables
  EXPECT_NEAR(ps.find("b")->grad(1, 0), 0.8, 1e-15);
}
