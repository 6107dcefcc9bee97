#include "modalgraph/fem.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace modalgraph {

SystemMatrices assemble(const TrussSpec& truss) {
  truss.validate();
  const int n_nodes = truss.node_count();
  DofMap dofs;
  dofs.node_dofs.assign(n_nodes, {0, 0});
  std::vector<char> fixed(2 * n_nodes, 0);
  for (const auto& s : truss.supports) {
    if (s.fixed_x) fixed[2 * s.node] = 1;
    if (s.fixed_y) fixed[2 * s.node + 1] = 1;
  }
  int next = 0;
  for (int i = 0; i < n_nodes; ++i)
    for (int a = 0; a < 2; ++a) {
      if (fixed[2 * i + a]) {
        dofs.node_dofs[i][a] = -1;
        dofs.constrained.push_back(2 * i + a);
      } else {
        dofs.node_dofs[i][a] = next++;
      }
    }
  dofs.n_free = next;

  Matrix K = Matrix::Zero(next, next);
  Matrix M = Matrix::Zero(next, next);
  const double EA = truss.youngs_modulus_pa * truss.area_m2;
  for (const auto& [i, j] : truss.edges) {
    const double dx = truss.nodes[j].x - truss.nodes[i].x;
    const double dy = truss.nodes[j].y - truss.nodes[i].y;
    const double L = std::hypot(dx, dy);
    require(L > 0.0, "assemble: zero-length element");
    const double c = dx / L, s = dy / L;
    const double k = EA / L;
    Eigen::Matrix4d ke;
    ke << c * c, c * s, -c * c, -c * s,
          c * s, s * s, -c * s, -s * s,
          -c * c, -c * s, c * c, c * s,
          -c * s, -s * s, c * s, s * s;
    ke *= k;
    Eigen::Matrix4d me;
    me << 2, 0, 1, 0,
          0, 2, 0, 1,
          1, 0, 2, 0,
          0, 1, 0, 2;
    me *= truss.density_kg_m3 * truss.area_m2 * L / 6.0;
    const std::array<int, 4> map{dofs.node_dofs[i][0], dofs.node_dofs[i][1], dofs.node_dofs[j][0],
                                 dofs.node_dofs[j][1]};
    for (int a = 0; a < 4; ++a) {
      if (map[a] < 0) continue;
      for (int b = 0; b < 4; ++b) {
        if (map[b] < 0) continue;
        K(map[a], map[b]) += ke(a, b);
        M(map[a], map[b]) += me(a, b);
      }
    }
  }
  // Factorisation doubles as the mechanism check.
  Eigen::LDLT<Matrix> ldlt(K);
  const double scale = K.diagonal().cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() <= 1e-10 * scale) {
    throw NumericalError("assemble: constrained stiffness matrix is singular (mechanism)");
  }
  SystemMatrices out;
  out.K = std::move(K);
  out.M = std::move(M);
  out.C = Matrix::Zero(next, next);
  out.dofs = std::move(dofs);
  return out;
}

ModalAnalysis modal_analysis(const SystemMatrices& system, int n_modes) {
  require(n_modes >= 1, "modal_analysis: n_modes must be >= 1");
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> solver(system.K, system.M);
  if (solver.info() != Eigen::Success) throw NumericalError("eigen: generalized eigensolver failed");
  const Vector& lambda = solver.eigenvalues();
  int positive = 0;
  for (Eigen::Index i = 0; i < lambda.size(); ++i)
    if (lambda(i) > 0.0) ++positive;
  if (positive < n_modes || lambda.size() < n_modes) {
    std::ostringstream msg;
    msg << "eigen: only " << positive << " positive eigenvalues, " << n_modes << " requested";
    throw NumericalError(msg.str());
  }
  ModalAnalysis out;
  out.omega.resize(n_modes);
  out.free_shapes.resize(system.K.rows(), n_modes);
  for (int m = 0; m < n_modes; ++m) {
    out.omega(m) = std::sqrt(lambda(m));
    out.free_shapes.col(m) = solver.eigenvectors().col(m);
  }
  return out;
}

Matrix vertical_mode_shapes(const ModalAnalysis& modes, const DofMap& dofs) {
  const int n_nodes = static_cast<int>(dofs.node_dofs.size());
  const int n_modes = static_cast<int>(modes.omega.size());
  Matrix shapes = Matrix::Zero(n_nodes, n_modes);
  for (int m = 0; m < n_modes; ++m) {
    for (int i = 0; i < n_nodes; ++i) {
      const int d = dofs.node_dofs[i][1];
      if (d >= 0) shapes(i, m) = modes.free_shapes(d, m);
    }
    Eigen::Index arg = 0;
    const double peak = shapes.col(m).cwiseAbs().maxCoeff(&arg);
    if (peak > 0.0) shapes.col(m) /= shapes(arg, m);
  }
  return shapes;
}

ModalReference eigen(const SystemMatrices& system, int n_modes) {
  const ModalAnalysis modes = modal_analysis(system, n_modes);
  ModalReference ref;
  ref.frequencies_hz.resize(n_modes);
  for (int m = 0; m < n_modes; ++m) ref.frequencies_hz[m] = modes.omega(m) / (2.0 * kPi);
  ref.mode_shapes = vertical_mode_shapes(modes, system.dofs);
  return ref;
}

RayleighCoefficients rayleigh(double omega1, double omega2, double zeta) {
  require(omega1 > 0.0 && omega2 > omega1, "rayleigh: requires 0 < omega1 < omega2");
  require(zeta >= 0.0, "rayleigh: zeta must be >= 0");
  RayleighCoefficients r;
  r.alpha = 2.0 * zeta * omega1 * omega2 / (omega1 + omega2);
  r.beta = 2.0 * zeta / (omega1 + omega2);
  return r;
}

NewmarkResult newmark(const Matrix& M, const Matrix& C, const Matrix& K, const Matrix& load,
                      double dt, const NewmarkParams& params, const Vector& u0, const Vector& v0) {
  const Eigen::Index n = M.rows();
  require(dt > 0.0, "newmark: dt must be positive");
  require(load.rows() == n && load.cols() >= 1, "newmark: load must be n_free x T");
  require(params.beta > 0.0 && params.gamma > 0.0, "newmark: gamma and beta must be positive");
  const Eigen::Index T = load.cols();
  const double g = params.gamma, b = params.beta;

  NewmarkResult out;
  out.displacement.resize(n, T);
  out.velocity.resize(n, T);
  out.acceleration.resize(n, T);
  Vector u = u0.size() == n ? u0 : Vector::Zero(n);
  Vector v = v0.size() == n ? v0 : Vector::Zero(n);

  Eigen::LDLT<Matrix> mass(M);
  if (mass.info() != Eigen::Success) throw NumericalError("newmark: mass factorisation failed");
  Vector a = mass.solve(load.col(0) - C * v - K * u);

  const Matrix K_eff = K + (g / (b * dt)) * C + (1.0 / (b * dt * dt)) * M;
  Eigen::LDLT<Matrix> solver(K_eff);
  if (solver.info() != Eigen::Success || !solver.isPositive())
    throw NumericalError("newmark: effective stiffness factorisation failed");

  out.displacement.col(0) = u;
  out.velocity.col(0) = v;
  out.acceleration.col(0) = a;
  const double a0 = 1.0 / (b * dt * dt), a1 = g / (b * dt), a2 = 1.0 / (b * dt);
  const double a3 = 1.0 / (2.0 * b) - 1.0, a4 = g / b - 1.0, a5 = dt * (g / (2.0 * b) - 1.0);
  for (Eigen::Index k = 1; k < T; ++k) {
    const Vector rhs = load.col(k) + M * (a0 * u + a2 * v + a3 * a) + C * (a1 * u + a4 * v + a5 * a);
    const Vector u_next = solver.solve(rhs);
    const Vector a_next = a0 * (u_next - u) - a2 * v - a3 * a;
    const Vector v_next = v + dt * ((1.0 - g) * a + g * a_next);
    u = u_next;
    v = v_next;
    a = a_next;
    out.displacement.col(k) = u;
    out.velocity.col(k) = v;
    out.acceleration.col(k) = a;
  }
  return out;
}

std::vector<int> excited_dofs(const TrussSpec& truss, const DofMap& dofs) {
  std::vector<int> out;
  for (int i = 0; i < truss.node_count(); ++i)
    if (std::abs(truss.nodes[i].y) < 1e-9 && dofs.node_dofs[i][1] >= 0)
      out.push_back(dofs.node_dofs[i][1]);
  return out;
}

Simulation simulate(const TrussSpec& truss, std::uint64_t seed, const SimulationParams& params) {
  require(params.steps >= 2 && params.steps % 2 == 0, "simulate: steps must be even and >= 2");
  require(params.reference_modes >= 2, "simulate: need at least 2 reference modes");
  SystemMatrices sys = assemble(truss);
  const ModalAnalysis modes = modal_analysis(sys, params.reference_modes);
  const RayleighCoefficients ray = rayleigh(modes.omega(0), modes.omega(1), params.target_damping);
  sys.C = ray.alpha * sys.M + ray.beta * sys.K;

  Simulation sim;
  sim.reference.frequencies_hz.resize(params.reference_modes);
  sim.reference.damping_ratios.resize(params.reference_modes);
  for (int m = 0; m < params.reference_modes; ++m) {
    sim.reference.frequencies_hz[m] = modes.omega(m) / (2.0 * kPi);
    sim.reference.damping_ratios[m] = ray.modal_damping(modes.omega(m));
  }
  sim.reference.mode_shapes = vertical_mode_shapes(modes, sys.dofs);
  sim.reference.rayleigh_alpha = ray.alpha;
  sim.reference.rayleigh_beta = ray.beta;

  const int T = params.steps;
  const int cutoff = T / 2;
  Matrix load = Matrix::Zero(sys.dofs.n_free, T);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, params.noise_std_n);
  const auto loaded = excited_dofs(truss, sys.dofs);
  for (int k = 0; k < cutoff; ++k)
    for (int d : loaded) load(d, k) = noise(rng);

  const NewmarkResult res = newmark(sys.M, sys.C, sys.K, load, params.dt_s);
  sim.history.dt_s = params.dt_s;
  sim.history.excitation_cutoff_step = cutoff;
  sim.history.accelerations = Matrix::Zero(truss.node_count(), T);
  for (int i = 0; i < truss.node_count(); ++i) {
    const int d = sys.dofs.node_dofs[i][1];
    if (d >= 0) sim.history.accelerations.row(i) = res.acceleration.row(d);
  }
  return sim;
}

}  // namespace modalgraph
