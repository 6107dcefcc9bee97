#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "modalgraph/common.hpp"
#include "modalgraph/population.hpp"

namespace modalgraph {

struct DofMap {
  // node -> {x, y} free-DOF index, -1 where the DOF is constrained.
  std::vector<std::array<int, 2>> node_dofs;
  std::vector<int> constrained;  // global DOF ids (2 * node + axis)
  int n_free = 0;

  int n_total() const { return static_cast<int>(node_dofs.size()) * 2; }
};

struct SystemMatrices {
  Matrix K;  // N/m
  Matrix M;  // kg
  Matrix C;  // N s/m, zero until Rayleigh damping is applied
  DofMap dofs;
};

struct RayleighCoefficients {
  double alpha = 0.0;  // 1/s
  double beta = 0.0;   // s

  double modal_damping(double omega) const { return 0.5 * (alpha / omega + beta * omega); }
};

// Generalised eigen-solution on the free DOFs. Shapes are mass-normalised.
struct ModalAnalysis {
  Vector omega;        // rad/s, ascending
  Matrix free_shapes;  // n_free x n_modes
};

struct ModalReference {
  std::vector<double> frequencies_hz;
  std::vector<double> damping_ratios;
  Matrix mode_shapes;  // N x n_modes, vertical component, unit max, dominant entry positive
  double rayleigh_alpha = 0.0;
  double rayleigh_beta = 0.0;

  int mode_count() const { return static_cast<int>(frequencies_hz.size()); }
};

struct TimeHistory {
  Matrix accelerations;  // N x T, m/s^2, vertical DOF per node
  double dt_s = 0.005;
  int excitation_cutoff_step = 0;

  double fs_hz() const { return 1.0 / dt_s; }
  int steps() const { return static_cast<int>(accelerations.cols()); }
};

struct NewmarkParams {
  double gamma = 0.5;
  double beta = 0.25;
};

struct NewmarkResult {
  Matrix displacement;  // n x T
  Matrix velocity;
  Matrix acceleration;
};

struct SimulationParams {
  int steps = 2000;
  double dt_s = 0.005;
  double noise_std_n = 1e3;
  double target_damping = 0.01;
  int reference_modes = 6;
};

// Consistent-mass 2D truss assembly with constrained DOFs removed. K and M are
// exactly symmetric. Throws NumericalError when the constrained K is singular.
SystemMatrices assemble(const TrussSpec& truss);

ModalAnalysis modal_analysis(const SystemMatrices& system, int n_modes);

// Vertical components expanded to all N nodes, sign fixed and scaled to unit max.
Matrix vertical_mode_shapes(const ModalAnalysis& modes, const DofMap& dofs);

ModalReference eigen(const SystemMatrices& system, int n_modes);

RayleighCoefficients rayleigh(double omega1, double omega2, double zeta = 0.01);

// Constant-average-acceleration Newmark integration. load is n x T; column k is
// the force at t = k dt. Initial conditions default to rest.
NewmarkResult newmark(const Matrix& M, const Matrix& C, const Matrix& K, const Matrix& load,
                      double dt, const NewmarkParams& params = {}, const Vector& u0 = Vector(),
                      const Vector& v0 = Vector());

struct Simulation {
  TimeHistory history;
  ModalReference reference;
};

// Loaded DOFs: vertical DOFs of free bottom-chord nodes (y == 0).
std::vector<int> excited_dofs(const TrussSpec& truss, const DofMap& dofs);

Simulation simulate(const TrussSpec& truss, std::uint64_t seed, const SimulationParams& params = {});

}  // namespace modalgraph
