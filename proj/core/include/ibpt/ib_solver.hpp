#pragma once

// Blahut-Arimoto alternating minimization of I(X;Z) - beta I(Y;Z).

#include <cstdint>
#include <optional>

#include "ibpt/prob_core.hpp"

namespace ibpt {

// Unconverged runs try merging z pairs whose p(y|z) rows differ by less
// than this (max norm).
inline constexpr double kMergeDistance = 0.05;

struct SolverConfig {
  double tol = 1e-12;             // objective-change threshold, nats
  std::size_t max_iters = 100000;
  std::size_t restarts = 10;
  double init_noise = 1.0;        // Dirichlet jitter scale on top of the uniform row
  std::uint64_t seed = 0;
  bool accelerate = true;          // SQUAREM extrapolation between BA steps
  bool split_unstable = true;      // split a z whose sigma_2 says beta is past its threshold
  std::optional<Encoder> warm_start;  // replaces the first restart's random init
  std::optional<double> anneal_from;  // solve along a geometric beta path from here
  std::size_t anneal_steps = 16;

  // Throws kInvalidArgument unless tol > 0, max_iters >= 1, restarts >= 1.
  void validate() const;
};

struct IBSolution {
  Encoder encoder;
  double beta = 0.0;
  double ixz = 0.0;
  double iyz = 0.0;
  double objective = 0.0;
  std::size_t iterations = 0;   // of the winning restart
  double residual = 0.0;        // || enc - ba_step(enc) ||_inf
  std::size_t restarts_used = 0;
  bool converged = false;
  std::size_t dropped_columns = 0;
  std::vector<double> restart_objectives;
};

// One update p'(z|x) ∝ p(z) exp(-beta KL(p(y|x) || p(y|z))). Throws
// kDeadSupport when no z column carries mass.
Encoder ba_step(const JointDistribution& joint, const Encoder& enc, double beta);

// Best-of-restarts solution. Non-convergence is reported through the
// `converged` flag, not an exception.
IBSolution solve_ib(const JointDistribution& joint, std::size_t zdim, double beta, const SolverConfig& config);

// Seed for task `index` of stream `salt` under a global seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t global, std::uint64_t salt, std::uint64_t index);

// Uniform rows plus noise * Dirichlet(1) jitter, renormalized.
Encoder jittered_uniform_encoder(std::size_t nx, std::size_t zdim, double noise, std::uint64_t seed);

}  // namespace ibpt
