#pragma once

// Phase-transition discovery by the fixed-point chase beta <- G[p*_beta],
// plus beta sweeps and an empirical kink detector over I(Y;Z).

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ibpt/ib_solver.hpp"
#include "ibpt/prob_core.hpp"

namespace ibpt {

enum class Termination { kRatioExceeded, kMaxPoints, kNonFiniteG, kIterationCap };
std::string to_string(Termination t);

struct TransitionConfig {
  std::size_t patience = 5;      // K
  double delta = 1e-4;           // precision floor
  double max_ratio = 100.0;      // R
  double beta_start = 1.0;
  std::size_t max_iterations = 200;
  std::size_t max_points = 64;
  SolverConfig solver;

  void validate() const;
};

struct TraceStep {
  double beta = 0.0;
  double beta_new = 0.0;
};

struct TransitionReport {
  std::vector<double> points;
  std::vector<double> residuals;             // |beta_th(point) - point|, re-evaluated
  std::vector<std::vector<TraceStep>> traces; // iterations leading to each point
  std::vector<TraceStep> tail;                // iterations after the last point
  Termination termination = Termination::kRatioExceeded;
  std::size_t iterations = 0;
  std::size_t unconverged_solves = 0;
  bool bound_respected = true;                // points.size() <= |Y| - 1
};

struct BetaTh {
  double value = std::numeric_limits<double>::infinity();
  bool converged = true;
  IBSolution solution;
};

// G (SVD route) of the IB solution at beta.
BetaTh beta_th(const JointDistribution& joint, std::size_t zdim, double beta, const SolverConfig& solver);

TransitionReport discover_transitions(const JointDistribution& joint, std::size_t zdim, const TransitionConfig& config);

struct SweepRow {
  double beta = 0.0;
  double ixz = 0.0;
  double iyz = 0.0;
  double objective = 0.0;
  double g_value = 0.0;
  bool converged = false;
  std::string error;  // non-empty when the point failed
};

struct SweepRecord {
  std::vector<SweepRow> rows;
  std::vector<Encoder> encoders;  // one per row; constant rows on failure
};

struct SweepConfig {
  SolverConfig solver;
  bool warm_start = false;  // chain each point from the previous solution (runs serially)
  std::size_t jobs = 1;
};

// Grid must be positive and sorted ascending.
SweepRecord sweep(const JointDistribution& joint, std::size_t zdim, const std::vector<double>& beta_grid,
                  const SweepConfig& config);

std::vector<double> linear_grid(double lo, double hi, std::size_t steps);

inline constexpr double kDefaultKinkThreshold = 5.0;

// Grid cells where the second divided difference of I(Y;Z) is a positive
// local maximum exceeding tau times its median magnitude (and whose slope
// jump clears 1e-6 of the steepest slope). Returns cell
// midpoints in ascending order.
std::vector<double> detect_kinks(const SweepRecord& record, double tau = kDefaultKinkThreshold);
std::vector<double> detect_kinks(const std::vector<double>& beta, const std::vector<double>& iyz,
                                 double tau = kDefaultKinkThreshold);

std::string report_to_json(const TransitionReport& report);
std::string sweep_to_csv(const SweepRecord& record);

// Shortest round-trip decimal with 17 significant digits.
std::string format_real(double v);

}  // namespace ibpt
