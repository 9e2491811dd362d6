#pragma once

// Range-restricted Rayleigh quotients shared by the threshold routes.

#include "ibpt/prob_core.hpp"

namespace ibpt {

inline constexpr double kRankCutoff = 1e-10;

struct PencilMax {
  double lambda_max = 0.0;  // sup of r'Dr / r'Nr over range(N); 0 on an empty range
  Vector direction;         // attaining r in the original coordinates
  Eigen::Index rank = 0;    // numerical rank kept for N
  bool used_cholesky = false;
};

// Largest generalized eigenvalue of the symmetric pencil (D, N) with N PSD,
// restricted to the numerical range of N (eigenvalues above
// cutoff * top eigenvalue). When `try_cholesky` is set and N factors stably,
// whitening uses the Cholesky factor N = C C' instead.
PencilMax max_ratio_on_range(const Matrix& numer, const Matrix& denom, double cutoff = kRankCutoff,
                             bool try_cholesky = false);

// Largest eigenvalue of a symmetric matrix and its unit eigenvector.
std::pair<double, Vector> top_eigenpair(const Matrix& sym);

// Orthonormal basis (columns) of the null space of `m`, relative cutoff.
Matrix null_space(const Matrix& m, double cutoff = kRankCutoff);

}  // namespace ibpt
