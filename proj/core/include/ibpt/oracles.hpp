#pragma once

// Independent ground truth for the threshold machinery: maximal
// correlation by alternating conditional expectations, Gaussian critical
// betas, a discretized bivariate normal, a sampled upper bound on G, and
// the bundled dataset families.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ibpt/dataset_io.hpp"
#include "ibpt/prob_core.hpp"

namespace ibpt {

struct AceResult {
  double correlation = 0.0;
  Vector f;  // over x, mean 0, unit variance under p(x)
  Vector g;  // over y, mean 0, unit variance under p(y)
  std::size_t iterations = 0;
  bool converged = false;
};

// Maximal correlation of (X, Y) by alternating conditional expectations
// from a seeded random start, until the correlation moves less than `tol`.
AceResult ace(const JointDistribution& joint, std::uint64_t seed = 0, double tol = 1e-12,
              std::size_t max_iters = 1000000);
double ace_max_correlation(const JointDistribution& joint, std::uint64_t seed = 0);

struct GaussianSpec {
  double rho = 0.0;                 // scalar standardized pair
  std::optional<Matrix> sigma_x;    // multivariate form, overrides rho
  std::optional<Matrix> sigma_x_given_y;
  std::size_t bins = 32;
  double range_sigmas = 4.0;

  void validate() const;
};

// Independent scalar blocks with the given correlations.
GaussianSpec gaussian_blocks(const std::vector<double>& rhos);

// beta_i = 1 / (1 - lambda_i) for the eigenvalues lambda_i < 1 of
// Sigma_{x|y} Sigma_x^{-1}, ascending.
std::vector<double> gaussian_critical_betas(const GaussianSpec& spec);

double normal_cdf(double z);
// P(X > h, Y > k) for a standard bivariate normal with correlation r.
double bivariate_normal_upper(double h, double k, double r);
// P(a1 < X <= b1, a2 < Y <= b2).
double bivariate_normal_rect(double a1, double b1, double a2, double b2, double r);

// Standardized scalar pair with correlation spec.rho binned on a
// bins x bins grid over [-range, range]^2, renormalized.
JointDistribution discretize_gaussian(const GaussianSpec& spec);

struct BruteForceConfig {
  std::size_t samples = 100000;
  std::size_t refine_steps = 20000;
  std::uint64_t seed = 0;
  double cap = 1e6;                // ratios at or above this count as +inf
  std::optional<Matrix> seed_field;
};

// Smallest (A - C)/(B - C) found over random centered fields plus a local
// search; an upper bound on G. Requires |X| |Z| <= 9.
double brute_force_g(const JointDistribution& joint, const Encoder& enc, const BruteForceConfig& config = {});

// Uniform p(x) over {0,1}, y = x flipped with probability eps.
Dataset binary_symmetric(double eps);
// Uniform p(x), rows p(y|x) ~ Dirichlet(alpha).
Dataset random_categorical(std::size_t nx, std::size_t ny, double alpha, std::uint64_t seed);
// Uniform p(x), p(y|x) given by a confusion matrix; rows are renormalized.
Dataset confusion_dataset(const Matrix& confusion, std::vector<std::string> labels = {});
// The bundled 10-class image-classifier confusion matrix.
Dataset cifar10_confusion();
// p(x, y) = p(x) p(y), uniform.
Dataset independent_dataset(std::size_t nx, std::size_t ny);

}  // namespace ibpt
