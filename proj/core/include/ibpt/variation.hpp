#pragma once

// Perturbation calculus of the IB objective around an encoder p(z|x):
// relative perturbations r(z|x), the moments A >= B >= C, the ratio
// (A - C) / (B - C), the second variation, the full power series, T_beta and
// the sample-based estimate of G.

#include <cstdint>
#include <vector>

#include "ibpt/prob_core.hpp"

namespace ibpt {

// Relative perturbation r(z|x); the perturbed encoder is p(z|x)(1 + eps r).
class PerturbationField {
 public:
  explicit PerturbationField(Matrix r, bool centered = false) : r_(std::move(r)), centered_(centered) {}

  // r(z|x) = s(z) for every x.
  static PerturbationField pullback(std::size_t nx, const Vector& s);

  const Matrix& r() const noexcept { return r_; }
  double operator()(std::size_t x, std::size_t z) const noexcept {
    return r_(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(z));
  }
  bool centered() const noexcept { return centered_; }
  double bound() const noexcept { return r_.cwiseAbs().maxCoeff(); }

  // Largest |E_{z~p(z|x)} r(z|x)| over x.
  double centering_error(const Encoder& enc) const;

 private:
  Matrix r_;
  bool centered_;
};

struct ReducedMoments {
  double a = 0.0;  // E[r^2(z|x)]
  double b = 0.0;  // E[r^2(z|y)],  r(z|y) = E_{x~p(x|y,z)} r(z|x)
  double c = 0.0;  // E[r^2(z)],    r(z)   = E_{x~p(x|z)} r(z|x)
  std::size_t excluded_z = 0;   // dead z left out of every moment
  std::size_t excluded_yz = 0;  // dead (y,z) cells left out of B
};

// r'(z|x) = r(z|x) - E_{z~p(z|x)} r(z|x).
PerturbationField center(const Encoder& enc, const PerturbationField& r);

ReducedMoments reduced_moments(const JointDistribution& joint, const Encoder& enc, const PerturbationField& r);

// (A - C) / (B - C); +infinity when B - C <= 1e-14 A. Throws
// kZeroPerturbation when r has no component left after centering.
double g_ratio(const JointDistribution& joint, const Encoder& enc, const PerturbationField& r);

// eps^2 / 2 [(A - C) - beta (B - C)].
double second_variation(const JointDistribution& joint, const Encoder& enc, const PerturbationField& r, double beta,
                        double eps);

struct SeriesExpansion {
  double base = 0.0;           // IB_beta[p]
  std::vector<double> terms;   // terms[n-1] = order-n contribution, eps^n included
  double correction() const;   // sum of terms
  double total() const { return base + correction(); }
};

// Partial sum through `order` of IB_beta[p(1 + eps r)] around IB_beta[p].
// r must be centered; throws kOutsideSimplex naming the first (x,z) where
// 1 + eps r <= 0 on the encoder's support.
SeriesExpansion expand_ib_series(const JointDistribution& joint, const Encoder& enc, const PerturbationField& r,
                                 double beta, double eps, int order);

struct TBetaResult {
  double value = 0.0;          // inf over E[r^2(z|x)] = 1 of (A - C) - beta' (B - C)
  PerturbationField field{Matrix()};
};

// T_beta(beta') on the normalized sphere E[r^2(z|x)] = 1. Zero for
// beta' <= G[enc], negative above.
TBetaResult t_beta(const JointDistribution& joint, const Encoder& enc, double beta_prime);

// One weighted (x, y, z) draw. The empirical measure is the normalized
// weights; uniform weights give the plain Monte-Carlo estimator.
struct Sample {
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t z = 0;
  double weight = 1.0;
};

// N draws x ~ p(x), y ~ p(y|x), z ~ p(z|x).
std::vector<Sample> draw_samples(const JointDistribution& joint, const Encoder& enc, std::size_t n,
                                 std::uint64_t seed);

// Every atom (x, y, z) weighted by p(x, y) p(z|x).
std::vector<Sample> enumerate_atoms(const JointDistribution& joint, const Encoder& enc);

struct GHatResult {
  double g_value = 0.0;
  PerturbationField field{Matrix()};
};

// Importance-sampling estimate of G from a batch, infimum taken by the
// same range-restricted eigen reduction as the exact route. Throws
// kDegenerateBatch on N < 2 or when a class in [0, ny) is absent.
GHatResult estimate_g_hat(const std::vector<Sample>& samples, const Encoder& enc, std::size_t ny);

}  // namespace ibpt
