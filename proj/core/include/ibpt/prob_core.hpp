#pragma once

// Exact categorical probability machinery for the Markov chain Z - X - Y.

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <vector>

#include "ibpt/error.hpp"

namespace ibpt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Conditioning events with probability at or below this are "dead": their
// conditionals are flagged, never fabricated.
inline constexpr double kSupportFloor = 1e-12;

// Tolerance for a joint table's total mass.
inline constexpr double kJointSumTol = 1e-12;

// Tolerance for encoder row sums.
inline constexpr double kRowSumTol = 1e-12;

// Neumaier-compensated accumulator.
class CompensatedSum {
 public:
  void add(double v) noexcept {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  CompensatedSum& operator+=(double v) noexcept {
    add(v);
    return *this;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Exact joint p(x,y) with cached marginals and p(y|x).
class JointDistribution {
 public:
  // Validates entries >= 0 and total mass within kJointSumTol of 1.
  explicit JointDistribution(Matrix pxy);

  // Builds p(x,y) = p(x) p(y|x). Rows of py_given_x must each sum to 1
  // within kRowSumTol wherever px > 0.
  static JointDistribution from_conditional(const Vector& px, const Matrix& py_given_x);

  std::size_t nx() const noexcept { return static_cast<std::size_t>(pxy_.rows()); }
  std::size_t ny() const noexcept { return static_cast<std::size_t>(pxy_.cols()); }

  const Matrix& pxy() const noexcept { return pxy_; }
  const Vector& px() const noexcept { return px_; }
  const Vector& py() const noexcept { return py_; }
  // Rows with px <= kSupportFloor are set to the uniform row and flagged.
  const Matrix& py_given_x() const noexcept { return py_given_x_; }
  bool x_live(std::size_t i) const noexcept { return px_(static_cast<Eigen::Index>(i)) > kSupportFloor; }

 private:
  Matrix pxy_;
  Vector px_;
  Vector py_;
  Matrix py_given_x_;
};

// Stochastic map p(z|x), an |X| x |Z| row-stochastic table.
class Encoder {
 public:
  explicit Encoder(Matrix pzx);

  // Every row equal to `pz`; the representation is independent of X.
  static Encoder constant(std::size_t nx, const Vector& pz);
  static Encoder uniform(std::size_t nx, std::size_t nz);
  // Requires nz >= nx; x -> z = x.
  static Encoder identity(std::size_t nx, std::size_t nz);

  std::size_t nx() const noexcept { return static_cast<std::size_t>(pzx_.rows()); }
  std::size_t zdim() const noexcept { return static_cast<std::size_t>(pzx_.cols()); }
  const Matrix& pzx() const noexcept { return pzx_; }
  double operator()(std::size_t x, std::size_t z) const noexcept {
    return pzx_(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(z));
  }

  // Same encoder with columns reordered: new column k = old column perm[k].
  Encoder permuted(const std::vector<std::size_t>& perm) const;

 private:
  Matrix pzx_;
};

// Everything the chain Z - X - Y induces from (p(x,y), p(z|x)).
struct InducedDistributions {
  Vector pz;                 // |Z|
  Matrix pxz;                // |X| x |Z| joint
  Matrix pyz;                // |Y| x |Z| joint
  Matrix pz_given_y;         // |Y| x |Z|
  Matrix px_given_z;         // |Z| x |X|
  Matrix py_given_z;         // |Z| x |Y|
  std::vector<Matrix> px_given_yz;  // [y] -> |Z| x |X|
  std::vector<bool> z_live;         // pz > kSupportFloor
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> yz_live;  // pyz > kSupportFloor

  std::size_t live_count() const;
};

InducedDistributions induce(const JointDistribution& joint, const Encoder& enc);

// I(A;B) in nats of a joint table, 0 ln 0 := 0. The table must be
// non-negative; it is used as given (callers pass normalized tables).
double mutual_info(const Matrix& p_joint);

double mutual_info_xz(const JointDistribution& joint, const Encoder& enc);
double mutual_info_yz(const JointDistribution& joint, const Encoder& enc);
double mutual_info_xy(const JointDistribution& joint);
double entropy(const Vector& p);
double kl_divergence(const Vector& p, const Vector& q);

struct IBTerms {
  double ixz = 0.0;
  double iyz = 0.0;
  double objective = 0.0;
};

IBTerms ib_terms(const JointDistribution& joint, const Encoder& enc, double beta);

// I(X;Z) - beta I(Y;Z).
double ib_objective(const JointDistribution& joint, const Encoder& enc, double beta);

}  // namespace ibpt
