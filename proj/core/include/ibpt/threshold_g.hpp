#pragma once

// The threshold G[p(z|x)] by two independent routes:
//  * SVD route: G = 1 / rho_r^2 with rho_r = max_z sigma_2(Q_{X,Y|z});
//  * eigen route: the infimum of (A - C)/(B - C) as a generalized
//    eigenproblem on quadratic forms over the (x, z) grid.
// Plus a third, centered-subspace route that keeps E_{p(z|x)} r = 0 as a hard
// constraint, used to flag encoders where the first two need not coincide.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ibpt/prob_core.hpp"
#include "ibpt/variation.hpp"

namespace ibpt {

inline constexpr double kRhoFloor = 1e-12;
inline constexpr double kRouteDisagreementTol = 1e-6;

struct QMatrix {
  std::size_t z_index = 0;
  Matrix q;                        // rows: live x, cols: live y
  std::vector<std::size_t> x_index;
  std::vector<std::size_t> y_index;
  Vector sigma;                    // descending
  Matrix u;                        // left singular vectors (columns)
  Matrix v;                        // right singular vectors (columns)

  double sigma2() const { return sigma.size() > 1 ? sigma(1) : 0.0; }
};

enum class GRoute { kSvd, kEigen, kCentered };
std::string to_string(GRoute route);

struct GReport {
  double g_value = std::numeric_limits<double>::infinity();
  double rho_r = 0.0;
  std::size_t best_z = 0;
  std::vector<double> per_z_sigma2;  // 0 for dead z
  std::vector<bool> z_live;
  GRoute route = GRoute::kSvd;
  PerturbationField optimal_field{Matrix()};
  bool field_centered = false;  // an s(z) shift made the field exactly centered

  bool finite() const { return std::isfinite(g_value); }
};

// Q_{X,Y|z} restricted to x, y with p(x|z), p(y|z) above the support floor,
// with its full SVD. Singular vector pairs are sign-fixed so that the
// largest-magnitude entry of each right vector is positive.
QMatrix build_q_matrix(const JointDistribution& joint, const Encoder& enc, std::size_t z);

GReport g_svd(const JointDistribution& joint, const Encoder& enc);
GReport g_eigen(const JointDistribution& joint, const Encoder& enc);
GReport g_centered(const JointDistribution& joint, const Encoder& enc);

// r'M_A r = E[r^2(z|x)], r'M_B r = B, r'M_C r = C with r flattened as
// index x * |Z| + z. Dead z contribute nothing.
struct QuadraticForms {
  Matrix ma, mb, mc;
  std::size_t nx = 0, nz = 0;
};
QuadraticForms ib_quadratic_forms(const JointDistribution& joint, const Encoder& enc);

Vector flatten_field(const Matrix& r);
Matrix unflatten_field(const Vector& v, std::size_t nx, std::size_t nz);

// Adds the least-squares s(z) making the field centered under enc. The
// ratio (A - C)/(B - C) is unchanged; `centered()` reports whether the shift
// achieved E_{p(z|x)} r = 0 within 1e-10.
PerturbationField shift_to_centered(const Encoder& enc, const Matrix& r);

struct RouteComparison {
  double svd = 0.0;
  double eigen = 0.0;
  double centered = 0.0;
  double svd_eigen_rel_diff = 0.0;
  bool routes_agree = true;   // svd vs eigen within kRouteDisagreementTol
  bool decomposable = true;   // centered constraint costs nothing (within tol)
};
RouteComparison compare_routes(const JointDistribution& joint, const Encoder& enc);

// Relative difference that treats two infinities as equal.
double relative_difference(double a, double b);

struct ClassSeparation {
  std::size_t best_z = 0;
  double sigma2 = 0.0;
  Vector f;                        // over x; 0 where p(x|z*) is dead
  Vector g;                        // over y; 0 where p(y|z*) is dead
  std::vector<std::size_t> positive_classes;
  std::vector<std::size_t> negative_classes;
  std::vector<int> x_side;         // sign of f per x (0 if dead)

  bool empty() const { return f.size() == 0; }
};

// The sigma_2 singular pair at the z attaining rho_r, mapped back to
// functions f(x), g(y). Empty when rho_r <= kRhoFloor.
ClassSeparation class_separation(const JointDistribution& joint, const Encoder& enc);

}  // namespace ibpt
