#include "ibpt/threshold_g.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include "ibpt/linalg.hpp"
#include "log.hpp"

namespace ibpt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Below this the eigen route's top eigenvalue (rho_r^2) is rounding noise.
constexpr double kEigenLambdaFloor = 64.0 * std::numeric_limits<double>::epsilon();

// Fix the sign of each singular pair so that the largest-magnitude entry of
// the right vector (after the p(y|z)^{-1/2} rescale) is positive.
void fix_signs(Matrix& u, Matrix& v, const Vector& y_scale) {
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index j = 0; j < v.rows(); ++j) {
      const double val = std::abs(v(j, c) * y_scale(j));
      if (val > best + 1e-14) {
        best = val;
        arg = j;
      }
    }
    if (v(arg, c) < 0.0) {
      v.col(c) *= -1.0;
      if (c < u.cols()) u.col(c) *= -1.0;
    }
  }
}

QMatrix build_q_from(const JointDistribution& joint, const Encoder& enc, const InducedDistributions& d,
                     std::size_t z) {
  const auto zz = static_cast<Eigen::Index>(z);
  if (!d.z_live[z]) {
    std::ostringstream os;
    os << "z = " << z << " is dead (p(z) = " << d.pz(zz) << ")";
    throw Error(ErrorKind::kDeadSupport, os.str());
  }
  QMatrix qm;
  qm.z_index = z;
  for (std::size_t i = 0; i < joint.nx(); ++i) {
    if (d.px_given_z(zz, static_cast<Eigen::Index>(i)) > kSupportFloor) qm.x_index.push_back(i);
  }
  for (std::size_t j = 0; j < joint.ny(); ++j) {
    if (d.py_given_z(zz, static_cast<Eigen::Index>(j)) > kSupportFloor) qm.y_index.push_back(j);
  }
  const auto rows = static_cast<Eigen::Index>(qm.x_index.size());
  const auto cols = static_cast<Eigen::Index>(qm.y_index.size());
  qm.q.resize(rows, cols);
  Vector y_scale(cols);
  for (Eigen::Index a = 0; a < rows; ++a) {
    const auto i = static_cast<Eigen::Index>(qm.x_index[static_cast<std::size_t>(a)]);
    const double pxz = d.px_given_z(zz, i);
    for (Eigen::Index b = 0; b < cols; ++b) {
      const auto j = static_cast<Eigen::Index>(qm.y_index[static_cast<std::size_t>(b)]);
      const double pyz = d.py_given_z(zz, j);
      const double pxy_z = joint.pxy()(i, j) * enc.pzx()(i, zz) / d.pz(zz);
      qm.q(a, b) = pxy_z / std::sqrt(pxz * pyz);
    }
  }
  for (Eigen::Index b = 0; b < cols; ++b) {
    y_scale(b) = 1.0 / std::sqrt(d.py_given_z(zz, static_cast<Eigen::Index>(qm.y_index[static_cast<std::size_t>(b)])));
  }
  Eigen::JacobiSVD<Matrix> svd(qm.q, Eigen::ComputeThinU | Eigen::ComputeThinV);
  qm.sigma = svd.singularValues();
  qm.u = svd.matrixU();
  qm.v = svd.matrixV();
  fix_signs(qm.u, qm.v, y_scale);
  return qm;
}

PerturbationField normalized(const Encoder& enc, const Matrix& r) {
  const double m = r.cwiseAbs().maxCoeff();
  if (!(m > 0.0)) return PerturbationField(r, false);
  return shift_to_centered(enc, r / m);
}

std::size_t dominant_z(const QuadraticForms& f, const Vector& dir) {
  std::size_t best = 0;
  double best_energy = -1.0;
  const Matrix num = f.ma - f.mc;
  for (std::size_t k = 0; k < f.nz; ++k) {
    Vector part = Vector::Zero(dir.size());
    for (std::size_t i = 0; i < f.nx; ++i) {
      const auto idx = static_cast<Eigen::Index>(i * f.nz + k);
      part(idx) = dir(idx);
    }
    const double e = part.dot(num * part);
    if (e > best_energy) {
      best_energy = e;
      best = k;
    }
  }
  return best;
}

GReport report_from_pencil(const JointDistribution& joint, const Encoder& enc, const QuadraticForms& forms,
                           const PencilMax& pm, GRoute route) {
  GReport rep;
  rep.route = route;
  const InducedDistributions d = induce(joint, enc);
  rep.z_live = d.z_live;
  rep.optimal_field = PerturbationField(Matrix::Zero(static_cast<Eigen::Index>(enc.nx()),
                                                     static_cast<Eigen::Index>(enc.zdim())));
  if (pm.lambda_max <= kEigenLambdaFloor) {
    rep.g_value = kInf;
    rep.rho_r = std::sqrt(std::max(0.0, pm.lambda_max));
    return rep;
  }
  rep.g_value = 1.0 / pm.lambda_max;
  rep.rho_r = std::sqrt(pm.lambda_max);
  rep.best_z = dominant_z(forms, pm.direction);
  rep.optimal_field = normalized(enc, unflatten_field(pm.direction, enc.nx(), enc.zdim()));
  rep.field_centered = rep.optimal_field.centered();
  return rep;
}

}  // namespace

std::string to_string(GRoute route) {
  switch (route) {
    case GRoute::kSvd: return "svd";
    case GRoute::kEigen: return "eigen";
    case GRoute::kCentered: return "centered";
  }
  return "unknown";
}

Vector flatten_field(const Matrix& r) {
  Vector v(r.size());
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    for (Eigen::Index k = 0; k < r.cols(); ++k) v(i * r.cols() + k) = r(i, k);
  }
  return v;
}

Matrix unflatten_field(const Vector& v, std::size_t nx, std::size_t nz) {
  Matrix r(static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(nz));
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    for (Eigen::Index k = 0; k < r.cols(); ++k) r(i, k) = v(i * r.cols() + k);
  }
  return r;
}

QMatrix build_q_matrix(const JointDistribution& joint, const Encoder& enc, std::size_t z) {
  if (z >= enc.zdim()) throw Error(ErrorKind::kDimensionMismatch, "z index out of range");
  return build_q_from(joint, enc, induce(joint, enc), z);
}

PerturbationField shift_to_centered(const Encoder& enc, const Matrix& r) {
  const Matrix& p = enc.pzx();
  if (r.rows() != p.rows() || r.cols() != p.cols()) {
    throw Error(ErrorKind::kDimensionMismatch, "field shape differs from encoder");
  }
  const Vector mean = p.cwiseProduct(r).rowwise().sum();
  const Vector s = p.completeOrthogonalDecomposition().solve(-mean);
  Matrix shifted = r;
  for (Eigen::Index i = 0; i < shifted.rows(); ++i) shifted.row(i) += s.transpose();
  const double resid = p.cwiseProduct(shifted).rowwise().sum().cwiseAbs().maxCoeff();
  return PerturbationField(std::move(shifted), resid <= 1e-10);
}

QuadraticForms ib_quadratic_forms(const JointDistribution& joint, const Encoder& enc) {
  if (joint.nx() != enc.nx()) throw Error(ErrorKind::kDimensionMismatch, "encoder rows != |X|");
  const auto nx = static_cast<Eigen::Index>(joint.nx());
  const auto ny = static_cast<Eigen::Index>(joint.ny());
  const auto nz = static_cast<Eigen::Index>(enc.zdim());
  const Matrix& pxy = joint.pxy();
  const Matrix& pzx = enc.pzx();
  const Vector& px = joint.px();
  QuadraticForms f;
  f.nx = joint.nx();
  f.nz = enc.zdim();
  const Eigen::Index n = nx * nz;
  f.ma = Matrix::Zero(n, n);
  f.mb = Matrix::Zero(n, n);
  f.mc = Matrix::Zero(n, n);
  auto idx = [nz](Eigen::Index i, Eigen::Index k) { return i * nz + k; };
  for (Eigen::Index k = 0; k < nz; ++k) {
    // p(x,z) column and p(z)
    Vector w(nx);
    for (Eigen::Index i = 0; i < nx; ++i) w(i) = px(i) * pzx(i, k);
    CompensatedSum pz_sum;
    for (Eigen::Index i = 0; i < nx; ++i) pz_sum += w(i);
    const double pz = pz_sum.value();
    if (pz <= kSupportFloor) continue;
    for (Eigen::Index i = 0; i < nx; ++i) f.ma(idx(i, k), idx(i, k)) = w(i);
    // C: (sum_x p(x,z) r)^2 / p(z)
    for (Eigen::Index i = 0; i < nx; ++i) {
      for (Eigen::Index l = 0; l < nx; ++l) f.mc(idx(i, k), idx(l, k)) = w(i) * w(l) / pz;
    }
    // B: sum_y (sum_x p(x,y) p(z|x) r)^2 / p(y,z)
    for (Eigen::Index j = 0; j < ny; ++j) {
      Vector v(nx);
      CompensatedSum pyz_sum;
      for (Eigen::Index i = 0; i < nx; ++i) {
        v(i) = pxy(i, j) * pzx(i, k);
        pyz_sum += v(i);
      }
      const double pyz = pyz_sum.value();
      if (pyz <= kSupportFloor) continue;
      for (Eigen::Index i = 0; i < nx; ++i) {
        for (Eigen::Index l = 0; l < nx; ++l) f.mb(idx(i, k), idx(l, k)) += v(i) * v(l) / pyz;
      }
    }
  }
  return f;
}

GReport g_svd(const JointDistribution& joint, const Encoder& enc) {
  const InducedDistributions d = induce(joint, enc);
  if (d.live_count() == 0) throw Error(ErrorKind::kDeadSupport, "every z column is dead");
  GReport rep;
  rep.route = GRoute::kSvd;
  rep.z_live = d.z_live;
  rep.per_z_sigma2.assign(enc.zdim(), 0.0);
  std::optional<QMatrix> best;
  double rho = -1.0;
  for (std::size_t k = 0; k < enc.zdim(); ++k) {
    if (!d.z_live[k]) continue;
    QMatrix qm = build_q_from(joint, enc, d, k);
    const double s2 = qm.sigma2();
    rep.per_z_sigma2[k] = s2;
    if (s2 > rho) {
      rho = s2;
      rep.best_z = k;
      best = std::move(qm);
    }
  }
  rep.rho_r = std::max(0.0, rho);
  const auto nx = static_cast<Eigen::Index>(enc.nx());
  const auto nz = static_cast<Eigen::Index>(enc.zdim());
  rep.optimal_field = PerturbationField(Matrix::Zero(nx, nz));
  if (rep.rho_r <= kRhoFloor) {
    rep.g_value = kInf;
    return rep;
  }
  rep.g_value = 1.0 / (rep.rho_r * rep.rho_r);

  // h*(x) = u_2(x) / sqrt(p(x|z*)) on z*, zero elsewhere.
  Matrix r = Matrix::Zero(nx, nz);
  const auto zs = static_cast<Eigen::Index>(rep.best_z);
  for (std::size_t a = 0; a < best->x_index.size(); ++a) {
    const auto i = static_cast<Eigen::Index>(best->x_index[a]);
    r(i, zs) = best->u(static_cast<Eigen::Index>(a), 1) / std::sqrt(d.px_given_z(zs, i));
  }
  rep.optimal_field = normalized(enc, r);
  rep.field_centered = rep.optimal_field.centered();
  return rep;
}

GReport g_eigen(const JointDistribution& joint, const Encoder& enc) {
  const QuadraticForms forms = ib_quadratic_forms(joint, enc);
  if (forms.ma.diagonal().maxCoeff() <= 0.0) throw Error(ErrorKind::kDeadSupport, "every z column is dead");
  const PencilMax pm = max_ratio_on_range(forms.ma - forms.mc, forms.mb - forms.mc);
  return report_from_pencil(joint, enc, forms, pm, GRoute::kEigen);
}

GReport g_centered(const JointDistribution& joint, const Encoder& enc) {
  const QuadraticForms forms = ib_quadratic_forms(joint, enc);
  if (forms.ma.diagonal().maxCoeff() <= 0.0) throw Error(ErrorKind::kDeadSupport, "every z column is dead");
  const auto nx = static_cast<Eigen::Index>(enc.nx());
  const auto nz = static_cast<Eigen::Index>(enc.zdim());
  Matrix constraint = Matrix::Zero(nx, nx * nz);
  for (Eigen::Index i = 0; i < nx; ++i) {
    for (Eigen::Index k = 0; k < nz; ++k) constraint(i, i * nz + k) = enc.pzx()(i, k);
  }
  const Matrix basis = null_space(constraint);
  const Matrix num = basis.transpose() * (forms.ma - forms.mc) * basis;
  const Matrix den = basis.transpose() * (forms.mb - forms.mc) * basis;
  PencilMax pm = max_ratio_on_range(num, den);
  pm.direction = basis * pm.direction;
  return report_from_pencil(joint, enc, forms, pm, GRoute::kCentered);
}

double relative_difference(double a, double b) {
  if (std::isinf(a) && std::isinf(b)) return 0.0;
  if (std::isinf(a) || std::isinf(b)) return kInf;
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

RouteComparison compare_routes(const JointDistribution& joint, const Encoder& enc) {
  RouteComparison c;
  c.svd = g_svd(joint, enc).g_value;
  c.eigen = g_eigen(joint, enc).g_value;
  c.centered = g_centered(joint, enc).g_value;
  c.svd_eigen_rel_diff = relative_difference(c.svd, c.eigen);
  c.routes_agree = c.svd_eigen_rel_diff <= kRouteDisagreementTol;
  c.decomposable = relative_difference(c.centered, c.eigen) <= kRouteDisagreementTol;
  if (!c.routes_agree) {
    log::warn("G routes disagree: svd={} eigen={} (rel diff {:.3e})", c.svd, c.eigen, c.svd_eigen_rel_diff);
  }
  if (!c.decomposable) {
    log::info("centered-subspace G {} exceeds unconstrained G {}; |Z| < |X| decomposition fails", c.centered,
              c.eigen);
  }
  return c;
}

ClassSeparation class_separation(const JointDistribution& joint, const Encoder& enc) {
  const InducedDistributions d = induce(joint, enc);
  const GReport rep = g_svd(joint, enc);
  ClassSeparation out;
  if (rep.rho_r <= kRhoFloor) return out;
  const QMatrix qm = build_q_from(joint, enc, d, rep.best_z);
  const auto zs = static_cast<Eigen::Index>(rep.best_z);
  out.best_z = rep.best_z;
  out.sigma2 = qm.sigma2();
  out.f = Vector::Zero(static_cast<Eigen::Index>(joint.nx()));
  out.g = Vector::Zero(static_cast<Eigen::Index>(joint.ny()));
  for (std::size_t a = 0; a < qm.x_index.size(); ++a) {
    const auto i = static_cast<Eigen::Index>(qm.x_index[a]);
    out.f(i) = qm.u(static_cast<Eigen::Index>(a), 1) / std::sqrt(d.px_given_z(zs, i));
  }
  for (std::size_t b = 0; b < qm.y_index.size(); ++b) {
    const auto j = static_cast<Eigen::Index>(qm.y_index[b]);
    out.g(j) = qm.v(static_cast<Eigen::Index>(b), 1) / std::sqrt(d.py_given_z(zs, j));
  }
  for (std::size_t j = 0; j < joint.ny(); ++j) {
    const double gv = out.g(static_cast<Eigen::Index>(j));
    if (gv > 0.0) {
      out.positive_classes.push_back(j);
    } else if (gv < 0.0) {
      out.negative_classes.push_back(j);
    }
  }
  out.x_side.resize(joint.nx());
  for (std::size_t i = 0; i < joint.nx(); ++i) {
    const double fv = out.f(static_cast<Eigen::Index>(i));
    out.x_side[i] = fv > 0.0 ? 1 : (fv < 0.0 ? -1 : 0);
  }
  return out;
}

}  // namespace ibpt
