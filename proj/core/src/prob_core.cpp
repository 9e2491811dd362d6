#include "ibpt/prob_core.hpp"

#include <cmath>
#include <algorithm>
#include <limits>
#include <sstream>

namespace ibpt {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimensionMismatch: return "dimension mismatch";
    case ErrorKind::kInvalidDistribution: return "invalid distribution";
    case ErrorKind::kInvalidArgument: return "invalid argument";
    case ErrorKind::kDeadSupport: return "dead support";
    case ErrorKind::kZeroPerturbation: return "zero perturbation";
    case ErrorKind::kOutsideSimplex: return "outside simplex";
    case ErrorKind::kDegenerateBatch: return "degenerate batch";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kNumerical: return "numerical failure";
  }
  return "unknown";
}

namespace {

void require_non_negative_finite(const Matrix& m, const char* what) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      if (!std::isfinite(v) || v < 0.0) {
        std::ostringstream os;
        os << what << "[" << i << "][" << j << "] = " << v << " is negative or non-finite";
        throw Error(ErrorKind::kInvalidDistribution, os.str());
      }
    }
  }
}

double row_sum(const Matrix& m, Eigen::Index i) {
  CompensatedSum s;
  for (Eigen::Index j = 0; j < m.cols(); ++j) s += m(i, j);
  return s.value();
}

}  // namespace

JointDistribution::JointDistribution(Matrix pxy) : pxy_(std::move(pxy)) {
  if (pxy_.rows() == 0 || pxy_.cols() == 0) {
    throw Error(ErrorKind::kDimensionMismatch, "joint table must be non-empty");
  }
  require_non_negative_finite(pxy_, "pxy");
  CompensatedSum total;
  for (Eigen::Index i = 0; i < pxy_.rows(); ++i) total += row_sum(pxy_, i);
  if (std::abs(total.value() - 1.0) > kJointSumTol) {
    std::ostringstream os;
    os.precision(17);
    os << "joint table sums to " << total.value() << ", expected 1";
    throw Error(ErrorKind::kInvalidDistribution, os.str());
  }
  const auto nx = pxy_.rows();
  const auto ny = pxy_.cols();
  px_.resize(nx);
  py_.resize(ny);
  for (Eigen::Index i = 0; i < nx; ++i) px_(i) = row_sum(pxy_, i);
  for (Eigen::Index j = 0; j < ny; ++j) {
    CompensatedSum s;
    for (Eigen::Index i = 0; i < nx; ++i) s += pxy_(i, j);
    py_(j) = s.value();
  }
  py_given_x_.resize(nx, ny);
  for (Eigen::Index i = 0; i < nx; ++i) {
    if (px_(i) > kSupportFloor) {
      py_given_x_.row(i) = pxy_.row(i) / px_(i);
    } else {
      py_given_x_.row(i).setConstant(1.0 / static_cast<double>(ny));
    }
  }
}

JointDistribution JointDistribution::from_conditional(const Vector& px, const Matrix& py_given_x) {
  if (px.size() != py_given_x.rows()) {
    std::ostringstream os;
    os << "px has " << px.size() << " entries but py_given_x has " << py_given_x.rows() << " rows";
    throw Error(ErrorKind::kDimensionMismatch, os.str());
  }
  require_non_negative_finite(px, "px");
  require_non_negative_finite(py_given_x, "py_given_x");
  for (Eigen::Index i = 0; i < py_given_x.rows(); ++i) {
    if (px(i) <= kSupportFloor) continue;
    const double s = row_sum(py_given_x, i);
    if (std::abs(s - 1.0) > kRowSumTol) {
      std::ostringstream os;
      os.precision(17);
      os << "py_given_x row " << i << " sums to " << s;
      throw Error(ErrorKind::kInvalidDistribution, os.str());
    }
  }
  Matrix pxy = px.asDiagonal() * py_given_x;
  return JointDistribution(std::move(pxy));
}

Encoder::Encoder(Matrix pzx) : pzx_(std::move(pzx)) {
  if (pzx_.rows() == 0 || pzx_.cols() == 0) {
    throw Error(ErrorKind::kDimensionMismatch, "encoder must be non-empty");
  }
  require_non_negative_finite(pzx_, "pzx");
  for (Eigen::Index i = 0; i < pzx_.rows(); ++i) {
    const double s = row_sum(pzx_, i);
    if (std::abs(s - 1.0) > kRowSumTol) {
      std::ostringstream os;
      os.precision(17);
      os << "encoder row " << i << " sums to " << s;
      throw Error(ErrorKind::kInvalidDistribution, os.str());
    }
  }
}

Encoder Encoder::constant(std::size_t nx, const Vector& pz) {
  Matrix m(static_cast<Eigen::Index>(nx), pz.size());
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i) = pz.transpose();
  return Encoder(std::move(m));
}

Encoder Encoder::uniform(std::size_t nx, std::size_t nz) {
  return constant(nx, Vector::Constant(static_cast<Eigen::Index>(nz), 1.0 / static_cast<double>(nz)));
}

Encoder Encoder::identity(std::size_t nx, std::size_t nz) {
  if (nz < nx) throw Error(ErrorKind::kDimensionMismatch, "identity encoder needs zdim >= |X|");
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(nz));
  for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, i) = 1.0;
  return Encoder(std::move(m));
}

Encoder Encoder::permuted(const std::vector<std::size_t>& perm) const {
  if (perm.size() != zdim()) throw Error(ErrorKind::kDimensionMismatch, "permutation size != zdim");
  Matrix m(pzx_.rows(), pzx_.cols());
  for (std::size_t k = 0; k < perm.size(); ++k) {
    m.col(static_cast<Eigen::Index>(k)) = pzx_.col(static_cast<Eigen::Index>(perm[k]));
  }
  return Encoder(std::move(m));
}

std::size_t InducedDistributions::live_count() const {
  std::size_t n = 0;
  for (bool b : z_live) n += b ? 1 : 0;
  return n;
}

InducedDistributions induce(const JointDistribution& joint, const Encoder& enc) {
  if (joint.nx() != enc.nx()) {
    std::ostringstream os;
    os << "joint has |X| = " << joint.nx() << " but encoder has " << enc.nx() << " rows";
    throw Error(ErrorKind::kDimensionMismatch, os.str());
  }
  const auto nx = static_cast<Eigen::Index>(joint.nx());
  const auto ny = static_cast<Eigen::Index>(joint.ny());
  const auto nz = static_cast<Eigen::Index>(enc.zdim());
  const Matrix& pxy = joint.pxy();
  const Matrix& pzx = enc.pzx();

  InducedDistributions d;
  d.pxz = joint.px().asDiagonal() * pzx;
  d.pz.resize(nz);
  d.pyz.resize(ny, nz);
  for (Eigen::Index k = 0; k < nz; ++k) {
    CompensatedSum s;
    for (Eigen::Index i = 0; i < nx; ++i) s += d.pxz(i, k);
    d.pz(k) = s.value();
    for (Eigen::Index j = 0; j < ny; ++j) {
      CompensatedSum t;
      for (Eigen::Index i = 0; i < nx; ++i) t += pxy(i, j) * pzx(i, k);
      d.pyz(j, k) = t.value();
    }
  }

  d.z_live.assign(static_cast<std::size_t>(nz), false);
  d.yz_live.resize(ny, nz);
  d.px_given_z = Matrix::Zero(nz, nx);
  d.py_given_z = Matrix::Zero(nz, ny);
  d.pz_given_y = Matrix::Zero(ny, nz);
  d.px_given_yz.assign(static_cast<std::size_t>(ny), Matrix::Zero(nz, nx));
  for (Eigen::Index k = 0; k < nz; ++k) {
    const bool live = d.pz(k) > kSupportFloor;
    d.z_live[static_cast<std::size_t>(k)] = live;
    if (live) {
      d.px_given_z.row(k) = d.pxz.col(k).transpose() / d.pz(k);
      d.py_given_z.row(k) = d.pyz.col(k).transpose() / d.pz(k);
    }
    for (Eigen::Index j = 0; j < ny; ++j) {
      const bool yz = d.pyz(j, k) > kSupportFloor;
      d.yz_live(j, k) = yz;
      if (yz) {
        for (Eigen::Index i = 0; i < nx; ++i) {
          d.px_given_yz[static_cast<std::size_t>(j)](k, i) = pxy(i, j) * pzx(i, k) / d.pyz(j, k);
        }
      }
    }
  }
  for (Eigen::Index j = 0; j < ny; ++j) {
    if (joint.py()(j) > kSupportFloor) d.pz_given_y.row(j) = d.pyz.row(j) / joint.py()(j);
  }
  return d;
}

double mutual_info(const Matrix& p) {
  require_non_negative_finite(p, "joint table");
  const auto na = p.rows();
  const auto nb = p.cols();
  Vector pa = Vector::Zero(na);
  Vector pb = Vector::Zero(nb);
  for (Eigen::Index a = 0; a < na; ++a) pa(a) = row_sum(p, a);
  for (Eigen::Index b = 0; b < nb; ++b) {
    CompensatedSum s;
    for (Eigen::Index a = 0; a < na; ++a) s += p(a, b);
    pb(b) = s.value();
  }
  CompensatedSum mi;
  for (Eigen::Index a = 0; a < na; ++a) {
    for (Eigen::Index b = 0; b < nb; ++b) {
      const double v = p(a, b);
      if (v <= 0.0) continue;
      mi += v * std::log(v / (pa(a) * pb(b)));
    }
  }
  return std::max(0.0, mi.value());
}

double mutual_info_xz(const JointDistribution& joint, const Encoder& enc) {
  if (joint.nx() != enc.nx()) throw Error(ErrorKind::kDimensionMismatch, "encoder rows != |X|");
  return mutual_info(joint.px().asDiagonal() * enc.pzx());
}

double mutual_info_yz(const JointDistribution& joint, const Encoder& enc) {
  if (joint.nx() != enc.nx()) throw Error(ErrorKind::kDimensionMismatch, "encoder rows != |X|");
  return mutual_info(joint.pxy().transpose() * enc.pzx());
}

double mutual_info_xy(const JointDistribution& joint) { return mutual_info(joint.pxy()); }

double entropy(const Vector& p) {
  CompensatedSum h;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) > 0.0) h += -p(i) * std::log(p(i));
  }
  return h.value();
}

double kl_divergence(const Vector& p, const Vector& q) {
  if (p.size() != q.size()) throw Error(ErrorKind::kDimensionMismatch, "KL operands differ in size");
  CompensatedSum d;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) <= 0.0) continue;
    if (q(i) <= 0.0) return std::numeric_limits<double>::infinity();
    d += p(i) * std::log(p(i) / q(i));
  }
  return std::max(0.0, d.value());
}

IBTerms ib_terms(const JointDistribution& joint, const Encoder& enc, double beta) {
  if (!(beta >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "beta must be >= 0");
  IBTerms t;
  t.ixz = mutual_info_xz(joint, enc);
  t.iyz = mutual_info_yz(joint, enc);
  t.objective = t.ixz - beta * t.iyz;
  return t;
}

double ib_objective(const JointDistribution& joint, const Encoder& enc, double beta) {
  return ib_terms(joint, enc, beta).objective;
}

}  // namespace ibpt
