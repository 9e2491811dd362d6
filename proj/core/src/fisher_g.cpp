#include "ibpt/fisher_g.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ibpt/linalg.hpp"
#include "ibpt/threshold_g.hpp"
#include "log.hpp"

namespace ibpt {

namespace {

constexpr double kLogFloor = -690.7755278982137;  // log(1e-300)

void require_rows(const JointDistribution& joint, const ParameterizedEncoder& params) {
  if (joint.nx() != params.nx()) {
    std::ostringstream os;
    os << "encoder has " << params.nx() << " rows but |X| = " << joint.nx();
    throw Error(ErrorKind::kDimensionMismatch, os.str());
  }
}

}  // namespace

TabularSoftmax::TabularSoftmax(Matrix logits)
    : nx_(static_cast<std::size_t>(logits.rows())), nz_(static_cast<std::size_t>(logits.cols())) {
  if (nx_ == 0 || nz_ == 0) throw Error(ErrorKind::kInvalidArgument, "softmax logits must be non-empty");
  if (!logits.allFinite()) throw Error(ErrorKind::kInvalidArgument, "softmax logits must be finite");
  theta_ = flatten_field(logits);
}

TabularSoftmax TabularSoftmax::from_encoder(const Encoder& enc) {
  Matrix l(enc.pzx().rows(), enc.pzx().cols());
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    for (Eigen::Index k = 0; k < l.cols(); ++k) {
      const double p = enc.pzx()(i, k);
      l(i, k) = p > 0.0 ? std::max(std::log(p), kLogFloor) : kLogFloor;
    }
  }
  return TabularSoftmax(std::move(l));
}

void TabularSoftmax::set_theta(const Vector& theta) {
  if (static_cast<std::size_t>(theta.size()) != num_params()) {
    throw Error(ErrorKind::kDimensionMismatch, "theta has the wrong length");
  }
  if (!theta.allFinite()) throw Error(ErrorKind::kInvalidArgument, "softmax logits must be finite");
  theta_ = theta;
}

std::unique_ptr<ParameterizedEncoder> TabularSoftmax::clone() const {
  return std::make_unique<TabularSoftmax>(*this);
}

Matrix TabularSoftmax::logits() const {
  return unflatten_field(theta_, nx_, nz_);
}

Encoder TabularSoftmax::encoder() const {
  Matrix p = logits();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double m = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - m).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return Encoder(std::move(p));
}

Matrix TabularSoftmax::score_zx() const {
  const Matrix p = encoder().pzx();
  const auto nz = static_cast<Eigen::Index>(nz_);
  const auto n = static_cast<Eigen::Index>(num_params());
  Matrix s = Matrix::Zero(n, n);
  // d log p(z|x) / d theta(x', z') = [x = x'] ([z = z'] - p(z'|x))
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index k = 0; k < nz; ++k) {
      for (Eigen::Index kk = 0; kk < nz; ++kk) s(i * nz + k, i * nz + kk) = (k == kk ? 1.0 : 0.0) - p(i, kk);
    }
  }
  return s;
}

Matrix score_z(const JointDistribution& joint, const ParameterizedEncoder& params) {
  require_rows(joint, params);
  const InducedDistributions d = induce(joint, params.encoder());
  const Matrix szx = params.score_zx();
  const auto nz = static_cast<Eigen::Index>(params.zdim());
  Matrix s = Matrix::Zero(nz, szx.cols());
  for (Eigen::Index k = 0; k < nz; ++k) {
    if (!d.z_live[static_cast<std::size_t>(k)]) continue;
    for (Eigen::Index i = 0; i < d.pxz.rows(); ++i) s.row(k) += d.px_given_z(k, i) * szx.row(i * nz + k);
  }
  return s;
}

Matrix score_zy(const JointDistribution& joint, const ParameterizedEncoder& params) {
  require_rows(joint, params);
  const InducedDistributions d = induce(joint, params.encoder());
  const Matrix szx = params.score_zx();
  const auto nz = static_cast<Eigen::Index>(params.zdim());
  const auto ny = static_cast<Eigen::Index>(joint.ny());
  Matrix s = Matrix::Zero(ny * nz, szx.cols());
  for (Eigen::Index j = 0; j < ny; ++j) {
    const Matrix& pxyz = d.px_given_yz[static_cast<std::size_t>(j)];
    for (Eigen::Index k = 0; k < nz; ++k) {
      if (!d.yz_live(j, k)) continue;
      for (Eigen::Index i = 0; i < d.pxz.rows(); ++i) s.row(j * nz + k) += pxyz(k, i) * szx.row(i * nz + k);
    }
  }
  return s;
}

FisherBundle fisher_bundle(const JointDistribution& joint, const ParameterizedEncoder& params) {
  require_rows(joint, params);
  const InducedDistributions d = induce(joint, params.encoder());
  const Matrix szx = params.score_zx();
  const Matrix sz = score_z(joint, params);
  const Matrix szy = score_zy(joint, params);
  const auto nz = static_cast<Eigen::Index>(params.zdim());
  const auto np = szx.cols();

  FisherBundle out{Matrix::Zero(np, np), Matrix::Zero(np, np), Matrix::Zero(np, np), 0};
  for (Eigen::Index k = 0; k < nz; ++k) {
    if (!d.z_live[static_cast<std::size_t>(k)]) {
      ++out.excluded_z;
      continue;
    }
    for (Eigen::Index i = 0; i < d.pxz.rows(); ++i) {
      const double w = d.pxz(i, k);
      if (w > 0.0) out.i_zx.noalias() += w * szx.row(i * nz + k).transpose() * szx.row(i * nz + k);
    }
    out.i_z.noalias() += d.pz(k) * sz.row(k).transpose() * sz.row(k);
    for (Eigen::Index j = 0; j < d.pyz.rows(); ++j) {
      if (d.yz_live(j, k)) out.i_zy.noalias() += d.pyz(j, k) * szy.row(j * nz + k).transpose() * szy.row(j * nz + k);
    }
  }
  if (out.excluded_z > 0) log::warn("fisher_bundle: {} dead z excluded", out.excluded_z);
  out.i_zx = 0.5 * (out.i_zx + out.i_zx.transpose()).eval();
  out.i_zy = 0.5 * (out.i_zy + out.i_zy.transpose()).eval();
  out.i_z = 0.5 * (out.i_z + out.i_z.transpose()).eval();
  return out;
}

GThetaResult g_theta(const JointDistribution& joint, const ParameterizedEncoder& params) {
  const FisherBundle f = fisher_bundle(joint, params);
  const PencilMax pm = max_ratio_on_range(f.i_zx - f.i_z, f.i_zy - f.i_z, kRankCutoff, true);
  GThetaResult out;
  out.rank = pm.rank;
  out.used_cholesky = pm.used_cholesky;
  if (pm.lambda_max <= 64.0 * std::numeric_limits<double>::epsilon()) {
    out.g_value = std::numeric_limits<double>::infinity();
    out.delta_theta = Vector::Zero(static_cast<Eigen::Index>(params.num_params()));
    return out;
  }
  out.g_value = 1.0 / pm.lambda_max;
  out.delta_theta = pm.direction;
  return out;
}

PerturbationField induced_field(const ParameterizedEncoder& params, const Vector& delta_theta) {
  if (static_cast<std::size_t>(delta_theta.size()) != params.num_params()) {
    throw Error(ErrorKind::kDimensionMismatch, "delta_theta has the wrong length");
  }
  const Vector flat = params.score_zx() * delta_theta;
  return PerturbationField(unflatten_field(flat, params.nx(), params.zdim()));
}

}  // namespace ibpt
