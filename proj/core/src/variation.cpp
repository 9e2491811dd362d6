#include "ibpt/variation.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "ibpt/linalg.hpp"
#include "ibpt/threshold_g.hpp"
#include "log.hpp"

namespace ibpt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_shape(const Encoder& enc, const PerturbationField& r) {
  if (static_cast<std::size_t>(r.r().rows()) != enc.nx() || static_cast<std::size_t>(r.r().cols()) != enc.zdim()) {
    std::ostringstream os;
    os << "field is " << r.r().rows() << "x" << r.r().cols() << " but encoder is " << enc.nx() << "x" << enc.zdim();
    throw Error(ErrorKind::kDimensionMismatch, os.str());
  }
}

// Per-z conditional means r(z) and r(z|y) of a field.
struct ConditionalMeans {
  Vector rz;   // |Z|
  Matrix rzy;  // |Y| x |Z|
};

ConditionalMeans conditional_means(const InducedDistributions& d, const Matrix& r) {
  const auto nz = d.pz.size();
  const auto ny = d.pyz.rows();
  const auto nx = d.pxz.rows();
  ConditionalMeans m{Vector::Zero(nz), Matrix::Zero(ny, nz)};
  for (Eigen::Index k = 0; k < nz; ++k) {
    if (!d.z_live[static_cast<std::size_t>(k)]) continue;
    CompensatedSum s;
    for (Eigen::Index i = 0; i < nx; ++i) s += d.px_given_z(k, i) * r(i, k);
    m.rz(k) = s.value();
    for (Eigen::Index j = 0; j < ny; ++j) {
      if (!d.yz_live(j, k)) continue;
      CompensatedSum t;
      const Matrix& pxyz = d.px_given_yz[static_cast<std::size_t>(j)];
      for (Eigen::Index i = 0; i < nx; ++i) t += pxyz(k, i) * r(i, k);
      m.rzy(j, k) = t.value();
    }
  }
  return m;
}

// E[r^n(z|x)], E[r^n(z|y)], E[r^n(z)] over live support.
struct PowerMoments {
  double x = 0.0, y = 0.0, z = 0.0;
};

PowerMoments power_moments(const InducedDistributions& d, const Matrix& r, const ConditionalMeans& m, int n) {
  CompensatedSum ex, ey, ez;
  for (Eigen::Index k = 0; k < d.pz.size(); ++k) {
    if (!d.z_live[static_cast<std::size_t>(k)]) continue;
    for (Eigen::Index i = 0; i < d.pxz.rows(); ++i) ex += d.pxz(i, k) * std::pow(r(i, k), n);
    ez += d.pz(k) * std::pow(m.rz(k), n);
    for (Eigen::Index j = 0; j < d.pyz.rows(); ++j) {
      if (d.yz_live(j, k)) ey += d.pyz(j, k) * std::pow(m.rzy(j, k), n);
    }
  }
  return {ex.value(), ey.value(), ez.value()};
}

}  // namespace

PerturbationField PerturbationField::pullback(std::size_t nx, const Vector& s) {
  Matrix r(static_cast<Eigen::Index>(nx), s.size());
  for (Eigen::Index i = 0; i < r.rows(); ++i) r.row(i) = s.transpose();
  return PerturbationField(std::move(r));
}

double PerturbationField::centering_error(const Encoder& enc) const {
  require_shape(enc, *this);
  return enc.pzx().cwiseProduct(r_).rowwise().sum().cwiseAbs().maxCoeff();
}

PerturbationField center(const Encoder& enc, const PerturbationField& r) {
  require_shape(enc, r);
  Matrix out = r.r();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    CompensatedSum mean;
    for (Eigen::Index k = 0; k < out.cols(); ++k) mean += enc.pzx()(i, k) * out(i, k);
    out.row(i).array() -= mean.value();
  }
  return PerturbationField(std::move(out), true);
}

ReducedMoments reduced_moments(const JointDistribution& joint, const Encoder& enc, const PerturbationField& field) {
  require_shape(enc, field);
  const InducedDistributions d = induce(joint, enc);
  const Matrix& r = field.r();
  const ConditionalMeans m = conditional_means(d, r);
  ReducedMoments out;
  CompensatedSum a, b, c;
  for (Eigen::Index k = 0; k < d.pz.size(); ++k) {
    if (!d.z_live[static_cast<std::size_t>(k)]) {
      ++out.excluded_z;
      continue;
    }
    for (Eigen::Index i = 0; i < d.pxz.rows(); ++i) a += d.pxz(i, k) * r(i, k) * r(i, k);
    c += d.pz(k) * m.rz(k) * m.rz(k);
    for (Eigen::Index j = 0; j < d.pyz.rows(); ++j) {
      if (!d.yz_live(j, k)) {
        if (d.pyz(j, k) > 0.0) ++out.excluded_yz;
        continue;
      }
      b += d.pyz(j, k) * m.rzy(j, k) * m.rzy(j, k);
    }
  }
  out.a = a.value();
  out.b = b.value();
  out.c = c.value();
  if (out.excluded_z > 0 || out.excluded_yz > 0) {
    log::debug("reduced_moments excluded {} dead z and {} dead (y,z) cells", out.excluded_z, out.excluded_yz);
  }
  return out;
}

double g_ratio(const JointDistribution& joint, const Encoder& enc, const PerturbationField& r) {
  require_shape(enc, r);
  const double scale = r.bound();
  if (!(scale > 0.0) || !(center(enc, r).bound() > 1e-14 * scale)) {
    throw Error(ErrorKind::kZeroPerturbation, "perturbation vanishes after centering");
  }
  const ReducedMoments m = reduced_moments(joint, enc, r);
  const double den = m.b - m.c;
  if (den <= 1e-14 * m.a) return kInf;
  return (m.a - m.c) / den;
}

double second_variation(const JointDistribution& joint, const Encoder& enc, const PerturbationField& r, double beta,
                        double eps) {
  const ReducedMoments m = reduced_moments(joint, enc, r);
  return 0.5 * eps * eps * ((m.a - m.c) - beta * (m.b - m.c));
}

double SeriesExpansion::correction() const {
  CompensatedSum s;
  for (double t : terms) s += t;
  return s.value();
}

SeriesExpansion expand_ib_series(const JointDistribution& joint, const Encoder& enc, const PerturbationField& field,
                                 double beta, double eps, int order) {
  require_shape(enc, field);
  if (order < 1) throw Error(ErrorKind::kInvalidArgument, "series order must be >= 1");
  const Matrix& r = field.r();
  const double cerr = field.centering_error(enc);
  if (cerr > 1e-10 * std::max(1.0, field.bound())) {
    std::ostringstream os;
    os << "series expansion needs a centered field (max |E_{p(z|x)} r| = " << cerr << ")";
    throw Error(ErrorKind::kInvalidArgument, os.str());
  }
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    for (Eigen::Index k = 0; k < r.cols(); ++k) {
      if (enc.pzx()(i, k) > 0.0 && !(1.0 + eps * r(i, k) > 0.0)) {
        std::ostringstream os;
        os << "1 + eps r(z|x) = " << 1.0 + eps * r(i, k) << " <= 0 at (x=" << i << ", z=" << k << ")";
        throw Error(ErrorKind::kOutsideSimplex, os.str());
      }
    }
  }
  const InducedDistributions d = induce(joint, enc);
  const ConditionalMeans m = conditional_means(d, r);

  SeriesExpansion out;
  out.base = ib_objective(joint, enc, beta);

  // eps (E[r(z|x) log p(z|x)/p(z)] - beta E[r(z|y) log p(z|y)/p(z)])
  CompensatedSum fx, fy;
  for (Eigen::Index k = 0; k < d.pz.size(); ++k) {
    if (!d.z_live[static_cast<std::size_t>(k)]) continue;
    for (Eigen::Index i = 0; i < d.pxz.rows(); ++i) {
      if (d.pxz(i, k) > 0.0) fx += d.pxz(i, k) * r(i, k) * std::log(enc.pzx()(i, k) / d.pz(k));
    }
    for (Eigen::Index j = 0; j < d.pyz.rows(); ++j) {
      if (d.yz_live(j, k)) fy += d.pyz(j, k) * m.rzy(j, k) * std::log(d.pz_given_y(j, k) / d.pz(k));
    }
  }
  out.terms.push_back(eps * (fx.value() - beta * fy.value()));

  for (int n = 2; n <= order; ++n) {
    const PowerMoments pm = power_moments(d, r, m, n);
    const double coef = (n % 2 == 0 ? 1.0 : -1.0) * std::pow(eps, n) / (static_cast<double>(n) * (n - 1));
    out.terms.push_back(coef * ((pm.x - pm.z) - beta * (pm.y - pm.z)));
  }
  return out;
}

TBetaResult t_beta(const JointDistribution& joint, const Encoder& enc, double beta_prime) {
  const QuadraticForms f = ib_quadratic_forms(joint, enc);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < f.ma.rows(); ++i) {
    if (f.ma(i, i) > kSupportFloor) keep.push_back(i);
  }
  if (keep.empty()) throw Error(ErrorKind::kDeadSupport, "encoder has no live (x,z) cells");
  const auto n = static_cast<Eigen::Index>(keep.size());
  const Matrix h = (f.ma - f.mc) - beta_prime * (f.mb - f.mc);
  Matrix reduced(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      reduced(a, b) = h(keep[a], keep[b]) / std::sqrt(f.ma(keep[a], keep[a]) * f.ma(keep[b], keep[b]));
    }
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (reduced + reduced.transpose()));
  if (es.info() != Eigen::Success) throw Error(ErrorKind::kNumerical, "eigensolver failed in t_beta");
  Vector dir = Vector::Zero(f.ma.rows());
  for (Eigen::Index a = 0; a < n; ++a) dir(keep[a]) = es.eigenvectors()(a, 0) / std::sqrt(f.ma(keep[a], keep[a]));
  TBetaResult out;
  out.value = es.eigenvalues()(0);
  out.field = PerturbationField(unflatten_field(dir, f.nx, f.nz));
  return out;
}

std::vector<Sample> draw_samples(const JointDistribution& joint, const Encoder& enc, std::size_t n,
                                 std::uint64_t seed) {
  if (joint.nx() != enc.nx()) throw Error(ErrorKind::kDimensionMismatch, "encoder rows != |X|");
  std::mt19937_64 rng(seed);
  const Vector& px = joint.px();
  std::discrete_distribution<std::size_t> dx(px.data(), px.data() + px.size());
  std::vector<std::discrete_distribution<std::size_t>> dy, dz;
  for (std::size_t i = 0; i < joint.nx(); ++i) {
    const Vector py = joint.py_given_x().row(static_cast<Eigen::Index>(i)).transpose();
    const Vector pz = enc.pzx().row(static_cast<Eigen::Index>(i)).transpose();
    dy.emplace_back(py.data(), py.data() + py.size());
    dz.emplace_back(pz.data(), pz.data() + pz.size());
  }
  std::vector<Sample> out(n);
  for (auto& s : out) {
    s.x = dx(rng);
    s.y = dy[s.x](rng);
    s.z = dz[s.x](rng);
    s.weight = 1.0;
  }
  return out;
}

std::vector<Sample> enumerate_atoms(const JointDistribution& joint, const Encoder& enc) {
  if (joint.nx() != enc.nx()) throw Error(ErrorKind::kDimensionMismatch, "encoder rows != |X|");
  std::vector<Sample> out;
  for (std::size_t i = 0; i < joint.nx(); ++i) {
    for (std::size_t j = 0; j < joint.ny(); ++j) {
      const double pxy = joint.pxy()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      for (std::size_t k = 0; k < enc.zdim(); ++k) {
        const double w = pxy * enc(i, k);
        if (w > 0.0) out.push_back({i, j, k, w});
      }
    }
  }
  return out;
}

GHatResult estimate_g_hat(const std::vector<Sample>& samples, const Encoder& enc, std::size_t ny) {
  if (samples.size() < 2) throw Error(ErrorKind::kDegenerateBatch, "need at least 2 samples");
  const std::size_t nx = enc.nx();
  const std::size_t nz = enc.zdim();
  const auto nxi = static_cast<Eigen::Index>(nx);
  const auto nzi = static_cast<Eigen::Index>(nz);
  const auto nyi = static_cast<Eigen::Index>(ny);

  CompensatedSum total;
  std::set<std::size_t> present;
  for (const Sample& s : samples) {
    if (s.x >= nx || s.y >= ny || s.z >= nz) {
      std::ostringstream os;
      os << "sample (" << s.x << "," << s.y << "," << s.z << ") outside |X|=" << nx << ", |Y|=" << ny
         << ", |Z|=" << nz;
      throw Error(ErrorKind::kDimensionMismatch, os.str());
    }
    if (!std::isfinite(s.weight) || !(s.weight > 0.0)) throw Error(ErrorKind::kInvalidArgument, "sample weights must be > 0");
    total += s.weight;
    present.insert(s.y);
  }
  if (present.size() < ny) {
    std::ostringstream os;
    os << "classes absent from the batch:";
    for (std::size_t j = 0; j < ny; ++j) {
      if (!present.count(j)) os << " " << j;
    }
    throw Error(ErrorKind::kDegenerateBatch, os.str());
  }
  const double w_total = total.value();

  Vector px_hat = Vector::Zero(nxi);
  Matrix pxy_hat = Matrix::Zero(nxi, nyi);
  Vector pz_hat = Vector::Zero(nzi);
  Matrix pyz_hat = Matrix::Zero(nyi, nzi);
  for (const Sample& s : samples) {
    const double w = s.weight / w_total;
    px_hat(static_cast<Eigen::Index>(s.x)) += w;
    pxy_hat(static_cast<Eigen::Index>(s.x), static_cast<Eigen::Index>(s.y)) += w;
    pz_hat(static_cast<Eigen::Index>(s.z)) += w;
    pyz_hat(static_cast<Eigen::Index>(s.y), static_cast<Eigen::Index>(s.z)) += w;
  }
  const Matrix& pzx = enc.pzx();
  const Eigen::Index n = nxi * nzi;
  Matrix ma = Matrix::Zero(n, n);
  Matrix mb = Matrix::Zero(n, n);
  Matrix mc = Matrix::Zero(n, n);
  for (Eigen::Index k = 0; k < nzi; ++k) {
    if (pz_hat(k) <= 0.0) continue;
    // p~(z) = sum_x p^(x) p(z|x)
    Vector cw(nxi);
    for (Eigen::Index i = 0; i < nxi; ++i) cw(i) = px_hat(i) * pzx(i, k);
    const double mix = cw.sum();
    if (mix <= 0.0) continue;
    cw /= mix;
    for (Eigen::Index i = 0; i < nxi; ++i) {
      ma(i * nzi + k, i * nzi + k) = pz_hat(k) * cw(i);
      for (Eigen::Index l = 0; l < nxi; ++l) mc(i * nzi + k, l * nzi + k) = pz_hat(k) * cw(i) * cw(l);
    }
    for (Eigen::Index j = 0; j < nyi; ++j) {
      if (pyz_hat(j, k) <= 0.0) continue;
      Vector bw(nxi);
      for (Eigen::Index i = 0; i < nxi; ++i) bw(i) = pxy_hat(i, j) * pzx(i, k);
      const double den = bw.sum();
      if (den <= 0.0) continue;
      bw /= den;
      for (Eigen::Index i = 0; i < nxi; ++i) {
        for (Eigen::Index l = 0; l < nxi; ++l) mb(i * nzi + k, l * nzi + k) += pyz_hat(j, k) * bw(i) * bw(l);
      }
    }
  }
  const PencilMax pm = max_ratio_on_range(ma - mc, mb - mc);
  GHatResult out;
  if (pm.lambda_max <= 64.0 * std::numeric_limits<double>::epsilon()) {
    out.g_value = kInf;
    out.field = PerturbationField(Matrix::Zero(nxi, nzi));
    return out;
  }
  out.g_value = 1.0 / pm.lambda_max;
  Matrix r = unflatten_field(pm.direction, nx, nz);
  r /= r.cwiseAbs().maxCoeff();
  out.field = shift_to_centered(enc, r);
  return out;
}

}  // namespace ibpt
