#include "ibpt/oracles.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "ibpt/linalg.hpp"
#include "ibpt/threshold_g.hpp"
#include "log.hpp"

namespace ibpt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Mean-zero, unit-variance rescale under weights w; false if the variance vanishes.
bool standardize(Vector& f, const Vector& w) {
  const double mean = w.dot(f);
  f.array() -= mean;
  const double var = w.dot(f.cwiseProduct(f));
  if (!(var > 1e-300)) return false;
  f /= std::sqrt(var);
  return true;
}

}  // namespace

AceResult ace(const JointDistribution& joint, std::uint64_t seed, double tol, std::size_t max_iters) {
  const Vector& px = joint.px();
  const Vector& py = joint.py();
  const Matrix& pyx = joint.py_given_x();
  Matrix pxy_cond = Matrix::Zero(joint.ny(), joint.nx());  // p(x|y)
  for (Eigen::Index j = 0; j < pxy_cond.rows(); ++j) {
    if (py(j) > 0.0) pxy_cond.row(j) = joint.pxy().col(j).transpose() / py(j);
  }
  AceResult out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  out.f = Vector(static_cast<Eigen::Index>(joint.nx()));
  for (Eigen::Index i = 0; i < out.f.size(); ++i) out.f(i) = normal(rng);
  if (!standardize(out.f, px)) return out;

  double prev = -1.0;
  for (std::size_t it = 0; it < max_iters; ++it) {
    out.g = pxy_cond * out.f;
    if (!standardize(out.g, py)) {
      out.correlation = 0.0;
      out.converged = true;
      out.iterations = it + 1;
      return out;
    }
    out.f = pyx * out.g;
    if (!standardize(out.f, px)) {
      out.correlation = 0.0;
      out.converged = true;
      out.iterations = it + 1;
      return out;
    }
    const double corr = out.f.dot(joint.pxy() * out.g);
    out.iterations = it + 1;
    out.correlation = std::abs(corr);
    if (std::abs(corr - prev) < tol) {
      out.converged = true;
      break;
    }
    prev = corr;
  }
  if (!out.converged) log::warn("ace stopped after {} iterations", out.iterations);
  if (out.correlation < 1e-7) out.correlation = 0.0;
  return out;
}

double ace_max_correlation(const JointDistribution& joint, std::uint64_t seed) {
  return std::min(1.0, ace(joint, seed).correlation);
}

void GaussianSpec::validate() const {
  if (bins < 4) throw Error(ErrorKind::kInvalidArgument, "gaussian bins must be >= 4");
  if (!(range_sigmas > 0.0)) throw Error(ErrorKind::kInvalidArgument, "range_sigmas must be > 0");
  if (sigma_x || sigma_x_given_y) {
    if (!sigma_x || !sigma_x_given_y) throw Error(ErrorKind::kInvalidArgument, "need both Sigma_x and Sigma_x|y");
    const Matrix& a = *sigma_x;
    const Matrix& b = *sigma_x_given_y;
    if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows() || a.rows() == 0) {
      throw Error(ErrorKind::kDimensionMismatch, "covariance blocks must be square and the same size");
    }
    for (const Matrix* m : {&a, &b}) {
      if (((*m) - m->transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, m->cwiseAbs().maxCoeff())) {
        throw Error(ErrorKind::kInvalidArgument, "covariance blocks must be symmetric");
      }
      Eigen::SelfAdjointEigenSolver<Matrix> es(*m);
      if (es.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, es.eigenvalues().maxCoeff())) {
        throw Error(ErrorKind::kInvalidArgument, "covariance blocks must be PSD");
      }
    }
  } else if (!(rho > -1.0 && rho < 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "rho must lie in (-1, 1)");
  }
}

GaussianSpec gaussian_blocks(const std::vector<double>& rhos) {
  const auto n = static_cast<Eigen::Index>(rhos.size());
  GaussianSpec s;
  s.sigma_x = Matrix::Identity(n, n);
  Matrix c = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) c(i, i) = 1.0 - rhos[static_cast<std::size_t>(i)] * rhos[static_cast<std::size_t>(i)];
  s.sigma_x_given_y = c;
  return s;
}

std::vector<double> gaussian_critical_betas(const GaussianSpec& spec) {
  spec.validate();
  Vector lambda;
  if (spec.sigma_x) {
    // Sigma_{x|y} Sigma_x^{-1} is similar to S^{-1/2} Sigma_{x|y} S^{-1/2}.
    Eigen::SelfAdjointEigenSolver<Matrix> sx(*spec.sigma_x);
    if (sx.eigenvalues().minCoeff() <= 0.0) throw Error(ErrorKind::kInvalidArgument, "Sigma_x must be positive definite");
    const Matrix w = sx.operatorInverseSqrt();
    Eigen::SelfAdjointEigenSolver<Matrix> es(w * (*spec.sigma_x_given_y) * w);
    lambda = es.eigenvalues();
  } else {
    lambda = Vector::Constant(1, 1.0 - spec.rho * spec.rho);
  }
  std::vector<double> betas;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) < 1.0) {
      betas.push_back(1.0 / (1.0 - lambda(i)));
    } else {
      log::info("eigenvalue {} >= 1 carries no transition; skipped", lambda(i));
    }
  }
  std::sort(betas.begin(), betas.end());
  return betas;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Genz's BVNU: Drezner-Wesolowsky with Gauss-Legendre quadrature.
double bivariate_normal_upper(double dh, double dk, double r) {
  if (dh == kInf || dk == kInf) return 0.0;
  if (dh == -kInf) return dk == -kInf ? 1.0 : normal_cdf(-dk);
  if (dk == -kInf) return normal_cdf(-dh);
  if (r == 0.0) return normal_cdf(-dh) * normal_cdf(-dk);

  static constexpr std::array<double, 3> w6{0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
  static constexpr std::array<double, 3> x6{0.9324695142031522, 0.6612093864662647, 0.2386191860831970};
  static constexpr std::array<double, 6> w12{.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                                             0.2031674267230659,  0.2334925365383547, 0.2491470458134029};
  static constexpr std::array<double, 6> x12{0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                                             0.5873179542866171, 0.3678314989981802, 0.1252334085114692};
  static constexpr std::array<double, 10> w20{.01761400713915212, .04060142980038694, .06267204833410906,
                                              .08327674157670475, 0.1019301198172404,  0.1181945319615184,
                                              0.1316886384491766,  0.1420961093183821,  0.1491729864726037,
                                              0.1527533871307259};
  static constexpr std::array<double, 10> x20{0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                                              0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                                              0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
                                              0.07652652113349733};
  std::vector<double> w, x;
  auto load = [&](const auto& ww, const auto& xx) {
    for (std::size_t i = 0; i < ww.size(); ++i) {
      w.push_back(ww[i]);
      x.push_back(1.0 - xx[i]);
    }
    for (std::size_t i = 0; i < ww.size(); ++i) {
      w.push_back(ww[i]);
      x.push_back(1.0 + xx[i]);
    }
  };
  const double ar = std::abs(r);
  if (ar < 0.3) {
    load(w6, x6);
  } else if (ar < 0.75) {
    load(w12, x12);
  } else {
    load(w20, x20);
  }
  const double tp = 2.0 * std::numbers::pi;
  double h = dh, k = dk, hk = h * k, bvn = 0.0;
  if (ar < 0.925) {
    const double hs = (h * h + k * k) / 2.0;
    const double asr = std::asin(r) / 2.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double sn = std::sin(asr * x[i]);
      bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
    }
    bvn = bvn * asr / tp + normal_cdf(-h) * normal_cdf(-k);
  } else {
    if (r < 0.0) {
      k = -k;
      hk = -hk;
    }
    if (ar < 1.0) {
      const double as = 1.0 - r * r;
      double a = std::sqrt(as);
      const double bs = (h - k) * (h - k);
      double asr = -(bs / as + hk) / 2.0;
      const double c = (4.0 - hk) / 8.0;
      const double d = (12.0 - hk) / 80.0;
      if (asr > -100.0) bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
      if (hk > -100.0) {
        const double b = std::sqrt(bs);
        const double sp = std::sqrt(tp) * normal_cdf(-b / a);
        bvn -= std::exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
      }
      a /= 2.0;
      double acc = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double xs = (a * x[i]) * (a * x[i]);
        const double asr_i = -(bs / xs + hk) / 2.0;
        if (asr_i <= -100.0) continue;
        const double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
        const double rs = std::sqrt(1.0 - xs);
        const double ep = std::exp(-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
        acc += w[i] * std::exp(asr_i) * (sp - ep);
      }
      bvn = (a * acc - bvn) / tp;
    }
    if (r > 0.0) {
      bvn += normal_cdf(-std::max(h, k));
    } else if (h >= k) {
      bvn = -bvn;
    } else {
      const double l = h < 0.0 ? normal_cdf(k) - normal_cdf(h) : normal_cdf(-h) - normal_cdf(-k);
      bvn = l - bvn;
    }
  }
  return std::clamp(bvn, 0.0, 1.0);
}

double bivariate_normal_rect(double a1, double b1, double a2, double b2, double r) {
  const double p = bivariate_normal_upper(a1, a2, r) - bivariate_normal_upper(b1, a2, r) -
                   bivariate_normal_upper(a1, b2, r) + bivariate_normal_upper(b1, b2, r);
  return std::max(0.0, p);
}

JointDistribution discretize_gaussian(const GaussianSpec& spec) {
  spec.validate();
  if (spec.sigma_x) throw Error(ErrorKind::kInvalidArgument, "discretization supports the scalar pair only");
  const auto n = static_cast<Eigen::Index>(spec.bins);
  std::vector<double> edges(spec.bins + 1);
  for (std::size_t i = 0; i <= spec.bins; ++i) {
    edges[i] = -spec.range_sigmas + 2.0 * spec.range_sigmas * static_cast<double>(i) / static_cast<double>(spec.bins);
  }
  Matrix p(n, n);
  if (spec.rho == 0.0) {
    Vector m(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      m(i) = normal_cdf(edges[static_cast<std::size_t>(i) + 1]) - normal_cdf(edges[static_cast<std::size_t>(i)]);
    }
    m /= m.sum();
    p = m * m.transpose();
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) {
        const auto ii = static_cast<std::size_t>(i);
        const auto jj = static_cast<std::size_t>(j);
        p(i, j) = bivariate_normal_rect(edges[ii], edges[ii + 1], edges[jj], edges[jj + 1], spec.rho);
        p(j, i) = p(i, j);
      }
    }
    CompensatedSum total;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) total += p(i, j);
    }
    p /= total.value();
  }
  JointDistribution joint(std::move(p));
  if (spec.rho != 0.0) {
    const double s2 = build_q_matrix(joint, Encoder::uniform(joint.nx(), 1), 0).sigma2();
    if (s2 < 0.5 * std::abs(spec.rho)) {
      log::warn("{} bins keep maximal correlation {} of rho = {}", spec.bins, s2, spec.rho);
    }
  }
  return joint;
}

double brute_force_g(const JointDistribution& joint, const Encoder& enc, const BruteForceConfig& config) {
  if (enc.nx() * enc.zdim() > 9) throw Error(ErrorKind::kInvalidArgument, "brute_force_g needs |X| |Z| <= 9");
  const QuadraticForms f = ib_quadratic_forms(joint, enc);
  const Matrix num = f.ma - f.mc;
  const Matrix den = f.mb - f.mc;
  const auto nx = static_cast<Eigen::Index>(f.nx);
  const auto nz = static_cast<Eigen::Index>(f.nz);
  // Centering constraints sum_z p(z|x) r(x,z) = 0, one row per x.
  Matrix cons = Matrix::Zero(nx, nx * nz);
  for (Eigen::Index i = 0; i < nx; ++i) {
    for (Eigen::Index k = 0; k < nz; ++k) cons(i, i * nz + k) = enc.pzx()(i, k);
  }
  const Matrix centered = null_space(cons);
  if (centered.cols() == 0) return kInf;
  // Drop centered directions on which the numerator vanishes; there both
  // forms are zero and the sampled ratio is pure rounding.
  Eigen::SelfAdjointEigenSolver<Matrix> es(centered.transpose() * num * centered);
  const double top = es.eigenvalues().maxCoeff();
  if (!(top > 0.0)) return kInf;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    if (es.eigenvalues()(i) > kRankCutoff * top) keep.push_back(i);
  }
  Matrix basis(centered.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) basis.col(static_cast<Eigen::Index>(c)) = centered * es.eigenvectors().col(keep[c]);

  auto ratio = [&](const Vector& xi) {
    const Vector r = basis * xi;
    const double d = r.dot(den * r);
    const double a = r.dot(f.ma * r);
    if (!(d > 1e-14 * a)) return kInf;
    const double v = r.dot(num * r) / d;
    return v >= config.cap ? kInf : v;
  };

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal;
  const Eigen::Index dim = basis.cols();
  auto draw = [&] {
    Vector xi(dim);
    for (Eigen::Index i = 0; i < dim; ++i) xi(i) = normal(rng);
    return xi;
  };

  Vector best_xi = Vector::Zero(dim);
  double best = kInf;
  if (config.seed_field) {
    if (config.seed_field->rows() != nx || config.seed_field->cols() != nz) {
      throw Error(ErrorKind::kDimensionMismatch, "seed field shape does not match the encoder");
    }
    // Replay the seed as given, then continue from its centered projection.
    const Vector r = flatten_field(*config.seed_field);
    const double d = r.dot(den * r);
    if (d > 1e-14 * r.dot(f.ma * r)) best = r.dot(num * r) / d;
    if (best >= config.cap) best = kInf;
    best_xi = basis.transpose() * r;
    best = std::min(best, ratio(best_xi));
  }
  for (std::size_t s = 0; s < config.samples; ++s) {
    const Vector xi = draw();
    const double v = ratio(xi);
    if (v < best) {
      best = v;
      best_xi = xi;
    }
  }
  if (!std::isfinite(best)) return kInf;
  // Random local search with an adaptive step.
  double step = 0.5;
  best_xi.normalize();
  for (std::size_t s = 0; s < config.refine_steps && step > 1e-12; ++s) {
    Vector cand = best_xi + step * draw();
    cand.normalize();
    const double v = ratio(cand);
    if (v < best) {
      best = v;
      best_xi = cand;
      step *= 1.5;
    } else {
      step *= 0.97;
    }
  }
  return best;
}

Dataset binary_symmetric(double eps) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw Error(ErrorKind::kInvalidArgument, "eps must lie in [0, 1]");
  Matrix pyx(2, 2);
  pyx << 1.0 - eps, eps, eps, 1.0 - eps;
  return Dataset::from_conditional(Vector::Constant(2, 0.5), pyx);
}

Dataset random_categorical(std::size_t nx, std::size_t ny, double alpha, std::uint64_t seed) {
  if (nx < 1 || ny < 1) throw Error(ErrorKind::kInvalidArgument, "nx and ny must be >= 1");
  if (!(alpha > 0.0)) throw Error(ErrorKind::kInvalidArgument, "alpha must be > 0");
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> gamma(alpha, 1.0);
  Matrix pyx(static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(ny));
  for (Eigen::Index i = 0; i < pyx.rows(); ++i) {
    for (Eigen::Index j = 0; j < pyx.cols(); ++j) pyx(i, j) = gamma(rng);
    pyx.row(i) /= pyx.row(i).sum();
  }
  return Dataset::from_conditional(Vector::Constant(pyx.rows(), 1.0 / static_cast<double>(nx)), pyx);
}

Dataset confusion_dataset(const Matrix& confusion, std::vector<std::string> labels) {
  if (confusion.rows() == 0 || confusion.cols() == 0) throw Error(ErrorKind::kInvalidArgument, "empty confusion matrix");
  Matrix pyx = confusion;
  for (Eigen::Index i = 0; i < pyx.rows(); ++i) {
    const double s = pyx.row(i).sum();
    if (!(s > 0.0) || (pyx.row(i).array() < 0.0).any()) {
      std::ostringstream os;
      os << "confusion row " << i << " must be non-negative with positive sum";
      throw Error(ErrorKind::kInvalidDistribution, os.str());
    }
    pyx.row(i) /= s;
  }
  return Dataset::from_conditional(Vector::Constant(pyx.rows(), 1.0 / static_cast<double>(pyx.rows())), pyx,
                                   std::move(labels));
}

Dataset cifar10_confusion() {
  Matrix c(10, 10);
  c << 0.82232, 0.00238, 0.021, 0.00069, 0.00108, 0, 0.00017, 0.00019, 0.1473, 0.00489,
      0.00233, 0.83419, 0.00009, 0.00011, 0, 0.00001, 0.00002, 0, 0.00946, 0.15379,
      0.03139, 0.00026, 0.76082, 0.0095, 0.07764, 0.01389, 0.1031, 0.00309, 0.00031, 0,
      0.00096, 0.0001, 0.00273, 0.69325, 0.00557, 0.28067, 0.01471, 0.00191, 0.00002, 0.0001,
      0.00199, 0, 0.03866, 0.00542, 0.83435, 0.01273, 0.02567, 0.08066, 0.00052, 0.00001,
      0, 0.00004, 0.00391, 0.2498, 0.00531, 0.73191, 0.00477, 0.00423, 0.00001, 0,
      0.00067, 0.00008, 0.06303, 0.05025, 0.0337, 0.00842, 0.8433, 0, 0.00054, 0,
      0.00157, 0.00006, 0.00649, 0.00295, 0.13058, 0.02287, 0, 0.83328, 0.00023, 0.00196,
      0.1288, 0.01668, 0.00029, 0.00002, 0.00164, 0.00006, 0.00027, 0.00017, 0.83385, 0.01822,
      0.01007, 0.15107, 0, 0.00015, 0.00001, 0.00001, 0, 0.00048, 0.02549, 0.81273;
  return confusion_dataset(c, {"plane", "auto", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"});
}

Dataset independent_dataset(std::size_t nx, std::size_t ny) {
  if (nx < 1 || ny < 1) throw Error(ErrorKind::kInvalidArgument, "nx and ny must be >= 1");
  return Dataset::from_conditional(Vector::Constant(static_cast<Eigen::Index>(nx), 1.0 / static_cast<double>(nx)),
                                   Matrix::Constant(static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(ny),
                                                    1.0 / static_cast<double>(ny)));
}

}  // namespace ibpt
