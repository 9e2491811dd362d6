#include "ibpt/ib_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "ibpt/threshold_g.hpp"
#include "log.hpp"

namespace ibpt {

void SolverConfig::validate() const {
  if (!(tol > 0.0)) throw Error(ErrorKind::kInvalidArgument, "solver tol must be > 0");
  if (max_iters < 1) throw Error(ErrorKind::kInvalidArgument, "solver max_iters must be >= 1");
  if (restarts < 1) throw Error(ErrorKind::kInvalidArgument, "solver restarts must be >= 1");
  if (!(init_noise >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "solver init_noise must be >= 0");
  if (anneal_from && !(*anneal_from > 0.0)) throw Error(ErrorKind::kInvalidArgument, "anneal_from must be > 0");
}

std::uint64_t derive_seed(std::uint64_t global, std::uint64_t salt, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(global) ^ salt) ^ index);
}

Encoder jittered_uniform_encoder(std::size_t nx, std::size_t zdim, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> expo(1.0);
  Matrix m(static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(zdim));
  const double u = 1.0 / static_cast<double>(zdim);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double gsum = 0.0;
    for (Eigen::Index k = 0; k < m.cols(); ++k) {
      m(i, k) = expo(rng);
      gsum += m(i, k);
    }
    for (Eigen::Index k = 0; k < m.cols(); ++k) m(i, k) = u + noise * m(i, k) / gsum;
    m.row(i) /= m.row(i).sum();
  }
  return Encoder(std::move(m));
}

namespace {

// Flat row-major BA kernel; the solver loop runs thousands of steps on tiny
// tables, so everything lives in preallocated buffers.
class BAKernel {
 public:
  BAKernel(const JointDistribution& joint, std::size_t zdim)
      : nx_(joint.nx()), ny_(joint.ny()), nz_(zdim) {
    px_.resize(nx_);
    pxy_.resize(nx_ * ny_);
    pyx_.resize(nx_ * ny_);
    neg_hyx_.assign(nx_, 0.0);
    for (std::size_t i = 0; i < nx_; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      px_[i] = joint.px()(ii);
      for (std::size_t j = 0; j < ny_; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        pxy_[i * ny_ + j] = joint.pxy()(ii, jj);
        const double c = joint.py_given_x()(ii, jj);
        pyx_[i * ny_ + j] = c;
        if (c > 0.0) neg_hyx_[i] += c * std::log(c);
      }
    }
    py_.assign(ny_, 0.0);
    for (std::size_t i = 0; i < nx_; ++i) {
      for (std::size_t j = 0; j < ny_; ++j) py_[j] += pxy_[i * ny_ + j];
    }
    pz_.resize(nz_);
    log_pyz_.resize(nz_ * ny_);
    logits_.resize(nz_);
    log_pz_.resize(nz_);
  }

  std::size_t nx() const { return nx_; }
  std::size_t nz() const { return nz_; }

  // out <- BA image of in; returns max |out - in|.
  double step(const std::vector<double>& in, std::vector<double>& out, double beta) {
    std::fill(pz_.begin(), pz_.end(), 0.0);
    for (std::size_t i = 0; i < nx_; ++i) {
      for (std::size_t k = 0; k < nz_; ++k) pz_[k] += px_[i] * in[i * nz_ + k];
    }
    std::size_t live = 0;
    for (std::size_t k = 0; k < nz_; ++k) {
      if (pz_[k] <= kSupportFloor) continue;
      ++live;
      for (std::size_t j = 0; j < ny_; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < nx_; ++i) s += pxy_[i * ny_ + j] * in[i * nz_ + k];
        log_pyz_[k * ny_ + j] = s > 0.0 ? std::log(s / pz_[k]) : -std::numeric_limits<double>::infinity();
      }
    }
    if (live == 0) {
      throw Error(ErrorKind::kDeadSupport, "all z columns are dead; re-initialize the encoder");
    }
    for (std::size_t k = 0; k < nz_; ++k) log_pz_[k] = pz_[k] > kSupportFloor ? std::log(pz_[k]) : 0.0;
    double residual = 0.0;
    const double neg_inf = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nx_; ++i) {
      double* row = &out[i * nz_];
      if (px_[i] <= kSupportFloor) {
        double tot = 0.0;
        for (std::size_t k = 0; k < nz_; ++k) tot += pz_[k];
        for (std::size_t k = 0; k < nz_; ++k) row[k] = pz_[k] / tot;
      } else {
        double top = neg_inf;
        for (std::size_t k = 0; k < nz_; ++k) {
          if (pz_[k] <= kSupportFloor) {
            logits_[k] = neg_inf;
            continue;
          }
          double logit = log_pz_[k];
          if (beta > 0.0) {
            // KL(p(y|x) || p(y|z)) = sum p log p - sum p log p(y|z)
            double cross = 0.0;
            bool infinite = false;
            for (std::size_t j = 0; j < ny_; ++j) {
              const double c = pyx_[i * ny_ + j];
              if (c <= 0.0) continue;
              const double l = log_pyz_[k * ny_ + j];
              if (l == neg_inf) {
                infinite = true;
                break;
              }
              cross += c * l;
            }
            logit = infinite ? neg_inf : logit - beta * (neg_hyx_[i] - cross);
          }
          logits_[k] = logit;
          top = std::max(top, logit);
        }
        double tot = 0.0;
        for (std::size_t k = 0; k < nz_; ++k) {
          row[k] = logits_[k] == neg_inf ? 0.0 : std::exp(logits_[k] - top);
          tot += row[k];
        }
        for (std::size_t k = 0; k < nz_; ++k) row[k] /= tot;
      }
      for (std::size_t k = 0; k < nz_; ++k) residual = std::max(residual, std::abs(row[k] - in[i * nz_ + k]));
    }
    return residual;
  }

  const std::vector<double>& pz() const { return pz_; }

  // I(X;Z) - beta I(Y;Z) of a flat encoder.
  double objective(const std::vector<double>& q, double beta) const {
    std::vector<double> pz = pz_of(q);
    double ixz = 0.0, iyz = 0.0;
    for (std::size_t i = 0; i < nx_; ++i) {
      for (std::size_t k = 0; k < nz_; ++k) {
        const double v = q[i * nz_ + k];
        if (v > 0.0 && px_[i] > 0.0) ixz += px_[i] * v * std::log(v / pz[k]);
      }
    }
    for (std::size_t k = 0; k < nz_; ++k) {
      if (!(pz[k] > 0.0)) continue;
      for (std::size_t j = 0; j < ny_; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < nx_; ++i) s += pxy_[i * ny_ + j] * q[i * nz_ + k];
        if (s > 0.0) iyz += s * std::log(s / (py_[j] * pz[k]));
      }
    }
    return ixz - beta * iyz;
  }

  std::vector<double> pz_of(const std::vector<double>& q) const {
    std::vector<double> pz(nz_, 0.0);
    for (std::size_t i = 0; i < nx_; ++i) {
      for (std::size_t k = 0; k < nz_; ++k) pz[k] += px_[i] * q[i * nz_ + k];
    }
    return pz;
  }

 private:
  std::size_t nx_, ny_, nz_;
  std::vector<double> px_, py_, pxy_, pyx_, neg_hyx_;
  std::vector<double> pz_, log_pz_, log_pyz_, logits_;
};

std::vector<double> flatten(const Encoder& enc) {
  std::vector<double> q(enc.nx() * enc.zdim());
  for (std::size_t i = 0; i < enc.nx(); ++i) {
    for (std::size_t k = 0; k < enc.zdim(); ++k) q[i * enc.zdim() + k] = enc(i, k);
  }
  return q;
}

Encoder unflatten(const std::vector<double>& q, std::size_t nx, std::size_t nz) {
  Matrix m(static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(nz));
  for (std::size_t i = 0; i < nx; ++i) {
    double tot = 0.0;
    for (std::size_t k = 0; k < nz; ++k) tot += q[i * nz + k];
    for (std::size_t k = 0; k < nz; ++k) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = q[i * nz + k] / tot;
    }
  }
  return Encoder(std::move(m));
}

struct RunResult {
  std::vector<double> q;
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t dropped = 0;
};

// One SQUAREM extrapolation from q through x1 = F(q), x2 = F(x1). Writes the
// candidate into out and returns false when it degenerates to x2.
bool squarem_candidate(const std::vector<double>& q, const std::vector<double>& x1, const std::vector<double>& x2,
                       std::size_t nz, std::vector<double>& out) {
  double rr = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double r = x1[i] - q[i];
    const double v = x2[i] - 2.0 * x1[i] + q[i];
    rr += r * r;
    vv += v * v;
  }
  if (!(vv > 0.0)) return false;
  double alpha = std::max(-std::sqrt(rr / vv), -1e6);
  if (!(alpha < -1.0)) return false;
  out.resize(q.size());
  for (int tries = 0; tries < 12; ++tries) {
    bool ok = true;
    for (std::size_t i = 0; i < q.size() && ok; ++i) {
      const double r = x1[i] - q[i];
      const double v = x2[i] - 2.0 * x1[i] + q[i];
      out[i] = q[i] - 2.0 * alpha * r + alpha * alpha * v;
      ok = out[i] >= 0.0;
    }
    if (ok) {
      for (std::size_t row = 0; row < q.size() / nz; ++row) {
        double tot = 0.0;
        for (std::size_t k = 0; k < nz; ++k) tot += out[row * nz + k];
        if (!(tot > 0.0)) return false;
        for (std::size_t k = 0; k < nz; ++k) out[row * nz + k] /= tot;
      }
      return true;
    }
    alpha = 0.5 * (alpha - 1.0);
  }
  return false;
}

// Iterates BA from q until ||step||_inf <= 10 tol and the objective change is
// <= tol, or max_iters BA steps. With acceleration every cycle of two plain
// steps is followed by a SQUAREM extrapolation, kept only if it does not
// raise the objective.
RunResult run_ba(BAKernel& kernel, std::vector<double> q, double beta, const SolverConfig& cfg,
                 std::mt19937_64& rng) {
  const std::size_t nx = kernel.nx();
  const std::size_t nz = kernel.nz();
  std::vector<double> next(q.size()), x2(q.size()), cand, x3(q.size());
  std::vector<int> deaths(nz, 0);
  RunResult res;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t t = 0; t < cfg.max_iters;) {
    const double step = kernel.step(q, next, beta);
    res.iterations = ++t;
    if (step <= 10.0 * cfg.tol) {
      const double before = kernel.objective(q, beta);
      const double after = kernel.objective(next, beta);
      q.swap(next);
      if (std::abs(before - after) <= cfg.tol) {
        res.converged = true;
        break;
      }
      continue;
    }
    if (cfg.accelerate && t + 2 <= cfg.max_iters) {
      kernel.step(next, x2, beta);
      res.iterations = ++t;
      if (squarem_candidate(q, next, x2, nz, cand)) {
        kernel.step(cand, x3, beta);
        res.iterations = ++t;
        const double plain = kernel.objective(x2, beta);
        const double extra = kernel.objective(x3, beta);
        if (std::isfinite(extra) && extra <= plain + 1e-15 * (1.0 + std::abs(plain))) {
          q.swap(x3);
        } else {
          q.swap(x2);
        }
      } else {
        q.swap(x2);
      }
    } else {
      q.swap(next);
    }

    // Dead columns: one revival by re-jittering, then dropped for good.
    const auto pz = kernel.pz_of(q);
    for (std::size_t k = 0; k < nz; ++k) {
      if (pz[k] > kSupportFloor || deaths[k] == 2) continue;
      bool any = false;
      for (std::size_t i = 0; i < nx; ++i) any = any || q[i * nz + k] > 0.0;
      if (!any) continue;
      ++deaths[k];
      for (std::size_t i = 0; i < nx; ++i) {
        q[i * nz + k] = deaths[k] == 1 ? q[i * nz + k] + cfg.init_noise * unif(rng) / static_cast<double>(nz) : 0.0;
        double tot = 0.0;
        for (std::size_t c = 0; c < nz; ++c) tot += q[i * nz + c];
        for (std::size_t c = 0; c < nz; ++c) q[i * nz + c] /= tot;
      }
      if (deaths[k] == 2) {
        ++res.dropped;
        log::debug("beta={} dropped dead z column {}", beta, k);
      }
    }
  }
  res.q = std::move(q);
  return res;
}

// Largest |p(y|z=k) - p(y|z=l)| over y.
double cluster_distance(const InducedDistributions& d, Eigen::Index k, Eigen::Index l) {
  return (d.py_given_z.row(k) - d.py_given_z.row(l)).cwiseAbs().maxCoeff();
}

// Folds column l into column target[l] for every l with target[l] != l.
std::vector<double> merge_columns(std::vector<double> q, const std::vector<std::size_t>& target, std::size_t nx) {
  const std::size_t nz = target.size();
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t l = 0; l < nz; ++l) {
      if (target[l] == l) continue;
      q[i * nz + target[l]] += q[i * nz + l];
      q[i * nz + l] = 0.0;
    }
  }
  return q;
}

// At a critical beta BA creeps toward the coarser solution at a polynomial
// rate. Merging z whose p(y|z) nearly coincide lands on it directly; a merge
// is kept only if it does not raise the objective. Tries every close pair at
// once, then the closest pair alone.
RunResult merge_refine(BAKernel& kernel, const JointDistribution& joint, RunResult run, double beta,
                       const SolverConfig& cfg, std::mt19937_64& rng) {
  if (run.converged) return run;
  const std::size_t nx = kernel.nx();
  const std::size_t nz = kernel.nz();
  const Encoder enc = unflatten(run.q, nx, nz);
  const InducedDistributions d = induce(joint, enc);
  std::vector<std::size_t> group(nz), closest(nz);
  for (std::size_t k = 0; k < nz; ++k) group[k] = closest[k] = k;
  double best = kMergeDistance;
  for (std::size_t k = 0; k < nz; ++k) {
    for (std::size_t l = k + 1; l < nz; ++l) {
      if (!d.z_live[k] || !d.z_live[l]) continue;
      const double dist = cluster_distance(d, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
      if (dist >= kMergeDistance) continue;
      // Single-linkage groups, represented by their smallest member.
      const std::size_t gk = group[k], gl = group[l];
      if (gk != gl) {
        const std::size_t lo = std::min(gk, gl), hi = std::max(gk, gl);
        for (auto& g : group) {
          if (g == hi) g = lo;
        }
      }
      if (dist < best) {
        best = dist;
        std::iota(closest.begin(), closest.end(), std::size_t{0});
        closest[l] = k;
      }
    }
  }
  if (best >= kMergeDistance) return run;
  const double before = ib_objective(joint, enc, beta);
  std::vector<std::vector<std::size_t>> plans = {group};
  if (closest != group) plans.push_back(closest);
  for (const auto& plan : plans) {
    RunResult cand = run_ba(kernel, merge_columns(run.q, plan, nx), beta, cfg, rng);
    const double after = ib_objective(joint, unflatten(cand.q, nx, nz), beta);
    if (after <= before) {
      log::debug("beta={} merged close z columns (objective {} -> {})", beta, before, after);
      cand.iterations += run.iterations;
      cand.dropped += run.dropped;
      return cand;
    }
  }
  return run;
}

// A fixed point with 1/sigma_2(z*)^2 < beta is a saddle, but BA can only
// leave it through a spare column near z*. Splits z* along its f(x) into a
// dead column (or one freed by merging the two closest z) and keeps the
// result if the objective drops.
RunResult split_refine(BAKernel& kernel, const JointDistribution& joint, RunResult run, double beta,
                       const SolverConfig& cfg, std::mt19937_64& rng) {
  const std::size_t nx = kernel.nx();
  const std::size_t nz = kernel.nz();
  if (nz < 2) return run;
  for (std::size_t round = 0; round < nz; ++round) {
    const Encoder enc = unflatten(run.q, nx, nz);
    const ClassSeparation sep = class_separation(joint, enc);
    if (sep.empty() || !(beta * sep.sigma2 * sep.sigma2 > 1.0 + 1e-9)) return run;
    const InducedDistributions d = induce(joint, enc);
    std::vector<double> q = run.q;
    std::size_t spare = nz;
    for (std::size_t k = 0; k < nz && spare == nz; ++k) {
      if (!d.z_live[k]) spare = k;
    }
    if (spare == nz) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t bk = 0, bl = 0;
      for (std::size_t k = 0; k < nz; ++k) {
        for (std::size_t l = k + 1; l < nz; ++l) {
          const double dist = cluster_distance(d, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
          if (dist < best) {
            best = dist;
            bk = k;
            bl = l;
          }
        }
      }
      // Keep z* itself intact; fold the other member away.
      if (bl == sep.best_z) std::swap(bk, bl);
      std::vector<std::size_t> target(nz);
      std::iota(target.begin(), target.end(), std::size_t{0});
      target[bl] = bk;
      q = merge_columns(std::move(q), target, nx);
      spare = bl;
    }
    const double fmax = sep.f.cwiseAbs().maxCoeff();
    if (!(fmax > 0.0)) return run;
    const std::size_t zs = sep.best_z;
    for (std::size_t i = 0; i < nx; ++i) {
      const double a = 0.5 * sep.f(static_cast<Eigen::Index>(i)) / fmax;
      const double m = q[i * nz + zs] + (spare == zs ? 0.0 : q[i * nz + spare]);
      q[i * nz + zs] = 0.5 * m * (1.0 + a);
      q[i * nz + spare] = 0.5 * m * (1.0 - a);
    }
    const double before = kernel.objective(run.q, beta);
    RunResult cand = run_ba(kernel, std::move(q), beta, cfg, rng);
    const double after = kernel.objective(cand.q, beta);
    if (!(after < before)) return run;
    log::debug("beta={} split z {} (objective {} -> {})", beta, zs, before, after);
    cand.iterations += run.iterations;
    cand.dropped += run.dropped;
    run = std::move(cand);
  }
  return run;
}

}  // namespace

Encoder ba_step(const JointDistribution& joint, const Encoder& enc, double beta) {
  if (!(beta >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "beta must be >= 0");
  if (enc.nx() != joint.nx()) throw Error(ErrorKind::kDimensionMismatch, "encoder rows != |X|");
  BAKernel kernel(joint, enc.zdim());
  const auto q = flatten(enc);
  std::vector<double> out(q.size());
  kernel.step(q, out, beta);
  return unflatten(out, enc.nx(), enc.zdim());
}

IBSolution solve_ib(const JointDistribution& joint, std::size_t zdim, double beta, const SolverConfig& config) {
  config.validate();
  if (zdim < 1) throw Error(ErrorKind::kInvalidArgument, "zdim must be >= 1");
  if (!(beta >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "beta must be >= 0");
  if (config.warm_start && (config.warm_start->zdim() != zdim || config.warm_start->nx() != joint.nx())) {
    throw Error(ErrorKind::kDimensionMismatch, "warm-start encoder shape does not match (|X|, zdim)");
  }
  BAKernel kernel(joint, zdim);
  const std::size_t nx = joint.nx();

  std::optional<IBSolution> best;
  std::vector<double> objectives;
  for (std::size_t r = 0; r < config.restarts; ++r) {
    const std::uint64_t seed = derive_seed(config.seed, 0x1b5eedULL, r);
    std::mt19937_64 rng(seed);
    std::vector<double> q;
    if (r == 0 && config.warm_start) {
      q = flatten(*config.warm_start);
    } else {
      q = flatten(jittered_uniform_encoder(nx, zdim, config.init_noise, seed));
    }
    if (config.anneal_from && !(r == 0 && config.warm_start)) {
      const double b0 = *config.anneal_from;
      const std::size_t n = std::max<std::size_t>(config.anneal_steps, 1);
      for (std::size_t s = 0; s < n; ++s) {
        const double b = b0 * std::pow(beta / b0, static_cast<double>(s) / static_cast<double>(n));
        q = run_ba(kernel, std::move(q), b, config, rng).q;
        // Nudge off fixed points that lose stability further along the path.
        const auto nudge = flatten(jittered_uniform_encoder(nx, zdim, 1.0, derive_seed(seed, 0xa22ea1ULL, s)));
        for (std::size_t i = 0; i < q.size(); ++i) q[i] = 0.99 * q[i] + 0.01 * nudge[i];
      }
    }
    RunResult run = merge_refine(kernel, joint, run_ba(kernel, std::move(q), beta, config, rng), beta,
                                 config, rng);
    if (config.split_unstable) run = split_refine(kernel, joint, std::move(run), beta, config, rng);
    Encoder enc = unflatten(run.q, nx, zdim);
    const IBTerms terms = ib_terms(joint, enc, beta);
    objectives.push_back(terms.objective);
    if (!best || terms.objective < best->objective) {
      best = IBSolution{std::move(enc), beta, terms.ixz, terms.iyz, terms.objective, run.iterations, 0.0, 0,
                        run.converged, run.dropped, {}};
    }
  }
  best->restarts_used = config.restarts;
  best->restart_objectives = std::move(objectives);
  {
    const auto q = flatten(best->encoder);
    std::vector<double> image(q.size());
    best->residual = kernel.step(q, image, beta);
  }
  if (!best->converged) {
    log::debug("solve_ib beta={} did not converge in {} iterations (residual {:.3e})", beta, config.max_iters,
               best->residual);
  }
  return std::move(*best);
}

}  // namespace ibpt
