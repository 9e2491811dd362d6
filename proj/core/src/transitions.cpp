#include "ibpt/transitions.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <sstream>
#include <thread>

#include "ibpt/threshold_g.hpp"
#include "json.hpp"
#include "log.hpp"

namespace ibpt {

std::string to_string(Termination t) {
  switch (t) {
    case Termination::kRatioExceeded: return "ratio-exceeded";
    case Termination::kMaxPoints: return "max-points";
    case Termination::kNonFiniteG: return "non-finite-G";
    case Termination::kIterationCap: return "iteration-cap";
  }
  return "unknown";
}

void TransitionConfig::validate() const {
  if (patience < 1) throw Error(ErrorKind::kInvalidArgument, "patience K must be >= 1");
  if (!(delta > 0.0)) throw Error(ErrorKind::kInvalidArgument, "precision floor delta must be > 0");
  if (!(max_ratio > 1.0)) throw Error(ErrorKind::kInvalidArgument, "max ratio R must be > 1");
  if (!(beta_start > 0.0)) throw Error(ErrorKind::kInvalidArgument, "beta_start must be > 0");
  if (max_iterations < 1) throw Error(ErrorKind::kInvalidArgument, "iteration cap must be >= 1");
  solver.validate();
}

BetaTh beta_th(const JointDistribution& joint, std::size_t zdim, double beta, const SolverConfig& solver) {
  if (!(beta > 0.0)) throw Error(ErrorKind::kInvalidArgument, "beta must be > 0");
  BetaTh out{std::numeric_limits<double>::infinity(), true, solve_ib(joint, zdim, beta, solver)};
  out.converged = out.solution.converged;
  out.value = g_svd(joint, out.solution.encoder).g_value;
  log::debug("beta_th({}) = {} (iterations {}, converged {})", beta, out.value, out.solution.iterations,
             out.converged);
  return out;
}

TransitionReport discover_transitions(const JointDistribution& joint, std::size_t zdim, const TransitionConfig& config) {
  config.validate();
  TransitionReport rep;
  std::vector<TraceStep> trace;
  std::vector<double> raw_points;
  std::vector<std::vector<TraceStep>> raw_traces;

  auto th = [&](double b) {
    BetaTh r = beta_th(joint, zdim, b, config.solver);
    if (!r.converged) ++rep.unconverged_solves;
    ++rep.iterations;
    return r.value;
  };

  double beta = config.beta_start;
  double beta_new = th(beta);
  trace.push_back({beta, beta_new});
  if (!std::isfinite(beta_new)) {
    rep.termination = Termination::kNonFiniteG;
    rep.tail = std::move(trace);
    return rep;
  }
  raw_points.push_back(beta_new);
  raw_traces.push_back(std::move(trace));
  trace.clear();

  std::size_t count = 0;
  bool done = false;
  if (raw_points.size() >= config.max_points) {
    rep.termination = Termination::kMaxPoints;
    done = true;
  }
  while (!done && beta_new / beta < config.max_ratio) {
    if (rep.iterations >= config.max_iterations) {
      rep.termination = Termination::kIterationCap;
      done = true;
      break;
    }
    beta = beta_new;
    beta_new = th(beta);
    trace.push_back({beta, beta_new});
    if (!std::isfinite(beta_new)) {
      rep.termination = Termination::kNonFiniteG;
      done = true;
      break;
    }
    if (beta_new - beta < config.delta) {
      ++count;
      if (count > config.patience) {
        raw_points.push_back(beta_new);
        raw_traces.push_back(std::move(trace));
        trace.clear();
        if (raw_points.size() >= config.max_points) {
          rep.termination = Termination::kMaxPoints;
          done = true;
          break;
        }
        beta_new += config.delta;
      }
    } else {
      count = 0;
    }
  }
  if (!done) rep.termination = Termination::kRatioExceeded;
  rep.tail = std::move(trace);

  // A bump that fails to leave a phase re-records the same fixed point; fold
  // such repeats into the earlier point.
  for (std::size_t i = 0; i < raw_points.size(); ++i) {
    if (!rep.points.empty() && raw_points[i] <= rep.points.back() + config.delta) {
      auto& t = rep.traces.back();
      t.insert(t.end(), raw_traces[i].begin(), raw_traces[i].end());
      continue;
    }
    rep.points.push_back(raw_points[i]);
    rep.traces.push_back(std::move(raw_traces[i]));
  }
  for (double p : rep.points) {
    const double r = std::abs(beta_th(joint, zdim, p, config.solver).value - p);
    rep.residuals.push_back(r);
    if (!(r <= config.delta)) log::warn("transition {} fails the fixed-point check (residual {:.3e})", p, r);
  }
  rep.bound_respected = rep.points.size() + 1 <= joint.ny();
  if (!rep.bound_respected) {
    log::warn("{} transitions found for |Y| = {}; more than |Y| - 1", rep.points.size(), joint.ny());
  }
  return rep;
}

std::vector<double> linear_grid(double lo, double hi, std::size_t steps) {
  if (steps < 2) throw Error(ErrorKind::kInvalidArgument, "grid needs at least 2 points");
  if (!(lo > 0.0) || !(hi > lo)) throw Error(ErrorKind::kInvalidArgument, "grid needs 0 < lo < hi");
  std::vector<double> g(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps - 1);
  }
  g.back() = hi;
  return g;
}

namespace {

SweepRow solve_row(const JointDistribution& joint, std::size_t zdim, double beta, const SolverConfig& solver,
                   std::optional<Encoder>& enc_out) {
  SweepRow row;
  row.beta = beta;
  try {
    IBSolution sol = solve_ib(joint, zdim, beta, solver);
    row.ixz = sol.ixz;
    row.iyz = sol.iyz;
    row.objective = sol.objective;
    row.converged = sol.converged;
    row.g_value = g_svd(joint, sol.encoder).g_value;
    enc_out = std::move(sol.encoder);
  } catch (const Error& e) {
    row.converged = false;
    row.error = e.what();
    row.ixz = row.iyz = row.objective = row.g_value = std::numeric_limits<double>::quiet_NaN();
    log::warn("sweep point beta={} failed: {}", beta, e.what());
  }
  return row;
}

}  // namespace

SweepRecord sweep(const JointDistribution& joint, std::size_t zdim, const std::vector<double>& beta_grid,
                  const SweepConfig& config) {
  config.solver.validate();
  for (std::size_t i = 0; i < beta_grid.size(); ++i) {
    if (!(beta_grid[i] > 0.0)) throw Error(ErrorKind::kInvalidArgument, "sweep grid must be positive");
    if (i > 0 && !(beta_grid[i] > beta_grid[i - 1])) {
      throw Error(ErrorKind::kInvalidArgument, "sweep grid must be strictly increasing");
    }
  }
  const std::size_t n = beta_grid.size();
  SweepRecord rec;
  rec.rows.resize(n);
  std::vector<std::optional<Encoder>> encs(n);

  auto point_config = [&](std::size_t i) {
    SolverConfig s = config.solver;
    s.seed = derive_seed(config.solver.seed, 0x5eeeeULL, i);
    return s;
  };

  if (config.warm_start) {
    std::optional<Encoder> prev;
    for (std::size_t i = 0; i < n; ++i) {
      SolverConfig s = point_config(i);
      if (prev) s.warm_start = prev;
      rec.rows[i] = solve_row(joint, zdim, beta_grid[i], s, encs[i]);
      if (encs[i]) prev = encs[i];
    }
  } else {
    const std::size_t jobs = std::max<std::size_t>(1, std::min(config.jobs, n));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < n; i = next++) {
        rec.rows[i] = solve_row(joint, zdim, beta_grid[i], point_config(i), encs[i]);
      }
    };
    if (jobs == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
  }
  rec.encoders.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    rec.encoders.push_back(encs[i] ? std::move(*encs[i]) : Encoder::uniform(joint.nx(), zdim));
  }
  return rec;
}

std::vector<double> detect_kinks(const SweepRecord& record, double tau) {
  std::vector<double> beta, iyz;
  for (const auto& r : record.rows) {
    if (!std::isfinite(r.iyz)) continue;
    beta.push_back(r.beta);
    iyz.push_back(r.iyz);
  }
  return detect_kinks(beta, iyz, tau);
}

std::vector<double> detect_kinks(const std::vector<double>& beta, const std::vector<double>& iyz, double tau) {
  if (beta.size() != iyz.size()) throw Error(ErrorKind::kDimensionMismatch, "beta and I(Y;Z) lengths differ");
  const std::size_t n = beta.size();
  if (n < 5) {
    log::warn("detect_kinks needs at least 5 grid points, got {}", n);
    return {};
  }
  std::vector<double> d2(n, 0.0), jump(n, 0.0);
  double slope_scale = 0.0;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double hl = beta[i] - beta[i - 1];
    const double hr = beta[i + 1] - beta[i];
    if (!(hl > 0.0) || !(hr > 0.0)) throw Error(ErrorKind::kInvalidArgument, "beta grid must be strictly increasing");
    const double sl = (iyz[i] - iyz[i - 1]) / hl;
    const double sr = (iyz[i + 1] - iyz[i]) / hr;
    d2[i] = 2.0 * (sr - sl) / (hl + hr);
    jump[i] = sr - sl;
    slope_scale = std::max({slope_scale, std::abs(sl), std::abs(sr)});
  }
  std::vector<double> mags(d2.begin() + 1, d2.end() - 1);
  for (double& m : mags) m = std::abs(m);
  std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(mags.size() / 2), mags.end());
  const double median = mags[mags.size() / 2];
  const double top = *std::max_element(mags.begin(), mags.end());
  // The median vanishes on flat stretches; never flag below 1e-6 of the
  // strongest curvature.
  const double threshold = tau * std::max(median, 1e-6 * top);
  if (!(top > 0.0)) return {};

  std::vector<double> kinks;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(d2[i] > threshold)) continue;
    // Slope changes at rounding level are not kinks.
    if (!(jump[i] > 1e-6 * slope_scale)) continue;
    if (d2[i] < d2[i - 1] || d2[i] <= d2[i + 1]) continue;
    // The break sits in the cell toward the larger neighbour.
    const bool right = (i + 2 < n) ? d2[i + 1] >= d2[i - 1] : false;
    kinks.push_back(right ? 0.5 * (beta[i] + beta[i + 1]) : 0.5 * (beta[i - 1] + beta[i]));
  }
  return kinks;
}

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string report_to_json(const TransitionReport& report) {
  using nlohmann::json;
  auto num = [](double v) -> json {
    if (std::isfinite(v)) return v;
    return format_real(v);
  };
  json j;
  j["points"] = json::array();
  for (double p : report.points) j["points"].push_back(num(p));
  j["residuals"] = json::array();
  for (double r : report.residuals) j["residuals"].push_back(num(r));
  j["traces"] = json::array();
  for (const auto& t : report.traces) {
    json arr = json::array();
    for (const auto& s : t) arr.push_back({{"beta", num(s.beta)}, {"beta_new", num(s.beta_new)}});
    j["traces"].push_back(std::move(arr));
  }
  j["termination"] = to_string(report.termination);
  return j.dump(2) + "\n";
}

std::string sweep_to_csv(const SweepRecord& record) {
  std::ostringstream os;
  os << "beta,ixz_nats,iyz_nats,objective_nats,g_value,converged\n";
  for (const auto& r : record.rows) {
    os << format_real(r.beta) << ',' << format_real(r.ixz) << ',' << format_real(r.iyz) << ','
       << format_real(r.objective) << ',' << format_real(r.g_value) << ',' << (r.converged ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace ibpt
