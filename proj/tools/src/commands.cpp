#include "ibpt_cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "ibpt/dataset_io.hpp"
#include "ibpt/ib_solver.hpp"
#include "ibpt/oracles.hpp"
#include "ibpt/threshold_g.hpp"
#include "ibpt/transitions.hpp"
#include "ibpt_cli/manifest.hpp"
#include "json.hpp"

namespace ibpt::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct InputOptions {
  std::string dataset;
  std::string pyx_file;
};

struct SolverOptions {
  unsigned long long seed = 0;
  double tol = 1e-12;
  std::size_t restarts = 10;
  std::size_t max_iters = 100000;
};

struct Context {
  std::vector<std::string> argv;
  std::ostream& out;
  std::ostream& err;
  std::chrono::system_clock::time_point start = std::chrono::system_clock::now();
  RunManifest manifest;
};

void add_input(CLI::App* sub, InputOptions& in) {
  auto* d = sub->add_option("--dataset,-d", in.dataset, "Dataset JSON file");
  auto* p = sub->add_option("--pyx-file", in.pyx_file, "N x C table of p(y|x) with uniform p(x)");
  d->excludes(p);
}

void add_solver(CLI::App* sub, SolverOptions& s) {
  sub->add_option("--seed", s.seed, "Global RNG seed")->capture_default_str();
  sub->add_option("--tol", s.tol, "Blahut-Arimoto objective tolerance (nats)")->capture_default_str();
  sub->add_option("--restarts", s.restarts, "Random restarts per beta")->capture_default_str();
  sub->add_option("--max-iters", s.max_iters, "Iteration cap per restart")->capture_default_str();
}

SolverConfig to_config(const SolverOptions& s) {
  SolverConfig c;
  c.seed = s.seed;
  c.tol = s.tol;
  c.restarts = s.restarts;
  c.max_iters = s.max_iters;
  c.validate();
  return c;
}

Dataset load_input(const InputOptions& in, RunManifest& m) {
  if (!in.dataset.empty()) {
    m.input_digests[in.dataset] = fnv1a64_hex(read_text_file(in.dataset));
    return load_dataset(in.dataset);
  }
  if (!in.pyx_file.empty()) {
    m.input_digests[in.pyx_file] = fnv1a64_hex(read_text_file(in.pyx_file));
    return load_pyx_file(in.pyx_file);
  }
  throw Error(ErrorKind::kInvalidArgument, "one of --dataset or --pyx-file is required");
}

std::size_t resolve_zdim(std::size_t zdim, const Dataset& ds) { return zdim > 0 ? zdim : ds.ny() + 1; }

void snapshot(RunManifest& m, const SolverOptions& s) {
  m.seed = s.seed;
  m.config["tol"] = format_real(s.tol);
  m.config["restarts"] = std::to_string(s.restarts);
  m.config["max_iters"] = std::to_string(s.max_iters);
}

// Writes the payload to --out (plus manifest) or to stdout.
void emit(Context& ctx, const std::string& out_path, const std::string& payload) {
  if (out_path.empty()) {
    ctx.out << payload;
    return;
  }
  write_text_file(out_path, payload);
  const auto elapsed = std::chrono::system_clock::now() - ctx.start;
  ctx.manifest.argv = ctx.argv;
  ctx.manifest.tool_version = tool_version();
  ctx.manifest.started_utc = utc_timestamp(ctx.start);
  ctx.manifest.wall_seconds = std::chrono::duration<double>(elapsed).count();
  write_text_file(manifest_path(out_path), ctx.manifest.to_json());
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      std::size_t pos = 0;
      v.push_back(std::stod(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw Error(ErrorKind::kInvalidArgument, "not a number: '" + tok + "'");
    }
  }
  return v;
}

json num(double v) {
  if (std::isfinite(v)) return v;
  return format_real(v);
}

}  // namespace

int exit_code_for(const Error& e) { return e.is_input_error() ? kExitInput : kExitNumerical; }

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  Context ctx{argv, out, err, std::chrono::system_clock::now(), {}};
  CLI::App app{"Phase transitions of the information bottleneck", "ibpt"};
  app.require_subcommand(1);
  app.set_version_flag("--version", tool_version());

  // gen
  std::string gen_kind;
  std::string gen_out;
  std::size_t gen_nx = 5, gen_ny = 3, gen_bins = 32;
  double gen_alpha = 1.0, gen_eps = 0.1, gen_rho = 0.8, gen_range = 4.0;
  unsigned long long gen_seed = 0;
  std::string gen_matrix;
  auto* gen = app.add_subcommand("gen", "Generate a dataset");
  gen->add_option("kind", gen_kind, "random-categorical | confusion | binary-symmetric | gaussian | independent")
      ->required()
      ->check(CLI::IsMember({"random-categorical", "confusion", "binary-symmetric", "gaussian", "independent"}));
  gen->add_option("--nx", gen_nx, "|X|")->capture_default_str();
  gen->add_option("--ny", gen_ny, "|Y|")->capture_default_str();
  gen->add_option("--alpha", gen_alpha, "Dirichlet concentration")->capture_default_str();
  gen->add_option("--eps", gen_eps, "Flip probability")->capture_default_str();
  gen->add_option("--rho", gen_rho, "Gaussian correlation")->capture_default_str();
  gen->add_option("--bins", gen_bins, "Gaussian bins per axis")->capture_default_str();
  gen->add_option("--range", gen_range, "Gaussian truncation in standard deviations")->capture_default_str();
  gen->add_option("--matrix-file", gen_matrix, "Confusion matrix table (default: bundled 10-class fixture)");
  gen->add_option("--seed", gen_seed, "RNG seed")->capture_default_str();
  gen->add_option("--out,-o", gen_out, "Output dataset file");

  // sweep
  InputOptions sw_in;
  SolverOptions sw_solver;
  std::size_t sw_zdim = 0, sw_steps = 200, sw_jobs = 1;
  double sw_min = 0.5, sw_max = 8.0, sw_tau = kDefaultKinkThreshold;
  bool sw_warm = false, sw_kinks = false;
  std::string sw_out;
  auto* sw = app.add_subcommand("sweep", "Solve IB over a linear beta grid");
  add_input(sw, sw_in);
  add_solver(sw, sw_solver);
  sw->add_option("--zdim", sw_zdim, "|Z| (default |Y| + 1)");
  sw->add_option("--beta-min", sw_min, "First grid point")->capture_default_str();
  sw->add_option("--beta-max", sw_max, "Last grid point")->capture_default_str();
  sw->add_option("--steps", sw_steps, "Grid points")->capture_default_str();
  sw->add_option("--jobs,-j", sw_jobs, "Worker threads (cold starts only)")->capture_default_str();
  sw->add_flag("--warm-start", sw_warm, "Start each point from the previous solution");
  sw->add_flag("--kinks", sw_kinks, "Append detected kinks as a trailing comment line");
  sw->add_option("--tau", sw_tau, "Kink threshold multiple of the median")->capture_default_str();
  sw->add_option("--out,-o", sw_out, "Output CSV");

  // transitions
  InputOptions tr_in;
  SolverOptions tr_solver;
  std::size_t tr_zdim = 0;
  TransitionConfig tr_cfg;
  std::string tr_out;
  auto* tr = app.add_subcommand("transitions", "Discover phase-transition points by the fixed-point chase");
  add_input(tr, tr_in);
  add_solver(tr, tr_solver);
  tr->add_option("--zdim", tr_zdim, "|Z| (default |Y| + 1)");
  tr->add_option("-K,--patience", tr_cfg.patience, "Patience K")->capture_default_str();
  tr->add_option("--delta", tr_cfg.delta, "Precision floor")->capture_default_str();
  tr->add_option("-R,--max-ratio", tr_cfg.max_ratio, "Stop when beta_new / beta reaches this")->capture_default_str();
  tr->add_option("--beta-start", tr_cfg.beta_start, "Starting beta")->capture_default_str();
  tr->add_option("--max-iterations", tr_cfg.max_iterations, "Cap on beta_th evaluations")->capture_default_str();
  tr->add_option("--out,-o", tr_out, "Output report JSON");

  // simplex
  InputOptions sx_in;
  SolverOptions sx_solver;
  std::size_t sx_zdim = 3;
  std::string sx_betas;
  bool sx_warm = false;
  std::string sx_out;
  auto* sx = app.add_subcommand("simplex", "Export converged p(z|x) rows per beta");
  add_input(sx, sx_in);
  add_solver(sx, sx_solver);
  sx->add_option("--zdim", sx_zdim, "|Z|; 3 adds barycentric plot coordinates")->capture_default_str();
  sx->add_option("--betas", sx_betas, "Comma-separated beta list")->required();
  sx->add_flag("--warm-start", sx_warm, "Chain solutions across the sorted beta list");
  sx->add_option("--out,-o", sx_out, "Output CSV");

  // oracle
  std::string or_name;
  InputOptions or_in;
  std::vector<double> or_rhos;
  unsigned long long or_seed = 0;
  std::string or_out;
  auto* orc = app.add_subcommand("oracle", "Run an independent oracle");
  orc->add_option("name", or_name, "ace | gaussian | threshold | brute-force")
      ->required()
      ->check(CLI::IsMember({"ace", "gaussian", "threshold", "brute-force"}));
  add_input(orc, or_in);
  orc->add_option("--rho", or_rhos, "Block correlations for the gaussian oracle");
  orc->add_option("--seed", or_seed, "RNG seed")->capture_default_str();
  orc->add_option("--out,-o", or_out, "Output JSON");

  std::vector<const char*> cargv;
  for (const auto& a : argv) cargv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    RunManifest& m = ctx.manifest;
    if (*gen) {
      m.command = "gen";
      m.seed = gen_seed;
      m.config["kind"] = gen_kind;
      Dataset ds;
      if (gen_kind == "random-categorical") {
        m.config["nx"] = std::to_string(gen_nx);
        m.config["ny"] = std::to_string(gen_ny);
        m.config["alpha"] = format_real(gen_alpha);
        ds = random_categorical(gen_nx, gen_ny, gen_alpha, gen_seed);
      } else if (gen_kind == "confusion") {
        if (gen_matrix.empty()) {
          ds = cifar10_confusion();
        } else {
          m.input_digests[gen_matrix] = fnv1a64_hex(read_text_file(gen_matrix));
          ds = confusion_dataset(load_pyx_file(gen_matrix).py_given_x);
        }
      } else if (gen_kind == "binary-symmetric") {
        m.config["eps"] = format_real(gen_eps);
        ds = binary_symmetric(gen_eps);
      } else if (gen_kind == "gaussian") {
        m.config["rho"] = format_real(gen_rho);
        m.config["bins"] = std::to_string(gen_bins);
        m.config["range"] = format_real(gen_range);
        GaussianSpec spec;
        spec.rho = gen_rho;
        spec.bins = gen_bins;
        spec.range_sigmas = gen_range;
        ds = Dataset::from_joint(discretize_gaussian(spec).pxy());
      } else {
        m.config["nx"] = std::to_string(gen_nx);
        m.config["ny"] = std::to_string(gen_ny);
        ds = independent_dataset(gen_nx, gen_ny);
      }
      emit(ctx, gen_out, dataset_to_json(ds));
      return kExitOk;
    }

    if (*sw) {
      m.command = "sweep";
      snapshot(m, sw_solver);
      const Dataset ds = load_input(sw_in, m);
      const std::size_t zdim = resolve_zdim(sw_zdim, ds);
      m.config["zdim"] = std::to_string(zdim);
      m.config["beta_min"] = format_real(sw_min);
      m.config["beta_max"] = format_real(sw_max);
      m.config["steps"] = std::to_string(sw_steps);
      m.config["warm_start"] = sw_warm ? "true" : "false";
      m.config["jobs"] = std::to_string(sw_jobs);
      SweepConfig cfg;
      cfg.solver = to_config(sw_solver);
      cfg.warm_start = sw_warm;
      cfg.jobs = sw_jobs;
      const SweepRecord rec = sweep(ds.joint(), zdim, linear_grid(sw_min, sw_max, sw_steps), cfg);
      std::string csv = sweep_to_csv(rec);
      if (sw_kinks) {
        m.config["tau"] = format_real(sw_tau);
        csv += "# kinks:";
        bool first = true;
        for (double k : detect_kinks(rec, sw_tau)) {
          csv += (first ? " " : ",") + format_real(k);
          first = false;
        }
        csv += "\n";
      }
      emit(ctx, sw_out, csv);
      const auto failed = std::count_if(rec.rows.begin(), rec.rows.end(), [](const SweepRow& r) { return !r.error.empty(); });
      if (failed > 0) {
        err << "error: " << failed << " sweep point(s) failed\n";
        return kExitNumerical;
      }
      return kExitOk;
    }

    if (*tr) {
      m.command = "transitions";
      snapshot(m, tr_solver);
      const Dataset ds = load_input(tr_in, m);
      const std::size_t zdim = resolve_zdim(tr_zdim, ds);
      tr_cfg.solver = to_config(tr_solver);
      m.config["zdim"] = std::to_string(zdim);
      m.config["patience"] = std::to_string(tr_cfg.patience);
      m.config["delta"] = format_real(tr_cfg.delta);
      m.config["max_ratio"] = format_real(tr_cfg.max_ratio);
      m.config["beta_start"] = format_real(tr_cfg.beta_start);
      m.config["max_iterations"] = std::to_string(tr_cfg.max_iterations);
      const TransitionReport rep = discover_transitions(ds.joint(), zdim, tr_cfg);
      emit(ctx, tr_out, report_to_json(rep));
      return kExitOk;
    }

    if (*sx) {
      m.command = "simplex";
      snapshot(m, sx_solver);
      const Dataset ds = load_input(sx_in, m);
      std::vector<double> betas = parse_list(sx_betas);
      if (betas.empty()) throw Error(ErrorKind::kInvalidArgument, "--betas is empty");
      for (double b : betas) {
        if (!(b > 0.0)) throw Error(ErrorKind::kInvalidArgument, "betas must be > 0");
      }
      m.config["zdim"] = std::to_string(sx_zdim);
      m.config["betas"] = sx_betas;
      const SolverConfig base = to_config(sx_solver);
      std::ostringstream os;
      os << "beta,x";
      for (std::size_t k = 0; k < sx_zdim; ++k) os << ",p_z" << k;
      if (sx_zdim == 3) os << ",u,v";
      os << "\n";
      std::optional<Encoder> prev;
      const JointDistribution joint = ds.joint();
      for (std::size_t b = 0; b < betas.size(); ++b) {
        SolverConfig s = base;
        s.seed = derive_seed(base.seed, 0x51e4ULL, b);
        if (sx_warm && prev) s.warm_start = prev;
        const IBSolution sol = solve_ib(joint, sx_zdim, betas[b], s);
        prev = sol.encoder;
        for (std::size_t i = 0; i < ds.nx(); ++i) {
          os << format_real(betas[b]) << ',' << i;
          for (std::size_t k = 0; k < sx_zdim; ++k) os << ',' << format_real(sol.encoder(i, k));
          if (sx_zdim == 3) {
            // Triangle with vertices z0 = (0,0), z1 = (1,0), z2 = (1/2, sqrt(3)/2).
            const double u = sol.encoder(i, 1) + 0.5 * sol.encoder(i, 2);
            const double v = 0.5 * std::sqrt(3.0) * sol.encoder(i, 2);
            os << ',' << format_real(u) << ',' << format_real(v);
          }
          os << '\n';
        }
      }
      emit(ctx, sx_out, os.str());
      return kExitOk;
    }

    if (*orc) {
      m.command = "oracle";
      m.seed = or_seed;
      m.config["name"] = or_name;
      json j;
      j["oracle"] = or_name;
      if (or_name == "gaussian") {
        if (or_rhos.empty()) throw Error(ErrorKind::kInvalidArgument, "gaussian oracle needs --rho");
        GaussianSpec spec;
        if (or_rhos.size() == 1) {
          spec.rho = or_rhos[0];
        } else {
          spec = gaussian_blocks(or_rhos);
        }
        j["rho"] = or_rhos;
        j["critical_betas"] = json::array();
        for (double b : gaussian_critical_betas(spec)) j["critical_betas"].push_back(num(b));
      } else {
        const Dataset ds = load_input(or_in, m);
        const JointDistribution joint = ds.joint();
        const Encoder trivial = Encoder::uniform(ds.nx(), 2);
        if (or_name == "ace") {
          j["max_correlation"] = ace_max_correlation(joint, or_seed);
        } else if (or_name == "threshold") {
          const RouteComparison rc = compare_routes(joint, trivial);
          j["g_svd"] = num(rc.svd);
          j["g_eigen"] = num(rc.eigen);
          j["g_centered"] = num(rc.centered);
          j["routes_agree"] = rc.routes_agree;
          const ClassSeparation cs = class_separation(joint, trivial);
          j["positive_classes"] = cs.positive_classes;
          j["negative_classes"] = cs.negative_classes;
        } else {
          const Encoder enc = Encoder::uniform(ds.nx(), 2);
          BruteForceConfig bc;
          bc.seed = or_seed;
          j["g_brute_force"] = num(brute_force_g(joint, enc, bc));
          j["g_eigen"] = num(g_eigen(joint, enc).g_value);
        }
      }
      emit(ctx, or_out, j.dump(2) + "\n");
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitInput;
}

}  // namespace ibpt::cli
