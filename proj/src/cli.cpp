#include "rulab/cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>

#include "rulab/config.hpp"
#include "rulab/errors.hpp"
#include "rulab/grid.hpp"
#include "rulab/lambda_mc.hpp"
#include "rulab/operator.hpp"
#include "rulab/solver.hpp"
#include "rulab/sweep.hpp"

namespace rulab {

using nlohmann::json;

namespace {

struct Invocation {
  std::string command;
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out_path;
  std::string format;
  int threads = 0;
};

int env_threads() {
  if (const char* value = std::getenv("RULAB_THREADS")) {
    const int n = std::atoi(value);
    if (n > 0) return n;
  }
  return 0;
}

std::string csv_row(const std::vector<double>& values) {
  std::string line;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) line += ',';
    line += format_number(values[i]);
  }
  return line;
}

/// Grid function as CSV: node index, coordinates, value.
std::string grid_csv(const Grid& grid, const Eigen::VectorXd& values, const std::string& column) {
  std::ostringstream out;
  out << "node";
  for (int k = 0; k < grid.dim(); ++k) out << ",x" << k;
  out << ',' << column << '\n';
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    std::vector<double> row;
    const StatePoint x = grid.point(i);
    for (int k = 0; k < x.size(); ++k) row.push_back(x(k));
    row.push_back(values(i));
    out << i << ',' << csv_row(row) << '\n';
  }
  return out.str();
}

std::string run_lambda(const RunConfig& config, const Invocation& inv) {
  EstimationOptions options = config.estimation;
  options.threads = inv.threads;
  const LambdaEstimate est = estimate_lambda_p(config.model, config.prefs, options);
  const std::string stability(to_string(classify_stability(est)));
  if (inv.format == "csv") {
    std::ostringstream out;
    out << "model,lambda_p,rho_hat,p,n,m,J,std_error,lambda_std_error,seed,rho_hat_half,"
           "log_domain,stability\n"
        << model_name(config.model) << ',' << format_number(est.lambda_p) << ','
        << format_number(est.rho_hat) << ',' << format_number(est.p) << ',' << est.n << ','
        << est.m << ',' << est.J << ',' << format_number(est.std_error) << ','
        << format_number(est.lambda_std_error) << ',' << est.seed << ','
        << format_number(est.rho_hat_half) << ',' << (est.log_domain ? "true" : "false") << ','
        << stability << '\n';
    return out.str();
  }
  json j = to_json(est);
  j["command"] = "lambda";
  j["model"] = std::string(model_name(config.model));
  j["stability"] = stability;
  return j.dump(2) + "\n";
}

std::string run_spectral(const RunConfig& config, const Invocation& inv) {
  const SolveSettings& s = config.solve;
  const DiscreteOperator op(config.model, config.prefs, build_grid(config.model, s.nodes, s.span),
                            KernelKind::Valuation, s.discretization);
  const SpectralResult result = spectral_radius_power(op, s.spectral_tol, s.spectral_max_iter);
  if (inv.format == "csv") return grid_csv(op.grid(), result.eigenfunction, "eigenfunction");
  json j = to_json(result);
  j["command"] = "spectral";
  j["model"] = std::string(model_name(config.model));
  j["nodes"] = op.size();
  j["discretization"] = std::string(to_string(op.discretization()));
  j["lambda"] = config.prefs.beta() * std::pow(result.rho, 1.0 / config.prefs.theta());
  if (s.gelfand_n > 0) {
    const GelfandSequence seq = gelfand_sequence(op, s.gelfand_n, config.estimation.p);
    j["gelfand"] = seq.values;
    j["gelfand_overflow"] = seq.overflow;
  }
  if (s.hs) j["hs_norm"] = hs_norm(op);
  return j.dump(2) + "\n";
}

std::string run_solve(const RunConfig& config, const Invocation& inv) {
  const SolveSettings& s = config.solve;
  const Grid grid = build_grid(config.model, s.nodes, s.span);
  const DiscreteOperator op(config.model, config.prefs, grid, KernelKind::Valuation,
                            s.discretization);
  GridOperator apply;
  if (s.op == "A") {
    const ShockSpec shock = make_shock_spec(s.lambda_fn, grid, config.prefs);
    apply = [&op, &config, shock](const Eigen::VectorXd& g) {
      return apply_A(op, config.prefs, shock, g);
    };
  } else {
    const FramingSpec framing = make_framing_spec(s.b_fn, grid);
    apply = [&op, &config, framing](const Eigen::VectorXd& g) {
      return apply_B(op, config.prefs, framing, g);
    };
  }
  const SolveReport report =
      solve_fixed_point(apply, Eigen::VectorXd::Constant(grid.size(), s.g0), s.tol, s.max_iter);
  if (report.status == SolveStatus::MaxIter) {
    throw NoConvergence("fixed-point iteration reached max_iter (residual " +
                        format_number(report.final_residual) + ")");
  }
  if (inv.format == "csv") {
    if (!report.solution) return "status\n" + std::string(to_string(report.status)) + "\n";
    return grid_csv(grid, *report.solution, "g");
  }
  json j = to_json(report);
  j["command"] = "solve";
  j["model"] = std::string(model_name(config.model));
  j["operator"] = s.op;
  if (!std::holds_alternative<FiniteChain>(config.model)) {
    j["caveat"] =
        "fixed point of the truncated-grid operator; it does not certify a solution on the "
        "unbounded state space";
  }
  return j.dump(2) + "\n";
}

std::string run_sweep(const RunConfig& config, const Invocation& inv) {
  if (!config.sweep) throw ConfigError("sweep needs a [sweep] section");
  const std::vector<SweepCell> cells = sweep_stability_map(config, inv.threads);
  if (inv.format == "json") {
    json arr = json::array();
    for (const auto& c : cells) arr.push_back(to_json(c));
    return arr.dump(2) + "\n";
  }
  std::ostringstream out;
  write_sweep_csv(cells, out);
  return out.str();
}

std::string run_simulate(const RunConfig& config, const Invocation& inv) {
  const EstimationOptions& o = config.estimation;
  std::vector<GrowthPath> paths(o.m);
  std::vector<StatePoint> starts(o.m);
  const int workers = inv.threads > 0 ? inv.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(workers)
  for (int i = 0; i < o.m; ++i) {
    RngStream init(o.seed, kInitStreamBase + static_cast<std::uint64_t>(i));
    starts[i] = draw_initial_state(config.model, o.init, init);
    RngStream rng(o.seed, static_cast<std::uint64_t>(i));
    paths[i] = simulate_growth(config.model, starts[i], o.n, rng);
  }
  if (inv.format == "csv") {
    std::ostringstream out;
    const int d = state_dim(config.model);
    out << "path,log_growth";
    for (int k = 0; k < d; ++k) out << ",x0_" << k;
    for (int k = 0; k < d; ++k) out << ",xn_" << k;
    out << '\n';
    for (int i = 0; i < o.m; ++i) {
      std::vector<double> row{paths[i].log_growth};
      for (int k = 0; k < d; ++k) row.push_back(starts[i](k));
      for (int k = 0; k < d; ++k) row.push_back(paths[i].x_final(k));
      out << i << ',' << csv_row(row) << '\n';
    }
    return out.str();
  }
  json arr = json::array();
  for (int i = 0; i < o.m; ++i) {
    json x0 = json::array(), xn = json::array();
    for (int k = 0; k < starts[i].size(); ++k) x0.push_back(starts[i](k));
    for (int k = 0; k < paths[i].x_final.size(); ++k) xn.push_back(paths[i].x_final(k));
    arr.push_back(json{{"log_growth", paths[i].log_growth}, {"x0", x0}, {"x_final", xn}});
  }
  json j{{"command", "simulate"}, {"model", std::string(model_name(config.model))},
         {"n", o.n},             {"m", o.m},
         {"seed", o.seed},       {"paths", arr}};
  return j.dump(2) + "\n";
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stability analysis and fixed-point solver for recursive utility models", "rulab"};
  app.require_subcommand(1);
  Invocation inv;
  inv.threads = env_threads();
  std::uint64_t seed_value = 0;

  for (const char* name : {"lambda", "spectral", "solve", "sweep", "simulate"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", inv.config_path, "TOML run configuration")->required();
    sub->add_option("--set", inv.overrides, "override section.key=value")->take_all();
    sub->add_option("--seed", seed_value, "random seed");
    sub->add_option("--out", inv.out_path, "output file (default stdout)");
    sub->add_option("--format", inv.format, "json or csv")
        ->check(CLI::IsMember({"json", "csv"}));
    sub->add_option("--threads", inv.threads, "worker thread cap (default $RULAB_THREADS)")
        ->check(CLI::NonNegativeNumber);
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  }
  inv.command = app.get_subcommands().front()->get_name();
  if (app.get_subcommands().front()->count("--seed") > 0) inv.seed = seed_value;
  if (inv.format.empty()) inv.format = inv.command == "sweep" ? "csv" : "json";
  if (inv.threads > 0) omp_set_num_threads(inv.threads);

  std::optional<RunConfig> config;
  try {
    json tree = load_config_file(inv.config_path);
    for (const auto& o : inv.overrides) apply_override(tree, o);
    if (inv.seed) tree["estimation"]["seed"] = *inv.seed;
    config = build_run_config(tree);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const DomainError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  }

  std::string text;
  try {
    if (inv.command == "lambda") {
      text = run_lambda(*config, inv);
    } else if (inv.command == "spectral") {
      text = run_spectral(*config, inv);
    } else if (inv.command == "solve") {
      text = run_solve(*config, inv);
    } else if (inv.command == "sweep") {
      text = run_sweep(*config, inv);
    } else {
      text = run_simulate(*config, inv);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const NoConvergence& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumericalFailure;
  } catch (const OverflowError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumericalFailure;
  } catch (const DomainError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumericalFailure;
  }

  if (inv.out_path.empty()) {
    out << text;
    return kExitOk;
  }
  std::ofstream file(inv.out_path, std::ios::binary);
  file << text;
  if (!file) {
    err << "error: cannot write '" << inv.out_path << "'\n";
    return kExitConfigError;
  }
  return kExitOk;
}

}  // namespace rulab
