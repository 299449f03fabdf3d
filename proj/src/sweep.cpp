#include "rulab/sweep.hpp"

#include <omp.h>

#include <cmath>
#include <cstdio>

#include "rulab/errors.hpp"

namespace rulab {

using nlohmann::json;

namespace {

// murmur3 finalizer; maps 0 to 0, so cell (0, 0) keeps the global seed.
std::uint64_t fmix64(std::uint64_t k) {
  k ^= k >> 33;
  k *= 0xff51afd7ed558ccdULL;
  k ^= k >> 33;
  k *= 0xc4ceb9fe1a85ec53ULL;
  k ^= k >> 33;
  return k;
}

}  // namespace

std::uint64_t cell_seed(std::uint64_t seed, int row, int col) {
  const std::uint64_t key =
      (static_cast<std::uint64_t>(static_cast<std::uint32_t>(row)) << 32) |
      static_cast<std::uint32_t>(col);
  return seed ^ fmix64(key);
}

namespace {

void set_parameter(json& tree, const std::string& qualified, double value) {
  const auto dot = qualified.find('.');
  json& slot = tree[qualified.substr(0, dot)][qualified.substr(dot + 1)];
  // integer keys (n, m, J, ...) stay integers when the swept value is whole
  if (slot.is_number_integer() && value == std::round(value)) {
    slot = static_cast<std::int64_t>(value);
  } else {
    slot = value;
  }
}

}  // namespace

std::vector<SweepCell> sweep_stability_map(const RunConfig& config, int threads) {
  if (!config.sweep) throw ConfigError("config has no [sweep] section");
  const SweepSettings& sweep = *config.sweep;
  const int rows = sweep.a.steps;
  const int cols = sweep.b.steps;
  std::vector<SweepCell> cells(static_cast<std::size_t>(rows) * cols);
  const int workers = threads > 0 ? threads : omp_get_max_threads();

#pragma omp parallel for schedule(dynamic) num_threads(workers)
  for (int index = 0; index < rows * cols; ++index) {
    const int row = index / cols;
    const int col = index % cols;
    SweepCell& cell = cells[index];
    cell.param_a = sweep.a.value(row);
    cell.param_b = sweep.b.value(col);
    try {
      json tree = config.tree;
      tree.erase("sweep");
      set_parameter(tree, sweep.a.name, cell.param_a);
      set_parameter(tree, sweep.b.name, cell.param_b);
      const RunConfig local = build_run_config(tree);
      EstimationOptions options = local.estimation;
      options.seed = sweep.common_seed ? config.estimation.seed
                                       : cell_seed(config.estimation.seed, row, col);
      options.threads = 1;
      const LambdaEstimate est = estimate_lambda_p(local.model, local.prefs, options);
      cell.lambda_p = est.lambda_p;
      cell.rho_hat = est.rho_hat;
      cell.std_error = est.std_error;
      cell.status = std::string(to_string(classify_stability(est)));
    } catch (const DomainError&) {
      cell.status = "error:domain";
    } catch (const ConfigError&) {
      cell.status = "error:config";
    } catch (const OverflowError&) {
      cell.status = "error:overflow";
    } catch (const NoConvergence&) {
      cell.status = "error:no_convergence";
    } catch (const std::exception&) {
      cell.status = "error:internal";
    }
  }
  return cells;
}

std::string format_number(double v) {
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.17g", v);
  return buffer;
}

void write_sweep_csv(const std::vector<SweepCell>& cells, std::ostream& out) {
  out << kSweepCsvHeader << '\n';
  for (const SweepCell& c : cells) {
    out << format_number(c.param_a) << ',' << format_number(c.param_b) << ','
        << format_number(c.lambda_p) << ',' << format_number(c.rho_hat) << ','
        << format_number(c.std_error) << ',' << c.status << '\n';
  }
}

json to_json(const SweepCell& cell) {
  return json{{"param_a", cell.param_a},   {"param_b", cell.param_b},
              {"lambda_p", cell.lambda_p}, {"rho_hat", cell.rho_hat},
              {"std_error", cell.std_error}, {"status", cell.status}};
}

json to_json(const LambdaEstimate& e) {
  return json{{"lambda_p", e.lambda_p},
              {"rho_hat", e.rho_hat},
              {"p", e.p},
              {"n", e.n},
              {"m", e.m},
              {"J", e.J},
              {"std_error", e.std_error},
              {"lambda_std_error", e.lambda_std_error},
              {"seed", e.seed},
              {"rho_hat_half", e.rho_hat_half},
              {"log_domain", e.log_domain}};
}

LambdaEstimate lambda_estimate_from_json(const json& j) {
  LambdaEstimate e;
  e.lambda_p = j.at("lambda_p").get<double>();
  e.rho_hat = j.at("rho_hat").get<double>();
  e.p = j.at("p").get<double>();
  e.n = j.at("n").get<int>();
  e.m = j.at("m").get<int>();
  e.J = j.at("J").get<int>();
  e.std_error = j.at("std_error").get<double>();
  e.lambda_std_error = j.at("lambda_std_error").get<double>();
  e.seed = j.at("seed").get<std::uint64_t>();
  e.rho_hat_half = j.at("rho_hat_half").get<double>();
  e.log_domain = j.at("log_domain").get<bool>();
  return e;
}

namespace {

json to_array(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

}  // namespace

json to_json(const SolveReport& r) {
  return json{{"status", std::string(to_string(r.status))},
              {"solution", r.solution ? to_array(*r.solution) : json(nullptr)},
              {"iterations", r.iterations},
              {"final_residual", r.final_residual},
              {"residual_history", r.residual_history}};
}

json to_json(const SpectralResult& r) {
  return json{{"rho", r.rho},
              {"eigenfunction", to_array(r.eigenfunction)},
              {"iterations", r.iterations},
              {"residual", r.residual}};
}

}  // namespace rulab
