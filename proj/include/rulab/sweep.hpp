#pragma once

#include <cstdint>
#include <json.hpp>
#include <ostream>
#include <string>
#include <vector>

#include "rulab/config.hpp"
#include "rulab/lambda_mc.hpp"
#include "rulab/operator.hpp"
#include "rulab/solver.hpp"

namespace rulab {

struct SweepCell {
  double param_a = 0.0;
  double param_b = 0.0;
  double lambda_p = 0.0;
  double rho_hat = 0.0;
  double std_error = 0.0;
  std::string status;  ///< stable | unstable | inconclusive | error:<code>
};

/// Seed for cell (row, col): seed ^ hash(row << 32 | col), with hash(0) = 0 so
/// a 1x1 sweep reproduces a single lambda run.
std::uint64_t cell_seed(std::uint64_t seed, int row, int col);

/// Evaluates estimate_lambda_p on every (a, b) cell, row-major with a as the
/// row axis. Cells run concurrently up to `threads`; a failing cell becomes an
/// error:<code> entry and never aborts the sweep.
std::vector<SweepCell> sweep_stability_map(const RunConfig& config, int threads = 0);

inline constexpr const char* kSweepCsvHeader = "param_a,param_b,lambda_p,rho_hat,std_error,status";

/// 17 significant digits, enough to round-trip a double.
std::string format_number(double v);

void write_sweep_csv(const std::vector<SweepCell>& cells, std::ostream& out);
nlohmann::json to_json(const SweepCell& cell);
nlohmann::json to_json(const LambdaEstimate& estimate);
LambdaEstimate lambda_estimate_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SolveReport& report);
nlohmann::json to_json(const SpectralResult& result);

}  // namespace rulab
