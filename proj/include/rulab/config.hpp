#pragma once

#include <json.hpp>
#include <optional>
#include <string>
#include <string_view>

#include "rulab/lambda_mc.hpp"
#include "rulab/model.hpp"
#include "rulab/operator.hpp"
#include "rulab/preferences.hpp"
#include "rulab/solver.hpp"

namespace rulab {

/// Parses the TOML subset used for run configs: [section] headers, `key =
/// value` pairs with numbers, quoted strings, booleans and (nested) arrays,
/// and `#` comments. Errors carry the source name and line.
nlohmann::json parse_toml(std::string_view text, const std::string& source = "<config>");

nlohmann::json load_config_file(const std::string& path);

/// Applies `section.key=value` (value in the same syntax as the file).
void apply_override(nlohmann::json& tree, const std::string& assignment);

struct SolveSettings {
  int nodes = 51;
  double span = 6.0;
  Discretization discretization = Discretization::Nystrom;
  double tol = 1e-9;
  int max_iter = 100'000;
  double spectral_tol = 1e-8;
  int spectral_max_iter = 10'000;
  int gelfand_n = 0;  ///< 0 skips the Gelfand diagnostic
  bool hs = false;
  std::string op = "A";  ///< "A" (time-preference shocks) or "B" (narrow framing)
  double g0 = 1.0;
  StateFunction lambda_fn = StateFunction::constant(1.0);
  StateFunction b_fn = StateFunction::constant(1.0);
};

struct SweepAxis {
  std::string name;  ///< "section.key"
  double lo = 0.0;
  double hi = 0.0;
  int steps = 1;

  double value(int index) const;
};

struct SweepSettings {
  SweepAxis a;
  SweepAxis b;
  /// Every cell reuses the global seed instead of a per-cell derived seed.
  bool common_seed = false;
};

struct RunConfig {
  nlohmann::json tree;
  ModelSpec model;
  PreferenceSpec prefs;
  EstimationOptions estimation;
  SolveSettings solve;
  std::optional<SweepSettings> sweep;
};

/// Validates every section and builds the typed config. Unknown keys and
/// missing required keys raise ConfigError; parameter values outside the
/// model or preference domain raise DomainError.
RunConfig build_run_config(const nlohmann::json& tree);

/// Resolves a bare parameter name ("psi") or a qualified one
/// ("preferences.psi") to its qualified form.
std::string resolve_parameter(const nlohmann::json& tree, const std::string& name);

}  // namespace rulab
