#pragma once

#include <cstdint>

#include "rulab/model.hpp"
#include "rulab/preferences.hpp"
#include "rulab/rng.hpp"

namespace rulab {

/// Law of the initial states x_1..x_m.
struct InitLaw {
  enum class Kind { Stationary, Uniform };
  Kind kind = Kind::Stationary;
  double lo = 0.0;
  double hi = 0.0;

  static InitLaw stationary() { return {}; }
  /// Unbounded coordinates drawn U(lo, hi); bounded ones from the stationary law.
  static InitLaw uniform(double lo, double hi) { return {Kind::Uniform, lo, hi}; }
};

struct EstimationOptions {
  double p = 2.0;
  int n = 1000;  ///< path length
  int m = 1000;  ///< initial states
  int J = 1000;  ///< inner paths per initial state
  InitLaw init;
  std::uint64_t seed = 0;
  /// Integrate h instead of h^p before the 1/(n p) root.
  bool literal_formula = false;
  int batches = 10;
  int threads = 0;  ///< 0 = OpenMP default
};

struct LambdaEstimate {
  double lambda_p = 0.0;
  double rho_hat = 0.0;
  double p = 0.0;
  int n = 0;
  int m = 0;
  int J = 0;
  double std_error = 0.0;         ///< batch-means standard error of rho_hat
  double lambda_std_error = 0.0;  ///< batch-means standard error of lambda_p
  std::uint64_t seed = 0;
  double rho_hat_half = 0.0;  ///< same estimator at path length n/2 (drift diagnostic)
  bool log_domain = false;    ///< some path had |(1-gamma) G| > 500
};

/// Stream ids: path (i, j) of the nested estimator owns stream i*J + j;
/// initial-state draws and the direct estimator use disjoint id ranges.
inline constexpr std::uint64_t kInitStreamBase = std::uint64_t{1} << 63;
inline constexpr std::uint64_t kDirectStreamBase = std::uint64_t{1} << 62;

/// Threshold on |(1-gamma) G| beyond which a path is flagged as log-domain.
inline constexpr double kLogDomainThreshold = 500.0;

/// ln of (1/J) sum_j exp((1-gamma) G_j), accumulated by log-sum-exp. All J
/// paths draw from `rng` in order.
double estimate_log_h(const ModelSpec& model, const PreferenceSpec& prefs, const StatePoint& x,
                      int n, int J, RngStream& rng, bool* log_domain = nullptr);

/// h(x) = E_x (C_n/C_0)^(1-gamma) by J simulated paths. Throws OverflowError
/// if the mean itself is not representable; use estimate_log_h then.
double estimate_h(const ModelSpec& model, const PreferenceSpec& prefs, const StatePoint& x, int n,
                  int J, RngStream& rng, bool* log_domain = nullptr);

/// Nested Monte Carlo estimate of Lambda_p = beta * rho_hat^(1/theta).
LambdaEstimate estimate_lambda_p(const ModelSpec& model, const PreferenceSpec& prefs,
                                 const EstimationOptions& options);

/// p = 1 estimate from m unnested stationary paths.
LambdaEstimate estimate_lambda_1_direct(const ModelSpec& model, const PreferenceSpec& prefs,
                                        int n, int m, std::uint64_t seed, int threads = 0,
                                        int batches = 10);

/// Draws an initial state from `law`.
StatePoint draw_initial_state(const ModelSpec& model, const InitLaw& law, RngStream& rng);

}  // namespace rulab
