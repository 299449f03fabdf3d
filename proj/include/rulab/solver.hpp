#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "rulab/grid.hpp"
#include "rulab/lambda_mc.hpp"
#include "rulab/operator.hpp"
#include "rulab/preferences.hpp"

namespace rulab {

/// Bounded positive function of the state, used for lambda(x) and b(x).
struct StateFunction {
  enum class Kind { Constant, ExpLinear };
  Kind kind = Kind::Constant;
  double value = 1.0;
  /// ExpLinear: clamp(exp(intercept + slope . x), lo, hi).
  double intercept = 0.0;
  std::vector<double> slope;
  double lo = 0.0;
  double hi = 0.0;

  static StateFunction constant(double value);
  static StateFunction exp_linear(double intercept, std::vector<double> slope, double lo,
                                  double hi);

  double operator()(const StatePoint& x) const;
  Eigen::VectorXd on_grid(const Grid& grid) const;
};

/// Time-preference shock on the grid and the derived xi = (1 - beta) lambda.
struct ShockSpec {
  Eigen::VectorXd lambda;
  Eigen::VectorXd xi;
};

/// Throws DomainError unless 0 < min lambda and max lambda is finite.
ShockSpec make_shock_spec(const Eigen::Ref<const Eigen::VectorXd>& lambda,
                          const PreferenceSpec& prefs);
ShockSpec make_shock_spec(const StateFunction& lambda, const Grid& grid,
                          const PreferenceSpec& prefs);

/// Narrow-framing term b(x) on the grid.
struct FramingSpec {
  Eigen::VectorXd b;
};

/// Throws DomainError unless b is strictly positive and finite.
FramingSpec make_framing_spec(const Eigen::Ref<const Eigen::VectorXd>& b);
FramingSpec make_framing_spec(const StateFunction& b, const Grid& grid);

/// Ag = {xi + beta (Kg)^(1/theta)}^theta, nodewise.
Eigen::VectorXd apply_A(const DiscreteOperator& K, const PreferenceSpec& prefs,
                        const ShockSpec& shock, const Eigen::Ref<const Eigen::VectorXd>& g);

/// Bg = {(1 - beta) + beta (Kg + b)^(1/theta)}^theta, nodewise.
Eigen::VectorXd apply_B(const DiscreteOperator& K, const PreferenceSpec& prefs,
                        const FramingSpec& framing, const Eigen::Ref<const Eigen::VectorXd>& g);

enum class SolveStatus { Converged, CollapsedToZero, Diverged, MaxIter };

std::string_view to_string(SolveStatus status);

struct SolveReport {
  SolveStatus status = SolveStatus::MaxIter;
  std::optional<Eigen::VectorXd> solution;  ///< set only when Converged
  int iterations = 0;
  double final_residual = 0.0;
  std::vector<double> residual_history;
};

using GridOperator = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

inline constexpr double kCollapseThreshold = 1e-12;
inline constexpr double kDivergeThreshold = 1e12;

/// Successive approximation g <- op(g). The residual at step k is
/// sup|g_k - g_{k-1}| / sup g_k; Converged once it drops below tol.
/// CollapsedToZero when sup g < 1e-12, Diverged when sup g > 1e12 or an
/// iterate is not finite.
SolveReport solve_fixed_point(const GridOperator& op, const Eigen::VectorXd& g0,
                              double tol = 1e-9, int max_iter = 100'000);

/// Fixed point of the one-state operator: with Lambda = beta k^(1/theta) < 1,
/// returns (xi / (1 - Lambda))^theta; otherwise nullopt.
std::optional<double> scalar_closed_form(const PreferenceSpec& prefs, double k, double xi);

enum class Stability { Stable, Unstable, Inconclusive };

std::string_view to_string(Stability s);

/// Compares lambda_p against 1 with a symmetric band; the default band is
/// twice the estimate's lambda standard error.
Stability classify_stability(const LambdaEstimate& estimate,
                             std::optional<double> band = std::nullopt);

}  // namespace rulab
