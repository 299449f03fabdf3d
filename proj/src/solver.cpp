#include "rulab/solver.hpp"

#include <algorithm>
#include <cmath>

#include "rulab/errors.hpp"

namespace rulab {

StateFunction StateFunction::constant(double value) {
  StateFunction f;
  f.value = value;
  return f;
}

StateFunction StateFunction::exp_linear(double intercept, std::vector<double> slope, double lo,
                                        double hi) {
  if (!(lo > 0.0 && hi >= lo && std::isfinite(hi))) {
    throw DomainError("exp_linear clamp needs 0 < lo <= hi < inf");
  }
  StateFunction f;
  f.kind = Kind::ExpLinear;
  f.intercept = intercept;
  f.slope = std::move(slope);
  f.lo = lo;
  f.hi = hi;
  return f;
}

double StateFunction::operator()(const StatePoint& x) const {
  if (kind == Kind::Constant) return value;
  if (slope.size() != static_cast<std::size_t>(x.size())) {
    throw DomainError("state function slope has the wrong dimension");
  }
  double arg = intercept;
  for (int k = 0; k < x.size(); ++k) arg += slope[k] * x(k);
  return std::clamp(std::exp(arg), lo, hi);
}

Eigen::VectorXd StateFunction::on_grid(const Grid& grid) const {
  Eigen::VectorXd out(grid.size());
  for (Eigen::Index i = 0; i < grid.size(); ++i) out(i) = (*this)(grid.point(i));
  return out;
}

ShockSpec make_shock_spec(const Eigen::Ref<const Eigen::VectorXd>& lambda,
                          const PreferenceSpec& prefs) {
  if (lambda.size() == 0 || !lambda.allFinite() || !(lambda.minCoeff() > 0.0)) {
    throw DomainError("time-preference shock must be positive and bounded on the grid");
  }
  return ShockSpec{lambda, (1.0 - prefs.beta()) * lambda};
}

ShockSpec make_shock_spec(const StateFunction& lambda, const Grid& grid,
                          const PreferenceSpec& prefs) {
  return make_shock_spec(lambda.on_grid(grid), prefs);
}

FramingSpec make_framing_spec(const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (b.size() == 0 || !b.allFinite() || !(b.minCoeff() > 0.0)) {
    throw DomainError("narrow-framing term must be strictly positive and bounded");
  }
  return FramingSpec{b};
}

FramingSpec make_framing_spec(const StateFunction& b, const Grid& grid) {
  return make_framing_spec(b.on_grid(grid));
}

namespace {

// {shift + beta * inner^(1/theta)}^theta, nodewise; inner must be positive.
Eigen::VectorXd aggregate(const Eigen::VectorXd& shift, const PreferenceSpec& prefs,
                          const Eigen::VectorXd& inner) {
  if (!(inner.minCoeff() > 0.0)) {
    throw DomainError("K g must be strictly positive; the input was not a positive function");
  }
  const double theta = prefs.theta();
  return (shift.array() + prefs.beta() * inner.array().pow(1.0 / theta)).pow(theta).matrix();
}

}  // namespace

Eigen::VectorXd apply_A(const DiscreteOperator& K, const PreferenceSpec& prefs,
                        const ShockSpec& shock, const Eigen::Ref<const Eigen::VectorXd>& g) {
  if (shock.xi.size() != K.size()) throw DomainError("shock spec does not match the grid");
  return aggregate(shock.xi, prefs, K.apply(g));
}

Eigen::VectorXd apply_B(const DiscreteOperator& K, const PreferenceSpec& prefs,
                        const FramingSpec& framing, const Eigen::Ref<const Eigen::VectorXd>& g) {
  if (framing.b.size() != K.size()) throw DomainError("framing spec does not match the grid");
  const Eigen::VectorXd shift = Eigen::VectorXd::Constant(K.size(), 1.0 - prefs.beta());
  return aggregate(shift, prefs, K.apply(g) + framing.b);
}

std::string_view to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Converged: return "Converged";
    case SolveStatus::CollapsedToZero: return "CollapsedToZero";
    case SolveStatus::Diverged: return "Diverged";
    case SolveStatus::MaxIter: return "MaxIter";
  }
  return "unknown";
}

SolveReport solve_fixed_point(const GridOperator& op, const Eigen::VectorXd& g0, double tol,
                              int max_iter) {
  if (!(tol > 0.0)) throw DomainError("tolerance must be positive");
  if (g0.size() == 0 || !g0.allFinite() || !(g0.minCoeff() > 0.0)) {
    throw DomainError("initial guess must be strictly positive");
  }
  SolveReport report;
  Eigen::VectorXd g = g0;
  for (int k = 1; k <= max_iter; ++k) {
    Eigen::VectorXd next = op(g);
    report.iterations = k;
    if (!next.allFinite() || next.maxCoeff() > kDivergeThreshold) {
      report.status = SolveStatus::Diverged;
      return report;
    }
    const double peak = next.maxCoeff();
    if (peak < kCollapseThreshold) {
      report.status = SolveStatus::CollapsedToZero;
      return report;
    }
    const double residual = (next - g).cwiseAbs().maxCoeff() / peak;
    report.residual_history.push_back(residual);
    report.final_residual = residual;
    g = std::move(next);
    if (residual < tol && g.minCoeff() > 0.0) {
      report.status = SolveStatus::Converged;
      report.solution = std::move(g);
      return report;
    }
  }
  report.status = SolveStatus::MaxIter;
  return report;
}

std::optional<double> scalar_closed_form(const PreferenceSpec& prefs, double k, double xi) {
  if (!(k > 0.0) || !(xi > 0.0)) throw DomainError("k and xi must be positive");
  const double theta = prefs.theta();
  const double lambda = prefs.beta() * std::pow(k, 1.0 / theta);
  if (!(lambda < 1.0)) return std::nullopt;
  return std::pow(xi / (1.0 - lambda), theta);
}

std::string_view to_string(Stability s) {
  switch (s) {
    case Stability::Stable: return "stable";
    case Stability::Unstable: return "unstable";
    case Stability::Inconclusive: return "inconclusive";
  }
  return "unknown";
}

Stability classify_stability(const LambdaEstimate& estimate, std::optional<double> band) {
  const double width = band.value_or(2.0 * estimate.lambda_std_error);
  if (width < 0.0) throw DomainError("band must be nonnegative");
  if (estimate.lambda_p + width < 1.0) return Stability::Stable;
  if (estimate.lambda_p - width > 1.0) return Stability::Unstable;
  return Stability::Inconclusive;
}

}  // namespace rulab
