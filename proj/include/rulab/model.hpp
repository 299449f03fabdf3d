#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "rulab/preferences.hpp"
#include "rulab/rng.hpp"

namespace rulab {

/// Exogenous state. At most three coordinates, stored inline.
using StatePoint = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 3, 1>;

/// Finite Markov chain with deterministic log growth per transition. The
/// state is the chain index stored as a single coordinate.
struct FiniteChain {
  Eigen::MatrixXd transition;  ///< row-stochastic
  Eigen::MatrixXd growth;      ///< growth(i, j) = ln(C'/C) on the move i -> j
  Eigen::VectorXd stationary;  ///< left Perron vector of `transition`
};

/// Bansal-Yaron with constant volatility; state z.
///   ln(C'/C) = mu_c + z + sigma * eps,   z' = rho * z + sigma * eta
struct ByConstantVol {
  double mu_c;
  double rho;
  double sigma;
};

/// Bansal-Yaron with bounded stochastic volatility; state (z, v), v = sigma^2.
///   s(v)     = sqrt(max(v, 0) + eps_floor)
///   ln(C'/C) = mu_c + z + s(v) * eps
///   z'       = rho * z + phi_e * s(v) * eta_z
///   v'       = fold(nu * v + d_const + phi_sigma * eta_v) into [0, M_bound]
/// with eta_v standard normal truncated to [-shock_support, shock_support].
struct ByStochVolTruncated {
  double mu_c;
  double rho;
  double phi_e;
  double nu;
  double d_const;
  double phi_sigma;
  double M_bound;
  double eps_floor = 1e-10;
  double shock_support = 3.0;
};

/// Mehra-Prescott / Epstein-Zin permanent-innovation model; state xi.
///   ln(C'/C) = ln(1+g) + (1-a) + (a-1) * xi + shock_scale * eps
///   xi'      = (1-a) + a * xi + shock_scale * u
struct MehraPrescott {
  double g_rate;
  double a;
  double shock_scale = 1.0;
};

/// Schorfheide-Song-Yaron; state (h_c, h_z, z).
///   ln(C'/C) = mu_c + z + phi_c * sigma_bar * exp(h_c) * eps
///   z'       = rho * z + sqrt(1 - rho^2) * phi_z * sigma_bar * exp(h_z) * eta_z
///   h_i'     = fold(rho_hi * h_i + sigma_hi * eta_hi) into [-M_bound, M_bound]
/// with eta_hi standard normal truncated to [-shock_support, shock_support].
struct Ssy {
  double mu_c;
  double rho;
  double phi_c;
  double phi_z;
  double sigma_bar;
  double rho_hc;
  double rho_hz;
  double sigma_hc;
  double sigma_hz;
  double M_bound;
  double shock_support = 3.0;
};

using ModelSpec = std::variant<FiniteChain, ByConstantVol, ByStochVolTruncated, MehraPrescott, Ssy>;

/// Builds a chain, solving for the stationary vector. Throws DomainError on
/// non-stochastic input.
FiniteChain make_finite_chain(Eigen::MatrixXd transition, Eigen::MatrixXd growth);

/// One-state chain whose valuation kernel equals k for risk aversion gamma.
FiniteChain singleton_chain(double k, double gamma);

/// Throws DomainError if the model violates its parameter invariants.
void validate(const ModelSpec& model);

std::string_view model_name(const ModelSpec& model);
int state_dim(const ModelSpec& model);

/// Per-coordinate support; infinite bounds for unbounded coordinates.
std::vector<std::pair<double, double>> state_support(const ModelSpec& model);

double kappa(const ModelSpec& model, const StatePoint& x, const StatePoint& y, double eps);

/// Density (probability for FiniteChain) of moving from x to y.
double transition_density(const ModelSpec& model, const StatePoint& x, const StatePoint& y);

/// Probability that the next state lands in the box [lo, hi] given x, one
/// interval per coordinate (infinite ends allowed). FiniteChain treats each
/// interval as a set of state indices.
double transition_cell_mass(const ModelSpec& model, const StatePoint& x, const StatePoint& lo,
                            const StatePoint& hi);

/// Closed-form shock integral of exp((1-gamma) kappa(x, y, eps)) over eps ~ N(0,1).
double conditional_growth_mgf(const ModelSpec& model, const PreferenceSpec& prefs,
                              const StatePoint& x, const StatePoint& y);

/// Burn-in length used by sample_stationary for models without a closed-form law.
inline constexpr int kStationaryBurnIn = 10'000;

StatePoint sample_stationary(const ModelSpec& model, RngStream& rng);

struct GrowthPath {
  double log_growth;    ///< ln(C_n / C_0)
  double log_growth_half;  ///< ln(C_{n/2} / C_0), integer division
  StatePoint x_final;
};

/// Simulates one path of length n from x0.
GrowthPath simulate_growth(const ModelSpec& model, const StatePoint& x0, int n, RngStream& rng);

/// Stationary mean and standard deviation per coordinate. Throws DomainError
/// when the model has no stationary law (Mehra-Prescott with a = 1).
std::vector<std::pair<double, double>> stationary_moments(const ModelSpec& model);

/// Closed-form stationary density at x when one exists, otherwise nullopt.
std::optional<double> stationary_density(const ModelSpec& model, const StatePoint& x);

}  // namespace rulab
