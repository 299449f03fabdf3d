#include "rulab/model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "rulab/errors.hpp"

namespace rulab {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kInvSqrt2Pi = 0.3989422804014327;

double normal_pdf(double y, double mean, double sd) {
  const double z = (y - mean) / sd;
  return kInvSqrt2Pi / sd * std::exp(-0.5 * z * z);
}

/// Mass of the standard normal on [-s, s].
double truncated_mass(double s) { return std::erf(s / std::numbers::sqrt2); }

/// Variance of the standard normal truncated to [-s, s].
double truncated_variance(double s) {
  return 1.0 - 2.0 * s * kInvSqrt2Pi * std::exp(-0.5 * s * s) / truncated_mass(s);
}

/// Reflects v back into [lo, hi] as many times as needed.
double fold(double v, double lo, double hi) {
  const double width = hi - lo;
  double t = std::fmod(v - lo, 2.0 * width);
  if (t < 0.0) t += 2.0 * width;
  return lo + (t <= width ? t : 2.0 * width - t);
}

/// Density at y in [lo, hi] of fold(center + scale * Z, lo, hi), Z standard
/// normal truncated to [-support, support]. Sums the density over all mirror
/// images of y.
double folded_truncated_density(double y, double center, double scale, double support, double lo,
                                double hi) {
  if (y < lo || y > hi) return 0.0;
  const double width = hi - lo;
  const double reach = support * scale;
  const double norm = 1.0 / (scale * truncated_mass(support));
  auto f = [&](double v) {
    const double z = (v - center) / scale;
    return std::abs(z) <= support ? norm * kInvSqrt2Pi * std::exp(-0.5 * z * z) : 0.0;
  };
  const int k_max = static_cast<int>(std::ceil(reach / (2.0 * width))) + 1;
  double total = 0.0;
  for (int k = -k_max; k <= k_max; ++k) {
    const double shift = 2.0 * k * width;
    total += f(y + shift);
    total += f(2.0 * lo - y + shift);
  }
  return total;
}

/// Normal probability of [a, b], evaluated on the tail side for accuracy.
double normal_mass(double a, double b, double mean, double sd) {
  if (!(b > a)) return 0.0;
  const double za = (a - mean) / (sd * std::numbers::sqrt2);
  const double zb = (b - mean) / (sd * std::numbers::sqrt2);
  if (za > 0.0) return 0.5 * (std::erfc(za) - std::erfc(zb));
  if (zb < 0.0) return 0.5 * (std::erfc(-zb) - std::erfc(-za));
  return 1.0 - 0.5 * std::erfc(-za) - 0.5 * std::erfc(zb);
}

/// Probability of [a, b] under the folded law of folded_truncated_density.
double folded_truncated_mass(double a, double b, double center, double scale, double support,
                             double lo, double hi) {
  a = std::max(a, lo);
  b = std::min(b, hi);
  if (!(b > a)) return 0.0;
  const double width = hi - lo;
  const double reach = support * scale;
  const double norm = 1.0 / truncated_mass(support);
  auto mass = [&](double u0, double u1) {
    return norm * normal_mass(std::max(u0, center - reach), std::min(u1, center + reach), center,
                              scale);
  };
  const int k_max = static_cast<int>(std::ceil(reach / (2.0 * width))) + 1;
  double total = 0.0;
  for (int k = -k_max; k <= k_max; ++k) {
    const double shift = 2.0 * k * width;
    total += mass(a + shift, b + shift);
    total += mass(2.0 * lo - b + shift, 2.0 * lo - a + shift);
  }
  return total;
}

int chain_index(const FiniteChain& chain, const StatePoint& x) {
  const long idx = std::lround(x(0));
  if (idx < 0 || idx >= chain.transition.rows()) {
    throw DomainError("finite-chain state index out of range: " + std::to_string(idx));
  }
  return static_cast<int>(idx);
}

double sv_scale(const ByStochVolTruncated& m, double v) {
  return std::sqrt(std::max(v, 0.0) + m.eps_floor);
}

/// Drift and Gaussian scale of the consumption shock term.
struct GrowthTerms {
  double drift;
  double scale;
};

GrowthTerms growth_terms(const ModelSpec& model, const StatePoint& x, const StatePoint& y) {
  return std::visit(
      Overloaded{
          [&](const FiniteChain& m) {
            return GrowthTerms{m.growth(chain_index(m, x), chain_index(m, y)), 0.0};
          },
          [&](const ByConstantVol& m) { return GrowthTerms{m.mu_c + x(0), m.sigma}; },
          [&](const ByStochVolTruncated& m) {
            return GrowthTerms{m.mu_c + x(0), sv_scale(m, x(1))};
          },
          [&](const MehraPrescott& m) {
            return GrowthTerms{std::log1p(m.g_rate) + (1.0 - m.a) + (m.a - 1.0) * x(0),
                               m.shock_scale};
          },
          [&](const Ssy& m) {
            return GrowthTerms{m.mu_c + x(2), m.phi_c * m.sigma_bar * std::exp(x(0))};
          },
      },
      model);
}

// One transition; updates x in place and returns the realized log growth.
// Draw order is fixed: consumption shock first, then state shocks.
double step(const FiniteChain& m, StatePoint& x, RngStream& rng) {
  const int i = chain_index(m, x);
  const double u = rng.uniform();
  const Eigen::Index n = m.transition.cols();
  double cumulative = 0.0;
  Eigen::Index j = n - 1;
  for (Eigen::Index k = 0; k < n; ++k) {
    cumulative += m.transition(i, k);
    if (u < cumulative) {
      j = k;
      break;
    }
  }
  // Guard against rounding in the cumulative sum landing on a zero-probability tail.
  while (m.transition(i, j) == 0.0 && j > 0) --j;
  x(0) = static_cast<double>(j);
  return m.growth(i, j);
}

double step(const ByConstantVol& m, StatePoint& x, RngStream& rng) {
  const double g = m.mu_c + x(0) + m.sigma * rng.normal();
  x(0) = m.rho * x(0) + m.sigma * rng.normal();
  return g;
}

double step(const ByStochVolTruncated& m, StatePoint& x, RngStream& rng) {
  const double s = sv_scale(m, x(1));
  const double g = m.mu_c + x(0) + s * rng.normal();
  const double z_next = m.rho * x(0) + m.phi_e * s * rng.normal();
  const double v_next =
      m.nu * x(1) + m.d_const + m.phi_sigma * rng.truncated_normal(m.shock_support);
  x(0) = z_next;
  x(1) = fold(v_next, 0.0, m.M_bound);
  return g;
}

double step(const MehraPrescott& m, StatePoint& x, RngStream& rng) {
  const double g = std::log1p(m.g_rate) + (1.0 - m.a) + (m.a - 1.0) * x(0) +
                   m.shock_scale * rng.normal();
  x(0) = (1.0 - m.a) + m.a * x(0) + m.shock_scale * rng.normal();
  return g;
}

double step(const Ssy& m, StatePoint& x, RngStream& rng) {
  const double g = m.mu_c + x(2) + m.phi_c * m.sigma_bar * std::exp(x(0)) * rng.normal();
  const double z_next = m.rho * x(2) + std::sqrt(1.0 - m.rho * m.rho) * m.phi_z * m.sigma_bar *
                                           std::exp(x(1)) * rng.normal();
  const double hc = m.rho_hc * x(0) + m.sigma_hc * rng.truncated_normal(m.shock_support);
  const double hz = m.rho_hz * x(1) + m.sigma_hz * rng.truncated_normal(m.shock_support);
  x(0) = fold(hc, -m.M_bound, m.M_bound);
  x(1) = fold(hz, -m.M_bound, m.M_bound);
  x(2) = z_next;
  return g;
}

StatePoint zero_state(int dim) { return StatePoint::Zero(dim); }

void require(bool ok, const std::string& what) {
  if (!ok) throw DomainError(what);
}

bool finite(double v) { return std::isfinite(v); }

void require_ar(double coef, const char* name) {
  require(finite(coef) && coef > -1.0 && coef < 1.0,
          std::string(name) + " must lie in (-1, 1) for stationarity");
}

void require_positive(double v, const char* name) {
  require(finite(v) && v > 0.0, std::string(name) + " must be positive");
}

}  // namespace

FiniteChain make_finite_chain(Eigen::MatrixXd transition, Eigen::MatrixXd growth) {
  const Eigen::Index n = transition.rows();
  require(n > 0 && transition.cols() == n, "transition matrix must be square and nonempty");
  // Solve pi^T (P - I) = 0 with the last equation replaced by sum(pi) = 1.
  Eigen::MatrixXd system = transition.transpose() - Eigen::MatrixXd::Identity(n, n);
  system.row(n - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs(n - 1) = 1.0;
  Eigen::VectorXd pi = system.fullPivLu().solve(rhs);
  pi = pi.cwiseMax(0.0);
  pi /= pi.sum();
  FiniteChain chain{std::move(transition), std::move(growth), std::move(pi)};
  validate(chain);
  return chain;
}

FiniteChain singleton_chain(double k, double gamma) {
  require(finite(k) && k > 0.0, "singleton kernel must be positive");
  require(gamma != 1.0, "gamma must differ from 1");
  return make_finite_chain(Eigen::MatrixXd::Ones(1, 1),
                           Eigen::MatrixXd::Constant(1, 1, std::log(k) / (1.0 - gamma)));
}

void validate(const ModelSpec& model) {
  std::visit(
      Overloaded{
          [](const FiniteChain& m) {
            const Eigen::Index n = m.transition.rows();
            require(n > 0 && m.transition.cols() == n, "transition matrix must be square");
            require(m.growth.rows() == n && m.growth.cols() == n,
                    "growth table must match the transition matrix");
            require(m.stationary.size() == n, "stationary vector has the wrong length");
            require(m.transition.allFinite() && m.growth.allFinite() && m.stationary.allFinite(),
                    "finite-chain entries must be finite");
            require((m.transition.array() >= 0.0).all(), "transition entries must be >= 0");
            require((m.stationary.array() >= 0.0).all(), "stationary entries must be >= 0");
            for (Eigen::Index i = 0; i < n; ++i) {
              require(std::abs(m.transition.row(i).sum() - 1.0) <= 1e-12,
                      "transition row " + std::to_string(i) + " does not sum to 1");
            }
            const Eigen::RowVectorXd drift =
                m.stationary.transpose() * m.transition - m.stationary.transpose();
            require(drift.cwiseAbs().maxCoeff() <= 1e-10,
                    "stationary vector is not invariant under the transition matrix");
          },
          [](const ByConstantVol& m) {
            require(finite(m.mu_c), "mu_c must be finite");
            require_ar(m.rho, "rho");
            require_positive(m.sigma, "sigma");
          },
          [](const ByStochVolTruncated& m) {
            require(finite(m.mu_c) && finite(m.d_const), "mu_c and d_const must be finite");
            require_ar(m.rho, "rho");
            require_ar(m.nu, "nu");
            require_positive(m.phi_e, "phi_e");
            require_positive(m.phi_sigma, "phi_sigma");
            require_positive(m.M_bound, "M_bound");
            require_positive(m.eps_floor, "eps_floor");
            require(finite(m.shock_support) && m.shock_support >= 0.5,
                    "shock_support must be at least 0.5");
          },
          [](const MehraPrescott& m) {
            require(finite(m.g_rate) && m.g_rate > -1.0, "g_rate must exceed -1");
            require(finite(m.a) && m.a > 0.0 && m.a <= 1.0, "a must lie in (0, 1]");
            require(finite(m.shock_scale) && m.shock_scale >= 0.0,
                    "shock_scale must be nonnegative");
          },
          [](const Ssy& m) {
            require(finite(m.mu_c), "mu_c must be finite");
            require_ar(m.rho, "rho");
            require_ar(m.rho_hc, "rho_hc");
            require_ar(m.rho_hz, "rho_hz");
            require_positive(m.phi_c, "phi_c");
            require_positive(m.phi_z, "phi_z");
            require_positive(m.sigma_bar, "sigma_bar");
            require_positive(m.sigma_hc, "sigma_hc");
            require_positive(m.sigma_hz, "sigma_hz");
            require_positive(m.M_bound, "M_bound");
            require(finite(m.shock_support) && m.shock_support >= 0.5,
                    "shock_support must be at least 0.5");
          },
      },
      model);
}

std::string_view model_name(const ModelSpec& model) {
  return std::visit(Overloaded{
                        [](const FiniteChain&) { return std::string_view("finite_chain"); },
                        [](const ByConstantVol&) { return std::string_view("by_constant_vol"); },
                        [](const ByStochVolTruncated&) { return std::string_view("by_stoch_vol"); },
                        [](const MehraPrescott&) { return std::string_view("mehra_prescott"); },
                        [](const Ssy&) { return std::string_view("ssy"); },
                    },
                    model);
}

int state_dim(const ModelSpec& model) {
  return std::visit(Overloaded{
                        [](const FiniteChain&) { return 1; },
                        [](const ByConstantVol&) { return 1; },
                        [](const ByStochVolTruncated&) { return 2; },
                        [](const MehraPrescott&) { return 1; },
                        [](const Ssy&) { return 3; },
                    },
                    model);
}

std::vector<std::pair<double, double>> state_support(const ModelSpec& model) {
  using Bounds = std::vector<std::pair<double, double>>;
  return std::visit(
      Overloaded{
          [](const FiniteChain& m) {
            return Bounds{{0.0, static_cast<double>(m.transition.rows() - 1)}};
          },
          [](const ByConstantVol&) { return Bounds{{-kInf, kInf}}; },
          [](const ByStochVolTruncated& m) { return Bounds{{-kInf, kInf}, {0.0, m.M_bound}}; },
          [](const MehraPrescott&) { return Bounds{{-kInf, kInf}}; },
          [](const Ssy& m) {
            return Bounds{{-m.M_bound, m.M_bound}, {-m.M_bound, m.M_bound}, {-kInf, kInf}};
          },
      },
      model);
}

double kappa(const ModelSpec& model, const StatePoint& x, const StatePoint& y, double eps) {
  const GrowthTerms terms = growth_terms(model, x, y);
  return terms.drift + terms.scale * eps;
}

double transition_density(const ModelSpec& model, const StatePoint& x, const StatePoint& y) {
  return std::visit(
      Overloaded{
          [&](const FiniteChain& m) {
            return m.transition(chain_index(m, x), chain_index(m, y));
          },
          [&](const ByConstantVol& m) { return normal_pdf(y(0), m.rho * x(0), m.sigma); },
          [&](const ByStochVolTruncated& m) {
            const double z_part = normal_pdf(y(0), m.rho * x(0), m.phi_e * sv_scale(m, x(1)));
            const double v_part =
                folded_truncated_density(y(1), m.nu * x(1) + m.d_const, m.phi_sigma,
                                         m.shock_support, 0.0, m.M_bound);
            return z_part * v_part;
          },
          [&](const MehraPrescott& m) {
            if (m.shock_scale == 0.0) {
              throw DomainError("mehra_prescott with zero shocks has no transition density");
            }
            return normal_pdf(y(0), (1.0 - m.a) + m.a * x(0), m.shock_scale);
          },
          [&](const Ssy& m) {
            const double hc = folded_truncated_density(y(0), m.rho_hc * x(0), m.sigma_hc,
                                                       m.shock_support, -m.M_bound, m.M_bound);
            const double hz = folded_truncated_density(y(1), m.rho_hz * x(1), m.sigma_hz,
                                                       m.shock_support, -m.M_bound, m.M_bound);
            const double z_sd =
                std::sqrt(1.0 - m.rho * m.rho) * m.phi_z * m.sigma_bar * std::exp(x(1));
            return hc * hz * normal_pdf(y(2), m.rho * x(2), z_sd);
          },
      },
      model);
}

double transition_cell_mass(const ModelSpec& model, const StatePoint& x, const StatePoint& lo,
                            const StatePoint& hi) {
  return std::visit(
      Overloaded{
          [&](const FiniteChain& m) {
            const int i = chain_index(m, x);
            double total = 0.0;
            for (Eigen::Index j = 0; j < m.transition.cols(); ++j) {
              const double s = static_cast<double>(j);
              if (s >= lo(0) && s <= hi(0)) total += m.transition(i, j);
            }
            return total;
          },
          [&](const ByConstantVol& m) { return normal_mass(lo(0), hi(0), m.rho * x(0), m.sigma); },
          [&](const ByStochVolTruncated& m) {
            const double z_part =
                normal_mass(lo(0), hi(0), m.rho * x(0), m.phi_e * sv_scale(m, x(1)));
            if (z_part == 0.0) return 0.0;
            return z_part * folded_truncated_mass(lo(1), hi(1), m.nu * x(1) + m.d_const,
                                                  m.phi_sigma, m.shock_support, 0.0, m.M_bound);
          },
          [&](const MehraPrescott& m) {
            if (m.shock_scale == 0.0) {
              throw DomainError("mehra_prescott with zero shocks has no transition density");
            }
            return normal_mass(lo(0), hi(0), (1.0 - m.a) + m.a * x(0), m.shock_scale);
          },
          [&](const Ssy& m) {
            const double hc = folded_truncated_mass(lo(0), hi(0), m.rho_hc * x(0), m.sigma_hc,
                                                    m.shock_support, -m.M_bound, m.M_bound);
            if (hc == 0.0) return 0.0;
            const double hz = folded_truncated_mass(lo(1), hi(1), m.rho_hz * x(1), m.sigma_hz,
                                                    m.shock_support, -m.M_bound, m.M_bound);
            if (hz == 0.0) return 0.0;
            const double z_sd =
                std::sqrt(1.0 - m.rho * m.rho) * m.phi_z * m.sigma_bar * std::exp(x(1));
            return hc * hz * normal_mass(lo(2), hi(2), m.rho * x(2), z_sd);
          },
      },
      model);
}

double conditional_growth_mgf(const ModelSpec& model, const PreferenceSpec& prefs,
                              const StatePoint& x, const StatePoint& y) {
  const GrowthTerms terms = growth_terms(model, x, y);
  const double a = 1.0 - prefs.gamma();
  return std::exp(a * terms.drift + 0.5 * a * a * terms.scale * terms.scale);
}

StatePoint sample_stationary(const ModelSpec& model, RngStream& rng) {
  return std::visit(
      Overloaded{
          [&](const FiniteChain& m) {
            const double u = rng.uniform();
            double cumulative = 0.0;
            Eigen::Index state = m.stationary.size() - 1;
            for (Eigen::Index k = 0; k < m.stationary.size(); ++k) {
              cumulative += m.stationary(k);
              if (u < cumulative) {
                state = k;
                break;
              }
            }
            StatePoint x(1);
            x(0) = static_cast<double>(state);
            return x;
          },
          [&](const ByConstantVol& m) {
            StatePoint x(1);
            x(0) = m.sigma / std::sqrt(1.0 - m.rho * m.rho) * rng.normal();
            return x;
          },
          [&](const MehraPrescott& m) {
            StatePoint x(1);
            // With a = 1 the state never enters growth; any start is equivalent.
            x(0) = m.a < 1.0 ? 1.0 + m.shock_scale / std::sqrt(1.0 - m.a * m.a) * rng.normal()
                             : 1.0;
            return x;
          },
          [&](const auto& m) {
            StatePoint x = zero_state(state_dim(m));
            for (int t = 0; t < kStationaryBurnIn; ++t) step(m, x, rng);
            return x;
          },
      },
      model);
}

GrowthPath simulate_growth(const ModelSpec& model, const StatePoint& x0, int n, RngStream& rng) {
  if (n < 1) throw DomainError("path length must be at least 1");
  return std::visit(
      [&](const auto& m) {
        StatePoint x = x0;
        const int half = n / 2;
        double total = 0.0;
        double at_half = 0.0;
        for (int t = 0; t < n; ++t) {
          if (t == half) at_half = total;
          total += step(m, x, rng);
        }
        return GrowthPath{total, at_half, x};
      },
      model);
}

std::vector<std::pair<double, double>> stationary_moments(const ModelSpec& model) {
  using Moments = std::vector<std::pair<double, double>>;
  return std::visit(
      Overloaded{
          [](const FiniteChain& m) {
            const Eigen::VectorXd idx =
                Eigen::VectorXd::LinSpaced(m.stationary.size(), 0.0, m.stationary.size() - 1.0);
            const double mean = m.stationary.dot(idx);
            const double var = m.stationary.dot((idx.array() - mean).square().matrix());
            return Moments{{mean, std::sqrt(var)}};
          },
          [](const ByConstantVol& m) {
            return Moments{{0.0, m.sigma / std::sqrt(1.0 - m.rho * m.rho)}};
          },
          [](const ByStochVolTruncated& m) {
            // Gaussian approximations; the folded law has no closed form.
            const double v_mean = std::clamp(m.d_const / (1.0 - m.nu), 0.0, m.M_bound);
            const double v_sd = m.phi_sigma * std::sqrt(truncated_variance(m.shock_support)) /
                                std::sqrt(1.0 - m.nu * m.nu);
            const double z_sd =
                m.phi_e * std::sqrt(v_mean + m.eps_floor) / std::sqrt(1.0 - m.rho * m.rho);
            return Moments{{0.0, z_sd}, {v_mean, v_sd}};
          },
          [](const MehraPrescott& m) {
            if (m.a >= 1.0) {
              throw DomainError("mehra_prescott with a = 1 has no stationary distribution");
            }
            return Moments{{1.0, m.shock_scale / std::sqrt(1.0 - m.a * m.a)}};
          },
          [](const Ssy& m) {
            const double tv = truncated_variance(m.shock_support);
            const double var_hc = m.sigma_hc * m.sigma_hc * tv / (1.0 - m.rho_hc * m.rho_hc);
            const double var_hz = m.sigma_hz * m.sigma_hz * tv / (1.0 - m.rho_hz * m.rho_hz);
            // E[exp(2 h_z)] under a Gaussian approximation of h_z.
            const double z_sd = m.phi_z * m.sigma_bar * std::exp(var_hz);
            return Moments{{0.0, std::sqrt(var_hc)}, {0.0, std::sqrt(var_hz)}, {0.0, z_sd}};
          },
      },
      model);
}

std::optional<double> stationary_density(const ModelSpec& model, const StatePoint& x) {
  return std::visit(Overloaded{
                        [&](const FiniteChain& m) -> std::optional<double> {
                          return m.stationary(chain_index(m, x));
                        },
                        [&](const ByConstantVol& m) -> std::optional<double> {
                          return normal_pdf(x(0), 0.0, m.sigma / std::sqrt(1.0 - m.rho * m.rho));
                        },
                        [&](const MehraPrescott& m) -> std::optional<double> {
                          if (m.a >= 1.0 || m.shock_scale == 0.0) return std::nullopt;
                          return normal_pdf(x(0), 1.0,
                                            m.shock_scale / std::sqrt(1.0 - m.a * m.a));
                        },
                        [](const auto&) -> std::optional<double> { return std::nullopt; },
                    },
                    model);
}

}  // namespace rulab
