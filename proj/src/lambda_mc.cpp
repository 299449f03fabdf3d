#include "rulab/lambda_mc.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "rulab/errors.hpp"

namespace rulab {

namespace {

/// Streaming log-sum-exp with a fixed accumulation order.
class LogSumExp {
public:
  void add(double a) {
    if (a == -std::numeric_limits<double>::infinity()) return;
    if (a > max_) {
      sum_ = sum_ * std::exp(max_ - a) + 1.0;
      max_ = a;
    } else {
      sum_ += std::exp(a - max_);
    }
  }
  /// ln of the mean; exact when all terms are equal.
  double log_mean(double count) const { return max_ + std::log(sum_ / count); }

private:
  double max_ = -std::numeric_limits<double>::infinity();
  double sum_ = 0.0;
};

double log_mean_exp(const std::vector<double>& a, std::size_t begin, std::size_t end,
                    double scale) {
  LogSumExp acc;
  for (std::size_t i = begin; i < end; ++i) acc.add(scale * a[i]);
  return acc.log_mean(static_cast<double>(end - begin));
}

int thread_count(int requested) { return requested > 0 ? requested : omp_get_max_threads(); }

void check_common(const PreferenceSpec& prefs, int n, int m) {
  if (n < 1 || m < 1) throw DomainError("n and m must be at least 1");
  if (prefs.theta() == 0.0) throw DomainError("theta must be nonzero");
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// Turns per-state log h values into rho_hat, lambda and their batch-means
/// standard errors. rho_hat = (mean exp(power * log_h))^(1/(n p)).
void summarize(const std::vector<double>& log_h, const std::vector<double>& log_h_half,
               double power, double p, int n, const PreferenceSpec& prefs, int batches,
               LambdaEstimate& est) {
  const std::size_t m = log_h.size();
  const double root = 1.0 / (static_cast<double>(n) * p);
  const double log_rho = log_mean_exp(log_h, 0, m, power) * root;
  est.rho_hat = std::exp(log_rho);
  est.lambda_p = prefs.beta() * std::exp(log_rho / prefs.theta());
  const int half = n / 2;
  est.rho_hat_half =
      half >= 1 ? std::exp(log_mean_exp(log_h_half, 0, m, power) / (half * p)) : est.rho_hat;

  const std::size_t b = std::min<std::size_t>(std::max(batches, 1), m);
  std::vector<double> rho_b, lambda_b;
  for (std::size_t k = 0; k < b; ++k) {
    const std::size_t lo = k * m / b;
    const std::size_t hi = (k + 1) * m / b;
    const double lr = log_mean_exp(log_h, lo, hi, power) * root;
    rho_b.push_back(std::exp(lr));
    lambda_b.push_back(prefs.beta() * std::exp(lr / prefs.theta()));
  }
  const double sqrt_b = std::sqrt(static_cast<double>(b));
  est.std_error = sample_sd(rho_b) / sqrt_b;
  est.lambda_std_error = sample_sd(lambda_b) / sqrt_b;
}

}  // namespace

StatePoint draw_initial_state(const ModelSpec& model, const InitLaw& law, RngStream& rng) {
  if (law.kind == InitLaw::Kind::Stationary) return sample_stationary(model, rng);
  if (!(law.hi > law.lo)) throw DomainError("uniform initial law needs hi > lo");
  if (const auto* chain = std::get_if<FiniteChain>(&model)) {
    StatePoint x(1);
    const double n = static_cast<double>(chain->transition.rows());
    x(0) = std::min(std::floor(rng.uniform() * n), n - 1.0);
    return x;
  }
  StatePoint x = sample_stationary(model, rng);
  const auto support = state_support(model);
  for (int k = 0; k < x.size(); ++k) {
    if (!std::isfinite(support[k].first) || !std::isfinite(support[k].second)) {
      x(k) = law.lo + (law.hi - law.lo) * rng.uniform();
    }
  }
  return x;
}

double estimate_log_h(const ModelSpec& model, const PreferenceSpec& prefs, const StatePoint& x,
                      int n, int J, RngStream& rng, bool* log_domain) {
  if (n < 1 || J < 1) throw DomainError("n and J must be at least 1");
  const double a = 1.0 - prefs.gamma();
  LogSumExp acc;
  bool flagged = false;
  for (int j = 0; j < J; ++j) {
    const double exponent = a * simulate_growth(model, x, n, rng).log_growth;
    flagged = flagged || std::abs(exponent) > kLogDomainThreshold;
    acc.add(exponent);
  }
  if (log_domain) *log_domain = flagged;
  return acc.log_mean(static_cast<double>(J));
}

double estimate_h(const ModelSpec& model, const PreferenceSpec& prefs, const StatePoint& x, int n,
                  int J, RngStream& rng, bool* log_domain) {
  const double h = std::exp(estimate_log_h(model, prefs, x, n, J, rng, log_domain));
  if (!std::isfinite(h) || h == 0.0) {
    throw OverflowError("h(x) is outside the double range; use the log-domain estimate");
  }
  return h;
}

LambdaEstimate estimate_lambda_p(const ModelSpec& model, const PreferenceSpec& prefs,
                                 const EstimationOptions& options) {
  validate(model);
  check_common(prefs, options.n, options.m);
  if (options.J < 1) throw DomainError("J must be at least 1");
  if (!(options.p >= 1.0)) throw DomainError("p must be at least 1");
  if (options.init.kind == InitLaw::Kind::Uniform && !(options.init.hi > options.init.lo)) {
    throw DomainError("uniform initial law needs hi > lo");
  }

  const int m = options.m;
  const int J = options.J;
  const int n = options.n;
  const double a = 1.0 - prefs.gamma();
  std::vector<double> log_h(m), log_h_half(m);
  std::vector<char> flagged(m, 0);

#pragma omp parallel for schedule(dynamic) num_threads(thread_count(options.threads))
  for (int i = 0; i < m; ++i) {
    RngStream init(options.seed, kInitStreamBase + static_cast<std::uint64_t>(i));
    const StatePoint x = draw_initial_state(model, options.init, init);
    LogSumExp full, half;
    for (int j = 0; j < J; ++j) {
      RngStream path(options.seed,
                     static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(J) + j);
      const GrowthPath g = simulate_growth(model, x, n, path);
      const double exponent = a * g.log_growth;
      if (std::abs(exponent) > kLogDomainThreshold) flagged[i] = 1;
      full.add(exponent);
      half.add(a * g.log_growth_half);
    }
    log_h[i] = full.log_mean(J);
    log_h_half[i] = half.log_mean(J);
  }

  LambdaEstimate est;
  est.p = options.p;
  est.n = n;
  est.m = m;
  est.J = J;
  est.seed = options.seed;
  est.log_domain = std::any_of(flagged.begin(), flagged.end(), [](char f) { return f != 0; });
  const double power = options.literal_formula ? 1.0 : options.p;
  summarize(log_h, log_h_half, power, options.p, n, prefs, options.batches, est);
  if (!std::isfinite(est.lambda_p) || !std::isfinite(est.rho_hat)) {
    throw OverflowError("lambda estimate is not finite");
  }
  return est;
}

LambdaEstimate estimate_lambda_1_direct(const ModelSpec& model, const PreferenceSpec& prefs,
                                        int n, int m, std::uint64_t seed, int threads,
                                        int batches) {
  validate(model);
  check_common(prefs, n, m);
  const double a = 1.0 - prefs.gamma();
  std::vector<double> log_h(m), log_h_half(m);
  std::vector<char> flagged(m, 0);

#pragma omp parallel for schedule(dynamic) num_threads(thread_count(threads))
  for (int i = 0; i < m; ++i) {
    RngStream rng(seed, kDirectStreamBase + static_cast<std::uint64_t>(i));
    const StatePoint x = sample_stationary(model, rng);
    const GrowthPath g = simulate_growth(model, x, n, rng);
    log_h[i] = a * g.log_growth;
    log_h_half[i] = a * g.log_growth_half;
    if (std::abs(log_h[i]) > kLogDomainThreshold) flagged[i] = 1;
  }

  LambdaEstimate est;
  est.p = 1.0;
  est.n = n;
  est.m = m;
  est.J = 1;
  est.seed = seed;
  est.log_domain = std::any_of(flagged.begin(), flagged.end(), [](char f) { return f != 0; });
  summarize(log_h, log_h_half, 1.0, 1.0, n, prefs, batches, est);
  if (!std::isfinite(est.lambda_p) || !std::isfinite(est.rho_hat)) {
    throw OverflowError("lambda estimate is not finite");
  }
  return est;
}

}  // namespace rulab
