#include <doctest.h>

#include <cmath>
#include <random>

#include "rulab/errors.hpp"
#include "rulab/lambda_mc.hpp"
#include "test_support.hpp"

using namespace rulab;
using rulab::testing::point;

namespace {

/// Exact first and second moments of exp((1-gamma) G_n) from state i.
std::pair<double, double> chain_moments(const FiniteChain& c, double gamma, int n, int i) {
  const Eigen::MatrixXd k1 = rulab::testing::chain_valuation_matrix(c, gamma);
  const Eigen::MatrixXd k2 =
      (c.transition.array() * (2.0 * (1.0 - gamma) * c.growth.array()).exp()).matrix();
  Eigen::VectorXd v1 = Eigen::VectorXd::Ones(c.transition.rows()), v2 = v1;
  for (int t = 0; t < n; ++t) {
    v1 = k1 * v1;
    v2 = k2 * v2;
  }
  return {v1(i), v2(i)};
}

EstimationOptions small_options(std::uint64_t seed) {
  EstimationOptions o;
  o.p = 2.0;
  o.n = 40;
  o.m = 200;
  o.J = 50;
  o.seed = seed;
  return o;
}

}  // namespace

TEST_CASE("estimate_h against matrix powers") {
  std::mt19937_64 gen(31);
  const auto prefs = make_preferences(0.96, 3, 1.5);
  const FiniteChain chain = rulab::testing::random_chain(gen, 4, 0.05);
  const int n = 10, J = 100000;
  for (int i = 0; i < 4; ++i) {
    RngStream rng(5, i);
    const double h = estimate_h(chain, prefs, point({double(i)}), n, J, rng);
    const auto [m1, m2] = chain_moments(chain, 3.0, n, i);
    const double se = std::sqrt((m2 - m1 * m1) / J);
    CHECK(std::abs(h - m1) <= 3 * se);
  }
}

TEST_CASE("estimate_h on a deterministic path") {
  const auto prefs = make_preferences(0.99, 5, 1.5);
  const ModelSpec mp = MehraPrescott{0.018, 1.0, 0.0};
  RngStream rng(1, 0);
  bool flagged = true;
  CHECK(estimate_h(mp, prefs, point({1.0}), 25, 7, rng, &flagged) ==
        doctest::Approx(std::exp(-4.0 * 25 * std::log(1.018))).epsilon(1e-13));
  CHECK_FALSE(flagged);

  // heavy exponents stay finite in the log domain; h itself underflows
  const ModelSpec fast = MehraPrescott{std::exp(1.0) - 1.0, 1.0, 0.0};
  RngStream rng2(1, 1);
  CHECK(estimate_log_h(fast, prefs, point({1.0}), 1000, 3, rng2, &flagged) ==
        doctest::Approx(-4000.0).epsilon(1e-12));
  CHECK(flagged);
  CHECK_THROWS_AS(estimate_h(fast, prefs, point({1.0}), 1000, 3, rng2), OverflowError);
  CHECK_THROWS_AS(estimate_h(fast, prefs, point({1.0}), 0, 3, rng2), DomainError);
}

TEST_CASE("estimate_lambda_p components") {
  const auto prefs = make_preferences(0.998, 10, 1.5);
  const LambdaEstimate est =
      estimate_lambda_p(rulab::testing::table1_stoch_vol(), prefs, small_options(3));
  CHECK(est.rho_hat > 0.0);
  CHECK(est.lambda_p > 0.0);
  CHECK(est.std_error >= 0.0);
  CHECK(est.lambda_std_error >= 0.0);
  CHECK(est.lambda_p == doctest::Approx(0.998 * std::pow(est.rho_hat, 1.0 / prefs.theta())).epsilon(1e-14));
  CHECK(est.n == 40);
  CHECK(est.m == 200);
  CHECK(est.J == 50);
  CHECK(est.p == 2.0);
  CHECK(est.seed == 3);
  CHECK_FALSE(est.log_domain);
}

TEST_CASE("scalar collapse") {
  for (double k : {0.7, 1.3}) {
    const auto prefs = make_preferences(0.95, 2, 2);
    const ModelSpec chain = singleton_chain(k, 2.0);
    EstimationOptions o = small_options(4);
    o.m = 20;
    o.J = 5;
    const LambdaEstimate est = estimate_lambda_p(chain, prefs, o);
    CHECK(est.rho_hat == doctest::Approx(k).epsilon(1e-12));
    CHECK(est.rho_hat_half == doctest::Approx(k).epsilon(1e-12));
    CHECK(est.lambda_p == doctest::Approx(0.95 * std::pow(k, -0.5)).epsilon(1e-12));
    CHECK(est.std_error < 1e-12);
  }
}

TEST_CASE("beta linearity and p monotonicity on a fixed sample") {
  const auto sv = rulab::testing::table1_stoch_vol();
  const auto prefs = make_preferences(0.998, 10, 1.5);
  const EstimationOptions o = small_options(5);
  const LambdaEstimate base = estimate_lambda_p(sv, prefs, o);
  const LambdaEstimate scaled = estimate_lambda_p(sv, prefs.with_beta(0.998 * 0.9), o);
  CHECK(scaled.rho_hat == base.rho_hat);
  CHECK(scaled.lambda_p == doctest::Approx(0.9 * base.lambda_p).epsilon(1e-15));

  EstimationOptions o1 = o;
  o1.p = 1.0;
  EstimationOptions o4 = o;
  o4.p = 4.0;
  const double r1 = estimate_lambda_p(sv, prefs, o1).rho_hat;
  const double r4 = estimate_lambda_p(sv, prefs, o4).rho_hat;
  CHECK(base.rho_hat > r1);
  CHECK(r4 > base.rho_hat);
}

TEST_CASE("seeded determinism across thread counts") {
  const auto prefs = make_preferences(0.998, 10, 1.5);
  for (const ModelSpec& model :
       {ModelSpec{rulab::testing::table1_stoch_vol()}, ModelSpec{rulab::testing::ssy_fixture()}}) {
    EstimationOptions o = small_options(6);
    o.m = 64;
    o.threads = 1;
    const LambdaEstimate one = estimate_lambda_p(model, prefs, o);
    o.threads = 8;
    const LambdaEstimate eight = estimate_lambda_p(model, prefs, o);
    CHECK(one.rho_hat == eight.rho_hat);
    CHECK(one.lambda_p == eight.lambda_p);
    CHECK(one.std_error == eight.std_error);
    CHECK(one.rho_hat_half == eight.rho_hat_half);

    const LambdaEstimate d1 = estimate_lambda_1_direct(model, prefs, 40, 64, 6, 1);
    const LambdaEstimate d8 = estimate_lambda_1_direct(model, prefs, 40, 64, 6, 8);
    CHECK(d1.rho_hat == d8.rho_hat);
    CHECK(d1.std_error == d8.std_error);
  }
  EstimationOptions o = small_options(6);
  const LambdaEstimate other =
      estimate_lambda_p(rulab::testing::table1_stoch_vol(), prefs, (o.seed = 7, o));
  o.seed = 6;
  CHECK(other.rho_hat != estimate_lambda_p(rulab::testing::table1_stoch_vol(), prefs, o).rho_hat);
}

TEST_CASE("literal formula integrates h before the root") {
  const auto prefs = make_preferences(0.998, 10, 1.5);
  const auto sv = rulab::testing::table1_stoch_vol();
  EstimationOptions literal = small_options(8);
  literal.literal_formula = true;
  EstimationOptions p1 = small_options(8);
  p1.p = 1.0;
  const LambdaEstimate lit = estimate_lambda_p(sv, prefs, literal);
  const LambdaEstimate one = estimate_lambda_p(sv, prefs, p1);
  CHECK(lit.rho_hat * lit.rho_hat == doctest::Approx(one.rho_hat).epsilon(1e-13));
  CHECK(lit.rho_hat != estimate_lambda_p(sv, prefs, small_options(8)).rho_hat);
}

TEST_CASE("state-independent growth makes p irrelevant") {
  // With rho = 0 the current state still enters the first step, giving a
  // p-gap of (p-1)(1-gamma)^2 sigma^2 / (2n) in log rho_hat; at gamma = 4 and
  // n = 200 that is well inside the Monte Carlo error. Mehra-Prescott with
  // a = 1 has no state dependence at all.
  const auto prefs = make_preferences(0.998, 4, 1.5);
  for (const ModelSpec& model :
       {ModelSpec{ByConstantVol{0.0015, 0.0, 0.0078}}, ModelSpec{MehraPrescott{0.018, 1.0, 0.0078}}}) {
    EstimationOptions o = small_options(9);
    o.n = 200;
    o.m = 400;
    o.J = 100;
    o.p = 1.0;
    const LambdaEstimate l1 = estimate_lambda_p(model, prefs, o);
    for (double p : {2.0, 4.0}) {
      o.p = p;
      const LambdaEstimate lp = estimate_lambda_p(model, prefs, o);
      const double se = std::hypot(l1.lambda_std_error, lp.lambda_std_error);
      CHECK_MESSAGE(std::abs(lp.lambda_p - l1.lambda_p) <= 3 * se, model_name(model), " p=", p);
    }
  }
}

TEST_CASE("direct p = 1 estimator") {
  SUBCASE("deterministic model matches the nested estimator exactly") {
    const auto prefs = make_preferences(0.99, 5, 1.5);
    const ModelSpec mp = MehraPrescott{0.018, 1.0, 0.0};
    EstimationOptions o = small_options(10);
    o.p = 1.0;
    o.J = 1;
    const LambdaEstimate nested = estimate_lambda_p(mp, prefs, o);
    const LambdaEstimate direct = estimate_lambda_1_direct(mp, prefs, o.n, o.m, 10);
    CHECK(nested.rho_hat == direct.rho_hat);
    CHECK(nested.lambda_p == direct.lambda_p);
    CHECK(direct.rho_hat == doctest::Approx(std::pow(1.018, -4.0)).epsilon(1e-13));
  }

  SUBCASE("finite chain against the dense eigensolve") {
    std::mt19937_64 gen(32);
    const auto prefs = make_preferences(0.96, 2, 2);
    for (int k = 0; k < 3; ++k) {
      const FiniteChain chain = rulab::testing::random_chain(gen, 3 + k, 0.005);
      const double rho =
          rulab::testing::dense_spectral_radius(rulab::testing::chain_valuation_matrix(chain, 2.0));
      const LambdaEstimate est = estimate_lambda_1_direct(chain, prefs, 50, 20000, 11 + k);
      CHECK(std::abs(est.lambda_p - 0.96 * std::pow(rho, 1.0 / prefs.theta())) <=
            3 * est.lambda_std_error);
      CHECK(std::abs(est.rho_hat - rho) <= 3 * est.std_error);
    }
  }

  SUBCASE("agrees with the nested estimator at J = 1") {
    const auto prefs = make_preferences(0.998, 10, 1.5);
    const auto sv = rulab::testing::table1_stoch_vol();
    EstimationOptions o = small_options(12);
    o.p = 1.0;
    o.J = 1;
    o.m = 2000;
    const LambdaEstimate nested = estimate_lambda_p(sv, prefs, o);
    const LambdaEstimate direct = estimate_lambda_1_direct(sv, prefs, o.n, o.m, 13);
    CHECK(std::abs(nested.lambda_p - direct.lambda_p) <=
          3 * std::hypot(nested.lambda_std_error, direct.lambda_std_error));
  }
}

TEST_CASE("finite-chain oracle consistency of rho_hat") {
  std::mt19937_64 gen(33);
  const auto prefs = make_preferences(0.96, 2, 2);
  const FiniteChain chain = rulab::testing::random_chain(gen, 5, 0.005);
  const double rho =
      rulab::testing::dense_spectral_radius(rulab::testing::chain_valuation_matrix(chain, 2.0));
  EstimationOptions o;
  o.p = 2.0;
  o.n = 50;
  o.m = 1000;
  o.J = 1000;
  o.seed = 14;
  const LambdaEstimate est = estimate_lambda_p(chain, prefs, o);
  CHECK(std::abs(est.rho_hat - rho) <= 3 * est.std_error);
}

TEST_CASE("initial laws") {
  const auto sv = rulab::testing::table1_stoch_vol();
  for (int i = 0; i < 100; ++i) {
    RngStream rng(15, i);
    const StatePoint x = draw_initial_state(sv, InitLaw::uniform(0.0, 100.0), rng);
    CHECK(x(0) >= 0.0);
    CHECK(x(0) <= 100.0);
    CHECK(x(1) >= 0.0);
    CHECK(x(1) <= sv.M_bound);
  }
  Eigen::MatrixXd p(3, 3);
  p << 0.2, 0.3, 0.5, 0.1, 0.1, 0.8, 0.6, 0.2, 0.2;
  const ModelSpec chain = make_finite_chain(p, Eigen::MatrixXd::Zero(3, 3));
  std::array<int, 3> counts{};
  for (int i = 0; i < 3000; ++i) {
    RngStream rng(16, i);
    counts[static_cast<int>(draw_initial_state(chain, InitLaw::uniform(0, 1), rng)(0))]++;
  }
  for (int c : counts) CHECK(std::abs(c - 1000) < 3 * std::sqrt(3000 * (1.0 / 3) * (2.0 / 3)));

  RngStream rng(17, 0);
  CHECK_THROWS_AS(draw_initial_state(sv, InitLaw::uniform(1.0, 1.0), rng), DomainError);
}

TEST_CASE("argument checks") {
  const auto prefs = make_preferences(0.998, 10, 1.5);
  const ByConstantVol cv{0.0015, 0.979, 0.0078};
  EstimationOptions o = small_options(1);
  o.p = 0.5;
  CHECK_THROWS_AS(estimate_lambda_p(cv, prefs, o), DomainError);
  o = small_options(1);
  o.J = 0;
  CHECK_THROWS_AS(estimate_lambda_p(cv, prefs, o), DomainError);
  o = small_options(1);
  o.init = InitLaw::uniform(2.0, 1.0);
  CHECK_THROWS_AS(estimate_lambda_p(cv, prefs, o), DomainError);
  CHECK_THROWS_AS(estimate_lambda_1_direct(cv, prefs, 0, 10, 1), DomainError);
}
