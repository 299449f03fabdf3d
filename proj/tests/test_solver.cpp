#include <doctest.h>

#include <cmath>
#include <random>

#include "rulab/errors.hpp"
#include "rulab/grid.hpp"
#include "rulab/solver.hpp"
#include "test_support.hpp"

using namespace rulab;

namespace {

struct Scalar {
  DiscreteOperator op;
  PreferenceSpec prefs;
};

Scalar scalar(double k, double beta, double gamma, double psi) {
  const FiniteChain chain = singleton_chain(k, gamma);
  return {DiscreteOperator(chain, make_preferences(beta, gamma, psi), build_grid(chain, 0)),
          make_preferences(beta, gamma, psi)};
}

Eigen::VectorXd ones(Eigen::Index n) { return Eigen::VectorXd::Ones(n); }

GridOperator operator_A(const DiscreteOperator& op, const PreferenceSpec& prefs,
                        const ShockSpec& shock) {
  return [&op, prefs, shock](const Eigen::VectorXd& g) { return apply_A(op, prefs, shock, g); };
}

GridOperator operator_B(const DiscreteOperator& op, const PreferenceSpec& prefs,
                        const FramingSpec& framing) {
  return [&op, prefs, framing](const Eigen::VectorXd& g) { return apply_B(op, prefs, framing, g); };
}

/// Root of g - B(g) on (lo, hi) by bisection, for a one-state B.
double bisect_fixed_point(const std::function<double(double)>& b, double lo, double hi) {
  double f_lo = lo - b(lo);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f_mid = mid - b(mid);
    if ((f_mid < 0) == (f_lo < 0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("apply_A") {
  SUBCASE("scalar hand evaluation") {
    const auto s = scalar(0.9, 0.96, 0.5, 4.0 / 3.0);
    REQUIRE(s.prefs.theta() == doctest::Approx(2.0).epsilon(1e-14));
    const ShockSpec shock = make_shock_spec(ones(1), s.prefs);
    CHECK(shock.xi(0) == doctest::Approx(0.04).epsilon(1e-14));
    const double out = apply_A(s.op, s.prefs, shock, ones(1))(0);
    CHECK(out == doctest::Approx(0.9038988772902794).epsilon(1e-13));
    CHECK(out == doctest::Approx(std::pow(0.04 + 0.96 * std::sqrt(0.9), 2)).epsilon(1e-14));
  }

  SUBCASE("unit shock gives the Epstein-Zin operator") {
    std::mt19937_64 gen(41);
    const FiniteChain chain = rulab::testing::random_chain(gen, 5, 0.02);
    const auto prefs = make_preferences(0.97, 10, 1.5);
    const DiscreteOperator op(chain, prefs, build_grid(chain, 0));
    const Eigen::VectorXd g = Eigen::VectorXd::LinSpaced(5, 0.5, 2.0);
    const Eigen::VectorXd kg = rulab::testing::chain_valuation_matrix(chain, 10.0) * g;
    const Eigen::VectorXd expected =
        ((1 - 0.97) + 0.97 * kg.array().pow(1.0 / prefs.theta())).pow(prefs.theta()).matrix();
    const Eigen::VectorXd out = apply_A(op, prefs, make_shock_spec(ones(5), prefs), g);
    CHECK((out - expected).cwiseAbs().maxCoeff() <= 1e-13 * expected.maxCoeff());
  }

  SUBCASE("errors") {
    const auto s = scalar(0.9, 0.96, 0.5, 4.0 / 3.0);
    const ShockSpec shock = make_shock_spec(ones(1), s.prefs);
    CHECK_THROWS_AS(apply_A(s.op, s.prefs, shock, Eigen::VectorXd::Zero(1)), DomainError);
    CHECK_THROWS_AS(make_shock_spec(Eigen::VectorXd::Zero(1), s.prefs), DomainError);
    CHECK_THROWS_AS(apply_A(s.op, s.prefs, make_shock_spec(ones(2), s.prefs), ones(1)), DomainError);
  }
}

TEST_CASE("apply_B") {
  const auto s = scalar(0.5, 0.99, 2, 2);
  REQUIRE(s.prefs.theta() == doctest::Approx(-2.0).epsilon(1e-14));
  const FramingSpec framing = make_framing_spec(Eigen::VectorXd::Constant(1, 0.3));

  SUBCASE("scalar hand evaluation") {
    const double out = apply_B(s.op, s.prefs, framing, ones(1))(0);
    CHECK(out == doctest::Approx(std::pow(0.01 + 0.99 / std::sqrt(0.8), -2)).epsilon(1e-14));
    CHECK(out == doctest::Approx(0.8016918436626541).epsilon(1e-13));
  }

  SUBCASE("bisection fixed point is invariant") {
    auto b = [&](double g) { return apply_B(s.op, s.prefs, framing, Eigen::VectorXd::Constant(1, g))(0); };
    const double g_star = bisect_fixed_point(b, 1e-9, 1e3);
    CHECK(g_star == doctest::Approx(0.6054101644904363).epsilon(1e-12));
    CHECK(std::abs(b(g_star) - g_star) < 1e-10);
  }

  SUBCASE("zero framing term reduces to A with a unit shock") {
    std::mt19937_64 gen(42);
    const FiniteChain chain = rulab::testing::random_chain(gen, 4, 0.02);
    const auto prefs = make_preferences(0.95, 2, 2);
    const DiscreteOperator op(chain, prefs, build_grid(chain, 0));
    const Eigen::VectorXd g = Eigen::VectorXd::LinSpaced(4, 0.3, 3.0);
    const FramingSpec zero{Eigen::VectorXd::Zero(4)};
    CHECK((apply_B(op, prefs, zero, g) - apply_A(op, prefs, make_shock_spec(ones(4), prefs), g))
              .cwiseAbs()
              .maxCoeff() < 1e-14);
    CHECK_THROWS_AS(make_framing_spec(Eigen::VectorXd::Zero(4)), DomainError);
  }
}

TEST_CASE("isotonicity of A and B") {
  std::mt19937_64 gen(43);
  std::uniform_real_distribution<double> u(0.1, 5.0), bump(0.0, 1.0);
  for (double theta : {-27.0, -2.0, 0.5, 2.0}) {
    const auto [gamma, psi] = rulab::testing::gamma_psi_for_theta(theta);
    const auto prefs = make_preferences(0.95, gamma, psi);
    const FiniteChain chain = rulab::testing::random_chain(gen, 6, 0.02);
    const DiscreteOperator op(chain, prefs, build_grid(chain, 0));
    Eigen::VectorXd lambda(6), b(6);
    for (int i = 0; i < 6; ++i) {
      lambda(i) = u(gen);
      b(i) = u(gen);
    }
    const ShockSpec shock = make_shock_spec(lambda, prefs);
    const FramingSpec framing = make_framing_spec(b);
    bool ordered = true;
    for (int pair = 0; pair < 100; ++pair) {
      Eigen::VectorXd g1(6), g2(6);
      for (int i = 0; i < 6; ++i) {
        g1(i) = u(gen);
        g2(i) = g1(i) + bump(gen);
      }
      ordered &= (apply_A(op, prefs, shock, g1).array() <= apply_A(op, prefs, shock, g2).array()).all();
      ordered &= (apply_B(op, prefs, framing, g1).array() <= apply_B(op, prefs, framing, g2).array()).all();
    }
    CHECK_MESSAGE(ordered, "theta=", theta);
  }
}

TEST_CASE("solve_fixed_point on scalars") {
  SUBCASE("stable scalar matches the closed form") {
    const auto s = scalar(0.9, 0.96, 0.5, 4.0 / 3.0);
    const ShockSpec shock = make_shock_spec(ones(1), s.prefs);
    const SolveReport r = solve_fixed_point(operator_A(s.op, s.prefs, shock), ones(1), 1e-13);
    REQUIRE(r.status == SolveStatus::Converged);
    const double closed = *scalar_closed_form(s.prefs, 0.9, 0.04);
    CHECK(closed == doctest::Approx(0.20080150566025196).epsilon(1e-14));
    CHECK(std::abs((*r.solution)(0) - closed) < 1e-9);
    CHECK(r.final_residual < 1e-13);
    CHECK(r.residual_history.size() == static_cast<std::size_t>(r.iterations));
    const Eigen::VectorXd again = apply_A(s.op, s.prefs, shock, *r.solution);
    CHECK(std::abs(again(0) - (*r.solution)(0)) < 1e-12);
  }

  SUBCASE("unstable scalar collapses under A but B finds a fixed point") {
    const auto s = scalar(0.5, 0.99, 2, 2);
    CHECK(0.99 * std::pow(0.5, -0.5) == doctest::Approx(1.400).epsilon(1e-3));
    const SolveReport a =
        solve_fixed_point(operator_A(s.op, s.prefs, make_shock_spec(ones(1), s.prefs)), ones(1));
    CHECK(a.status == SolveStatus::CollapsedToZero);
    CHECK_FALSE(a.solution.has_value());
    const FramingSpec framing = make_framing_spec(Eigen::VectorXd::Constant(1, 0.3));
    const SolveReport b = solve_fixed_point(operator_B(s.op, s.prefs, framing), ones(1));
    REQUIRE(b.status == SolveStatus::Converged);
    CHECK(std::abs((*b.solution)(0) - 0.6054101644904363) < 1e-9);
  }

  SUBCASE("positive theta blows up when unstable") {
    const auto s = scalar(1.5, 0.96, 0.5, 4.0 / 3.0);
    const SolveReport r =
        solve_fixed_point(operator_A(s.op, s.prefs, make_shock_spec(ones(1), s.prefs)), ones(1));
    CHECK(r.status == SolveStatus::Diverged);
  }

  SUBCASE("iteration cap and argument checks") {
    const auto s = scalar(0.9, 0.96, 0.5, 4.0 / 3.0);
    const GridOperator a = operator_A(s.op, s.prefs, make_shock_spec(ones(1), s.prefs));
    const SolveReport r = solve_fixed_point(a, ones(1), 1e-15, 3);
    CHECK(r.status == SolveStatus::MaxIter);
    CHECK(r.iterations == 3);
    CHECK_FALSE(r.solution.has_value());
    CHECK_THROWS_AS(solve_fixed_point(a, ones(1), 0.0), DomainError);
    CHECK_THROWS_AS(solve_fixed_point(a, Eigen::VectorXd::Zero(1)), DomainError);
  }
}

TEST_CASE("scalar_closed_form") {
  const auto p = make_preferences(0.998, 10, 1.5);
  CHECK(*scalar_closed_form(p, 1.0, 0.002) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK_FALSE(scalar_closed_form(make_preferences(0.99, 2, 2), 0.5, 0.01).has_value());
  CHECK_THROWS_AS(scalar_closed_form(p, 0.0, 0.002), DomainError);

  std::mt19937_64 gen(44);
  std::uniform_real_distribution<double> k_dist(0.5, 1.5), beta_dist(0.5, 0.99);
  const double thetas[] = {-27.0, -2.0, 0.5, 2.0};
  int checked = 0;
  while (checked < 20) {
    const double theta = thetas[checked % 4];
    const auto [gamma, psi] = rulab::testing::gamma_psi_for_theta(theta);
    const double k = k_dist(gen);
    const auto prefs = make_preferences(beta_dist(gen), gamma, psi);
    const double lambda = prefs.beta() * std::pow(k, 1.0 / theta);
    if (!(lambda < 0.95)) continue;
    const auto s = scalar(k, prefs.beta(), gamma, psi);
    const ShockSpec shock = make_shock_spec(ones(1), s.prefs);
    const SolveReport r = solve_fixed_point(operator_A(s.op, s.prefs, shock), ones(1), 1e-14);
    REQUIRE(r.status == SolveStatus::Converged);
    const double closed = *scalar_closed_form(s.prefs, k, 1.0 - prefs.beta());
    CHECK(std::abs((*r.solution)(0) - closed) <= 1e-9 * std::max(1.0, closed));
    ++checked;
  }
}

TEST_CASE("Lambda decides convergence on finite chains") {
  std::mt19937_64 gen(45);
  for (double theta : {-27.0, -2.0, 0.5, 2.0}) {
    for (double target : {0.9, 1.4}) {
      const auto fx = rulab::testing::stability_fixture(gen, theta, target, 5);
      CHECK(fx.lambda == doctest::Approx(target).epsilon(1e-10));
      const DiscreteOperator op(fx.chain, fx.prefs, build_grid(fx.chain, 0));
      const GridOperator a = operator_A(op, fx.prefs, make_shock_spec(ones(5), fx.prefs));
      std::vector<Eigen::VectorXd> solutions;
      for (double start : {0.01, 1.0, 100.0}) {
        const SolveReport r = solve_fixed_point(a, Eigen::VectorXd::Constant(5, start), 1e-11);
        if (target < 1.0) {
          REQUIRE_MESSAGE(r.status == SolveStatus::Converged, "theta=", theta);
          CHECK((r.solution->array() > 0).all());
          const Eigen::VectorXd again = a(*r.solution);
          CHECK((again - *r.solution).cwiseAbs().maxCoeff() <= 10 * 1e-11 * r.solution->maxCoeff());
          solutions.push_back(*r.solution);
        } else {
          CHECK_MESSAGE((r.status == SolveStatus::CollapsedToZero || r.status == SolveStatus::Diverged),
                        "theta=", theta, " status=", to_string(r.status));
          CHECK(r.status == (theta < 0 ? SolveStatus::CollapsedToZero : SolveStatus::Diverged));
        }
      }
      for (const auto& g : solutions) CHECK((g - solutions.front()).cwiseAbs().maxCoeff() < 1e-6);

      if (target < 1.0) {
        // narrow framing keeps a fixed point whenever A has one
        const FramingSpec framing = make_framing_spec(Eigen::VectorXd::Constant(5, 0.3));
        const SolveReport b = solve_fixed_point(operator_B(op, fx.prefs, framing), ones(5));
        CHECK(b.status == SolveStatus::Converged);
      }
    }
  }
}

TEST_CASE("geometric convergence rate") {
  std::mt19937_64 gen(46);
  const auto fx = rulab::testing::stability_fixture(gen, -2.0, 0.9, 4);
  const DiscreteOperator op(fx.chain, fx.prefs, build_grid(fx.chain, 0));
  const SolveReport r = solve_fixed_point(operator_A(op, fx.prefs, make_shock_spec(ones(4), fx.prefs)),
                                          Eigen::VectorXd::Constant(4, 50.0), 1e-13);
  REQUIRE(r.status == SolveStatus::Converged);
  const auto& h = r.residual_history;
  REQUIRE(h.size() > 20);
  // the tail ratio settles below one
  std::vector<double> ratios;
  for (std::size_t k = h.size() - 15; k < h.size(); ++k) ratios.push_back(h[k] / h[k - 1]);
  const double q = *std::max_element(ratios.begin(), ratios.end());
  CHECK(q < 1.0);
  CHECK(*std::min_element(ratios.begin(), ratios.end()) > 0.5 * q);
}

TEST_CASE("continuous grid with a state-dependent shock") {
  const ByConstantVol m{0.0015, 0.979, 0.0078};
  const auto prefs = make_preferences(0.95, 10, 1.5);
  const Grid grid = build_grid(m, 41);
  const DiscreteOperator op(m, prefs, grid);
  const StateFunction lambda = StateFunction::exp_linear(0.0, {5.0}, 0.8, 1.25);
  const ShockSpec shock = make_shock_spec(lambda, grid, prefs);
  CHECK(shock.lambda.minCoeff() >= 0.8);
  CHECK(shock.lambda.maxCoeff() <= 1.25);
  const SolveReport r = solve_fixed_point(operator_A(op, prefs, shock), ones(grid.size()));
  REQUIRE(r.status == SolveStatus::Converged);
  CHECK((r.solution->array() > 0).all());
  CHECK_THROWS_AS(StateFunction::exp_linear(0.0, {1.0}, 0.0, 1.0), DomainError);
}

TEST_CASE("classify_stability") {
  LambdaEstimate est;
  auto with = [&](double lambda, double se) {
    est.lambda_p = lambda;
    est.std_error = se;
    est.lambda_std_error = se;
    return classify_stability(est);
  };
  CHECK(with(0.99, 0.001) == Stability::Stable);
  CHECK(with(1.3, 0.01) == Stability::Unstable);
  CHECK(with(0.999, 0.002) == Stability::Inconclusive);
  CHECK(classify_stability(est, 0.0) == Stability::Stable);
  CHECK_THROWS_AS(classify_stability(est, -1.0), DomainError);
  CHECK(to_string(Stability::Inconclusive) == "inconclusive");
  CHECK(to_string(SolveStatus::CollapsedToZero) == "CollapsedToZero");
}
