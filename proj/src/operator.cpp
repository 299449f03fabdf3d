#include "rulab/operator.hpp"

#include <cmath>
#include <limits>
#include <mutex>

#include "rulab/errors.hpp"

namespace rulab {

struct DiscreteOperator::Cache {
  std::once_flag once;
  Eigen::VectorXd stationary;
};

double kernel_value(const ModelSpec& model, const PreferenceSpec& prefs, const StatePoint& x,
                    const StatePoint& y) {
  const double q = transition_density(model, x, y);
  if (q == 0.0) return 0.0;
  return conditional_growth_mgf(model, prefs, x, y) * q;
}

DiscreteOperator::DiscreteOperator(ModelSpec model, const PreferenceSpec& prefs, Grid grid,
                                   KernelKind kind, Discretization discretization)
    : model_(std::move(model)),
      prefs_(prefs),
      grid_(std::move(grid)),
      kind_(kind),
      discretization_(discretization),
      cache_(std::make_shared<Cache>()) {
  validate(model_);
  if (grid_.dim() != state_dim(model_)) {
    throw DomainError("grid dimension does not match the model state dimension");
  }
  if (std::holds_alternative<FiniteChain>(model_)) discretization_ = Discretization::Nystrom;
  if (discretization_ == Discretization::CellMass) {
    const auto support = state_support(model_);
    for (int d = 0; d < grid_.dim(); ++d) {
      const Eigen::VectorXd& nodes = grid_.nodes()[d];
      const Eigen::Index m = nodes.size();
      Eigen::VectorXd e(m + 1);
      e(0) = support[d].first;
      e(m) = support[d].second;
      for (Eigen::Index k = 1; k < m; ++k) e(k) = 0.5 * (nodes(k - 1) + nodes(k));
      edges_.push_back(std::move(e));
    }
  }
  const Eigen::Index n = grid_.size();
  if (n <= kMaterializeLimit) {
    matrix_.resize(n, n);
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) matrix_(i, j) = entry(i, j);
    }
  }
}

double DiscreteOperator::kernel(Eigen::Index i, Eigen::Index j) const {
  const StatePoint x = grid_.point(i);
  const StatePoint y = grid_.point(j);
  return kind_ == KernelKind::Valuation ? kernel_value(model_, prefs_, x, y)
                                        : transition_density(model_, x, y);
}

double DiscreteOperator::entry(Eigen::Index i, Eigen::Index j) const {
  if (discretization_ == Discretization::Nystrom) {
    return grid_.quadrature_weights()(j) * kernel(i, j);
  }
  const int dim = grid_.dim();
  StatePoint lo(dim), hi(dim);
  Eigen::Index rest = j;
  for (int d = dim - 1; d >= 0; --d) {
    const Eigen::Index m = grid_.nodes()[d].size();
    const Eigen::Index k = rest % m;
    rest /= m;
    lo(d) = edges_[d](k);
    hi(d) = edges_[d](k + 1);
  }
  const StatePoint x = grid_.point(i);
  const double mass = transition_cell_mass(model_, x, lo, hi);
  if (kind_ == KernelKind::Transition || mass == 0.0) return mass;
  return conditional_growth_mgf(model_, prefs_, x, grid_.point(j)) * mass;
}

const Eigen::MatrixXd& DiscreteOperator::matrix() const {
  if (!materialized()) throw DomainError("operator is matrix-free on this grid");
  return matrix_;
}

Eigen::VectorXd DiscreteOperator::apply(const Eigen::Ref<const Eigen::VectorXd>& g) const {
  const Eigen::Index n = size();
  if (g.size() != n) throw DomainError("grid function has the wrong length");
  Eigen::VectorXd out(n);
  if (materialized()) {
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) out(i) = matrix_.row(i).dot(g);
    return out;
  }
#pragma omp parallel for schedule(dynamic, 16)
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) acc += entry(i, j) * g(j);
    out(i) = acc;
  }
  return out;
}

Eigen::VectorXd DiscreteOperator::apply_transpose(
    const Eigen::Ref<const Eigen::VectorXd>& g) const {
  const Eigen::Index n = size();
  if (g.size() != n) throw DomainError("grid function has the wrong length");
  Eigen::VectorXd out(n);
  if (materialized()) {
#pragma omp parallel for schedule(static)
    for (Eigen::Index j = 0; j < n; ++j) out(j) = matrix_.col(j).dot(g);
    return out;
  }
#pragma omp parallel for schedule(dynamic, 16)
  for (Eigen::Index j = 0; j < n; ++j) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) acc += g(i) * entry(i, j);
    out(j) = acc;
  }
  return out;
}

namespace {

Eigen::VectorXd invariant_weights(const DiscreteOperator& transition) {
  constexpr int kMaxIter = 100'000;
  constexpr double kTol = 1e-13;
  const Eigen::Index n = transition.size();
  // Mass conservation on the node set, so rows are renormalized to sum one.
  Eigen::VectorXd row_mass = transition.apply(Eigen::VectorXd::Ones(n));
  if (!(row_mass.minCoeff() > 0.0)) {
    throw DomainError("transition rows vanish on this grid; refine it or use the cell discretization");
  }
  if (transition.materialized()) {
    // pi (I - P) = 0 with the last equation replaced by sum(pi) = 1
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) -
                        (row_mass.cwiseInverse().asDiagonal() * transition.matrix()).transpose();
    a.row(n - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    rhs(n - 1) = 1.0;
    Eigen::VectorXd pi = a.partialPivLu().solve(rhs).cwiseMax(0.0);
    return pi / pi.sum();
  }
  Eigen::VectorXd pi = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  for (int it = 0; it < kMaxIter; ++it) {
    Eigen::VectorXd next = transition.apply_transpose(pi.cwiseQuotient(row_mass));
    next /= next.sum();
    const double change = (next - pi).lpNorm<1>();
    pi = std::move(next);
    if (change < kTol) return pi;
  }
  throw NoConvergence("stationary weights did not converge on the grid");
}

}  // namespace

const Eigen::VectorXd& DiscreteOperator::stationary_weights() const {
  std::call_once(cache_->once, [this] {
    const Eigen::Index n = size();
    Eigen::VectorXd pi(n);
    bool closed_form = true;
    for (Eigen::Index i = 0; i < n && closed_form; ++i) {
      const auto density = stationary_density(model_, grid_.point(i));
      if (!density) {
        closed_form = false;
        break;
      }
      pi(i) = *density * grid_.quadrature_weights()(i);
    }
    if (closed_form) {
      cache_->stationary = pi / pi.sum();
    } else if (kind_ == KernelKind::Transition) {
      cache_->stationary = invariant_weights(*this);
    } else {
      const DiscreteOperator transition(model_, prefs_, grid_, KernelKind::Transition,
                                        discretization_);
      cache_->stationary = invariant_weights(transition);
    }
  });
  return cache_->stationary;
}

Discretization parse_discretization(std::string_view name) {
  if (name == "nystrom") return Discretization::Nystrom;
  if (name == "cell") return Discretization::CellMass;
  throw DomainError("unknown discretization '" + std::string(name) + "' (nystrom|cell)");
}

std::string_view to_string(Discretization d) {
  return d == Discretization::Nystrom ? "nystrom" : "cell";
}

SpectralResult spectral_radius_power(const DiscreteOperator& op, double tol, int max_iter) {
  if (!(tol > 0.0)) throw DomainError("tolerance must be positive");
  SpectralResult result;
  Eigen::VectorXd e = Eigen::VectorXd::Ones(op.size());
  double rho_prev = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= max_iter; ++it) {
    Eigen::VectorXd ke = op.apply(e);
    const double rho = ke.maxCoeff();
    if (!(rho > 0.0) || !std::isfinite(rho)) {
      throw DomainError("operator annihilated the iterate; kernel is not positive");
    }
    result.rho = rho;
    result.iterations = it;
    result.residual = (ke - rho * e).cwiseAbs().maxCoeff() / rho;
    result.eigenfunction = e;
    if (std::abs(rho - rho_prev) < tol && result.residual < tol) return result;
    rho_prev = rho;
    e = ke / rho;
  }
  throw SpectralNoConvergence("power iteration reached max_iter", std::move(result));
}

GelfandSequence gelfand_sequence(const DiscreteOperator& op, int n_max, double p) {
  if (n_max < 1) throw DomainError("n_max must be at least 1");
  if (!(p >= 1.0)) throw DomainError("p must be at least 1");
  const Eigen::VectorXd& pi = op.stationary_weights();
  const double log_max = std::log(std::numeric_limits<double>::max());
  GelfandSequence out;
  out.values.reserve(n_max);
  Eigen::VectorXd v = Eigen::VectorXd::Ones(op.size());
  double log_scale = 0.0;
  for (int n = 1; n <= n_max; ++n) {
    v = op.apply(v);
    const double peak = v.cwiseAbs().maxCoeff();
    if (!(peak > 0.0)) throw DomainError("K^n 1 vanished on the grid");
    v /= peak;
    log_scale += std::log(peak);
    if (log_scale > log_max) out.overflow = true;
    const double mean_p = pi.dot(v.cwiseAbs().array().pow(p).matrix());
    const double log_norm = log_scale + std::log(mean_p) / p;
    out.values.push_back(std::exp(log_norm / n));
  }
  return out;
}

double hs_norm(const DiscreteOperator& op) {
  const Eigen::VectorXd& pi = op.stationary_weights();
  const Eigen::Index n = op.size();
  Eigen::VectorXd rows(n);
#pragma omp parallel for schedule(dynamic, 16)
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double k = op.kernel(i, j);
      acc += pi(j) * k * k;
    }
    rows(i) = pi(i) * acc;
  }
  return rows.sum();
}

}  // namespace rulab
