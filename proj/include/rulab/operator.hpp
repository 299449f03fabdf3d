#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "rulab/errors.hpp"
#include "rulab/grid.hpp"
#include "rulab/model.hpp"
#include "rulab/preferences.hpp"

namespace rulab {

/// k(x, y) = conditional_growth_mgf(x, y) * transition_density(x, y).
double kernel_value(const ModelSpec& model, const PreferenceSpec& prefs, const StatePoint& x,
                    const StatePoint& y);

enum class KernelKind {
  Valuation,   ///< k(x, y) above
  Transition,  ///< q(x, y) alone
};

enum class Discretization {
  Nystrom,   ///< w_j k(x_i, y_j)
  CellMass,  ///< mgf(x_i, y_j) times the transition probability of node j's cell
};

/// Discretization of K on a grid. Nystrom: (Kg)_i = sum_j w_j k(x_i, y_j) g_j.
/// CellMass replaces w_j q(x_i, y_j) by the probability of the cell around
/// node j (cells split at midpoints, outer cells run to the state support), so
/// rows stay exact when the conditional law is narrower than the grid spacing.
/// The weighted matrix is materialized when the grid has at most
/// kMaterializeLimit nodes; larger grids evaluate rows on demand. Immutable
/// after construction and safe to share between threads.
class DiscreteOperator {
public:
  static constexpr Eigen::Index kMaterializeLimit = 5000;

  DiscreteOperator(ModelSpec model, const PreferenceSpec& prefs, Grid grid,
                   KernelKind kind = KernelKind::Valuation,
                   Discretization discretization = Discretization::Nystrom);

  const ModelSpec& model() const { return model_; }
  const Grid& grid() const { return grid_; }
  KernelKind kind() const { return kind_; }
  Discretization discretization() const { return discretization_; }
  Eigen::Index size() const { return grid_.size(); }
  bool materialized() const { return matrix_.size() > 0; }

  /// Unweighted kernel at (node i, node j).
  double kernel(Eigen::Index i, Eigen::Index j) const;
  /// Weighted entry: w_j k(x_i, y_j), or the cell form under CellMass.
  double entry(Eigen::Index i, Eigen::Index j) const;
  /// Weighted kernel matrix; DomainError if the operator is matrix-free.
  const Eigen::MatrixXd& matrix() const;

  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& g) const;
  Eigen::VectorXd apply_transpose(const Eigen::Ref<const Eigen::VectorXd>& g) const;

  /// Stationary probability weights on the nodes (sum to one). Uses the
  /// closed-form density when the model has one, otherwise the invariant
  /// vector of the discretized transition operator. Computed on first use.
  const Eigen::VectorXd& stationary_weights() const;

private:
  struct Cache;

  ModelSpec model_;
  PreferenceSpec prefs_;
  Grid grid_;
  KernelKind kind_;
  Discretization discretization_;
  std::vector<Eigen::VectorXd> edges_;  ///< cell edges per axis (CellMass)
  Eigen::MatrixXd matrix_;
  std::shared_ptr<Cache> cache_;
};

inline Eigen::VectorXd apply_K(const DiscreteOperator& op,
                               const Eigen::Ref<const Eigen::VectorXd>& g) {
  return op.apply(g);
}

struct SpectralResult {
  double rho = 0.0;
  Eigen::VectorXd eigenfunction;  ///< strictly positive, sup-norm 1
  int iterations = 0;
  double residual = 0.0;  ///< sup |K e - rho e| / rho
};

/// Carries the last iterate when power iteration hits max_iter.
class SpectralNoConvergence : public NoConvergence {
public:
  SpectralNoConvergence(const std::string& what, SpectralResult last)
      : NoConvergence(what), last_(std::move(last)) {}
  const SpectralResult& last() const { return last_; }

private:
  SpectralResult last_;
};

/// Power iteration from g = 1 with sup-norm renormalization. Stops once
/// successive estimates differ by less than tol and the eigen-residual is
/// below tol.
SpectralResult spectral_radius_power(const DiscreteOperator& op, double tol = 1e-8,
                                     int max_iter = 10'000);

struct GelfandSequence {
  std::vector<double> values;  ///< values[n-1] = ||K^n 1||_p^(1/n)
  /// True if K^n 1 left the double range at some n; values stay valid because
  /// every iterate is rescaled and the scale is carried in logs.
  bool overflow = false;
};

/// a_n = (sum_i pi_i |K^n 1 (x_i)|^p)^(1/(n p)) for n = 1..n_max.
GelfandSequence gelfand_sequence(const DiscreteOperator& op, int n_max, double p);

Discretization parse_discretization(std::string_view name);
std::string_view to_string(Discretization d);

/// Quadrature of the squared Hilbert-Schmidt norm sum_ij pi_i pi_j k(x_i, y_j)^2.
double hs_norm(const DiscreteOperator& op);

}  // namespace rulab
