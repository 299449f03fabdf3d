#pragma once

#include <Eigen/Dense>
#include <optional>
#include <utility>
#include <vector>

#include "rulab/model.hpp"

namespace rulab {

using Bounds = std::vector<std::pair<double, double>>;

/// Tensor-product quadrature grid. Flat index runs fastest over the last
/// coordinate.
class Grid {
public:
  Grid(std::vector<Eigen::VectorXd> nodes, std::vector<Eigen::VectorXd> weights);

  int dim() const { return static_cast<int>(nodes_.size()); }
  Eigen::Index size() const { return points_.cols(); }

  const std::vector<Eigen::VectorXd>& nodes() const { return nodes_; }
  const std::vector<Eigen::VectorXd>& weights() const { return axis_weights_; }
  Bounds bounds() const;

  StatePoint point(Eigen::Index flat) const { return points_.col(flat); }
  /// Coordinates of every node, one column per node.
  const Eigen::MatrixXd& points() const { return points_; }
  /// Product quadrature weight per node.
  const Eigen::VectorXd& quadrature_weights() const { return weights_; }

private:
  std::vector<Eigen::VectorXd> nodes_;
  std::vector<Eigen::VectorXd> axis_weights_;
  Eigen::MatrixXd points_;
  Eigen::VectorXd weights_;
};

/// Uniform trapezoid weights on n nodes spanning [lo, hi].
Eigen::VectorXd trapezoid_weights(Eigen::Index n, double lo, double hi);

/// Uniform tensor grid with trapezoid weights. Unbounded coordinates cover
/// mean +/- span_sigmas stationary standard deviations; bounded coordinates
/// cover their support exactly. A finite chain yields the identity grid over
/// its states with unit weights. `bounds` overrides the box per coordinate.
Grid build_grid(const ModelSpec& model, int nodes_per_dim, double span_sigmas = 6.0,
                const std::optional<Bounds>& bounds = std::nullopt);

}  // namespace rulab
