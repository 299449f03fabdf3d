#include "rulab/grid.hpp"

#include <cmath>
#include <string>

#include "rulab/errors.hpp"

namespace rulab {

Grid::Grid(std::vector<Eigen::VectorXd> nodes, std::vector<Eigen::VectorXd> weights)
    : nodes_(std::move(nodes)), axis_weights_(std::move(weights)) {
  if (nodes_.empty() || nodes_.size() != axis_weights_.size()) {
    throw DomainError("grid needs matching node and weight arrays");
  }
  Eigen::Index total = 1;
  for (std::size_t d = 0; d < nodes_.size(); ++d) {
    const auto& axis = nodes_[d];
    if (axis.size() == 0 || axis.size() != axis_weights_[d].size()) {
      throw DomainError("grid axis " + std::to_string(d) + " is malformed");
    }
    for (Eigen::Index i = 1; i < axis.size(); ++i) {
      if (!(axis(i) > axis(i - 1))) throw DomainError("grid nodes must be strictly increasing");
    }
    if (!(axis_weights_[d].array() > 0.0).all()) {
      throw DomainError("quadrature weights must be positive");
    }
    total *= axis.size();
  }

  const int d = dim();
  points_.resize(d, total);
  weights_.resize(total);
  std::vector<Eigen::Index> index(d, 0);
  for (Eigen::Index flat = 0; flat < total; ++flat) {
    double w = 1.0;
    for (int k = 0; k < d; ++k) {
      points_(k, flat) = nodes_[k](index[k]);
      w *= axis_weights_[k](index[k]);
    }
    weights_(flat) = w;
    for (int k = d - 1; k >= 0; --k) {
      if (++index[k] < nodes_[k].size()) break;
      index[k] = 0;
    }
  }
}

Bounds Grid::bounds() const {
  Bounds out;
  for (const auto& axis : nodes_) out.emplace_back(axis(0), axis(axis.size() - 1));
  return out;
}

Eigen::VectorXd trapezoid_weights(Eigen::Index n, double lo, double hi) {
  const double h = (hi - lo) / static_cast<double>(n - 1);
  Eigen::VectorXd w = Eigen::VectorXd::Constant(n, h);
  w(0) = w(n - 1) = 0.5 * h;
  return w;
}

Grid build_grid(const ModelSpec& model, int nodes_per_dim, double span_sigmas,
                const std::optional<Bounds>& bounds) {
  if (const auto* chain = std::get_if<FiniteChain>(&model)) {
    const Eigen::Index n = chain->transition.rows();
    return Grid({Eigen::VectorXd::LinSpaced(n, 0.0, n - 1.0)}, {Eigen::VectorXd::Ones(n)});
  }
  if (nodes_per_dim < 3) throw DomainError("nodes_per_dim must be at least 3");
  if (!(span_sigmas > 0.0)) throw DomainError("span_sigmas must be positive");

  const int d = state_dim(model);
  Bounds box;
  if (bounds) {
    if (static_cast<int>(bounds->size()) != d) {
      throw DomainError("grid bounds must have one pair per state coordinate");
    }
    box = *bounds;
  } else {
    const Bounds support = state_support(model);
    std::vector<std::pair<double, double>> moments;
    for (int k = 0; k < d; ++k) {
      if (std::isfinite(support[k].first) && std::isfinite(support[k].second)) {
        box.push_back(support[k]);
        continue;
      }
      if (moments.empty()) moments = stationary_moments(model);
      const auto [mean, sd] = moments[k];
      box.emplace_back(mean - span_sigmas * sd, mean + span_sigmas * sd);
    }
  }

  std::vector<Eigen::VectorXd> nodes;
  std::vector<Eigen::VectorXd> weights;
  for (const auto& [lo, hi] : box) {
    if (!(std::isfinite(lo) && std::isfinite(hi) && hi > lo)) {
      throw DomainError("grid bounds must be finite with hi > lo");
    }
    nodes.push_back(Eigen::VectorXd::LinSpaced(nodes_per_dim, lo, hi));
    weights.push_back(trapezoid_weights(nodes_per_dim, lo, hi));
  }
  return Grid(std::move(nodes), std::move(weights));
}

}  // namespace rulab
