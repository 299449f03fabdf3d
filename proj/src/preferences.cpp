#include "rulab/preferences.hpp"

#include <cmath>
#include <string>

#include "rulab/errors.hpp"

namespace rulab {

PreferenceSpec make_preferences(double beta, double gamma, double psi) {
  if (!std::isfinite(beta) || !(beta > 0.0 && beta < 1.0)) {
    throw DomainError("beta must lie in (0, 1), got " + std::to_string(beta));
  }
  if (!std::isfinite(gamma) || gamma == 1.0) {
    throw DomainError("gamma must be finite and different from 1");
  }
  if (!std::isfinite(psi) || !(psi > 0.0) || psi == 1.0) {
    throw DomainError("psi must be positive and different from 1");
  }
  return PreferenceSpec(beta, gamma, psi);
}

PreferenceSpec PreferenceSpec::with_beta(double beta) const {
  return make_preferences(beta, gamma_, psi_);
}

}  // namespace rulab
