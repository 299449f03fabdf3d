#pragma once

namespace rulab {

/// Epstein-Zin preference parameters. theta is derived from gamma and psi on
/// every access so it can never drift from them.
class PreferenceSpec {
public:
  double beta() const { return beta_; }
  double gamma() const { return gamma_; }
  double psi() const { return psi_; }
  double theta() const { return (1.0 - gamma_) / (1.0 - 1.0 / psi_); }

  /// Same gamma and psi with a different discount factor.
  PreferenceSpec with_beta(double beta) const;

private:
  friend PreferenceSpec make_preferences(double beta, double gamma, double psi);
  PreferenceSpec(double beta, double gamma, double psi) : beta_(beta), gamma_(gamma), psi_(psi) {}

  double beta_;
  double gamma_;
  double psi_;
};

/// Throws DomainError unless beta in (0,1), gamma != 1, psi > 0 and psi != 1.
PreferenceSpec make_preferences(double beta, double gamma, double psi);

}  // namespace rulab
