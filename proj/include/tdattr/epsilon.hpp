#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tdattr/errors.hpp"

namespace tdattr {

/// The coefficient eps(t) in front of u_tt, together with its derivative and the
/// uniform bound L >= sup(|eps| + |eps'|).
///
/// Supported shapes (x = (t - t0) / scale):
///   logistic          eps0 / (1 + e^x)
///   exponential_tail  eps0 for x <= 0, eps0 (1 + x) e^{-x} for x > 0   (C^1 at x = 0)
///   constant          eps0, flagged as classical: it does not vanish at +infinity and is
///                     only meant for comparisons against closed-form solutions.
class EpsilonProfile {
public:
  enum class Kind { logistic, exponential_tail, constant };

  struct Params {
    double eps0 = 1.0;
    double scale = 5.0;
    double t0 = 0.0;
  };

  EpsilonProfile() = default;

  Kind kind() const noexcept { return kind_; }
  const Params& params() const noexcept { return p_; }
  double bound() const noexcept { return bound_; }
  bool classical() const noexcept { return kind_ == Kind::constant; }

  double operator()(double t) const noexcept {
    switch (kind_) {
    case Kind::logistic: {
      const double x = (t - p_.t0) / p_.scale;
      if (x > 0.0) {
        const double e = std::exp(-x);
        return p_.eps0 * e / (1.0 + e);
      }
      return p_.eps0 / (1.0 + std::exp(x));
    }
    case Kind::exponential_tail: {
      const double x = (t - p_.t0) / p_.scale;
      if (x <= 0.0) return p_.eps0;
      return p_.eps0 * (1.0 + x) * std::exp(-x);
    }
    case Kind::constant:
      return p_.eps0;
    }
    return p_.eps0;
  }

  double derivative(double t) const noexcept {
    switch (kind_) {
    case Kind::logistic: {
      // eps' = -eps (1 - eps/eps0) / s, with 1 - eps/eps0 = 1 / (1 + e^{-x})
      const double x = (t - p_.t0) / p_.scale;
      const double eps = (*this)(t);
      const double one_minus = x > 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      return -eps * one_minus / p_.scale;
    }
    case Kind::exponential_tail: {
      const double x = (t - p_.t0) / p_.scale;
      if (x <= 0.0) return 0.0;
      return -p_.eps0 * x * std::exp(-x) / p_.scale;
    }
    case Kind::constant:
      return 0.0;
    }
    return 0.0;
  }

  /// Dense grid on which the structural conditions are checked.
  std::vector<double> check_grid(int points = 4001) const {
    const double half_width = 60.0 * (kind_ == Kind::constant ? 1.0 : p_.scale);
    std::vector<double> grid(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i)
      grid[static_cast<std::size_t>(i)] = p_.t0 - half_width + 2.0 * half_width * i / (points - 1);
    return grid;
  }

  static std::string kind_name(Kind k) {
    switch (k) {
    case Kind::logistic: return "logistic";
    case Kind::exponential_tail: return "exponential-tail";
    case Kind::constant: return "constant";
    }
    return "unknown";
  }

  static Kind parse_kind(const std::string& name) {
    if (name == "logistic") return Kind::logistic;
    if (name == "exponential-tail" || name == "exponential_tail") return Kind::exponential_tail;
    if (name == "constant") return Kind::constant;
    throw ValidationError("unknown epsilon kind '" + name + "'");
  }

  friend EpsilonProfile make_epsilon(Kind kind, const Params& params);

private:
  Kind kind_ = Kind::constant;
  Params p_{};
  double bound_ = 1.0;
};

/// Builds and validates a profile. Throws ValidationError naming the violated condition.
inline EpsilonProfile make_epsilon(EpsilonProfile::Kind kind, const EpsilonProfile::Params& params) {
  if (!std::isfinite(params.eps0) || !std::isfinite(params.scale) || !std::isfinite(params.t0))
    throw ValidationError("epsilon parameters must be finite");
  if (params.eps0 <= 0.0)
    throw ValidationError("epsilon violates positivity: eps0 = " + std::to_string(params.eps0) + " <= 0");
  if (kind != EpsilonProfile::Kind::constant && params.scale <= 0.0)
    throw ValidationError("epsilon must be nonincreasing: scale = " + std::to_string(params.scale) +
                          " <= 0 gives a non-decreasing profile");

  EpsilonProfile eps;
  eps.kind_ = kind;
  eps.p_ = params;

  double sup = 0.0;
  const auto grid = eps.check_grid();
  for (double t : grid) {
    const double e = eps(t);
    const double de = eps.derivative(t);
    if (!(e > 0.0))
      throw ValidationError("epsilon violates positivity at t = " + std::to_string(t));
    if (de > 0.0)
      throw ValidationError("epsilon must be nonincreasing: increases at t = " + std::to_string(t));
    sup = std::max(sup, std::abs(e) + std::abs(de));
  }
  if (kind != EpsilonProfile::Kind::constant && eps(grid.back()) > 1e-12 * params.eps0)
    throw ValidationError("epsilon must decay to 0: no decay on the check grid");
  // sup of |eps| + |eps'| over the real line; outside the grid both shapes are monotone toward eps0 or 0.
  eps.bound_ = std::max(sup, params.eps0) * (1.0 + 1e-9);
  return eps;
}

} // namespace tdattr
