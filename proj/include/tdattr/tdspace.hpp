#pragma once

// Time-dependent phase-space geometry on the truncated eigenbasis:
//   |{a,b}|^2_{H^sigma_t} = |a|^2_{sigma+1} + eps(t) |b|^2_sigma,   |w|_s^2 = sum_k lambda_k^s w_k^2
// and the set-level tools (semidistance, neighborhoods, covering radius) acting on finite
// ensembles standing in for bounded sets.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "tdattr/epsilon.hpp"
#include "tdattr/errors.hpp"
#include "tdattr/parallel.hpp"

namespace tdattr {

using Vector = Eigen::VectorXd;

/// One point {u, u_t} of the phase space in modal coordinates.
struct State {
  Vector u;
  Vector v;

  State() = default;
  explicit State(Eigen::Index n_modes) : u(Vector::Zero(n_modes)), v(Vector::Zero(n_modes)) {}
  State(Vector u_coeffs, Vector v_coeffs) : u(std::move(u_coeffs)), v(std::move(v_coeffs)) {
    if (u.size() != v.size()) throw InvalidInput("State: u and v coefficient vectors differ in length");
  }

  Eigen::Index n_modes() const noexcept { return u.size(); }
  bool finite() const noexcept { return u.allFinite() && v.allFinite(); }

  State& operator+=(const State& o) {
    u += o.u;
    v += o.v;
    return *this;
  }
  State& operator-=(const State& o) {
    u -= o.u;
    v -= o.v;
    return *this;
  }
  State& operator*=(double s) {
    u *= s;
    v *= s;
    return *this;
  }
  friend State operator+(State a, const State& b) { return a += b; }
  friend State operator-(State a, const State& b) { return a -= b; }
  friend State operator*(double s, State a) { return a *= s; }
  friend bool operator==(const State& a, const State& b) {
    return a.u.size() == b.u.size() && a.u == b.u && a.v == b.v;
  }
};

struct Member {
  std::int64_t label = 0;
  State state;
};

/// Finite labelled point cloud at a common time. Members are kept sorted by label.
class Ensemble {
public:
  Ensemble() = default;

  Ensemble(double time, std::vector<Member> members) : time_(time), members_(std::move(members)) {
    if (!std::isfinite(time_)) throw InvalidInput("Ensemble: time must be finite");
    if (members_.empty()) throw InvalidInput("Ensemble: must have at least one member");
    std::sort(members_.begin(), members_.end(),
              [](const Member& a, const Member& b) { return a.label < b.label; });
    const auto n = members_.front().state.n_modes();
    for (std::size_t i = 0; i < members_.size(); ++i) {
      if (members_[i].state.n_modes() != n)
        throw InvalidInput("Ensemble: members disagree on n_modes");
      if (i > 0 && members_[i].label == members_[i - 1].label)
        throw InvalidInput("Ensemble: duplicate label " + std::to_string(members_[i].label));
    }
  }

  double time() const noexcept { return time_; }
  std::size_t size() const noexcept { return members_.size(); }
  Eigen::Index n_modes() const { return members_.empty() ? 0 : members_.front().state.n_modes(); }
  const std::vector<Member>& members() const noexcept { return members_; }
  const Member& operator[](std::size_t i) const { return members_[i]; }

  const Member* find(std::int64_t label) const {
    auto it = std::lower_bound(members_.begin(), members_.end(), label,
                               [](const Member& m, std::int64_t l) { return m.label < l; });
    return (it != members_.end() && it->label == label) ? &*it : nullptr;
  }

private:
  double time_ = 0.0;
  std::vector<Member> members_;
};

/// B_t(R), the closed R-ball of H_t.
struct Ball {
  double time = 0.0;
  double radius = 0.0;

  Ball(double t, double r) : time(t), radius(r) {
    if (!(r >= 0.0)) throw DomainError("Ball: radius must be nonnegative");
  }
};

/// Dirichlet eigenvalues lambda_1 <= lambda_2 <= ... of A = -Laplacian on the truncated basis.
class SpectrumView {
public:
  SpectrumView() = default;
  explicit SpectrumView(Vector eigenvalues) : lambda_(std::move(eigenvalues)) {
    if (lambda_.size() == 0) throw InvalidInput("SpectrumView: empty spectrum");
    if (!(lambda_(0) > 0.0)) throw InvalidInput("SpectrumView: lambda_1 must be positive");
    for (Eigen::Index k = 1; k < lambda_.size(); ++k)
      if (!(lambda_(k) >= lambda_(k - 1))) throw InvalidInput("SpectrumView: eigenvalues must be nondecreasing");
  }

  const Vector& eigenvalues() const noexcept { return lambda_; }
  double lambda_1() const { return lambda_(0); }
  Eigen::Index size() const noexcept { return lambda_.size(); }

private:
  Vector lambda_;
};

/// |w|_sigma = sqrt(sum_k lambda_k^sigma w_k^2).
inline double fractional_norm(const Vector& w, double sigma, const SpectrumView& spectrum) {
  if (!(sigma >= 0.0 && sigma <= 3.0)) throw DomainError("fractional_norm: sigma must lie in [0, 3]");
  if (w.size() != spectrum.size()) throw InvalidInput("fractional_norm: coefficient length differs from spectrum");
  if (!w.allFinite()) throw InvalidInput("fractional_norm: non-finite coefficient");
  if (sigma == 0.0) return w.norm();
  return std::sqrt((spectrum.eigenvalues().array().pow(sigma) * w.array().square()).sum());
}

/// Frozen H^sigma_t norm: the weights lambda^{sigma+1} and eps(t) lambda^sigma are computed once,
/// so distance loops over ensembles stay allocation free.
class TimeNorm {
public:
  TimeNorm(double t, double sigma, const EpsilonProfile& eps, const SpectrumView& spectrum)
    : TimeNorm(eps(t), sigma, spectrum) {}

  TimeNorm(double eps_value, double sigma, const SpectrumView& spectrum) : eps_(eps_value), sigma_(sigma) {
    if (!(sigma >= 0.0 && sigma <= 2.0)) throw DomainError("H^sigma_t norm: sigma must lie in [0, 2]");
    const auto& lam = spectrum.eigenvalues().array();
    wu_ = lam.pow(sigma + 1.0).matrix();
    wv_ = (eps_value * lam.pow(sigma)).matrix();
  }

  double eps() const noexcept { return eps_; }
  double sigma() const noexcept { return sigma_; }

  double squared(const State& z) const {
    check(z);
    return (wu_.array() * z.u.array().square()).sum() + (wv_.array() * z.v.array().square()).sum();
  }
  double operator()(const State& z) const { return std::sqrt(squared(z)); }

  double distance(const State& a, const State& b) const {
    check(a);
    check(b);
    return std::sqrt((wu_.array() * (a.u - b.u).array().square()).sum() +
                     (wv_.array() * (a.v - b.v).array().square()).sum());
  }

private:
  void check(const State& z) const {
    if (z.n_modes() != wu_.size()) throw InvalidInput("H_t norm: state mode count differs from spectrum");
  }

  double eps_;
  double sigma_;
  Vector wu_;
  Vector wv_;
};

inline double norm_t(const State& z, double t, double sigma, const EpsilonProfile& eps,
                     const SpectrumView& spectrum) {
  if (!z.finite()) throw InvalidInput("norm_t: non-finite state");
  return TimeNorm(t, sigma, eps, spectrum)(z);
}

/// max{1, eps(tau)/eps(t)}: the constant c with |z|^2_{H_tau} <= c |z|^2_{H_t} for t >= tau.
inline double norm_equivalence_factor(double t, double tau, const EpsilonProfile& eps) {
  if (t < tau) throw DomainError("norm_equivalence_factor: requires t >= tau");
  return std::max(1.0, eps(tau) / eps(t));
}

namespace detail {
inline void require_compatible(const Ensemble& b, const Ensemble& c) {
  if (b.size() == 0 || c.size() == 0) throw InvalidInput("semidistance: empty ensemble");
  if (b.n_modes() != c.n_modes()) throw InvalidInput("semidistance: ensembles disagree on n_modes");
}

inline double distance_to_set(const State& x, const Ensemble& c, const TimeNorm& norm) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& m : c.members()) best = std::min(best, norm.distance(x, m.state));
  return best;
}
} // namespace detail

/// delta_t(B, C) = max_{x in B} min_{y in C} |x - y|_{H^sigma_t}, with t = B.time().
inline double hausdorff_semidist(const Ensemble& b, const Ensemble& c, double sigma, const EpsilonProfile& eps,
                                 const SpectrumView& spectrum) {
  detail::require_compatible(b, c);
  const TimeNorm norm(b.time(), sigma, eps, spectrum);
  std::vector<double> dist(b.size());
  parallel_for(b.size(), [&](std::size_t i) { dist[i] = detail::distance_to_set(b[i].state, c, norm); });
  return *std::max_element(dist.begin(), dist.end());
}

/// Membership in the open epsilon-neighborhood O^epsilon_t(B) in the H_t norm at t = B.time().
inline bool in_neighborhood(const State& x, const Ensemble& b, double epsilon, const EpsilonProfile& eps,
                            const SpectrumView& spectrum, double sigma = 0.0) {
  if (!(epsilon > 0.0)) throw DomainError("in_neighborhood: epsilon must be positive");
  if (b.size() == 0) throw InvalidInput("in_neighborhood: empty ensemble");
  const TimeNorm norm(b.time(), sigma, eps, spectrum);
  return detail::distance_to_set(x, b, norm) < epsilon;
}

struct Covering {
  double radius = 0.0;
  std::vector<std::int64_t> centers;
};

/// Farthest-first traversal k-center. The first center is the lowest label; later centers are the
/// farthest remaining member, ties broken by lowest label. The radius is within a factor 2 of the
/// optimal k-center radius over member-restricted centers.
inline Covering covering_radius(const Ensemble& b, std::size_t n_centers, const EpsilonProfile& eps,
                                const SpectrumView& spectrum, double sigma = 0.0) {
  if (b.size() == 0) throw InvalidInput("covering_radius: empty ensemble");
  if (n_centers == 0) throw DomainError("covering_radius: need at least one center");
  const TimeNorm norm(b.time(), sigma, eps, spectrum);

  Covering out;
  std::vector<double> nearest(b.size(), std::numeric_limits<double>::infinity());
  std::size_t next = 0;
  const std::size_t k = std::min(n_centers, b.size());
  for (std::size_t c = 0; c < k; ++c) {
    out.centers.push_back(b[next].label);
    const State& center = b[next].state;
    parallel_for(b.size(), [&](std::size_t i) { nearest[i] = std::min(nearest[i], norm.distance(b[i].state, center)); });
    // strict comparison keeps the lowest label among ties (members are label-sorted)
    next = 0;
    for (std::size_t i = 1; i < b.size(); ++i)
      if (nearest[i] > nearest[next]) next = i;
  }
  out.radius = k == b.size() ? 0.0 : *std::max_element(nearest.begin(), nearest.end());
  return out;
}

} // namespace tdattr
