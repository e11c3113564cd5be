#pragma once

// Concrete ingredients of  eps(t) u_tt + alpha u_t + A u + f(u) = g  on Omega = (0,1) with
// Dirichlet conditions, truncated to the first N sine modes e_k(x) = sqrt(2) sin(k pi x).

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "tdattr/epsilon.hpp"
#include "tdattr/errors.hpp"
#include "tdattr/tdspace.hpp"

namespace tdattr {

using Matrix = Eigen::MatrixXd;

/// Sine-collocation grid with M = 2N + 2 intervals. The trapezoid rule on it integrates every
/// product of four truncated modes exactly, so Galerkin projections of cubic terms and the
/// integral of quartic antiderivatives carry only round-off.
class Galerkin1D {
public:
  Galerkin1D() = default;

  explicit Galerkin1D(Eigen::Index n_modes) : n_(n_modes), intervals_(2 * n_modes + 2) {
    if (n_modes < 1) throw InvalidInput("Galerkin1D: need at least one mode");
    const Eigen::Index pts = intervals_ - 1;
    nodes_.resize(pts);
    synth_.resize(pts, n_);
    for (Eigen::Index j = 0; j < pts; ++j) {
      nodes_(j) = static_cast<double>(j + 1) / static_cast<double>(intervals_);
      for (Eigen::Index k = 0; k < n_; ++k)
        synth_(j, k) = std::numbers::sqrt2 * std::sin(std::numbers::pi * static_cast<double>((k + 1) * (j + 1)) /
                                                     static_cast<double>(intervals_));
    }
    analysis_ = synth_.transpose() / static_cast<double>(intervals_);
  }

  Eigen::Index n_modes() const noexcept { return n_; }
  Eigen::Index grid_size() const noexcept { return nodes_.size(); }
  const Vector& nodes() const noexcept { return nodes_; }

  /// Point values of sum_k c_k e_k at the interior nodes.
  Vector to_grid(const Vector& coeffs) const { return synth_ * coeffs; }

  /// <h, e_k> for grid samples h (endpoint values are zero for the sine family).
  Vector project(const Vector& grid_values) const { return analysis_ * grid_values; }

  /// Integral over (0,1) of a function vanishing at both ends, from interior samples.
  double integrate(const Vector& grid_values) const { return grid_values.sum() / static_cast<double>(intervals_); }

private:
  Eigen::Index n_ = 0;
  Eigen::Index intervals_ = 0;
  Vector nodes_;
  Matrix synth_;
  Matrix analysis_;
};

/// f with its derivatives and antiderivative F (F(0) = 0), plus the constants the energy
/// estimates need: growth constant c of |f''| <= c(1+|s|), the pair (nu, c1) of the
/// dissipation inequalities, and bounds F(s) <= a s^2 + b s^4 used for the upper energy sandwich.
struct Nonlinearity {
  std::string name;
  std::function<double(double)> f;
  std::function<double(double)> df;
  std::function<double(double)> d2f;
  std::function<double(double)> F;
  double growth_c = 0.0;
  double nu = 0.5;
  double c1 = 0.0;
  double F_quadratic_bound = 0.0;
  double F_quartic_bound = 0.0;
  double linear_part = 0.0; // kappa with f(s) - kappa s nonlinear; the solver treats kappa s exactly
};

/// f = f0 + f1 with |f1'| <= k, |f0''(s)| <= k(1+|s|), f0(0) = f0'(0) = 0, f0(s) s >= 0.
struct Splitting {
  std::function<double(double)> f0;
  std::function<double(double)> df0;
  std::function<double(double)> d2f0;
  std::function<double(double)> F0;
  std::function<double(double)> f1;
  std::function<double(double)> df1;
  double k_lipschitz = 0.0; // bound on |f1'|
  double k_growth = 0.0;    // bound in |f0''(s)| <= k (1 + |s|)
  double k = 0.0;           // max of the two
};

struct NonlinearPair {
  Nonlinearity nonlinearity;
  Splitting splitting;
};

/// Lowest margins of the dissipation inequalities over a set of fields; c1 must dominate
/// their negative parts.
struct DissipationMargins {
  double funz1 = 0.0;        // 2<F(u),1> + (1 - nu)|u|_1^2
  double funz1_strong = 0.0; // 2<F(u),1> + (1 - 2 nu)|u|_1^2, used by the lower energy bound
  double funz2 = 0.0;        // <f(u),u> + (1 - nu)|u|_1^2
  double extra = 0.0;        // 2<f(u),u> - 2<F(u),1> + (1 - nu)|u|_1^2

  double worst() const { return std::min(std::min(funz1, funz1_strong), std::min(funz2, extra)); }
};

namespace detail {

inline DissipationMargins margins_of(const Nonlinearity& nl, const Galerkin1D& grid, const Vector& lambda,
                                     const Vector& u) {
  const Vector ug = grid.to_grid(u);
  Vector Fg(ug.size());
  Vector fug(ug.size());
  for (Eigen::Index j = 0; j < ug.size(); ++j) {
    Fg(j) = nl.F(ug(j));
    fug(j) = nl.f(ug(j)) * ug(j);
  }
  const double intF = grid.integrate(Fg);
  const double fu = grid.integrate(fug);
  const double h1 = (lambda.array() * u.array().square()).sum();
  DissipationMargins m;
  m.funz1 = 2.0 * intF + (1.0 - nl.nu) * h1;
  m.funz1_strong = 2.0 * intF + (1.0 - 2.0 * nl.nu) * h1;
  m.funz2 = fu + (1.0 - nl.nu) * h1;
  m.extra = 2.0 * fu - 2.0 * intF + (1.0 - nl.nu) * h1;
  return m;
}

inline Vector dirichlet_eigenvalues(Eigen::Index n) {
  Vector lam(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double kp = static_cast<double>(k + 1) * std::numbers::pi;
    lam(k) = kp * kp;
  }
  return lam;
}

/// Random truncated field with a random H_1 size in [0, max_h1] and a random spectral slope.
inline Vector random_field(std::mt19937_64& rng, const Vector& lambda, double max_h1) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double slope = 2.0 * unit(rng);
  Vector u(lambda.size());
  for (Eigen::Index k = 0; k < u.size(); ++k) u(k) = gauss(rng) / std::pow(static_cast<double>(k + 1), slope);
  const double h1 = std::sqrt((lambda.array() * u.array().square()).sum());
  if (h1 > 0.0) u *= max_h1 * unit(rng) / h1;
  return u;
}

/// c1 = max(0, -min margin) over a coarse family of fields: single modes and pairs of the first
/// eight modes at dyadic H_1 amplitudes up to 64.
inline double estimate_c1(const Nonlinearity& nl) {
  constexpr Eigen::Index n = 8;
  const Galerkin1D grid(n);
  const Vector lambda = dirichlet_eigenvalues(n);
  double worst = 0.0;
  for (double amp = 1.0 / 64.0; amp <= 64.0; amp *= 2.0) {
    for (Eigen::Index a = 0; a < n; ++a) {
      for (Eigen::Index b = a; b < n; ++b) {
        for (double sign : {1.0, -1.0}) {
          Vector u = Vector::Zero(n);
          u(a) += 1.0;
          u(b) += sign;
          const double h1 = std::sqrt((lambda.array() * u.array().square()).sum());
          if (h1 == 0.0) continue;
          u *= amp / h1;
          worst = std::min(worst, margins_of(nl, grid, lambda, u).worst());
        }
      }
    }
  }
  return std::max(0.0, -worst);
}

} // namespace detail

/// f(s) = s^3 - mu s with the split f0(s) = s^3, f1(s) = -mu s. Requires 0 <= mu < lambda_1 so
/// that the dissipation margin survives; nu = (1 - mu/lambda_1)/2 and c1 is estimated.
inline NonlinearPair make_cubic_nonlinearity(double mu, double lambda_1 = std::numbers::pi * std::numbers::pi) {
  if (!std::isfinite(mu) || mu < 0.0) throw ValidationError("cubic nonlinearity: mu must be finite and >= 0");
  if (mu >= lambda_1)
    throw ValidationError("cubic nonlinearity: mu = " + std::to_string(mu) + " >= lambda_1 = " +
                          std::to_string(lambda_1) + " loses the dissipation margin");
  NonlinearPair out;
  auto& nl = out.nonlinearity;
  nl.name = "cubic";
  nl.f = [mu](double s) { return s * s * s - mu * s; };
  nl.df = [mu](double s) { return 3.0 * s * s - mu; };
  nl.d2f = [](double s) { return 6.0 * s; };
  nl.F = [mu](double s) { return 0.25 * s * s * s * s - 0.5 * mu * s * s; };
  nl.growth_c = 6.0;
  nl.nu = 0.5 * (1.0 - mu / lambda_1);
  nl.F_quadratic_bound = 0.0;
  nl.F_quartic_bound = 0.25;
  nl.linear_part = -mu;
  nl.c1 = detail::estimate_c1(nl);

  auto& sp = out.splitting;
  sp.f0 = [](double s) { return s * s * s; };
  sp.df0 = [](double s) { return 3.0 * s * s; };
  sp.d2f0 = [](double s) { return 6.0 * s; };
  sp.F0 = [](double s) { return 0.25 * s * s * s * s; };
  sp.f1 = [mu](double s) { return -mu * s; };
  sp.df1 = [mu](double) { return -mu; };
  sp.k_lipschitz = mu;
  sp.k_growth = 6.0;
  sp.k = std::max(mu, 6.0);
  return out;
}

/// f(s) = kappa s. Test hook: with kappa = 1 the Galerkin projection is the identity, with
/// kappa = 0 the equation is linear. The split puts everything into f1.
inline NonlinearPair make_linear_nonlinearity(double kappa) {
  NonlinearPair out;
  auto& nl = out.nonlinearity;
  nl.name = kappa == 0.0 ? "zero" : "linear";
  nl.f = [kappa](double s) { return kappa * s; };
  nl.df = [kappa](double) { return kappa; };
  nl.d2f = [](double) { return 0.0; };
  nl.F = [kappa](double s) { return 0.5 * kappa * s * s; };
  nl.growth_c = 0.0;
  nl.nu = 0.5 * (1.0 - std::max(0.0, -kappa) / (std::numbers::pi * std::numbers::pi));
  nl.F_quadratic_bound = std::max(0.0, 0.5 * kappa);
  nl.F_quartic_bound = 0.0;
  nl.linear_part = kappa;
  nl.c1 = detail::estimate_c1(nl);

  auto& sp = out.splitting;
  sp.f0 = [](double) { return 0.0; };
  sp.df0 = [](double) { return 0.0; };
  sp.d2f0 = [](double) { return 0.0; };
  sp.F0 = [](double) { return 0.0; };
  sp.f1 = [kappa](double s) { return kappa * s; };
  sp.df1 = [kappa](double) { return kappa; };
  sp.k_lipschitz = std::abs(kappa);
  sp.k_growth = 0.0;
  sp.k = std::abs(kappa);
  return out;
}

/// Forcing specification: zero, explicit modal coefficients, or a function of x projected by
/// composite Gauss-Legendre quadrature.
struct ForcingSpec {
  struct Zero {};
  struct Modal {
    Vector coeffs;
  };
  struct Function {
    std::string name;
    std::function<double(double)> g;
  };
  std::variant<Zero, Modal, Function> spec = Zero{};
  std::string description = "zero";

  static ForcingSpec zero() { return {}; }
  static ForcingSpec modal(Vector c, std::string description = "modal") {
    return {Modal{std::move(c)}, std::move(description)};
  }
  static ForcingSpec function(std::string name, std::function<double(double)> g) {
    auto d = name;
    return {Function{std::move(name), std::move(g)}, std::move(d)};
  }
};

namespace detail {

/// Gauss-Legendre nodes and weights on [-1, 1] via Newton iteration on P_n.
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
  std::vector<double> x(static_cast<std::size_t>(n)), w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[static_cast<std::size_t>(i)] = z;
    w[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return {x, w};
}

inline Vector project_function(const std::function<double(double)>& g, Eigen::Index n_modes) {
  const auto [gx, gw] = gauss_legendre(16);
  const Eigen::Index panels = 8 * n_modes;
  Vector c = Vector::Zero(n_modes);
  for (Eigen::Index p = 0; p < panels; ++p) {
    const double a = static_cast<double>(p) / panels;
    const double half = 0.5 / panels;
    for (std::size_t q = 0; q < gx.size(); ++q) {
      const double x = a + half * (1.0 + gx[q]);
      const double gv = g(x) * gw[q] * half;
      if (!std::isfinite(gv)) throw ValidationError("forcing function is not finite at x = " + std::to_string(x));
      for (Eigen::Index k = 0; k < n_modes; ++k)
        c(k) += gv * std::numbers::sqrt2 * std::sin(static_cast<double>(k + 1) * std::numbers::pi * x);
    }
  }
  return c;
}

} // namespace detail

/// Constants of the energy method fixed at assembly.
struct EnergyConstants {
  double L = 1.0;         // sup |eps| + |eps'|
  double delta = 0.0;     // weight of the perturbation terms in the energy functional
  double nu = 0.5;
  double c1 = 0.0;
  double lower_C = 0.0;   // nu E - lower_C <= scriptE
  double upper_C = 0.0;   // scriptE <= upper_C (E^2 + 1)
};

struct SpectralModel {
  Eigen::Index n_modes = 0;
  SpectrumView spectrum;
  double alpha = 1.0;
  Vector g;
  std::string g_description = "zero";
  EpsilonProfile eps;
  Nonlinearity nonlinearity;
  Splitting splitting;
  Galerkin1D grid;
  EnergyConstants energy;

  const Vector& lambda() const { return spectrum.eigenvalues(); }
};

namespace detail {

/// Per-mode positive semidefiniteness of the two quadratic forms that make the energy law
/// hold along Galerkin trajectories, on the profile's check grid:
///   Gamma = [alpha/2 - eps' - 3 d eps] v^2 + (d nu lambda/2 - d^2 alpha) u^2 - 2 d^2 eps u v
///   exact = [alpha - eps' - 3 d eps] v^2 + (d nu lambda - d^2 alpha) u^2 - 2 d (eps' + d eps) u v
inline bool energy_forms_nonnegative(const SpectralModel& m, double d) {
  const double nu = m.nonlinearity.nu;
  const auto grid = m.eps.check_grid(801);
  for (double t : grid) {
    const double e = m.eps(t);
    const double de = m.eps.derivative(t);
    for (Eigen::Index k = 0; k < m.n_modes; ++k) {
      const double lam = m.lambda()(k);
      const double a1 = 0.5 * m.alpha - de - 3.0 * d * e;
      const double c1 = 0.5 * d * nu * lam - d * d * m.alpha;
      const double b1 = d * d * e;
      if (a1 < 0.0 || c1 < 0.0 || a1 * c1 < b1 * b1) return false;
      const double a2 = m.alpha - de - 3.0 * d * e;
      const double c2 = d * nu * lam - d * d * m.alpha;
      const double b2 = d * (de + d * e);
      if (a2 < 0.0 || c2 < 0.0 || a2 * c2 < b2 * b2) return false;
    }
  }
  return d * m.alpha - 2.0 * d * d * m.eps.bound() >= 0.0;
}

inline EnergyConstants energy_constants(const SpectralModel& m) {
  EnergyConstants c;
  c.L = m.eps.bound();
  c.nu = std::min(0.5, m.nonlinearity.nu);
  c.c1 = m.nonlinearity.c1;
  const double cap = m.alpha / (8.0 * c.L + 8.0);
  double d = std::exp2(std::floor(std::log2(cap)));
  int halvings = 0;
  while (!energy_forms_nonnegative(m, d)) {
    d *= 0.5;
    if (++halvings > 60) throw ValidationError("no admissible delta for the energy functional");
  }
  c.delta = d;
  const double lam1 = m.spectrum.lambda_1();
  const double g2 = m.g.squaredNorm();
  c.lower_C = c.c1 + g2 / (c.nu * lam1);
  const double a = m.nonlinearity.F_quadratic_bound;
  const double b = m.nonlinearity.F_quartic_bound;
  // In 1D, sup|u|^2 <= |u|_1^2 / 4 and |u|^2 <= |u|_1^2 / lambda_1.
  const double lin = 2.0 + (d * m.alpha + d * d * c.L + 2.0 * a + 1.0) / lam1;
  const double quad = b / (2.0 * lam1);
  c.upper_C = std::max(quad + 0.5 * lin, g2 + 0.5 * lin);
  return c;
}

} // namespace detail

/// Validates the ingredients and fixes the energy constants.
inline SpectralModel assemble_model(Eigen::Index n_modes, double alpha, const ForcingSpec& g_spec,
                                    const EpsilonProfile& eps, const NonlinearPair& nonlin) {
  if (n_modes < 1) throw ValidationError("assemble_model: n_modes must be >= 1");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ValidationError("assemble_model: alpha must be positive");

  SpectralModel m;
  m.n_modes = n_modes;
  m.spectrum = SpectrumView(detail::dirichlet_eigenvalues(n_modes));
  m.alpha = alpha;
  m.eps = eps;
  m.nonlinearity = nonlin.nonlinearity;
  m.splitting = nonlin.splitting;
  m.grid = Galerkin1D(n_modes);
  m.g_description = g_spec.description;

  std::visit(
    [&](const auto& s) {
      using S = std::decay_t<decltype(s)>;
      if constexpr (std::is_same_v<S, ForcingSpec::Zero>) {
        m.g = Vector::Zero(n_modes);
      } else if constexpr (std::is_same_v<S, ForcingSpec::Modal>) {
        if (s.coeffs.size() > n_modes)
          throw ValidationError("forcing: " + std::to_string(s.coeffs.size()) + " modal coefficients for " +
                                std::to_string(n_modes) + " modes");
        m.g = Vector::Zero(n_modes);
        m.g.head(s.coeffs.size()) = s.coeffs;
      } else {
        if (!s.g) throw ValidationError("forcing: empty function");
        m.g = detail::project_function(s.g, n_modes);
      }
    },
    g_spec.spec);
  if (!m.g.allFinite()) throw ValidationError("forcing: non-finite modal coefficient");

  m.energy = detail::energy_constants(m);
  return m;
}

/// Modal coefficients of the L^2 projection of f(u) onto the truncated basis.
inline Vector nonlinear_term(const SpectralModel& m, const Vector& u) {
  if (u.size() != m.n_modes) throw InvalidInput("nonlinear_term: coefficient length differs from model");
  Vector ug = m.grid.to_grid(u);
  for (Eigen::Index j = 0; j < ug.size(); ++j) {
    const double s = ug(j);
    const double fs = m.nonlinearity.f(s);
    if (!std::isfinite(fs))
      throw DivergenceError("nonlinear_term: f overflow at grid value " + std::to_string(s), std::nan(""));
    ug(j) = fs;
  }
  return m.grid.project(ug);
}

/// <F(u), 1> by exact quadrature.
inline double potential_integral(const SpectralModel& m, const Vector& u, const std::function<double(double)>& F) {
  Vector ug = m.grid.to_grid(u);
  for (Eigen::Index j = 0; j < ug.size(); ++j) ug(j) = F(ug(j));
  return m.grid.integrate(ug);
}

/// Worst dissipation margins of the model's nonlinearity over `samples` random truncated fields
/// with H_1 size up to max_h1. Margins >= -c1 certify the stored (nu, c1).
inline DissipationMargins sample_dissipation_margins(const SpectralModel& m, int samples, double max_h1,
                                                     std::uint64_t seed = 17) {
  std::mt19937_64 rng(seed);
  DissipationMargins worst{1e300, 1e300, 1e300, 1e300};
  for (int i = 0; i < samples; ++i) {
    const Vector u = detail::random_field(rng, m.lambda(), max_h1);
    const auto mg = detail::margins_of(m.nonlinearity, m.grid, m.lambda(), u);
    worst.funz1 = std::min(worst.funz1, mg.funz1);
    worst.funz1_strong = std::min(worst.funz1_strong, mg.funz1_strong);
    worst.funz2 = std::min(worst.funz2, mg.funz2);
    worst.extra = std::min(worst.extra, mg.extra);
  }
  return worst;
}

} // namespace tdattr
