#pragma once

// The process U(t, tau) as an opaque evaluator, and the pullback machinery built on it: ball
// sampling, ensemble propagation, attraction curves, omega-limit approximation, entry times,
// invariance checks, finite nets and the Gronwall bound.

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tdattr/errors.hpp"
#include "tdattr/model.hpp"
#include "tdattr/parallel.hpp"
#include "tdattr/solver.hpp"
#include "tdattr/tdspace.hpp"

namespace tdattr {

struct Evolution {
  State state;
  double error_estimate = 0.0;
};

/// Deterministic evaluator (z, tau, t) -> U(t, tau) z together with the norms of its phase space.
struct ProcessHandle {
  std::function<Evolution(const State&, double, double)> evaluator;
  EpsilonProfile eps;
  SpectrumView spectrum;
  double rtol = 0.0;
  double atol = 0.0;
  std::string description;

  Eigen::Index n_modes() const { return spectrum.size(); }
};

/// The Galerkin wave process backed by `integrate`.
inline ProcessHandle make_wave_process(const SpectralModel& model, SolverConfig cfg) {
  cfg.validate();
  cfg.output_cadence = 0.0;
  auto m = std::make_shared<const SpectralModel>(model);
  ProcessHandle p;
  p.eps = model.eps;
  p.spectrum = model.spectrum;
  p.rtol = cfg.rtol;
  p.atol = cfg.atol;
  p.description = "galerkin wave, " + std::to_string(model.n_modes) + " modes";
  p.evaluator = [m, cfg](const State& z, double tau, double t) {
    auto [state, rec] = integrate(*m, z, tau, t, cfg);
    return Evolution{std::move(state), rec.error_estimate};
  };
  return p;
}

inline Evolution evolve_traced(const ProcessHandle& p, const State& z, double tau, double t) {
  if (t < tau) throw DomainError("evolve: requires t >= tau");
  if (t == tau) return {z, 0.0};
  return p.evaluator(z, tau, t);
}

/// U(t, tau) z; the identity at t == tau.
inline State evolve(const ProcessHandle& p, const State& z, double tau, double t) {
  return evolve_traced(p, z, tau, t).state;
}

/// Member-wise evolution with labels preserved. A diverging member fails the call with its label.
inline Ensemble propagate_ensemble(const ProcessHandle& p, const Ensemble& b, double t) {
  const double tau = b.time();
  if (t < tau) throw DomainError("propagate_ensemble: requires t >= tau");
  if (t == tau) return b;
  std::vector<Member> out(b.size());
  parallel_for(b.size(), [&](std::size_t i) {
    try {
      out[i] = Member{b[i].label, evolve(p, b[i].state, tau, t)};
    } catch (const DivergenceError& e) {
      throw DivergenceError("member " + std::to_string(b[i].label) + ": " + e.message(), e.time());
    }
  });
  return Ensemble(t, std::move(out));
}

// ---------------------------------------------------------------------------------------------
// Sampling of B_tau(R)

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Generalized golden ratio: the positive root of x^{d+1} = x + 1.
inline double r2_root(std::size_t d) {
  double x = 2.0;
  for (int i = 0; i < 200; ++i) x = std::pow(1.0 + x, 1.0 / static_cast<double>(d + 1));
  return x;
}

} // namespace detail

/// Deterministic sample of B_tau(R) with labels 0..count-1.
///
/// Member n takes point n+1 of the R2 low-discrepancy sequence in dimension 2N, shifted by a
/// seed-derived offset, maps it through the inverse normal CDF and normalizes it to a direction
/// d on the unit sphere. The state is u_k = r d_k / sqrt(lambda_k), u_t,k = r d_{N+k} / sqrt(eps),
/// so that |z|_{H_tau} = r exactly, with r = R, R/2, R/4 cycling with n.
inline Ensemble sample_ball(const Ball& ball, std::size_t count, const EpsilonProfile& eps,
                            const SpectrumView& spectrum, std::uint64_t seed) {
  if (count == 0) throw InvalidInput("sample_ball: need at least one member");
  const auto n = spectrum.size();
  const std::size_t d = static_cast<std::size_t>(2 * n);
  const double phi = detail::r2_root(d);
  std::vector<double> step(d), offset(d);
  double pw = 1.0;
  for (std::size_t j = 0; j < d; ++j) {
    pw /= phi;
    step[j] = pw - std::floor(pw);
    offset[j] = static_cast<double>(detail::splitmix64(seed ^ (0x5bd1e995ULL * (j + 1))) >> 11) * 0x1.0p-53;
  }
  const double e = eps(ball.time);
  const auto& lam = spectrum.eigenvalues();
  std::vector<Member> members(count);
  for (std::size_t m = 0; m < count; ++m) {
    Vector dir(static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < d; ++j) {
      double x = offset[j] + static_cast<double>(m + 1) * step[j];
      x -= std::floor(x);
      x = std::clamp(x, 1e-15, 1.0 - 1e-15);
      dir(static_cast<Eigen::Index>(j)) = std::numbers::sqrt2 * boost::math::erf_inv(2.0 * x - 1.0);
    }
    const double len = dir.norm();
    dir /= len > 0.0 ? len : 1.0;
    const double r = ball.radius / static_cast<double>(1u << (m % 3));
    State z(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      z.u(k) = r * dir(k) / std::sqrt(lam(k));
      z.v(k) = r * dir(n + k) / std::sqrt(e);
    }
    members[m] = Member{static_cast<std::int64_t>(m), std::move(z)};
  }
  return Ensemble(ball.time, std::move(members));
}

// ---------------------------------------------------------------------------------------------

struct PullbackPoint {
  double tau = 0.0;
  double semidist = 0.0;
};

struct PullbackSample {
  double target_time = 0.0;
  double source_radius = 0.0;
  std::vector<double> tau_list;
  std::vector<Ensemble> propagated;
};

struct PullbackCurve {
  std::vector<PullbackPoint> points;
  PullbackSample sample;

  bool attracting(double eta) const { return !points.empty() && points.back().semidist < eta; }
};

inline void require_decreasing(const std::vector<double>& tau_list, double t, const char* who) {
  if (tau_list.empty()) throw InvalidInput(std::string(who) + ": empty tau list");
  for (std::size_t i = 0; i < tau_list.size(); ++i) {
    if (!(tau_list[i] <= t)) throw InvalidInput(std::string(who) + ": every tau must be <= t");
    if (i > 0 && !(tau_list[i] < tau_list[i - 1]))
      throw InvalidInput(std::string(who) + ": tau list must be strictly decreasing");
  }
}

/// delta_t(U(t, tau) B_tau(R), K) for each tau.
inline PullbackCurve pullback_curve(const ProcessHandle& p, double radius, double t, const std::vector<double>& tau_list,
                                    const Ensemble& k, double sigma, std::size_t members, std::uint64_t seed) {
  require_decreasing(tau_list, t, "pullback_curve");
  if (k.time() != t) throw InvalidInput("pullback_curve: target ensemble must live at time t");
  PullbackCurve out;
  out.sample.target_time = t;
  out.sample.source_radius = radius;
  out.sample.tau_list = tau_list;
  for (double tau : tau_list) {
    const Ensemble src = sample_ball(Ball(tau, radius), members, p.eps, p.spectrum, seed);
    Ensemble img = propagate_ensemble(p, src, t);
    out.points.push_back({tau, hausdorff_semidist(img, k, sigma, p.eps, p.spectrum)});
    out.sample.propagated.push_back(std::move(img));
  }
  return out;
}

/// Greedy subset F of B, scanned in label order, with every member of B closer than epsilon to F.
inline Ensemble finite_net(const Ensemble& b, double epsilon, const EpsilonProfile& eps, const SpectrumView& spectrum,
                           double sigma = 0.0) {
  if (b.size() == 0) throw InvalidInput("finite_net: empty ensemble");
  if (!(epsilon > 0.0)) throw DomainError("finite_net: epsilon must be positive");
  const TimeNorm norm(b.time(), sigma, eps, spectrum);
  std::vector<Member> kept;
  for (const auto& m : b.members()) {
    bool covered = false;
    for (const auto& c : kept)
      if (norm.distance(m.state, c.state) < epsilon) {
        covered = true;
        break;
      }
    if (!covered) kept.push_back(m);
  }
  return Ensemble(b.time(), std::move(kept));
}

struct AttractorProvenance {
  double source_radius = 0.0;
  double tau_depth = 0.0;
  double thin_tol = 0.0;
  std::vector<double> taus;
  std::size_t members_per_tau = 0;
  std::size_t merged_size = 0;
  std::uint64_t seed = 0;
};

struct AttractorApprox {
  double time = 0.0;
  Ensemble ensemble;  // thinned
  Ensemble merged;    // all propagated members before thinning
  AttractorProvenance provenance;
};

/// A*_t from samples of B_tau(R0) with tau = t - tau_depth - j * tau_spacing, j < tau_count, merged
/// and thinned at thin_tol. The member with label j * members + i comes from sample i of the j-th tau.
inline AttractorApprox omega_limit_approx(const ProcessHandle& p, double r0, double t, double tau_depth,
                                          double thin_tol, std::size_t members, std::uint64_t seed,
                                          std::size_t tau_count = 1, double tau_spacing = 0.0) {
  if (!(tau_depth > 0.0)) throw DomainError("omega_limit_approx: tau_depth must be positive");
  if (!(thin_tol > 0.0)) throw DomainError("omega_limit_approx: thin_tol must be positive");
  if (tau_count == 0) throw DomainError("omega_limit_approx: tau_count must be positive");
  if (tau_count > 1 && !(tau_spacing > 0.0)) throw DomainError("omega_limit_approx: tau_spacing must be positive");

  AttractorApprox out;
  out.time = t;
  out.provenance = {r0, tau_depth, thin_tol, {}, members, 0, seed};
  std::vector<Member> merged;
  for (std::size_t j = 0; j < tau_count; ++j) {
    const double tau = t - tau_depth - static_cast<double>(j) * tau_spacing;
    out.provenance.taus.push_back(tau);
    const Ensemble src = sample_ball(Ball(tau, r0), members, p.eps, p.spectrum, seed);
    Ensemble img;
    try {
      img = propagate_ensemble(p, src, t);
    } catch (const DivergenceError& e) {
      throw DivergenceError("omega_limit_approx at tau = " + std::to_string(tau) + ", " + e.message(), e.time());
    }
    for (const auto& m : img.members())
      merged.push_back({static_cast<std::int64_t>(j * members) + m.label, m.state});
  }
  out.merged = Ensemble(t, std::move(merged));
  out.provenance.merged_size = out.merged.size();
  out.ensemble = finite_net(out.merged, thin_tol, p.eps, p.spectrum);
  return out;
}

struct EntryScanPoint {
  double s = 0.0;
  double max_norm = 0.0; // largest |U(t, t-s) z|_{H_t} over the sample
  bool inside = false;
};

struct EntryTime {
  bool absorbed = false;
  double theta = std::numeric_limits<double>::quiet_NaN();
  std::vector<EntryScanPoint> scan;
};

/// Smallest s on {0, h, 2h, ...} (s <= horizon) with the sampled U(t, t-s) B_{t-s}(R) inside
/// B_t(R0) at s and the two following grid points. A scan without entry is reported as not absorbed.
inline EntryTime entry_time(const ProcessHandle& p, double radius, double t, double r0, double coarse_step,
                            double horizon, std::size_t members, std::uint64_t seed) {
  if (!(radius > 0.0) || !(r0 > 0.0) || !(coarse_step > 0.0))
    throw DomainError("entry_time: R, R0 and coarse_step must be positive");
  if (!(horizon >= 0.0)) throw DomainError("entry_time: horizon must be nonnegative");
  EntryTime out;
  const TimeNorm norm(t, 0.0, p.eps, p.spectrum);
  int run = 0;
  const auto steps = static_cast<long>(std::floor(horizon / coarse_step + 1e-9));
  for (long i = 0; i <= steps; ++i) {
    const double s = static_cast<double>(i) * coarse_step;
    const Ensemble src = sample_ball(Ball(t - s, radius), members, p.eps, p.spectrum, seed);
    const Ensemble img = propagate_ensemble(p, src, t);
    double worst = 0.0;
    for (const auto& m : img.members()) worst = std::max(worst, norm(m.state));
    const bool inside = worst <= r0;
    out.scan.push_back({s, worst, inside});
    run = inside ? run + 1 : 0;
    if (run == 3) {
      out.absorbed = true;
      out.theta = s - 2.0 * coarse_step;
      return out;
    }
  }
  return out;
}

struct InvarianceCheck {
  double forward = 0.0;  // delta_t(U(t, t-T) A_{t-T}, A_t)
  double backward = 0.0; // delta_t(A_t, U(t, t-T) A_{t-T})

  bool passes(double eta) const { return forward < eta && backward < eta; }
};

inline InvarianceCheck check_invariance(const ProcessHandle& p, const AttractorApprox& prev, const AttractorApprox& now,
                                        double period) {
  if (std::abs(prev.time - (now.time - period)) > 1e-12 * std::max(1.0, std::abs(now.time)))
    throw InvalidInput("check_invariance: A_prev must live at t - T");
  const Ensemble img = propagate_ensemble(p, prev.ensemble, now.time);
  return {hausdorff_semidist(img, now.ensemble, 0.0, p.eps, p.spectrum),
          hausdorff_semidist(now.ensemble, img, 0.0, p.eps, p.spectrum)};
}

// ---------------------------------------------------------------------------------------------

struct GronwallParams {
  double omega = 1.0;
  double k = 0.0;
  double m = 0.0;
  double lambda_tau = 0.0;
};

/// Lambda(tau) e^m e^{-omega (t - tau)} + k e^m / omega.
inline double gronwall_bound(const GronwallParams& g, double elapsed) {
  if (!(g.omega > 0.0)) throw DomainError("gronwall_bound: omega must be positive");
  if (g.k < 0.0 || g.m < 0.0 || g.lambda_tau < 0.0) throw DomainError("gronwall_bound: k, m, Lambda(tau) must be >= 0");
  if (elapsed < 0.0) throw DomainError("gronwall_bound: elapsed must be >= 0");
  const double em = std::exp(g.m);
  return g.lambda_tau * em * std::exp(-g.omega * elapsed) + g.k * em / g.omega;
}

} // namespace tdattr
