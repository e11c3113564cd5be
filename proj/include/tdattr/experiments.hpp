#pragma once

// Drivers that turn the estimates of the attractor theory into measurements. Each driver only
// orchestrates solver and process calls and returns an ExperimentReport.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "json.hpp"

#include "tdattr/errors.hpp"
#include "tdattr/model.hpp"
#include "tdattr/process.hpp"
#include "tdattr/solver.hpp"
#include "tdattr/tdspace.hpp"

namespace tdattr {

using ojson = nlohmann::ordered_json;

enum class Verdict { pass, fail, inconclusive };

inline std::string verdict_name(Verdict v) {
  switch (v) {
  case Verdict::pass: return "pass";
  case Verdict::fail: return "fail";
  case Verdict::inconclusive: return "inconclusive";
  }
  return "fail";
}

/// Column-named numeric table.
struct Series {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void add(std::vector<double> row) {
    if (row.size() != columns.size()) throw InvalidInput("Series: row width differs from header");
    rows.push_back(std::move(row));
  }
};

struct ExperimentReport {
  std::string id;
  ojson parameters = ojson::object();
  Series series;
  ojson scalars = ojson::object();
  Verdict verdict = Verdict::fail;
  std::string reason;
  ojson tolerances = ojson::object();
  ojson provenance = ojson::object();
  double runtime_seconds = 0.0;
};

/// Shared inputs of the model-based drivers.
struct ExperimentContext {
  const SpectralModel* model = nullptr;
  SolverConfig solver;
  std::uint64_t seed = 0;
  double r0 = 1.0; // radius of the absorbing ball used for "absorbing-ball data"

  const SpectralModel& m() const { return *model; }
  ProcessHandle process() const { return make_wave_process(*model, solver); }
};

// ---------------------------------------------------------------------------------------------
// Parameters

struct OracleParams {
  std::vector<double> eps_values{1.0, 0.1, 0.01};
  double alpha = 1.0;
  int modes = 16;
  double elapsed = 50.0;
  double cadence = 0.5;
  double tolerance = 1e-6;
};

struct GronwallExperimentParams {
  int draws = 100;
  double horizon = 20.0;
  double dt = 1e-3;
  double slack = 1e-9;
  int csv_stride = 200;
};

struct NormEquivalenceParams {
  int draws = 10000;
  double witness_tau = 0.0;
  double witness_t = 60.0;
  double witness_min = 1e3;
  double rel_tol = 1e-12;
};

struct EnergyLawParams {
  std::size_t members = 16;
  double tau = 0.0;
  double horizon = 40.0;
  double cadence = 0.005;
  double radius_factor = 2.0;
  double min_fraction = 0.99;
  double abs_tol = 1e-6;
  double error_factor = 10.0;
  int csv_stride = 20;
};

struct AbsorbingParams {
  double t = -40.0;
  double coarse_step = 0.05;
  double horizon = 12.0;
  std::size_t members = 16;
  std::vector<double> r0_grid{0.25, 0.5, 1.0, 2.0, 4.0};
  std::vector<double> multiples{2.0, 4.0, 8.0};
  double slope_tolerance = 0.2;
};

struct DissipationParams {
  std::size_t members = 16;
  double tau = 0.0;
  double horizon = 30.0; // compared against 2 * horizon
  double cadence = 0.01;
  double growth_tol = 0.05;
  int csv_stride = 50;
};

struct DecompositionParams {
  std::size_t members = 16;
  double tau = -20.0;
  double horizon = 20.0; // compared against 2 * horizon
  double cadence = 0.05;
  double delta_min = 0.01;
  double growth_tol = 0.05;
  double norm_floor = 1e-12; // samples below floor * |z| are left out of the decay fit
  double attractor_depth = 40.0;
  int csv_stride = 4;
};

struct AttractorParams {
  std::vector<double> t_list{0.0, 10.0};
  double tau_depth = 40.0;
  double thin_tol = 1e-3;
  std::size_t members = 64;
  std::vector<double> curve_depths{5, 10, 15, 20, 25, 30, 35, 40};
  std::size_t curve_members = 32;
  double radius_factor = 2.0;
  double eta = 1e-2;
  double jitter = 0.1;
  std::size_t n_centers = 4;
  double growth_tol = 0.05;
};

struct InvarianceParams {
  double t = 10.0;
  std::vector<double> periods{1.0, 5.0, 10.0};
  double tau_depth = 40.0;
  double thin_tol = 1e-3;
  std::size_t members = 64;
  double eta = 1e-2;
};

struct UniformAttractionParams {
  double a = 0.0;
  double b = 10.0;
  double t_step = 2.5;
  std::vector<double> tau_depths{5, 10, 15, 20, 25, 30, 35, 40};
  std::size_t members = 32;
  double radius_factor = 2.0;
  double attractor_depth = 40.0;
  std::size_t attractor_members = 64;
  double thin_tol = 1e-3;
  double eta = 2e-2;
};

struct ContdepParams {
  std::size_t pairs = 8;
  double tau = 0.0;
  double horizon = 10.0;
  double cadence = 0.05;
  double radius_factor = 1.0;
};

// ---------------------------------------------------------------------------------------------

namespace detail {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double max_residual = 0.0;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit f;
  const std::size_t n = x.size();
  if (n < 2) return f;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double dn = static_cast<double>(n);
  const double den = dn * sxx - sx * sx;
  f.slope = den != 0.0 ? (dn * sxy - sx * sy) / den : 0.0;
  f.intercept = (sy - f.slope * sx) / dn;
  f.max_residual = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) f.max_residual = std::max(f.max_residual, y[i] - (f.intercept + f.slope * x[i]));
  return f;
}

/// Short decimal form for report reasons; integers print exactly.
template <class T>
std::string fmt(T x) {
  if constexpr (std::is_integral_v<T>) {
    return std::to_string(x);
  } else {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", x);
    return buf;
  }
}

inline ojson solver_json(const SolverConfig& c) {
  return ojson{{"rtol", c.rtol},           {"atol", c.atol},       {"max_step", c.max_step},
               {"initial_step", c.initial_step}, {"safety", c.safety}, {"hard_horizon", c.hard_horizon},
               {"output_cadence", c.output_cadence}};
}

inline ojson base_provenance(const ExperimentContext& ctx) {
  const auto& m = ctx.m();
  return ojson{{"seed", ctx.seed},
               {"n_modes", m.n_modes},
               {"alpha", m.alpha},
               {"forcing", m.g_description},
               {"nonlinearity", m.nonlinearity.name},
               {"epsilon", EpsilonProfile::kind_name(m.eps.kind())},
               {"eps0", m.eps.params().eps0},
               {"eps_scale", m.eps.params().scale},
               {"eps_t0", m.eps.params().t0},
               {"delta", m.energy.delta},
               {"c1", m.energy.c1},
               {"nu", m.energy.nu},
               {"L", m.energy.L},
               {"R0", ctx.r0},
               {"solver", solver_json(ctx.solver)}};
}

/// Slowest decay rate of |.|_{H_t} for the linear frozen system eps u'' + alpha u' + lambda u = 0.
inline double linear_decay_rate(const SpectralModel& m, double eps_value) {
  double w = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < m.n_modes; ++k) {
    const double lam = m.lambda()(k);
    const double disc = m.alpha * m.alpha - 4.0 * eps_value * lam;
    const double rate = disc <= 0.0 ? m.alpha / (2.0 * eps_value) : 2.0 * lam / (m.alpha + std::sqrt(disc));
    w = std::min(w, rate);
  }
  return w;
}

class Stopwatch {
public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

private:
  std::chrono::steady_clock::time_point start_;
};

inline SolverConfig with_cadence(SolverConfig c, double cadence) {
  c.output_cadence = cadence;
  return c;
}

inline double max_norm(const Ensemble& b, double sigma, const EpsilonProfile& eps, const SpectrumView& spectrum) {
  const TimeNorm norm(b.time(), sigma, eps, spectrum);
  double out = 0.0;
  for (const auto& m : b.members()) out = std::max(out, norm(m.state));
  return out;
}

} // namespace detail

// ---------------------------------------------------------------------------------------------

/// f = 0, g = 0, constant eps: every mode against the characteristic-root closed form.
inline ExperimentReport run_oracle_equivalence(const OracleParams& p, const SolverConfig& solver, std::uint64_t seed) {
  detail::Stopwatch clock;
  ExperimentReport r;
  r.id = "oracle_equivalence";
  r.parameters = {{"eps_values", p.eps_values}, {"alpha", p.alpha}, {"modes", p.modes},
                  {"elapsed", p.elapsed},       {"cadence", p.cadence}};
  r.tolerances = {{"max_relative_error", p.tolerance}};
  r.series.columns = {"eps", "t", "mode", "rel_error"};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  double worst = 0.0;
  for (double e : p.eps_values) {
    const auto eps = make_epsilon(EpsilonProfile::Kind::constant, {e, 1.0, 0.0});
    const auto m = assemble_model(p.modes, p.alpha, ForcingSpec::zero(), eps, make_linear_nonlinearity(0.0));
    State z(p.modes);
    for (int k = 0; k < p.modes; ++k) {
      z.u(k) = unif(rng);
      z.v(k) = unif(rng);
    }
    const auto rec = integrate(m, z, 0.0, p.elapsed, detail::with_cadence(solver, p.cadence)).second;
    for (std::size_t i = 0; i < rec.times.size(); ++i) {
      for (int k = 0; k < p.modes; ++k) {
        const double lam = m.lambda()(k);
        const auto [a, b] = linear_modal_oracle(lam, p.alpha, e, z.u(k), z.v(k), rec.times[i]);
        const double du = rec.states[i].u(k) - a, dv = rec.states[i].v(k) - b;
        const double den = std::sqrt(lam * a * a + e * b * b);
        const double rel = den > 0.0 ? std::sqrt(lam * du * du + e * dv * dv) / den : 0.0;
        worst = std::max(worst, rel);
        r.series.add({e, rec.times[i], static_cast<double>(k + 1), rel});
      }
    }
  }
  r.scalars = {{"max_relative_error", worst}};
  r.verdict = worst <= p.tolerance ? Verdict::pass : Verdict::fail;
  r.reason = "max relative modal error " + detail::fmt(worst);
  r.provenance = {{"seed", seed}, {"solver", detail::solver_json(solver)}};
  r.runtime_seconds = clock.seconds();
  return r;
}

/// Integrates the extremal case dL/dt = (q - 2 omega) L + k of the Gronwall inequality with RK4
/// for random admissible parameters and compares with the closed-form bound.
inline ExperimentReport run_gronwall(const GronwallExperimentParams& p, std::uint64_t seed) {
  detail::Stopwatch clock;
  ExperimentReport r;
  r.id = "gronwall";
  r.parameters = {{"draws", p.draws}, {"horizon", p.horizon}, {"dt", p.dt}};
  r.tolerances = {{"min_slack", -p.slack}};
  r.series.columns = {"draw", "s", "lambda", "bound", "slack"};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double min_slack = std::numeric_limits<double>::infinity();
  int dominated = 0;
  const auto steps = static_cast<long>(std::llround(p.horizon / p.dt));
  for (int d = 0; d < p.draws; ++d) {
    GronwallParams g;
    g.omega = 0.1 + 1.9 * unif(rng);
    g.k = unif(rng);
    g.m = unif(rng);
    g.lambda_tau = 2.0 * unif(rng);
    const double beta = 0.2 + 4.8 * unif(rng);
    const bool lorentz = d % 2 == 1;
    // q >= 0 with integral over [0, inf) equal to m
    auto q = [&](double s) {
      return lorentz ? g.m * (2.0 / std::numbers::pi) * beta / (1.0 + beta * beta * s * s) : g.m * beta * std::exp(-beta * s);
    };
    auto rhs = [&](double s, double lam) { return (q(s) - 2.0 * g.omega) * lam + g.k; };
    double lam = g.lambda_tau;
    bool ok = true;
    for (long i = 0; i <= steps; ++i) {
      const double s = static_cast<double>(i) * p.dt;
      const double bound = gronwall_bound(g, s);
      const double slack = bound - lam;
      min_slack = std::min(min_slack, slack);
      if (slack < -p.slack) ok = false;
      if (i % p.csv_stride == 0) r.series.add({static_cast<double>(d), s, lam, bound, slack});
      if (i == steps) break;
      const double k1 = rhs(s, lam);
      const double k2 = rhs(s + 0.5 * p.dt, lam + 0.5 * p.dt * k1);
      const double k3 = rhs(s + 0.5 * p.dt, lam + 0.5 * p.dt * k2);
      const double k4 = rhs(s + p.dt, lam + p.dt * k3);
      lam += p.dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
    }
    dominated += ok ? 1 : 0;
  }
  r.scalars = {{"min_slack", min_slack}, {"dominated_draws", dominated}};
  r.verdict = dominated == p.draws ? Verdict::pass : Verdict::fail;
  r.reason = detail::fmt(dominated) + "/" + detail::fmt(p.draws) + " draws dominated";
  r.provenance = {{"seed", seed}};
  r.runtime_seconds = clock.seconds();
  return r;
}

/// |z|_t^2 <= |z|_tau^2 <= factor |z|_t^2 on random triples, plus a blow-up witness of the factor.
inline ExperimentReport run_norm_equivalence(const ExperimentContext& ctx, const NormEquivalenceParams& p) {
  detail::Stopwatch clock;
  const auto& m = ctx.m();
  ExperimentReport r;
  r.id = "norm_equivalence";
  r.parameters = {{"draws", p.draws}, {"witness_tau", p.witness_tau}, {"witness_t", p.witness_t}};
  r.tolerances = {{"relative", p.rel_tol}, {"witness_min", p.witness_min}};
  r.series.columns = {"draw", "tau", "t", "norm_t_sq", "norm_tau_sq", "factor"};
  std::mt19937_64 rng(ctx.seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  int violations = 0;
  double worst_lower = -std::numeric_limits<double>::infinity(), worst_upper = worst_lower;
  for (int d = 0; d < p.draws; ++d) {
    const double tau = 60.0 * unif(rng);
    const double t = tau + 30.0 * (1.0 + unif(rng));
    State z(m.n_modes);
    for (Eigen::Index k = 0; k < m.n_modes; ++k) {
      z.u(k) = unif(rng) / std::sqrt(m.lambda()(k));
      z.v(k) = unif(rng);
    }
    const double nt = TimeNorm(t, 0.0, m.eps, m.spectrum).squared(z);
    const double ntau = TimeNorm(tau, 0.0, m.eps, m.spectrum).squared(z);
    const double factor = norm_equivalence_factor(t, tau, m.eps);
    const double lower = (nt - ntau) / ntau;
    const double upper = (ntau - factor * nt) / ntau;
    worst_lower = std::max(worst_lower, lower);
    worst_upper = std::max(worst_upper, upper);
    if (lower > p.rel_tol || upper > p.rel_tol) ++violations;
    r.series.add({static_cast<double>(d), tau, t, nt, ntau, factor});
  }
  const double witness = norm_equivalence_factor(p.witness_t, p.witness_tau, m.eps);
  ojson sequence = ojson::array();
  for (double t = p.witness_tau; t <= p.witness_t + 1e-9; t += 10.0)
    sequence.push_back({{"t", t}, {"factor", norm_equivalence_factor(t, p.witness_tau, m.eps)}});
  r.scalars = {{"violations", violations},
               {"worst_lower_excess", worst_lower},
               {"worst_upper_excess", worst_upper},
               {"witness_factor", witness},
               {"witness_sequence", sequence}};
  const bool ok = violations == 0 && witness > p.witness_min;
  r.verdict = ok ? Verdict::pass : Verdict::fail;
  r.reason = detail::fmt(violations) + " sandwich violations; factor at (tau, t) = (" +
             detail::fmt(p.witness_tau) + ", " + detail::fmt(p.witness_t) + ") is " + detail::fmt(witness);
  r.provenance = detail::base_provenance(ctx);
  r.runtime_seconds = clock.seconds();
  return r;
}

/// Finite-difference residual of d(scriptE)/dt + delta scriptE + alpha |u_t|^2 - delta c1 along
/// trajectories from B_tau(radius_factor * R0), with trapezoidal averages over each sample interval.
inline ExperimentReport run_energy_law(const ExperimentContext& ctx, const EnergyLawParams& p) {
  detail::Stopwatch clock;
  const auto& m = ctx.m();
  ExperimentReport r;
  r.id = "energy_law";
  r.parameters = {{"members", p.members}, {"tau", p.tau},       {"horizon", p.horizon},
                  {"cadence", p.cadence}, {"radius", p.radius_factor * ctx.r0}};
  r.tolerances = {{"residual", "error_factor * solver_error + abs_tol"},
                  {"error_factor", p.error_factor},
                  {"abs_tol", p.abs_tol},
                  {"min_fraction", p.min_fraction}};
  r.series.columns = {"t", "member", "E", "scriptE", "residual"};
  const double d = m.energy.delta;
  const auto src = sample_ball(Ball(p.tau, p.radius_factor * ctx.r0), p.members, m.eps, m.spectrum, ctx.seed);
  const auto cfg = detail::with_cadence(ctx.solver, p.cadence);

  struct MemberResult {
    std::vector<std::vector<double>> rows;
    std::size_t intervals = 0, within = 0;
    double max_excess = -std::numeric_limits<double>::infinity();
  };
  std::vector<MemberResult> res(src.size());
  parallel_for(src.size(), [&](std::size_t i) {
    const auto rec = integrate(m, src[i].state, p.tau, p.tau + p.horizon, cfg).second;
    const std::size_t n = rec.times.size();
    std::vector<double> se(n), e(n), kin(n);
    for (std::size_t j = 0; j < n; ++j) {
      e[j] = functional_E(m, rec.states[j], rec.times[j]);
      se[j] = functional_scriptE(m, rec.states[j], rec.times[j], d);
      kin[j] = rec.states[j].v.squaredNorm();
    }
    auto& out = res[i];
    for (std::size_t j = 0; j + 1 < n; ++j) {
      const double h = rec.times[j + 1] - rec.times[j];
      const double resid = (se[j + 1] - se[j]) / h + 0.5 * d * (se[j] + se[j + 1]) +
                           0.5 * m.alpha * (kin[j] + kin[j + 1]) - d * m.energy.c1;
      const double tol = p.error_factor * rec.error_since_last[j + 1] + p.abs_tol;
      ++out.intervals;
      if (resid <= tol) ++out.within;
      out.max_excess = std::max(out.max_excess, resid - tol);
      if (j % static_cast<std::size_t>(p.csv_stride) == 0)
        out.rows.push_back({rec.times[j], static_cast<double>(src[i].label), e[j], se[j], resid});
    }
  });
  double worst_fraction = 1.0, max_excess = -std::numeric_limits<double>::infinity();
  for (auto& mr : res) {
    for (auto& row : mr.rows) r.series.add(std::move(row));
    const double frac = mr.intervals ? static_cast<double>(mr.within) / static_cast<double>(mr.intervals) : 1.0;
    worst_fraction = std::min(worst_fraction, frac);
    max_excess = std::max(max_excess, mr.max_excess);
  }
  r.scalars = {{"worst_member_fraction", worst_fraction}, {"max_excess_over_tolerance", max_excess}};
  r.verdict = worst_fraction >= p.min_fraction ? Verdict::pass : Verdict::fail;
  r.reason = "lowest per-member fraction of intervals within tolerance: " + detail::fmt(worst_fraction);
  r.provenance = detail::base_provenance(ctx);
  r.provenance["ensemble_size"] = src.size();
  r.runtime_seconds = clock.seconds();
  return r;
}

/// Searches the dyadic R0 grid for an absorbing radius and fits theta_e against log R.
inline ExperimentReport run_absorbing(const ExperimentContext& ctx, const AbsorbingParams& p) {
  detail::Stopwatch clock;
  const auto& m = ctx.m();
  const auto proc = ctx.process();
  ExperimentReport r;
  r.id = "absorbing";
  r.parameters = {{"t", p.t},         {"coarse_step", p.coarse_step}, {"horizon", p.horizon},
                  {"members", p.members}, {"r0_grid", p.r0_grid},      {"multiples", p.multiples}};
  r.tolerances = {{"slope_relative_deviation", p.slope_tolerance}};
  r.series.columns = {"R0", "R", "theta", "absorbed"};

  const double omega = detail::linear_decay_rate(m, m.eps(p.t));
  const double predicted = 1.0 / omega;
  ojson candidates = ojson::array();
  double smallest_working = std::numeric_limits<double>::quiet_NaN();
  double certified = std::numeric_limits<double>::quiet_NaN();
  double cert_slope = std::numeric_limits<double>::quiet_NaN();
  for (double r0 : p.r0_grid) {
    ojson c = {{"R0", r0}};
    const auto self = entry_time(proc, r0, p.t, r0, p.coarse_step, 2.0 * p.coarse_step, p.members, ctx.seed);
    const bool invariant = self.absorbed && self.theta == 0.0;
    r.series.add({r0, r0, self.absorbed ? self.theta : -1.0, self.absorbed ? 1.0 : 0.0});
    c["positively_invariant"] = invariant;
    if (!invariant) {
      candidates.push_back(c);
      continue;
    }
    std::vector<double> logs, thetas;
    bool all_finite = true;
    for (double mult : p.multiples) {
      const double radius = mult * r0;
      const auto e = entry_time(proc, radius, p.t, r0, p.coarse_step, p.horizon, p.members, ctx.seed);
      r.series.add({r0, radius, e.absorbed ? e.theta : -1.0, e.absorbed ? 1.0 : 0.0});
      if (!e.absorbed) {
        all_finite = false;
        break;
      }
      logs.push_back(std::log(radius));
      thetas.push_back(e.theta);
    }
    c["theta"] = thetas;
    c["all_absorbed"] = all_finite;
    if (all_finite && std::isnan(smallest_working)) smallest_working = r0;
    if (all_finite) {
      const bool monotone = std::is_sorted(thetas.begin(), thetas.end());
      const auto fit = detail::fit_line(logs, thetas);
      const double dev = std::abs(fit.slope - predicted) / predicted;
      c["nondecreasing"] = monotone;
      c["slope"] = fit.slope;
      c["intercept"] = fit.intercept;
      c["slope_deviation"] = dev;
      if (monotone && dev <= p.slope_tolerance) {
        certified = r0;
        cert_slope = fit.slope;
        candidates.push_back(c);
        break;
      }
    }
    candidates.push_back(c);
  }
  r.scalars = {{"omega", omega},
               {"predicted_slope", predicted},
               {"smallest_working_R0", std::isnan(smallest_working) ? ojson(nullptr) : ojson(smallest_working)},
               {"certified_R0", std::isnan(certified) ? ojson(nullptr) : ojson(certified)},
               {"certified_slope", std::isnan(cert_slope) ? ojson(nullptr) : ojson(cert_slope)},
               {"candidates", candidates}};
  if (!std::isnan(certified)) {
    r.verdict = Verdict::pass;
    r.reason = "R0 = " + detail::fmt(certified) + ": entry times finite, nondecreasing, slope " +
               detail::fmt(cert_slope) + " vs 1/omega = " + detail::fmt(predicted);
  } else {
    r.verdict = Verdict::fail;
    r.reason = std::isnan(smallest_working) ? "no absorbing R0 on the grid"
                                            : "no R0 on the grid meets the monotonicity and slope requirements";
  }
  r.provenance = detail::base_provenance(ctx);
  r.provenance["ensemble_size"] = p.members;
  r.runtime_seconds = clock.seconds();
  return r;
}

/// sup_t [ |U z|_{H_t} + int_tau^t |u_t|^2 ] over members from B_tau(R0), for horizon H and 2H.
inline ExperimentReport run_dissipation_integral(const ExperimentContext& ctx, const DissipationParams& p) {
  detail::Stopwatch clock;
  const auto& m = ctx.m();
  ExperimentReport r;
  r.id = "dissipation_integral";
  r.parameters = {{"members", p.members}, {"tau", p.tau}, {"horizons", {p.horizon, 2.0 * p.horizon}},
                  {"cadence", p.cadence}, {"radius", ctx.r0}};
  r.tolerances = {{"relative_growth", p.growth_tol}};
  r.series.columns = {"t", "member", "norm", "integral"};
  const auto src = sample_ball(Ball(p.tau, ctx.r0), p.members, m.eps, m.spectrum, ctx.seed);
  const auto cfg = detail::with_cadence(ctx.solver, p.cadence);
  struct MemberResult {
    std::vector<std::vector<double>> rows;
    double sup_short = 0.0, sup_long = 0.0, integral = 0.0;
  };
  std::vector<MemberResult> res(src.size());
  parallel_for(src.size(), [&](std::size_t i) {
    const auto rec = integrate(m, src[i].state, p.tau, p.tau + 2.0 * p.horizon, cfg).second;
    auto& out = res[i];
    double integral = 0.0;
    for (std::size_t j = 0; j < rec.times.size(); ++j) {
      if (j > 0)
        integral += 0.5 * (rec.times[j] - rec.times[j - 1]) *
                    (rec.states[j].v.squaredNorm() + rec.states[j - 1].v.squaredNorm());
      const double nrm = norm_t(rec.states[j], rec.times[j], 0.0, m.eps, m.spectrum);
      const double q = nrm + integral;
      if (rec.times[j] <= p.tau + p.horizon + 1e-9) out.sup_short = std::max(out.sup_short, q);
      out.sup_long = std::max(out.sup_long, q);
      if (j % static_cast<std::size_t>(p.csv_stride) == 0)
        out.rows.push_back({rec.times[j], static_cast<double>(src[i].label), nrm, integral});
    }
    out.integral = integral;
  });
  double sup_short = 0.0, sup_long = 0.0, integral = 0.0;
  for (auto& mr : res) {
    for (auto& row : mr.rows) r.series.add(std::move(row));
    sup_short = std::max(sup_short, mr.sup_short);
    sup_long = std::max(sup_long, mr.sup_long);
    integral = std::max(integral, mr.integral);
  }
  const double growth = (sup_long - sup_short) / sup_short;
  r.scalars = {{"I0_short", sup_short}, {"I0_long", sup_long}, {"relative_growth", growth},
               {"max_total_integral", integral}};
  const bool finite = std::isfinite(sup_long);
  r.verdict = !finite ? Verdict::fail : (growth <= p.growth_tol ? Verdict::pass : Verdict::inconclusive);
  r.reason = "sup growth under horizon doubling " + detail::fmt(growth);
  r.provenance = detail::base_provenance(ctx);
  r.provenance["ensemble_size"] = src.size();
  r.runtime_seconds = clock.seconds();
  return r;
}

inline std::string mode_suffix(DecompositionMode mode) {
  return mode == DecompositionMode::nonlinear_split ? "A" : "B";
}

/// Data for the decomposition drivers: B_tau(R0) samples for the nonlinear split, members of a
/// deep-pullback attractor sample (before thinning) for the linear split.
inline Ensemble decomposition_data(const ExperimentContext& ctx, const DecompositionParams& p, DecompositionMode mode) {
  const auto& m = ctx.m();
  if (mode == DecompositionMode::nonlinear_split)
    return sample_ball(Ball(p.tau, ctx.r0), p.members, m.eps, m.spectrum, ctx.seed);
  const auto a = omega_limit_approx(ctx.process(), ctx.r0, p.tau, p.attractor_depth, 1e-12, p.members, ctx.seed);
  return a.merged;
}

/// Exponential decay of U0: per-member log-norm slope on [tau, tau + H], and the envelope
/// C e^{-delta (t - tau)} fitted there checked on [tau, tau + 2H].
inline ExperimentReport run_decay_U0(const ExperimentContext& ctx, const Ensemble& data, const DecompositionParams& p,
                                     DecompositionMode mode) {
  detail::Stopwatch clock;
  const auto& m = ctx.m();
  ExperimentReport r;
  r.id = "decay_U0_" + mode_suffix(mode);
  const double tau = data.time();
  r.parameters = {{"mode", mode_suffix(mode)}, {"members", data.size()}, {"tau", tau},
                  {"fit_horizon", p.horizon},  {"check_horizon", 2.0 * p.horizon}, {"cadence", p.cadence}};
  r.tolerances = {{"max_slope", -p.delta_min}, {"envelope_relative_slack", 1e-9}};
  r.series.columns = {"t", "member", "norm_U0"};
  const auto cfg = detail::with_cadence(ctx.solver, p.cadence);
  struct MemberResult {
    std::vector<std::vector<double>> rows;
    double slope = 0.0, c = 0.0;
    bool envelope = true;
  };
  std::vector<MemberResult> res(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    const auto& z = data[i].state;
    const auto pair = solve_decomposed(m, z, tau, tau + 2.0 * p.horizon, mode, cfg);
    const auto& rec = pair.decay;
    auto& out = res[i];
    const double z0 = norm_t(z, tau, 0.0, m.eps, m.spectrum);
    std::vector<double> x, y, norms(rec.times.size());
    for (std::size_t j = 0; j < rec.times.size(); ++j) {
      norms[j] = norm_t(rec.states[j], rec.times[j], 0.0, m.eps, m.spectrum);
      if (j % static_cast<std::size_t>(p.csv_stride) == 0)
        out.rows.push_back({rec.times[j], static_cast<double>(data[i].label), norms[j]});
      if (rec.times[j] <= tau + p.horizon + 1e-9 && norms[j] > p.norm_floor * z0) {
        x.push_back(rec.times[j] - tau);
        y.push_back(std::log(norms[j]));
      }
    }
    if (x.size() < 2) {
      out.slope = -std::numeric_limits<double>::infinity();
      return;
    }
    const auto fit = detail::fit_line(x, y);
    out.slope = fit.slope;
    out.c = std::exp(fit.intercept + fit.max_residual);
    for (std::size_t j = 0; j < rec.times.size(); ++j) {
      const double env = out.c * std::exp(fit.slope * (rec.times[j] - tau));
      if (norms[j] > env * (1.0 + 1e-9) + p.norm_floor * z0) out.envelope = false;
    }
  });
  double worst_slope = -std::numeric_limits<double>::infinity(), max_c = 0.0;
  std::size_t envelope_failures = 0;
  for (auto& mr : res) {
    for (auto& row : mr.rows) r.series.add(std::move(row));
    worst_slope = std::max(worst_slope, mr.slope);
    max_c = std::max(max_c, mr.c);
    envelope_failures += mr.envelope ? 0 : 1;
  }
  r.scalars = {{"worst_slope", worst_slope}, {"max_envelope_C", max_c}, {"envelope_failures", envelope_failures}};
  const bool ok = worst_slope <= -p.delta_min && envelope_failures == 0;
  r.verdict = ok ? Verdict::pass : Verdict::fail;
  r.reason = "largest fitted slope " + detail::fmt(worst_slope) + ", " + detail::fmt(envelope_failures) +
             " envelope failures on the doubled horizon";
  r.provenance = detail::base_provenance(ctx);
  r.provenance["ensemble_size"] = data.size();
  r.runtime_seconds = clock.seconds();
  return r;
}

/// sup over t and members of |U1|_{H^sigma_t} on [tau, tau + H] and [tau, tau + 2H].
inline ExperimentReport run_bound_U1(const ExperimentContext& ctx, const Ensemble& data, const DecompositionParams& p,
                                     double sigma, DecompositionMode mode) {
  detail::Stopwatch clock;
  const auto& m = ctx.m();
  ExperimentReport r;
  r.id = "bound_U1_" + mode_suffix(mode);
  const double tau = data.time();
  r.parameters = {{"mode", mode_suffix(mode)}, {"sigma", sigma},           {"members", data.size()},
                  {"tau", tau},                {"horizons", {p.horizon, 2.0 * p.horizon}}, {"cadence", p.cadence}};
  r.tolerances = {{"relative_growth", p.growth_tol}};
  r.series.columns = {"t", "member", "norm_U1"};
  const auto cfg = detail::with_cadence(ctx.solver, p.cadence);
  struct MemberResult {
    std::vector<std::vector<double>> rows;
    double sup_short = 0.0, sup_long = 0.0;
  };
  std::vector<MemberResult> res(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    const auto pair = solve_decomposed(m, data[i].state, tau, tau + 2.0 * p.horizon, mode, cfg);
    const auto& rec = pair.compact;
    auto& out = res[i];
    for (std::size_t j = 0; j < rec.times.size(); ++j) {
      const double nrm = norm_t(rec.states[j], rec.times[j], sigma, m.eps, m.spectrum);
      if (rec.times[j] <= tau + p.horizon + 1e-9) out.sup_short = std::max(out.sup_short, nrm);
      out.sup_long = std::max(out.sup_long, nrm);
      if (j % static_cast<std::size_t>(p.csv_stride) == 0)
        out.rows.push_back({rec.times[j], static_cast<double>(data[i].label), nrm});
    }
  });
  double sup_short = 0.0, sup_long = 0.0;
  for (auto& mr : res) {
    for (auto& row : mr.rows) r.series.add(std::move(row));
    sup_short = std::max(sup_short, mr.sup_short);
    sup_long = std::max(sup_long, mr.sup_long);
  }
  const double growth = sup_short > 0.0 ? (sup_long - sup_short) / sup_short : 0.0;
  r.scalars = {{"M_short", sup_short}, {"M_long", sup_long}, {"relative_growth", growth}};
  r.verdict = !std::isfinite(sup_long) ? Verdict::fail : (growth <= p.growth_tol ? Verdict::pass : Verdict::inconclusive);
  r.reason = "sup |U1| growth under horizon doubling " + detail::fmt(growth);
  r.provenance = detail::base_provenance(ctx);
  r.provenance["ensemble_size"] = data.size();
  r.runtime_seconds = clock.seconds();
  return r;
}

namespace detail {

/// Pullback curve values must not rise by more than the jitter factor, up to a floor far below eta.
inline bool decays_monotonically(const std::vector<PullbackPoint>& pts, double jitter, double floor) {
  for (std::size_t i = 1; i < pts.size(); ++i)
    if (pts[i].semidist > (1.0 + jitter) * pts[i - 1].semidist + floor) return false;
  return true;
}

} // namespace detail

struct AttractorRun {
  ExperimentReport report;
  std::vector<AttractorApprox> approximations;
};

/// A_t at each t from depth D and 2D, pullback curves toward A_t, covering radii of the
/// propagated samples, and H^{1/3} / H^1 sizes of A_t.
inline AttractorRun run_attractor(const ExperimentContext& ctx, const AttractorParams& p) {
  detail::Stopwatch clock;
  const auto& m = ctx.m();
  const auto proc = ctx.process();
  AttractorRun run;
  auto& r = run.report;
  r.id = "attractor";
  r.parameters = {{"t_list", p.t_list},         {"tau_depth", p.tau_depth},   {"thin_tol", p.thin_tol},
                  {"members", p.members},       {"curve_depths", p.curve_depths}, {"curve_members", p.curve_members},
                  {"radius", p.radius_factor * ctx.r0}, {"n_centers", p.n_centers}};
  r.tolerances = {{"eta", p.eta}, {"jitter", p.jitter}, {"relative_growth", p.growth_tol}, {"self_consistency", p.thin_tol}};
  r.series.columns = {"tau", "t", "semidist", "covering_radius"};
  bool curves_ok = true, consistent = true, bounded = true;
  ojson per_t = ojson::array();
  for (double t : p.t_list) {
    auto a = omega_limit_approx(proc, ctx.r0, t, p.tau_depth, p.thin_tol, p.members, ctx.seed);
    const auto a2 = omega_limit_approx(proc, ctx.r0, t, 2.0 * p.tau_depth, p.thin_tol, p.members, ctx.seed);
    const double fwd = hausdorff_semidist(a.ensemble, a2.ensemble, 0.0, m.eps, m.spectrum);
    const double bwd = hausdorff_semidist(a2.ensemble, a.ensemble, 0.0, m.eps, m.spectrum);
    std::vector<double> taus;
    for (double d : p.curve_depths) taus.push_back(t - d);
    const auto curve =
      pullback_curve(proc, p.radius_factor * ctx.r0, t, taus, a.ensemble, 0.0, p.curve_members, ctx.seed);
    std::vector<double> x, y;
    ojson cover = ojson::array();
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
      const auto cr = covering_radius(curve.sample.propagated[i], p.n_centers, m.eps, m.spectrum);
      cover.push_back(cr.radius);
      r.series.add({curve.points[i].tau, t, curve.points[i].semidist, cr.radius});
      if (curve.points[i].semidist > 0.0) {
        x.push_back(t - curve.points[i].tau);
        y.push_back(std::log(curve.points[i].semidist));
      }
    }
    const bool mono = detail::decays_monotonically(curve.points, p.jitter, 1e-3 * p.eta);
    const bool below = curve.attracting(p.eta);
    const double h13 = detail::max_norm(a.ensemble, 1.0 / 3.0, m.eps, m.spectrum);
    const double h1 = detail::max_norm(a.ensemble, 1.0, m.eps, m.spectrum);
    const double h13_2 = detail::max_norm(a2.ensemble, 1.0 / 3.0, m.eps, m.spectrum);
    const double h1_2 = detail::max_norm(a2.ensemble, 1.0, m.eps, m.spectrum);
    const double g13 = (h13_2 - h13) / h13, g1 = (h1_2 - h1) / h1;
    curves_ok = curves_ok && mono && below;
    consistent = consistent && fwd < p.thin_tol && bwd < p.thin_tol;
    bounded = bounded && g13 <= p.growth_tol && g1 <= p.growth_tol;
    const auto rate = detail::fit_line(x, y);
    per_t.push_back({{"t", t},
                     {"attractor_size", a.ensemble.size()},
                     {"merged_size", a.merged.size()},
                     {"final_semidist", curve.points.back().semidist},
                     {"monotone", mono},
                     {"fitted_log_rate", rate.slope},
                     {"covering_radii", cover},
                     {"self_consistency", {fwd, bwd}},
                     {"H13_norm", {h13, h13_2}},
                     {"H1_norm", {h1, h1_2}},
                     {"H13_growth", g13},
                     {"H1_growth", g1}});
    run.approximations.push_back(std::move(a));
  }
  r.scalars = {{"per_t", per_t}};
  if (curves_ok && consistent && bounded) {
    r.verdict = Verdict::pass;
    r.reason = "pullback curves decay below eta, approximations agree across depths and stay bounded";
  } else if (!curves_ok || !consistent) {
    r.verdict = Verdict::fail;
    r.reason = !curves_ok ? "a pullback curve does not decay monotonically below eta"
                          : "approximations at depth D and 2D differ by more than thin_tol";
  } else {
    r.verdict = Verdict::inconclusive;
    r.reason = "attractor norms grow by more than the tolerance under depth doubling";
  }
  r.provenance = detail::base_provenance(ctx);
  r.provenance["ensemble_size"] = p.members;
  r.runtime_seconds = clock.seconds();
  return run;
}

inline ExperimentReport run_invariance(const ExperimentContext& ctx, const InvarianceParams& p) {
  detail::Stopwatch clock;
  const auto proc = ctx.process();
  ExperimentReport r;
  r.id = "invariance";
  r.parameters = {{"t", p.t}, {"periods", p.periods}, {"tau_depth", p.tau_depth}, {"thin_tol", p.thin_tol},
                  {"members", p.members}};
  r.tolerances = {{"eta", p.eta}};
  r.series.columns = {"T", "forward", "backward"};
  const auto now = omega_limit_approx(proc, ctx.r0, p.t, p.tau_depth, p.thin_tol, p.members, ctx.seed);
  bool ok = true;
  double worst = 0.0;
  for (double period : p.periods) {
    const auto prev = omega_limit_approx(proc, ctx.r0, p.t - period, p.tau_depth, p.thin_tol, p.members, ctx.seed);
    const auto c = check_invariance(proc, prev, now, period);
    r.series.add({period, c.forward, c.backward});
    ok = ok && c.passes(p.eta);
    worst = std::max({worst, c.forward, c.backward});
  }
  r.scalars = {{"worst_semidist", worst}, {"attractor_size", now.ensemble.size()}};
  r.verdict = ok ? Verdict::pass : Verdict::fail;
  r.reason = "largest invariance semidistance " + detail::fmt(worst);
  r.provenance = detail::base_provenance(ctx);
  r.provenance["ensemble_size"] = p.members;
  r.runtime_seconds = clock.seconds();
  return r;
}

/// sup over t in [a, b] of delta_t(U(t, tau) B_tau(R), A_t) for each tau = a - depth.
inline ExperimentReport run_uniform_attraction(const ExperimentContext& ctx, const UniformAttractionParams& p) {
  detail::Stopwatch clock;
  const auto& m = ctx.m();
  const auto proc = ctx.process();
  ExperimentReport r;
  r.id = "uniform_attraction";
  r.parameters = {{"a", p.a},           {"b", p.b},                     {"t_step", p.t_step},
                  {"tau_depths", p.tau_depths}, {"members", p.members}, {"radius", p.radius_factor * ctx.r0},
                  {"attractor_depth", p.attractor_depth}, {"thin_tol", p.thin_tol}};
  r.tolerances = {{"eta", p.eta}};
  r.series.columns = {"tau", "t", "semidist", "sup_semidist"};
  std::vector<double> grid;
  const auto n_t = static_cast<int>(std::floor((p.b - p.a) / p.t_step + 1e-9));
  for (int i = 0; i <= n_t; ++i) grid.push_back(p.a + i * p.t_step);
  if (grid.back() < p.b - 1e-9) grid.push_back(p.b);
  std::vector<AttractorApprox> attractors;
  for (double t : grid)
    attractors.push_back(
      omega_limit_approx(proc, ctx.r0, t, p.attractor_depth, p.thin_tol, p.attractor_members, ctx.seed));

  std::vector<double> sups;
  for (double depth : p.tau_depths) {
    const double tau = p.a - depth;
    Ensemble cur = sample_ball(Ball(tau, p.radius_factor * ctx.r0), p.members, m.eps, m.spectrum, ctx.seed);
    std::vector<double> vals;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      cur = propagate_ensemble(proc, cur, grid[i]);
      vals.push_back(hausdorff_semidist(cur, attractors[i].ensemble, 0.0, m.eps, m.spectrum));
    }
    const double sup = *std::max_element(vals.begin(), vals.end());
    sups.push_back(sup);
    for (std::size_t i = 0; i < grid.size(); ++i) r.series.add({tau, grid[i], vals[i], sup});
  }
  const double last = sups.back();
  r.scalars = {{"sup_curve", sups}, {"final_sup", last}};
  r.verdict = last < p.eta ? Verdict::pass : Verdict::fail;
  r.reason = "sup over [a, b] at the deepest tau: " + detail::fmt(last);
  r.provenance = detail::base_provenance(ctx);
  r.provenance["ensemble_size"] = p.members;
  r.runtime_seconds = clock.seconds();
  return r;
}

/// Separation growth of trajectory pairs from B_tau(R): one exponent K that dominates every pair.
inline ExperimentReport run_contdep(const ExperimentContext& ctx, const ContdepParams& p) {
  detail::Stopwatch clock;
  const auto& m = ctx.m();
  ExperimentReport r;
  r.id = "contdep";
  r.parameters = {{"pairs", p.pairs}, {"tau", p.tau}, {"horizon", p.horizon}, {"cadence", p.cadence},
                  {"radius", p.radius_factor * ctx.r0}};
  r.tolerances = {{"envelope_relative_slack", 1e-9}};
  r.series.columns = {"pair", "t", "separation"};
  const auto src = sample_ball(Ball(p.tau, p.radius_factor * ctx.r0), 2 * p.pairs, m.eps, m.spectrum, ctx.seed);
  const auto cfg = detail::with_cadence(ctx.solver, p.cadence);
  std::vector<ContdepResult> res(p.pairs);
  parallel_for(p.pairs, [&](std::size_t i) {
    res[i] = contdep_probe(m, src[2 * i].state, src[2 * i + 1].state, p.tau, p.tau + p.horizon, cfg);
  });
  double k_hat = 0.0, max_fit = -std::numeric_limits<double>::infinity();
  for (const auto& c : res) {
    if (!c.applicable) continue;
    k_hat = std::max(k_hat, c.envelope_rate);
    max_fit = std::max(max_fit, c.fitted_rate);
  }
  std::size_t violations = 0;
  for (std::size_t i = 0; i < res.size(); ++i) {
    const auto& c = res[i];
    for (std::size_t j = 0; j < c.times.size(); ++j) {
      r.series.add({static_cast<double>(i), c.times[j], c.separations[j]});
      const double env = c.initial_separation * std::exp(k_hat * (c.times[j] - p.tau));
      if (c.separations[j] > env * (1.0 + 1e-9)) ++violations;
    }
  }
  r.scalars = {{"K_hat", k_hat}, {"max_fitted_rate", max_fit}, {"violations", violations}};
  r.verdict = std::isfinite(k_hat) && violations == 0 ? Verdict::pass : Verdict::fail;
  r.reason = "single exponent K_hat = " + detail::fmt(k_hat) + " dominates all pairs";
  r.provenance = detail::base_provenance(ctx);
  r.provenance["ensemble_size"] = src.size();
  r.runtime_seconds = clock.seconds();
  return r;
}

} // namespace tdattr
