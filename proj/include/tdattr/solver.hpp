#pragma once

// Time integration of the Galerkin system
//
//   eps(t) u'' + alpha u' + lambda_k u = r_k(t, u),    r = g - P f(u)
//
// Each step freezes eps at the substep midpoint. The linear part of every mode is then advanced
// by the exact exponential of its 2x2 companion matrix, and the forcing is handled by the ETD2
// predictor/corrector: the frozen-coefficient equation is solved exactly for a forcing that is
// constant (predictor) or linear (corrector) in time. Step doubling supplies the local error
// estimate, which includes the error of freezing eps.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tdattr/errors.hpp"
#include "tdattr/model.hpp"
#include "tdattr/tdspace.hpp"

namespace tdattr {

struct SolverConfig {
  double rtol = 1e-7;
  double atol = 1e-10;
  double max_step = 0.25;
  double initial_step = 1e-3;
  double safety = 0.9;
  double hard_horizon = 1.0e4;  // longest admissible t - tau
  double output_cadence = 0.0;  // 0: record only the endpoints
  double blowup_norm = 1.0e8;   // H_t norm treated as divergence

  void validate() const {
    if (!(rtol > 0.0) || !(atol > 0.0)) throw ValidationError("solver: rtol and atol must be positive");
    if (!(max_step > 0.0) || !(initial_step > 0.0)) throw ValidationError("solver: step sizes must be positive");
    if (!(safety > 0.0 && safety <= 1.0)) throw ValidationError("solver: safety must lie in (0, 1]");
    if (!(hard_horizon > 0.0)) throw ValidationError("solver: hard_horizon must be positive");
    if (output_cadence < 0.0) throw ValidationError("solver: output_cadence must be >= 0");
  }
};

/// Exact exponential of h M, M = [[0, 1], [-lambda/eps, -alpha/eps]].
struct ModeExponential {
  double m11 = 1.0, m12 = 0.0, m21 = 0.0, m22 = 1.0;

  static ModeExponential compute(double lambda, double alpha, double eps, double h) {
    // M = abar I + N with abar = tr/2 and N^2 = q I, so e^{hM} = e^{h abar} (C I + S N) with
    // C = cosh(h sqrt q), S = sinh(h sqrt q)/sqrt q.
    const double abar = -alpha / (2.0 * eps);
    const double det = lambda / eps;
    const double q = abar * abar - det;
    const double z = q * h * h;
    double pc = 0.0, ps = 0.0; // e^{h abar} C and e^{h abar} S
    if (std::abs(z) < 0.25) {
      double c = 1.0, s = 1.0, term_c = 1.0, term_s = 1.0;
      for (int m = 1; m < 12; ++m) {
        term_c *= z / ((2.0 * m - 1.0) * (2.0 * m));
        term_s *= z / ((2.0 * m) * (2.0 * m + 1.0));
        c += term_c;
        s += term_s;
      }
      const double pre = std::exp(h * abar);
      pc = pre * c;
      ps = pre * s * h;
    } else if (q < 0.0) {
      const double w = std::sqrt(-q);
      const double pre = std::exp(h * abar);
      pc = pre * std::cos(h * w);
      ps = pre * std::sin(h * w) / w;
    } else {
      const double sq = std::sqrt(q);
      const double r2 = abar - sq;
      const double r1 = det / r2;
      const double e1 = std::exp(h * r1);
      const double e2 = std::exp(h * r2);
      pc = 0.5 * (e1 + e2);
      ps = (e1 - e2) / (2.0 * sq);
    }
    const double n11 = alpha / (2.0 * eps);
    ModeExponential out;
    out.m11 = pc + ps * n11;
    out.m12 = ps;
    out.m21 = -ps * det;
    out.m22 = pc - ps * n11;
    return out;
  }
};

/// Closed-form solution of eps s'' + alpha s' + lambda s = 0, s(0) = a, s'(0) = b, from the roots
/// of eps r^2 + alpha r + lambda = 0. Independent of the integrator's matrix exponential.
inline std::pair<double, double> linear_modal_oracle(double lambda_k, double alpha, double eps_const, double a,
                                                     double b, double elapsed) {
  if (!(eps_const > 0.0) || !(alpha > 0.0) || !(lambda_k > 0.0))
    throw DomainError("linear_modal_oracle: eps, alpha, lambda must be positive");
  if (elapsed == 0.0) return {a, b};
  const double disc = alpha * alpha - 4.0 * eps_const * lambda_k;
  const double t = elapsed;
  if (disc > 0.0) {
    const double sd = std::sqrt(disc);
    const double r1 = (-alpha + sd) / (2.0 * eps_const);
    const double r2 = (-alpha - sd) / (2.0 * eps_const);
    // s = c1 e^{r1 t} + c2 e^{r2 t}
    const double c1 = (b - r2 * a) / (r1 - r2);
    const double c2 = (r1 * a - b) / (r1 - r2);
    const double e1 = std::exp(r1 * t), e2 = std::exp(r2 * t);
    return {c1 * e1 + c2 * e2, c1 * r1 * e1 + c2 * r2 * e2};
  }
  if (disc == 0.0) {
    const double r = -alpha / (2.0 * eps_const);
    const double e = std::exp(r * t);
    const double c = b - r * a;
    return {(a + c * t) * e, (r * (a + c * t) + c) * e};
  }
  const double mu = -alpha / (2.0 * eps_const);
  const double w = std::sqrt(-disc) / (2.0 * eps_const);
  const std::complex<double> root(mu, w);
  // s = Re(C e^{root t}) with C chosen from (a, b)
  const std::complex<double> coeff(a, (mu * a - b) / w);
  const std::complex<double> s = coeff * std::exp(root * t);
  const std::complex<double> ds = coeff * root * std::exp(root * t);
  return {s.real(), ds.real()};
}

/// Samples of one trajectory (or of one component of a decomposition).
struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<State> states;
  /// Sum of accepted local error estimates (H_t norm) since the previous sample.
  std::vector<double> error_since_last;
  /// Local error estimate of every accepted step, with the step's end time.
  std::vector<std::pair<double, double>> step_errors;
  double error_estimate = 0.0; // sum of all accepted local error estimates
  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;
  std::vector<std::string> warnings;
};

namespace detail {

using Fields = std::vector<State>;
/// r_i = forcing of field i, for  eps x'' + alpha x' + A x = r.
using ForcingFn = std::function<void(double t, const Fields& y, Fields& r)>;

/// One frozen-coefficient ETD2 substep; kept to evaluate the continuous extension.
struct Substep {
  double t0 = 0.0, h = 0.0, eps = 1.0;
  Fields y0;
  std::vector<Vector> r0; // forcing at y0
  std::vector<Vector> r1; // forcing at the predictor
};

class ExponentialStepper {
public:
  /// The linear part kappa s of f joins the exact linear operator, A + kappa, when it stays positive.
  ExponentialStepper(const SpectralModel& m, ForcingFn forcing) : m_(m), forcing_(std::move(forcing)) {
    const double kappa = m.nonlinearity.linear_part;
    kappa_ = m.spectrum.lambda_1() + kappa > 0.0 ? kappa : 0.0;
    stiffness_ = m.lambda().array() + kappa_;
  }

  const SpectralModel& model() const { return m_; }

  /// Forcing of the shifted equation: eps x'' + alpha x' + (A + kappa) x = r + kappa x.
  void forcing(double t, const Fields& y, std::vector<Vector>& r) const {
    Fields tmp(y.size());
    forcing_(t, y, tmp);
    r.resize(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      r[i] = std::move(tmp[i].u);
      if (kappa_ != 0.0) r[i] += kappa_ * y[i].u;
    }
  }

  void exponentials(double eps, double h, std::vector<ModeExponential>& out) const {
    out.resize(static_cast<std::size_t>(m_.n_modes));
    for (Eigen::Index k = 0; k < m_.n_modes; ++k)
      out[static_cast<std::size_t>(k)] = ModeExponential::compute(stiffness_(k), m_.alpha, eps, h);
  }

  /// Exact solution after time s of the frozen equation with forcing c0 + c1 * sigma.
  void propagate(const std::vector<ModeExponential>& ex, const State& y0, const Vector& c0, const Vector& c1,
                 double s, State& out) const {
    const auto n = m_.n_modes;
    out.u.resize(n);
    out.v.resize(n);
    const double alpha = m_.alpha;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double lam = stiffness_(k);
      // particular solution p(sigma) = A + B sigma
      const double B = c1(k) / lam;
      const double A = (c0(k) - alpha * B) / lam;
      const double du = y0.u(k) - A;
      const double dv = y0.v(k) - B;
      const auto& e = ex[static_cast<std::size_t>(k)];
      out.u(k) = e.m11 * du + e.m12 * dv + A + B * s;
      out.v(k) = e.m21 * du + e.m22 * dv + B;
    }
  }

  /// ETD2 substep of length h from (t0, y0) with forcing r0 = r(t0, y0) already known.
  Substep substep(double t0, const Fields& y0, const std::vector<Vector>& r0, double h, Fields& y1) const {
    Substep sub;
    sub.t0 = t0;
    sub.h = h;
    sub.eps = m_.eps(t0 + 0.5 * h);
    sub.y0 = y0;
    sub.r0 = r0;
    std::vector<ModeExponential> ex;
    exponentials(sub.eps, h, ex);
    const Vector zero = Vector::Zero(m_.n_modes);
    Fields pred(y0.size());
    for (std::size_t i = 0; i < y0.size(); ++i) propagate(ex, y0[i], r0[i], zero, h, pred[i]);
    forcing(t0 + h, pred, sub.r1);
    y1.resize(y0.size());
    for (std::size_t i = 0; i < y0.size(); ++i) {
      const Vector slope = (sub.r1[i] - r0[i]) / h;
      propagate(ex, y0[i], r0[i], slope, h, y1[i]);
    }
    return sub;
  }

  /// Continuous extension of a substep at t0 + s, 0 <= s <= h.
  void dense(const Substep& sub, double s, Fields& out) const {
    std::vector<ModeExponential> ex;
    exponentials(sub.eps, s, ex);
    out.resize(sub.y0.size());
    for (std::size_t i = 0; i < sub.y0.size(); ++i) {
      const Vector slope = (sub.r1[i] - sub.r0[i]) / sub.h;
      propagate(ex, sub.y0[i], sub.r0[i], slope, s, out[i]);
    }
  }

private:
  const SpectralModel& m_;
  ForcingFn forcing_;
  double kappa_ = 0.0;
  Vector stiffness_;
};

inline double fields_norm(const Fields& y, const TimeNorm& norm) {
  double s = 0.0;
  for (const auto& f : y) s += norm.squared(f);
  return std::sqrt(s);
}

struct MultiRecord {
  std::vector<double> times;
  std::vector<Fields> samples;
  std::vector<double> error_since_last;
  std::vector<std::pair<double, double>> step_errors;
  double error_estimate = 0.0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::vector<std::string> warnings;
};

/// Adaptive driver shared by plain and decomposed integration. `monitor` selects the field whose
/// H_t norm is checked for blow-up.
inline MultiRecord run_adaptive(const SpectralModel& m, const ForcingFn& forcing, Fields y, double tau, double t,
                                const SolverConfig& cfg, std::size_t monitor = 0) {
  cfg.validate();
  if (t < tau) throw DomainError("integrate: requires t >= tau");
  if (t - tau > cfg.hard_horizon)
    throw DomainError("integrate: interval length " + std::to_string(t - tau) + " exceeds the hard horizon");
  for (const auto& f : y) {
    if (f.n_modes() != m.n_modes) throw InvalidInput("integrate: state mode count differs from model");
    if (!f.finite()) throw InvalidInput("integrate: non-finite initial state");
  }

  MultiRecord rec;
  rec.times.push_back(tau);
  rec.samples.push_back(y);
  rec.error_since_last.push_back(0.0);
  if (t == tau) return rec;

  double max_step = cfg.max_step;
  if (m.eps(t) < 1e-8) {
    rec.warnings.push_back("eps(t) = " + std::to_string(m.eps(t)) + " < 1e-8 on the interval; step cap tightened");
    max_step = 0.1 * cfg.max_step;
  }

  const ExponentialStepper stepper(m, forcing);
  const bool cadence = cfg.output_cadence > 0.0;
  std::size_t next_index = 1;
  auto next_output = [&]() {
    if (!cadence) return t;
    const double s = tau + static_cast<double>(next_index) * cfg.output_cadence;
    return s < t - 1e-12 * std::max(1.0, std::abs(t)) ? s : t;
  };
  double pending_error = 0.0;

  double time = tau;
  double h = std::min({cfg.initial_step, max_step, t - tau});
  std::vector<Vector> r0;
  Fields y_full, y_mid, y_end;
  const double min_step = 1e-13 * std::max(1.0, std::abs(t) + std::abs(tau));

  while (time < t) {
    bool last = false;
    if (time + h >= t || t - (time + h) < 1e-12 * std::max(1.0, std::abs(t))) {
      h = t - time;
      last = true;
    }
    stepper.forcing(time, y, r0);
    stepper.substep(time, y, r0, h, y_full);
    const Substep first = stepper.substep(time, y, r0, 0.5 * h, y_mid);
    std::vector<Vector> r_mid;
    stepper.forcing(time + 0.5 * h, y_mid, r_mid);
    const Substep second = stepper.substep(time + 0.5 * h, y_mid, r_mid, 0.5 * h, y_end);

    const double t_new = last ? t : time + h;
    const TimeNorm norm(m.eps(t_new), 0.0, m.spectrum);
    Fields diff(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) diff[i] = (1.0 / 3.0) * (y_end[i] - y_full[i]);
    const double err_abs = fields_norm(diff, norm);
    const double scale = cfg.atol + cfg.rtol * std::max(fields_norm(y, norm), fields_norm(y_end, norm));
    const double err = err_abs / scale;
    bool finite = std::isfinite(err);
    for (const auto& f : y_end) finite = finite && f.finite();

    if (finite && err <= 1.0) {
      // emit samples inside (time, t_new]
      for (double s_out = next_output(); s_out <= t_new && next_index > 0;) {
        Fields sample;
        if (s_out >= t_new) {
          sample = y_end;
        } else if (s_out <= time + 0.5 * h) {
          stepper.dense(first, s_out - first.t0, sample);
        } else {
          stepper.dense(second, s_out - second.t0, sample);
        }
        rec.times.push_back(s_out);
        rec.samples.push_back(std::move(sample));
        rec.error_since_last.push_back(pending_error + err_abs);
        pending_error = -err_abs; // the step's estimate is charged once, to its first sample
        if (s_out >= t) {
          next_index = 0;
          break;
        }
        ++next_index;
        s_out = next_output();
      }
      pending_error += err_abs;
      rec.step_errors.emplace_back(t_new, err_abs);
      rec.error_estimate += err_abs;
      ++rec.accepted;
      time = t_new;
      y.swap(y_end);
      const double n_now = norm(y[monitor]);
      if (!(n_now <= cfg.blowup_norm))
        throw DivergenceError("integrate: state norm " + std::to_string(n_now) + " exceeds the blow-up threshold",
                              time);
      const double fac = err > 0.0 ? cfg.safety * std::cbrt(1.0 / err) : 5.0;
      h = std::min(max_step, h * std::clamp(fac, 0.2, 5.0));
    } else {
      ++rec.rejected;
      const double fac = finite && err > 0.0 ? cfg.safety * std::cbrt(1.0 / err) : 0.1;
      h *= std::clamp(fac, 0.1, 0.9);
      if (h < min_step) throw DivergenceError("integrate: step size underflow", time);
    }
  }
  return rec;
}

inline TrajectoryRecord single_field(MultiRecord&& mr, std::size_t field) {
  TrajectoryRecord rec;
  rec.times = std::move(mr.times);
  rec.states.reserve(mr.samples.size());
  for (auto& s : mr.samples) rec.states.push_back(std::move(s[field]));
  rec.error_since_last = std::move(mr.error_since_last);
  rec.step_errors = std::move(mr.step_errors);
  rec.error_estimate = mr.error_estimate;
  rec.accepted_steps = mr.accepted;
  rec.rejected_steps = mr.rejected;
  rec.warnings = std::move(mr.warnings);
  return rec;
}

} // namespace detail

/// U(t, tau) z for the full model. Returns the final state and the sampled record.
inline std::pair<State, TrajectoryRecord> integrate(const SpectralModel& m, const State& z, double tau, double t,
                                                    const SolverConfig& cfg) {
  const detail::ForcingFn forcing = [&m](double, const detail::Fields& y, detail::Fields& r) {
    r[0].u = m.g - nonlinear_term(m, y[0].u);
  };
  auto rec = detail::single_field(detail::run_adaptive(m, forcing, {z}, tau, t, cfg), 0);
  State last = rec.states.back();
  return {std::move(last), std::move(rec)};
}

/// Which of the two splittings U = U0 + U1 to integrate.
enum class DecompositionMode {
  nonlinear_split, // U0: eps v'' + alpha v' + A v + f0(v) = 0;  U1: ... + A w + f(u) - f0(v) = g
  linear_split     // U0: eps v'' + alpha v' + A v = 0;          U1: ... + A w + f(u) = g
};

struct DecompositionPair {
  DecompositionMode mode = DecompositionMode::nonlinear_split;
  TrajectoryRecord full;   // U(t, tau) z
  TrajectoryRecord decay;  // U0(t, tau) z
  TrajectoryRecord compact; // U1(t, tau) z
};

/// Co-integrates u, v, w on one adaptive grid with U0(tau, tau) = z and U1(tau, tau) = 0.
inline DecompositionPair solve_decomposed(const SpectralModel& m, const State& z, double tau, double t,
                                          DecompositionMode mode, const SolverConfig& cfg) {
  detail::ForcingFn forcing;
  if (mode == DecompositionMode::nonlinear_split) {
    forcing = [&m](double, const detail::Fields& y, detail::Fields& r) {
      Vector ug = m.grid.to_grid(y[0].u);
      Vector vg = m.grid.to_grid(y[1].u);
      for (Eigen::Index j = 0; j < ug.size(); ++j) {
        ug(j) = m.nonlinearity.f(ug(j));
        vg(j) = m.splitting.f0(vg(j));
      }
      if (!ug.allFinite() || !vg.allFinite())
        throw DivergenceError("solve_decomposed: nonlinearity overflow", std::nan(""));
      const Vector pf = m.grid.project(ug);
      const Vector pf0 = m.grid.project(vg);
      r[0].u = m.g - pf;
      r[1].u = -pf0;
      r[2].u = m.g - pf + pf0;
    };
  } else {
    forcing = [&m](double, const detail::Fields& y, detail::Fields& r) {
      const Vector pf = nonlinear_term(m, y[0].u);
      r[0].u = m.g - pf;
      r[1].u = Vector::Zero(m.n_modes);
      r[2].u = m.g - pf;
    };
  }
  detail::Fields y0{z, z, State(m.n_modes)};
  auto mr = detail::run_adaptive(m, forcing, std::move(y0), tau, t, cfg);

  DecompositionPair out;
  out.mode = mode;
  auto split = [&](std::size_t field) {
    detail::MultiRecord copy;
    copy.times = mr.times;
    copy.samples.reserve(mr.samples.size());
    for (const auto& s : mr.samples) copy.samples.push_back({s[field]});
    copy.error_since_last = mr.error_since_last;
    copy.step_errors = mr.step_errors;
    copy.error_estimate = mr.error_estimate;
    copy.accepted = mr.accepted;
    copy.rejected = mr.rejected;
    copy.warnings = mr.warnings;
    return detail::single_field(std::move(copy), 0);
  };
  out.full = split(0);
  out.decay = split(1);
  out.compact = split(2);
  return out;
}

// ---------------------------------------------------------------------------------------------
// Energy functionals

inline void require_delta(const SpectralModel& m, double delta) {
  if (!(delta > 0.0) || delta > m.energy.delta)
    throw DomainError("energy functional: delta = " + std::to_string(delta) + " outside the validated range (0, " +
                      std::to_string(m.energy.delta) + "]");
}

/// E = |u|_1^2 + eps(t) |u_t|^2.
inline double functional_E(const SpectralModel& m, const State& z, double t) {
  return TimeNorm(m.eps(t), 0.0, m.spectrum).squared(z);
}

/// E + delta alpha |u|^2 + 2 delta eps <u_t, u> + 2 <F(u), 1> - 2 <g, u>.
inline double functional_scriptE(const SpectralModel& m, const State& z, double t, double delta) {
  require_delta(m, delta);
  const double e = m.eps(t);
  return functional_E(m, z, t) + delta * m.alpha * z.u.squaredNorm() + 2.0 * delta * e * z.v.dot(z.u) +
         2.0 * potential_integral(m, z.u, m.nonlinearity.F) - 2.0 * m.g.dot(z.u);
}

/// |U0|^2_{H_t} + delta alpha |v|^2 + 2 delta eps <v_t, v> + 2 <F0(v), 1>.
inline double functional_scriptE0(const SpectralModel& m, const State& v, double t, double delta) {
  require_delta(m, delta);
  const double e = m.eps(t);
  return functional_E(m, v, t) + delta * m.alpha * v.u.squaredNorm() + 2.0 * delta * e * v.v.dot(v.u) +
         2.0 * potential_integral(m, v.u, m.splitting.F0);
}

/// |U1|^2_{H^{1/3}_t} + delta alpha |w|^2_{1/3} + 2 delta eps <w_t, A^{1/3} w>
///   + 2 <f(u) - f0(v) - g, A^{1/3} w> + shift.
inline double functional_Lambda13(const SpectralModel& m, const State& u, const State& v, const State& w, double t,
                                  double delta, double shift) {
  require_delta(m, delta);
  const double e = m.eps(t);
  const Vector a13 = m.lambda().array().pow(1.0 / 3.0).matrix();
  Vector ug = m.grid.to_grid(u.u);
  Vector vg = m.grid.to_grid(v.u);
  for (Eigen::Index j = 0; j < ug.size(); ++j) ug(j) = m.nonlinearity.f(ug(j)) - m.splitting.f0(vg(j));
  const Vector h = m.grid.project(ug) - m.g;
  const Vector a13w = a13.cwiseProduct(w.u);
  return TimeNorm(e, 1.0 / 3.0, m.spectrum).squared(w) + delta * m.alpha * w.u.dot(a13w) +
         2.0 * delta * e * w.v.dot(a13w) + 2.0 * h.dot(a13w) + shift;
}

/// |U1|^2_{H^1_t} + delta alpha |w|_1^2 + 2 delta eps <w_t, A w> - 2 <g, A w> + shift.
inline double functional_scriptE1(const SpectralModel& m, const State& w, double t, double delta, double shift) {
  require_delta(m, delta);
  const double e = m.eps(t);
  const Vector aw = m.lambda().cwiseProduct(w.u);
  return TimeNorm(e, 1.0, m.spectrum).squared(w) + delta * m.alpha * w.u.dot(aw) + 2.0 * delta * e * w.v.dot(aw) -
         2.0 * m.g.dot(aw) + shift;
}

// ---------------------------------------------------------------------------------------------

struct ContdepResult {
  std::vector<double> times;
  std::vector<double> separations; // |U z1 - U z2|_{H_t}
  double initial_separation = 0.0; // |z1 - z2|_{H_tau}
  bool applicable = true;          // false when z1 == z2
  double fitted_rate = 0.0;        // least-squares slope of log separation
  double fitted_intercept = 0.0;
  double max_residual = 0.0;       // largest excess of log separation above the fitted line
  double envelope_rate = 0.0;      // smallest K with sep(t) <= e^{K (t - tau)} sep(tau) on the samples
};

/// Separation of two trajectories; fits log |U z1 - U z2|_{H_t} against t.
inline ContdepResult contdep_probe(const SpectralModel& m, const State& z1, const State& z2, double tau, double t,
                                   const SolverConfig& cfg) {
  ContdepResult out;
  out.initial_separation = TimeNorm(m.eps(tau), 0.0, m.spectrum).distance(z1, z2);
  const auto r1 = integrate(m, z1, tau, t, cfg).second;
  if (z1 == z2) {
    out.applicable = false;
    out.times = r1.times;
    out.separations.assign(r1.times.size(), 0.0);
    return out;
  }
  const auto r2 = integrate(m, z2, tau, t, cfg).second;
  if (r1.times != r2.times) throw InvalidInput("contdep_probe: sample grids differ");
  out.times = r1.times;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  out.envelope_rate = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < r1.times.size(); ++i) {
    const TimeNorm norm(m.eps(r1.times[i]), 0.0, m.spectrum);
    const double sep = norm.distance(r1.states[i], r2.states[i]);
    out.separations.push_back(sep);
    if (sep > 0.0) {
      const double x = r1.times[i] - tau, y = std::log(sep);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      ++n;
      if (x > 0.0) out.envelope_rate = std::max(out.envelope_rate, std::log(sep / out.initial_separation) / x);
    }
  }
  if (n >= 2) {
    const double dn = static_cast<double>(n);
    out.fitted_rate = (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
    out.fitted_intercept = (sy - out.fitted_rate * sx) / dn;
    out.max_residual = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < out.times.size(); ++i) {
      if (out.separations[i] <= 0.0) continue;
      const double res =
        std::log(out.separations[i]) - (out.fitted_intercept + out.fitted_rate * (out.times[i] - tau));
      out.max_residual = std::max(out.max_residual, res);
    }
  }
  if (!std::isfinite(out.envelope_rate)) out.envelope_rate = 0.0;
  return out;
}

} // namespace tdattr
