#include "catch_amalgamated.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "tdattr/process.hpp"
#include "tdattr/solver.hpp"

using namespace tdattr;
using Catch::Approx;

namespace {

constexpr double pi = std::numbers::pi;

EpsilonProfile logistic() { return make_epsilon(EpsilonProfile::Kind::logistic, {1.0, 5.0, 0.0}); }
EpsilonProfile constant_eps(double e) { return make_epsilon(EpsilonProfile::Kind::constant, {e, 1.0, 0.0}); }

SpectralModel default_model(int n) {
  Vector g = Vector::Zero(1);
  g(0) = 1.0;
  return assemble_model(n, 1.0, ForcingSpec::modal(g), logistic(), make_cubic_nonlinearity(1.0));
}

SpectralModel linear_model(int n, const EpsilonProfile& eps) {
  return assemble_model(n, 1.0, ForcingSpec::zero(), eps, make_linear_nonlinearity(0.0));
}

State smooth_state(int n, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  State z(n);
  for (int k = 0; k < n; ++k) {
    z.u(k) = scale * g(rng) / ((k + 1) * (k + 1));
    z.v(k) = scale * g(rng) / (k + 1);
  }
  return z;
}

// RK4 on eps s'' + alpha s' + lambda s = 0
std::pair<double, double> rk4_mode(double lam, double alpha, double eps, double a, double b, double t, int steps) {
  auto rhs = [&](double s, double ds) { return std::make_pair(ds, -(alpha * ds + lam * s) / eps); };
  const double h = t / steps;
  for (int i = 0; i < steps; ++i) {
    const auto k1 = rhs(a, b);
    const auto k2 = rhs(a + 0.5 * h * k1.first, b + 0.5 * h * k1.second);
    const auto k3 = rhs(a + 0.5 * h * k2.first, b + 0.5 * h * k2.second);
    const auto k4 = rhs(a + h * k3.first, b + h * k3.second);
    a += h * (k1.first + 2 * k2.first + 2 * k3.first + k4.first) / 6.0;
    b += h * (k1.second + 2 * k2.second + 2 * k3.second + k4.second) / 6.0;
  }
  return {a, b};
}

} // namespace

TEST_CASE("modal oracle closed forms", "[solver][oracle]") {
  // double root r = -1: u = (1 + t) e^{-t}
  const auto [u, du] = linear_modal_oracle(1.0, 2.0, 1.0, 1.0, 0.0, 1.0);
  CHECK(u == Approx(2.0 * std::exp(-1.0)).epsilon(1e-15));
  CHECK(u == Approx(0.735759).epsilon(1e-6));
  CHECK(du == Approx(-std::exp(-1.0)).epsilon(1e-15));

  const auto [a0, b0] = linear_modal_oracle(3.0, 1.0, 0.2, 0.4, -0.7, 0.0);
  CHECK(a0 == 0.4);
  CHECK(b0 == -0.7);

  // underdamped: u = e^{-t/10} (a cos wt + (b + a/10)/w sin wt)
  const double w = std::sqrt(0.99);
  for (double t = 0.0; t <= 60.0; t += 0.5) {
    const double a = 0.8, b = -1.3;
    const auto [s, ds] = linear_modal_oracle(1.0, 0.2, 1.0, a, b, t);
    CHECK(s == Approx(std::exp(-0.1 * t) * (a * std::cos(w * t) + (b + 0.1 * a) / w * std::sin(w * t))).margin(1e-13));
    CHECK(std::abs(s) <= (std::abs(a) + std::abs(b)) * (1.0 + 1.1 / w) * std::exp(-0.1 * t));
  }
  CHECK_THROWS_AS(linear_modal_oracle(1.0, 0.0, 1.0, 1.0, 0.0, 1.0), DomainError);
}

TEST_CASE("modal oracle agrees with a fine RK4 integration", "[solver][oracle]") {
  struct Case {
    double lam, alpha, eps;
  };
  // distinct real, double, complex roots
  for (const Case c : {Case{1.0, 3.0, 0.5}, Case{1.0, 2.0, 1.0}, Case{pi * pi, 1.0, 0.1}}) {
    const auto ref = rk4_mode(c.lam, c.alpha, c.eps, 0.6, -0.2, 3.0, 30000);
    const auto got = linear_modal_oracle(c.lam, c.alpha, c.eps, 0.6, -0.2, 3.0);
    CHECK(got.first == Approx(ref.first).margin(1e-11));
    CHECK(got.second == Approx(ref.second).margin(1e-10));
  }
}

TEST_CASE("mode exponential agrees with the oracle on every branch", "[solver]") {
  for (double lam : {pi * pi, 100.0 * pi * pi, 1e4}) {
    for (double eps : {1.0, 1e-2, 1e-6}) {
      for (double h : {1e-5, 1e-2, 0.25}) {
        const auto ex = ModeExponential::compute(lam, 1.0, eps, h);
        const double a = 0.3, b = -2.0;
        const auto [s, ds] = linear_modal_oracle(lam, 1.0, eps, a, b, h);
        const double u = ex.m11 * a + ex.m12 * b, v = ex.m21 * a + ex.m22 * b;
        const double scale = std::sqrt(lam * a * a + eps * b * b);
        CHECK(std::sqrt(lam * (u - s) * (u - s) + eps * (v - ds) * (v - ds)) <= 1e-10 * scale);
      }
    }
  }
}

TEST_CASE("integrate trivial cases and errors", "[solver]") {
  const auto m = linear_model(8, logistic());
  const SolverConfig cfg;
  const auto zero = integrate(m, State(8), 0.0, 10.0, cfg).first;
  CHECK(zero == State(8));

  const State z = smooth_state(8, 1.0, 1);
  const auto same = integrate(m, z, 2.0, 2.0, cfg);
  CHECK(same.first == z);
  CHECK(same.second.times.size() == 1);

  CHECK_THROWS_AS(integrate(m, z, 1.0, 0.0, cfg), DomainError);
  SolverConfig short_horizon = cfg;
  short_horizon.hard_horizon = 5.0;
  CHECK_THROWS_AS(integrate(m, z, 0.0, 6.0, short_horizon), DomainError);
  State bad = z;
  bad.u(3) = NAN;
  CHECK_THROWS_AS(integrate(m, bad, 0.0, 1.0, cfg), InvalidInput);
  CHECK_THROWS_AS(integrate(m, State(5), 0.0, 1.0, cfg), InvalidInput);
  SolverConfig broken = cfg;
  broken.rtol = 0.0;
  CHECK_THROWS_AS(integrate(m, z, 0.0, 1.0, broken), ValidationError);

  SolverConfig tiny = cfg;
  tiny.blowup_norm = 1e-3;
  try {
    integrate(default_model(8), smooth_state(8, 1.0, 2), 0.0, 1.0, tiny);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.time() > 0.0);
  }
}

TEST_CASE("oracle equivalence for the linear constant-coefficient model", "[solver][oracle]") {
  for (double e : {1.0, 0.1, 0.01}) {
    const auto m = linear_model(16, constant_eps(e));
    const State z = smooth_state(16, 1.0, 3);
    SolverConfig cfg;
    cfg.output_cadence = 0.5;
    const auto rec = integrate(m, z, 0.0, 50.0, cfg).second;
    REQUIRE(rec.times.size() == 101);
    double worst = 0.0;
    for (std::size_t i = 0; i < rec.times.size(); ++i)
      for (int k = 0; k < 16; ++k) {
        const double lam = m.lambda()(k);
        const auto [a, b] = linear_modal_oracle(lam, 1.0, e, z.u(k), z.v(k), rec.times[i]);
        const double du = rec.states[i].u(k) - a, dv = rec.states[i].v(k) - b;
        const double den = std::sqrt(lam * a * a + e * b * b);
        if (den > 1e-250) worst = std::max(worst, std::sqrt(lam * du * du + e * dv * dv) / den);
      }
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("energy is nonincreasing for the linear unforced model", "[solver][property]") {
  const auto m = linear_model(16, logistic());
  SolverConfig cfg;
  cfg.output_cadence = 0.05;
  const auto rec = integrate(m, smooth_state(16, 2.0, 4), -10.0, 20.0, cfg).second;
  for (std::size_t i = 1; i < rec.times.size(); ++i) {
    const double e0 = functional_E(m, rec.states[i - 1], rec.times[i - 1]);
    const double e1 = functional_E(m, rec.states[i], rec.times[i]);
    CHECK(e1 <= e0 * (1.0 + 1e-12) + 2.0 * std::sqrt(e0) * rec.error_since_last[i] * 10.0);
  }
}

TEST_CASE("output samples and dense output", "[solver]") {
  const auto m = default_model(16);
  const State z = smooth_state(16, 1.0, 5);
  SolverConfig cfg;
  cfg.output_cadence = 0.3;
  const auto rec = integrate(m, z, 0.0, 4.0, cfg).second;
  REQUIRE(rec.times.size() == 15);
  CHECK(rec.times.front() == 0.0);
  CHECK(rec.times.back() == 4.0);
  for (std::size_t i = 1; i < rec.times.size(); ++i) CHECK(rec.times[i] > rec.times[i - 1]);
  CHECK(rec.error_since_last.size() == rec.times.size());
  // every sample agrees with a separate run that ends there
  SolverConfig plain = cfg;
  plain.output_cadence = 0.0;
  for (std::size_t i : {3u, 7u, 12u}) {
    const auto direct = integrate(m, z, 0.0, rec.times[i], plain);
    const TimeNorm n(rec.times[i], 0.0, m.eps, m.spectrum);
    CHECK(n.distance(direct.first, rec.states[i]) <= 10.0 * (rec.error_estimate + direct.second.error_estimate) + 1e-12);
  }
}

TEST_CASE("fixed-step convergence is second order", "[solver][property]") {
  // rtol/atol so loose that no step is rejected: the step equals max_step throughout
  auto run = [](const SpectralModel& m, const State& z, double h) {
    SolverConfig c;
    c.rtol = 1e6;
    c.atol = 1e6;
    c.max_step = h;
    c.initial_step = h;
    return integrate(m, z, 0.0, 2.0, c).first;
  };
  const State z = [] {
    State s(16);
    for (int k = 0; k < 16; ++k) {
      s.u(k) = 0.5 / ((k + 1) * (k + 1));
      s.v(k) = 0.3 / (k + 1);
    }
    return s;
  }();
  Vector g = Vector::Zero(1);
  g(0) = 1.0;
  const auto lin = assemble_model(16, 1.0, ForcingSpec::modal(g), logistic(), make_linear_nonlinearity(0.0));
  const auto cub = default_model(16);
  const TimeNorm n(2.0, 0.0, logistic(), lin.spectrum);
  for (const auto* m : {&lin, &cub}) {
    const State ref = run(*m, z, 0.025 / 64.0);
    std::vector<double> errs;
    for (double h : {0.025, 0.0125, 0.00625, 0.003125}) errs.push_back(n.distance(run(*m, z, h), ref));
    for (std::size_t i = 1; i < errs.size(); ++i) {
      INFO("model " << m->nonlinearity.name << " halving " << i);
      CHECK(errs[i - 1] / errs[i] >= 3.9);
      CHECK(errs[i - 1] / errs[i] <= 4.5);
    }
  }
}

TEST_CASE("tightening the tolerance reduces the error", "[solver][property]") {
  const auto m = default_model(16);
  const State z = smooth_state(16, 1.0, 6);
  SolverConfig ref_cfg;
  ref_cfg.rtol = 1e-13;
  ref_cfg.atol = 1e-15;
  const State ref = integrate(m, z, 0.0, 3.0, ref_cfg).first;
  const TimeNorm n(3.0, 0.0, m.eps, m.spectrum);
  double prev = INFINITY;
  for (double tol : {1e-5, 1e-6, 1e-7, 1e-8}) {
    SolverConfig c;
    c.rtol = tol;
    c.atol = tol * 1e-3;
    const auto [s, rec] = integrate(m, z, 0.0, 3.0, c);
    const double err = n.distance(s, ref);
    CHECK(err < prev);
    CHECK(err <= 10.0 * rec.error_estimate + 1e-12);
    prev = err;
  }
}

TEST_CASE("tiny epsilon tightens the step cap with a warning", "[solver]") {
  const auto m = default_model(8);
  const auto rec = integrate(m, smooth_state(8, 0.5, 7), 95.0, 96.0, SolverConfig{}).second;
  REQUIRE_FALSE(rec.warnings.empty());
  CHECK(rec.states.back().finite());
}

TEST_CASE("decomposition degenerate cases", "[solver][decomposition]") {
  const auto lin = linear_model(8, logistic());
  const State z = smooth_state(8, 1.0, 8);
  const auto pair = solve_decomposed(lin, z, 0.0, 5.0, DecompositionMode::nonlinear_split, SolverConfig{});
  for (std::size_t i = 0; i < pair.full.times.size(); ++i) {
    CHECK(pair.compact.states[i] == State(8));
    CHECK(pair.decay.states[i] == pair.full.states[i]);
  }
  const auto cubic0 = assemble_model(8, 1.0, ForcingSpec::zero(), logistic(), make_cubic_nonlinearity(1.0));
  for (auto mode : {DecompositionMode::nonlinear_split, DecompositionMode::linear_split}) {
    const auto zero = solve_decomposed(cubic0, State(8), 0.0, 5.0, mode, SolverConfig{});
    CHECK(zero.full.states.back() == State(8));
    CHECK(zero.decay.states.back() == State(8));
    CHECK(zero.compact.states.back() == State(8));
  }
}

TEST_CASE("decomposition sum identity", "[solver][decomposition][property]") {
  const auto m = default_model(32);
  SolverConfig cfg;
  cfg.output_cadence = 0.5;
  for (auto mode : {DecompositionMode::nonlinear_split, DecompositionMode::linear_split}) {
    const State z = smooth_state(32, 1.0, 9);
    const auto pair = solve_decomposed(m, z, 0.0, 10.0, mode, cfg);
    REQUIRE(pair.full.times.size() == 21);
    CHECK(pair.decay.states.front() == z);
    CHECK(pair.compact.states.front() == State(32));
    // the full component is an independent integration of u on the same grid
    const auto solo = integrate(m, z, 0.0, 10.0, cfg).second;
    for (std::size_t i = 0; i < pair.full.times.size(); ++i) {
      const TimeNorm n(pair.full.times[i], 0.0, m.eps, m.spectrum);
      const double tol = 10.0 * (cfg.atol + cfg.rtol * n(pair.full.states[i]));
      CHECK(n.distance(pair.full.states[i], pair.decay.states[i] + pair.compact.states[i]) <= tol);
      CHECK(n.distance(solo.states[i], pair.decay.states[i] + pair.compact.states[i]) <=
            10.0 * (solo.error_estimate + pair.full.error_estimate) + tol);
    }
  }
}

TEST_CASE("energy functional values", "[solver][functionals]") {
  const auto m0 = assemble_model(4, 1.0, ForcingSpec::zero(), constant_eps(0.5), make_cubic_nonlinearity(1.0));
  const double d = m0.energy.delta;
  CHECK(functional_E(m0, State(4), 0.0) == 0.0);
  CHECK(functional_scriptE(m0, State(4), 0.0, d) == 0.0);
  CHECK(functional_scriptE0(m0, State(4), 0.0, d) == 0.0);
  CHECK(functional_scriptE1(m0, State(4), 0.0, d, 0.0) == 0.0);
  CHECK(functional_Lambda13(m0, State(4), State(4), State(4), 0.0, d, 0.0) == 0.0);
  State e1(4);
  e1.u(0) = 1.0;
  e1.v(0) = 1.0;
  CHECK(functional_E(m0, e1, 0.0) == Approx(pi * pi + 0.5).epsilon(1e-15));
  // scriptE adds delta alpha + 2 delta eps + 2 <F(e1), 1> with <e1^4> = 3/2, <e1^2> = 1
  const double F = 2.0 * (0.25 * 1.5 - 0.5);
  CHECK(functional_scriptE(m0, e1, 0.0, d) == Approx(pi * pi + 0.5 + d + 2.0 * d * 0.5 + F).epsilon(1e-13));
  CHECK_THROWS_AS(functional_scriptE(m0, e1, 0.0, 2.0 * d), DomainError);
  CHECK_THROWS_AS(functional_scriptE(m0, e1, 0.0, 0.0), DomainError);
  CHECK_THROWS_AS(functional_scriptE1(m0, e1, 0.0, -1.0, 0.0), DomainError);
}

TEST_CASE("energy functional is sandwiched by the assembly constants", "[solver][functionals][property]") {
  const auto m = default_model(32);
  const double d = m.energy.delta;
  for (double t : {-20.0, 0.0, 30.0}) {
    const auto ball = sample_ball(Ball(t, 2.0), 1000, m.eps, m.spectrum, 31);
    for (const auto& mem : ball.members()) {
      const double e = functional_E(m, mem.state, t);
      const double se = functional_scriptE(m, mem.state, t, d);
      CHECK(m.energy.nu * e - m.energy.lower_C <= se);
      CHECK(se <= m.energy.upper_C * (e * e + 1.0));
    }
  }
}

TEST_CASE("potential energy obeys the chain rule along trajectories", "[solver][property]") {
  const auto m = default_model(16);
  SolverConfig cfg;
  cfg.rtol = 1e-10;
  cfg.atol = 1e-13;
  cfg.output_cadence = 1e-3;
  const auto rec = integrate(m, smooth_state(16, 1.0, 10), 0.0, 0.5, cfg).second;
  for (std::size_t i = 1; i + 1 < rec.times.size(); i += 25) {
    const double h = rec.times[i + 1] - rec.times[i];
    const double dF = (potential_integral(m, rec.states[i + 1].u, m.nonlinearity.F) -
                       potential_integral(m, rec.states[i - 1].u, m.nonlinearity.F)) /
                      (2.0 * h);
    const double pairing = nonlinear_term(m, rec.states[i].u).dot(rec.states[i].v);
    CHECK(dF == Approx(pairing).margin(1e-4 * (1.0 + std::abs(pairing))));
  }
}

TEST_CASE("continuous dependence probe", "[solver][contdep]") {
  const auto lin = linear_model(8, constant_eps(0.2));
  const State z1 = smooth_state(8, 1.0, 11), z2 = smooth_state(8, 1.0, 12);
  SolverConfig cfg;
  cfg.output_cadence = 0.25;
  const auto same = contdep_probe(lin, z1, z1, 0.0, 5.0, cfg);
  CHECK_FALSE(same.applicable);
  for (double s : same.separations) CHECK(s == 0.0);

  // linear model: the separation is the oracle solution started at z1 - z2
  const auto c = contdep_probe(lin, z1, z2, 0.0, 5.0, cfg);
  REQUIRE(c.applicable);
  const State dz = z1 - z2;
  for (std::size_t i = 0; i < c.times.size(); ++i) {
    double s2 = 0.0;
    for (int k = 0; k < 8; ++k) {
      const double lam = lin.lambda()(k);
      const auto [a, b] = linear_modal_oracle(lam, 1.0, 0.2, dz.u(k), dz.v(k), c.times[i]);
      s2 += lam * a * a + 0.2 * b * b;
    }
    CHECK(c.separations[i] == Approx(std::sqrt(s2)).epsilon(1e-6));
  }
  CHECK(c.fitted_rate < 0.0);
  // the envelope rate dominates every sample
  for (std::size_t i = 0; i < c.times.size(); ++i)
    CHECK(c.separations[i] <= c.initial_separation * std::exp(c.envelope_rate * c.times[i]) * (1.0 + 1e-9));
}
