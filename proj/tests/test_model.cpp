#include "catch_amalgamated.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "tdattr/model.hpp"

using namespace tdattr;
using Catch::Approx;

namespace {

constexpr double pi = std::numbers::pi;

SpectralModel cubic_model(int n, double mu, ForcingSpec g = ForcingSpec::zero()) {
  return assemble_model(n, 1.0, g, make_epsilon(EpsilonProfile::Kind::logistic, {1.0, 5.0, 0.0}),
                        make_cubic_nonlinearity(mu));
}

// 64-point Gauss-Legendre on 32 panels: independent reference for integrals over (0,1)
template <class Fn>
double reference_integral(Fn&& fn) {
  const auto [x, w] = detail::gauss_legendre(64);
  double s = 0.0;
  const int panels = 32;
  for (int p = 0; p < panels; ++p) {
    const double a = static_cast<double>(p) / panels, h = 0.5 / panels;
    for (std::size_t q = 0; q < x.size(); ++q) s += w[q] * h * fn(a + h * (1.0 + x[q]));
  }
  return s;
}

double mode(int k, double x) { return std::numbers::sqrt2 * std::sin(k * pi * x); }

} // namespace

TEST_CASE("logistic profile values and derivative", "[model][epsilon]") {
  const auto eps = make_epsilon(EpsilonProfile::Kind::logistic, {1.0, 1.0, 0.0});
  CHECK(eps(0.0) == Approx(0.5).epsilon(1e-15));
  CHECK_FALSE(eps.classical());
  for (double t = -30.0; t <= 30.0; t += 0.37) {
    const double h = 1e-5;
    const double fd = (eps(t + h) - eps(t - h)) / (2.0 * h);
    CHECK(eps.derivative(t) == Approx(fd).margin(1e-8));
    CHECK(eps.derivative(t) == Approx(-eps(t) * (1.0 - eps(t)) / 1.0).margin(1e-15));
    CHECK(eps.derivative(t) <= 0.0);
  }
}

TEST_CASE("profiles satisfy their structural conditions on the check grid", "[model][epsilon][property]") {
  for (auto kind : {EpsilonProfile::Kind::logistic, EpsilonProfile::Kind::exponential_tail}) {
    const auto eps = make_epsilon(kind, {2.5, 4.0, -3.0});
    const auto grid = eps.check_grid();
    double prev = INFINITY;
    for (double t : grid) {
      CHECK(eps(t) > 0.0);
      CHECK(eps(t) <= prev);
      CHECK(eps.derivative(t) <= 0.0);
      CHECK(std::abs(eps(t)) + std::abs(eps.derivative(t)) <= eps.bound());
      prev = eps(t);
    }
    CHECK(eps(grid.back()) < 1e-4 * eps(grid.front()));
  }
  // exponential tail is C^1 at the junction
  const auto tail = make_epsilon(EpsilonProfile::Kind::exponential_tail, {1.0, 2.0, 0.0});
  CHECK(tail.derivative(1e-9) == Approx(0.0).margin(1e-8));
  CHECK(tail(1e-9) == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("constant profile is classical", "[model][epsilon]") {
  const auto eps = make_epsilon(EpsilonProfile::Kind::constant, {1.0, 1.0, 0.0});
  CHECK(eps.classical());
  CHECK(eps(-100.0) == 1.0);
  CHECK(eps(100.0) == 1.0);
  CHECK(eps.derivative(3.0) == 0.0);
}

TEST_CASE("invalid profiles are rejected", "[model][epsilon]") {
  CHECK_THROWS_AS(make_epsilon(EpsilonProfile::Kind::logistic, {0.0, 1.0, 0.0}), ValidationError);
  CHECK_THROWS_AS(make_epsilon(EpsilonProfile::Kind::logistic, {-1.0, 1.0, 0.0}), ValidationError);
  CHECK_THROWS_AS(make_epsilon(EpsilonProfile::Kind::logistic, {1.0, -2.0, 0.0}), ValidationError);
  CHECK_THROWS_AS(make_epsilon(EpsilonProfile::Kind::exponential_tail, {1.0, 0.0, 0.0}), ValidationError);
  CHECK_THROWS_AS(make_epsilon(EpsilonProfile::Kind::logistic, {NAN, 1.0, 0.0}), ValidationError);
  CHECK_THROWS_AS(EpsilonProfile::parse_kind("sigmoid"), ValidationError);
}

TEST_CASE("cubic nonlinearity values", "[model][nonlinearity]") {
  const auto p = make_cubic_nonlinearity(1.0);
  CHECK(p.nonlinearity.f(2.0) == 6.0);
  CHECK(p.nonlinearity.F(2.0) == 2.0);
  CHECK(p.splitting.f0(2.0) == 8.0);
  CHECK(p.splitting.f1(2.0) == -2.0);
  CHECK(p.nonlinearity.nu == Approx(0.5 * (1.0 - 1.0 / (pi * pi))));

  const auto q = make_cubic_nonlinearity(0.0);
  for (double s = -3.0; s <= 3.0; s += 0.5) {
    CHECK(q.nonlinearity.f(s) == q.splitting.f0(s));
    CHECK(q.splitting.f1(s) == 0.0);
  }
  CHECK(q.splitting.k_lipschitz == 0.0);

  CHECK_THROWS_AS(make_cubic_nonlinearity(pi * pi), ValidationError);
  CHECK_THROWS_AS(make_cubic_nonlinearity(-0.5), ValidationError);
}

TEST_CASE("nonlinearity and splitting conditions on [-10, 10]", "[model][nonlinearity][property]") {
  for (double mu : {0.0, 1.0, 5.0}) {
    const auto p = make_cubic_nonlinearity(mu);
    const auto& nl = p.nonlinearity;
    const auto& sp = p.splitting;
    CHECK(nl.f(0.0) == 0.0);
    CHECK(nl.F(0.0) == 0.0);
    CHECK(sp.f0(0.0) == 0.0);
    CHECK(sp.df0(0.0) == 0.0);
    for (double s = -10.0; s <= 10.0; s += 0.01) {
      CHECK(std::abs(sp.f0(s) + sp.f1(s) - nl.f(s)) <= 1e-12 * (1.0 + std::abs(nl.f(s))));
      CHECK(std::abs(sp.df1(s)) <= sp.k);
      CHECK(std::abs(sp.d2f0(s)) <= sp.k * (1.0 + std::abs(s)));
      CHECK(std::abs(nl.d2f(s)) <= nl.growth_c * (1.0 + std::abs(s)));
      CHECK(sp.f0(s) * s >= 0.0);
      const double h = 1e-5;
      CHECK((nl.F(s + h) - nl.F(s - h)) / (2.0 * h) == Approx(nl.f(s)).margin(1e-6 * (1.0 + s * s * std::abs(s))));
      CHECK((nl.f(s + h) - nl.f(s - h)) / (2.0 * h) == Approx(nl.df(s)).margin(1e-6 * (1.0 + s * s)));
    }
  }
}

TEST_CASE("dissipation inequalities hold with the stored constants", "[model][nonlinearity][property]") {
  for (double mu : {0.0, 1.0, 8.0}) {
    const auto m = cubic_model(16, mu);
    CHECK(m.nonlinearity.nu > 0.0);
    CHECK(m.nonlinearity.nu < 1.0);
    CHECK(m.nonlinearity.c1 >= 0.0);
    const auto w = sample_dissipation_margins(m, 1000, 50.0, 99);
    CHECK(w.funz1 + m.nonlinearity.c1 >= -1e-9);
    CHECK(w.funz2 + m.nonlinearity.c1 >= -1e-9);
    CHECK(w.extra + m.nonlinearity.c1 >= -1e-9);
  }
}

TEST_CASE("assembled model data", "[model]") {
  const auto m = cubic_model(8, 1.0);
  CHECK(m.spectrum.lambda_1() == Approx(pi * pi).epsilon(1e-15));
  CHECK(m.lambda()(7) == Approx(64.0 * pi * pi).epsilon(1e-15));
  CHECK(m.g.isZero(0.0));
  CHECK(m.grid.grid_size() >= 3 * 8 / 2);
  CHECK(m.energy.delta > 0.0);
  CHECK(m.energy.delta <= m.alpha / (8.0 * m.energy.L + 8.0));

  CHECK_THROWS_AS(assemble_model(0, 1.0, ForcingSpec::zero(), m.eps, make_cubic_nonlinearity(1.0)), ValidationError);
  CHECK_THROWS_AS(assemble_model(4, 0.0, ForcingSpec::zero(), m.eps, make_cubic_nonlinearity(1.0)), ValidationError);
  CHECK_THROWS_AS(assemble_model(2, 1.0, ForcingSpec::modal(Vector::Ones(3)), m.eps, make_cubic_nonlinearity(1.0)),
                  ValidationError);
}

TEST_CASE("forcing projection", "[model]") {
  const auto e1 = cubic_model(10, 1.0, ForcingSpec::function("e1", [](double x) { return mode(1, x); }));
  CHECK(e1.g(0) == Approx(1.0).epsilon(1e-13));
  for (int k = 1; k < 10; ++k) CHECK(std::abs(e1.g(k)) < 1e-13);

  const auto parab = cubic_model(12, 1.0, ForcingSpec::function("x(1-x)", [](double x) { return x * (1.0 - x); }));
  for (int k = 1; k <= 12; ++k) {
    const double expected = k % 2 == 1 ? 4.0 * std::numbers::sqrt2 / std::pow(k * pi, 3) : 0.0;
    CHECK(parab.g(k - 1) == Approx(expected).margin(1e-14));
  }
  CHECK_THROWS_AS(cubic_model(4, 1.0, ForcingSpec::function("bad", [](double x) { return 1.0 / (x - x); })),
                  ValidationError);
}

TEST_CASE("quadrature integrates products of four modes exactly", "[model]") {
  const Galerkin1D grid(6);
  for (int a = 1; a <= 6; ++a)
    for (int b = a; b <= 6; ++b) {
      Vector ea = Vector::Zero(6), eb = Vector::Zero(6);
      ea(a - 1) = 1.0;
      eb(b - 1) = 1.0;
      const Vector pa = grid.to_grid(ea), pb = grid.to_grid(eb);
      CHECK(grid.integrate(pa.cwiseProduct(pb)) == Approx(a == b ? 1.0 : 0.0).margin(1e-14));
      for (int c = 1; c <= 6; c += 2) {
        Vector ec = Vector::Zero(6);
        ec(c - 1) = 1.0;
        const Vector pc = grid.to_grid(ec);
        const double quad = grid.integrate(pa.cwiseProduct(pb).cwiseProduct(pc).cwiseProduct(pc));
        const double ref = reference_integral([&](double x) { return mode(a, x) * mode(b, x) * mode(c, x) * mode(c, x); });
        CHECK(quad == Approx(ref).margin(1e-13));
      }
    }
}

TEST_CASE("nonlinear term", "[model]") {
  const auto m = cubic_model(8, 1.0);
  CHECK(nonlinear_term(m, Vector::Zero(8)).isZero(0.0));

  const auto lin = assemble_model(8, 1.0, ForcingSpec::zero(), m.eps, make_linear_nonlinearity(1.0));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  Vector u(8);
  for (auto& x : u) x = g(rng);
  CHECK((nonlinear_term(lin, u) - u).norm() < 1e-13 * u.norm());

  // (a e1)^3 projects to a^3 (3/2, 0, -1/2, 0, ...)
  const auto pure = cubic_model(8, 0.0);
  const double a = 0.7;
  Vector e1 = Vector::Zero(8);
  e1(0) = a;
  const Vector p = nonlinear_term(pure, e1);
  Vector expected = Vector::Zero(8);
  expected(0) = 1.5 * a * a * a;
  expected(2) = -0.5 * a * a * a;
  CHECK((p - expected).norm() < 1e-14);
  // with mu = 1 the linear part is subtracted
  CHECK((nonlinear_term(m, e1) - (expected - e1)).norm() < 1e-14);

  Vector wrong = Vector::Zero(5);
  CHECK_THROWS_AS(nonlinear_term(m, wrong), InvalidInput);
  Vector huge = Vector::Zero(8);
  huge(0) = 1e120;
  CHECK_THROWS_AS(nonlinear_term(m, huge), DivergenceError);
}

TEST_CASE("nonlinear term is consistent across truncations", "[model][property]") {
  const int n = 12;
  const auto small = cubic_model(n, 1.0);
  const auto large = cubic_model(2 * n, 1.0);
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  for (int bandwidth : {n / 3, n}) {
    for (int trial = 0; trial < 20; ++trial) {
      Vector u = Vector::Zero(n);
      for (int k = 0; k < bandwidth; ++k) u(k) = g(rng) / (k + 1);
      Vector padded = Vector::Zero(2 * n);
      padded.head(n) = u;
      const Vector a = nonlinear_term(small, u);
      const Vector b = nonlinear_term(large, padded).head(n);
      CHECK((a - b).norm() <= 1e-10 * (1.0 + b.norm()));
    }
  }
}

TEST_CASE("cubic projection matches independent quadrature", "[model][property]") {
  const auto m = cubic_model(6, 1.0);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  Vector u(6);
  for (int k = 0; k < 6; ++k) u(k) = g(rng) / (k + 1);
  auto field = [&](double x) {
    double s = 0.0;
    for (int k = 0; k < 6; ++k) s += u(k) * mode(k + 1, x);
    return s;
  };
  const Vector p = nonlinear_term(m, u);
  for (int k = 1; k <= 6; ++k) {
    const double ref = reference_integral([&](double x) {
      const double s = field(x);
      return (s * s * s - s) * mode(k, x);
    });
    CHECK(p(k - 1) == Approx(ref).margin(1e-12));
  }
  const double F_ref = reference_integral([&](double x) {
    const double s = field(x);
    return 0.25 * s * s * s * s - 0.5 * s * s;
  });
  CHECK(potential_integral(m, u, m.nonlinearity.F) == Approx(F_ref).margin(1e-12));
}
