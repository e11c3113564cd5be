#pragma once

// RunConfig: the JSON document that fully determines a run. Loading validates every key and
// rejects unknown ones; echo() writes the same document with every default made explicit.

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "tdattr/epsilon.hpp"
#include "tdattr/errors.hpp"
#include "tdattr/experiments.hpp"
#include "tdattr/model.hpp"
#include "tdattr/solver.hpp"

namespace tdattr {

inline constexpr int config_format_version = 1;

struct ForcingConfig {
  std::string kind = "mode"; // zero | mode | modal | constant
  int index = 1;
  double amplitude = 1.0;
  std::vector<double> coeffs;
  double value = 0.0;
};

struct NonlinearityConfig {
  std::string kind = "cubic"; // cubic | linear
  double mu = 1.0;
  double kappa = 0.0;
};

struct EpsilonConfig {
  std::string kind = "logistic";
  EpsilonProfile::Params params;
};

struct ModelConfig {
  int modes = 64;
  double alpha = 1.0;
  ForcingConfig g;
  NonlinearityConfig f;
  EpsilonConfig epsilon;
};

struct SimulateParams {
  std::size_t members = 4;
  double tau = 0.0;
  double t = 20.0;
  double radius_factor = 1.0;
  double cadence = 0.1;
};

struct PullbackParams {
  double t = 0.0;
  std::vector<double> depths{5, 10, 15, 20, 25, 30, 35, 40};
  std::size_t members = 32;
  double radius_factor = 2.0;
  double attractor_depth = 40.0;
  std::size_t attractor_members = 64;
  double thin_tol = 1e-3;
  double eta = 1e-2;
};

struct ExperimentsConfig {
  double r0 = 1.0;
  SimulateParams simulate;
  PullbackParams pullback;
  OracleParams oracle;
  GronwallExperimentParams gronwall;
  NormEquivalenceParams norm_equivalence;
  EnergyLawParams energy;
  AbsorbingParams absorb;
  DissipationParams dissipation;
  DecompositionParams decomposition;
  AttractorParams attractor;
  InvarianceParams invariance;
  UniformAttractionParams uniform_attraction;
  ContdepParams contdep;
};

struct RunConfig {
  std::uint64_t seed = 20240611;
  std::string output_dir = "out";
  unsigned workers = 1;
  ModelConfig model;
  SolverConfig solver;
  ExperimentsConfig experiments;
};

namespace detail {

enum class Check { any, positive, nonneg, unit, nonempty };

inline bool check_value(double x, Check c) {
  switch (c) {
  case Check::positive: return std::isfinite(x) && x > 0.0;
  case Check::nonneg: return std::isfinite(x) && x >= 0.0;
  case Check::unit: return std::isfinite(x) && x > 0.0 && x <= 1.0;
  default: return std::isfinite(x);
  }
}

inline const char* check_text(Check c) {
  switch (c) {
  case Check::positive: return "a positive number";
  case Check::nonneg: return "a nonnegative number";
  case Check::unit: return "a number in (0, 1]";
  case Check::nonempty: return "a nonempty list of finite numbers";
  default: return "a finite number";
  }
}

/// Reads one JSON object into C++ fields; remembers the keys it consumed.
class Reader {
public:
  Reader(const ojson& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError(where("") + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  void operator()(const std::string& key, T& field, Check c = Check::any) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) fail(key, "a string");
        field = v.template get<std::string>();
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) fail(key, "a boolean");
        field = v.template get<bool>();
      } else if constexpr (std::is_same_v<T, std::vector<double>>) {
        if (!v.is_array()) fail(key, check_text(Check::nonempty));
        std::vector<double> out;
        for (const auto& x : v) {
          if (!x.is_number() || !std::isfinite(x.template get<double>())) fail(key, check_text(Check::nonempty));
          out.push_back(x.template get<double>());
        }
        if (c == Check::nonempty && out.empty()) fail(key, check_text(c));
        field = std::move(out);
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) fail(key, "an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_unsigned()) {
            field = static_cast<T>(v.template get<std::uint64_t>());
          } else {
            const auto x = v.template get<std::int64_t>();
            if (x < 0) fail(key, "a nonnegative integer");
            field = static_cast<T>(x);
          }
          if (c == Check::positive && field == 0) fail(key, "a positive integer");
        } else {
          field = static_cast<T>(v.template get<std::int64_t>());
          if (c == Check::positive && field <= 0) fail(key, "a positive integer");
          if (c == Check::nonneg && field < 0) fail(key, "a nonnegative integer");
        }
      } else {
        if (!v.is_number()) fail(key, check_text(c));
        const double x = v.template get<double>();
        if (!check_value(x, c)) fail(key, check_text(c));
        field = x;
      }
    } catch (const nlohmann::json::exception&) {
      fail(key, "a value of the documented type");
    }
  }

  Reader section(const std::string& key) {
    seen_.insert(key);
    static const ojson empty = ojson::object();
    return Reader(j_.contains(key) ? j_.at(key) : empty, where(key));
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ValidationError(where(key) + ": unknown key");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ValidationError(where(key) + ": must be " + what);
  }

  std::string where(const std::string& key) const {
    if (path_.empty()) return key.empty() ? "config" : key;
    return key.empty() ? path_ : path_ + "." + key;
  }

private:
  const ojson& j_;
  std::string path_;
  std::set<std::string> seen_;
};

/// Mirror of Reader that writes fields out.
class Writer {
public:
  explicit Writer(ojson& j) : j_(j) { j_ = ojson::object(); }

  bool has(const std::string&) const { return true; }

  template <class T>
  void operator()(const std::string& key, T& field, Check = Check::any) {
    j_[key] = field;
  }

  Writer section(const std::string& key) {
    j_[key] = ojson::object();
    return Writer(j_[key], 0);
  }

  void finish() const {}

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ValidationError(key + ": must be " + what);
  }

private:
  Writer(ojson& j, int) : j_(j) {}
  ojson& j_;
};

template <class V>
void visit(V& v, SolverConfig& s) {
  v("rtol", s.rtol, Check::positive);
  v("atol", s.atol, Check::positive);
  v("max_step", s.max_step, Check::positive);
  v("initial_step", s.initial_step, Check::positive);
  v("safety", s.safety, Check::unit);
  v("hard_horizon", s.hard_horizon, Check::positive);
  v("output_cadence", s.output_cadence, Check::nonneg);
  v("blowup_norm", s.blowup_norm, Check::positive);
}

template <class V>
void visit(V& v, ModelConfig& m) {
  v("modes", m.modes, Check::positive);
  v("alpha", m.alpha, Check::positive);
  {
    auto g = v.section("g");
    g("kind", m.g.kind);
    if (m.g.kind == "mode") {
      g("index", m.g.index, Check::positive);
      g("amplitude", m.g.amplitude);
    } else if (m.g.kind == "modal") {
      g("coeffs", m.g.coeffs, Check::nonempty);
      if (!g.has("coeffs")) g.fail("coeffs", "given when kind is \"modal\"");
    } else if (m.g.kind == "constant") {
      g("value", m.g.value);
    } else if (m.g.kind != "zero") {
      g.fail("kind", "one of zero, mode, modal, constant");
    }
    g.finish();
  }
  {
    auto f = v.section("f");
    f("kind", m.f.kind);
    if (m.f.kind == "cubic") f("mu", m.f.mu, Check::nonneg);
    else if (m.f.kind == "linear") f("kappa", m.f.kappa);
    else f.fail("kind", "one of cubic, linear");
    f.finish();
  }
  {
    auto e = v.section("epsilon");
    const bool explicit_kind = e.has("kind");
    e("kind", m.epsilon.kind);
    try {
      EpsilonProfile::parse_kind(m.epsilon.kind);
    } catch (const std::exception&) {
      e.fail("kind", "one of logistic, exponential_tail, constant");
    }
    e("eps0", m.epsilon.params.eps0, Check::positive);
    if (m.epsilon.kind != "constant") {
      if (explicit_kind && !e.has("scale")) e.fail("scale", "given when kind is \"" + m.epsilon.kind + "\"");
      e("scale", m.epsilon.params.scale, Check::positive);
      e("t0", m.epsilon.params.t0);
    }
    e.finish();
  }
}

template <class V>
void visit(V& v, ExperimentsConfig& x) {
  v("R0", x.r0, Check::positive);
  {
    auto s = v.section("simulate");
    auto& p = x.simulate;
    s("members", p.members, Check::positive);
    s("tau", p.tau);
    s("t", p.t);
    s("radius_factor", p.radius_factor, Check::nonneg);
    s("cadence", p.cadence, Check::nonneg);
    s.finish();
  }
  {
    auto s = v.section("pullback");
    auto& p = x.pullback;
    s("t", p.t);
    s("depths", p.depths, Check::nonempty);
    s("members", p.members, Check::positive);
    s("radius_factor", p.radius_factor, Check::positive);
    s("attractor_depth", p.attractor_depth, Check::positive);
    s("attractor_members", p.attractor_members, Check::positive);
    s("thin_tol", p.thin_tol, Check::positive);
    s("eta", p.eta, Check::positive);
    s.finish();
  }
  {
    auto s = v.section("oracle");
    auto& p = x.oracle;
    s("eps_values", p.eps_values, Check::nonempty);
    s("alpha", p.alpha, Check::positive);
    s("modes", p.modes, Check::positive);
    s("elapsed", p.elapsed, Check::positive);
    s("cadence", p.cadence, Check::positive);
    s("tolerance", p.tolerance, Check::positive);
    s.finish();
  }
  {
    auto s = v.section("gronwall");
    auto& p = x.gronwall;
    s("draws", p.draws, Check::positive);
    s("horizon", p.horizon, Check::positive);
    s("dt", p.dt, Check::positive);
    s("slack", p.slack, Check::nonneg);
    s("csv_stride", p.csv_stride, Check::positive);
    s.finish();
  }
  {
    auto s = v.section("norm_equivalence");
    auto& p = x.norm_equivalence;
    s("draws", p.draws, Check::positive);
    s("witness_tau", p.witness_tau);
    s("witness_t", p.witness_t);
    s("witness_min", p.witness_min, Check::positive);
    s("rel_tol", p.rel_tol, Check::nonneg);
    s.finish();
  }
  {
    auto s = v.section("energy");
    auto& p = x.energy;
    s("members", p.members, Check::positive);
    s("tau", p.tau);
    s("horizon", p.horizon, Check::positive);
    s("cadence", p.cadence, Check::positive);
    s("radius_factor", p.radius_factor, Check::nonneg);
    s("min_fraction", p.min_fraction, Check::unit);
    s("abs_tol", p.abs_tol, Check::nonneg);
    s("error_factor", p.error_factor, Check::nonneg);
    s("csv_stride", p.csv_stride, Check::positive);
    s.finish();
  }
  {
    auto s = v.section("absorb");
    auto& p = x.absorb;
    s("t", p.t);
    s("coarse_step", p.coarse_step, Check::positive);
    s("horizon", p.horizon, Check::positive);
    s("members", p.members, Check::positive);
    s("r0_grid", p.r0_grid, Check::nonempty);
    s("multiples", p.multiples, Check::nonempty);
    s("slope_tolerance", p.slope_tolerance, Check::positive);
    s.finish();
  }
  {
    auto s = v.section("dissipation");
    auto& p = x.dissipation;
    s("members", p.members, Check::positive);
    s("tau", p.tau);
    s("horizon", p.horizon, Check::positive);
    s("cadence", p.cadence, Check::positive);
    s("growth_tol", p.growth_tol, Check::nonneg);
    s("csv_stride", p.csv_stride, Check::positive);
    s.finish();
  }
  {
    auto s = v.section("decomposition");
    auto& p = x.decomposition;
    s("members", p.members, Check::positive);
    s("tau", p.tau);
    s("horizon", p.horizon, Check::positive);
    s("cadence", p.cadence, Check::positive);
    s("delta_min", p.delta_min, Check::positive);
    s("growth_tol", p.growth_tol, Check::nonneg);
    s("norm_floor", p.norm_floor, Check::nonneg);
    s("attractor_depth", p.attractor_depth, Check::positive);
    s("csv_stride", p.csv_stride, Check::positive);
    s.finish();
  }
  {
    auto s = v.section("attractor");
    auto& p = x.attractor;
    s("t_list", p.t_list, Check::nonempty);
    s("tau_depth", p.tau_depth, Check::positive);
    s("thin_tol", p.thin_tol, Check::positive);
    s("members", p.members, Check::positive);
    s("curve_depths", p.curve_depths, Check::nonempty);
    s("curve_members", p.curve_members, Check::positive);
    s("radius_factor", p.radius_factor, Check::positive);
    s("eta", p.eta, Check::positive);
    s("jitter", p.jitter, Check::nonneg);
    s("n_centers", p.n_centers, Check::positive);
    s("growth_tol", p.growth_tol, Check::nonneg);
    s.finish();
  }
  {
    auto s = v.section("invariance");
    auto& p = x.invariance;
    s("t", p.t);
    s("periods", p.periods, Check::nonempty);
    s("tau_depth", p.tau_depth, Check::positive);
    s("thin_tol", p.thin_tol, Check::positive);
    s("members", p.members, Check::positive);
    s("eta", p.eta, Check::positive);
    s.finish();
  }
  {
    auto s = v.section("uniform_attraction");
    auto& p = x.uniform_attraction;
    s("a", p.a);
    s("b", p.b);
    s("t_step", p.t_step, Check::positive);
    s("tau_depths", p.tau_depths, Check::nonempty);
    s("members", p.members, Check::positive);
    s("radius_factor", p.radius_factor, Check::positive);
    s("attractor_depth", p.attractor_depth, Check::positive);
    s("attractor_members", p.attractor_members, Check::positive);
    s("thin_tol", p.thin_tol, Check::positive);
    s("eta", p.eta, Check::positive);
    s.finish();
  }
  {
    auto s = v.section("contdep");
    auto& p = x.contdep;
    s("pairs", p.pairs, Check::positive);
    s("tau", p.tau);
    s("horizon", p.horizon, Check::positive);
    s("cadence", p.cadence, Check::positive);
    s("radius_factor", p.radius_factor, Check::positive);
    s.finish();
  }
}

template <class V>
void visit(V& v, RunConfig& c) {
  int version = config_format_version;
  v("format_version", version);
  if (version != config_format_version)
    throw ValidationError("format_version: unsupported value " + std::to_string(version));
  v("seed", c.seed);
  v("output_dir", c.output_dir);
  v("workers", c.workers, Check::positive);
  {
    auto s = v.section("model");
    visit(s, c.model);
    s.finish();
  }
  {
    auto s = v.section("solver");
    visit(s, c.solver);
    s.finish();
  }
  {
    auto s = v.section("experiments");
    visit(s, c.experiments);
    s.finish();
  }
}

inline void require_sorted_grid(const std::vector<double>& xs, const std::string& key, bool increasing) {
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (increasing ? !(xs[i] > xs[i - 1]) : !(xs[i] < xs[i - 1]))
      throw ValidationError(key + ": must be strictly " + (increasing ? "increasing" : "decreasing"));
}

inline void cross_validate(const RunConfig& c) {
  c.solver.validate();
  const auto& x = c.experiments;
  if (!(x.uniform_attraction.b >= x.uniform_attraction.a))
    throw ValidationError("experiments.uniform_attraction.b: must be >= a");
  require_sorted_grid(x.attractor.curve_depths, "experiments.attractor.curve_depths", true);
  require_sorted_grid(x.uniform_attraction.tau_depths, "experiments.uniform_attraction.tau_depths", true);
  require_sorted_grid(x.pullback.depths, "experiments.pullback.depths", true);
  require_sorted_grid(x.absorb.multiples, "experiments.absorb.multiples", true);
  require_sorted_grid(x.absorb.r0_grid, "experiments.absorb.r0_grid", true);
  for (double d : x.attractor.curve_depths)
    if (!(d > 0.0)) throw ValidationError("experiments.attractor.curve_depths: entries must be positive");
  for (double r : x.absorb.r0_grid)
    if (!(r > 0.0)) throw ValidationError("experiments.absorb.r0_grid: entries must be positive");
  for (double e : x.oracle.eps_values)
    if (!(e > 0.0)) throw ValidationError("experiments.oracle.eps_values: entries must be positive");
  if (!(x.simulate.t >= x.simulate.tau)) throw ValidationError("experiments.simulate.t: must be >= tau");
  if (c.model.g.kind == "mode" && c.model.g.index > c.model.modes)
    throw ValidationError("model.g.index: must be <= model.modes");
  if (c.model.g.kind == "modal" && c.model.g.coeffs.size() > static_cast<std::size_t>(c.model.modes))
    throw ValidationError("model.g.coeffs: more coefficients than model.modes");
}

} // namespace detail

inline RunConfig parse_config(const ojson& j) {
  RunConfig c;
  detail::Reader r(j, "");
  detail::visit(r, c);
  r.finish();
  detail::cross_validate(c);
  return c;
}

inline RunConfig parse_config_text(const std::string& text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("config: malformed JSON: ") + e.what());
  }
  return parse_config(j);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// The full configuration with every default written out.
inline ojson echo(RunConfig c) {
  ojson j;
  detail::Writer w(j);
  detail::visit(w, c);
  return j;
}

inline EpsilonProfile build_epsilon(const EpsilonConfig& e) {
  return make_epsilon(EpsilonProfile::parse_kind(e.kind), e.params);
}

inline SpectralModel build_model(const ModelConfig& m) {
  ForcingSpec g;
  if (m.g.kind == "zero") {
    g = ForcingSpec::zero();
  } else if (m.g.kind == "mode") {
    Vector c = Vector::Zero(m.g.index);
    c(m.g.index - 1) = m.g.amplitude;
    g = ForcingSpec::modal(c, "mode " + std::to_string(m.g.index) + " amplitude " + std::to_string(m.g.amplitude));
  } else if (m.g.kind == "modal") {
    g = ForcingSpec::modal(Eigen::Map<const Vector>(m.g.coeffs.data(), static_cast<Eigen::Index>(m.g.coeffs.size())),
                           "modal");
  } else {
    const double value = m.g.value;
    g = ForcingSpec::function("constant " + std::to_string(value), [value](double) { return value; });
  }
  const auto nl = m.f.kind == "cubic" ? make_cubic_nonlinearity(m.f.mu) : make_linear_nonlinearity(m.f.kappa);
  return assemble_model(m.modes, m.alpha, g, build_epsilon(m.epsilon), nl);
}

} // namespace tdattr
