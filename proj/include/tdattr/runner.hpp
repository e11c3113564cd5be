#pragma once

// Subcommand dispatch shared by the command-line tool and the acceptance binary.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "tdattr/config.hpp"
#include "tdattr/experiments.hpp"
#include "tdattr/io.hpp"
#include "tdattr/parallel.hpp"
#include "tdattr/process.hpp"

namespace tdattr {

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"simulate", "pullback", "attractor", "invariance", "decompose",
                                              "energy",   "absorb",   "gronwall",  "contdep",    "verify-all"};
  return names;
}

/// Trajectories from B_tau(radius_factor * R0); writes the initial and final ensembles next to the report.
inline ExperimentReport run_simulate(const ExperimentContext& ctx, const SimulateParams& p,
                                     const std::filesystem::path& out_dir) {
  detail::Stopwatch clock;
  const auto& m = ctx.m();
  ExperimentReport r;
  r.id = "simulate";
  r.parameters = {{"members", p.members}, {"tau", p.tau}, {"t", p.t}, {"radius", p.radius_factor * ctx.r0},
                  {"cadence", p.cadence}};
  r.series.columns = {"t", "member", "norm", "E"};
  const auto src = sample_ball(Ball(p.tau, p.radius_factor * ctx.r0), p.members, m.eps, m.spectrum, ctx.seed);
  const auto cfg = detail::with_cadence(ctx.solver, p.cadence);
  std::vector<TrajectoryRecord> recs(src.size());
  parallel_for(src.size(), [&](std::size_t i) { recs[i] = integrate(m, src[i].state, p.tau, p.t, cfg).second; });
  std::vector<Member> last;
  double err = 0.0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& rec = recs[i];
    for (std::size_t j = 0; j < rec.times.size(); ++j)
      r.series.add({rec.times[j], static_cast<double>(src[i].label),
                    norm_t(rec.states[j], rec.times[j], 0.0, m.eps, m.spectrum),
                    functional_E(m, rec.states[j], rec.times[j])});
    last.push_back({src[i].label, rec.states.back()});
    err = std::max(err, rec.error_estimate);
  }
  const Ensemble final_ensemble(p.t, std::move(last));
  std::filesystem::create_directories(out_dir);
  save_ensemble(out_dir / "simulate_initial.csv", src, ctx.seed);
  save_ensemble(out_dir / "simulate_final.csv", final_ensemble, ctx.seed);
  r.scalars = {{"max_error_estimate", err},
               {"final_max_norm", detail::max_norm(final_ensemble, 0.0, m.eps, m.spectrum)}};
  r.verdict = Verdict::pass;
  r.reason = "all trajectories reached t";
  r.provenance = detail::base_provenance(ctx);
  r.provenance["ensemble_size"] = src.size();
  r.runtime_seconds = clock.seconds();
  return r;
}

inline ExperimentReport run_pullback(const ExperimentContext& ctx, const PullbackParams& p) {
  detail::Stopwatch clock;
  const auto proc = ctx.process();
  ExperimentReport r;
  r.id = "pullback";
  r.parameters = {{"t", p.t},
                  {"depths", p.depths},
                  {"members", p.members},
                  {"radius", p.radius_factor * ctx.r0},
                  {"attractor_depth", p.attractor_depth},
                  {"attractor_members", p.attractor_members},
                  {"thin_tol", p.thin_tol}};
  r.tolerances = {{"eta", p.eta}};
  r.series.columns = {"tau", "t", "semidist"};
  const auto a = omega_limit_approx(proc, ctx.r0, p.t, p.attractor_depth, p.thin_tol, p.attractor_members, ctx.seed);
  std::vector<double> taus;
  for (double d : p.depths) taus.push_back(p.t - d);
  const auto curve = pullback_curve(proc, p.radius_factor * ctx.r0, p.t, taus, a.ensemble, 0.0, p.members, ctx.seed);
  for (const auto& pt : curve.points) r.series.add({pt.tau, p.t, pt.semidist});
  r.scalars = {{"final_semidist", curve.points.back().semidist}, {"attractor_size", a.ensemble.size()}};
  r.verdict = curve.attracting(p.eta) ? Verdict::pass : Verdict::fail;
  r.reason = "semidistance at the deepest tau: " + detail::fmt(curve.points.back().semidist);
  r.provenance = detail::base_provenance(ctx);
  r.provenance["ensemble_size"] = p.members;
  r.runtime_seconds = clock.seconds();
  return r;
}

inline std::vector<ExperimentReport> run_decomposition(const ExperimentContext& ctx, const DecompositionParams& p) {
  std::vector<ExperimentReport> out;
  const auto data_a = decomposition_data(ctx, p, DecompositionMode::nonlinear_split);
  out.push_back(run_decay_U0(ctx, data_a, p, DecompositionMode::nonlinear_split));
  out.push_back(run_bound_U1(ctx, data_a, p, 1.0 / 3.0, DecompositionMode::nonlinear_split));
  const auto data_b = decomposition_data(ctx, p, DecompositionMode::linear_split);
  out.push_back(run_decay_U0(ctx, data_b, p, DecompositionMode::linear_split));
  out.push_back(run_bound_U1(ctx, data_b, p, 1.0, DecompositionMode::linear_split));
  return out;
}

using ReportSink = std::function<void(const ExperimentReport&)>;

/// Runs one subcommand. Every report is passed to sink as soon as it is complete.
inline std::vector<ExperimentReport> run_command(const std::string& command, const RunConfig& cfg,
                                                 const std::filesystem::path& out_dir, const ReportSink& sink = {}) {
  set_worker_count(cfg.workers);
  std::vector<ExperimentReport> reports;
  auto add = [&](ExperimentReport r) {
    if (sink) sink(r);
    reports.push_back(std::move(r));
  };
  const auto& x = cfg.experiments;
  if (command == "gronwall") {
    add(run_gronwall(x.gronwall, cfg.seed));
    return reports;
  }
  const SpectralModel model = build_model(cfg.model);
  ExperimentContext ctx{&model, cfg.solver, cfg.seed, x.r0};
  if (command == "simulate") {
    add(run_simulate(ctx, x.simulate, out_dir));
  } else if (command == "pullback") {
    add(run_pullback(ctx, x.pullback));
  } else if (command == "attractor") {
    add(run_attractor(ctx, x.attractor).report);
  } else if (command == "invariance") {
    add(run_invariance(ctx, x.invariance));
  } else if (command == "decompose") {
    for (auto& r : run_decomposition(ctx, x.decomposition)) add(std::move(r));
  } else if (command == "energy") {
    add(run_energy_law(ctx, x.energy));
  } else if (command == "absorb") {
    add(run_absorbing(ctx, x.absorb));
  } else if (command == "contdep") {
    add(run_contdep(ctx, x.contdep));
  } else if (command == "verify-all") {
    add(run_oracle_equivalence(x.oracle, cfg.solver, cfg.seed));
    add(run_gronwall(x.gronwall, cfg.seed));
    add(run_norm_equivalence(ctx, x.norm_equivalence));
    add(run_energy_law(ctx, x.energy));
    add(run_absorbing(ctx, x.absorb));
    add(run_dissipation_integral(ctx, x.dissipation));
    for (auto& r : run_decomposition(ctx, x.decomposition)) add(std::move(r));
    add(run_attractor(ctx, x.attractor).report);
    add(run_invariance(ctx, x.invariance));
    add(run_uniform_attraction(ctx, x.uniform_attraction));
    add(run_contdep(ctx, x.contdep));
  } else {
    throw InvalidInput("unknown subcommand '" + command + "'");
  }
  return reports;
}

/// 0 when every verdict is pass, 2 when any fails, otherwise 3.
inline int exit_code(const std::vector<ExperimentReport>& reports) {
  bool inconclusive = false;
  for (const auto& r : reports) {
    if (r.verdict == Verdict::fail) return 2;
    if (r.verdict == Verdict::inconclusive) inconclusive = true;
  }
  return inconclusive ? 3 : 0;
}

} // namespace tdattr
