// Runs verify-all on the default model and prints one line per acceptance criterion.
// usage: acceptance [out_dir]; the criterion lines are also written to out_dir/summary.txt

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tdattr/runner.hpp"

using namespace tdattr;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  int number;
  std::string name;
  std::vector<std::string> reports;
  double budget_seconds;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig pinned_config(unsigned workers) {
  RunConfig c;
  c.workers = workers;
  auto& x = c.experiments;
  x.oracle.eps_values = {1.0, 0.1, 0.01};
  x.oracle.alpha = 1.0;
  x.oracle.modes = 16;
  x.oracle.elapsed = 50.0;
  x.oracle.tolerance = 1e-6;
  x.gronwall.draws = 100;
  x.gronwall.slack = 1e-9;
  x.energy.members = 16;
  x.energy.radius_factor = 2.0;
  x.energy.horizon = 40.0;
  x.energy.error_factor = 10.0;
  x.energy.abs_tol = 1e-6;
  x.energy.min_fraction = 0.99;
  x.absorb.multiples = {2.0, 4.0, 8.0};
  x.absorb.slope_tolerance = 0.2;
  x.dissipation.horizon = 30.0;
  x.dissipation.growth_tol = 0.05;
  x.decomposition.delta_min = 0.01;
  x.decomposition.growth_tol = 0.05;
  x.attractor.tau_depth = 40.0;
  x.attractor.curve_depths = {5, 10, 15, 20, 25, 30, 35, 40};
  x.attractor.jitter = 0.1;
  x.attractor.eta = 1e-2;
  x.attractor.growth_tol = 0.05;
  x.invariance.periods = {1.0, 5.0, 10.0};
  x.invariance.eta = 1e-2;
  x.uniform_attraction.a = 0.0;
  x.uniform_attraction.b = 10.0;
  x.uniform_attraction.tau_depths = {5, 10, 15, 20, 25, 30, 35, 40};
  x.uniform_attraction.eta = 2e-2;
  x.norm_equivalence.draws = 10000;
  x.norm_equivalence.witness_tau = 0.0;
  x.norm_equivalence.witness_t = 60.0;
  x.norm_equivalence.witness_min = 1e3;
  return c;
}

std::map<std::string, ExperimentReport> run_all(unsigned workers, const fs::path& dir) {
  const auto cfg = pinned_config(workers);
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::map<std::string, ExperimentReport> out;
  run_command("verify-all", cfg, dir, [&](const ExperimentReport& r) {
    emit_report(r, dir);
    std::printf("  [workers=%u] %-22s %-12s %8.1fs  %s\n", workers, r.id.c_str(), verdict_name(r.verdict).c_str(),
                r.runtime_seconds, r.reason.c_str());
    std::fflush(stdout);
    out[r.id] = r;
  });
  return out;
}

} // namespace

int main(int argc, char** argv) {
  const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");
  const std::vector<Criterion> criteria{
    {1, "oracle equivalence", {"oracle_equivalence"}, 10.0},
    {2, "Gronwall domination", {"gronwall"}, 5.0},
    {3, "energy law", {"energy_law"}, 180.0},
    {4, "absorbing set", {"absorbing"}, 300.0},
    {5, "dissipation integral", {"dissipation_integral"}, 180.0},
    {6, "decomposition decay and bounds", {"decay_U0_A", "bound_U1_A", "decay_U0_B", "bound_U1_B"}, 600.0},
    {7, "pullback attraction and invariance", {"attractor", "invariance"}, 900.0},
    {8, "uniform attraction", {"uniform_attraction"}, 600.0},
    {9, "norm equivalence", {"norm_equivalence"}, 5.0},
  };

  std::printf("verify-all, workers = 1\n");
  const auto first = run_all(1, root / "workers1");
  std::printf("verify-all, workers = 3\n");
  const auto second = run_all(3, root / "workers3");

  int failed = 0;
  std::string summary;
  auto line = [&](int n, const std::string& name, bool ok, const std::string& detail) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "criterion %2d  %-36s %s  %s\n", n, name.c_str(), ok ? "PASS" : "FAIL",
                  detail.c_str());
    std::fputs(buf, stdout);
    summary += buf;
    failed += ok ? 0 : 1;
  };

  for (const auto& c : criteria) {
    bool ok = true;
    double runtime = 0.0;
    std::string verdicts;
    for (const auto& id : c.reports) {
      const auto it = first.find(id);
      if (it == first.end()) {
        ok = false;
        verdicts += id + "=missing ";
        continue;
      }
      runtime += it->second.runtime_seconds;
      ok = ok && it->second.verdict == Verdict::pass;
      verdicts += id + "=" + verdict_name(it->second.verdict) + " ";
    }
    const bool in_budget = runtime <= c.budget_seconds;
    char detail[256];
    std::snprintf(detail, sizeof detail, "%sruntime %.1fs / %.0fs%s", verdicts.c_str(), runtime, c.budget_seconds,
                  in_budget ? "" : " (over budget)");
    line(c.number, c.name, ok && in_budget, detail);
  }

  std::size_t compared = 0, differing = 0;
  for (const auto& entry : fs::directory_iterator(root / "workers1")) {
    if (entry.path().extension() != ".csv") continue;
    ++compared;
    const auto other = root / "workers3" / entry.path().filename();
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) {
      ++differing;
      std::printf("  differs: %s\n", entry.path().filename().string().c_str());
    }
  }
  line(10, "determinism across worker counts", compared > 0 && differing == 0,
       std::to_string(compared) + " CSV files compared, " + std::to_string(differing) + " differ");
  std::ofstream(root / "summary.txt") << summary;
  return failed == 0 ? 0 : 1;
}
