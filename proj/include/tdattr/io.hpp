#pragma once

// File formats: ensemble CSV, report CSV / JSON / gnuplot script.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "tdattr/errors.hpp"
#include "tdattr/experiments.hpp"
#include "tdattr/tdspace.hpp"

namespace tdattr {

inline constexpr int file_format_version = 1;

/// %.17g: round-trips every finite double.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ValidationError(what + ": not a number '" + s + "'");
  }
  if (used != s.size()) throw ValidationError(what + ": trailing characters in '" + s + "'");
  return x;
}

inline std::int64_t parse_int(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(s, &used);
  } catch (const std::exception&) {
    throw ValidationError(what + ": not an integer '" + s + "'");
  }
  if (used != s.size()) throw ValidationError(what + ": trailing characters in '" + s + "'");
  return x;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << text;
  if (!out) throw InvalidInput("write failed for " + path.string());
}

} // namespace detail

// ---------------------------------------------------------------------------------------------
// Ensembles

inline std::string ensemble_to_csv(const Ensemble& b, std::uint64_t seed) {
  std::string s = "# format_version=" + std::to_string(file_format_version) + "\n";
  s += "# time=" + format_double(b.time()) + " n_modes=" + std::to_string(b.n_modes()) +
       " seed=" + std::to_string(seed) + "\n";
  s += "state_id,mode_index,u_coeff,v_coeff\n";
  for (const auto& m : b.members())
    for (Eigen::Index k = 0; k < m.state.n_modes(); ++k)
      s += std::to_string(m.label) + "," + std::to_string(k + 1) + "," + format_double(m.state.u(k)) + "," +
           format_double(m.state.v(k)) + "\n";
  return s;
}

struct LoadedEnsemble {
  Ensemble ensemble;
  std::uint64_t seed = 0;
};

inline LoadedEnsemble ensemble_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  bool have_meta = false, have_header = false;
  double time = 0.0;
  std::int64_t n_modes = 0;
  std::uint64_t seed = 0;
  std::map<std::int64_t, std::map<std::int64_t, std::pair<double, double>>> rows;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = "ensemble line " + std::to_string(lineno);
    if (line[0] == '#') {
      std::istringstream meta(line.substr(1));
      std::string kv;
      while (meta >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        const auto key = kv.substr(0, eq), value = kv.substr(eq + 1);
        if (key == "format_version" && detail::parse_int(value, where) != file_format_version)
          throw ValidationError(where + ": unsupported format_version " + value);
        if (key == "time") {
          time = detail::parse_double(value, where);
          have_meta = true;
        } else if (key == "n_modes") {
          n_modes = detail::parse_int(value, where);
        } else if (key == "seed") {
          seed = std::stoull(value);
        }
      }
      continue;
    }
    if (!have_header) {
      if (line != "state_id,mode_index,u_coeff,v_coeff") throw ValidationError(where + ": unexpected header");
      have_header = true;
      continue;
    }
    const auto cells = detail::split_csv(line);
    if (cells.size() != 4) throw ValidationError(where + ": expected 4 columns");
    const auto id = detail::parse_int(cells[0], where);
    const auto k = detail::parse_int(cells[1], where);
    const double u = detail::parse_double(cells[2], where), v = detail::parse_double(cells[3], where);
    if (k < 1 || (n_modes > 0 && k > n_modes)) throw ValidationError(where + ": mode_index out of range");
    if (!rows[id].emplace(k, std::make_pair(u, v)).second) throw ValidationError(where + ": duplicate row");
  }
  if (!have_header || rows.empty()) throw ValidationError("ensemble: no data rows");
  if (!have_meta) throw ValidationError("ensemble: missing '# time=' metadata line");
  std::vector<Member> members;
  for (const auto& [id, modes] : rows) {
    const auto n = static_cast<std::int64_t>(modes.size());
    if (n_modes > 0 ? n != n_modes : n != static_cast<std::int64_t>(rows.begin()->second.size()))
      throw ValidationError("ensemble: state " + std::to_string(id) + " has " + std::to_string(n) +
                            " modes, expected " + std::to_string(n_modes));
    State s(n);
    for (const auto& [k, uv] : modes) {
      if (k > n) throw ValidationError("ensemble: state " + std::to_string(id) + " skips a mode index");
      s.u(k - 1) = uv.first;
      s.v(k - 1) = uv.second;
    }
    members.push_back({id, std::move(s)});
  }
  return {Ensemble(time, std::move(members)), seed};
}

inline void save_ensemble(const std::filesystem::path& path, const Ensemble& b, std::uint64_t seed) {
  detail::write_text(path, ensemble_to_csv(b, seed));
}

inline LoadedEnsemble load_ensemble(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ensemble_from_csv(ss.str());
}

// ---------------------------------------------------------------------------------------------
// Reports

inline std::string series_to_csv(const Series& s) {
  std::string out = "# format_version=" + std::to_string(file_format_version) + "\n";
  for (std::size_t i = 0; i < s.columns.size(); ++i) out += (i ? "," : "") + s.columns[i];
  out += "\n";
  for (const auto& row : s.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ",";
      out += format_double(row[i]);
    }
    out += "\n";
  }
  return out;
}

inline ojson report_to_json(const ExperimentReport& r) {
  return ojson{{"format_version", file_format_version},
               {"experiment", r.id},
               {"verdict", verdict_name(r.verdict)},
               {"reason", r.reason},
               {"tolerances", r.tolerances},
               {"scalars", r.scalars},
               {"parameters", r.parameters},
               {"provenance", r.provenance},
               {"csv", r.id + ".csv"},
               {"columns", r.series.columns},
               {"rows", r.series.rows.size()},
               {"runtime_seconds", r.runtime_seconds}};
}

/// Scatter plot of the series' measured column against its time-like column.
inline std::string report_gnuplot(const ExperimentReport& r) {
  const auto& c = r.series.columns;
  std::string s = "# format_version=" + std::to_string(file_format_version) + "\n";
  s += "set datafile separator ','\nset datafile commentschars '#'\nset key off\n";
  s += "set title '" + r.id + " (" + verdict_name(r.verdict) + ")'\n";
  if (c.size() < 2) return s;
  std::size_t x = 0, y = 1;
  if (c.size() >= 3 && (c[1] == "member" || c[1] == "mode" || c[1] == "t")) y = c.size() - 1;
  if (c[0] == "draw" || c[0] == "pair") {
    x = 1;
    y = c.size() - 1;
  }
  s += "set xlabel '" + c[x] + "'\nset ylabel '" + c[y] + "'\n";
  const bool log_y = c[y] == "semidist" || c[y] == "rel_error" || c[y] == "norm_U0" || c[y] == "separation";
  if (log_y) s += "set logscale y\n";
  s += "plot '" + r.id + ".csv' every ::1 using " + std::to_string(x + 1) + ":" + std::to_string(y + 1) +
       " with points pointtype 7 pointsize 0.3\n";
  return s;
}

inline void emit_report(const ExperimentReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  detail::write_text(dir / (r.id + ".csv"), series_to_csv(r.series));
  detail::write_text(dir / (r.id + ".json"), report_to_json(r).dump(2) + "\n");
  detail::write_text(dir / (r.id + ".gnuplot"), report_gnuplot(r));
}

} // namespace tdattr
