#include "stochcool/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace stochcool {

namespace {

struct Entry {
  std::string value;
  int line = 0;
};

struct KeyTable {
  std::map<std::string, Entry> entries;
  std::set<std::string> consumed;

  const Entry* find(const std::string& key) {
    auto it = entries.find(key);
    if (it == entries.end()) return nullptr;
    consumed.insert(key);
    return &it->second;
  }
};

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

KeyTable tokenize(const std::string& text) {
  KeyTable table;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string stripped = trim(raw);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      std::ostringstream msg;
      msg << "config line " << line << ": expected `key = value`, got `" << stripped << "`";
      throw config_error(msg.str());
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty() || value.empty()) {
      std::ostringstream msg;
      msg << "config line " << line << ": empty key or value";
      throw config_error(msg.str());
    }
    const auto prior = table.entries.find(key);
    if (prior != table.entries.end()) {
      std::ostringstream msg;
      msg << "config: duplicate key `" << key << "` on lines " << prior->second.line << " and "
          << line;
      throw config_error(msg.str());
    }
    table.entries[key] = Entry{value, line};
  }
  return table;
}

double as_double(const std::string& key, const Entry& e) {
  char* end = nullptr;
  const double v = std::strtod(e.value.c_str(), &end);
  if (end == e.value.c_str() || *end != '\0' || !std::isfinite(v)) {
    std::ostringstream msg;
    msg << "config line " << e.line << ": key `" << key << "` expects a number, got `" << e.value
        << "`";
    throw config_error(msg.str());
  }
  return v;
}

int as_int(const std::string& key, const Entry& e) {
  const double v = as_double(key, e);
  if (v != std::floor(v) || std::fabs(v) > 2e9) {
    std::ostringstream msg;
    msg << "config line " << e.line << ": key `" << key << "` expects an integer";
    throw config_error(msg.str());
  }
  return static_cast<int>(v);
}

bool as_bool(const std::string& key, const Entry& e) {
  if (e.value == "true" || e.value == "1" || e.value == "yes") return true;
  if (e.value == "false" || e.value == "0" || e.value == "no") return false;
  std::ostringstream msg;
  msg << "config line " << e.line << ": key `" << key << "` expects a boolean";
  throw config_error(msg.str());
}

[[noreturn]] void bad_enum(const std::string& key, const Entry& e, const std::string& allowed) {
  std::ostringstream msg;
  msg << "config line " << e.line << ": key `" << key << "` expects one of {" << allowed
      << "}, got `" << e.value << "`";
  throw config_error(msg.str());
}

}  // namespace

CorrelatorOptions RunConfig::correlator_options() const {
  CorrelatorOptions opts;
  opts.strategy = strategy;
  opts.rel_tol = series_tolerance;
  opts.series_cap = series_cap;
  opts.direct_n_max_limit = direct_n_max_limit;
  return opts;
}

SolverOptions RunConfig::solver_options() const { return SolverOptions{}; }

LoopConfig RunConfig::loop_config() const {
  LoopConfig loop;
  loop.T_start = to_trap(trajectory_t_start, trajectory_unit);
  loop.N_tot = n_tot;
  loop.schedule.base = window;
  loop.schedule.shift_enabled = schedule_shift;
  loop.schedule.switch_ratio = schedule_switch_ratio;
  loop.schedule.shifted = window;
  loop.schedule.shifted.x_center = schedule_x_offset;
  loop.T_target = trajectory_t_target < 0.0 ? critical_temperature_estimate(n_tot)
                                            : to_trap(trajectory_t_target, trajectory_unit);
  loop.max_steps = trajectory_max_steps;
  loop.mode = trajectory_mode;
  loop.sigma_policy = sigma_policy;
  loop.fixed_sigma = sigma;
  loop.ne_policy = ne_policy;
  loop.fixed_Ne = ne;
  loop.correlators = correlator_options();
  loop.solver = solver_options();
  loop.cutoff_n_max = cutoff_n_max;
  loop.grid_points = grid_points;
  loop.grid_tol = grid_tol;
  loop.grid_max_refinements = grid_max_refinements;
  loop.record_cap = record_cap;
  loop.threads = threads;
  return loop;
}

RunConfig parse_config(const std::string& text) {
  KeyTable table = tokenize(text);
  RunConfig cfg;

  auto get_double = [&](const char* key, double* out) {
    if (const Entry* e = table.find(key)) *out = as_double(key, *e);
  };
  auto get_int = [&](const char* key, int* out) {
    if (const Entry* e = table.find(key)) *out = as_int(key, *e);
  };
  auto get_bool = [&](const char* key, bool* out) {
    if (const Entry* e = table.find(key)) *out = as_bool(key, *e);
  };

  // Required keys.
  struct Required {
    const char* key;
    double* slot;
  } required[] = {{"trap.frequency_hz", &cfg.frequency_hz},
                  {"species.mass_u", &cfg.mass_u},
                  {"gas.n_tot", &cfg.n_tot}};
  for (const Required& r : required) {
    const Entry* e = table.find(r.key);
    if (e == nullptr) {
      std::ostringstream msg;
      msg << "config: missing required key `" << r.key << "`";
      throw config_error(msg.str());
    }
    *r.slot = as_double(r.key, *e);
    if (!(*r.slot > 0.0)) {
      std::ostringstream msg;
      msg << "config line " << e->line << ": key `" << r.key << "` must be positive";
      throw config_error(msg.str());
    }
  }

  get_int("cutoff.n_max", &cfg.cutoff_n_max);
  get_int("cutoff.hard_max", &cfg.cutoff_hard_max);

  get_double("window.x_center", &cfg.window.x_center);
  get_double("window.y_center", &cfg.window.y_center);
  get_double("window.x_half_width", &cfg.window.x_half_width);
  get_double("window.y_half_width", &cfg.window.y_half_width);
  get_bool("window.full", &cfg.window.full);

  cfg.window_b = cfg.window;
  cfg.window_b.x_center = 5.0;
  get_double("window_b.x_center", &cfg.window_b.x_center);
  get_double("window_b.y_center", &cfg.window_b.y_center);
  get_double("window_b.x_half_width", &cfg.window_b.x_half_width);
  get_double("window_b.y_half_width", &cfg.window_b.y_half_width);
  get_bool("window_b.full", &cfg.window_b.full);

  if (const Entry* e = table.find("feedback.sigma_policy")) {
    if (e->value == "optimal")
      cfg.sigma_policy = SigmaPolicy::OptimalPerState;
    else if (e->value == "fixed")
      cfg.sigma_policy = SigmaPolicy::Fixed;
    else
      bad_enum("feedback.sigma_policy", *e, "optimal, fixed");
  }
  get_double("feedback.sigma", &cfg.sigma);
  if (const Entry* e = table.find("feedback.ne_policy")) {
    if (e->value == "mean")
      cfg.ne_policy = NePolicy::MeanWindowNumber;
    else if (e->value == "fixed")
      cfg.ne_policy = NePolicy::Fixed;
    else
      bad_enum("feedback.ne_policy", *e, "mean, fixed");
  }
  get_double("feedback.ne", &cfg.ne);

  if (const Entry* e = table.find("strategy")) {
    if (e->value == "series")
      cfg.strategy = TraceStrategy::Series;
    else if (e->value == "direct")
      cfg.strategy = TraceStrategy::Direct;
    else
      bad_enum("strategy", *e, "series, direct");
  }
  get_double("series.tolerance", &cfg.series_tolerance);
  get_int("series.cap", &cfg.series_cap);
  get_int("direct.n_max_limit", &cfg.direct_n_max_limit);

  get_double("sweep.t_min", &cfg.sweep_t_min);
  get_double("sweep.t_max", &cfg.sweep_t_max);
  get_int("sweep.points", &cfg.sweep_points);
  if (const Entry* e = table.find("sweep.scale")) {
    if (e->value == "log")
      cfg.sweep_log_scale = true;
    else if (e->value == "linear")
      cfg.sweep_log_scale = false;
    else
      bad_enum("sweep.scale", *e, "log, linear");
  }
  if (const Entry* e = table.find("sweep.unit")) {
    if (e->value == "trap")
      cfg.sweep_unit = TemperatureUnit::Trap;
    else if (e->value == "uK")
      cfg.sweep_unit = TemperatureUnit::MicroKelvin;
    else
      bad_enum("sweep.unit", *e, "trap, uK");
  }
  get_bool("sweep.compare_window_b", &cfg.sweep_compare_window_b);

  get_double("trajectory.t_start", &cfg.trajectory_t_start);
  if (const Entry* e = table.find("trajectory.unit")) {
    if (e->value == "trap")
      cfg.trajectory_unit = TemperatureUnit::Trap;
    else if (e->value == "uK")
      cfg.trajectory_unit = TemperatureUnit::MicroKelvin;
    else
      bad_enum("trajectory.unit", *e, "trap, uK");
  }
  get_double("trajectory.t_target", &cfg.trajectory_t_target);
  if (const Entry* e = table.find("trajectory.mode")) {
    if (e->value == "exact")
      cfg.trajectory_mode = AccelerationMode::ExactPerStep;
    else if (e->value == "grid")
      cfg.trajectory_mode = AccelerationMode::InterpolatedGrid;
    else if (e->value == "ode")
      cfg.trajectory_mode = AccelerationMode::ContinuumOde;
    else
      bad_enum("trajectory.mode", *e, "exact, grid, ode");
  }
  get_double("trajectory.max_steps", &cfg.trajectory_max_steps);
  if (const Entry* e = table.find("trajectory.schedule")) {
    if (e->value == "fixed")
      cfg.schedule_shift = false;
    else if (e->value == "shift")
      cfg.schedule_shift = true;
    else
      bad_enum("trajectory.schedule", *e, "fixed, shift");
  }
  get_double("schedule.switch_ratio", &cfg.schedule_switch_ratio);
  get_double("schedule.x_offset", &cfg.schedule_x_offset);

  get_int("grid.points", &cfg.grid_points);
  get_double("grid.tolerance", &cfg.grid_tol);
  get_int("grid.max_refinements", &cfg.grid_max_refinements);
  get_int("output.record_cap", &cfg.record_cap);
  get_int("threads", &cfg.threads);

  // Reject anything not consumed, naming each offending line.
  std::ostringstream unknown;
  int unknown_count = 0;
  for (const auto& [key, entry] : table.entries) {
    if (table.consumed.count(key)) continue;
    if (unknown_count++) unknown << "; ";
    unknown << "`" << key << "` (line " << entry.line << ")";
  }
  if (unknown_count > 0)
    throw config_error("config: unknown key" + std::string(unknown_count > 1 ? "s " : " ") +
                       unknown.str());

  // Cross-field validation.
  cfg.window.validate();
  cfg.window_b.validate();
  if (cfg.sigma_policy == SigmaPolicy::Fixed && !(cfg.sigma > 0.0))
    throw config_error("config: feedback.sigma_policy = fixed requires feedback.sigma > 0");
  if (cfg.ne_policy == NePolicy::Fixed && !(cfg.ne > 0.0))
    throw config_error("config: feedback.ne_policy = fixed requires feedback.ne > 0");
  if (cfg.sweep_points < 0) throw config_error("config: sweep.points must be >= 0");
  if (cfg.sweep_points > 0 && !(cfg.sweep_t_min > 0.0 && cfg.sweep_t_max >= cfg.sweep_t_min))
    throw config_error("config: sweep range requires 0 < sweep.t_min <= sweep.t_max");
  if (cfg.series_cap < 16) throw config_error("config: series.cap must be >= 16");
  if (!(cfg.series_tolerance > 0.0)) throw config_error("config: series.tolerance must be > 0");
  if (cfg.threads < 0) throw config_error("config: threads must be >= 0");
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("config: cannot open `" + path + "`");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace stochcool
