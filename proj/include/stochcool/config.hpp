#pragma once

// Run configuration: the documented line-based `key = value` format with
// `#` comments and dotted section keys.  Unknown keys, duplicates, type
// mismatches and missing required keys are config errors carrying line
// numbers.

#include <string>

#include "stochcool/cooling_loop.hpp"
#include "stochcool/units.hpp"

namespace stochcool {

enum class TemperatureUnit { Trap, MicroKelvin };

struct RunConfig {
  // Required physical parameters.
  double frequency_hz = 0.0;
  double mass_u = 0.0;
  double n_tot = 0.0;

  int cutoff_n_max = 0;  // 0 = capacity rule
  int cutoff_hard_max = 4096;

  WindowRegion window;    // defaults: centered, half-widths 0.5 dq0
  WindowRegion window_b;  // comparison window; defaults mirror `window` at x_center = 5

  SigmaPolicy sigma_policy = SigmaPolicy::OptimalPerState;
  double sigma = 0.0;
  NePolicy ne_policy = NePolicy::MeanWindowNumber;
  double ne = 0.0;

  TraceStrategy strategy = TraceStrategy::Series;
  double series_tolerance = 1e-9;
  int series_cap = 512;
  int direct_n_max_limit = 12;

  double sweep_t_min = 0.0, sweep_t_max = 0.0;
  int sweep_points = 25;
  bool sweep_log_scale = true;
  TemperatureUnit sweep_unit = TemperatureUnit::Trap;
  bool sweep_compare_window_b = false;

  double trajectory_t_start = 0.0;
  TemperatureUnit trajectory_unit = TemperatureUnit::Trap;
  double trajectory_t_target = -1.0;  // -1: default to the T0 estimate
  AccelerationMode trajectory_mode = AccelerationMode::ContinuumOde;
  double trajectory_max_steps = 1e12;
  bool schedule_shift = false;
  double schedule_switch_ratio = 1.2;
  double schedule_x_offset = 5.0;

  int grid_points = 33;
  double grid_tol = 1e-3;
  int grid_max_refinements = 3;
  int record_cap = 10000;
  int threads = 0;

  PhysicalConfig physical() const {
    return PhysicalConfig::from_trap_frequency_hz(frequency_hz, mass_u);
  }
  double to_trap(double value, TemperatureUnit unit) const {
    return unit == TemperatureUnit::Trap
               ? value
               : temperature_to_trap_units(value * 1e-6, physical());
  }
  CorrelatorOptions correlator_options() const;
  SolverOptions solver_options() const;
  LoopConfig loop_config() const;  // trajectory settings as a cooling-loop config
};

RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::string& path);

}  // namespace stochcool
