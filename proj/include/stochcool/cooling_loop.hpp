#pragma once

// The equilibrium cooling cycle: compute dE(T_i), update the total energy,
// re-thermalize to T_{i+1}, repeat.  Exact stepping is available for
// validation; production runs use a precomputed dE(T) grid, either stepped
// directly or integrated as the continuum limit dE/dn = dE(T(E)) (the
// energy removed per step is ~1e-7 of E on the paper-scale runs, so exact
// stepping of 1e7 iterations is pointless work).

#include <vector>

#include "stochcool/feedback_energy.hpp"

namespace stochcool {

enum class AccelerationMode { ExactPerStep, InterpolatedGrid, ContinuumOde };
enum class StopReason { ReachedTarget, HeatingStall, StepBudget, GroundReached };
const char* to_string(StopReason reason);

struct WindowSchedule {
  WindowRegion base;
  bool shift_enabled = false;   // opt-in: move the window off-center near T0
  double switch_ratio = 1.2;    // switch when T < switch_ratio * T0
  WindowRegion shifted = WindowRegion::shifted(5.0, 0.5);

  const WindowRegion& window_at(double T, double T0) const {
    return (shift_enabled && T < switch_ratio * T0) ? shifted : base;
  }
};

struct LoopConfig {
  double T_start = 0.0;  // trap units
  double N_tot = 0.0;
  WindowSchedule schedule;
  double T_target = 0.0;    // stop once T <= target; 0 runs to stall/budget
  double max_steps = 1e12;
  AccelerationMode mode = AccelerationMode::ContinuumOde;
  SigmaPolicy sigma_policy = SigmaPolicy::OptimalPerState;
  double fixed_sigma = 0.0;
  NePolicy ne_policy = NePolicy::MeanWindowNumber;
  double fixed_Ne = 0.0;
  CorrelatorOptions correlators;
  SolverOptions solver;
  int cutoff_n_max = 0;  // 0 = capacity rule per temperature
  int grid_points = 33;
  double grid_tol = 1e-3;
  int grid_max_refinements = 3;
  int record_cap = 10000;
  int threads = 0;  // grid-building parallelism; 0 = hardware concurrency

  void validate() const;
};

struct TrajectoryRecord {
  double step = 0.0;  // real-valued in continuum mode
  double T = 0.0;
  double E = 0.0;
  EnergyChangeBreakdown breakdown;
  double mean_Nw = 0.0;
  double condensate_fraction = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryRecord> records;
  StopReason reason = StopReason::StepBudget;
  double steps_total = 0.0;
  double T_final = 0.0;
};

struct StepResult {
  double T_next = 0.0;
  TrajectoryRecord record;
  bool ground_reached = false;  // energy update fell below the ground state
};

// One feedback operation assuming full re-equilibration.  With the
// optimal-per-state policy, N_e is re-estimated as <N_w> and sigma set to
// optimal_sigma(N_e); the fixed policy uses params as given.
StepResult single_step(double T, double N_tot, const WindowRegion& window,
                       const FeedbackParams& params, BasisCutoff cutoff,
                       const CorrelatorOptions& copts = {}, const SolverOptions& sopts = {});

Trajectory run_trajectory(const LoopConfig& config);

// dE(T) and companions precomputed on a log grid, shared by the grid and
// continuum modes and exposed for the sweep front end.
struct GridPoint {
  double T = 0.0, E = 0.0, heat_capacity = 0.0;
  EnergyChangeBreakdown breakdown;
  double mean_Nw = 0.0, condensate_fraction = 0.0, error_estimate = 0.0;
};

GridPoint evaluate_equilibrium_point(double T, double N_tot, const WindowRegion& window,
                                     const LoopConfig& config,
                                     const OperatorFactors* cached_factors = nullptr);

}  // namespace stochcool
