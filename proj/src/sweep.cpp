#include "stochcool/sweep.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "stochcool/parallel.hpp"

namespace stochcool {

std::string format_full_precision(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::vector<double> sweep_temperatures(const RunConfig& cfg) {
  std::vector<double> ts(cfg.sweep_points);
  if (cfg.sweep_points == 0) return ts;
  const double lo = cfg.to_trap(cfg.sweep_t_min, cfg.sweep_unit);
  const double hi = cfg.to_trap(cfg.sweep_t_max, cfg.sweep_unit);
  if (cfg.sweep_points == 1) {
    ts[0] = lo;
    return ts;
  }
  for (int i = 0; i < cfg.sweep_points; ++i) {
    const double s = static_cast<double>(i) / (cfg.sweep_points - 1);
    ts[i] = cfg.sweep_log_scale ? lo * std::pow(hi / lo, s) : lo + s * (hi - lo);
  }
  ts.front() = lo;
  ts.back() = hi;
  return ts;
}

std::vector<SweepRow> run_sweep(const RunConfig& cfg, const WindowRegion& window) {
  const std::vector<double> ts = sweep_temperatures(cfg);
  std::vector<SweepRow> rows(ts.size());
  if (ts.empty()) return rows;

  const PhysicalConfig physical = cfg.physical();
  const LoopConfig loop = cfg.loop_config();

  // One factor build at the largest cutoff; each grid point slices it.
  const double t_max = *std::max_element(ts.begin(), ts.end());
  const BasisCutoff cutoff_hi = cfg.cutoff_n_max > 0
                                    ? BasisCutoff{cfg.cutoff_n_max}
                                    : capacity_cutoff(t_max, cfg.n_tot, loop.solver, 16,
                                                      cfg.cutoff_hard_max);
  const OperatorFactors cache = make_operator_factors(window, cutoff_hi);

  parallel_for_index(ts.size(), cfg.threads, [&](std::size_t i) {
    const GridPoint p = evaluate_equilibrium_point(ts[i], cfg.n_tot, window, loop, &cache);
    rows[i].T_trap = p.T;
    rows[i].T_micro_kelvin = temperature_from_trap_units(p.T, physical) * 1e6;
    rows[i].breakdown = p.breakdown;
    rows[i].mean_Nw = p.mean_Nw;
    rows[i].condensate_fraction = p.condensate_fraction;
    rows[i].error_estimate = p.error_estimate;
  });
  return rows;
}

const char* const kSweepCsvHeader =
    "T_trap,T_microK,dE_over_E0,measurement_over_E0,backaction_over_E0,"
    "number_fluct_over_E0,kinetic_over_E0,mean_Nw,condensate_fraction,error_estimate";

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << kSweepCsvHeader << "\n";
  const double e0 = 1.5;  // trap units
  for (const SweepRow& r : rows) {
    out << format_full_precision(r.T_trap) << ',' << format_full_precision(r.T_micro_kelvin)
        << ',' << format_full_precision(r.breakdown.total / e0) << ','
        << format_full_precision(r.breakdown.measurement_heating / e0) << ','
        << format_full_precision(r.breakdown.backaction_heating / e0) << ','
        << format_full_precision(r.breakdown.number_fluct_heating / e0) << ','
        << format_full_precision(r.breakdown.kinetic_subtraction / e0) << ','
        << format_full_precision(r.mean_Nw) << ','
        << format_full_precision(r.condensate_fraction) << ','
        << format_full_precision(r.error_estimate / e0) << "\n";
  }
}

const char* const kTrajectoryCsvHeader =
    "step,T_trap,T_microK,E_trap,dE_total,dE_measurement,dE_backaction,"
    "dE_number_fluct,dE_kinetic,mean_Nw,condensate_fraction";

void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRecord>& records,
                          const PhysicalConfig& physical) {
  out << kTrajectoryCsvHeader << "\n";
  for (const TrajectoryRecord& r : records) {
    out << format_full_precision(r.step) << ',' << format_full_precision(r.T) << ','
        << format_full_precision(temperature_from_trap_units(r.T, physical) * 1e6) << ','
        << format_full_precision(r.E) << ',' << format_full_precision(r.breakdown.total) << ','
        << format_full_precision(r.breakdown.measurement_heating) << ','
        << format_full_precision(r.breakdown.backaction_heating) << ','
        << format_full_precision(r.breakdown.number_fluct_heating) << ','
        << format_full_precision(r.breakdown.kinetic_subtraction) << ','
        << format_full_precision(r.mean_Nw) << ','
        << format_full_precision(r.condensate_fraction) << "\n";
  }
}

}  // namespace stochcool
