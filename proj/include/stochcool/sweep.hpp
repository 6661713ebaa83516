#pragma once

// Temperature sweeps of the per-feedback energy change (the Fig.-2-style
// workflow), evaluated concurrently and emitted as plot-ready CSV in
// deterministic grid order.

#include <iosfwd>
#include <string>
#include <vector>

#include "stochcool/config.hpp"

namespace stochcool {

struct SweepRow {
  double T_trap = 0.0;
  double T_micro_kelvin = 0.0;
  EnergyChangeBreakdown breakdown;  // trap units
  double mean_Nw = 0.0;
  double condensate_fraction = 0.0;
  double error_estimate = 0.0;  // absolute, on the total, trap units
};

std::vector<double> sweep_temperatures(const RunConfig& cfg);  // trap units, grid order

std::vector<SweepRow> run_sweep(const RunConfig& cfg, const WindowRegion& window);

extern const char* const kSweepCsvHeader;
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

extern const char* const kTrajectoryCsvHeader;
void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRecord>& records,
                          const PhysicalConfig& physical);

// Full round-trip precision (17 significant digits).
std::string format_full_precision(double value);

}  // namespace stochcool
