#pragma once

// Grand-canonical thermodynamics of the ideal Bose gas in the truncated
// 3D isotropic trap.  The mode set is the full cube {0..n_max}^3 so that
// downstream traces stay Kronecker-separable; degeneracies of total
// levels are therefore cube-restricted, not the free (n+1)(n+2)/2.

#include <Eigen/Dense>
#include <utility>

#include "stochcool/errors.hpp"
#include "stochcool/oscillator_basis.hpp"

namespace stochcool {

struct SolverOptions {
  double number_rel_tol = 1e-9;   // |sum f - N_tot| / N_tot after the solve
  double corner_tol = 1e-12;      // corner-mode occupation < corner_tol * N_tot
  int max_iterations = 400;
  bool check_capacity = true;
};

struct ThermalEquilibrium {
  double T = 0.0;      // trap units
  double beta = 0.0;   // 1/T
  double mu = 0.0;     // chemical potential, strictly below 3/2
  double z = 0.0;      // fugacity exp(beta mu)
  double N_tot = 0.0;  // mean total atom number the solve targeted
  BasisCutoff cutoff;
  Eigen::VectorXd level_degeneracy;  // cube-restricted, total level m = 0..3 n_max
  Eigen::VectorXd level_occupation;  // f(m + 3/2) on the same grid

  double occupation(double energy) const;  // closed-form Bose factor
  double condensate_mean() const { return occupation(1.5); }
  double condensate_fraction() const { return condensate_mean() / N_tot; }
};

// Number of cube modes at each total level 0..3 n_max.
Eigen::VectorXd cube_level_degeneracy(BasisCutoff cutoff);

// Root-solve mu so that the cube-mode occupations sum to N_tot.
// Throws capacity_error naming the corner shortfall when the cutoff is
// too small for (T, N_tot) under the corner-occupation rule.
ThermalEquilibrium solve_chemical_potential(double T, double N_tot, BasisCutoff cutoff,
                                            const SolverOptions& opts = {});

double total_energy(const ThermalEquilibrium& eq);      // sum E f, trap units
double heat_capacity(const ThermalEquilibrium& eq);     // dE/dT at fixed N_tot

// T with total_energy(solve(T, N_tot)) = E; E = 1.5 N_tot maps to exact 0.
double invert_energy_to_temperature(double E, double N_tot, BasisCutoff cutoff,
                                    const SolverOptions& opts = {});

// Semiclassical condensation temperature (N_tot / zeta(3))^(1/3).
double critical_temperature_estimate(double N_tot);

// Smallest cutoff from a growth sequence that satisfies the corner rule.
BasisCutoff capacity_cutoff(double T, double N_tot, const SolverOptions& opts = {},
                            int n_start = 16, int n_hard_max = 4096);

// Truncated fugacity expansion f(E) = sum_{l=1..L} e^{-l beta (E - mu)},
// with the exactly summed geometric tail per mode.  The expansion of
// 1 + f uses the same table with l starting at 0.
struct OccupationSeries {
  double beta = 0.0, mu = 0.0;
  int terms = 0;  // L

  double mode_ratio(double energy) const;               // e^{-beta(E - mu)} < 1
  double partial_sum(double energy, bool plus_one) const;
  double tail(double energy) const;                     // exact remainder after L terms
  double tail_bound(double energy_min) const;           // bound for all modes E >= energy_min
};

OccupationSeries occupation_series(const ThermalEquilibrium& eq, int term_count);

// Grand-canonical mean and variance f0 (1 + f0) of the ground mode.
std::pair<double, double> condensate_statistics(const ThermalEquilibrium& eq);

}  // namespace stochcool
