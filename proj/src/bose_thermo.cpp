#include "stochcool/bose_thermo.hpp"

#include <cmath>
#include <sstream>

#include "stochcool/units.hpp"

namespace stochcool {

namespace {

// Bose factor 1/(e^x - 1) for x = beta (E - mu) > 0.
double bose_factor(double x) {
  if (!(x > 0.0)) throw std::domain_error("bose_factor: requires beta (E - mu) > 0");
  return 1.0 / std::expm1(x);
}

// Total mean number over the cube at chemical-potential gap delta = 3/2 - mu.
double number_at_gap(double beta, double delta, const Eigen::VectorXd& degeneracy) {
  double n = 0.0;
  for (int m = 0; m < degeneracy.size(); ++m)
    n += degeneracy(m) * bose_factor(beta * (m + delta));
  return n;
}

}  // namespace

double ThermalEquilibrium::occupation(double energy) const {
  return bose_factor(beta * (energy - mu));
}

Eigen::VectorXd cube_level_degeneracy(BasisCutoff cutoff) {
  cutoff.validate();
  const int d = cutoff.dim();
  Eigen::VectorXd g1 = Eigen::VectorXd::Ones(d);
  Eigen::VectorXd g2 = Eigen::VectorXd::Zero(2 * d - 1);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g2(i + j) += g1(i) * g1(j);
  Eigen::VectorXd g3 = Eigen::VectorXd::Zero(3 * d - 2);
  for (int i = 0; i < 2 * d - 1; ++i)
    for (int j = 0; j < d; ++j) g3(i + j) += g2(i);
  return g3;
}

ThermalEquilibrium solve_chemical_potential(double T, double N_tot, BasisCutoff cutoff,
                                            const SolverOptions& opts) {
  cutoff.validate();
  if (!(T > 0.0)) throw std::domain_error("solve_chemical_potential: requires T > 0");
  if (!(N_tot > 0.0)) throw std::domain_error("solve_chemical_potential: requires N_tot > 0");

  const double beta = 1.0 / T;
  const Eigen::VectorXd degeneracy = cube_level_degeneracy(cutoff);

  // Work in the gap delta = 3/2 - mu > 0; N(delta) is strictly decreasing.
  // Lower bracket: ground occupation alone already exceeds the target.
  double delta_lo = T * std::log1p(1.0 / (4.0 * N_tot));
  double delta_hi = std::max(T, 1.0);
  while (number_at_gap(beta, delta_hi, degeneracy) >= N_tot) {
    delta_hi *= 2.0;
    if (delta_hi > 1e15)
      throw numeric_error("solve_chemical_potential: failed to bracket mu from above");
  }
  if (number_at_gap(beta, delta_lo, degeneracy) < N_tot) {
    // Should not happen (f0 -> infinity as delta -> 0); tighten just in case.
    delta_lo *= 1e-6;
    if (number_at_gap(beta, delta_lo, degeneracy) < N_tot)
      throw numeric_error("solve_chemical_potential: failed to bracket mu from below");
  }

  // Geometric bisection; the gap spans many decades near condensation.
  double n_mid = 0.0, delta = delta_lo;
  for (int it = 0; it < opts.max_iterations; ++it) {
    delta = std::sqrt(delta_lo * delta_hi);
    n_mid = number_at_gap(beta, delta, degeneracy);
    if (n_mid > N_tot)
      delta_lo = delta;
    else
      delta_hi = delta;
    if (std::fabs(n_mid - N_tot) <= 0.3 * opts.number_rel_tol * N_tot) break;
    if (delta_hi - delta_lo <= 1e-16 * delta_lo) break;
  }
  delta = std::sqrt(delta_lo * delta_hi);

  ThermalEquilibrium eq;
  eq.T = T;
  eq.beta = beta;
  eq.mu = 1.5 - delta;
  eq.z = std::exp(beta * eq.mu);
  eq.N_tot = N_tot;
  eq.cutoff = cutoff;
  eq.level_degeneracy = degeneracy;
  eq.level_occupation.resize(degeneracy.size());
  double n_sum = 0.0;
  for (int m = 0; m < degeneracy.size(); ++m) {
    eq.level_occupation(m) = bose_factor(beta * (m + delta));
    n_sum += degeneracy(m) * eq.level_occupation(m);
  }
  if (std::fabs(n_sum - N_tot) > opts.number_rel_tol * N_tot) {
    std::ostringstream msg;
    msg << "solve_chemical_potential: number error " << std::fabs(n_sum / N_tot - 1.0)
        << " exceeds tolerance " << opts.number_rel_tol;
    throw numeric_error(msg.str());
  }
  if (opts.check_capacity) {
    const double corner = eq.level_occupation(degeneracy.size() - 1);
    if (!(corner < opts.corner_tol * N_tot)) {
      std::ostringstream msg;
      msg << "capacity: cutoff n_max=" << cutoff.n_max << " too small for N_tot=" << N_tot
          << " at T=" << T << ": corner occupation " << corner << " >= "
          << opts.corner_tol * N_tot << " (corner rule " << opts.corner_tol << " * N_tot)";
      throw capacity_error(msg.str());
    }
  }
  return eq;
}

double total_energy(const ThermalEquilibrium& eq) {
  double e = 0.0;
  for (int m = 0; m < eq.level_degeneracy.size(); ++m)
    e += eq.level_degeneracy(m) * (m + 1.5) * eq.level_occupation(m);
  return e;
}

double heat_capacity(const ThermalEquilibrium& eq) {
  // C = (SEE - SE^2/S1) / T^2 with Sk = sum g f(1+f) (E-mu)^k at fixed N.
  double s1 = 0.0, se = 0.0, see = 0.0;
  for (int m = 0; m < eq.level_degeneracy.size(); ++m) {
    const double f = eq.level_occupation(m);
    const double w = eq.level_degeneracy(m) * f * (1.0 + f);
    const double x = m + 1.5 - eq.mu;
    s1 += w;
    se += w * x;
    see += w * x * x;
  }
  return (see - se * se / s1) / (eq.T * eq.T);
}

double invert_energy_to_temperature(double E, double N_tot, BasisCutoff cutoff,
                                    const SolverOptions& opts) {
  if (!(N_tot > 0.0))
    throw std::domain_error("invert_energy_to_temperature: requires N_tot > 0");
  const double e_ground = 1.5 * N_tot;
  if (E < e_ground * (1.0 - 1e-12))
    throw std::domain_error("invert_energy_to_temperature: energy below ground state");
  if (E <= e_ground * (1.0 + 1e-12)) return 0.0;

  SolverOptions inner = opts;
  inner.check_capacity = false;

  auto energy_at = [&](double T) {
    return total_energy(solve_chemical_potential(T, N_tot, cutoff, inner));
  };

  double t_hi = std::max((E / N_tot - 1.5) / 3.0, 1e-3);
  while (energy_at(t_hi) < E) {
    t_hi *= 2.0;
    if (t_hi > 1e12)
      throw capacity_error("invert_energy_to_temperature: cutoff saturates below target energy");
  }
  double t_lo = t_hi;
  while (energy_at(t_lo) > E) t_lo *= 0.5;

  double t_mid = t_lo;
  for (int it = 0; it < opts.max_iterations; ++it) {
    t_mid = std::sqrt(t_lo * t_hi);
    const double e_mid = energy_at(t_mid);
    if (e_mid < E)
      t_lo = t_mid;
    else
      t_hi = t_mid;
    if (std::fabs(e_mid - E) <= 1e-10 * E) break;
    if (t_hi - t_lo <= 1e-14 * t_lo) break;
  }
  // Final capacity check at the solved temperature, honoring caller options.
  solve_chemical_potential(t_mid, N_tot, cutoff, opts);
  return t_mid;
}

double critical_temperature_estimate(double N_tot) {
  if (!(N_tot >= 1.0))
    throw std::domain_error("critical_temperature_estimate: requires N_tot >= 1");
  return std::cbrt(N_tot / constants::zeta3);
}

BasisCutoff capacity_cutoff(double T, double N_tot, const SolverOptions& opts, int n_start,
                            int n_hard_max) {
  SolverOptions probe = opts;
  probe.check_capacity = false;
  int n = std::max(1, n_start);
  while (n <= n_hard_max) {
    const BasisCutoff cutoff{n};
    const ThermalEquilibrium eq = solve_chemical_potential(T, N_tot, cutoff, probe);
    const double corner = eq.level_occupation(eq.level_degeneracy.size() - 1);
    if (corner < opts.corner_tol * N_tot) return cutoff;
    n = std::max(n + 8, static_cast<int>(std::ceil(1.25 * n)));
  }
  std::ostringstream msg;
  msg << "capacity: no cutoff up to n_max=" << n_hard_max << " holds N_tot=" << N_tot
      << " at T=" << T << " under the corner rule " << opts.corner_tol << " * N_tot";
  throw capacity_error(msg.str());
}

double OccupationSeries::mode_ratio(double energy) const {
  const double r = std::exp(-beta * (energy - mu));
  if (!(r < 1.0)) throw std::domain_error("OccupationSeries: mode ratio must be < 1");
  return r;
}

double OccupationSeries::partial_sum(double energy, bool plus_one) const {
  const double r = mode_ratio(energy);
  const double geometric = r * (1.0 - std::pow(r, terms)) / (1.0 - r);
  return plus_one ? 1.0 + geometric : geometric;
}

double OccupationSeries::tail(double energy) const {
  const double r = mode_ratio(energy);
  return std::pow(r, terms + 1) / (1.0 - r);
}

double OccupationSeries::tail_bound(double energy_min) const { return tail(energy_min); }

OccupationSeries occupation_series(const ThermalEquilibrium& eq, int term_count) {
  if (term_count < 1) throw std::domain_error("occupation_series: requires term_count >= 1");
  if (!(eq.mu < 1.5))
    throw std::domain_error("occupation_series: fugacity series diverges (mu >= 3/2)");
  OccupationSeries s;
  s.beta = eq.beta;
  s.mu = eq.mu;
  s.terms = term_count;
  return s;
}

std::pair<double, double> condensate_statistics(const ThermalEquilibrium& eq) {
  const double f0 = eq.condensate_mean();
  return {f0, f0 * (1.0 + f0)};
}

}  // namespace stochcool
