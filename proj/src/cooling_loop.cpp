#include "stochcool/cooling_loop.hpp"

#include "stochcool/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

namespace stochcool {

namespace {

bool same_window(const WindowRegion& a, const WindowRegion& b) {
  return a.full == b.full && a.x_center == b.x_center && a.y_center == b.y_center &&
         a.x_half_width == b.x_half_width && a.y_half_width == b.y_half_width;
}

// ---- monotone cubic interpolation (Fritsch-Carlson) -------------------

struct Pchip {
  std::vector<double> x, y, d;

  double operator()(double xv) const {
    if (xv <= x.front()) xv = x.front();
    if (xv >= x.back()) xv = x.back();
    const auto it = std::upper_bound(x.begin(), x.end(), xv);
    const std::size_t i = std::min(x.size() - 2, static_cast<std::size_t>(
                                                     std::max<std::ptrdiff_t>(0, it - x.begin() - 1)));
    const double h = x[i + 1] - x[i];
    const double t = (xv - x[i]) / h;
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * y[i] + (t3 - 2 * t2 + t) * h * d[i] +
           (-2 * t3 + 3 * t2) * y[i + 1] + (t3 - t2) * h * d[i + 1];
  }
};

double edge_slope(double h0, double h1, double d0, double d1) {
  double s = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
  if (s * d0 <= 0.0)
    s = 0.0;
  else if (d0 * d1 < 0.0 && std::fabs(s) > 3.0 * std::fabs(d0))
    s = 3.0 * d0;
  return s;
}

Pchip make_pchip(std::vector<double> x, std::vector<double> y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw std::invalid_argument("pchip: need >= 2 ascending points");
  std::vector<double> h(n - 1), delta(n - 1), d(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = x[i + 1] - x[i];
    if (!(h[i] > 0.0)) throw std::invalid_argument("pchip: abscissae must ascend strictly");
    delta[i] = (y[i + 1] - y[i]) / h[i];
  }
  if (n == 2) {
    d[0] = d[1] = delta[0];
  } else {
    d[0] = edge_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      if (delta[i - 1] * delta[i] <= 0.0) {
        d[i] = 0.0;
      } else {
        const double w1 = 2 * h[i] + h[i - 1];
        const double w2 = h[i] + 2 * h[i - 1];
        d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
      }
    }
  }
  return Pchip{std::move(x), std::move(y), std::move(d)};
}

// ---- log-thinned recording --------------------------------------------

struct Thinner {
  double ratio;
  double next_mark = 0.0;
  explicit Thinner(int cap) : ratio(std::pow(10.0, 12.0 / std::max(cap - 16, 64))) {}
  bool due(double step) {
    if (step < next_mark) return false;
    next_mark = std::max(next_mark + 1.0, std::ceil(next_mark * ratio));
    return true;
  }
};


// ---- dE(T) grid for one window phase -----------------------------------

struct PhaseGrid {
  WindowRegion window;
  std::vector<GridPoint> points;  // ascending T
  Pchip dE, E_of_T, T_of_E, C;
  Pchip meas, back, fluct, kin, mean_nw, cond, err;
  double T_lo = 0.0, T_hi = 0.0;

  EnergyChangeBreakdown breakdown_at(double T) const {
    EnergyChangeBreakdown b;
    b.measurement_heating = meas(T);
    b.backaction_heating = back(T);
    b.number_fluct_heating = fluct(T);
    b.kinetic_subtraction = kin(T);
    b.total = dE(T);
    return b;
  }
};

std::vector<double> log_spaced(double lo, double hi, int n) {
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i)
    out[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
  out.front() = lo;
  out.back() = hi;
  return out;
}

PhaseGrid build_phase_grid(const WindowRegion& window, double T_lo, double T_hi,
                           const LoopConfig& config) {
  if (!(T_lo > 0.0) || !(T_hi > T_lo))
    throw std::invalid_argument("cooling grid: requires 0 < T_lo < T_hi");
  int points = std::max(config.grid_points, 5);

  // Operator factors are reused across the phase; capacity grows with T,
  // so the cutoff at T_hi covers every grid point.
  const BasisCutoff cutoff_hi = config.cutoff_n_max > 0
                                    ? BasisCutoff{config.cutoff_n_max}
                                    : capacity_cutoff(T_hi, config.N_tot, config.solver);
  const OperatorFactors cache = make_operator_factors(window, cutoff_hi);

  for (int refinement = 0;; ++refinement) {
    const std::vector<double> ts = log_spaced(T_lo, T_hi, points);
    std::vector<GridPoint> pts(ts.size());
    parallel_for_index(ts.size(), config.threads, [&](std::size_t i) {
      pts[i] = evaluate_equilibrium_point(ts[i], config.N_tot, window, config, &cache);
    });

    PhaseGrid grid;
    grid.window = window;
    grid.points = std::move(pts);
    grid.T_lo = T_lo;
    grid.T_hi = T_hi;
    std::vector<double> x(ts), e, de, c, meas, back, fluct, kin, nw, cond, err;
    for (const GridPoint& p : grid.points) {
      e.push_back(p.E);
      de.push_back(p.breakdown.total);
      c.push_back(p.heat_capacity);
      meas.push_back(p.breakdown.measurement_heating);
      back.push_back(p.breakdown.backaction_heating);
      fluct.push_back(p.breakdown.number_fluct_heating);
      kin.push_back(p.breakdown.kinetic_subtraction);
      nw.push_back(p.mean_Nw);
      cond.push_back(p.condensate_fraction);
      err.push_back(p.error_estimate);
    }
    grid.dE = make_pchip(x, de);
    grid.E_of_T = make_pchip(x, e);
    grid.T_of_E = make_pchip(e, x);  // E(T) is strictly increasing
    grid.C = make_pchip(x, c);
    grid.meas = make_pchip(x, meas);
    grid.back = make_pchip(x, back);
    grid.fluct = make_pchip(x, fluct);
    grid.kin = make_pchip(x, kin);
    grid.mean_nw = make_pchip(x, nw);
    grid.cond = make_pchip(x, cond);
    grid.err = make_pchip(x, err);

    // Interpolation audit at probe midpoints; refine or fail, never silent.
    double scale = 0.0;
    for (double v : de) scale = std::max(scale, std::fabs(v));
    double worst = 0.0;
    const int nprobe = 4;
    for (int k = 1; k <= nprobe; ++k) {
      const std::size_t i = k * (ts.size() - 1) / (nprobe + 1);
      const double tp = std::sqrt(ts[i] * ts[i + 1]);
      const GridPoint exact =
          evaluate_equilibrium_point(tp, config.N_tot, window, config, &cache);
      worst = std::max(worst, std::fabs(exact.breakdown.total - grid.dE(tp)));
    }
    if (worst <= config.grid_tol * std::max(scale, 1e-300)) return grid;
    if (refinement >= config.grid_max_refinements) {
      std::ostringstream msg;
      msg << "cooling grid: interpolation error " << worst << " above tolerance "
          << config.grid_tol * scale << " after " << refinement << " refinements ("
          << points << " points)";
      throw numeric_error(msg.str());
    }
    points = 2 * points - 1;
  }
}

// Adaptive Simpson for the continuum step-count integrand.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa,
                        double fm, double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0) return left + right;
  if (std::fabs(left + right - whole) <= 15.0 * tol) return left + right;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double rel_tol) {
  if (a == b) return 0.0;
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  const double tol = std::max(std::fabs(whole), 1e-300) * rel_tol;
  return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 40);
}

}  // namespace

const char* to_string(StopReason reason) {
  switch (reason) {
    case StopReason::ReachedTarget: return "reached_target";
    case StopReason::HeatingStall: return "dE_nonnegative";
    case StopReason::StepBudget: return "step_budget";
    case StopReason::GroundReached: return "ground_state";
  }
  return "unknown";
}

void LoopConfig::validate() const {
  if (!(T_start > 0.0)) throw std::invalid_argument("LoopConfig: T_start must be positive");
  if (!(N_tot > 0.0)) throw std::invalid_argument("LoopConfig: N_tot must be positive");
  if (max_steps < 1.0) throw std::invalid_argument("LoopConfig: max_steps must be >= 1");
  if (T_target < 0.0) throw std::invalid_argument("LoopConfig: T_target must be >= 0");
  schedule.base.validate();
  schedule.shifted.validate();
  if (sigma_policy == SigmaPolicy::Fixed && !(fixed_sigma > 0.0))
    throw std::invalid_argument("LoopConfig: fixed sigma policy requires fixed_sigma > 0");
  if (ne_policy == NePolicy::Fixed && !(fixed_Ne > 0.0))
    throw std::invalid_argument("LoopConfig: fixed N_e policy requires fixed_Ne > 0");
}

GridPoint evaluate_equilibrium_point(double T, double N_tot, const WindowRegion& window,
                                     const LoopConfig& config,
                                     const OperatorFactors* cached_factors) {
  const BasisCutoff cutoff = config.cutoff_n_max > 0
                                 ? BasisCutoff{config.cutoff_n_max}
                                 : capacity_cutoff(T, N_tot, config.solver);
  OperatorFactors local;
  const OperatorFactors* factors = nullptr;
  if (cached_factors != nullptr && same_window(cached_factors->window, window) &&
      cached_factors->cutoff.n_max >= cutoff.n_max) {
    local = slice_factors(*cached_factors, cutoff);
    factors = &local;
  } else {
    local = make_operator_factors(window, cutoff);
    factors = &local;
  }

  const ThermalEquilibrium eq = solve_chemical_potential(T, N_tot, cutoff, config.solver);
  GridPoint out;
  out.T = T;
  out.E = total_energy(eq);
  out.heat_capacity = heat_capacity(eq);
  out.condensate_fraction = eq.condensate_fraction();

  if (window.empty()) return out;  // zero breakdown: every term has a window factor

  const double mean = mean_window_number(eq, *factors, config.correlators);
  out.mean_Nw = mean;
  const double ne = config.ne_policy == NePolicy::Fixed ? config.fixed_Ne : mean;
  if (!(ne > 0.0)) throw std::domain_error("evaluate_equilibrium_point: window estimate N_e <= 0");
  const double sigma =
      config.sigma_policy == SigmaPolicy::Fixed ? config.fixed_sigma : optimal_sigma(ne);
  const CorrelatorSet corr = compute_correlators(eq, *factors, ne, config.correlators);
  const FeedbackParams params{sigma, ne, config.sigma_policy};
  out.breakdown = energy_change(eq, window, params, corr);
  out.error_estimate = corr.error_estimate * (0.5 / (ne * ne) + 0.5 / ne);
  return out;
}

StepResult single_step(double T, double N_tot, const WindowRegion& window,
                       const FeedbackParams& params, BasisCutoff cutoff,
                       const CorrelatorOptions& copts, const SolverOptions& sopts) {
  if (!(T > 0.0)) throw std::domain_error("single_step: requires T > 0");
  const ThermalEquilibrium eq = solve_chemical_potential(T, N_tot, cutoff, sopts);
  const double E = total_energy(eq);

  StepResult res;
  res.record.T = T;
  res.record.E = E;
  res.record.condensate_fraction = eq.condensate_fraction();

  if (window.empty()) {
    res.T_next = T;  // dE = 0: every term carries a window correlator
    return res;
  }

  const OperatorFactors factors = make_operator_factors(window, cutoff);
  const double mean = mean_window_number(eq, factors, copts);
  double ne = params.N_e, sigma = params.sigma;
  if (params.sigma_policy == SigmaPolicy::OptimalPerState) {
    if (!(mean > 0.0)) throw std::domain_error("single_step: window estimate N_e <= 0");
    ne = mean;
    sigma = optimal_sigma(ne);
  }
  const CorrelatorSet corr = compute_correlators(eq, factors, ne, copts);
  const FeedbackParams applied{sigma, ne, params.sigma_policy};
  res.record.breakdown = energy_change(eq, window, applied, corr);
  res.record.mean_Nw = mean;

  const double e_next = E + res.record.breakdown.total;
  if (e_next <= 1.5 * N_tot) {
    res.T_next = 0.0;
    res.ground_reached = true;
    return res;
  }
  res.T_next = invert_energy_to_temperature(e_next, N_tot, cutoff, sopts);
  return res;
}

namespace {

Trajectory run_exact(const LoopConfig& config, double T0) {
  Trajectory out;
  Thinner thinner(config.record_cap);
  double T = config.T_start;
  double steps = 0.0;

  // Factor cache per schedule window at the largest needed cutoff.
  const BasisCutoff cutoff_hi = config.cutoff_n_max > 0
                                    ? BasisCutoff{config.cutoff_n_max}
                                    : capacity_cutoff(config.T_start, config.N_tot, config.solver);
  const OperatorFactors cache_base = make_operator_factors(config.schedule.base, cutoff_hi);
  OperatorFactors cache_shifted;
  if (config.schedule.shift_enabled)
    cache_shifted = make_operator_factors(config.schedule.shifted, cutoff_hi);

  while (true) {
    const WindowRegion& window = config.schedule.window_at(T, T0);
    const GridPoint point = evaluate_equilibrium_point(
        T, config.N_tot, window, config,
        same_window(window, config.schedule.base) ? &cache_base : &cache_shifted);

    TrajectoryRecord rec;
    rec.step = steps;
    rec.T = T;
    rec.E = point.E;
    rec.breakdown = point.breakdown;
    rec.mean_Nw = point.mean_Nw;
    rec.condensate_fraction = point.condensate_fraction;
    if (thinner.due(steps)) out.records.push_back(rec);

    if (T <= config.T_target && config.T_target > 0.0) {
      out.reason = StopReason::ReachedTarget;
      break;
    }
    if (point.breakdown.total >= 0.0) {
      out.reason = StopReason::HeatingStall;
      break;
    }
    if (steps >= config.max_steps) {
      out.reason = StopReason::StepBudget;
      break;
    }

    const double e_next = point.E + point.breakdown.total;
    if (e_next <= 1.5 * config.N_tot) {
      T = 0.0;
      steps += 1.0;
      out.reason = StopReason::GroundReached;
      break;
    }
    const BasisCutoff cutoff = config.cutoff_n_max > 0
                                   ? BasisCutoff{config.cutoff_n_max}
                                   : capacity_cutoff(T, config.N_tot, config.solver);
    T = invert_energy_to_temperature(e_next, config.N_tot, cutoff, config.solver);
    steps += 1.0;
  }
  out.steps_total = steps;
  out.T_final = T;
  return out;
}

struct Phase {
  WindowRegion window;
  double T_hi = 0.0, T_lo = 0.0;
};

std::vector<Phase> schedule_phases(const LoopConfig& config, double T0) {
  const double floor_t = std::max(config.T_target, 0.02 * T0);
  std::vector<Phase> phases;
  const double switch_t = config.schedule.switch_ratio * T0;
  if (config.schedule.shift_enabled && switch_t < config.T_start && switch_t > floor_t) {
    phases.push_back({config.schedule.base, config.T_start, switch_t});
    phases.push_back({config.schedule.shifted, switch_t, floor_t});
  } else if (config.schedule.shift_enabled && switch_t >= config.T_start) {
    phases.push_back({config.schedule.shifted, config.T_start, floor_t});
  } else {
    phases.push_back({config.schedule.base, config.T_start, floor_t});
  }
  return phases;
}

void push_record(Trajectory& out, double step, double T, double E,
                 const EnergyChangeBreakdown& bd, double mean_nw, double cond) {
  TrajectoryRecord rec;
  rec.step = step;
  rec.T = T;
  rec.E = E;
  rec.breakdown = bd;
  rec.mean_Nw = mean_nw;
  rec.condensate_fraction = cond;
  out.records.push_back(rec);
}

Trajectory run_grid_stepping(const LoopConfig& config, double T0) {
  Trajectory out;
  Thinner thinner(config.record_cap);
  double steps = 0.0;
  double T = config.T_start;
  bool done = false;

  for (const Phase& phase : schedule_phases(config, T0)) {
    if (done) break;
    if (T <= phase.T_lo) continue;
    const PhaseGrid grid = build_phase_grid(phase.window, phase.T_lo, phase.T_hi, config);
    double E = grid.E_of_T(T);
    while (true) {
      const double de = grid.dE(T);
      if (thinner.due(steps))
        push_record(out, steps, T, E, grid.breakdown_at(T), grid.mean_nw(T), grid.cond(T));
      if (config.T_target > 0.0 && T <= config.T_target) {
        out.reason = StopReason::ReachedTarget;
        done = true;
        break;
      }
      if (de >= 0.0) {
        out.reason = StopReason::HeatingStall;
        done = true;
        break;
      }
      if (steps >= config.max_steps) {
        out.reason = StopReason::StepBudget;
        done = true;
        break;
      }
      const double e_next = E + de;
      if (e_next <= 1.5 * config.N_tot) {
        T = 0.0;
        steps += 1.0;
        out.reason = StopReason::GroundReached;
        done = true;
        break;
      }
      E = e_next;
      T = grid.T_of_E(E);
      steps += 1.0;
      if (T <= phase.T_lo) break;  // next phase (or floor)
    }
    if (!done && T <= std::max(config.T_target, 0.0) && config.T_target > 0.0) {
      out.reason = StopReason::ReachedTarget;
      done = true;
    }
  }
  if (!done) out.reason = StopReason::ReachedTarget;
  out.steps_total = steps;
  out.T_final = T;
  return out;
}

Trajectory run_continuum_ode(const LoopConfig& config, double T0) {
  Trajectory out;
  double steps = 0.0;
  double T = config.T_start;
  bool done = false;

  for (const Phase& phase : schedule_phases(config, T0)) {
    if (done) break;
    if (T <= phase.T_lo) continue;
    const PhaseGrid grid = build_phase_grid(phase.window, phase.T_lo, phase.T_hi, config);

    // dn = C(T) / (-dE(T)) dT integrated downward from T.
    const auto phi = [&](double t) { return grid.C(t) / (-grid.dE(t)); };

    double scale = 0.0;
    for (const GridPoint& p : grid.points) scale = std::max(scale, std::fabs(p.breakdown.total));

    // March down the grid intervals, recording at grid nodes.
    for (std::size_t i = grid.points.size(); i-- > 0;) {
      double t_hi = T;
      double t_lo = std::max(grid.points[i].T, phase.T_lo);
      if (t_lo >= t_hi) continue;
      if (config.T_target > 0.0) t_lo = std::max(t_lo, config.T_target);

      // Heating stall inside the interval: dE crosses zero from below.
      double t_stop = t_lo;
      bool stall = false;
      if (grid.dE(t_lo) >= 0.0) {
        double a = t_lo, b = t_hi;  // dE(a) >= 0 > dE(b)
        for (int it = 0; it < 200; ++it) {
          const double m = 0.5 * (a + b);
          if (grid.dE(m) >= 0.0)
            a = m;
          else
            b = m;
        }
        // Integrate only down to where |dE| is still resolvable.
        t_stop = b;
        stall = true;
      }
      if (grid.dE(t_hi) >= 0.0) {
        out.reason = StopReason::HeatingStall;
        done = true;
        break;
      }

      steps += integrate(phi, t_stop, t_hi, 1e-8);
      T = t_stop;
      push_record(out, steps, T, grid.E_of_T(T), grid.breakdown_at(T), grid.mean_nw(T),
                  grid.cond(T));
      if (stall) {
        out.reason = StopReason::HeatingStall;
        done = true;
        break;
      }
      if (config.T_target > 0.0 && T <= config.T_target) {
        out.reason = StopReason::ReachedTarget;
        done = true;
        break;
      }
      if (steps >= config.max_steps) {
        out.reason = StopReason::StepBudget;
        done = true;
        break;
      }
    }
  }
  if (!done) out.reason = StopReason::ReachedTarget;
  out.steps_total = steps;
  out.T_final = T;
  return out;
}

}  // namespace

Trajectory run_trajectory(const LoopConfig& config) {
  config.validate();
  const double T0 = critical_temperature_estimate(config.N_tot);

  if (config.T_target > 0.0 && config.T_start <= config.T_target) {
    Trajectory out;
    const WindowRegion& window = config.schedule.window_at(config.T_start, T0);
    const GridPoint point =
        evaluate_equilibrium_point(config.T_start, config.N_tot, window, config, nullptr);
    push_record(out, 0.0, point.T, point.E, point.breakdown, point.mean_Nw,
                point.condensate_fraction);
    out.reason = StopReason::ReachedTarget;
    out.T_final = config.T_start;
    return out;
  }

  switch (config.mode) {
    case AccelerationMode::ExactPerStep: return run_exact(config, T0);
    case AccelerationMode::InterpolatedGrid: return run_grid_stepping(config, T0);
    case AccelerationMode::ContinuumOde: return run_continuum_ode(config, T0);
  }
  throw std::logic_error("run_trajectory: unknown acceleration mode");
}

}  // namespace stochcool
