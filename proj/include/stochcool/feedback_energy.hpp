#pragma once

// Per-feedback energy change assembled from the window correlators, with
// its four-term decomposition and the optimal measurement resolution.
// All quantities are in trap units (m = omega0 = 1), so the single-atom
// ground-state scales are dq0 = dp0 = 1/sqrt(2) and E0 = 3/2.

#include "stochcool/bose_thermo.hpp"
#include "stochcool/oscillator_basis.hpp"
#include "stochcool/wick_correlators.hpp"

namespace stochcool {

enum class SigmaPolicy { OptimalPerState, Fixed };
enum class NePolicy { MeanWindowNumber, Fixed };

struct FeedbackParams {
  double sigma = 0.0;  // measurement resolution, trap momentum units
  double N_e = 0.0;    // estimated atom number in the feedback region
  SigmaPolicy sigma_policy = SigmaPolicy::OptimalPerState;

  void validate() const {
    if (!(sigma > 0.0) || !(N_e > 0.0))
      throw std::invalid_argument("FeedbackParams: sigma and N_e must be positive");
  }
};

struct EnergyChangeBreakdown {
  double measurement_heating = 0.0;   //  sigma^2 <N_w> / (2 m N_e^2)
  double backaction_heating = 0.0;    //  m N_e w0^2 <N_w> / (8 sigma^2 N_e)
  double number_fluct_heating = 0.0;  //  <dN_w P_w^2> / (2 m N_e^2)
  double kinetic_subtraction = 0.0;   // -<P_w^2> / (2 m N_e)
  double total = 0.0;                 // exact sum of the four terms

  double total_in_E0() const { return total / 1.5; }
};

// dp0 sqrt(N_e); minimizes the measurement bracket to 1/2 = (1/3) E0.
double optimal_sigma(double N_e);

// sigma^2/(2 N_e) + N_e/(8 sigma^2), the per-unit-<N_w>/N_e heating bracket.
double measurement_bracket(double sigma, double N_e);

EnergyChangeBreakdown energy_change(const ThermalEquilibrium& eq, const WindowRegion& window,
                                    const FeedbackParams& params, const CorrelatorSet& corr);

// The paper's estimator choice N_e = <N_w>; zero windows have no atoms to
// estimate and are a domain error.
double estimate_Ne(const CorrelatorSet& corr);

}  // namespace stochcool
