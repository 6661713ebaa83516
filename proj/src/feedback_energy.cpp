#include "stochcool/feedback_energy.hpp"

#include <cmath>

namespace stochcool {

double optimal_sigma(double N_e) {
  if (!(N_e > 0.0)) throw std::domain_error("optimal_sigma: requires N_e > 0");
  return std::sqrt(0.5 * N_e);  // dp0 sqrt(N_e), dp0 = 1/sqrt(2)
}

double measurement_bracket(double sigma, double N_e) {
  if (!(sigma > 0.0) || !(N_e > 0.0))
    throw std::domain_error("measurement_bracket: requires sigma > 0 and N_e > 0");
  return sigma * sigma / (2.0 * N_e) + N_e / (8.0 * sigma * sigma);
}

EnergyChangeBreakdown energy_change(const ThermalEquilibrium& eq, const WindowRegion& window,
                                    const FeedbackParams& params, const CorrelatorSet& corr) {
  params.validate();
  window.validate();
  if (!(std::isfinite(corr.mean_Nw) && std::isfinite(corr.mean_Pw2) &&
        std::isfinite(corr.corr_dNw_Pw2)))
    throw std::invalid_argument("energy_change: non-finite correlators");
  if (corr.mean_Nw < -1e-9 * eq.N_tot || corr.mean_Nw > eq.N_tot * (1.0 + 1e-6))
    throw std::invalid_argument("energy_change: mean window number outside [0, N_tot]");

  const double ne = params.N_e;
  const double s2 = params.sigma * params.sigma;
  EnergyChangeBreakdown out;
  out.measurement_heating = s2 * corr.mean_Nw / (2.0 * ne * ne);
  out.backaction_heating = corr.mean_Nw / (8.0 * s2 * ne);
  out.number_fluct_heating = corr.corr_dNw_Pw2 / (2.0 * ne * ne);
  out.kinetic_subtraction = -corr.mean_Pw2 / (2.0 * ne);
  out.total = out.measurement_heating + out.backaction_heating + out.number_fluct_heating +
              out.kinetic_subtraction;
  return out;
}

double estimate_Ne(const CorrelatorSet& corr) {
  if (!(corr.mean_Nw > 0.0))
    throw std::domain_error("estimate_Ne: window holds no atoms to estimate");
  return corr.mean_Nw;
}

}  // namespace stochcool
