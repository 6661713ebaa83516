#pragma once

// The three many-body expectation values entering the feedback energy
// balance --- <N_w>, <P_w^2>, <dN_w P_w^2> --- for a grand-canonical
// ideal-gas state, via Wick's theorem and Kronecker-separable traces.
//
// Contraction rules: <a_i^dag a_j> = f_i delta_ij, <a_i a_j^dag> =
// (1 + f_i) delta_ij; the expectation of a product of bilinears is the
// sum over complete pairings respecting operator order.  For bilinears
// X, Y, Z this engine uses
//   <XY>  = Tr[Xf] Tr[Yf] + Tr[X(1+f)Yf]
//   <XYZ> = Tr[Xf]Tr[Yf]Tr[Zf] + Tr[Xf]Tr[Y(1+f)Zf] + Tr[X(1+f)Yf]Tr[Zf]
//         + Tr[X(1+f)Zf]Tr[Yf] + Tr[X(1+f)Zf Yf] + Tr[X(1+f)Y(1+f)Zf],
// pinned against exact Fock enumeration (see exact_oracle).
//
// All kernels are real; the momentum kernel stores the coefficients of i,
// so each pair of momentum factors contributes a factor (-1), applied at
// assembly time.

#include <Eigen/Dense>
#include <span>

#include "stochcool/bose_thermo.hpp"
#include "stochcool/oscillator_basis.hpp"

namespace stochcool {

enum class OccTag { BoseF, OnePlusBoseF };
enum class TraceStrategy { Series, Direct };

// One factor of a trace product: a Kronecker-separable bilinear kernel
// followed by a diagonal occupation operator (f or 1 + f).
struct TraceFactor {
  const Eigen::MatrixXd* x = nullptr;
  const Eigen::MatrixXd* y = nullptr;
  const Eigen::MatrixXd* z = nullptr;
  OccTag tag = OccTag::BoseF;
};

struct TraceOptions {
  TraceStrategy strategy = TraceStrategy::Series;
  double rel_tol = 1e-9;
  int series_cap = 512;        // hard cap on fugacity-series length
  int direct_n_max_limit = 12; // direct strategy refuses larger cutoffs
};

struct TraceResult {
  double value = 0.0;
  double error_bound = 0.0;  // absolute
  TraceStrategy strategy_used = TraceStrategy::Series;
  int series_terms = 0;
};

// Tr[X1 D1 X2 D2 ...] with Di the diagonal f or 1+f operator.  The series
// strategy expands every occupation factor in the fugacity series (the
// ground mode is split off exactly and restored through rank-one
// corrections); the direct strategy materializes the 3D matrices and is
// restricted to small cutoffs.  Supports one to three factors in series
// mode, any length in direct mode.
TraceResult evaluate_trace_product(std::span<const TraceFactor> chain,
                                   const ThermalEquilibrium& eq,
                                   const TraceOptions& opts = {});

struct CorrelatorOptions : TraceOptions {
  bool flip_cycle_sign = false;  // fault-injection hook for the validate suite
};

struct CorrelatorSet {
  double mean_Nw = 0.0;
  double mean_Pw2 = 0.0;
  double corr_dNw_Pw2 = 0.0;  // <dN_w P_w^2> with dN_w = N_w - N_e
  double raw_Nw_Pw2 = 0.0;    // <N_w P_w^2> before the N_e subtraction
  TraceStrategy strategy_used = TraceStrategy::Series;
  double error_estimate = 0.0;  // absolute, aggregated from series tails
};

double mean_window_number(const ThermalEquilibrium& eq, const OperatorFactors& factors,
                          const CorrelatorOptions& opts = {});

// Wick result <P^2> = (Tr[Pf])^2 + Tr[P(1+f)Pf]; the first term vanishes
// identically because the momentum kernel has zero diagonal, which the
// operation asserts.
double momentum_second_moment(const ThermalEquilibrium& eq, const OperatorFactors& factors,
                              const CorrelatorOptions& opts = {});

double number_momentum_correlator(const ThermalEquilibrium& eq, const OperatorFactors& factors,
                                  double N_e, const CorrelatorOptions& opts = {});

CorrelatorSet compute_correlators(const ThermalEquilibrium& eq, const OperatorFactors& factors,
                                  double N_e, const CorrelatorOptions& opts = {});

// Wick formulas on an explicit mode set (toy-system validation): f holds
// per-mode occupations, W the number kernel, Pr the real coefficients of
// i of the momentum kernel.
double ms_mean_number(const Eigen::VectorXd& f, const Eigen::MatrixXd& W);
double ms_momentum_second_moment(const Eigen::VectorXd& f, const Eigen::MatrixXd& Pr);
double ms_number_momentum_raw(const Eigen::VectorXd& f, const Eigen::MatrixXd& W,
                              const Eigen::MatrixXd& Pr, bool flip_cycle_sign = false);

}  // namespace stochcool
