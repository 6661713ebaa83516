#pragma once

// 1D harmonic-oscillator eigenfunctions and the truncated single-particle
// operator matrices from which the window observables are assembled as
// Kronecker products:  N_w -> (A_x, A_y, I),  P_w -> (A_x, A_y, p),
// Q_w -> (A_x, A_y, q) / N_e.
//
// Convention for the momentum matrix: p = i (a^dag - a)/sqrt(2) is purely
// imaginary, so p_z stores the real coefficients of i.  The stored matrix
// is antisymmetric; every trace with an even number of p factors picks up
// a factor (-1) per pair of p's, applied by the caller.

#include <Eigen/Dense>

#include "stochcool/errors.hpp"

namespace stochcool {

struct BasisCutoff {
  int n_max = 0;  // highest retained 1D quantum number, inclusive
  int dim() const { return n_max + 1; }
  void validate() const {
    if (n_max < 0) throw std::invalid_argument("BasisCutoff: n_max must be >= 0");
  }
};

// Rectangular feedback region in the xy-plane; lengths in dq0 units.
// A zero half-width denotes the empty window; `full` selects the whole
// plane (overlap matrices become exact identities).
struct WindowRegion {
  double x_center = 0.0;
  double y_center = 0.0;
  double x_half_width = 0.5;
  double y_half_width = 0.5;
  bool full = false;

  bool empty() const { return !full && (x_half_width <= 0.0 || y_half_width <= 0.0); }
  void validate() const {
    if (x_half_width < 0.0 || y_half_width < 0.0)
      throw std::invalid_argument("WindowRegion: half-widths must be >= 0");
  }

  static WindowRegion centered(double half_width_dq0) {
    return WindowRegion{0.0, 0.0, half_width_dq0, half_width_dq0, false};
  }
  static WindowRegion shifted(double x_offset_dq0, double half_width_dq0) {
    return WindowRegion{x_offset_dq0, 0.0, half_width_dq0, half_width_dq0, false};
  }
  static WindowRegion whole_plane() { return WindowRegion{0, 0, 0, 0, true}; }
};

// Normalized 1D eigenfunction psi_n(x), trap units.  Upward three-term
// recurrence with a base-2 scaling guard, stable for n up to a few
// thousand and |x| well beyond the classical turning point.
double eval_eigenfunction(int n, double x);

// All of psi_0..psi_n_max at one point, one recurrence pass.
Eigen::VectorXd eval_eigenfunctions(int n_max, double x);

struct QuadratureOptions {
  double rel_tol = 1e-10;
  int points_per_panel = 32;
  int max_panels = 1 << 14;
};

// A_mn = int_a^b psi_m psi_n dx over [a, b] in trap units, symmetric.
// Adaptive composite Gauss-Legendre; throws numeric_error with
// diagnostics if the refinement stalls above rel_tol.
Eigen::MatrixXd window_overlap_matrix(double a, double b, BasisCutoff cutoff,
                                      const QuadratureOptions& opts = {});

Eigen::MatrixXd momentum_matrix(BasisCutoff cutoff);  // real coefficients of i
Eigen::MatrixXd position_matrix(BasisCutoff cutoff);
Eigen::VectorXd level_energies(BasisCutoff cutoff);   // E_n = n + 1/2

struct OperatorFactors {
  Eigen::MatrixXd A_x, A_y;  // window overlap per transverse axis
  Eigen::MatrixXd p_z;       // momentum, stored as real coefficients of i
  Eigen::MatrixXd q_z;       // position
  Eigen::VectorXd energies_1d;
  BasisCutoff cutoff;
  WindowRegion window;
};

// Window intervals in trap units (dq0 = 1/sqrt(2)) and the operator set.
OperatorFactors make_operator_factors(const WindowRegion& window, BasisCutoff cutoff,
                                      const QuadratureOptions& opts = {});

// Top-left blocks of an existing factor set; overlap entries do not
// depend on the cutoff, so slicing is exact.
OperatorFactors slice_factors(const OperatorFactors& factors, BasisCutoff smaller);

}  // namespace stochcool
