#pragma once

// Brute-force validation backend: exact grand-canonical expectation values
// on small truncated Fock spaces by direct state enumeration.  This is the
// authoritative reference for every Wick-formula check; clarity over speed.

#include <Eigen/Dense>
#include <complex>
#include <span>
#include <vector>

#include "stochcool/errors.hpp"
#include "stochcool/oscillator_basis.hpp"

namespace stochcool {

struct ToyMode {
  int nx = 0, ny = 0, nz = 0;
  double energy = 1.5;  // nx + ny + nz + 3/2 in trap units
};

struct ToySystem {
  std::vector<ToyMode> modes;
  std::vector<int> occupancy_cap;  // per mode
  double beta = 1.0;
  double mu = 0.0;  // strictly below every mode energy
  std::size_t state_limit = 10'000'000;

  void validate() const;
  std::size_t state_count() const;
  Eigen::VectorXd occupations() const;  // closed-form Bose factors per mode
};

// Caps chosen per (beta, mu, E) so each per-mode geometric tail is below
// tail_tol; throws capacity-style errors instead of truncating silently.
ToySystem make_toy_system(std::vector<ToyMode> modes, double beta, double mu,
                          double tail_tol = 1e-12, std::size_t state_limit = 10'000'000);

// Kernel matrices of N_w and P_w restricted to the toy mode set, built from
// full per-axis factors.  W is real; P is returned both as the complex
// matrix and as the real coefficients of i.
struct ToyKernels {
  Eigen::MatrixXd W;
  Eigen::MatrixXd Pr;
  Eigen::MatrixXcd P;
};
ToyKernels toy_kernels(const ToySystem& system, const OperatorFactors& factors);

// <B(X1) B(X2) ...> with B(X) = sum_ij X_ij a_i^dag a_j, evaluated by
// applying each bilinear exactly on occupation-number states.  Intermediate
// occupations may exceed the caps; only the thermal sum is truncated, under
// the per-mode tail rule.
std::complex<double> thermal_expectation(const ToySystem& system,
                                         std::span<const Eigen::MatrixXcd> chain);

// Partition function two ways (enumerated and per-mode product); the
// factorization property test compares them.
double partition_function_enumerated(const ToySystem& system);
double partition_function_factorized(const ToySystem& system);

}  // namespace stochcool
