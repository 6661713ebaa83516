#include "stochcool/exact_oracle.hpp"

#include <cmath>
#include <cstdint>
#include <sstream>
#include <unordered_map>

namespace stochcool {

namespace {

// Mixed-radix encoding of occupation vectors.  Radix leaves headroom of
// +4 per mode so intermediate states produced by up to three bilinears
// encode without collision.
struct StateCodec {
  std::vector<std::uint64_t> stride;
  std::vector<int> radix;

  explicit StateCodec(const std::vector<int>& caps) {
    stride.resize(caps.size());
    radix.resize(caps.size());
    std::uint64_t s = 1;
    for (std::size_t i = 0; i < caps.size(); ++i) {
      radix[i] = caps[i] + 5;
      stride[i] = s;
      const std::uint64_t next = s * static_cast<std::uint64_t>(radix[i]);
      if (next / static_cast<std::uint64_t>(radix[i]) != s)
        throw numeric_error("exact_oracle: state encoding overflow");
      s = next;
    }
  }
  std::uint64_t encode(const std::vector<int>& n) const {
    std::uint64_t key = 0;
    for (std::size_t i = 0; i < n.size(); ++i)
      key += stride[i] * static_cast<std::uint64_t>(n[i]);
    return key;
  }
};

using Amplitudes = std::unordered_map<std::uint64_t, std::complex<double>>;

}  // namespace

void ToySystem::validate() const {
  if (modes.empty()) throw std::invalid_argument("ToySystem: needs at least one mode");
  if (modes.size() != occupancy_cap.size())
    throw std::invalid_argument("ToySystem: cap list must match mode list");
  if (!(beta > 0.0)) throw std::invalid_argument("ToySystem: beta must be positive");
  for (const ToyMode& m : modes)
    if (!(mu < m.energy))
      throw std::invalid_argument("ToySystem: mu must lie strictly below every mode energy");
  if (state_count() > state_limit) {
    std::ostringstream msg;
    msg << "ToySystem: " << state_count() << " Fock states exceed the configured limit "
        << state_limit;
    throw numeric_error(msg.str());
  }
}

std::size_t ToySystem::state_count() const {
  std::size_t n = 1;
  for (int cap : occupancy_cap) n *= static_cast<std::size_t>(cap) + 1;
  return n;
}

Eigen::VectorXd ToySystem::occupations() const {
  Eigen::VectorXd f(modes.size());
  for (std::size_t i = 0; i < modes.size(); ++i)
    f(i) = 1.0 / std::expm1(beta * (modes[i].energy - mu));
  return f;
}

ToySystem make_toy_system(std::vector<ToyMode> modes, double beta, double mu, double tail_tol,
                          std::size_t state_limit) {
  ToySystem sys;
  for (ToyMode& m : modes) m.energy = m.nx + m.ny + m.nz + 1.5;
  sys.modes = std::move(modes);
  sys.beta = beta;
  sys.mu = mu;
  sys.state_limit = state_limit;
  sys.occupancy_cap.resize(sys.modes.size());
  for (std::size_t i = 0; i < sys.modes.size(); ++i) {
    const double r = std::exp(-beta * (sys.modes[i].energy - mu));
    if (!(r < 1.0))
      throw std::invalid_argument("make_toy_system: mu must lie below every mode energy");
    // Smallest cap with r^{cap+1}/(1-r) < tail_tol.
    const int cap = static_cast<int>(std::ceil(std::log(tail_tol * (1.0 - r)) / std::log(r)));
    sys.occupancy_cap[i] = std::max(cap, 8);
  }
  sys.validate();
  return sys;
}

ToyKernels toy_kernels(const ToySystem& system, const OperatorFactors& factors) {
  const int m = static_cast<int>(system.modes.size());
  for (const ToyMode& mode : system.modes)
    if (mode.nx > factors.cutoff.n_max || mode.ny > factors.cutoff.n_max ||
        mode.nz > factors.cutoff.n_max)
      throw std::invalid_argument("toy_kernels: mode quantum number exceeds factor cutoff");
  ToyKernels k;
  k.W.resize(m, m);
  k.Pr.resize(m, m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      const ToyMode& a = system.modes[i];
      const ToyMode& b = system.modes[j];
      const double axy = factors.A_x(a.nx, b.nx) * factors.A_y(a.ny, b.ny);
      k.W(i, j) = (a.nz == b.nz) ? axy : 0.0;
      k.Pr(i, j) = axy * factors.p_z(a.nz, b.nz);
    }
  }
  k.P = std::complex<double>(0.0, 1.0) * k.Pr;
  return k;
}

namespace {

// B(X) |v> for an amplitude map over occupation states.
Amplitudes apply_bilinear(const Eigen::MatrixXcd& x, const Amplitudes& v,
                          const std::unordered_map<std::uint64_t, std::vector<int>>& decode,
                          std::unordered_map<std::uint64_t, std::vector<int>>& decode_out,
                          const StateCodec& codec) {
  const int m = static_cast<int>(x.rows());
  Amplitudes out;
  for (const auto& [key, amp] : v) {
    const std::vector<int>& n = decode.at(key);
    for (int j = 0; j < m; ++j) {
      if (n[j] == 0) continue;
      for (int i = 0; i < m; ++i) {
        if (x(i, j) == std::complex<double>(0.0, 0.0)) continue;
        std::vector<int> np = n;
        np[j] -= 1;
        const double fac = std::sqrt(double(n[j])) * std::sqrt(double(np[i] + 1));
        np[i] += 1;
        if (np[i] >= codec.radix[i]) throw numeric_error("exact_oracle: radix headroom exceeded");
        const std::uint64_t kk = codec.encode(np);
        out[kk] += x(i, j) * fac * amp;
        decode_out.emplace(kk, std::move(np));
      }
    }
  }
  return out;
}

}  // namespace

std::complex<double> thermal_expectation(const ToySystem& system,
                                         std::span<const Eigen::MatrixXcd> chain) {
  system.validate();
  const int m = static_cast<int>(system.modes.size());
  for (const Eigen::MatrixXcd& x : chain)
    if (x.rows() != m || x.cols() != m)
      throw std::invalid_argument("thermal_expectation: kernel size does not match mode set");

  const StateCodec codec(system.occupancy_cap);
  std::vector<int> n(m, 0);
  std::complex<double> numerator = 0.0;
  double z = 0.0;

  while (true) {
    double log_w = 0.0;
    for (int i = 0; i < m; ++i)
      log_w -= system.beta * n[i] * (system.modes[i].energy - system.mu);
    const double w = std::exp(log_w);
    z += w;

    // <n| X1 X2 ... |n>, applying bilinears right to left.
    std::unordered_map<std::uint64_t, std::vector<int>> decode;
    Amplitudes v;
    const std::uint64_t key0 = codec.encode(n);
    decode.emplace(key0, n);
    v[key0] = 1.0;
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
      std::unordered_map<std::uint64_t, std::vector<int>> decode_next = decode;
      v = apply_bilinear(*it, v, decode, decode_next, codec);
      decode = std::move(decode_next);
    }
    const auto hit = v.find(key0);
    if (hit != v.end()) numerator += w * hit->second;

    // Next occupation vector (mixed-radix increment).
    int k = 0;
    while (k < m && n[k] == system.occupancy_cap[k]) n[k++] = 0;
    if (k == m) break;
    n[k] += 1;
  }
  return numerator / z;
}

double partition_function_enumerated(const ToySystem& system) {
  system.validate();
  const int m = static_cast<int>(system.modes.size());
  std::vector<int> n(m, 0);
  double z = 0.0;
  while (true) {
    double log_w = 0.0;
    for (int i = 0; i < m; ++i)
      log_w -= system.beta * n[i] * (system.modes[i].energy - system.mu);
    z += std::exp(log_w);
    int k = 0;
    while (k < m && n[k] == system.occupancy_cap[k]) n[k++] = 0;
    if (k == m) break;
    n[k] += 1;
  }
  return z;
}

double partition_function_factorized(const ToySystem& system) {
  system.validate();
  double z = 1.0;
  for (std::size_t i = 0; i < system.modes.size(); ++i) {
    const double r = std::exp(-system.beta * (system.modes[i].energy - system.mu));
    z *= (1.0 - std::pow(r, system.occupancy_cap[i] + 1)) / (1.0 - r);
  }
  return z;
}

}  // namespace stochcool
