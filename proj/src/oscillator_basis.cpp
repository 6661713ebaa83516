#include "stochcool/oscillator_basis.hpp"

#include <cmath>
#include <sstream>
#include <vector>

namespace stochcool {

namespace {

constexpr double kQuarterLogPi = 0.28618247146235004;  // ln(pi)/4

// Scaled pair (value, base-2 exponent) so the recurrence survives the
// deep sub-turning-point region where psi underflows double range.
struct ScaledPair {
  double lo, hi;  // psi_{n-1}, psi_n
  long exp2 = 0;

  void renormalize() {
    const double m = std::max(std::fabs(lo), std::fabs(hi));
    if (m == 0.0) return;
    if (m < 0x1p-512) {
      lo = std::ldexp(lo, 512);
      hi = std::ldexp(hi, 512);
      exp2 -= 512;
    } else if (m > 0x1p512) {
      lo = std::ldexp(lo, -512);
      hi = std::ldexp(hi, -512);
      exp2 += 512;
    }
  }
  double value() const { return std::ldexp(hi, static_cast<int>(exp2)); }
};

ScaledPair ground_pair(double x) {
  // ln psi_0 = -x^2/2 - ln(pi)/4, split into mantissa and power of two.
  const double ln_psi0 = -0.5 * x * x - kQuarterLogPi;
  const double e = std::floor(ln_psi0 / M_LN2);
  ScaledPair p;
  p.exp2 = static_cast<long>(e);
  p.hi = std::exp(ln_psi0 - e * M_LN2);
  p.lo = 0.0;
  return p;
}

void advance(ScaledPair& p, int n, double x) {
  // psi_{n+1} = sqrt(2/(n+1)) x psi_n - sqrt(n/(n+1)) psi_{n-1}
  const double next =
      std::sqrt(2.0 / (n + 1)) * x * p.hi - std::sqrt(double(n) / (n + 1)) * p.lo;
  p.lo = p.hi;
  p.hi = next;
  p.renormalize();
}

// Gauss-Legendre nodes and weights on [-1, 1], Newton iteration on the
// Legendre recurrence.
void gauss_legendre(int m, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.assign(m, 0.0);
  weights.assign(m, 0.0);
  for (int k = 0; k < (m + 1) / 2; ++k) {
    double x = std::cos(M_PI * (k + 0.75) / (m + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= m; ++j) {
        const double p2 = ((2 * j - 1) * x * p1 - (j - 1) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = m * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::fabs(dx) < 1e-15) break;
    }
    nodes[k] = -x;
    nodes[m - 1 - k] = x;
    weights[k] = weights[m - 1 - k] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
}

Eigen::MatrixXd overlap_pass(double a, double b, int n_max, int panels,
                             const std::vector<double>& gl_nodes,
                             const std::vector<double>& gl_weights) {
  const int dim = n_max + 1;
  const int order = static_cast<int>(gl_nodes.size());
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::MatrixXd psi(dim, order);
  Eigen::VectorXd w(order);
  const double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    const double lo = a + p * h;
    for (int j = 0; j < order; ++j) {
      const double x = lo + 0.5 * h * (gl_nodes[j] + 1.0);
      psi.col(j) = eval_eigenfunctions(n_max, x);
      w(j) = 0.5 * h * gl_weights[j];
    }
    acc.noalias() += psi * w.asDiagonal() * psi.transpose();
  }
  return acc;
}

}  // namespace

double eval_eigenfunction(int n, double x) {
  if (n < 0) throw std::invalid_argument("eval_eigenfunction: n must be >= 0");
  ScaledPair p = ground_pair(x);
  if (n == 0) return p.value();
  p.lo = p.hi;
  p.hi = std::sqrt(2.0) * x * p.hi;
  p.renormalize();
  for (int k = 1; k < n; ++k) advance(p, k, x);
  return p.value();
}

Eigen::VectorXd eval_eigenfunctions(int n_max, double x) {
  if (n_max < 0) throw std::invalid_argument("eval_eigenfunctions: n_max must be >= 0");
  Eigen::VectorXd out(n_max + 1);
  ScaledPair p = ground_pair(x);
  out(0) = p.value();
  if (n_max == 0) return out;
  p.lo = p.hi;
  p.hi = std::sqrt(2.0) * x * p.hi;
  p.renormalize();
  out(1) = p.value();
  for (int k = 1; k < n_max; ++k) {
    advance(p, k, x);
    out(k + 1) = p.value();
  }
  return out;
}

Eigen::MatrixXd window_overlap_matrix(double a, double b, BasisCutoff cutoff,
                                      const QuadratureOptions& opts) {
  cutoff.validate();
  if (a > b) throw std::invalid_argument("window_overlap_matrix: requires a <= b");
  const int dim = cutoff.dim();
  if (a == b) return Eigen::MatrixXd::Zero(dim, dim);

  std::vector<double> nodes, weights;
  gauss_legendre(opts.points_per_panel, nodes, weights);

  // Local wavenumber of psi_n is at most sqrt(2 n_max + 1); start with a
  // few panels per ~20 radians of phase and refine by doubling.
  const double k_max = std::sqrt(2.0 * cutoff.n_max + 1.0);
  int panels = std::max(2, static_cast<int>(std::ceil((b - a) * k_max / 20.0)));
  Eigen::MatrixXd prev = overlap_pass(a, b, cutoff.n_max, panels, nodes, weights);
  while (true) {
    if (2 * panels > opts.max_panels) {
      std::ostringstream msg;
      msg << "window_overlap_matrix: quadrature not converged on [" << a << ", " << b
          << "] with n_max=" << cutoff.n_max << " at " << panels
          << " panels (rel_tol=" << opts.rel_tol << ")";
      throw numeric_error(msg.str());
    }
    panels *= 2;
    Eigen::MatrixXd cur = overlap_pass(a, b, cutoff.n_max, panels, nodes, weights);
    const double diff = (cur - prev).cwiseAbs().maxCoeff();
    const double scale = std::max(cur.cwiseAbs().maxCoeff(), 1e-300);
    if (diff <= opts.rel_tol * scale) {
      cur = 0.5 * (cur + cur.transpose()).eval();
      return cur;
    }
    prev = std::move(cur);
  }
}

Eigen::MatrixXd momentum_matrix(BasisCutoff cutoff) {
  cutoff.validate();
  const int dim = cutoff.dim();
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(dim, dim);
  for (int n = 0; n + 1 < dim; ++n) {
    const double v = std::sqrt(0.5 * (n + 1));
    p(n + 1, n) = v;   // coefficient of i in  i sqrt((n+1)/2)
    p(n, n + 1) = -v;  // coefficient of i in -i sqrt((n+1)/2)
  }
  return p;
}

Eigen::MatrixXd position_matrix(BasisCutoff cutoff) {
  cutoff.validate();
  const int dim = cutoff.dim();
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(dim, dim);
  for (int n = 0; n + 1 < dim; ++n) {
    const double v = std::sqrt(0.5 * (n + 1));
    q(n + 1, n) = v;
    q(n, n + 1) = v;
  }
  return q;
}

Eigen::VectorXd level_energies(BasisCutoff cutoff) {
  cutoff.validate();
  Eigen::VectorXd e(cutoff.dim());
  for (int n = 0; n < cutoff.dim(); ++n) e(n) = n + 0.5;
  return e;
}

OperatorFactors make_operator_factors(const WindowRegion& window, BasisCutoff cutoff,
                                      const QuadratureOptions& opts) {
  window.validate();
  cutoff.validate();
  OperatorFactors f;
  f.cutoff = cutoff;
  f.window = window;
  const int dim = cutoff.dim();
  const double dq0 = 1.0 / std::sqrt(2.0);  // trap units
  if (window.full) {
    f.A_x = Eigen::MatrixXd::Identity(dim, dim);
    f.A_y = Eigen::MatrixXd::Identity(dim, dim);
  } else if (window.empty()) {
    f.A_x = Eigen::MatrixXd::Zero(dim, dim);
    f.A_y = Eigen::MatrixXd::Zero(dim, dim);
  } else {
    const double ax = (window.x_center - window.x_half_width) * dq0;
    const double bx = (window.x_center + window.x_half_width) * dq0;
    const double ay = (window.y_center - window.y_half_width) * dq0;
    const double by = (window.y_center + window.y_half_width) * dq0;
    f.A_x = window_overlap_matrix(ax, bx, cutoff, opts);
    if (ax == ay && bx == by)
      f.A_y = f.A_x;
    else
      f.A_y = window_overlap_matrix(ay, by, cutoff, opts);
  }
  f.p_z = momentum_matrix(cutoff);
  f.q_z = position_matrix(cutoff);
  f.energies_1d = level_energies(cutoff);
  return f;
}

OperatorFactors slice_factors(const OperatorFactors& factors, BasisCutoff smaller) {
  smaller.validate();
  if (smaller.n_max > factors.cutoff.n_max)
    throw std::invalid_argument("slice_factors: requested cutoff exceeds source");
  if (smaller.n_max == factors.cutoff.n_max) return factors;
  const int d = smaller.dim();
  OperatorFactors f;
  f.cutoff = smaller;
  f.window = factors.window;
  f.A_x = factors.A_x.topLeftCorner(d, d);
  f.A_y = factors.A_y.topLeftCorner(d, d);
  f.p_z = factors.p_z.topLeftCorner(d, d);
  f.q_z = factors.q_z.topLeftCorner(d, d);
  f.energies_1d = factors.energies_1d.head(d);
  return f;
}

}  // namespace stochcool
