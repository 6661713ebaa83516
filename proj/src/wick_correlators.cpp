#include "stochcool/wick_correlators.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

namespace stochcool {

namespace {

using Eigen::ArrayXd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kEps = std::numeric_limits<double>::epsilon();

void check_factor_dims(std::span<const TraceFactor> chain, int dim) {
  for (const TraceFactor& f : chain) {
    for (const MatrixXd* m : {f.x, f.y, f.z}) {
      if (m == nullptr) throw std::invalid_argument("trace factor: null kernel matrix");
      if (m->rows() != dim || m->cols() != dim)
        throw std::invalid_argument("trace factor: kernel dimension does not match cutoff");
    }
  }
}

// ---------------------------------------------------------------------
// Series evaluation.  Weights absorb the fugacity: b_i = e^{-beta (i +
// 1/2 - mu/3)}, so a 3-axis product of b^l factors equals z^l e^{-l beta E}
// exactly and no per-term overflow is possible.  The ground mode converges
// slowly (b_0^3 -> 1 near condensation) and is restored exactly through
// rank-one corrections with weight kappa = r0^{L+1} / (1 - r0).
// ---------------------------------------------------------------------

struct SeriesContext {
  int L = 0;
  int Lh = 0;
  MatrixXd U;  // (n+1) x (L+1), U(i, l) = b_i^l
  double kappa_full = 0.0, kappa_half = 0.0;
  double r1 = 0.0;   // slowest non-ground mode ratio e^{beta (mu - 5/2)}
  double rho = 0.0;  // geometric extrapolation ratio r1^{L - Lh}
};

SeriesContext make_series_context(const ThermalEquilibrium& eq, int dim, int L) {
  SeriesContext c;
  c.L = L;
  c.Lh = L / 2;
  VectorXd b(dim);
  for (int i = 0; i < dim; ++i) b(i) = std::exp(-eq.beta * (i + 0.5 - eq.mu / 3.0));
  c.U.resize(dim, L + 1);
  c.U.col(0).setOnes();
  for (int l = 1; l <= L; ++l) c.U.col(l) = c.U.col(l - 1).cwiseProduct(b);
  const double r0 = std::exp(eq.beta * (eq.mu - 1.5));
  c.kappa_full = std::pow(r0, c.L + 1) / (1.0 - r0);
  c.kappa_half = std::pow(r0, c.Lh + 1) / (1.0 - r0);
  c.r1 = std::exp(eq.beta * (eq.mu - 2.5));
  c.rho = std::pow(c.r1, c.L - c.Lh);
  return c;
}

int initial_series_length(double r1, double rel_tol, int cap) {
  if (r1 <= 1e-14) return std::min(16, cap);
  double lt = std::log(0.25 * rel_tol * (1.0 - r1)) / std::log(r1);
  if (!std::isfinite(lt) || lt < 8.0) lt = 8.0;
  const int L = static_cast<int>(std::ceil(lt)) + 32;
  return std::clamp(L, 16, cap);
}

struct Acc {
  double full = 0.0, half = 0.0, abs = 0.0;
};

// Sums of a table over the four range corners (l >= 0 / l >= 1 per index),
// indexed [row_start][col_start], for the full table and the half block.
struct TableSums {
  double full[2][2] = {{0, 0}, {0, 0}};
  double half[2][2] = {{0, 0}, {0, 0}};
  double abs = 0.0;
};

// Reduction of the elementwise product of three tables.
TableSums reduce_product(const MatrixXd& a, const MatrixXd& b, const MatrixXd& cc, int L,
                         int Lh, ArrayXd& scratch) {
  TableSums s;
  for (int col = 0; col <= L; ++col) {
    scratch = a.col(col).head(L + 1).array() * b.col(col).head(L + 1).array() *
              cc.col(col).head(L + 1).array();
    const double all = scratch.sum();
    const double ge1 = all - scratch(0);
    s.full[0][0] += all;
    s.full[1][0] += ge1;
    if (col >= 1) {
      s.full[0][1] += all;
      s.full[1][1] += ge1;
    }
    s.abs += scratch.abs().sum();
    if (col <= Lh) {
      const double hall = scratch.head(Lh + 1).sum();
      const double hge1 = hall - scratch(0);
      s.half[0][0] += hall;
      s.half[1][0] += hge1;
      if (col >= 1) {
        s.half[0][1] += hall;
        s.half[1][1] += hge1;
      }
    }
  }
  return s;
}

int range_start(OccTag tag) { return tag == OccTag::BoseF ? 1 : 0; }

// <0| X |0> for a Kronecker triple.
double ground_bracket(const MatrixXd* const x[3]) {
  return (*x[0])(0, 0) * (*x[1])(0, 0) * (*x[2])(0, 0);
}

// Per-axis vector over l of <0| Xa d_l Xb |0>.
ArrayXd chain1_axis(const SeriesContext& c, const MatrixXd& xa, const MatrixXd& xb) {
  const VectorXd g = xa.row(0).transpose().cwiseProduct(xb.col(0));
  return (c.U.transpose() * g).array();
}

// Per-axis table over (l_alpha, l_beta) of <0| Xa d_{l_alpha} Xmid d_{l_beta} Xb |0>.
MatrixXd chain2_axis(const SeriesContext& c, const MatrixXd& xa, const MatrixXd& xmid,
                     const MatrixXd& xb) {
  const MatrixXd r = c.U.array().colwise() * xa.row(0).transpose().array();
  const MatrixXd cl = c.U.array().colwise() * xb.col(0).array();
  MatrixXd tab(c.L + 1, c.L + 1);
  tab.noalias() = r.transpose() * xmid * cl;
  return tab;
}

struct VecSums {
  double full[2] = {0, 0};
  double half[2] = {0, 0};
};

VecSums reduce_vector(const ArrayXd& v, int L, int Lh) {
  VecSums s;
  s.full[0] = v.head(L + 1).sum();
  s.full[1] = s.full[0] - v(0);
  s.half[0] = v.head(Lh + 1).sum();
  s.half[1] = s.half[0] - v(0);
  return s;
}

// ---- k = 1: exact level sums, no series truncation at all. -----------

double exact_single_trace(const TraceFactor& f, const ThermalEquilibrium& eq) {
  const int dim = eq.cutoff.dim();
  const VectorXd dx = f.x->diagonal(), dy = f.y->diagonal(), dz = f.z->diagonal();
  VectorXd cxy = VectorXd::Zero(2 * dim - 1);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) cxy(i + j) += dx(i) * dy(j);
  VectorXd cxyz = VectorXd::Zero(3 * dim - 2);
  for (int i = 0; i < 2 * dim - 1; ++i)
    for (int j = 0; j < dim; ++j) cxyz(i + j) += cxy(i) * dz(j);
  const double shift = f.tag == OccTag::OnePlusBoseF ? 1.0 : 0.0;
  double total = 0.0;
  for (int m = 0; m < cxyz.size(); ++m)
    total += cxyz(m) * (eq.level_occupation(m) + shift);
  return total;
}

// ---- k = 2 -----------------------------------------------------------

Acc series_k2(const SeriesContext& c, const TraceFactor& f1, const TraceFactor& f2) {
  const MatrixXd* x1[3] = {f1.x, f1.y, f1.z};
  const MatrixXd* x2[3] = {f2.x, f2.y, f2.z};
  const int r1s = range_start(f1.tag), r2s = range_start(f2.tag);

  // Main series term: per-axis tables T(l2, l1) = u_{l2}^T (X1 o X2^T) u_{l1}.
  MatrixXd tab[3];
  const MatrixXd* tp[3];
  for (int a = 0; a < 3; ++a) {
    if (a > 0 && x1[a] == x1[a - 1] && x2[a] == x2[a - 1]) {
      tp[a] = tp[a - 1];
      continue;
    }
    const MatrixXd h = x1[a]->cwiseProduct(x2[a]->transpose());
    tab[a].noalias() = c.U.transpose() * h * c.U;
    tp[a] = &tab[a];
  }
  ArrayXd scratch;
  const TableSums ts = reduce_product(*tp[0], *tp[1], *tp[2], c.L, c.Lh, scratch);

  Acc acc;
  acc.full = ts.full[r2s][r1s];
  acc.half = ts.half[r2s][r1s];
  acc.abs = ts.abs;

  // Ground corrections.  S={1}: kappa <0|X2 D2 X1|0>; S={2}: kappa
  // <0|X1 D1 X2|0>; S={1,2}: kappa^2 <0|X2|0><0|X1|0>.
  ArrayXd v1 = chain1_axis(c, *x2[0], *x1[0]) * chain1_axis(c, *x2[1], *x1[1]) *
               chain1_axis(c, *x2[2], *x1[2]);
  VecSums vs = reduce_vector(v1, c.L, c.Lh);
  acc.full += c.kappa_full * vs.full[r2s];
  acc.half += c.kappa_half * vs.half[r2s];
  acc.abs += std::fabs(c.kappa_full * vs.full[r2s]);

  ArrayXd v2 = chain1_axis(c, *x1[0], *x2[0]) * chain1_axis(c, *x1[1], *x2[1]) *
               chain1_axis(c, *x1[2], *x2[2]);
  vs = reduce_vector(v2, c.L, c.Lh);
  acc.full += c.kappa_full * vs.full[r1s];
  acc.half += c.kappa_half * vs.half[r1s];
  acc.abs += std::fabs(c.kappa_full * vs.full[r1s]);

  const double brackets = ground_bracket(x1) * ground_bracket(x2);
  acc.full += c.kappa_full * c.kappa_full * brackets;
  acc.half += c.kappa_half * c.kappa_half * brackets;
  acc.abs += std::fabs(c.kappa_full * c.kappa_full * brackets);
  return acc;
}

// ---- k = 3, several range sets over shared kernels in one sweep ------

struct K3RangeSet {
  int r1 = 0, r2 = 0, r3 = 0;
};

void series_k3(const SeriesContext& c, const MatrixXd* const x1[3], const MatrixXd* const x2[3],
               const MatrixXd* const x3[3], std::span<const K3RangeSet> sets,
               std::span<Acc> out) {
  const int dim = static_cast<int>(x1[0]->rows());
  bool ident1[3];
  for (int a = 0; a < 3; ++a)
    ident1[a] = x1[a]->isIdentity(0.0);
  const bool share_xy = x1[1] == x1[0] && x2[1] == x2[0] && x3[1] == x3[0];

  MatrixXd b(dim, dim), g(dim, dim);
  MatrixXd tab[3];
  const MatrixXd* tp[3] = {&tab[0], share_xy ? &tab[0] : &tab[1], &tab[2]};
  ArrayXd scratch;

  // Slices over the first series index l1.
  for (int l1 = 0; l1 <= c.L; ++l1) {
    for (int a = 0; a < 3; ++a) {
      if (a == 1 && share_xy) continue;
      if (ident1[a])
        b = c.U.col(l1).asDiagonal() * (*x2[a]);
      else
        b.noalias() = (*x1[a]) * c.U.col(l1).asDiagonal() * (*x2[a]);
      g = b.cwiseProduct(x3[a]->transpose());
      tab[a].noalias() = c.U.transpose() * g * c.U;  // (l3, l2)
    }
    const TableSums ts = reduce_product(*tp[0], *tp[1], *tp[2], c.L, c.Lh, scratch);
    for (std::size_t s = 0; s < sets.size(); ++s) {
      if (l1 < sets[s].r1) continue;
      out[s].full += ts.full[sets[s].r3][sets[s].r2];
      out[s].abs += ts.abs;
      if (l1 <= c.Lh) out[s].half += ts.half[sets[s].r3][sets[s].r2];
    }
  }

  // Ground corrections.  Singles cut the cycle into a two-diagonal chain:
  //   S={1}: kappa <0|X2 D2 X3 D3 X1|0>,  S={2}: kappa <0|X3 D3 X1 D1 X2|0>,
  //   S={3}: kappa <0|X1 D1 X2 D2 X3|0>.
  auto add_single = [&](const MatrixXd* const xa[3], const MatrixXd* const xmid[3],
                        const MatrixXd* const xb[3], auto pick_ranges) {
    const MatrixXd t0 = chain2_axis(c, *xa[0], *xmid[0], *xb[0]);
    const bool same = xa[1] == xa[0] && xmid[1] == xmid[0] && xb[1] == xb[0];
    const MatrixXd t1 = same ? MatrixXd() : chain2_axis(c, *xa[1], *xmid[1], *xb[1]);
    const MatrixXd t2 = chain2_axis(c, *xa[2], *xmid[2], *xb[2]);
    const TableSums ts = reduce_product(t0, same ? t0 : t1, t2, c.L, c.Lh, scratch);
    for (std::size_t s = 0; s < sets.size(); ++s) {
      auto [ra, rb] = pick_ranges(sets[s]);
      out[s].full += c.kappa_full * ts.full[ra][rb];
      out[s].half += c.kappa_half * ts.half[ra][rb];
      out[s].abs += std::fabs(c.kappa_full * ts.full[ra][rb]);
    }
  };
  // chain2_axis tables index (row, col) = (l_alpha, l_beta); TableSums
  // corners are [row_start][col_start] -> pick [r_alpha][r_beta].
  add_single(x2, x3, x1,
             [](const K3RangeSet& r) { return std::pair<int, int>(r.r2, r.r3); });
  add_single(x3, x1, x2,
             [](const K3RangeSet& r) { return std::pair<int, int>(r.r3, r.r1); });
  add_single(x1, x2, x3,
             [](const K3RangeSet& r) { return std::pair<int, int>(r.r1, r.r2); });

  // Pairs:  S={1,2}: kappa^2 <0|X2|0><0|X3 D3 X1|0>;  S={2,3}: kappa^2
  // <0|X3|0><0|X1 D1 X2|0>;  S={1,3}: kappa^2 <0|X1|0><0|X2 D2 X3|0>.
  auto add_pair = [&](const MatrixXd* const xbra[3], const MatrixXd* const xa[3],
                      const MatrixXd* const xb[3], auto pick_range) {
    const double br = ground_bracket(xbra);
    ArrayXd v = chain1_axis(c, *xa[0], *xb[0]) * chain1_axis(c, *xa[1], *xb[1]) *
                chain1_axis(c, *xa[2], *xb[2]);
    const VecSums vs = reduce_vector(v, c.L, c.Lh);
    for (std::size_t s = 0; s < sets.size(); ++s) {
      const int r = pick_range(sets[s]);
      const double k2f = c.kappa_full * c.kappa_full;
      const double k2h = c.kappa_half * c.kappa_half;
      out[s].full += k2f * br * vs.full[r];
      out[s].half += k2h * br * vs.half[r];
      out[s].abs += std::fabs(k2f * br * vs.full[r]);
    }
  };
  add_pair(x2, x3, x1, [](const K3RangeSet& r) { return r.r3; });
  add_pair(x3, x1, x2, [](const K3RangeSet& r) { return r.r1; });
  add_pair(x1, x2, x3, [](const K3RangeSet& r) { return r.r2; });

  // Triple insertion.
  const double triple = ground_bracket(x1) * ground_bracket(x2) * ground_bracket(x3);
  for (std::size_t s = 0; s < sets.size(); ++s) {
    out[s].full += std::pow(c.kappa_full, 3) * triple;
    out[s].half += std::pow(c.kappa_half, 3) * triple;
    out[s].abs += std::fabs(std::pow(c.kappa_full, 3) * triple);
  }
}

// Geometric extrapolation of the gap between the half- and full-length
// sums; the slowest retained decay rate is r1 per unit l.
double extrapolated_error(const Acc& acc, const SeriesContext& c) {
  const double gap = std::fabs(acc.full - acc.half);
  const double safety = c.rho < 1.0 ? 4.0 * c.rho / (1.0 - c.rho) : 1e300;
  return gap * safety + 64.0 * kEps * acc.abs;
}

bool converged(const Acc& acc, const SeriesContext& c, double rel_tol, double* err_out) {
  const double err = extrapolated_error(acc, c);
  *err_out = err;
  return err <= rel_tol * std::fabs(acc.full) + 1024.0 * kEps * acc.abs;
}

// ---- direct strategy: materialized 3D matrices -----------------------

MatrixXd kron3(const MatrixXd& x, const MatrixXd& y, const MatrixXd& z) {
  const int dx = static_cast<int>(x.rows()), dy = static_cast<int>(y.rows()),
            dz = static_cast<int>(z.rows());
  MatrixXd out(dx * dy * dz, dx * dy * dz);
  for (int ix = 0; ix < dx; ++ix)
    for (int iy = 0; iy < dy; ++iy)
      for (int jx = 0; jx < dx; ++jx)
        for (int jy = 0; jy < dy; ++jy)
          out.block((ix * dy + iy) * dz, (jx * dy + jy) * dz, dz, dz) =
              x(ix, jx) * y(iy, jy) * z;
  return out;
}

TraceResult direct_trace(std::span<const TraceFactor> chain, const ThermalEquilibrium& eq,
                         const TraceOptions& opts) {
  const int dim = eq.cutoff.dim();
  if (eq.cutoff.n_max > opts.direct_n_max_limit) {
    std::ostringstream msg;
    msg << "direct strategy requested at n_max=" << eq.cutoff.n_max
        << " above the configured size limit " << opts.direct_n_max_limit;
    throw std::invalid_argument(msg.str());
  }
  const int d3 = dim * dim * dim;
  VectorXd occ(d3);
  for (int ix = 0; ix < dim; ++ix)
    for (int iy = 0; iy < dim; ++iy)
      for (int iz = 0; iz < dim; ++iz)
        occ((ix * dim + iy) * dim + iz) = eq.level_occupation(ix + iy + iz);

  MatrixXd m;
  for (std::size_t cidx = 0; cidx < chain.size(); ++cidx) {
    const TraceFactor& f = chain[cidx];
    MatrixXd k = kron3(*f.x, *f.y, *f.z);
    const VectorXd g =
        f.tag == OccTag::OnePlusBoseF ? (occ.array() + 1.0).matrix() : occ;
    k = k * g.asDiagonal();
    if (cidx == 0)
      m = std::move(k);
    else
      m = (m * k).eval();
  }
  TraceResult res;
  res.value = m.trace();
  res.error_bound = 1e3 * kEps * m.diagonal().cwiseAbs().sum();
  res.strategy_used = TraceStrategy::Direct;
  return res;
}

// Adaptive driver shared by the public entry points.  `run` evaluates all
// requested quantities at a given series length and returns their Accs.
template <typename RunFn>
std::vector<TraceResult> adaptive_series(const ThermalEquilibrium& eq, int dim,
                                         const TraceOptions& opts, std::size_t count,
                                         RunFn run) {
  const double r1 = std::exp(eq.beta * (eq.mu - 2.5));
  int L = initial_series_length(r1, opts.rel_tol, opts.series_cap);
  while (true) {
    SeriesContext c = make_series_context(eq, dim, L);
    std::vector<Acc> accs(count);
    run(c, accs);
    std::vector<TraceResult> results(count);
    bool ok = true;
    for (std::size_t i = 0; i < count; ++i) {
      double err = 0.0;
      ok = converged(accs[i], c, opts.rel_tol, &err) && ok;
      results[i] = {accs[i].full, err, TraceStrategy::Series, L};
    }
    if (ok) return results;
    if (L >= opts.series_cap) {
      std::ostringstream msg;
      msg << "fugacity series not converged at cap L=" << opts.series_cap
          << " (rel_tol=" << opts.rel_tol << ", r1=" << r1
          << "); raise series cap or tolerance";
      throw numeric_error(msg.str());
    }
    L = std::min(2 * L, opts.series_cap);
  }
}

}  // namespace

TraceResult evaluate_trace_product(std::span<const TraceFactor> chain,
                                   const ThermalEquilibrium& eq, const TraceOptions& opts) {
  if (chain.empty()) throw std::invalid_argument("evaluate_trace_product: empty chain");
  const int dim = eq.cutoff.dim();
  check_factor_dims(chain, dim);

  // Single-factor traces touch only kernel diagonals; the level sum is
  // exact at any cutoff regardless of the requested strategy.
  if (chain.size() == 1)
    return {exact_single_trace(chain[0], eq), 0.0, opts.strategy, 0};

  if (opts.strategy == TraceStrategy::Direct) return direct_trace(chain, eq, opts);

  if (chain.size() == 2) {
    auto res = adaptive_series(eq, dim, opts, 1, [&](const SeriesContext& c, std::span<Acc> out) {
      out[0] = series_k2(c, chain[0], chain[1]);
    });
    return res[0];
  }
  if (chain.size() == 3) {
    const MatrixXd* x1[3] = {chain[0].x, chain[0].y, chain[0].z};
    const MatrixXd* x2[3] = {chain[1].x, chain[1].y, chain[1].z};
    const MatrixXd* x3[3] = {chain[2].x, chain[2].y, chain[2].z};
    const K3RangeSet set{range_start(chain[0].tag), range_start(chain[1].tag),
                         range_start(chain[2].tag)};
    auto res = adaptive_series(eq, dim, opts, 1, [&](const SeriesContext& c, std::span<Acc> out) {
      series_k3(c, x1, x2, x3, std::span<const K3RangeSet>(&set, 1), out);
    });
    return res[0];
  }
  throw std::invalid_argument(
      "evaluate_trace_product: series strategy supports up to three factors");
}

double mean_window_number(const ThermalEquilibrium& eq, const OperatorFactors& factors,
                          const CorrelatorOptions& opts) {
  const int dim = eq.cutoff.dim();
  if (factors.cutoff.n_max != eq.cutoff.n_max)
    throw std::invalid_argument("mean_window_number: cutoff mismatch");
  const MatrixXd ident = MatrixXd::Identity(dim, dim);
  const TraceFactor w{&factors.A_x, &factors.A_y, &ident, OccTag::BoseF};
  return evaluate_trace_product(std::span<const TraceFactor>(&w, 1), eq, opts).value;
}

double momentum_second_moment(const ThermalEquilibrium& eq, const OperatorFactors& factors,
                              const CorrelatorOptions& opts) {
  if (factors.cutoff.n_max != eq.cutoff.n_max)
    throw std::invalid_argument("momentum_second_moment: cutoff mismatch");
  if (factors.p_z.diagonal().cwiseAbs().maxCoeff() != 0.0)
    throw std::logic_error("momentum_second_moment: momentum kernel has nonzero diagonal");
  const TraceFactor chain[2] = {
      {&factors.A_x, &factors.A_y, &factors.p_z, OccTag::OnePlusBoseF},
      {&factors.A_x, &factors.A_y, &factors.p_z, OccTag::BoseF}};
  const TraceResult t2 = evaluate_trace_product(chain, eq, opts);
  return -t2.value;  // one factor (-1) per pair of momentum kernels
}

double number_momentum_correlator(const ThermalEquilibrium& eq, const OperatorFactors& factors,
                                  double N_e, const CorrelatorOptions& opts) {
  if (!(N_e > 0.0))
    throw std::domain_error("number_momentum_correlator: requires N_e > 0");
  return compute_correlators(eq, factors, N_e, opts).corr_dNw_Pw2;
}

CorrelatorSet compute_correlators(const ThermalEquilibrium& eq, const OperatorFactors& factors,
                                  double N_e, const CorrelatorOptions& opts) {
  if (factors.cutoff.n_max != eq.cutoff.n_max)
    throw std::invalid_argument("compute_correlators: cutoff mismatch");
  if (!(N_e > 0.0)) throw std::domain_error("compute_correlators: requires N_e > 0");
  const int dim = eq.cutoff.dim();

  CorrelatorSet set;
  set.strategy_used = opts.strategy;
  set.mean_Nw = mean_window_number(eq, factors, opts);

  const MatrixXd ident = MatrixXd::Identity(dim, dim);
  double t2 = 0.0, t3a = 0.0, t3b = 0.0;
  double err_t2 = 0.0, err_t3a = 0.0, err_t3b = 0.0;

  if (opts.strategy == TraceStrategy::Direct) {
    const TraceFactor c2[2] = {{&factors.A_x, &factors.A_y, &factors.p_z, OccTag::OnePlusBoseF},
                               {&factors.A_x, &factors.A_y, &factors.p_z, OccTag::BoseF}};
    const TraceFactor c3a[3] = {{&factors.A_x, &factors.A_y, &ident, OccTag::OnePlusBoseF},
                                {&factors.A_x, &factors.A_y, &factors.p_z, OccTag::OnePlusBoseF},
                                {&factors.A_x, &factors.A_y, &factors.p_z, OccTag::BoseF}};
    const TraceFactor c3b[3] = {{&factors.A_x, &factors.A_y, &ident, OccTag::OnePlusBoseF},
                                {&factors.A_x, &factors.A_y, &factors.p_z, OccTag::BoseF},
                                {&factors.A_x, &factors.A_y, &factors.p_z, OccTag::BoseF}};
    TraceResult r2 = evaluate_trace_product(c2, eq, opts);
    TraceResult r3a = evaluate_trace_product(c3a, eq, opts);
    TraceResult r3b = evaluate_trace_product(c3b, eq, opts);
    t2 = r2.value;
    t3a = r3a.value;
    t3b = r3b.value;
    err_t2 = r2.error_bound;
    err_t3a = r3a.error_bound;
    err_t3b = r3b.error_bound;
  } else {
    // One adaptive pass: the two-factor trace plus both sextic cycles,
    // which share every per-slice table and differ only in index ranges.
    const MatrixXd* xw[3] = {&factors.A_x, &factors.A_y, &ident};
    const MatrixXd* xp[3] = {&factors.A_x, &factors.A_y, &factors.p_z};
    const TraceFactor f2[2] = {{&factors.A_x, &factors.A_y, &factors.p_z, OccTag::OnePlusBoseF},
                               {&factors.A_x, &factors.A_y, &factors.p_z, OccTag::BoseF}};
    const K3RangeSet sets[2] = {{0, 0, 1},   // Tr[W(1+f) P(1+f) P f]
                                {0, 1, 1}};  // Tr[W(1+f) P f P f]
    auto res = adaptive_series(eq, dim, opts, 3,
                               [&](const SeriesContext& c, std::span<Acc> out) {
                                 out[0] = series_k2(c, f2[0], f2[1]);
                                 series_k3(c, xw, xp, xp,
                                           std::span<const K3RangeSet>(sets, 2),
                                           out.subspan(1, 2));
                               });
    t2 = res[0].value;
    t3a = res[1].value;
    t3b = res[2].value;
    err_t2 = res[0].error_bound;
    err_t3a = res[1].error_bound;
    err_t3b = res[2].error_bound;
  }

  set.mean_Pw2 = -t2;
  const double cycle_b = opts.flip_cycle_sign ? t3b : -t3b;
  set.raw_Nw_Pw2 = set.mean_Nw * set.mean_Pw2 - t3a + cycle_b;
  set.corr_dNw_Pw2 = set.raw_Nw_Pw2 - N_e * set.mean_Pw2;
  set.error_estimate =
      err_t2 * (set.mean_Nw + N_e) + err_t3a + err_t3b + 16.0 * kEps * std::fabs(set.raw_Nw_Pw2);
  return set;
}

double ms_mean_number(const VectorXd& f, const MatrixXd& w) {
  return (w.diagonal().array() * f.array()).sum();
}

double ms_momentum_second_moment(const VectorXd& f, const MatrixXd& pr) {
  if (pr.diagonal().cwiseAbs().maxCoeff() != 0.0)
    throw std::logic_error("ms_momentum_second_moment: momentum kernel has nonzero diagonal");
  const VectorXd g = f.array() + 1.0;
  return -(pr * g.asDiagonal() * pr * f.asDiagonal()).trace();
}

double ms_number_momentum_raw(const VectorXd& f, const MatrixXd& w, const MatrixXd& pr,
                              bool flip_cycle_sign) {
  const VectorXd g = f.array() + 1.0;
  const double mean_n = ms_mean_number(f, w);
  const double p2 = ms_momentum_second_moment(f, pr);
  const double c6 = (w * g.asDiagonal() * pr * g.asDiagonal() * pr * f.asDiagonal()).trace();
  const double c5 = (w * g.asDiagonal() * pr * f.asDiagonal() * pr * f.asDiagonal()).trace();
  return mean_n * p2 - c6 + (flip_cycle_sign ? c5 : -c5);
}

}  // namespace stochcool
