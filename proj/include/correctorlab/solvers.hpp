#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include "correctorlab/errors.hpp"
#include "correctorlab/grid.hpp"

namespace clab {

struct EllipticOptions {
  double tol = 1e-10;
  long max_iter = 0;  // 0: use 10 * node_count
};

namespace detail {

/// u -> (1/T) u - div(a grad u), with a a matrix field.
inline GridField elliptic_apply(const GridField& a, double T, const GridField& u) {
  const TorusGrid& g = u.grid;
  GridField gu = gradient(u);
  GridField agu = GridField::vector(g);
  const std::size_t n = g.node_count();
  for (std::size_t i = 0; i < n; ++i) {
    for (int r = 0; r < g.d; ++r) {
      double s = 0.0;
      for (int c = 0; c < g.d; ++c) s += a.mat(r, c, i) * gu.at(c, i);
      agu.at(r, i) = s;
    }
  }
  GridField out = divergence(agu);
  out *= -1.0;
  if (!std::isinf(T)) {
    const double inv_t = 1.0 / T;
    for (std::size_t i = 0; i < n; ++i) out.at(0, i) += inv_t * u.at(0, i);
  }
  return out;
}

/// Constant-coefficient inverse (1/T - abar Laplacian)^{-1}, used as the
/// Krylov preconditioner; for T = infinity the kernel modes are projected out.
class SpectralPreconditioner {
 public:
  SpectralPreconditioner(const TorusGrid& g, double T, double abar)
      : grid_(g), mult_(laplacian_multipliers(g)) {
    const bool massless = std::isinf(T);
    const double inv_t = massless ? 0.0 : 1.0 / T;
    for (double& m : mult_) {
      m = (massless && m == 0.0) ? 0.0 : 1.0 / (inv_t + abar * m);
    }
  }

  GridField apply(const GridField& r) const {
    GridField out = GridField::scalar(grid_);
    auto modes = spectral::to_modes(r, 0);
    for (std::size_t i = 0; i < modes.size(); ++i) modes[i] *= mult_[i];
    spectral::from_modes(modes, out, 0);
    return out;
  }

 private:
  TorusGrid grid_;
  std::vector<double> mult_;
};

/// One BiCGStab sweep for op(x) = b starting from zero; stops once the
/// recursive residual drops below tol_abs or the budget runs out.
inline GridField bicgstab_sweep(const GridField& a, double T, const GridField& b,
                                const SpectralPreconditioner& precond, double tol_abs,
                                long budget, long& used) {
  GridField x = GridField::scalar(b.grid);
  GridField r = b;
  GridField r_hat = r;
  GridField v = GridField::scalar(b.grid);
  GridField p = GridField::scalar(b.grid);
  double rho = 1.0, alpha = 1.0, omega = 1.0;
  for (used = 0; used < budget; ++used) {
    const double rho_new = inner_l2(r_hat, r);
    if (rho_new == 0.0) return x;
    if (used == 0) {
      p = r;
    } else {
      const double beta = (rho_new / rho) * (alpha / omega);
      for (std::size_t i = 0; i < p.values.size(); ++i)
        p.values[i] = r.values[i] + beta * (p.values[i] - omega * v.values[i]);
    }
    rho = rho_new;
    GridField p_hat = precond.apply(p);
    v = elliptic_apply(a, T, p_hat);
    const double rhv = inner_l2(r_hat, v);
    if (rhv == 0.0) return x;
    alpha = rho / rhv;
    GridField s = r;
    for (std::size_t i = 0; i < s.values.size(); ++i) s.values[i] -= alpha * v.values[i];
    if (norm_l2(s) <= tol_abs) {
      for (std::size_t i = 0; i < x.values.size(); ++i) x.values[i] += alpha * p_hat.values[i];
      return x;
    }
    GridField s_hat = precond.apply(s);
    GridField t = elliptic_apply(a, T, s_hat);
    const double tt = inner_l2(t, t);
    if (tt == 0.0) return x;
    omega = inner_l2(t, s) / tt;
    for (std::size_t i = 0; i < x.values.size(); ++i)
      x.values[i] += alpha * p_hat.values[i] + omega * s_hat.values[i];
    for (std::size_t i = 0; i < r.values.size(); ++i)
      r.values[i] = s.values[i] - omega * t.values[i];
    if (norm_l2(r) <= tol_abs) return x;
    if (omega == 0.0) return x;
  }
  return x;
}

}  // namespace detail

/// Solve (1/T) u - div(a grad u) = div(g) + (1/T) f with a preconditioned
/// BiCGStab iteration (valid for nonsymmetric a). For T = infinity the
/// equation is solved on mean-zero fields and f is ignored. The result
/// satisfies ||rhs - op(u)||_2 <= tol * ||rhs||_2, checked against an
/// independently recomputed residual.
inline GridField elliptic_solve(const GridField& a, double T, const GridField& g_field,
                                const GridField& f, const EllipticOptions& opts = {}) {
  const TorusGrid& grid = a.grid;
  const bool massless = std::isinf(T);

  GridField b = divergence(g_field);
  if (!massless && f.components == 1 && !f.values.empty()) {
    const double inv_t = 1.0 / T;
    for (std::size_t i = 0; i < b.node_count(); ++i) b.at(0, i) += inv_t * f.at(0, i);
  }

  const double norm_b = norm_l2(b);
  GridField x = GridField::scalar(grid);
  if (norm_b == 0.0) return x;

  double abar = 0.0;
  for (std::size_t i = 0; i < grid.node_count(); ++i) {
    double tr = 0.0;
    for (int r = 0; r < grid.d; ++r) tr += a.mat(r, r, i);
    abar += tr / grid.d;
  }
  abar /= static_cast<double>(grid.node_count());
  if (!(abar > 0.0)) abar = 1.0;
  const detail::SpectralPreconditioner precond(grid, T, abar);

  const long cap = opts.max_iter > 0 ? opts.max_iter
                                     : 10 * static_cast<long>(grid.node_count());
  const double tol_abs = opts.tol * norm_b;

  long spent = 0;
  GridField r = b;
  double res = norm_b;
  // Restarted sweeps on the residual system guard against drift of the
  // recursive residual at tight tolerances.
  for (int sweep = 0; sweep < 4 && spent < cap; ++sweep) {
    long used = 0;
    GridField dx = detail::bicgstab_sweep(a, T, r, precond, 0.25 * tol_abs, cap - spent, used);
    spent += used + 1;
    x += dx;
    r = b - detail::elliptic_apply(a, T, x);
    res = norm_l2(r);
    if (res <= tol_abs) return x;
  }
  throw NoConvergence(spent, res / norm_b);
}

}  // namespace clab
