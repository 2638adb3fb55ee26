#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "correctorlab/errors.hpp"
#include "correctorlab/field.hpp"
#include "correctorlab/grid.hpp"
#include "correctorlab/operator.hpp"
#include "correctorlab/solvers.hpp"

namespace clab {

struct NewtonOptions {
  double tol = 1e-10;
  int max_newton = 50;
  long krylov_cap = 0;       // 0: solver default
  double krylov_tol = -1.0;  // < 0: use tol
  bool warn_box = true;

  EllipticOptions elliptic() const {
    return EllipticOptions{krylov_tol < 0.0 ? tol : krylov_tol, krylov_cap};
  }
};

/// Solved massive corrector: phi, its gradient, the flux
/// A(omega, xi + grad phi) and the linearized coefficient field
/// d_xi A(omega, xi + grad phi).
struct CorrectorState {
  Vecd xi{0.0, 0.0, 0.0};
  double T = kInfiniteMass;
  GridField phi;
  GridField grad_phi;
  GridField flux;
  GridField lin_coeff;
  double residual = 0.0;
  double residual_scale = 0.0;
  int newton_iters = 0;
};

namespace detail {

/// Node-wise flux A(omega, xi + grad_phi).
inline GridField eval_flux(const ParameterField& omega, const OperatorModel& model,
                           const Vecd& xi, const GridField& grad_phi) {
  const TorusGrid& g = omega.grid;
  GridField flux = GridField::vector(g);
  const std::size_t n = g.node_count();
  for (std::size_t i = 0; i < n; ++i) {
    Vecd arg = xi;
    for (int a = 0; a < g.d; ++a) arg[a] += grad_phi.at(a, i);
    const Vecd q = model.apply(omega.omega_at(i), arg);
    for (int a = 0; a < g.d; ++a) flux.at(a, i) = q[a];
  }
  return flux;
}

/// Node-wise linearized coefficient d_xi A(omega, xi + grad_phi) as a matrix field.
inline GridField eval_lin_coeff(const ParameterField& omega, const OperatorModel& model,
                                const Vecd& xi, const GridField& grad_phi) {
  const TorusGrid& g = omega.grid;
  GridField coeff = GridField::matrix(g);
  const std::size_t n = g.node_count();
  std::array<Vecd, 3> basis{Vecd{1.0, 0.0, 0.0}, Vecd{0.0, 1.0, 0.0}, Vecd{0.0, 0.0, 1.0}};
  for (std::size_t i = 0; i < n; ++i) {
    Vecd arg = xi;
    for (int a = 0; a < g.d; ++a) arg[a] += grad_phi.at(a, i);
    const Vecd w = omega.omega_at(i);
    for (int col = 0; col < g.d; ++col) {
      const Vecd column = model.d_xi(w, arg, 1, std::span<const Vecd>(&basis[static_cast<std::size_t>(col)], 1));
      for (int row = 0; row < g.d; ++row) coeff.mat(row, col, i) = column[row];
    }
  }
  return coeff;
}

/// Residual field F(phi) = (1/T) phi - div(flux).
inline GridField newton_residual(const GridField& phi, const GridField& flux, double T) {
  GridField r = divergence(flux);
  r *= -1.0;
  if (!std::isinf(T)) {
    const double inv_t = 1.0 / T;
    for (std::size_t i = 0; i < r.node_count(); ++i) r.at(0, i) += inv_t * phi.at(0, i);
  }
  return r;
}

}  // namespace detail

/// Solve (1/T) phi - div(A(omega, xi + grad phi) + forcing) = 0 by damped
/// Newton from phi = 0 (forcing = 0 gives the massive corrector equation;
/// a nonzero forcing turns it into a monotone PDE with divergence-form data).
/// For T = infinity the iterates are kept mean-zero. The residual is reported
/// relative to the initial defect.
inline CorrectorState solve_nonlinear(const ParameterField& omega, const OperatorModel& model,
                                      const Vecd& xi, double T, const NewtonOptions& opts = {},
                                      const GridField* forcing = nullptr) {
  const TorusGrid& g = omega.grid;
  if (model.max_order() < 1) throw Error("model must provide d_xi");

  CorrectorState st;
  st.xi = xi;
  st.T = T;
  st.phi = GridField::scalar(g);
  st.grad_phi = GridField::vector(g);

  const auto with_forcing = [&](GridField flux_only) {
    if (forcing != nullptr) flux_only += *forcing;
    return flux_only;
  };

  GridField flux = detail::eval_flux(omega, model, xi, st.grad_phi);
  GridField res_field = detail::newton_residual(st.phi, with_forcing(flux), T);
  double res = norm_l2(res_field);
  st.residual_scale = std::max(res, std::numeric_limits<double>::min());

  const EllipticOptions eopts = opts.elliptic();
  const bool massless = std::isinf(T);

  int iters = 0;
  while (true) {
    if (iters >= opts.max_newton)
      throw NoConvergence(iters, res / st.residual_scale);
    ++iters;

    GridField a_cur = detail::eval_lin_coeff(omega, model, xi, st.grad_phi);

    // (1/T) delta - div(a_cur grad delta) = -F(phi): representable as
    // rhs = div(flux + forcing) + (1/T)(-phi).
    GridField neg_phi = st.phi;
    neg_phi *= -1.0;
    GridField delta = elliptic_solve(a_cur, T, with_forcing(flux), neg_phi, eopts);

    if (res <= opts.tol * st.residual_scale) {
      // Zero right-hand side: accept the (zero) step and stop.
      break;
    }

    double step = 1.0;
    while (true) {
      GridField candidate = st.phi;
      for (std::size_t i = 0; i < candidate.values.size(); ++i)
        candidate.values[i] += step * delta.values[i];
      if (massless) {
        const double m = candidate.component_mean(0);
        for (double& v : candidate.values) v -= m;
      }
      GridField cand_grad = gradient(candidate);
      GridField cand_flux = detail::eval_flux(omega, model, xi, cand_grad);
      GridField cand_res = detail::newton_residual(candidate, with_forcing(cand_flux), T);
      const double cand_norm = norm_l2(cand_res);
      if (cand_norm <= res) {
        st.phi = std::move(candidate);
        st.grad_phi = std::move(cand_grad);
        flux = std::move(cand_flux);
        res_field = std::move(cand_res);
        res = cand_norm;
        break;
      }
      step *= 0.5;
      if (step < 1e-9) throw LineSearchStall();
    }

    if (res <= opts.tol * st.residual_scale) break;
  }

  st.newton_iters = iters;
  st.residual = res / st.residual_scale;
  st.flux = std::move(flux);
  st.lin_coeff = detail::eval_lin_coeff(omega, model, xi, st.grad_phi);
  return st;
}

/// Independent residual certificate: || (1/T) phi - div(flux) || relative to
/// the state's stored scale, recomputed from scratch.
inline double residual_certificate(const CorrectorState& st) {
  GridField r = detail::newton_residual(st.phi, st.flux, st.T);
  return norm_l2(r) / st.residual_scale;
}

}  // namespace clab
