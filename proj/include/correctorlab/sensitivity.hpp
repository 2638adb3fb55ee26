#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "correctorlab/hierarchy.hpp"

namespace clab {

/// Compactly supported smooth perturbation of the parameter field:
/// a bump profile inside a ball, zero outside, sup-norm <= 1.
struct Perturbation {
  GridField delta_omega;  // n channels
  Vecd center{0.0, 0.0, 0.0};
  double radius = 0.0;

  void validate() const {
    const TorusGrid& g = delta_omega.grid;
    if (!(radius > 0.0) || radius > 0.25 * g.box_side)
      throw Error("perturbation radius must be in (0, box_side/4]");
    for (std::size_t i = 0; i < g.node_count(); ++i) {
      double s2 = 0.0;
      for (int c = 0; c < delta_omega.components; ++c)
        s2 += delta_omega.at(c, i) * delta_omega.at(c, i);
      if (s2 > 1.0 + 1e-12) throw Error("perturbation exceeds sup-norm 1");
      if (s2 > 0.0 && !(g.periodic_distance(g.node(i), center) < radius))
        throw Error("perturbation leaks outside its support ball");
    }
  }

  Vecd at(std::size_t node) const {
    Vecd v{0.0, 0.0, 0.0};
    for (int c = 0; c < delta_omega.components && c < 3; ++c) v[c] = delta_omega.at(c, node);
    return v;
  }
};

/// delta_omega(x) = scale * exp(1 - 1/(1 - r^2)) inside the ball (r the
/// normalized distance), acting on channel `channel`; zero outside.
inline Perturbation make_bump_perturbation(const TorusGrid& g, int n_channels, const Vecd& center,
                                           double radius, double scale, int channel = 0) {
  Perturbation p;
  p.delta_omega = GridField::channels(g, n_channels);
  p.center = center;
  p.radius = radius;
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    const double dist = g.periodic_distance(g.node(i), center);
    if (dist < radius) {
      const double r2 = (dist / radius) * (dist / radius);
      p.delta_omega.at(channel, i) = scale * std::exp(1.0 - 1.0 / (1.0 - r2));
    }
  }
  p.validate();
  return p;
}

/// Shifted parameter field omega + t * delta_omega (must stay in the ball).
inline ParameterField perturbed_field(const ParameterField& omega, const Perturbation& pert,
                                      double t) {
  GridField shifted = omega.omega;
  for (std::size_t i = 0; i < shifted.values.size(); ++i)
    shifted.values[i] += t * pert.delta_omega.values[i];
  return ParameterField::from_values(std::move(shifted), omega.seed);
}

/// Memoized Gateaux derivatives delta phi_S of a family's correctors with
/// respect to the parameter field, in direction of one perturbation.
class SensitivitySolver {
 public:
  SensitivitySolver(CorrectorFamily& family, Perturbation pert)
      : family_(family), pert_(std::move(pert)) {
    pert_.validate();
  }

  /// Variation of the nonlinear corrector; the subset case recurses on all
  /// proper subsets. Masks use the family's direction slots; mask 0 is the
  /// nonlinear base corrector.
  const GridField& solve(std::uint32_t mask) {
    if (auto it = cache_.find(mask); it != cache_.end()) return it->second;
    GridField delta_phi = mask == 0 ? solve_base() : solve_subset(mask);
    auto [it, inserted] = cache_.emplace(mask, std::move(delta_phi));
    grad_cache_.emplace(mask, gradient(it->second));
    return it->second;
  }

  const GridField& grad(std::uint32_t mask) {
    solve(mask);
    return grad_cache_.at(mask);
  }

 private:
  /// (1/T) dphi - div(a grad dphi) = div d_omega A(omega, xi + grad phi)[dw].
  GridField solve_base() {
    const TorusGrid& g = family_.omega().grid;
    const CorrectorState& base = family_.base();
    const OperatorModel& model = family_.model();
    GridField rhs = GridField::vector(g);
    for (std::size_t i = 0; i < g.node_count(); ++i) {
      Vecd arg = base.xi;
      for (int a = 0; a < g.d; ++a) arg[a] += base.grad_phi.at(a, i);
      const Vecd term = model.d_omega_d_xi(family_.omega().omega_at(i), arg, 0, pert_.at(i), {});
      for (int a = 0; a < g.d; ++a) rhs.at(a, i) = term[a];
    }
    return elliptic_solve(base.lin_coeff, family_.mass(), rhs, GridField(),
                          family_.options().elliptic());
  }

  /// Five right-hand-side groups obtained by differentiating the linearized
  /// corrector equation in the parameter field: the variation of the
  /// coefficient paired with (1_{|S|=1} v_S + grad phi_S), the two partition
  /// sums with delta omega resp. grad delta phi prepended, and the partition
  /// sum with one block's corrector gradient replaced by its variation.
  GridField solve_subset(std::uint32_t mask) {
    const TorusGrid& g = family_.omega().grid;
    const CorrectorState& base = family_.base();
    const OperatorModel& model = family_.model();

    const GridField& dphi0_grad = grad(0u);  // recursion roots at the base case
    const LinearizedCorrector& own = family_.entry(mask);
    const bool singleton = std::popcount(mask) == 1;
    const auto parts = partitions_of_mask(mask, /*proper_only=*/true);

    // Variations of all proper-subset correctors, resolved before assembly.
    for (const auto& blocks : parts)
      for (std::uint32_t bm : blocks) solve(bm);

    GridField rhs = GridField::vector(g);
    std::vector<Vecd> dirs;
    for (std::size_t i = 0; i < g.node_count(); ++i) {
      Vecd arg = base.xi;
      for (int a = 0; a < g.d; ++a) arg[a] += base.grad_phi.at(a, i);
      const Vecd w_pt = family_.omega().omega_at(i);
      const Vecd dw_pt = pert_.at(i);
      Vecd dphi0_pt{0.0, 0.0, 0.0};
      for (int a = 0; a < g.d; ++a) dphi0_pt[a] = dphi0_grad.at(a, i);

      Vecd total{0.0, 0.0, 0.0};

      // Groups 1-2: variation of the coefficient a = d_xi A applied to
      // u_S = 1_{|S|=1} v_S + grad phi_S.
      Vecd u_s{0.0, 0.0, 0.0};
      for (int a = 0; a < g.d; ++a) u_s[a] = own.grad_phi.at(a, i);
      if (singleton) {
        const int slot = std::countr_zero(mask);
        for (int a = 0; a < g.d; ++a)
          u_s[a] += family_.directions().vectors[static_cast<std::size_t>(slot)][a];
      }
      {
        const Vecd g1 = model.d_omega_d_xi(w_pt, arg, 1, dw_pt,
                                           std::span<const Vecd>(&u_s, 1));
        std::array<Vecd, 2> pair{dphi0_pt, u_s};
        const Vecd g2 = model.d_xi(w_pt, arg, 2, std::span<const Vecd>(pair.data(), 2));
        for (int a = 0; a < g.d; ++a) total[a] += g1[a] + g2[a];
      }

      for (const auto& blocks : parts) {
        dirs.clear();
        for (std::uint32_t bm : blocks) {
          const LinearizedCorrector& sub = family_.entry(bm);
          Vecd wv{0.0, 0.0, 0.0};
          for (int a = 0; a < g.d; ++a) wv[a] = sub.grad_phi.at(a, i);
          if (std::popcount(bm) == 1) {
            const int slot = std::countr_zero(bm);
            for (int a = 0; a < g.d; ++a)
              wv[a] += family_.directions().vectors[static_cast<std::size_t>(slot)][a];
          }
          dirs.push_back(wv);
        }
        const int np = static_cast<int>(dirs.size());

        // Group 3: d_omega d_xi^{|Pi|} A [dw (x) w_pi...]
        const Vecd g3 = model.d_omega_d_xi(w_pt, arg, np, dw_pt,
                                           std::span<const Vecd>(dirs.data(), dirs.size()));
        for (int a = 0; a < g.d; ++a) total[a] += g3[a];

        // Group 4: d_xi^{1+|Pi|} A [grad dphi_base (x) w_pi...]
        dirs.push_back(dphi0_pt);
        const Vecd g4 = model.d_xi(w_pt, arg, np + 1,
                                   std::span<const Vecd>(dirs.data(), dirs.size()));
        for (int a = 0; a < g.d; ++a) total[a] += g4[a];
        dirs.pop_back();

        // Group 5: one block's corrector gradient replaced by its variation.
        for (std::size_t jb = 0; jb < blocks.size(); ++jb) {
          const GridField& dsub = grad_cache_.at(blocks[jb]);
          Vecd saved = dirs[jb];
          Vecd repl{0.0, 0.0, 0.0};
          for (int a = 0; a < g.d; ++a) repl[a] = dsub.at(a, i);
          dirs[jb] = repl;
          const Vecd g5 = model.d_xi(w_pt, arg, np,
                                     std::span<const Vecd>(dirs.data(), dirs.size()));
          for (int a = 0; a < g.d; ++a) total[a] += g5[a];
          dirs[jb] = saved;
        }
      }

      for (int a = 0; a < g.d; ++a) rhs.at(a, i) = total[a];
    }
    return elliptic_solve(base.lin_coeff, family_.mass(), rhs, GridField(),
                          family_.options().elliptic());
  }

  CorrectorFamily& family_;
  Perturbation pert_;
  std::map<std::uint32_t, GridField> cache_;
  std::map<std::uint32_t, GridField> grad_cache_;
};

/// Finite-difference verification of the Gateaux derivative: for each step t,
/// re-solve the family at omega + t * delta_omega and compare the difference
/// quotient against the solved variation.
struct SensitivityCheck {
  std::vector<double> steps;
  std::vector<double> relative_errors;
  double fitted_order = 0.0;
};

inline SensitivityCheck fd_sensitivity_check(const ParameterField& omega, const ModelPtr& model,
                                             const Vecd& xi, double T,
                                             const DirectionSet& dirs, std::uint32_t mask,
                                             const Perturbation& pert,
                                             const std::vector<double>& steps,
                                             const NewtonOptions& opts = {}) {
  CorrectorFamily family = make_family(omega, model, xi, T, dirs, opts);
  family.solve_all();
  SensitivitySolver solver(family, pert);
  const GridField& delta_phi = solver.solve(mask);
  const double delta_norm = norm_l2(delta_phi);

  SensitivityCheck check;
  check.steps = steps;
  const GridField& phi_here =
      mask == 0 ? family.base().phi : family.entry(mask).phi;
  for (double t : steps) {
    const ParameterField shifted = perturbed_field(omega, pert, t);
    CorrectorFamily fam_t = make_family(shifted, model, xi, T, dirs, opts);
    fam_t.solve_all();
    const GridField& phi_t = mask == 0 ? fam_t.base().phi : fam_t.entry(mask).phi;
    GridField diff = phi_t;
    diff -= phi_here;
    diff *= 1.0 / t;
    diff -= delta_phi;
    check.relative_errors.push_back(norm_l2(diff) /
                                    std::max(delta_norm, std::numeric_limits<double>::min()));
  }

  // Log-log slope of error vs t.
  const std::size_t n = steps.size();
  if (n >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double lx = std::log(steps[i]);
      const double ly = std::log(std::max(check.relative_errors[i], 1e-300));
      sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
    }
    const double dn = static_cast<double>(n);
    check.fitted_order = (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
  }
  return check;
}

}  // namespace clab
