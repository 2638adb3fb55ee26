#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "correctorlab/corrector.hpp"
#include "correctorlab/errors.hpp"
#include "correctorlab/io.hpp"
#include "correctorlab/partitions.hpp"

namespace clab {

/// Ordered unit directions v_1, ..., v_L spanning the symmetric tensor
/// B = v_1 ⊙ ... ⊙ v_L a linearized corrector differentiates along.
struct DirectionSet {
  std::vector<Vecd> vectors;

  explicit DirectionSet(std::vector<Vecd> vs, int d) : vectors(std::move(vs)) {
    for (const Vecd& v : vectors)
      if (std::fabs(norm(v, d) - 1.0) > 1e-12) throw Error("directions must be unit vectors");
  }

  int order() const { return static_cast<int>(vectors.size()); }

  /// Normalize arbitrary vectors; returns the set and the product of lengths.
  static std::pair<DirectionSet, double> normalized(const std::vector<Vecd>& raw, int d) {
    std::vector<Vecd> unit;
    double scale = 1.0;
    for (const Vecd& w : raw) {
      const double len = norm(w, d);
      if (!(len > 0.0)) throw Error("direction vector must be nonzero");
      Vecd u{0.0, 0.0, 0.0};
      for (int i = 0; i < d; ++i) u[i] = w[i] / len;
      unit.push_back(u);
      scale *= len;
    }
    return {DirectionSet(std::move(unit), d), scale};
  }
};

/// One solved linearized corrector (subset S of direction slots).
struct LinearizedCorrector {
  GridField phi;
  GridField grad_phi;
  GridField flux;
  double residual = 0.0;
};

inline std::string subset_name(std::uint32_t mask) {
  std::string s = "S";
  bool first = true;
  for (int b = 0; b < 32; ++b) {
    if (mask & (1u << b)) {
      if (!first) s += '-';
      s += std::to_string(b + 1);
      first = false;
    }
  }
  return s;
}

/// Cache of solved correctors for one sample: the nonlinear base plus the
/// linearized corrector of every nonempty subset of the direction slots.
/// Built single-writer, immutable afterwards; closed downward by construction.
class CorrectorFamily {
 public:
  CorrectorFamily(ParameterField omega, ModelPtr model, CorrectorState base,
                  DirectionSet directions, double T, NewtonOptions opts)
      : omega_(std::move(omega)), model_(std::move(model)), base_(std::move(base)),
        directions_(std::move(directions)), T_(T), opts_(opts) {}

  const ParameterField& omega() const { return omega_; }
  const OperatorModel& model() const { return *model_; }
  const CorrectorState& base() const { return base_; }
  const DirectionSet& directions() const { return directions_; }
  double mass() const { return T_; }
  const NewtonOptions& options() const { return opts_; }
  std::uint32_t full_mask() const {
    return directions_.vectors.empty()
               ? 0u
               : (directions_.vectors.size() >= 32 ? ~0u
                                                   : (1u << directions_.vectors.size()) - 1u);
  }

  bool has(std::uint32_t mask) const { return entries_.count(mask) != 0; }

  const LinearizedCorrector& entry(std::uint32_t mask) const {
    auto it = entries_.find(mask);
    if (it == entries_.end()) throw MissingSubcorrector(subset_name(mask));
    return it->second;
  }

  /// Faa di Bruno right-hand side before the outer divergence:
  /// G_S = sum over proper partitions Pi of S of
  ///       d_xi^{|Pi|} A(omega, xi + grad phi)[ (x)_{pi in Pi} w_pi ],
  /// with w_pi = 1_{|pi|=1} v_pi + grad phi_pi.
  GridField assemble_rhs(std::uint32_t mask) const {
    const TorusGrid& g = omega_.grid;
    GridField rhs = GridField::vector(g);
    const auto parts = partitions_of_mask(mask, /*proper_only=*/true);
    if (parts.empty()) return rhs;

    for (const auto& blocks : parts)
      for (std::uint32_t bm : blocks)
        if (!has(bm)) throw MissingSubcorrector(subset_name(bm));

    const std::size_t n = g.node_count();
    std::vector<Vecd> dirs;
    for (std::size_t i = 0; i < n; ++i) {
      Vecd arg = base_.xi;
      for (int a = 0; a < g.d; ++a) arg[a] += base_.grad_phi.at(a, i);
      const Vecd w = omega_.omega_at(i);
      Vecd total{0.0, 0.0, 0.0};
      for (const auto& blocks : parts) {
        dirs.clear();
        for (std::uint32_t bm : blocks) {
          const LinearizedCorrector& sub = entry(bm);
          Vecd wv{0.0, 0.0, 0.0};
          for (int a = 0; a < g.d; ++a) wv[a] = sub.grad_phi.at(a, i);
          if (std::popcount(bm) == 1) {
            const int slot = std::countr_zero(bm);
            for (int a = 0; a < g.d; ++a) wv[a] += directions_.vectors[static_cast<std::size_t>(slot)][a];
          }
          dirs.push_back(wv);
        }
        const Vecd term = model_->d_xi(w, arg, static_cast<int>(dirs.size()),
                                       std::span<const Vecd>(dirs.data(), dirs.size()));
        for (int a = 0; a < g.d; ++a) total[a] += term[a];
      }
      for (int a = 0; a < g.d; ++a) rhs.at(a, i) = total[a];
    }
    return rhs;
  }

  /// Solve the linearized corrector for subset `mask` and cache it together
  /// with its flux q_S = a (1_{|S|=1} v_S + grad phi_S) + G_S.
  const LinearizedCorrector& solve_linearized(std::uint32_t mask) {
    if (auto it = entries_.find(mask); it != entries_.end()) return it->second;
    const TorusGrid& g = omega_.grid;
    const bool singleton = std::popcount(mask) == 1;

    GridField big_g = assemble_rhs(mask);
    GridField g_total = big_g;
    if (singleton) {
      const int slot = std::countr_zero(mask);
      const Vecd& v = directions_.vectors[static_cast<std::size_t>(slot)];
      const std::size_t n = g.node_count();
      for (std::size_t i = 0; i < n; ++i) {
        for (int r = 0; r < g.d; ++r) {
          double s = 0.0;
          for (int c = 0; c < g.d; ++c) s += base_.lin_coeff.mat(r, c, i) * v[c];
          g_total.at(r, i) += s;
        }
      }
    }

    LinearizedCorrector lin;
    lin.phi = elliptic_solve(base_.lin_coeff, T_, g_total, GridField(), opts_.elliptic());
    lin.grad_phi = gradient(lin.phi);

    // q_S = a (1_{|S|=1} v_S + grad phi_S) + G_S
    lin.flux = std::move(big_g);
    const std::size_t n = g.node_count();
    for (std::size_t i = 0; i < n; ++i) {
      Vecd w{0.0, 0.0, 0.0};
      for (int a = 0; a < g.d; ++a) w[a] = lin.grad_phi.at(a, i);
      if (singleton) {
        const int slot = std::countr_zero(mask);
        for (int a = 0; a < g.d; ++a) w[a] += directions_.vectors[static_cast<std::size_t>(slot)][a];
      }
      for (int r = 0; r < g.d; ++r) {
        double s = 0.0;
        for (int c = 0; c < g.d; ++c) s += base_.lin_coeff.mat(r, c, i) * w[c];
        lin.flux.at(r, i) += s;
      }
    }

    // Residual certificate (1/T) phi_S - div q_S, relative to the rhs scale.
    {
      GridField r = divergence(lin.flux);
      r *= -1.0;
      if (!std::isinf(T_)) {
        const double inv_t = 1.0 / T_;
        for (std::size_t i = 0; i < r.node_count(); ++i) r.at(0, i) += inv_t * lin.phi.at(0, i);
      }
      GridField b = divergence(g_total);
      lin.residual = norm_l2(r) / std::max(norm_l2(b), std::numeric_limits<double>::min());
    }

    auto [it, inserted] = entries_.emplace(mask, std::move(lin));
    return it->second;
  }

  /// Solve every nonempty subset in ascending cardinality order.
  void solve_all() {
    const std::uint32_t full = full_mask();
    std::vector<std::uint32_t> masks;
    for (std::uint32_t m = 1; m <= full && full != 0; ++m)
      if ((m & full) == m) masks.push_back(m);
    std::stable_sort(masks.begin(), masks.end(), [](std::uint32_t a, std::uint32_t b) {
      return std::popcount(a) < std::popcount(b);
    });
    for (std::uint32_t m : masks) solve_linearized(m);
  }

 private:
  ParameterField omega_;
  ModelPtr model_;
  CorrectorState base_;
  DirectionSet directions_;
  double T_;
  NewtonOptions opts_;
  std::map<std::uint32_t, LinearizedCorrector> entries_;
};

/// Solve the nonlinear base problem and wrap it in a family.
inline CorrectorFamily make_family(const ParameterField& omega, ModelPtr model, const Vecd& xi,
                                   double T, DirectionSet directions,
                                   const NewtonOptions& opts = {}) {
  if (model->max_order() < directions.order() + 1)
    throw OrderUnavailable(directions.order() + 1);
  CorrectorState base = solve_nonlinear(omega, *model, xi, T, opts);
  return CorrectorFamily(omega, std::move(model), std::move(base), std::move(directions), T, opts);
}

// ---------------------------------------------------------------------------
// Flux correctors sigma (skew potential) and psi (massive remainder), and the
// decomposition identity q - <q> = div sigma + (1/T) psi they certify.
// ---------------------------------------------------------------------------

/// Solve (1/T) sigma_kl - Lap sigma_kl = d_l q_k - d_k q_l; exactly
/// antisymmetric by construction.
inline GridField solve_sigma(const GridField& q, double T) {
  const TorusGrid& g = q.grid;
  GridField sigma = GridField::matrix(g);
  if (g.d == 1) return sigma;  // no off-diagonal pairs
  const auto kt = spectral::wavenumbers(g);

  // Spectral derivatives d_a q_b for all components.
  std::vector<std::vector<std::complex<double>>> modes(static_cast<std::size_t>(g.d));
  for (int b = 0; b < g.d; ++b) modes[static_cast<std::size_t>(b)] = spectral::to_modes(q, b);

  for (int k = 0; k < g.d; ++k) {
    for (int l = k + 1; l < g.d; ++l) {
      GridField rhs = GridField::scalar(g);
      std::vector<std::complex<double>> acc(g.node_count());
      spectral::for_each_mode(g, [&](std::size_t i, const std::array<int, 3>& idx) {
        const double kl = kt[static_cast<std::size_t>(idx[l])];
        const double kk = kt[static_cast<std::size_t>(idx[k])];
        const std::complex<double> qk = modes[static_cast<std::size_t>(k)][i];
        const std::complex<double> ql = modes[static_cast<std::size_t>(l)][i];
        // i*kl*qk - i*kk*ql
        acc[i] = std::complex<double>(-kl * qk.imag() + kk * ql.imag(),
                                      kl * qk.real() - kk * ql.real());
      });
      spectral::from_modes(acc, rhs, 0);
      GridField skl = helmholtz_solve(T, rhs);
      const std::size_t n = g.node_count();
      for (std::size_t i = 0; i < n; ++i) {
        sigma.mat(k, l, i) = skl.at(0, i);
        sigma.mat(l, k, i) = -skl.at(0, i);
      }
    }
  }
  return sigma;
}

/// Divergence pairing matching the sign convention of solve_sigma:
/// out_k = sum_l d_l sigma_{lk}.
inline GridField skew_divergence(const GridField& sigma) {
  const TorusGrid& g = sigma.grid;
  GridField out = GridField::vector(g);
  const auto kt = spectral::wavenumbers(g);
  for (int k = 0; k < g.d; ++k) {
    std::vector<std::complex<double>> acc(g.node_count(), {0.0, 0.0});
    for (int l = 0; l < g.d; ++l) {
      if (l == k) continue;
      auto modes = spectral::to_modes(sigma, l * g.d + k);
      spectral::for_each_mode(g, [&](std::size_t i, const std::array<int, 3>& idx) {
        const double kl = kt[static_cast<std::size_t>(idx[l])];
        acc[i] += std::complex<double>(-kl * modes[i].imag(), kl * modes[i].real());
      });
    }
    spectral::from_modes(acc, out, k);
  }
  return out;
}

/// Solve (1/T) psi - Lap psi = q - <q> - grad phi (finite T only; for
/// T = infinity the identity needs no psi).
inline GridField solve_psi(const GridField& q, const GridField& grad_phi, double T) {
  if (std::isinf(T)) throw Error("psi is not formed for T = infinity");
  GridField rhs = q;
  for (int c = 0; c < q.components; ++c) {
    const double mean = q.component_mean(c);
    double* p = rhs.component(c);
    const double* gp = grad_phi.component(c);
    for (std::size_t i = 0; i < q.node_count(); ++i) p[i] -= mean + gp[i];
  }
  return helmholtz_solve(T, rhs);
}

/// Measured defect of q - <q> = div sigma + (1/T) psi, relative to ||q - <q>||.
inline double helmholtz_residual(const GridField& q, const GridField& sigma,
                                 const GridField* psi, double T) {
  GridField lhs = q;
  for (int c = 0; c < q.components; ++c) {
    const double mean = q.component_mean(c);
    double* p = lhs.component(c);
    for (std::size_t i = 0; i < q.node_count(); ++i) p[i] -= mean;
  }
  const double scale = norm_l2(lhs);
  GridField rhs = skew_divergence(sigma);
  if (!std::isinf(T)) {
    if (psi == nullptr) throw Error("finite-mass decomposition needs psi");
    const double inv_t = 1.0 / T;
    for (std::size_t i = 0; i < rhs.values.size(); ++i) rhs.values[i] += inv_t * psi->values[i];
  }
  lhs -= rhs;
  return norm_l2(lhs) / std::max(scale, std::numeric_limits<double>::min());
}

// ---------------------------------------------------------------------------
// First-order corrector of the dual linearized operator (transposed
// coefficient field).
// ---------------------------------------------------------------------------

struct DualCorrector {
  GridField phi_star;
  GridField grad_phi_star;
  GridField q_star;
  double residual = 0.0;
};

/// Solve (1/T) phi* - div a*(e + grad phi*) = 0 with a* the node-wise
/// transpose of the family's linearized coefficient field.
inline DualCorrector solve_dual_first_order(const CorrectorFamily& family, const Vecd& e,
                                            double tol) {
  const TorusGrid& g = family.omega().grid;
  const GridField& a = family.base().lin_coeff;
  GridField a_star = a;
  const std::size_t n = g.node_count();
  for (std::size_t i = 0; i < n; ++i)
    for (int r = 0; r < g.d; ++r)
      for (int c = 0; c < g.d; ++c) a_star.mat(r, c, i) = a.mat(c, r, i);

  GridField g_field = GridField::vector(g);
  for (std::size_t i = 0; i < n; ++i) {
    for (int r = 0; r < g.d; ++r) {
      double s = 0.0;
      for (int c = 0; c < g.d; ++c) s += a_star.mat(r, c, i) * e[c];
      g_field.at(r, i) = s;
    }
  }

  EllipticOptions eopts = family.options().elliptic();
  eopts.tol = tol;
  DualCorrector dual;
  dual.phi_star = elliptic_solve(a_star, family.mass(), g_field, GridField(), eopts);
  dual.grad_phi_star = gradient(dual.phi_star);
  dual.q_star = GridField::vector(g);
  for (std::size_t i = 0; i < n; ++i) {
    for (int r = 0; r < g.d; ++r) {
      double s = 0.0;
      for (int c = 0; c < g.d; ++c)
        s += a_star.mat(r, c, i) * (e[c] + dual.grad_phi_star.at(c, i));
      dual.q_star.at(r, i) = s;
    }
  }
  {
    GridField r = divergence(dual.q_star);
    r *= -1.0;
    if (!std::isinf(family.mass())) {
      const double inv_t = 1.0 / family.mass();
      for (std::size_t i = 0; i < r.node_count(); ++i)
        r.at(0, i) += inv_t * dual.phi_star.at(0, i);
    }
    GridField b = divergence(g_field);
    dual.residual = norm_l2(r) / std::max(norm_l2(b), std::numeric_limits<double>::min());
  }
  return dual;
}

// ---------------------------------------------------------------------------
// Persistence: a family directory holds omega plus per-subset fields and a
// manifest with the residual certificates.
// ---------------------------------------------------------------------------

inline void save_family(const CorrectorFamily& family, const std::filesystem::path& dir,
                        bool with_flux_correctors = false) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_fld(family.omega().omega, dir / "omega.fld");
  write_fld(family.base().phi, dir / "phi_base.fld");
  write_fld(family.base().flux, dir / "flux_base.fld");

  nlohmann::json manifest;
  manifest["schema"] = 1;
  manifest["T"] = std::isinf(family.mass()) ? nlohmann::json("inf") : nlohmann::json(family.mass());
  manifest["xi"] = std::vector<double>(family.base().xi.begin(),
                                       family.base().xi.begin() + family.omega().grid.d);
  manifest["seed"] = family.omega().seed;
  manifest["newton_iters"] = family.base().newton_iters;
  manifest["base_residual"] = family.base().residual;
  nlohmann::json dirs_json = nlohmann::json::array();
  for (const Vecd& v : family.directions().vectors)
    dirs_json.push_back(std::vector<double>(v.begin(), v.begin() + family.omega().grid.d));
  manifest["directions"] = dirs_json;

  nlohmann::json subsets = nlohmann::json::object();
  const std::uint32_t full = family.full_mask();
  for (std::uint32_t m = 1; m <= full && full != 0; ++m) {
    if ((m & full) != m || !family.has(m)) continue;
    const auto& lin = family.entry(m);
    const std::string tag = subset_name(m);
    write_fld(lin.phi, dir / ("phi_" + tag + ".fld"));
    write_fld(lin.flux, dir / ("flux_" + tag + ".fld"));
    nlohmann::json entry;
    entry["residual"] = lin.residual;
    entry["phi_l2"] = norm_l2(lin.phi);
    entry["grad_phi_l2"] = norm_l2(lin.grad_phi);
    if (with_flux_correctors) {
      GridField sigma = solve_sigma(lin.flux, family.mass());
      write_fld(sigma, dir / ("sigma_" + tag + ".fld"));
      if (!std::isinf(family.mass())) {
        GridField psi = solve_psi(lin.flux, lin.grad_phi, family.mass());
        write_fld(psi, dir / ("psi_" + tag + ".fld"));
        entry["helmholtz_residual"] = helmholtz_residual(lin.flux, sigma, &psi, family.mass());
      } else {
        entry["helmholtz_residual"] = helmholtz_residual(lin.flux, sigma, nullptr, family.mass());
      }
    }
    subsets[tag] = entry;
  }
  manifest["subsets"] = subsets;
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace clab
