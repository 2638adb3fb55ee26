#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "correctorlab/hierarchy.hpp"
#include "correctorlab/parallel.hpp"

namespace clab {

/// Monte-Carlo estimate of the homogenized operator (or one of its Gateaux
/// derivatives): ensemble mean of per-sample spatial flux averages.
struct HomogenizedEstimate {
  Vecd xi{0.0, 0.0, 0.0};
  std::vector<Vecd> direction;  // empty: the operator itself
  Vecd value{0.0, 0.0, 0.0};
  Vecd stderr_{0.0, 0.0, 0.0};
  std::size_t samples = 0;
  double T = kInfiniteMass;
  std::vector<std::uint64_t> seeds;
  std::vector<Vecd> per_sample;
  std::vector<double> per_sample_residual;
  std::vector<std::string> failures;
};

namespace detail {

/// Fixed-order aggregation of per-sample values.
inline void aggregate(HomogenizedEstimate& est, int d) {
  const std::size_t n = est.per_sample.size();
  est.samples = n;
  if (n == 0) return;
  Vecd mean{0.0, 0.0, 0.0};
  for (const Vecd& v : est.per_sample)
    for (int i = 0; i < d; ++i) mean[i] += v[i];
  for (int i = 0; i < d; ++i) mean[i] /= static_cast<double>(n);
  Vecd var{0.0, 0.0, 0.0};
  for (const Vecd& v : est.per_sample)
    for (int i = 0; i < d; ++i) var[i] += (v[i] - mean[i]) * (v[i] - mean[i]);
  est.value = mean;
  for (int i = 0; i < d; ++i) {
    const double sd = n > 1 ? std::sqrt(var[i] / static_cast<double>(n - 1)) : 0.0;
    est.stderr_[i] = sd / std::sqrt(static_cast<double>(n));
  }
}

template <typename SampleFn>
inline HomogenizedEstimate run_samples(int d, std::size_t sample_count,
                                       std::uint64_t master_seed, int workers,
                                       SampleFn&& sample_fn) {
  std::vector<std::optional<std::pair<Vecd, double>>> results(sample_count);
  std::vector<std::string> errors(sample_count);
  std::vector<std::uint64_t> seeds(sample_count);
  for (std::size_t i = 0; i < sample_count; ++i) seeds[i] = derive_seed(master_seed, i);

  parallel_for(sample_count, workers, [&](std::size_t i) {
    try {
      results[i] = sample_fn(seeds[i]);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  HomogenizedEstimate est;
  std::size_t failed = 0;
  for (std::size_t i = 0; i < sample_count; ++i) {
    if (results[i]) {
      est.per_sample.push_back(results[i]->first);
      est.per_sample_residual.push_back(results[i]->second);
      est.seeds.push_back(seeds[i]);
    } else {
      ++failed;
      est.failures.push_back("sample " + std::to_string(i) + ": " + errors[i]);
    }
  }
  if (failed * 10 > sample_count) throw PartialFailure(failed, sample_count);
  aggregate(est, d);
  return est;
}

/// Volume-weighted spatial mean of a vector field as a Vecd.
inline Vecd spatial_mean(const GridField& v) {
  Vecd m{0.0, 0.0, 0.0};
  for (int c = 0; c < v.components && c < 3; ++c) m[c] = v.component_mean(c);
  return m;
}

}  // namespace detail

/// Homogenized operator estimate: <q_xi> with the spatial mean standing in
/// for the ensemble average per sample and a seed-indexed Monte-Carlo loop
/// over samples.
inline HomogenizedEstimate estimate_A_hom(const ModelPtr& model, const FieldSpec& spec,
                                          const TorusGrid& grid, const Vecd& xi, double T,
                                          std::size_t sample_count, std::uint64_t master_seed,
                                          const NewtonOptions& opts = {}, int workers = 1) {
  HomogenizedEstimate est = detail::run_samples(
      grid.d, sample_count, master_seed, workers, [&](std::uint64_t seed) {
        const ParameterField omega = sample_parameter_field(spec, grid, seed);
        const CorrectorState st = solve_nonlinear(omega, *model, xi, T, opts);
        return std::make_pair(detail::spatial_mean(st.flux), st.residual);
      });
  est.xi = xi;
  est.T = T;
  return est;
}

/// Gateaux derivative estimate: <q_{xi,B}> for B spanned by `raw_dirs`
/// (vectors need not be unit; multilinearity is honored by scaling).
inline HomogenizedEstimate estimate_derivative(const ModelPtr& model, const FieldSpec& spec,
                                               const TorusGrid& grid, const Vecd& xi, double T,
                                               const std::vector<Vecd>& raw_dirs,
                                               std::size_t sample_count,
                                               std::uint64_t master_seed,
                                               const NewtonOptions& opts = {}, int workers = 1) {
  auto [dirs, scale] = DirectionSet::normalized(raw_dirs, grid.d);
  if (model->max_order() < dirs.order() + 1) throw OrderUnavailable(dirs.order() + 1);
  const DirectionSet dirs_copy = dirs;
  HomogenizedEstimate est = detail::run_samples(
      grid.d, sample_count, master_seed, workers, [&, scale](std::uint64_t seed) {
        const ParameterField omega = sample_parameter_field(spec, grid, seed);
        CorrectorFamily family = make_family(omega, model, xi, T, dirs_copy, opts);
        family.solve_all();
        const LinearizedCorrector& top = family.entry(family.full_mask());
        Vecd mean = detail::spatial_mean(top.flux);
        for (double& v : mean) v *= scale;
        return std::make_pair(mean, top.residual);
      });
  est.xi = xi;
  est.T = T;
  est.direction = raw_dirs;
  return est;
}

// ---------------------------------------------------------------------------
// Taylor expansion of linearized correctors in the macroscopic variable.
// ---------------------------------------------------------------------------

struct TaylorRemainder {
  GridField Phi;        // remainder field
  GridField grad_Phi;   // its gradient
  double phi_l2 = 0.0;
  double grad_phi_l2 = 0.0;
  double sigma_l2 = 0.0;      // remainder of the sigma potentials (0 in d=1)
  double grad_sigma_l2 = 0.0;
};

/// K-th order Taylor remainder of phi_{xi,B} around xi0:
///   Phi^K = phi_{xi,B} - sum_{k<=K} (h^k / k!) phi_{xi0, B (+) k copies of u},
/// where h = |xi - xi0| and u = (xi - xi0)/h. `base_family` must be built at
/// xi0 with directions (B..., u, ..., u) [K copies appended]; `at_xi` at xi
/// with directions B. Both families must share the parameter field sample.
inline TaylorRemainder taylor_remainder(CorrectorFamily& base_family, CorrectorFamily& at_xi,
                                        int order_L, int K) {
  const TorusGrid& g = base_family.omega().grid;
  const int total = base_family.directions().order();
  if (total < order_L + K) throw MissingSubcorrector("taylor slots");
  const Vecd xi = at_xi.base().xi;
  const Vecd xi0 = base_family.base().xi;
  Vecd diff{0.0, 0.0, 0.0};
  for (int i = 0; i < g.d; ++i) diff[i] = xi[i] - xi0[i];
  const double h = norm(diff, g.d);

  const auto phi_of = [&](CorrectorFamily& fam, std::uint32_t mask) -> const GridField& {
    if (mask == 0) return fam.base().phi;
    return fam.entry(mask).phi;
  };
  const auto flux_of = [&](CorrectorFamily& fam, std::uint32_t mask) -> const GridField& {
    if (mask == 0) return fam.base().flux;
    return fam.entry(mask).flux;
  };

  const std::uint32_t b_mask = order_L == 0 ? 0u : (1u << order_L) - 1u;
  TaylorRemainder rem;
  rem.Phi = phi_of(at_xi, b_mask);
  GridField sigma_rem = solve_sigma(flux_of(at_xi, b_mask), at_xi.mass());

  double factorial = 1.0;
  double h_pow = 1.0;
  for (int k = 0; k <= K; ++k) {
    if (k > 0) {
      factorial *= k;
      h_pow *= h;
    }
    const std::uint32_t mask = b_mask | (((1u << k) - 1u) << order_L);
    const double coeff = h_pow / factorial;
    if (mask == 0) {
      GridField term = base_family.base().phi;
      term *= coeff;
      rem.Phi -= term;
    } else {
      GridField term = base_family.entry(mask).phi;
      term *= coeff;
      rem.Phi -= term;
    }
    GridField sig = solve_sigma(flux_of(base_family, mask), base_family.mass());
    sig *= coeff;
    sigma_rem -= sig;
  }

  rem.grad_Phi = gradient(rem.Phi);
  rem.phi_l2 = norm_l2(rem.Phi);
  rem.grad_phi_l2 = norm_l2(rem.grad_Phi);
  rem.sigma_l2 = norm_l2(sigma_rem);
  rem.grad_sigma_l2 = g.d > 1 ? norm_l2_gradient(sigma_rem) : 0.0;
  return rem;
}

}  // namespace clab
