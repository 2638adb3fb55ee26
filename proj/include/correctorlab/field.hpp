#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "correctorlab/errors.hpp"
#include "correctorlab/grid.hpp"
#include "correctorlab/rng.hpp"

namespace clab {

/// Stationary Gaussian ensemble: spectral density, variance scale,
/// correlation length and channel count.
struct FieldSpec {
  int n_components = 1;
  double alpha = 0.5;
  double amplitude = 1.0;
  double corr_length = 1.0;

  void validate() const {
    if (n_components < 1) throw Error("field spec: n_components must be >= 1");
    if (!(alpha > 0.0)) throw Error("field spec: alpha must be > 0");
    // amplitude 0 is the degenerate constant-field ensemble used by controls
    if (!(amplitude >= 0.0)) throw Error("field spec: amplitude must be >= 0");
    if (!(corr_length > 0.0)) throw Error("field spec: corr_length must be > 0");
  }
};

/// Spectral density c_hat(k) = amplitude * (1 + corr_length |2 pi k / L|)^{-(d+alpha)}
/// at flat mode index i. Kernel modes (zero and Nyquist) carry no weight.
inline double covariance_spectrum(const FieldSpec& spec, const TorusGrid& g, std::size_t i) {
  const auto idx = g.unflatten(i);
  if (i == 0 || spectral::has_nyquist(idx, g.d, g.n_points)) return 0.0;
  const double two_pi_over_l = 2.0 * std::numbers::pi / g.box_side;
  double k2 = 0.0;
  for (int a = 0; a < g.d; ++a) {
    const double k = two_pi_over_l * spectral::k_deriv(idx[a], g.n_points);
    k2 += k * k;
  }
  return spec.amplitude * std::pow(1.0 + spec.corr_length * std::sqrt(k2),
                                   -static_cast<double>(g.d) - spec.alpha);
}

namespace detail {

/// Flat index of the mirror mode -k (mod N).
inline std::size_t mirror_mode(const TorusGrid& g, const std::array<int, 3>& idx) {
  std::array<int, 3> m{0, 0, 0};
  for (int a = 0; a < g.d; ++a) m[a] = idx[a] == 0 ? 0 : g.n_points - idx[a];
  return g.flatten(m);
}

/// Synthesis before taking the real part (the imaginary part must vanish
/// up to rounding by Hermitian symmetry; tests verify this).
inline std::vector<std::complex<double>> synthesize_channel(const FieldSpec& spec,
                                                            const TorusGrid& g,
                                                            std::uint64_t seed, int channel) {
  const std::size_t n = g.node_count();
  std::vector<std::complex<double>> modes(n, {0.0, 0.0});
  const std::uint64_t key = rng_word(seed, 0x9d8f3c1bUL + static_cast<std::uint64_t>(channel));
  const double scale_nodes = static_cast<double>(n);
  spectral::for_each_mode(g, [&](std::size_t i, const std::array<int, 3>& idx) {
    const double c_hat = covariance_spectrum(spec, g, i);
    if (c_hat == 0.0) return;
    const std::size_t j = mirror_mode(g, idx);
    if (j <= i) return;  // canonical half only; no self-conjugate modes survive
    auto [g1, g2] = rng_gaussian_pair(key, static_cast<std::uint64_t>(i));
    const double amp = std::sqrt(0.5 * scale_nodes * c_hat);
    modes[i] = {amp * g1, amp * g2};
    modes[j] = std::conj(modes[i]);
  });
  fft_inverse(g.d, g.n_points, modes.data());
  return modes;
}

}  // namespace detail

/// Sample the raw (unclipped) stationary centered Gaussian field. The draw is a
/// pure function of (spec, grid, seed): every Fourier mode has its own counter
/// stream, so traversal order and worker count cannot change the result.
inline GridField sample_gaussian(const FieldSpec& spec, const TorusGrid& g, std::uint64_t seed) {
  spec.validate();
  GridField out = GridField::channels(g, spec.n_components);
  for (int c = 0; c < spec.n_components; ++c) {
    const auto modes = detail::synthesize_channel(spec, g, seed, c);
    double* p = out.component(c);
    for (std::size_t i = 0; i < modes.size(); ++i) p[i] = modes[i].real();
  }
  return out;
}

/// Grid-sampled parameter field with values in the unit ball of R^n.
struct ParameterField {
  TorusGrid grid;
  GridField omega;  // n_components channels
  std::uint64_t seed = 0;

  int n_components() const { return omega.components; }

  Vecd omega_at(std::size_t node) const {
    Vecd v{0.0, 0.0, 0.0};
    for (int c = 0; c < omega.components && c < 3; ++c) v[c] = omega.at(c, node);
    return v;
  }

  void validate() const {
    const std::size_t n = omega.node_count();
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (int c = 0; c < omega.components; ++c) s += omega.at(c, i) * omega.at(c, i);
      if (!(s < 1.0)) throw Error("parameter field leaves the open unit ball");
    }
  }

  /// Wrap explicit values (synthetic layouts in tests and oracles).
  static ParameterField from_values(GridField values, std::uint64_t seed = 0) {
    ParameterField f{values.grid, std::move(values), seed};
    f.validate();
    return f;
  }
};

/// Node-wise 1-Lipschitz clip beta(s) = s / sqrt(1 + |s|^2) into the open unit ball.
inline ParameterField clip(const GridField& raw, std::uint64_t seed = 0) {
  GridField out = raw;
  const std::size_t n = raw.node_count();
  for (std::size_t i = 0; i < n; ++i) {
    double s2 = 0.0;
    for (int c = 0; c < raw.components; ++c) s2 += raw.at(c, i) * raw.at(c, i);
    const double scale = 1.0 / std::sqrt(1.0 + s2);
    for (int c = 0; c < raw.components; ++c) out.at(c, i) = raw.at(c, i) * scale;
  }
  ParameterField f{raw.grid, std::move(out), seed};
  return f;
}

/// Sample, clip, tag with the seed.
inline ParameterField sample_parameter_field(const FieldSpec& spec, const TorusGrid& g,
                                             std::uint64_t seed) {
  ParameterField f = clip(sample_gaussian(spec, g, seed), seed);
  return f;
}

/// Hoelder seminorm diagnostic: max over node pairs within periodic distance
/// <= radius of |omega(x) - omega(y)| / |x - y|^eta.
inline double hoelder_seminorm(const ParameterField& field, double eta, double radius) {
  const TorusGrid& g = field.grid;
  if (!(eta > 0.0 && eta < 1.0)) throw Error("hoelder exponent must be in (0,1)");
  if (radius < g.spacing()) throw Error("hoelder radius must be >= grid spacing");
  const int reach = std::min(static_cast<int>(radius / g.spacing()), g.n_points / 2);
  const std::size_t n = g.node_count();

  // Enumerate canonical index offsets within reach once.
  std::vector<std::array<int, 3>> offsets;
  const int lo = -reach, hi = reach;
  const auto push_if_valid = [&](const std::array<int, 3>& off) {
    double dist2 = 0.0;
    for (int a = 0; a < g.d; ++a) dist2 += static_cast<double>(off[a]) * off[a];
    const double dist = std::sqrt(dist2) * g.spacing();
    if (dist > 0.0 && dist <= radius) offsets.push_back(off);
  };
  if (g.d == 1) {
    for (int i0 = 1; i0 <= hi; ++i0) push_if_valid({i0, 0, 0});
  } else if (g.d == 2) {
    for (int i0 = lo; i0 <= hi; ++i0)
      for (int i1 = lo; i1 <= hi; ++i1)
        if (i0 > 0 || (i0 == 0 && i1 > 0)) push_if_valid({i0, i1, 0});
  } else {
    for (int i0 = lo; i0 <= hi; ++i0)
      for (int i1 = lo; i1 <= hi; ++i1)
        for (int i2 = lo; i2 <= hi; ++i2)
          if (i0 > 0 || (i0 == 0 && (i1 > 0 || (i1 == 0 && i2 > 0))))
            push_if_valid({i0, i1, i2});
  }

  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto idx = g.unflatten(i);
    for (const auto& off : offsets) {
      std::array<int, 3> jdx{0, 0, 0};
      double dist2 = 0.0;
      for (int a = 0; a < g.d; ++a) {
        jdx[a] = (idx[a] + off[a] % g.n_points + g.n_points) % g.n_points;
        dist2 += static_cast<double>(off[a]) * off[a];
      }
      const double dist = std::sqrt(dist2) * g.spacing();
      const std::size_t j = g.flatten(jdx);
      double diff2 = 0.0;
      for (int c = 0; c < field.omega.components; ++c) {
        const double dv = field.omega.at(c, i) - field.omega.at(c, j);
        diff2 += dv * dv;
      }
      worst = std::max(worst, std::sqrt(diff2) / std::pow(dist, eta));
    }
  }
  return worst;
}

}  // namespace clab
