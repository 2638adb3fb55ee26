#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "correctorlab/errors.hpp"
#include "correctorlab/fft.hpp"

namespace clab {

inline constexpr double kInfiniteMass = std::numeric_limits<double>::infinity();

/// Point / small vector in the ambient space (components beyond d are zero).
using Vecd = std::array<double, 3>;

inline double dot(const Vecd& a, const Vecd& b, int d) {
  double s = 0.0;
  for (int i = 0; i < d; ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const Vecd& a, int d) { return std::sqrt(dot(a, a, d)); }

/// Periodic pseudospectral torus: n_points nodes per axis on [0, box_side)^d.
struct TorusGrid {
  int d = 1;
  int n_points = 4;
  double box_side = 1.0;

  TorusGrid() = default;
  TorusGrid(int dim, int n, double box) : d(dim), n_points(n), box_side(box) {
    if (d < 1 || d > 3) throw Error("grid dimension must be 1, 2 or 3");
    if (n_points < 4 || (n_points & (n_points - 1)) != 0)
      throw Error("n_points must be a power of two >= 4");
    if (!(box_side > 0.0)) throw Error("box_side must be positive");
  }

  std::size_t node_count() const {
    std::size_t c = 1;
    for (int i = 0; i < d; ++i) c *= static_cast<std::size_t>(n_points);
    return c;
  }

  double spacing() const { return box_side / n_points; }
  double cell_volume() const { return std::pow(spacing(), d); }
  double volume() const { return std::pow(box_side, d); }

  /// Multi-index of a flat node index; axis 0 is slowest.
  std::array<int, 3> unflatten(std::size_t flat) const {
    std::array<int, 3> idx{0, 0, 0};
    for (int a = d - 1; a >= 0; --a) {
      idx[a] = static_cast<int>(flat % static_cast<std::size_t>(n_points));
      flat /= static_cast<std::size_t>(n_points);
    }
    return idx;
  }

  std::size_t flatten(const std::array<int, 3>& idx) const {
    std::size_t flat = 0;
    for (int a = 0; a < d; ++a)
      flat = flat * static_cast<std::size_t>(n_points) + static_cast<std::size_t>(idx[a]);
    return flat;
  }

  /// Coordinates of node j: x = j * box_side / n_points componentwise.
  Vecd node(std::size_t flat) const {
    const auto idx = unflatten(flat);
    Vecd x{0.0, 0.0, 0.0};
    for (int a = 0; a < d; ++a) x[a] = idx[a] * spacing();
    return x;
  }

  /// Distance on the torus.
  double periodic_distance(const Vecd& a, const Vecd& b) const {
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
      double t = std::fabs(a[i] - b[i]);
      t = std::fmod(t, box_side);
      if (t > 0.5 * box_side) t = box_side - t;
      s += t * t;
    }
    return std::sqrt(s);
  }

  bool operator==(const TorusGrid& o) const {
    return d == o.d && n_points == o.n_points && box_side == o.box_side;
  }
};

enum class FieldRank { scalar, vector, matrix, channels };

inline int components_for(FieldRank rank, int d, int n_channels = 1) {
  switch (rank) {
    case FieldRank::scalar: return 1;
    case FieldRank::vector: return d;
    case FieldRank::matrix: return d * d;
    case FieldRank::channels: return n_channels;
  }
  return 1;
}

/// Real field over the torus nodes. Storage is planar: component c occupies
/// values[c * node_count .. (c+1) * node_count), nodes row-major, axis 0 slowest.
struct GridField {
  TorusGrid grid;
  FieldRank rank = FieldRank::scalar;
  int components = 1;
  std::vector<double> values;

  GridField() = default;
  GridField(const TorusGrid& g, FieldRank r, int n_channels = 1)
      : grid(g), rank(r), components(components_for(r, g.d, n_channels)),
        values(g.node_count() * static_cast<std::size_t>(components), 0.0) {}

  static GridField scalar(const TorusGrid& g) { return GridField(g, FieldRank::scalar); }
  static GridField vector(const TorusGrid& g) { return GridField(g, FieldRank::vector); }
  static GridField matrix(const TorusGrid& g) { return GridField(g, FieldRank::matrix); }
  static GridField channels(const TorusGrid& g, int n) { return GridField(g, FieldRank::channels, n); }

  std::size_t node_count() const { return grid.node_count(); }

  double& at(int c, std::size_t node) { return values[static_cast<std::size_t>(c) * node_count() + node]; }
  double at(int c, std::size_t node) const { return values[static_cast<std::size_t>(c) * node_count() + node]; }

  double* component(int c) { return values.data() + static_cast<std::size_t>(c) * node_count(); }
  const double* component(int c) const { return values.data() + static_cast<std::size_t>(c) * node_count(); }

  /// Matrix entry (row, col) at a node; rank must be matrix.
  double& mat(int row, int col, std::size_t node) { return at(row * grid.d + col, node); }
  double mat(int row, int col, std::size_t node) const { return at(row * grid.d + col, node); }

  Vecd vec_at(std::size_t node) const {
    Vecd v{0.0, 0.0, 0.0};
    for (int c = 0; c < components && c < 3; ++c) v[c] = at(c, node);
    return v;
  }

  bool finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double component_mean(int c) const {
    double s = 0.0;
    const double* p = component(c);
    for (std::size_t i = 0; i < node_count(); ++i) s += p[i];
    return s / static_cast<double>(node_count());
  }

  GridField& operator+=(const GridField& o) {
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += o.values[i];
    return *this;
  }
  GridField& operator-=(const GridField& o) {
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= o.values[i];
    return *this;
  }
  GridField& operator*=(double s) {
    for (double& v : values) v *= s;
    return *this;
  }
};

inline GridField operator+(GridField a, const GridField& b) { return a += b; }
inline GridField operator-(GridField a, const GridField& b) { return a -= b; }
inline GridField operator*(double s, GridField a) { return a *= s; }

/// L2 norm on the torus (volume-weighted).
inline double norm_l2(const GridField& f) {
  double s = 0.0;
  for (double v : f.values) s += v * v;
  return std::sqrt(s * f.grid.cell_volume());
}

inline double inner_l2(const GridField& a, const GridField& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) s += a.values[i] * b.values[i];
  return s * a.grid.cell_volume();
}

// ---------------------------------------------------------------------------
// Spectral machinery. One wavenumber convention is shared by every operator:
// the Nyquist wavenumber is mapped to zero, which makes gradient, divergence
// and the inverse-Helmholtz multiplier commute exactly and keeps odd
// derivatives of real fields real.
// ---------------------------------------------------------------------------

namespace spectral {

/// Signed integer wavenumber used by all derivative multipliers.
inline int k_deriv(int j, int n) {
  if (j < n / 2) return j;
  if (j == n / 2) return 0;  // Nyquist
  return j - n;
}

/// True iff the mode index has a Nyquist component on some axis.
inline bool has_nyquist(const std::array<int, 3>& idx, int d, int n) {
  for (int a = 0; a < d; ++a)
    if (idx[a] == n / 2) return true;
  return false;
}

inline std::vector<std::complex<double>> to_modes(const GridField& f, int c) {
  std::vector<std::complex<double>> m(f.node_count());
  const double* p = f.component(c);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = p[i];
  fft_forward(f.grid.d, f.grid.n_points, m.data());
  return m;
}

inline void from_modes(std::vector<std::complex<double>>& m, GridField& f, int c) {
  fft_inverse(f.grid.d, f.grid.n_points, m.data());
  double* p = f.component(c);
  for (std::size_t i = 0; i < m.size(); ++i) p[i] = m[i].real();
}

}  // namespace spectral

namespace spectral {

/// Wavenumber table 2*pi*k/L per index along one axis.
inline std::vector<double> wavenumbers(const TorusGrid& g) {
  std::vector<double> k(static_cast<std::size_t>(g.n_points));
  const double two_pi_over_l = 2.0 * std::numbers::pi / g.box_side;
  for (int j = 0; j < g.n_points; ++j)
    k[static_cast<std::size_t>(j)] = two_pi_over_l * k_deriv(j, g.n_points);
  return k;
}

/// Visit flat indices in order, tracking the multi-index without division.
template <typename F>
inline void for_each_mode(const TorusGrid& g, F&& fn) {
  std::array<int, 3> idx{0, 0, 0};
  const std::size_t total = g.node_count();
  for (std::size_t i = 0; i < total; ++i) {
    fn(i, idx);
    for (int a = g.d - 1; a >= 0; --a) {
      if (++idx[a] < g.n_points) break;
      idx[a] = 0;
    }
  }
}

}  // namespace spectral

/// Spectral gradient of a scalar field.
inline GridField gradient(const GridField& f) {
  const TorusGrid& g = f.grid;
  GridField out = GridField::vector(g);
  const auto modes = spectral::to_modes(f, 0);
  const auto kt = spectral::wavenumbers(g);
  std::vector<std::complex<double>> work(modes.size());
  for (int a = 0; a < g.d; ++a) {
    spectral::for_each_mode(g, [&](std::size_t i, const std::array<int, 3>& idx) {
      const double k = kt[static_cast<std::size_t>(idx[a])];
      work[i] = std::complex<double>(-k * modes[i].imag(), k * modes[i].real());
    });
    spectral::from_modes(work, out, a);
  }
  return out;
}

/// Spectral divergence of a vector field, with the same multiplier convention
/// as gradient (the two commute exactly and compose to the Laplacian).
inline GridField divergence(const GridField& v) {
  const TorusGrid& g = v.grid;
  GridField out = GridField::scalar(g);
  const auto kt = spectral::wavenumbers(g);
  std::vector<std::complex<double>> acc(g.node_count(), {0.0, 0.0});
  for (int a = 0; a < g.d; ++a) {
    auto modes = spectral::to_modes(v, a);
    spectral::for_each_mode(g, [&](std::size_t i, const std::array<int, 3>& idx) {
      const double k = kt[static_cast<std::size_t>(idx[a])];
      acc[i] += std::complex<double>(-k * modes[i].imag(), k * modes[i].real());
    });
  }
  spectral::from_modes(acc, out, 0);
  return out;
}

/// |2 pi k / L|^2 per flat spectral index, under the shared convention.
inline std::vector<double> laplacian_multipliers(const TorusGrid& g) {
  const auto kt = spectral::wavenumbers(g);
  std::vector<double> mult(g.node_count());
  spectral::for_each_mode(g, [&](std::size_t i, const std::array<int, 3>& idx) {
    double s = 0.0;
    for (int a = 0; a < g.d; ++a) {
      const double k = kt[static_cast<std::size_t>(idx[a])];
      s += k * k;
    }
    mult[i] = s;
  });
  return mult;
}

/// Solve (1/T - Laplacian) u = rhs mode by mode, componentwise.
/// T = infinity drops the massive term: the rhs must be mean-free and the
/// solution is fixed by mean-zero normalization (all kernel modes are zeroed).
inline GridField helmholtz_solve(double T, const GridField& rhs) {
  const TorusGrid& g = rhs.grid;
  const bool massless = std::isinf(T);
  if (massless) {
    double rms = 0.0;
    for (double v : rhs.values) rms += v * v;
    rms = std::sqrt(rms / static_cast<double>(rhs.values.size()));
    for (int c = 0; c < rhs.components; ++c) {
      const double m = std::fabs(rhs.component_mean(c));
      if (m > 1e-10 * std::max(rms, std::numeric_limits<double>::min()))
        throw MeanNotZero(m / std::max(rms, std::numeric_limits<double>::min()));
    }
  }
  GridField out(g, rhs.rank, rhs.components);
  const double inv_t = massless ? 0.0 : 1.0 / T;
  const auto mult = laplacian_multipliers(g);
  for (int c = 0; c < rhs.components; ++c) {
    auto modes = spectral::to_modes(rhs, c);
    for (std::size_t i = 0; i < modes.size(); ++i) {
      if (massless && mult[i] == 0.0) {
        modes[i] = 0.0;  // kernel of the massless operator
      } else {
        modes[i] /= (inv_t + mult[i]);
      }
    }
    spectral::from_modes(modes, out, c);
  }
  return out;
}

/// Extract one component as a scalar field.
inline GridField component_field(const GridField& f, int c) {
  GridField out = GridField::scalar(f.grid);
  const double* p = f.component(c);
  for (std::size_t i = 0; i < f.node_count(); ++i) out.at(0, i) = p[i];
  return out;
}

/// L2 norm of the full gradient tensor of a (possibly multi-component) field.
inline double norm_l2_gradient(const GridField& f) {
  double s = 0.0;
  for (int c = 0; c < f.components; ++c) {
    const double n = norm_l2(gradient(component_field(f, c)));
    s += n * n;
  }
  return std::sqrt(s);
}

/// Mean of f over nodes with periodic distance < radius from center
/// (strict inequality); one value per component.
inline std::vector<double> ball_average(const GridField& f, const Vecd& center, double radius) {
  const TorusGrid& g = f.grid;
  if (!(radius < 0.5 * g.box_side)) throw Error("ball radius must be < box_side/2");
  std::vector<double> sums(static_cast<std::size_t>(f.components), 0.0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < f.node_count(); ++i) {
    if (g.periodic_distance(g.node(i), center) < radius) {
      ++count;
      for (int c = 0; c < f.components; ++c) sums[static_cast<std::size_t>(c)] += f.at(c, i);
    }
  }
  if (count == 0) throw EmptyBall();
  for (double& s : sums) s /= static_cast<double>(count);
  return sums;
}

/// Integral of |f|^2 over the ball (volume-weighted, all components).
inline double ball_l2_sq(const GridField& f, const Vecd& center, double radius) {
  const TorusGrid& g = f.grid;
  if (!(radius < 0.5 * g.box_side)) throw Error("ball radius must be < box_side/2");
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < f.node_count(); ++i) {
    if (g.periodic_distance(g.node(i), center) < radius) {
      ++count;
      for (int c = 0; c < f.components; ++c) s += f.at(c, i) * f.at(c, i);
    }
  }
  if (count == 0) throw EmptyBall();
  return s * g.cell_volume();
}

}  // namespace clab
