#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "correctorlab/errors.hpp"
#include "correctorlab/grid.hpp"
#include "correctorlab/rng.hpp"

namespace clab {

// Monotone operator families A(omega, xi) with closed-form derivatives of
// every required order, both in xi and jointly in (omega, xi). All evaluations
// are pointwise; fields enter by evaluating node by node.

class OperatorModel {
 public:
  virtual ~OperatorModel() = default;

  const std::string& name() const { return name_; }
  int dim() const { return dim_; }
  int n_components() const { return n_; }
  double lambda() const { return lambda_; }
  double Lambda() const { return Lambda_; }
  int max_order() const { return max_order_; }

  /// Monotonicity constant the family promises (may differ from lambda).
  double effective_lambda() const { return effective_lambda_; }
  double effective_Lambda() const { return effective_Lambda_; }

  /// A(omega, xi).
  virtual Vecd apply(const Vecd& omega_pt, const Vecd& xi) const = 0;

  /// Symmetric k-multilinear derivative d^k_xi A(omega, xi)[dirs...], k >= 1.
  virtual Vecd d_xi(const Vecd& omega_pt, const Vecd& xi, int k,
                    std::span<const Vecd> dirs) const = 0;

  /// d_omega d^k_xi A(omega, xi)[delta_omega (x) dirs...], k >= 0; linear in
  /// delta_omega.
  virtual Vecd d_omega_d_xi(const Vecd& omega_pt, const Vecd& xi, int k,
                            const Vecd& delta_omega_pt, std::span<const Vecd> dirs) const = 0;

 protected:
  OperatorModel(std::string name, int dim, int n, double lambda, double Lambda, int max_order,
                double eff_lambda, double eff_Lambda)
      : name_(std::move(name)), dim_(dim), n_(n), lambda_(lambda), Lambda_(Lambda),
        max_order_(max_order), effective_lambda_(eff_lambda), effective_Lambda_(eff_Lambda) {
    if (!(lambda_ > 0.0) || Lambda_ < lambda_) throw Error("need 0 < lambda <= Lambda");
  }

  void check_order(int k, int limit) const {
    if (k > limit) throw OrderUnavailable(k);
  }

  std::string name_;
  int dim_;
  int n_;
  double lambda_;
  double Lambda_;
  int max_order_;
  double effective_lambda_;
  double effective_Lambda_;
};

using ModelPtr = std::shared_ptr<const OperatorModel>;

/// A(omega, xi) = a(omega) xi with a(omega) = lambda + (Lambda-lambda)(1+omega_1)/2.
class LinearModel final : public OperatorModel {
 public:
  LinearModel(int dim, int n, double lambda, double Lambda, int max_order = 6)
      : OperatorModel("Linear", dim, n, lambda, Lambda, max_order, lambda, Lambda) {}

  double coeff(const Vecd& omega_pt) const {
    return lambda_ + (Lambda_ - lambda_) * (1.0 + omega_pt[0]) * 0.5;
  }

  Vecd apply(const Vecd& omega_pt, const Vecd& xi) const override {
    const double a = coeff(omega_pt);
    Vecd out{0.0, 0.0, 0.0};
    for (int i = 0; i < dim_; ++i) out[i] = a * xi[i];
    return out;
  }

  Vecd d_xi(const Vecd& omega_pt, const Vecd&, int k, std::span<const Vecd> dirs) const override {
    check_order(k, max_order_);
    Vecd out{0.0, 0.0, 0.0};
    if (k == 1) {
      const double a = coeff(omega_pt);
      for (int i = 0; i < dim_; ++i) out[i] = a * dirs[0][i];
    }
    return out;
  }

  Vecd d_omega_d_xi(const Vecd&, const Vecd& xi, int k, const Vecd& delta_omega_pt,
                    std::span<const Vecd> dirs) const override {
    check_order(k, max_order_ - 1);
    const double da = 0.5 * (Lambda_ - lambda_) * delta_omega_pt[0];
    Vecd out{0.0, 0.0, 0.0};
    if (k == 0) {
      for (int i = 0; i < dim_; ++i) out[i] = da * xi[i];
    } else if (k == 1) {
      for (int i = 0; i < dim_; ++i) out[i] = da * dirs[0][i];
    }
    return out;
  }
};

/// A(omega, xi)_i = a(omega) xi_i + b(omega) sin(xi_i), with
/// a as in the linear family and b(omega) = b_coeff * omega_{min(2,n)}.
/// With the default b_coeff = lambda/2 the family stays monotone with
/// constant lambda/2 and has nonvanishing xi-derivatives of every order.
class SinePerturbedModel final : public OperatorModel {
 public:
  SinePerturbedModel(int dim, int n, double lambda, double Lambda, int max_order = 6,
                     double b_coeff = -1.0)
      : OperatorModel("SinePerturbed", dim, n, lambda, Lambda, max_order,
                      0.5 * lambda, Lambda + 0.5 * lambda),
        b_coeff_(b_coeff < 0.0 ? 0.5 * lambda : b_coeff),
        b_channel_(std::min(2, n) - 1) {}

  double coeff_a(const Vecd& omega_pt) const {
    return lambda_ + (Lambda_ - lambda_) * (1.0 + omega_pt[0]) * 0.5;
  }
  double coeff_b(const Vecd& omega_pt) const { return b_coeff_ * omega_pt[b_channel_]; }
  double b_coeff() const { return b_coeff_; }

  Vecd apply(const Vecd& omega_pt, const Vecd& xi) const override {
    const double a = coeff_a(omega_pt);
    const double b = coeff_b(omega_pt);
    Vecd out{0.0, 0.0, 0.0};
    for (int i = 0; i < dim_; ++i) out[i] = a * xi[i] + b * std::sin(xi[i]);
    return out;
  }

  Vecd d_xi(const Vecd& omega_pt, const Vecd& xi, int k, std::span<const Vecd> dirs) const override {
    check_order(k, max_order_);
    const double a = coeff_a(omega_pt);
    const double b = coeff_b(omega_pt);
    Vecd out{0.0, 0.0, 0.0};
    for (int i = 0; i < dim_; ++i) {
      double prod = 1.0;
      for (int j = 0; j < k; ++j) prod *= dirs[static_cast<std::size_t>(j)][i];
      out[i] = b * sin_derivative(k, xi[i]) * prod;
      if (k == 1) out[i] += a * dirs[0][i];
    }
    return out;
  }

  Vecd d_omega_d_xi(const Vecd&, const Vecd& xi, int k, const Vecd& delta_omega_pt,
                    std::span<const Vecd> dirs) const override {
    check_order(k, max_order_ - 1);
    const double da = 0.5 * (Lambda_ - lambda_) * delta_omega_pt[0];
    const double db = b_coeff_ * delta_omega_pt[b_channel_];
    Vecd out{0.0, 0.0, 0.0};
    for (int i = 0; i < dim_; ++i) {
      double prod = 1.0;
      for (int j = 0; j < k; ++j) prod *= dirs[static_cast<std::size_t>(j)][i];
      out[i] = db * sin_derivative(k, xi[i]) * prod;
      if (k == 0) out[i] += da * xi[i];
      if (k == 1) out[i] += da * dirs[0][i];
    }
    return out;
  }

 private:
  static double sin_derivative(int k, double x) {
    switch (k & 3) {
      case 0: return std::sin(x);
      case 1: return std::cos(x);
      case 2: return -std::sin(x);
      default: return -std::cos(x);
    }
  }

  double b_coeff_;
  int b_channel_;
};

struct ModelConfig {
  std::string name = "SinePerturbed";
  double lambda = 1.0;
  double Lambda = 2.0;
  int max_order = 6;
  double sine_amplitude = -1.0;  // < 0: family default lambda/2
};

inline ModelPtr make_model(const ModelConfig& cfg, int dim, int n_components) {
  if (cfg.name == "Linear")
    return std::make_shared<LinearModel>(dim, n_components, cfg.lambda, cfg.Lambda, cfg.max_order);
  if (cfg.name == "SinePerturbed")
    return std::make_shared<SinePerturbedModel>(dim, n_components, cfg.lambda, cfg.Lambda,
                                                cfg.max_order, cfg.sine_amplitude);
  throw ConfigError("unknown model name: " + cfg.name);
}

/// Monte-Carlo check of the structural conditions a family declares:
/// monotonicity constant, derivative bounds, Lipschitz dependence on omega.
struct AssumptionReport {
  double worst_monotonicity_ratio = 0.0;  // min over samples of (A1) ratio
  double max_dxi_norm = 0.0;              // max over k<=max_order of |d^k_xi A|
  double max_omega_lipschitz = 0.0;       // |A(w1,xi)-A(w2,xi)| / (|w1-w2| max(|xi|,1))
  double declared_lambda = 0.0;
  double declared_Lambda = 0.0;
  bool monotonicity_ok = false;
  bool bounds_ok = false;
  std::size_t samples = 0;
};

inline AssumptionReport validate_assumptions(const OperatorModel& model,
                                             std::size_t sample_count, std::uint64_t seed,
                                             double xi_box = 2.0) {
  SequentialRng rng(seed);
  const int d = model.dim();
  const int n = model.n_components();
  AssumptionReport rep;
  rep.declared_lambda = model.effective_lambda();
  rep.declared_Lambda = model.effective_Lambda();
  rep.samples = sample_count;
  rep.worst_monotonicity_ratio = std::numeric_limits<double>::infinity();

  const auto random_ball = [&](int m) {
    Vecd w{0.0, 0.0, 0.0};
    double s2;
    do {
      s2 = 0.0;
      for (int c = 0; c < m; ++c) {
        w[c] = rng.uniform(-1.0, 1.0);
        s2 += w[c] * w[c];
      }
    } while (s2 >= 1.0);
    return w;
  };
  const auto random_xi = [&] {
    Vecd x{0.0, 0.0, 0.0};
    for (int i = 0; i < d; ++i) x[i] = rng.uniform(-xi_box, xi_box);
    return x;
  };

  std::vector<Vecd> dirs(static_cast<std::size_t>(model.max_order()));
  for (std::size_t s = 0; s < sample_count; ++s) {
    const Vecd w = random_ball(n);
    const Vecd x1 = random_xi();
    const Vecd x2 = random_xi();
    Vecd diff{0.0, 0.0, 0.0};
    double len2 = 0.0;
    for (int i = 0; i < d; ++i) {
      diff[i] = x1[i] - x2[i];
      len2 += diff[i] * diff[i];
    }
    if (len2 > 1e-20) {
      const Vecd a1 = model.apply(w, x1);
      const Vecd a2 = model.apply(w, x2);
      double num = 0.0;
      for (int i = 0; i < d; ++i) num += (a1[i] - a2[i]) * diff[i];
      rep.worst_monotonicity_ratio = std::min(rep.worst_monotonicity_ratio, num / len2);
    }

    for (int k = 1; k <= model.max_order(); ++k) {
      for (int j = 0; j < k; ++j) {
        Vecd u{0.0, 0.0, 0.0};
        double u2 = 0.0;
        for (int i = 0; i < d; ++i) {
          u[i] = rng.uniform(-1.0, 1.0);
          u2 += u[i] * u[i];
        }
        const double lu = std::sqrt(u2);
        for (int i = 0; i < d; ++i) u[i] = lu > 0 ? u[i] / lu : (i == 0 ? 1.0 : 0.0);
        dirs[static_cast<std::size_t>(j)] = u;
      }
      const Vecd dv = model.d_xi(w, x1, k, std::span<const Vecd>(dirs.data(), static_cast<std::size_t>(k)));
      rep.max_dxi_norm = std::max(rep.max_dxi_norm, norm(dv, d));
    }

    const Vecd w2 = random_ball(n);
    double dw2 = 0.0;
    for (int c = 0; c < n; ++c) dw2 += (w[c] - w2[c]) * (w[c] - w2[c]);
    if (dw2 > 1e-20) {
      const Vecd a1 = model.apply(w, x1);
      const Vecd a2 = model.apply(w2, x1);
      Vecd da{0.0, 0.0, 0.0};
      for (int i = 0; i < d; ++i) da[i] = a1[i] - a2[i];
      rep.max_omega_lipschitz =
          std::max(rep.max_omega_lipschitz,
                   norm(da, d) / (std::sqrt(dw2) * std::max(norm(x1, d), 1.0)));
    }
  }

  rep.monotonicity_ok = rep.worst_monotonicity_ratio >= rep.declared_lambda - 1e-12;
  rep.bounds_ok = rep.max_dxi_norm <= rep.declared_Lambda + 1e-12 &&
                  rep.max_omega_lipschitz <= rep.declared_Lambda + 1e-12;
  return rep;
}

}  // namespace clab
