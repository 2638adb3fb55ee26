#include <doctest.h>

#include <cmath>

#include "correctorlab/corrector.hpp"
#include "correctorlab/field.hpp"

using namespace clab;

namespace {

ParameterField constant_field(const TorusGrid& g, int n, const Vecd& value) {
  GridField f = GridField::channels(g, n);
  for (int c = 0; c < n; ++c)
    for (std::size_t i = 0; i < g.node_count(); ++i) f.at(c, i) = value[c];
  return ParameterField::from_values(std::move(f));
}

/// d = 1 layout with a two-valued linear coefficient {1, 4} (50/50 halves).
ParameterField two_valued_layout(const TorusGrid& g) {
  // Linear family with lambda = 1, Lambda = 4: a = 1 + 3 (1 + w1)/2, so
  // w1 -> -1 gives a -> 1 and w1 -> +1 gives a -> 4 (approached from inside).
  GridField f = GridField::channels(g, 1);
  for (std::size_t i = 0; i < g.node_count(); ++i)
    f.at(0, i) = (i < g.node_count() / 2) ? -(1.0 - 1e-12) : (1.0 - 1e-12);
  return ParameterField::from_values(std::move(f));
}

}  // namespace

TEST_CASE("constant parameter field: zero corrector, constant flux, one step") {
  TorusGrid g(2, 16, 4.0);
  const ParameterField omega = constant_field(g, 2, {0.3, -0.1, 0.0});
  SinePerturbedModel model(2, 2, 1.0, 2.0);
  const Vecd xi{0.7, -0.2, 0.0};
  const CorrectorState st = solve_nonlinear(omega, model, xi, 8.0);
  CHECK(st.newton_iters == 1);
  for (double v : st.phi.values) CHECK(std::fabs(v) < 1e-13);
  const Vecd expected = model.apply({0.3, -0.1, 0.0}, xi);
  for (std::size_t i = 0; i < g.node_count(); ++i)
    for (int c = 0; c < 2; ++c) CHECK(st.flux.at(c, i) == doctest::Approx(expected[c]));
}

TEST_CASE("linear models converge in exactly one undamped Newton step") {
  TorusGrid g(2, 32, 16.0);
  FieldSpec spec{1, 0.5, 1.0, 1.0};
  const ParameterField omega = sample_parameter_field(spec, g, 11);
  LinearModel model(2, 1, 1.0, 2.0);
  const CorrectorState st = solve_nonlinear(omega, model, {1.0, 0.0, 0.0}, 16.0);
  CHECK(st.newton_iters == 1);
  CHECK(st.residual <= 1e-10);
}

TEST_CASE("d=1 two-valued layout: flux average is the harmonic mean 1.6 xi") {
  TorusGrid g(1, 256, 16.0);
  const ParameterField omega = two_valued_layout(g);
  LinearModel model(1, 1, 1.0, 4.0);
  NewtonOptions opts;
  opts.tol = 1e-12;
  const double xi1 = 0.8;
  const CorrectorState st = solve_nonlinear(omega, model, {xi1, 0.0, 0.0}, kInfiniteMass, opts);
  CHECK(st.flux.component_mean(0) == doctest::Approx(1.6 * xi1).epsilon(1e-10));
  CHECK(std::fabs(st.phi.component_mean(0)) < 1e-12);
}

TEST_CASE("residual certificate holds under independent re-evaluation") {
  TorusGrid g(2, 16, 8.0);
  FieldSpec spec{2, 0.5, 1.0, 1.0};
  const ParameterField omega = sample_parameter_field(spec, g, 21);
  SinePerturbedModel model(2, 2, 1.0, 2.0);
  NewtonOptions opts;
  opts.tol = 1e-10;
  const CorrectorState st = solve_nonlinear(omega, model, {1.0, 0.3, 0.0}, 4.0, opts);
  CHECK(st.residual <= opts.tol);
  CHECK(residual_certificate(st) <= opts.tol * 1.0001);
  // Flux equals the node-wise constitutive law (spot check).
  for (std::size_t i = 0; i < g.node_count(); i += 37) {
    Vecd arg{1.0 + st.grad_phi.at(0, i), 0.3 + st.grad_phi.at(1, i), 0.0};
    const Vecd q = model.apply(omega.omega_at(i), arg);
    for (int c = 0; c < 2; ++c) CHECK(st.flux.at(c, i) == doctest::Approx(q[c]));
  }
  // Linearized coefficient has symmetric part >= effective lambda (spot check).
  for (std::size_t i = 0; i < g.node_count(); i += 53) {
    const double a00 = st.lin_coeff.mat(0, 0, i);
    const double a11 = st.lin_coeff.mat(1, 1, i);
    CHECK(a00 >= model.effective_lambda() - 1e-12);
    CHECK(a11 >= model.effective_lambda() - 1e-12);
  }
}

TEST_CASE("xi-homogeneity for linear models: phi(c xi) = c phi(xi)") {
  TorusGrid g(1, 128, 32.0);
  FieldSpec spec{1, 0.5, 1.0, 1.0};
  const ParameterField omega = sample_parameter_field(spec, g, 5);
  LinearModel model(1, 1, 1.0, 2.0);
  NewtonOptions opts;
  opts.tol = 1e-11;
  const CorrectorState a = solve_nonlinear(omega, model, {1.0, 0.0, 0.0}, 64.0, opts);
  const CorrectorState b = solve_nonlinear(omega, model, {2.5, 0.0, 0.0}, 64.0, opts);
  double worst = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    worst = std::max(worst, std::fabs(b.phi.at(0, i) - 2.5 * a.phi.at(0, i)));
    scale = std::max(scale, std::fabs(b.phi.at(0, i)));
  }
  CHECK(worst <= 1e-8 * std::max(scale, 1.0));
}

TEST_CASE("massless solves keep the corrector mean-zero") {
  TorusGrid g(2, 16, 8.0);
  FieldSpec spec{2, 0.5, 1.0, 1.0};
  const ParameterField omega = sample_parameter_field(spec, g, 31);
  SinePerturbedModel model(2, 2, 1.0, 2.0);
  const CorrectorState st = solve_nonlinear(omega, model, {1.0, 0.0, 0.0}, kInfiniteMass);
  CHECK(std::fabs(st.phi.component_mean(0)) < 1e-12);
}

TEST_CASE("newton iteration cap raises NoConvergence") {
  TorusGrid g(1, 64, 16.0);
  FieldSpec spec{2, 0.5, 1.0, 1.0};
  const ParameterField omega = sample_parameter_field(spec, g, 41);
  SinePerturbedModel model(1, 2, 1.0, 2.0);
  NewtonOptions opts;
  opts.tol = 1e-13;
  opts.max_newton = 0;
  CHECK_THROWS_AS((void)solve_nonlinear(omega, model, {1.0, 0.0, 0.0}, 4.0, opts),
                  NoConvergence);
}
