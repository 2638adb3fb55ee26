#include <doctest.h>

#include <bit>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "correctorlab/field.hpp"
#include "correctorlab/hierarchy.hpp"

using namespace clab;

namespace {

ParameterField sampled(const TorusGrid& g, std::uint64_t seed, double amplitude = 1.0) {
  FieldSpec spec{2, 0.5, amplitude, 1.0};
  return sample_parameter_field(spec, g, seed);
}

ParameterField constant_field(const TorusGrid& g, const Vecd& value) {
  GridField f = GridField::channels(g, 2);
  for (int c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < g.node_count(); ++i) f.at(c, i) = value[c];
  return ParameterField::from_values(std::move(f));
}

}  // namespace

TEST_CASE("direction sets demand unit vectors") {
  CHECK_THROWS((void)DirectionSet({Vecd{2.0, 0.0, 0.0}}, 2));
  CHECK_NOTHROW((void)DirectionSet({Vecd{0.0, 1.0, 0.0}}, 2));
  const auto [dirs, scale] = DirectionSet::normalized({Vecd{3.0, 4.0, 0.0}}, 2);
  CHECK(scale == doctest::Approx(5.0));
  CHECK(norm(dirs.vectors[0], 2) == doctest::Approx(1.0));
}

TEST_CASE("assemble_rhs: linear models have zero Faa di Bruno terms") {
  TorusGrid g(2, 16, 8.0);
  const ParameterField omega = sampled(g, 3);
  auto model = std::make_shared<LinearModel>(2, 2, 1.0, 2.0);
  const DirectionSet dirs({Vecd{1.0, 0.0, 0.0}, Vecd{0.0, 1.0, 0.0}}, 2);
  CorrectorFamily fam = make_family(omega, model, {1.0, 0.0, 0.0}, 16.0, dirs);
  fam.solve_all();
  const GridField rhs = fam.assemble_rhs(0b11u);
  for (double v : rhs.values) CHECK(v == 0.0);
}

TEST_CASE("assemble_rhs matches a hand-assembled evaluation at random nodes") {
  TorusGrid g(2, 16, 8.0);
  const ParameterField omega = sampled(g, 5);
  auto model = std::make_shared<SinePerturbedModel>(2, 2, 1.0, 2.0);
  const Vecd v1{1.0, 0.0, 0.0};
  const Vecd v2{0.0, 1.0, 0.0};
  CorrectorFamily fam = make_family(omega, model, {0.8, -0.3, 0.0}, 16.0,
                                    DirectionSet({v1, v2}, 2));
  fam.solve_all();
  const GridField rhs = fam.assemble_rhs(0b11u);

  // |S| = 2 has one proper partition {{1},{2}}:
  // d2_xi A[(v1 + grad phi_1) (x) (v2 + grad phi_2)].
  const LinearizedCorrector& c1 = fam.entry(0b01u);
  const LinearizedCorrector& c2 = fam.entry(0b10u);
  for (std::size_t i = 0; i < g.node_count(); i += 29) {
    Vecd arg{0.8 + fam.base().grad_phi.at(0, i), -0.3 + fam.base().grad_phi.at(1, i), 0.0};
    std::vector<Vecd> ws{{v1[0] + c1.grad_phi.at(0, i), v1[1] + c1.grad_phi.at(1, i), 0.0},
                         {v2[0] + c2.grad_phi.at(0, i), v2[1] + c2.grad_phi.at(1, i), 0.0}};
    const Vecd expected = model->d_xi(omega.omega_at(i), arg, 2, ws);
    for (int c = 0; c < 2; ++c)
      CHECK(rhs.at(c, i) == doctest::Approx(expected[c]).epsilon(1e-12));
  }
}

TEST_CASE("assemble_rhs for |S| = 3 sums exactly the four proper partitions") {
  TorusGrid g(2, 8, 4.0);
  const ParameterField omega = sampled(g, 7);
  auto model = std::make_shared<SinePerturbedModel>(2, 2, 1.0, 2.0);
  const Vecd e1{1.0, 0.0, 0.0};
  const Vecd e2{0.0, 1.0, 0.0};
  CorrectorFamily fam = make_family(omega, model, {0.5, 0.2, 0.0}, 8.0,
                                    DirectionSet({e1, e2, e1}, 2));
  fam.solve_all();
  CHECK(partitions_of_mask(0b111u, true).size() == 4);
  const GridField rhs = fam.assemble_rhs(0b111u);

  // Independent assembly, summing the four proper partitions by hand:
  // {1}{2}{3}, {12}{3}, {13}{2}, {1}{23}.
  const auto w_of = [&](std::uint32_t bm, std::size_t i) {
    const LinearizedCorrector& sub = fam.entry(bm);
    Vecd w{sub.grad_phi.at(0, i), sub.grad_phi.at(1, i), 0.0};
    if (std::popcount(bm) == 1) {
      const int slot = std::countr_zero(bm);
      const Vecd& v = fam.directions().vectors[static_cast<std::size_t>(slot)];
      w[0] += v[0];
      w[1] += v[1];
    }
    return w;
  };
  for (std::size_t i = 0; i < g.node_count(); i += 13) {
    Vecd arg{0.5 + fam.base().grad_phi.at(0, i), 0.2 + fam.base().grad_phi.at(1, i), 0.0};
    const Vecd w1 = w_of(0b001u, i), w2 = w_of(0b010u, i), w3 = w_of(0b100u, i);
    const Vecd w12 = w_of(0b011u, i), w13 = w_of(0b101u, i), w23 = w_of(0b110u, i);
    Vecd expected{0.0, 0.0, 0.0};
    const auto add = [&](std::vector<Vecd> ws) {
      const Vecd t = model->d_xi(omega.omega_at(i), arg, static_cast<int>(ws.size()), ws);
      for (int c = 0; c < 2; ++c) expected[c] += t[c];
    };
    add({w1, w2, w3});
    add({w12, w3});
    add({w13, w2});
    add({w1, w23});
    for (int c = 0; c < 2; ++c)
      CHECK(rhs.at(c, i) == doctest::Approx(expected[c]).epsilon(1e-11));
  }
}

TEST_CASE("linear collapse: phi_S and flux_S vanish for |S| >= 2") {
  TorusGrid g(2, 16, 8.0);
  const ParameterField omega = sampled(g, 9);
  auto model = std::make_shared<LinearModel>(2, 2, 1.0, 2.0);
  CorrectorFamily fam = make_family(omega, model, {1.0, 0.5, 0.0}, 32.0,
                                    DirectionSet({Vecd{1.0, 0.0, 0.0}, Vecd{0.0, 1.0, 0.0}}, 2));
  fam.solve_all();
  const LinearizedCorrector& top = fam.entry(0b11u);
  for (double v : top.phi.values) CHECK(v == 0.0);
  for (double v : top.flux.values) CHECK(v == 0.0);
}

TEST_CASE("first-order linearization of a linear model is the corrector at xi = e") {
  // d_xi phi_xi [e] = phi_e when A(omega, xi) = a(omega) xi.
  TorusGrid g(1, 128, 32.0);
  const ParameterField omega = sampled(g, 13);
  auto model = std::make_shared<LinearModel>(1, 2, 1.0, 2.0);
  NewtonOptions opts;
  opts.tol = 1e-11;
  CorrectorFamily fam = make_family(omega, model, {0.37, 0.0, 0.0}, 16.0,
                                    DirectionSet({Vecd{1.0, 0.0, 0.0}}, 1), opts);
  fam.solve_all();
  const CorrectorState at_e = solve_nonlinear(omega, *model, {1.0, 0.0, 0.0}, 16.0, opts);
  const LinearizedCorrector& lin = fam.entry(1u);
  double worst = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    worst = std::max(worst, std::fabs(lin.phi.at(0, i) - at_e.phi.at(0, i)));
    scale = std::max(scale, std::fabs(at_e.phi.at(0, i)));
  }
  CHECK(worst <= 2e-11 * std::max(1.0, scale) + 2e-11);
}

TEST_CASE("constant parameter fields produce vanishing linearized correctors") {
  TorusGrid g(2, 8, 4.0);
  const ParameterField omega = constant_field(g, {0.2, 0.4, 0.0});
  auto model = std::make_shared<SinePerturbedModel>(2, 2, 1.0, 2.0);
  CorrectorFamily fam = make_family(omega, model, {0.9, 0.1, 0.0}, 8.0,
                                    DirectionSet({Vecd{1.0, 0.0, 0.0}, Vecd{0.0, 1.0, 0.0}}, 2));
  fam.solve_all();
  for (const std::uint32_t m : {1u, 2u, 3u}) {
    const LinearizedCorrector& lin = fam.entry(m);
    for (double v : lin.phi.values) CHECK(std::fabs(v) < 1e-10);
  }
  // |S| = 1 flux is the constant a v.
  const LinearizedCorrector& l1 = fam.entry(1u);
  const double a00 = fam.base().lin_coeff.mat(0, 0, 0);
  for (std::size_t i = 0; i < g.node_count(); ++i)
    CHECK(l1.flux.at(0, i) == doctest::Approx(a00).epsilon(1e-9));
}

TEST_CASE("direction symmetry: L = 2 corrector is invariant under slot swap") {
  TorusGrid g(2, 16, 8.0);
  const ParameterField omega = sampled(g, 15);
  auto model = std::make_shared<SinePerturbedModel>(2, 2, 1.0, 2.0);
  const Vecd u{0.6, 0.8, 0.0};
  const Vecd v{1.0, 0.0, 0.0};
  CorrectorFamily fab = make_family(omega, model, {0.8, -0.4, 0.0}, 16.0,
                                    DirectionSet({u, v}, 2));
  fab.solve_all();
  CorrectorFamily fba = make_family(omega, model, {0.8, -0.4, 0.0}, 16.0,
                                    DirectionSet({v, u}, 2));
  fba.solve_all();
  const GridField& a = fab.entry(0b11u).phi;
  const GridField& b = fba.entry(0b11u).phi;
  double scale = 0.0;
  for (double x : a.values) scale = std::max(scale, std::fabs(x));
  for (std::size_t i = 0; i < a.values.size(); ++i)
    CHECK(std::fabs(a.values[i] - b.values[i]) <= 1e-10 * std::max(1.0, scale));
}

TEST_CASE("downward closure and MissingSubcorrector") {
  TorusGrid g(1, 32, 8.0);
  const ParameterField omega = sampled(g, 17);
  auto model = std::make_shared<SinePerturbedModel>(1, 2, 1.0, 2.0);
  CorrectorFamily fam = make_family(omega, model, {1.0, 0.0, 0.0}, 8.0,
                                    DirectionSet({Vecd{1.0, 0.0, 0.0}, Vecd{1.0, 0.0, 0.0}}, 1));
  CHECK_THROWS_AS((void)fam.assemble_rhs(0b11u), MissingSubcorrector);
  fam.solve_linearized(0b01u);
  CHECK_THROWS_AS((void)fam.assemble_rhs(0b11u), MissingSubcorrector);
  fam.solve_linearized(0b10u);
  CHECK_NOTHROW((void)fam.assemble_rhs(0b11u));
}

TEST_CASE("sigma: constant flux, 1-d, and gradient-type flux all vanish") {
  TorusGrid g1(1, 32, 8.0);
  GridField q1 = GridField::vector(g1);
  for (double& v : q1.values) v = 3.0;
  const GridField s1 = solve_sigma(q1, 16.0);
  for (double v : s1.values) CHECK(v == 0.0);

  TorusGrid g(2, 16, 8.0);
  GridField qc = GridField::vector(g);
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    qc.at(0, i) = 1.0;
    qc.at(1, i) = -2.0;
  }
  const GridField s2 = solve_sigma(qc, 16.0);
  for (double v : s2.values) CHECK(std::fabs(v) < 1e-14);

  FieldSpec spec{1, 0.5, 1.0, 1.0};
  GridField h = sample_gaussian(spec, g, 19);
  const GridField qg = gradient(component_field(h, 0));
  const GridField s3 = solve_sigma(qg, 16.0);
  double scale = 0.0;
  for (double v : qg.values) scale = std::max(scale, std::fabs(v));
  for (double v : s3.values) CHECK(std::fabs(v) <= 1e-10 * std::max(1.0, scale));
}

TEST_CASE("sigma is exactly antisymmetric") {
  TorusGrid g(2, 16, 4.0);
  FieldSpec spec{2, 0.5, 1.0, 1.0};
  GridField raw = sample_gaussian(spec, g, 23);
  GridField q = GridField::vector(g);
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    q.at(0, i) = raw.at(0, i);
    q.at(1, i) = raw.at(1, i);
  }
  const GridField s = solve_sigma(q, 4.0);
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    CHECK(s.mat(0, 0, i) == 0.0);
    CHECK(s.mat(1, 1, i) == 0.0);
    CHECK(s.mat(0, 1, i) == -s.mat(1, 0, i));
  }
}

TEST_CASE("psi: vanishing cases and the single-mode closed form") {
  TorusGrid g(2, 16, 4.0);
  GridField q = GridField::vector(g);
  for (std::size_t i = 0; i < g.node_count(); ++i) q.at(0, i) = 2.0;
  GridField grad0 = GridField::vector(g);
  const GridField psi0 = solve_psi(q, grad0, 8.0);
  for (double v : psi0.values) CHECK(std::fabs(v) < 1e-14);

  // q = grad h + mean: psi = 0.
  FieldSpec spec{1, 0.5, 1.0, 1.0};
  GridField h = sample_gaussian(spec, g, 29);
  GridField qg = gradient(component_field(h, 0));
  GridField qshift = qg;
  for (std::size_t i = 0; i < g.node_count(); ++i) qshift.at(0, i) += 1.3;
  const GridField psi1 = solve_psi(qshift, qg, 8.0);
  double scale = 0.0;
  for (double v : qg.values) scale = std::max(scale, std::fabs(v));
  for (double v : psi1.values) CHECK(std::fabs(v) <= 1e-13 * std::max(1.0, scale));

  // Single mode: (1/T + k^2) psi = q.
  const double L = 4.0;
  const double k = 2.0 * std::numbers::pi / L;
  GridField qm = GridField::vector(g);
  for (std::size_t i = 0; i < g.node_count(); ++i)
    qm.at(1, i) = std::cos(k * g.node(i)[0]);
  const GridField psi2 = solve_psi(qm, grad0, 2.0);
  for (std::size_t i = 0; i < g.node_count(); ++i)
    CHECK(psi2.at(1, i) ==
          doctest::Approx(std::cos(k * g.node(i)[0]) / (0.5 + k * k)).epsilon(1e-12));
  CHECK_THROWS((void)solve_psi(qm, grad0, kInfiniteMass));
}

TEST_CASE("flux decomposition identity holds to a solver-tolerance multiple") {
  TorusGrid g(2, 32, 8.0);
  const ParameterField omega = sampled(g, 31);
  auto model = std::make_shared<SinePerturbedModel>(2, 2, 1.0, 2.0);
  NewtonOptions opts;
  opts.tol = 1e-10;
  const double T = 8.0;
  CorrectorFamily fam = make_family(omega, model, {1.0, 0.2, 0.0}, T,
                                    DirectionSet({Vecd{1.0, 0.0, 0.0}, Vecd{0.0, 1.0, 0.0}}, 2),
                                    opts);
  fam.solve_all();

  {
    const GridField sigma = solve_sigma(fam.base().flux, T);
    const GridField psi = solve_psi(fam.base().flux, fam.base().grad_phi, T);
    CHECK(helmholtz_residual(fam.base().flux, sigma, &psi, T) <= 1e-7);
  }
  for (const std::uint32_t m : {1u, 2u, 3u}) {
    const LinearizedCorrector& lin = fam.entry(m);
    const GridField sigma = solve_sigma(lin.flux, T);
    const GridField psi = solve_psi(lin.flux, lin.grad_phi, T);
    CHECK(helmholtz_residual(lin.flux, sigma, &psi, T) <= 1e-7);
  }

  // Sensitivity of the check: corrupting one node of psi must be caught.
  const LinearizedCorrector& lin = fam.entry(1u);
  GridField sigma = solve_sigma(lin.flux, T);
  GridField psi = solve_psi(lin.flux, lin.grad_phi, T);
  psi.at(0, 42) += 1.0;
  CHECK(helmholtz_residual(lin.flux, sigma, &psi, T) > 1e-4);

  // Constant flux: 0/eps-guarded residual is zero.
  GridField qc = GridField::vector(g);
  for (std::size_t i = 0; i < g.node_count(); ++i) qc.at(0, i) = 5.0;
  const GridField sc = solve_sigma(qc, T);
  GridField pc = solve_psi(qc, GridField::vector(g), T);
  CHECK(helmholtz_residual(qc, sc, &pc, T) == 0.0);
}

TEST_CASE("dual corrector: symmetric coefficients reduce to the primal one") {
  TorusGrid g(2, 16, 8.0);
  const ParameterField omega = sampled(g, 37);
  auto model = std::make_shared<SinePerturbedModel>(2, 2, 1.0, 2.0);
  NewtonOptions opts;
  opts.tol = 1e-11;
  const Vecd e1{1.0, 0.0, 0.0};
  CorrectorFamily fam = make_family(omega, model, {0.8, 0.3, 0.0}, 16.0,
                                    DirectionSet({e1}, 2), opts);
  fam.solve_all();
  const DualCorrector dual = solve_dual_first_order(fam, e1, 1e-11);
  const GridField& primal = fam.entry(1u).phi;
  double scale = 0.0;
  for (double v : primal.values) scale = std::max(scale, std::fabs(v));
  for (std::size_t i = 0; i < g.node_count(); ++i)
    CHECK(std::fabs(dual.phi_star.at(0, i) - primal.at(0, i)) <= 1e-9 * std::max(1.0, scale));

  // Constant omega: dual corrector vanishes.
  const ParameterField oc = constant_field(g, {0.1, 0.5, 0.0});
  CorrectorFamily fc = make_family(oc, model, {0.8, 0.3, 0.0}, 16.0, DirectionSet({e1}, 2), opts);
  fc.solve_all();
  const DualCorrector dc = solve_dual_first_order(fc, e1, 1e-11);
  for (double v : dc.phi_star.values) CHECK(std::fabs(v) < 1e-12);
}

TEST_CASE("duality pairing: mean q*_{e1}.e2 equals mean q_{xi,e2}.e1 per sample") {
  TorusGrid g(2, 32, 8.0);
  auto model = std::make_shared<SinePerturbedModel>(2, 2, 1.0, 2.0);
  NewtonOptions opts;
  opts.tol = 1e-11;
  const Vecd e1{1.0, 0.0, 0.0};
  const Vecd e2{0.0, 1.0, 0.0};
  for (std::uint64_t seed : {101ULL, 102ULL, 103ULL}) {
    const ParameterField omega = sampled(g, seed);
    CorrectorFamily fam = make_family(omega, model, {0.7, -0.2, 0.0}, kInfiniteMass,
                                      DirectionSet({e2}, 2), opts);
    fam.solve_all();
    const DualCorrector dual = solve_dual_first_order(fam, e1, 1e-11);
    const double lhs = dual.q_star.component_mean(1);         // q*_{e1} . e2
    const double rhs = fam.entry(1u).flux.component_mean(0);  // q_{xi,e2} . e1
    CHECK(std::fabs(lhs - rhs) <= 1e-8);
  }
}

TEST_CASE("family persistence writes subset-coded fields with certificates") {
  TorusGrid g(1, 32, 8.0);
  const ParameterField omega = sampled(g, 41);
  auto model = std::make_shared<SinePerturbedModel>(1, 2, 1.0, 2.0);
  CorrectorFamily fam = make_family(omega, model, {1.0, 0.0, 0.0}, 8.0,
                                    DirectionSet({Vecd{1.0, 0.0, 0.0}, Vecd{1.0, 0.0, 0.0}}, 1));
  fam.solve_all();
  const auto dir = std::filesystem::temp_directory_path() / "clab_family";
  std::filesystem::remove_all(dir);
  save_family(fam, dir, /*with_flux_correctors=*/true);
  CHECK(std::filesystem::exists(dir / "phi_S1.fld"));
  CHECK(std::filesystem::exists(dir / "phi_S1-2.fld"));
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  const auto manifest = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
  CHECK(manifest.at("subsets").contains("S1-2"));
  CHECK(manifest.at("subsets").at("S1").at("residual").get<double>() <= 1e-9);
  CHECK(manifest.at("subsets").at("S1").at("helmholtz_residual").get<double>() <= 1e-7);
  const GridField back = read_fld(dir / "phi_S1.fld");
  const GridField& orig = fam.entry(1u).phi;
  for (std::size_t i = 0; i < orig.values.size(); ++i)
    CHECK(back.values[i] == orig.values[i]);
  std::filesystem::remove_all(dir);
}
