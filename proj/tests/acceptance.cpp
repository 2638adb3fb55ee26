// Acceptance suite: every quantitative claim the toolkit is built to verify,
// each at its pinned tolerance. One pass/fail line is printed per criterion.

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <string>

#include "acceptance_configs.hpp"
#include "correctorlab/config.hpp"
#include "correctorlab/homogenize.hpp"
#include "correctorlab/runs.hpp"
#include "correctorlab/sensitivity.hpp"

using namespace clab;
namespace fs = std::filesystem;

namespace {

void verdict(int criterion, bool pass, const std::string& what) {
  std::printf("[%s] criterion %2d: %s\n", pass ? "PASS" : "FAIL", criterion, what.c_str());
  std::fflush(stdout);
}

RunConfig load(const nlohmann::json& doc, int workers = 2) {
  RunConfig rc = parse_config(doc);
  rc.workers = workers;
  return rc;
}

ParameterField two_valued_layout(const TorusGrid& g, std::size_t shift) {
  GridField f = GridField::channels(g, 1);
  const std::size_t n = g.node_count();
  for (std::size_t i = 0; i < n; ++i)
    f.at(0, (i + shift) % n) = (i < n / 2) ? -(1.0 - 1e-12) : (1.0 - 1e-12);
  return ParameterField::from_values(std::move(f));
}

}  // namespace

TEST_CASE("criterion 1: flux decomposition identity") {
  const RunConfig rc = load(acceptance::c1_decomposition());
  const TorusGrid grid = rc.grid.make();
  const ModelPtr model = rc.make_model();
  const DirectionSet dirs({Vecd{1.0, 0.0, 0.0}, Vecd{0.0, 1.0, 0.0}}, 2);

  double worst = 0.0;
  for (std::size_t s = 0; s < 10; ++s) {
    const ParameterField omega =
        sample_parameter_field(rc.field, grid, derive_seed(rc.master_seed, s));
    CorrectorFamily fam = make_family(omega, model, rc.xi, rc.T, dirs, rc.solver.newton());
    fam.solve_all();
    {
      const GridField sigma = solve_sigma(fam.base().flux, rc.T);
      const GridField psi = solve_psi(fam.base().flux, fam.base().grad_phi, rc.T);
      worst = std::max(worst, helmholtz_residual(fam.base().flux, sigma, &psi, rc.T));
    }
    for (const std::uint32_t m : {1u, 2u, 3u}) {
      const LinearizedCorrector& lin = fam.entry(m);
      const GridField sigma = solve_sigma(lin.flux, rc.T);
      const GridField psi = solve_psi(lin.flux, lin.grad_phi, rc.T);
      worst = std::max(worst, helmholtz_residual(lin.flux, sigma, &psi, rc.T));
    }
  }
  const bool pass = worst <= 1e-7;
  verdict(1, pass, "helmholtz residual <= 1e-7 over 10 seeds, orders 0..2 (worst " +
                       format_double(worst) + ")");
  CHECK(pass);
}

TEST_CASE("criterion 2: d=1 harmonic-mean oracle") {
  const RunConfig rc = load(acceptance::c2_harmonic_oracle());
  const TorusGrid grid = rc.grid.make();
  const ModelPtr model = rc.make_model();
  const double xi1 = rc.xi[0];
  double worst = 0.0;
  for (std::size_t shift : {std::size_t{0}, std::size_t{17}, std::size_t{64},
                            std::size_t{101}, std::size_t{200}}) {
    const ParameterField omega = two_valued_layout(grid, shift);
    const CorrectorState st = solve_nonlinear(omega, *model, rc.xi, rc.T, rc.solver.newton());
    worst = std::max(worst, std::fabs(st.flux.component_mean(0) - 1.6 * xi1));
  }
  const bool pass = worst <= 1e-9;
  verdict(2, pass,
          "|A_hom(xi) - 1.6 xi| <= 1e-9 per sample, 50/50 layout (worst " +
              format_double(worst) + ")");
  CHECK(pass);
}

TEST_CASE("criterion 3: linear collapse of orders >= 2") {
  const RunConfig rc = load(acceptance::c3_linear_collapse());
  const TorusGrid grid = rc.grid.make();
  const ModelPtr model = rc.make_model();
  const DirectionSet dirs({Vecd{1.0, 0.0, 0.0}, Vecd{0.0, 1.0, 0.0}}, 2);
  const ParameterField omega =
      sample_parameter_field(rc.field, grid, derive_seed(rc.master_seed, 0));
  CorrectorFamily fam = make_family(omega, model, rc.xi, rc.T, dirs, rc.solver.newton());
  fam.solve_all();
  const double grad_norm = norm_l2(fam.entry(3u).grad_phi);

  std::vector<Vecd> raw_dirs{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}};
  const HomogenizedEstimate est =
      estimate_derivative(model, rc.field, grid, rc.xi, rc.T, raw_dirs, 2, rc.master_seed,
                          rc.solver.newton(), 2);
  const double est_norm = std::max({std::fabs(est.value[0]), std::fabs(est.value[1]),
                                    est.stderr_[0], est.stderr_[1]});
  const bool pass = grad_norm <= 1e-8 && est_norm <= 1e-8;
  verdict(3, pass,
          "||grad phi_S||ord2 = " + format_double(grad_norm) +
              ", |d2 A_hom| = " + format_double(est_norm) + " (both <= 1e-8)");
  CHECK(pass);
}

TEST_CASE("criterion 4: derivative representation of the flux average") {
  const RunRecord rec = run_derivative_remainder(load(acceptance::c4_derivative_remainder()));
  const double order = rec.gates.at("order").at("value").get<double>();
  const bool pass = order >= 1.9;
  verdict(4, pass, "quenched first-order expansion remainder order " + format_double(order) +
                       " >= 1.9");
  CHECK(pass);
}

TEST_CASE("criterion 5: Taylor remainder rates K = 0, 1") {
  bool pass = true;
  std::string msg;
  for (int K : {0, 1}) {
    const RunRecord rec = run_taylor(load(acceptance::c5_taylor(K)));
    const double order = rec.gates.at("order").at("value").get<double>();
    const bool ok = order >= K + 0.8;
    pass = pass && ok;
    msg += "K=" + std::to_string(K) + " order " + format_double(order) + " (>= " +
           format_double(K + 0.8) + ") ";
  }
  verdict(5, pass, "gradient Taylor remainders: " + msg);
  CHECK(pass);
}

TEST_CASE("criterion 6: mu_star scaling of corrector moments") {
  const RunRecord d1 = run_scaling_in_T(load(acceptance::c6_scaling_d1()));
  const double slope = d1.gates.at("slope").at("value").get<double>();
  const double r2 = d1.gates.at("r2").at("value").get<double>();
  const bool d1_ok = std::fabs(slope - 0.5) <= 0.1 && r2 >= 0.95;

  const RunRecord d3 = run_scaling_in_T(load(acceptance::c6_scaling_d3()));
  const double ratio = d3.gates.at("moment_ratio").at("value").get<double>();
  const bool d3_ok = ratio <= 1.5;

  const RunRecord d2 = run_scaling_in_T(load(acceptance::c6_scaling_d2()));
  const double d2_r2 = d2.gates.at("mu2_linearity_r2").at("value").get<double>();

  const bool pass = d1_ok && d3_ok;
  verdict(6, pass,
          "d=1 slope " + format_double(slope) + " in [0.4,0.6], r2 " + format_double(r2) +
              " >= 0.95; d=3 ratio " + format_double(ratio) +
              " <= 1.5; d=2 informative r2 " + format_double(d2_r2));
  CHECK(d1_ok);
  CHECK(d3_ok);
}

TEST_CASE("criterion 7: massive-limit convergence rate") {
  const RunRecord d1 = run_T_convergence(load(acceptance::c7_tconv_d1()));
  const double s1 = d1.gates.at("slope_base").at("value").get<double>();
  const double s1l = d1.gates.at("slope_linearized").at("value").get<double>();
  const bool d1_ok = std::fabs(s1 + 0.5) <= 0.15 && std::fabs(s1l + 0.5) <= 0.15;

  const RunRecord d3 = run_T_convergence(load(acceptance::c7_tconv_d3()));
  const double s3 = d3.gates.at("slope_base").at("value").get<double>();
  const double s3l = d3.gates.at("slope_linearized").at("value").get<double>();
  const bool d3_ok = std::fabs(s3 + 1.0) <= 0.2 && std::fabs(s3l + 1.0) <= 0.2;

  const bool pass = d1_ok && d3_ok;
  verdict(7, pass,
          "d=1 slopes " + format_double(s1) + "/" + format_double(s1l) +
              " in -0.5 +- 0.15; d=3 slopes " + format_double(s3) + "/" + format_double(s3l) +
              " in -1.0 +- 0.2 (base/linearized)");
  CHECK(d1_ok);
  CHECK(d3_ok);
}

TEST_CASE("criterion 8: variance decay of averaged corrector gradients") {
  const RunRecord d1 = run_variance_decay(load(acceptance::c8_variance_d1()));
  const double s1 = d1.gates.at("slope").at("value").get<double>();
  const RunRecord d2 = run_variance_decay(load(acceptance::c8_variance_d2()));
  const double s2 = d2.gates.at("slope").at("value").get<double>();
  const bool pass = std::fabs(s1 + 1.0) <= 0.4 && std::fabs(s2 + 2.0) <= 0.4;
  verdict(8, pass,
          "slopes d=1 " + format_double(s1) + " (-1 +- 0.4), d=2 " + format_double(s2) +
              " (-2 +- 0.4), 128 samples");
  CHECK(pass);
}

TEST_CASE("criterion 9: omega-sensitivity against finite differences") {
  bool pass = true;
  std::string msg;
  for (const std::string model : {"Linear", "SinePerturbed"}) {
    for (int subset : {0, 1}) {
      const RunRecord rec = run_sensitivity_check(load(acceptance::c9_sensitivity(model, subset)));
      const double order = rec.gates.at("order").at("value").get<double>();
      const double err = rec.gates.at("small_step_error").at("value").get<double>();
      const bool ok = order >= 0.9 && err <= 1e-3;
      pass = pass && ok;
      msg += model + "/S" + std::to_string(subset) + ": err " + format_double(err) +
             ", order " + format_double(order) + "; ";
    }
  }
  verdict(9, pass, "error <= 1e-3 at t = 1e-4 and order >= 0.9: " + msg);
  CHECK(pass);
}

TEST_CASE("criterion 10: duality pairing of first-order fluxes") {
  const RunConfig rc = load(acceptance::c10_dual_pairing());
  const TorusGrid grid = rc.grid.make();
  const ModelPtr model = rc.make_model();
  const Vecd e1{1.0, 0.0, 0.0};
  const Vecd e2{0.0, 1.0, 0.0};
  double worst = 0.0;
  for (std::size_t s = 0; s < 10; ++s) {
    const ParameterField omega =
        sample_parameter_field(rc.field, grid, derive_seed(rc.master_seed, s));
    CorrectorFamily fam =
        make_family(omega, model, rc.xi, rc.T, DirectionSet({e2}, 2), rc.solver.newton());
    fam.solve_all();
    const DualCorrector dual = solve_dual_first_order(fam, e1, rc.solver.tol);
    worst = std::max(worst, std::fabs(dual.q_star.component_mean(1) -
                                      fam.entry(1u).flux.component_mean(0)));
  }
  const bool pass = worst <= 1e-8;
  verdict(10, pass,
          "per-sample |mean q*_{e1}.e2 - mean q_{xi,e2}.e1| <= 1e-8 over 10 seeds (worst " +
              format_double(worst) + ")");
  CHECK(pass);
}

TEST_CASE("criterion 11: two-scale expansion error") {
  const RunRecord main_run = run_two_scale(load(acceptance::c11_two_scale()));
  const bool decreasing = main_run.gates.at("h1_decreasing").at("pass").get<bool>();
  const bool l2_ok = main_run.gates.at("l2_le_h1").at("pass").get<bool>();
  const RunRecord control = run_two_scale(load(acceptance::c11_two_scale_control()));
  const double control_err = control.gates.at("control_error").at("value").get<double>();
  const bool control_ok = control_err <= 1e-6;
  const bool pass = decreasing && l2_ok && control_ok;
  verdict(11, pass,
          std::string("relative H1 error strictly decreasing: ") +
              (decreasing ? "yes" : "NO") + "; control error " + format_double(control_err) +
              " <= 1e-6");
  CHECK(decreasing);
  CHECK(l2_ok);
  CHECK(control_ok);
}

TEST_CASE("criterion 12: manifests re-run bit-identically, worker-independent") {
  const fs::path dir = fs::temp_directory_path() / "clab_acceptance_c12";
  fs::remove_all(dir);

  RunConfig rc1 = load(acceptance::c12_determinism(), /*workers=*/1);
  const RunRecord rec1 = run_variance_decay(rc1);
  write_record(rec1, dir);
  const StoredRecord stored = read_record(dir);

  RunConfig rc2 = parse_config(stored.manifest);
  rc2.workers = 2;
  const RunRecord rec2 = run_variance_decay(rc2);

  RunConfig rc3 = parse_config(stored.manifest);
  rc3.workers = 3;
  const RunRecord rec3 = run_variance_decay(rc3);

  const bool pass = record_csv(rec2) == stored.csv && record_csv(rec3) == stored.csv;
  verdict(12, pass, "variance-decay manifest re-runs reproduce the CSV byte-for-byte "
                    "with 1, 2 and 3 workers");
  CHECK(pass);
  fs::remove_all(dir);
}
