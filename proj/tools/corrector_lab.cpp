// corrector-lab: stochastic homogenization laboratory for monotone operators
// on the periodic torus. Subcommands cover field sampling, corrector solves,
// the linearized hierarchy, Monte-Carlo homogenization and the scaling-law
// experiment suite; every run is reproducible from its emitted manifest.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "correctorlab/config.hpp"
#include "correctorlab/homogenize.hpp"
#include "correctorlab/runs.hpp"
#include "correctorlab/sensitivity.hpp"

namespace fs = std::filesystem;
using clab::json;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::string out;
  int workers = 0;
  bool quiet = false;
  bool assert_gates = false;
};

clab::RunConfig load(const GlobalArgs& args) {
  if (args.config_path.empty()) throw clab::ConfigError("--config is required");
  clab::RunConfig rc = clab::load_config_file(args.config_path);
  if (args.has_seed) {
    rc.master_seed = args.seed;
    rc.echo["master_seed"] = args.seed;
  }
  if (!args.out.empty()) {
    rc.output_dir = args.out;
    rc.echo["output_dir"] = args.out;
  }
  if (args.workers > 0) rc.workers = args.workers;
  return rc;
}

void report(const GlobalArgs& args, const std::string& line) {
  if (!args.quiet) std::cout << line << "\n";
}

int finish_record(const GlobalArgs& args, const clab::RunRecord& rec) {
  const fs::path dir = fs::path(args.out.empty() ? rec.config.value("output_dir", "out")
                                                 : args.out) /
                       rec.experiment;
  clab::write_record(rec, dir);
  for (const auto& [name, gate] : rec.gates.items())
    report(args, "  gate " + name + ": " +
                     (gate.value("pass", false) ? "pass" : "FAIL") + " (value " +
                     clab::format_double(gate.value("value", 0.0)) + ")");
  report(args, rec.experiment + ": wrote " + (dir / "points.csv").string() + " in " +
                   clab::format_double(rec.wall_time_s) + " s");
  if (args.assert_gates && !rec.all_gates_pass()) return 3;
  return 0;
}

void write_estimate(const GlobalArgs& args, const clab::RunConfig& rc,
                    const clab::HomogenizedEstimate& est, const std::string& name) {
  const fs::path dir = fs::path(rc.output_dir) / name;
  fs::create_directories(dir);
  std::string csv = "sample,seed";
  for (int c = 0; c < rc.grid.d; ++c) csv += ",q_" + std::to_string(c);
  csv += ",residual\n";
  for (std::size_t i = 0; i < est.per_sample.size(); ++i) {
    csv += std::to_string(i) + "," + std::to_string(est.seeds[i]);
    for (int c = 0; c < rc.grid.d; ++c)
      csv += "," + clab::format_double(est.per_sample[i][c]);
    csv += "," + clab::format_double(est.per_sample_residual[i]) + "\n";
  }
  clab::write_text_file(dir / "samples.csv", csv);

  json summary;
  summary["schema"] = 1;
  summary["experiment"] = name;
  summary["config"] = rc.echo;
  summary["master_seed"] = rc.master_seed;
  summary["samples"] = est.samples;
  summary["value"] = std::vector<double>(est.value.begin(), est.value.begin() + rc.grid.d);
  summary["stderr"] =
      std::vector<double>(est.stderr_.begin(), est.stderr_.begin() + rc.grid.d);
  summary["failures"] = est.failures;
  summary["version"] = clab::kVersion;
  clab::write_text_file(dir / "summary.json", summary.dump(2) + "\n");
  report(args, name + ": value[0] = " + clab::format_double(est.value[0]) + " +- " +
                   clab::format_double(est.stderr_[0]) + " (" +
                   std::to_string(est.samples) + " samples) -> " + dir.string());
}

int cmd_sample_field(const GlobalArgs& args) {
  const clab::RunConfig rc = load(args);
  const clab::TorusGrid grid = rc.grid.make();
  const clab::ParameterField field =
      clab::sample_parameter_field(rc.field, grid, rc.master_seed);
  const fs::path dir(rc.output_dir);
  fs::create_directories(dir);
  clab::write_fld(field.omega, dir / "omega.fld");
  double sup = 0.0;
  for (std::size_t i = 0; i < grid.node_count(); ++i) {
    double s2 = 0.0;
    for (int c = 0; c < field.omega.components; ++c)
      s2 += field.omega.at(c, i) * field.omega.at(c, i);
    sup = std::max(sup, std::sqrt(s2));
  }
  json summary = {{"schema", 1},           {"experiment", "sample-field"},
                  {"config", rc.echo},     {"master_seed", rc.master_seed},
                  {"sup_norm", sup},       {"n_components", field.omega.components},
                  {"version", clab::kVersion}};
  clab::write_text_file(dir / "summary.json", summary.dump(2) + "\n");
  report(args, "sample-field: wrote " + (dir / "omega.fld").string() +
                   " (sup |omega| = " + clab::format_double(sup) + ")");
  return 0;
}

int cmd_validate_model(const GlobalArgs& args) {
  const clab::RunConfig rc = load(args);
  const clab::ModelPtr model = rc.make_model();
  const clab::AssumptionReport rep =
      clab::validate_assumptions(*model, 20000, rc.master_seed);
  json out = {{"schema", 1},
              {"model", rc.model.name},
              {"declared_lambda", rep.declared_lambda},
              {"declared_Lambda", rep.declared_Lambda},
              {"worst_monotonicity_ratio", rep.worst_monotonicity_ratio},
              {"max_dxi_norm", rep.max_dxi_norm},
              {"max_omega_lipschitz", rep.max_omega_lipschitz},
              {"monotonicity_ok", rep.monotonicity_ok},
              {"bounds_ok", rep.bounds_ok},
              {"samples", rep.samples},
              {"version", clab::kVersion}};
  const fs::path dir(rc.output_dir);
  fs::create_directories(dir);
  clab::write_text_file(dir / "model_report.json", out.dump(2) + "\n");
  if (!args.quiet) std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_solve_corrector(const GlobalArgs& args) {
  const clab::RunConfig rc = load(args);
  const clab::TorusGrid grid = rc.grid.make();
  const clab::ModelPtr model = rc.make_model();
  const clab::ParameterField omega =
      clab::sample_parameter_field(rc.field, grid, rc.master_seed);
  if (!std::isinf(rc.T) && grid.box_side < 10.0 * std::sqrt(rc.T))
    std::cerr << "warning: box_side < 10 sqrt(T); localization may be truncated\n";
  const clab::CorrectorState st =
      clab::solve_nonlinear(omega, *model, rc.xi, rc.T, rc.solver.newton());
  const fs::path dir = fs::path(rc.output_dir) / "corrector";
  fs::create_directories(dir);
  clab::write_fld(st.phi, dir / "phi.fld");
  clab::write_fld(st.grad_phi, dir / "grad_phi.fld");
  clab::write_fld(st.flux, dir / "flux.fld");
  clab::write_fld(st.lin_coeff, dir / "lin_coeff.fld");
  std::vector<double> flux_mean;
  for (int c = 0; c < grid.d; ++c) flux_mean.push_back(st.flux.component_mean(c));
  json summary = {{"schema", 1},
                  {"experiment", "solve-corrector"},
                  {"config", rc.echo},
                  {"master_seed", rc.master_seed},
                  {"xi", std::vector<double>(st.xi.begin(), st.xi.begin() + grid.d)},
                  {"T", std::isinf(rc.T) ? json("inf") : json(rc.T)},
                  {"residual", st.residual},
                  {"newton_iters", st.newton_iters},
                  {"flux_mean", flux_mean},
                  {"version", clab::kVersion}};
  clab::write_text_file(dir / "summary.json", summary.dump(2) + "\n");
  report(args, "solve-corrector: residual " + clab::format_double(st.residual) + " after " +
                   std::to_string(st.newton_iters) + " Newton steps -> " + dir.string());
  return 0;
}

int cmd_hierarchy(const GlobalArgs& args) {
  const clab::RunConfig rc = load(args);
  if (!rc.hierarchy) throw clab::ConfigError("missing hierarchy block");
  const clab::TorusGrid grid = rc.grid.make();
  const clab::ModelPtr model = rc.make_model();
  const clab::ParameterField omega =
      clab::sample_parameter_field(rc.field, grid, rc.master_seed);
  std::vector<clab::Vecd> raw;
  for (const auto& v : rc.hierarchy->directions) {
    if (static_cast<int>(v.size()) != grid.d)
      throw clab::ConfigError("hierarchy direction length mismatch");
    clab::Vecd w{0.0, 0.0, 0.0};
    for (int i = 0; i < grid.d; ++i) w[i] = v[static_cast<std::size_t>(i)];
    raw.push_back(w);
  }
  auto dirs_scale = clab::DirectionSet::normalized(raw, grid.d);
  clab::CorrectorFamily family =
      clab::make_family(omega, model, rc.xi, rc.T, dirs_scale.first, rc.solver.newton());
  family.solve_all();
  const fs::path dir = fs::path(rc.output_dir) / "family";
  clab::save_family(family, dir, rc.hierarchy->flux_correctors);
  report(args, "hierarchy: solved " +
                   std::to_string((1u << dirs_scale.first.order()) - 1) + " subsets -> " +
                   dir.string());
  return 0;
}

int cmd_homogenize(const GlobalArgs& args) {
  const clab::RunConfig rc = load(args);
  const std::size_t samples = rc.monte_carlo ? rc.monte_carlo->samples : 8;
  const clab::HomogenizedEstimate est =
      clab::estimate_A_hom(rc.make_model(), rc.field, rc.grid.make(), rc.xi, rc.T, samples,
                           rc.master_seed, rc.solver.newton(), rc.workers);
  write_estimate(args, rc, est, "homogenize");
  return 0;
}

int cmd_derivative(const GlobalArgs& args) {
  const clab::RunConfig rc = load(args);
  if (!rc.monte_carlo || rc.monte_carlo->directions.empty())
    throw clab::ConfigError("derivative needs monte_carlo.directions");
  const clab::TorusGrid grid = rc.grid.make();
  std::vector<clab::Vecd> dirs;
  for (const auto& v : rc.monte_carlo->directions) {
    if (static_cast<int>(v.size()) != grid.d)
      throw clab::ConfigError("direction length mismatch");
    clab::Vecd w{0.0, 0.0, 0.0};
    for (int i = 0; i < grid.d; ++i) w[i] = v[static_cast<std::size_t>(i)];
    dirs.push_back(w);
  }
  const clab::HomogenizedEstimate est = clab::estimate_derivative(
      rc.make_model(), rc.field, grid, rc.xi, rc.T, dirs, rc.monte_carlo->samples,
      rc.master_seed, rc.solver.newton(), rc.workers);
  write_estimate(args, rc, est, "derivative");
  if (rc.derivative_check) {
    const clab::RunRecord rec = clab::run_derivative_remainder(rc);
    return finish_record(args, rec);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"corrector-lab: correctors, linearized hierarchies and scaling laws for "
               "stochastic homogenization of monotone operators"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalArgs args;
  app.add_option("--config", args.config_path, "JSON config (or a stored manifest)");
  auto* seed_opt = app.add_option("--seed", args.seed, "override master_seed");
  app.add_option("--out", args.out, "override output directory");
  app.add_option("--workers", args.workers, "worker threads (wall time only)");
  app.add_flag("--quiet", args.quiet, "suppress progress output");
  app.add_flag("--assert", args.assert_gates,
               "exit 3 when an experiment gate fails (gated commands)");

  const std::vector<std::string> commands = {
      "sample-field",  "validate-model", "solve-corrector", "hierarchy",
      "homogenize",    "derivative",     "taylor",          "sensitivity-check",
      "scaling-T",     "t-convergence",  "growth-d1",       "variance-decay",
      "two-scale"};
  for (const std::string& name : commands) app.add_subcommand(name);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // --help is success; any usage error exits 1
  }
  args.has_seed = seed_opt->count() > 0;
  const std::string sub = app.get_subcommands().front()->get_name();

  try {
    if (sub == "sample-field") return cmd_sample_field(args);
    if (sub == "validate-model") return cmd_validate_model(args);
    if (sub == "solve-corrector") return cmd_solve_corrector(args);
    if (sub == "hierarchy") return cmd_hierarchy(args);
    if (sub == "homogenize") return cmd_homogenize(args);
    if (sub == "derivative") return cmd_derivative(args);
    if (sub == "taylor") return finish_record(args, clab::run_taylor(load(args)));
    if (sub == "sensitivity-check")
      return finish_record(args, clab::run_sensitivity_check(load(args)));
    if (sub == "scaling-T") return finish_record(args, clab::run_scaling_in_T(load(args)));
    if (sub == "t-convergence")
      return finish_record(args, clab::run_T_convergence(load(args)));
    if (sub == "growth-d1") return finish_record(args, clab::run_growth_d1(load(args)));
    if (sub == "variance-decay")
      return finish_record(args, clab::run_variance_decay(load(args)));
    if (sub == "two-scale") return finish_record(args, clab::run_two_scale(load(args)));
    std::cerr << "unknown subcommand: " << sub << "\n";
    return 1;
  } catch (const clab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "compute error: " << e.what() << "\n";
    return 2;
  }
}
