#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "correctorlab/corrector.hpp"
#include "correctorlab/errors.hpp"
#include "correctorlab/field.hpp"
#include "correctorlab/grid.hpp"
#include "correctorlab/io.hpp"
#include "correctorlab/operator.hpp"

namespace clab {

using nlohmann::json;

namespace cfg {

inline void reject_unknown(const json& block, const std::set<std::string>& allowed,
                           const std::string& where) {
  if (!block.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : block.items())
    if (!allowed.count(key)) throw ConfigError("unknown key \"" + key + "\" in " + where);
}

template <typename T>
T get_or(const json& block, const std::string& key, T fallback) {
  if (!block.contains(key)) return fallback;
  return block.at(key).get<T>();
}

inline double get_mass(const json& block, const std::string& key, double fallback) {
  if (!block.contains(key)) return fallback;
  const auto& v = block.at(key);
  if (v.is_string()) {
    if (v.get<std::string>() == "inf") return kInfiniteMass;
    throw ConfigError(key + " must be a positive number or \"inf\"");
  }
  const double t = v.get<double>();
  if (!(t > 0.0)) throw ConfigError(key + " must be positive");
  return t;
}

inline Vecd get_vec(const json& block, const std::string& key, int d) {
  const auto arr = block.at(key).get<std::vector<double>>();
  if (static_cast<int>(arr.size()) != d)
    throw ConfigError(key + " must have " + std::to_string(d) + " entries");
  Vecd v{0.0, 0.0, 0.0};
  for (int i = 0; i < d; ++i) v[i] = arr[static_cast<std::size_t>(i)];
  return v;
}

inline std::vector<Vecd> get_vec_list(const json& block, const std::string& key, int d) {
  std::vector<Vecd> out;
  for (const auto& item : block.at(key)) {
    const auto arr = item.get<std::vector<double>>();
    if (static_cast<int>(arr.size()) != d)
      throw ConfigError(key + " entries must have " + std::to_string(d) + " components");
    Vecd v{0.0, 0.0, 0.0};
    for (int i = 0; i < d; ++i) v[i] = arr[static_cast<std::size_t>(i)];
    out.push_back(v);
  }
  return out;
}

}  // namespace cfg

struct GridConfig {
  int d = 1;
  int n_points = 64;
  double box_side = 64.0;

  TorusGrid make() const { return TorusGrid(d, n_points, box_side); }
};

struct SolverConfig {
  double tol = 1e-10;
  int max_newton = 50;
  long krylov_cap = 0;

  NewtonOptions newton() const {
    NewtonOptions o;
    o.tol = tol;
    o.max_newton = max_newton;
    o.krylov_cap = krylov_cap;
    return o;
  }
};

struct ScalingTConfig {
  std::vector<double> T_ladder;
  std::size_t samples = 16;
  double ball_radius = 1.0;
};

struct TConvergenceConfig {
  std::vector<double> T_ladder;
  std::size_t samples = 16;
  std::vector<double> direction;  // length d; first-order slot
  bool include_linearized = true;
  double ball_radius = 1.0;
};

struct GrowthConfig {
  std::vector<double> x0_ladder;
  std::size_t samples = 64;
  double ball_radius = 1.0;
};

struct VarianceDecayConfig {
  std::vector<double> R_ladder;
  std::size_t samples = 64;
  int order = 1;  // 0: nonlinear corrector, 1: first-order linearized
  std::vector<double> direction;
};

struct TwoScaleConfig {
  std::vector<double> eps_ladder{0.25, 0.125, 0.0625};
  double f_amplitude = 0.1;
  int n_fine = 4096;
  double table_range = 0.8;
  int n_table = 33;
  std::size_t samples = 4;
};

struct HierarchyConfig {
  std::vector<std::vector<double>> directions;
  bool flux_correctors = true;
};

struct TaylorConfig {
  std::vector<double> xi0;
  std::vector<double> direction;       // the tensor slot B (order 1)
  std::vector<double> step_direction;  // unit direction of xi - xi0; default e1
  int K = 1;
  std::vector<double> h_ladder{0.2, 0.1, 0.05};
};

struct DerivativeCheckConfig {
  std::vector<double> direction;  // differentiation direction e
  std::vector<double> h_ladder{0.1, 0.05, 0.025, 0.0125};
};

struct SensitivityConfig {
  std::vector<double> center;
  double radius = 1.0;
  double scale = 0.5;
  int channel = 0;
  int subset_size = 0;
  std::vector<double> steps{1e-2, 1e-3, 1e-4};
};

struct MonteCarloConfig {
  std::size_t samples = 8;
  std::vector<std::vector<double>> directions;  // empty: plain homogenize
};

struct RunConfig {
  ModelConfig model;
  FieldSpec field;
  GridConfig grid;
  SolverConfig solver;
  std::uint64_t master_seed = 1;
  int workers = 1;
  std::string output_dir = "out";
  Vecd xi{1.0, 0.0, 0.0};
  double T = kInfiniteMass;

  std::optional<ScalingTConfig> scaling_T;
  std::optional<TConvergenceConfig> t_convergence;
  std::optional<GrowthConfig> growth_d1;
  std::optional<VarianceDecayConfig> variance_decay;
  std::optional<TwoScaleConfig> two_scale;
  std::optional<HierarchyConfig> hierarchy;
  std::optional<TaylorConfig> taylor;
  std::optional<DerivativeCheckConfig> derivative_check;
  std::optional<SensitivityConfig> sensitivity;
  std::optional<MonteCarloConfig> monte_carlo;

  json echo;  // the validated document

  ModelPtr make_model() const { return clab::make_model(model, grid.d, field.n_components); }
};

/// Parse and validate a config document. Unknown keys are rejected at every
/// level. A stored manifest (schema + config keys) is accepted too: its
/// embedded config is extracted, which makes every manifest re-runnable.
inline RunConfig parse_config(const json& input) {
  json doc = input;
  if (doc.contains("schema") && doc.contains("config")) doc = doc.at("config");

  cfg::reject_unknown(doc, {"model", "field", "grid", "solver", "master_seed", "workers",
                            "output_dir", "xi", "T", "scaling_T", "t_convergence", "growth_d1",
                            "variance_decay", "two_scale", "hierarchy", "taylor",
                            "derivative_check", "sensitivity", "monte_carlo"},
                      "config");
  RunConfig rc;

  if (doc.contains("model")) {
    const json& m = doc.at("model");
    cfg::reject_unknown(m, {"name", "lambda", "Lambda", "max_order", "sine_amplitude"},
                        "model");
    rc.model.name = cfg::get_or<std::string>(m, "name", rc.model.name);
    rc.model.lambda = cfg::get_or<double>(m, "lambda", rc.model.lambda);
    rc.model.Lambda = cfg::get_or<double>(m, "Lambda", rc.model.Lambda);
    rc.model.max_order = cfg::get_or<int>(m, "max_order", rc.model.max_order);
    rc.model.sine_amplitude = cfg::get_or<double>(m, "sine_amplitude", rc.model.sine_amplitude);
  }
  if (doc.contains("field")) {
    const json& f = doc.at("field");
    cfg::reject_unknown(f, {"n_components", "alpha", "amplitude", "corr_length"}, "field");
    rc.field.n_components = cfg::get_or<int>(f, "n_components", 2);
    rc.field.alpha = cfg::get_or<double>(f, "alpha", rc.field.alpha);
    rc.field.amplitude = cfg::get_or<double>(f, "amplitude", rc.field.amplitude);
    rc.field.corr_length = cfg::get_or<double>(f, "corr_length", rc.field.corr_length);
    rc.field.validate();
  } else {
    rc.field.n_components = 2;
  }
  if (doc.contains("grid")) {
    const json& g = doc.at("grid");
    cfg::reject_unknown(g, {"d", "n_points", "box_side"}, "grid");
    rc.grid.d = cfg::get_or<int>(g, "d", rc.grid.d);
    rc.grid.n_points = cfg::get_or<int>(g, "n_points", rc.grid.n_points);
    rc.grid.box_side = cfg::get_or<double>(g, "box_side", rc.grid.box_side);
    (void)rc.grid.make();  // validates
  }
  if (doc.contains("solver")) {
    const json& s = doc.at("solver");
    cfg::reject_unknown(s, {"tol", "max_newton", "krylov_cap"}, "solver");
    rc.solver.tol = cfg::get_or<double>(s, "tol", rc.solver.tol);
    rc.solver.max_newton = cfg::get_or<int>(s, "max_newton", rc.solver.max_newton);
    rc.solver.krylov_cap = cfg::get_or<long>(s, "krylov_cap", rc.solver.krylov_cap);
    if (!(rc.solver.tol > 0.0)) throw ConfigError("solver.tol must be positive");
  }
  rc.master_seed = cfg::get_or<std::uint64_t>(doc, "master_seed", rc.master_seed);
  rc.workers = cfg::get_or<int>(doc, "workers", rc.workers);
  rc.output_dir = cfg::get_or<std::string>(doc, "output_dir", rc.output_dir);
  if (doc.contains("xi")) rc.xi = cfg::get_vec(doc, "xi", rc.grid.d);
  rc.T = cfg::get_mass(doc, "T", rc.T);

  if (doc.contains("scaling_T")) {
    const json& b = doc.at("scaling_T");
    cfg::reject_unknown(b, {"T_ladder", "samples", "ball_radius"}, "scaling_T");
    ScalingTConfig c;
    c.T_ladder = b.at("T_ladder").get<std::vector<double>>();
    c.samples = cfg::get_or<std::size_t>(b, "samples", c.samples);
    c.ball_radius = cfg::get_or<double>(b, "ball_radius", c.ball_radius);
    rc.scaling_T = c;
  }
  if (doc.contains("t_convergence")) {
    const json& b = doc.at("t_convergence");
    cfg::reject_unknown(b, {"T_ladder", "samples", "direction", "include_linearized",
                            "ball_radius"},
                        "t_convergence");
    TConvergenceConfig c;
    c.T_ladder = b.at("T_ladder").get<std::vector<double>>();
    c.samples = cfg::get_or<std::size_t>(b, "samples", c.samples);
    if (b.contains("direction")) c.direction = b.at("direction").get<std::vector<double>>();
    c.include_linearized = cfg::get_or<bool>(b, "include_linearized", c.include_linearized);
    c.ball_radius = cfg::get_or<double>(b, "ball_radius", c.ball_radius);
    rc.t_convergence = c;
  }
  if (doc.contains("growth_d1")) {
    const json& b = doc.at("growth_d1");
    cfg::reject_unknown(b, {"x0_ladder", "samples", "ball_radius"}, "growth_d1");
    GrowthConfig c;
    c.x0_ladder = b.at("x0_ladder").get<std::vector<double>>();
    c.samples = cfg::get_or<std::size_t>(b, "samples", c.samples);
    c.ball_radius = cfg::get_or<double>(b, "ball_radius", c.ball_radius);
    rc.growth_d1 = c;
  }
  if (doc.contains("variance_decay")) {
    const json& b = doc.at("variance_decay");
    cfg::reject_unknown(b, {"R_ladder", "samples", "order", "direction"}, "variance_decay");
    VarianceDecayConfig c;
    c.R_ladder = b.at("R_ladder").get<std::vector<double>>();
    c.samples = cfg::get_or<std::size_t>(b, "samples", c.samples);
    c.order = cfg::get_or<int>(b, "order", c.order);
    if (b.contains("direction")) c.direction = b.at("direction").get<std::vector<double>>();
    rc.variance_decay = c;
  }
  if (doc.contains("two_scale")) {
    const json& b = doc.at("two_scale");
    cfg::reject_unknown(b, {"eps_ladder", "f_amplitude", "n_fine", "table_range", "n_table",
                            "samples"},
                        "two_scale");
    TwoScaleConfig c;
    if (b.contains("eps_ladder")) c.eps_ladder = b.at("eps_ladder").get<std::vector<double>>();
    c.f_amplitude = cfg::get_or<double>(b, "f_amplitude", c.f_amplitude);
    c.n_fine = cfg::get_or<int>(b, "n_fine", c.n_fine);
    c.table_range = cfg::get_or<double>(b, "table_range", c.table_range);
    c.n_table = cfg::get_or<int>(b, "n_table", c.n_table);
    c.samples = cfg::get_or<std::size_t>(b, "samples", c.samples);
    rc.two_scale = c;
  }
  if (doc.contains("hierarchy")) {
    const json& b = doc.at("hierarchy");
    cfg::reject_unknown(b, {"directions", "flux_correctors"}, "hierarchy");
    HierarchyConfig c;
    c.directions = b.at("directions").get<std::vector<std::vector<double>>>();
    c.flux_correctors = cfg::get_or<bool>(b, "flux_correctors", c.flux_correctors);
    rc.hierarchy = c;
  }
  if (doc.contains("taylor")) {
    const json& b = doc.at("taylor");
    cfg::reject_unknown(b, {"xi0", "direction", "step_direction", "K", "h_ladder"}, "taylor");
    TaylorConfig c;
    c.xi0 = b.at("xi0").get<std::vector<double>>();
    c.direction = b.at("direction").get<std::vector<double>>();
    if (b.contains("step_direction"))
      c.step_direction = b.at("step_direction").get<std::vector<double>>();
    c.K = cfg::get_or<int>(b, "K", c.K);
    if (b.contains("h_ladder")) c.h_ladder = b.at("h_ladder").get<std::vector<double>>();
    rc.taylor = c;
  }
  if (doc.contains("derivative_check")) {
    const json& b = doc.at("derivative_check");
    cfg::reject_unknown(b, {"direction", "h_ladder"}, "derivative_check");
    DerivativeCheckConfig c;
    c.direction = b.at("direction").get<std::vector<double>>();
    if (b.contains("h_ladder")) c.h_ladder = b.at("h_ladder").get<std::vector<double>>();
    rc.derivative_check = c;
  }
  if (doc.contains("sensitivity")) {
    const json& b = doc.at("sensitivity");
    cfg::reject_unknown(b, {"center", "radius", "scale", "channel", "subset_size", "steps"},
                        "sensitivity");
    SensitivityConfig c;
    c.center = b.at("center").get<std::vector<double>>();
    c.radius = cfg::get_or<double>(b, "radius", c.radius);
    c.scale = cfg::get_or<double>(b, "scale", c.scale);
    c.channel = cfg::get_or<int>(b, "channel", c.channel);
    c.subset_size = cfg::get_or<int>(b, "subset_size", c.subset_size);
    if (b.contains("steps")) c.steps = b.at("steps").get<std::vector<double>>();
    rc.sensitivity = c;
  }
  if (doc.contains("monte_carlo")) {
    const json& b = doc.at("monte_carlo");
    cfg::reject_unknown(b, {"samples", "directions"}, "monte_carlo");
    MonteCarloConfig c;
    c.samples = cfg::get_or<std::size_t>(b, "samples", c.samples);
    if (b.contains("directions"))
      c.directions = b.at("directions").get<std::vector<std::vector<double>>>();
    rc.monte_carlo = c;
  }

  rc.echo = doc;
  return rc;
}

inline RunConfig load_config_file(const std::string& path) {
  return parse_config(json::parse(read_text_file(path)));
}

}  // namespace clab
