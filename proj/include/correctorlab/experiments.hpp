#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "correctorlab/errors.hpp"
#include "correctorlab/io.hpp"

namespace clab {

inline constexpr const char* kVersion = "corrector-lab 0.1.0";

/// Scaling function governing corrector growth: sqrt(l) in d=1,
/// sqrt(log(1+l)) in d=2, constant in d>=3.
inline double mu_star(double ell, int d) {
  if (!(ell > 0.0)) throw Error("mu_star needs ell > 0");
  if (d == 1) return std::sqrt(ell);
  if (d == 2) return std::sqrt(std::log1p(ell));
  return 1.0;
}

/// Ordinary least squares on (log x, log y).
struct ScalingFit {
  std::vector<double> xs;
  std::vector<double> ys;
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 1.0;
};

inline ScalingFit fit_loglog(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw DegeneratePoints("length mismatch");
  if (xs.size() < 3) throw DegeneratePoints("need at least 3 points");
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) throw DegeneratePoints("points must be positive");

  ScalingFit fit;
  fit.xs = xs;
  fit.ys = ys;
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double lx = std::log(xs[i]);
    const double ly = std::log(ys[i]);
    sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
  }
  const double denom = n * sxx - sx * sx;
  if (std::fabs(denom) <= 1e-12 * (n * sxx + sx * sx) + 1e-300)
    throw DegeneratePoints("collinear abscissae");
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;

  double ss_res = 0, ss_tot = 0;
  const double mean_ly = sy / n;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double ly = std::log(ys[i]);
    const double pred = fit.intercept + fit.slope * std::log(xs[i]);
    ss_res += (ly - pred) * (ly - pred);
    ss_tot += (ly - mean_ly) * (ly - mean_ly);
  }
  fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

/// Plain linear least squares (used for moment-vs-log(T) diagnostics).
inline ScalingFit fit_linear(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 3) throw DegeneratePoints("need 3 matched points");
  ScalingFit fit;
  fit.xs = xs;
  fit.ys = ys;
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i]; sy += ys[i]; sxx += xs[i] * xs[i]; sxy += xs[i] * ys[i];
  }
  const double denom = n * sxx - sx * sx;
  if (std::fabs(denom) < 1e-300) throw DegeneratePoints("collinear abscissae");
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  const double mean_y = sy / n;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double pred = fit.intercept + fit.slope * xs[i];
    ss_res += (ys[i] - pred) * (ys[i] - pred);
    ss_tot += (ys[i] - mean_y) * (ys[i] - mean_y);
  }
  fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

inline nlohmann::json fit_to_json(const ScalingFit& f) {
  return {{"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}};
}

/// Persisted experiment result: a fixed-column table of per-point statistics,
/// named fits, named pass/fail gates, and the config echo that reproduces it.
struct RunRecord {
  std::string experiment;
  nlohmann::json config;  // full config document; re-runnable as-is
  std::uint64_t master_seed = 0;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::map<std::string, ScalingFit> fits;
  nlohmann::json gates = nlohmann::json::object();
  double wall_time_s = 0.0;
  std::string version = kVersion;

  bool all_gates_pass() const {
    for (const auto& [name, gate] : gates.items()) {
      if (gate.contains("pass") && !gate.at("pass").get<bool>() &&
          !(gate.contains("informative") && gate.at("informative").get<bool>()))
        return false;
    }
    return true;
  }
};

inline std::string record_csv(const RunRecord& rec) {
  std::string csv;
  for (std::size_t c = 0; c < rec.columns.size(); ++c) {
    if (c) csv += ',';
    csv += rec.columns[c];
  }
  csv += '\n';
  for (const auto& row : rec.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) csv += ',';
      csv += format_double(row[c]);
    }
    csv += '\n';
  }
  return csv;
}

/// Write points.csv and manifest.json under dir; idempotent overwrite.
inline void write_record(const RunRecord& rec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "points.csv", record_csv(rec));

  nlohmann::json manifest;
  manifest["schema"] = 1;
  manifest["experiment"] = rec.experiment;
  manifest["config"] = rec.config;
  manifest["master_seed"] = rec.master_seed;
  manifest["columns"] = rec.columns;
  nlohmann::json fits = nlohmann::json::object();
  for (const auto& [name, fit] : rec.fits) fits[name] = fit_to_json(fit);
  manifest["fits"] = fits;
  manifest["gates"] = rec.gates;
  manifest["wall_time_s"] = rec.wall_time_s;
  manifest["version"] = rec.version;
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

/// Read back a record written by write_record (fits/gates stay in JSON form).
struct StoredRecord {
  nlohmann::json manifest;
  std::string csv;
};

inline StoredRecord read_record(const std::filesystem::path& dir) {
  StoredRecord rec;
  rec.manifest = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
  rec.csv = read_text_file(dir / "points.csv");
  return rec;
}

/// Uniformly spaced local-cubic (4-point Lagrange) interpolation table;
/// exact on cubic polynomials, O(dx^4) on smooth data.
class CubicTable {
 public:
  CubicTable(double x0, double dx, std::vector<double> ys)
      : x0_(x0), dx_(dx), ys_(std::move(ys)) {
    if (ys_.size() < 4) throw Error("cubic table needs >= 4 points");
  }

  double x_min() const { return x0_; }
  double x_max() const { return x0_ + dx_ * static_cast<double>(ys_.size() - 1); }

  double eval(double x) const {
    const double s = (x - x0_) / dx_;
    long j = static_cast<long>(std::floor(s));
    j = std::max(1L, std::min(j, static_cast<long>(ys_.size()) - 3));
    const double t = s - static_cast<double>(j);
    const double p0 = ys_[static_cast<std::size_t>(j - 1)];
    const double p1 = ys_[static_cast<std::size_t>(j)];
    const double p2 = ys_[static_cast<std::size_t>(j + 1)];
    const double p3 = ys_[static_cast<std::size_t>(j + 2)];
    return lagrange4(p0, p1, p2, p3, t);
  }

  static double lagrange4(double p0, double p1, double p2, double p3, double t) {
    return p0 * (-t * (t - 1.0) * (t - 2.0) / 6.0) +
           p1 * ((t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0) +
           p2 * (-(t + 1.0) * t * (t - 2.0) / 2.0) +
           p3 * ((t + 1.0) * t * (t - 1.0) / 6.0);
  }

  /// Inverse of a strictly increasing table via bisection.
  double invert(double y, double tol = 1e-13) const {
    double lo = x_min(), hi = x_max();
    if (!(eval(lo) <= y && y <= eval(hi))) throw Error("inverse query outside table range");
    while (hi - lo > tol) {
      const double mid = 0.5 * (lo + hi);
      (eval(mid) < y ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

 private:
  double x0_;
  double dx_;
  std::vector<double> ys_;
};

class WallTimer {
 public:
  WallTimer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace clab
