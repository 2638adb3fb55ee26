#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "correctorlab/errors.hpp"
#include "correctorlab/grid.hpp"

namespace clab {

// ".fld" container: one UTF-8 JSON header line terminated by '\n', followed
// by raw little-endian 64-bit floats, planar component layout, nodes
// row-major with axis 0 slowest.

inline std::string rank_name(FieldRank r) {
  switch (r) {
    case FieldRank::scalar: return "scalar";
    case FieldRank::vector: return "vector";
    case FieldRank::matrix: return "matrix";
    case FieldRank::channels: return "channels";
  }
  return "scalar";
}

inline FieldRank rank_from_name(const std::string& s) {
  if (s == "scalar") return FieldRank::scalar;
  if (s == "vector") return FieldRank::vector;
  if (s == "matrix") return FieldRank::matrix;
  if (s == "channels") return FieldRank::channels;
  throw Error("unknown field rank: " + s);
}

inline void write_fld(const GridField& f, const std::filesystem::path& path) {
  nlohmann::json header = {
      {"d", f.grid.d},
      {"n_points", f.grid.n_points},
      {"box_side", f.grid.box_side},
      {"rank", rank_name(f.rank)},
      {"components", f.components},
      {"layout", "planar"},
      {"dtype", "f64"},
      {"byte_order", "LE"},
  };
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << header.dump() << '\n';
  static_assert(std::endian::native == std::endian::little,
                "fld writer assumes a little-endian host");
  out.write(reinterpret_cast<const char*>(f.values.data()),
            static_cast<std::streamsize>(f.values.size() * sizeof(double)));
  if (!out) throw Error("failed writing field data: " + path.string());
}

inline GridField read_fld(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("missing fld header: " + path.string());
  const auto header = nlohmann::json::parse(line);
  if (header.at("dtype") != "f64" || header.at("byte_order") != "LE" ||
      header.at("layout") != "planar")
    throw Error("unsupported fld encoding: " + path.string());
  TorusGrid grid(header.at("d").get<int>(), header.at("n_points").get<int>(),
                 header.at("box_side").get<double>());
  const FieldRank rank = rank_from_name(header.at("rank").get<std::string>());
  const int components = header.at("components").get<int>();
  GridField f(grid, rank, components);
  if (f.components != components) throw Error("component count mismatch: " + path.string());
  in.read(reinterpret_cast<char*>(f.values.data()),
          static_cast<std::streamsize>(f.values.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(f.values.size() * sizeof(double)))
    throw Error("truncated fld payload: " + path.string());
  return f;
}

/// Round-trippable decimal formatting shared by every CSV/JSON writer.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << content;
  if (!out) throw Error("failed writing: " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open: " + path.string());
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return s;
}

}  // namespace clab
