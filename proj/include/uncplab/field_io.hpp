#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "uncplab/field.hpp"

namespace uncplab {

// Binary field layout (little-endian):
//   int32 dim | float64 L | int32 N | N^d x (float64 re, float64 im), row-major.
static_assert(std::endian::native == std::endian::little,
              "field binary format assumes a little-endian host");

inline void write_field_binary(std::ostream& os, const Field& f) {
  const std::int32_t dim = f.grid.dim();
  const double length = f.grid.length();
  const std::int32_t n = f.grid.points();
  os.write(reinterpret_cast<const char*>(&dim), sizeof dim);
  os.write(reinterpret_cast<const char*>(&length), sizeof length);
  os.write(reinterpret_cast<const char*>(&n), sizeof n);
  for (const auto& v : f.values) {
    const double parts[2] = {v.real(), v.imag()};
    os.write(reinterpret_cast<const char*>(parts), sizeof parts);
  }
  if (!os) throw NumericalError("write_field_binary: stream failure");
}

inline Field read_field_binary(std::istream& is) {
  std::int32_t dim = 0, n = 0;
  double length = 0.0;
  is.read(reinterpret_cast<char*>(&dim), sizeof dim);
  is.read(reinterpret_cast<char*>(&length), sizeof length);
  is.read(reinterpret_cast<char*>(&n), sizeof n);
  detail::require(static_cast<bool>(is), "read_field_binary: truncated header");
  Field f(Grid(dim, length, n));
  for (auto& v : f.values) {
    double parts[2];
    is.read(reinterpret_cast<char*>(parts), sizeof parts);
    detail::require(static_cast<bool>(is), "read_field_binary: truncated payload");
    v = {parts[0], parts[1]};
  }
  return f;
}

inline void save_field_binary(const std::string& path, const Field& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw NumericalError("cannot open " + path + " for writing");
  write_field_binary(os, f);
}

inline Field load_field_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidArgument("cannot open " + path);
  return read_field_binary(is);
}

/// 1D only: header `x,re,im`, one row per node.
inline void write_field_csv(std::ostream& os, const Field& f) {
  detail::require(f.grid.dim() == 1, "write_field_csv: CSV export is one-dimensional only");
  os << "x,re,im\n" << std::setprecision(17);
  for (int j = 0; j < f.grid.points(); ++j)
    os << f.grid.coordinate(j) << ',' << f[j].real() << ',' << f[j].imag() << '\n';
}

}  // namespace uncplab
