#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "uncplab/field.hpp"
#include "uncplab/parallel.hpp"

namespace uncplab {

/// Axis-aligned half-open box [lo, hi) inside the periodic cell [0, L)^d.
struct Box {
  Point lo{0.0, 0.0, 0.0};
  Point hi{0.0, 0.0, 0.0};
};

struct ThicknessCertificate {
  double radius = 0.0;
  double delta = 0.0;
};

/// Observation set omega on a grid. Node x_j belongs to omega when
/// indicator[j] != 0. `boxes`, when non-empty, is the exact geometry the
/// indicator was sampled from and lets integrals over omega be evaluated in
/// closed form for trigonometric polynomials.
struct ThickSet {
  Grid grid;
  std::vector<std::uint8_t> indicator;
  std::optional<ThicknessCertificate> verified;
  std::vector<Box> boxes;

  explicit ThickSet(const Grid& g) : grid(g), indicator(g.size(), 0) {}
  ThickSet(const Grid& g, std::vector<std::uint8_t> ind) : grid(g), indicator(std::move(ind)) {
    detail::require(indicator.size() == grid.size(), "ThickSet: indicator size mismatch");
  }

  static ThickSet full(const Grid& g) {
    ThickSet s(g, std::vector<std::uint8_t>(g.size(), 1));
    Box b;
    for (int a = 0; a < g.dim(); ++a) b.hi[a] = g.length();
    s.boxes.push_back(b);
    return s;
  }
  static ThickSet empty(const Grid& g) { return ThickSet(g); }

  /// Samples the union of boxes at the nodes (lo <= x < hi on every axis).
  static ThickSet from_boxes(const Grid& g, std::vector<Box> boxes) {
    ThickSet s(g);
    const double tol = 1e-9 * g.spacing();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Point x = g.node(i);
      for (const auto& b : boxes) {
        bool inside = true;
        for (int a = 0; a < g.dim(); ++a)
          inside = inside && x[a] >= b.lo[a] - tol && x[a] < b.hi[a] - tol;
        if (inside) {
          s.indicator[i] = 1;
          break;
        }
      }
    }
    s.boxes = std::move(boxes);
    return s;
  }

  std::size_t count() const {
    return static_cast<std::size_t>(std::count_if(indicator.begin(), indicator.end(),
                                                  [](std::uint8_t v) { return v != 0; }));
  }
  /// mes(omega) = spacing^d * (number of nodes in omega).
  double measure() const { return grid.cell_volume() * static_cast<double>(count()); }
  bool has_geometry() const { return !boxes.empty(); }
  /// Lebesgue measure of the exact box geometry (boxes assumed disjoint).
  double geometric_measure() const {
    double total = 0.0;
    for (const auto& b : boxes) {
      double v = 1.0;
      for (int a = 0; a < grid.dim(); ++a) v *= b.hi[a] - b.lo[a];
      total += v;
    }
    return total;
  }
  bool contains(std::size_t i) const { return indicator[i] != 0; }
};

namespace detail {

// Integer offsets of the discrete ball |m| * h < R, grouped as rows along the
// last axis: for each offset of the leading axes, the half-length q of the row.
struct BallRows {
  std::vector<std::array<int, 3>> leading;
  std::vector<int> half_length;
  std::size_t cells = 0;
};

inline BallRows ball_rows(const Grid& grid, double radius) {
  const double h = grid.spacing();
  const double r2 = (radius / h) * (radius / h);
  const int reach = static_cast<int>(std::ceil(radius / h));
  BallRows rows;
  const int d = grid.dim();
  auto add_row = [&](std::array<int, 3> lead, double lead2) {
    if (lead2 >= r2) return;
    int q = static_cast<int>(std::floor(std::sqrt(r2 - lead2)));
    while (q >= 0 && lead2 + double(q) * q >= r2) --q;
    if (q < 0) return;
    rows.leading.push_back(lead);
    rows.half_length.push_back(q);
    rows.cells += static_cast<std::size_t>(2 * q + 1);
  };
  if (d == 1) {
    add_row({0, 0, 0}, 0.0);
  } else if (d == 2) {
    for (int i = -reach; i <= reach; ++i) add_row({i, 0, 0}, double(i) * i);
  } else {
    for (int i = -reach; i <= reach; ++i)
      for (int j = -reach; j <= reach; ++j) add_row({i, j, 0}, double(i) * i + double(j) * j);
  }
  return rows;
}

}  // namespace detail

/// delta = min over grid points x of |omega ∩ B_R(x)| / |B_R(x)|, balls taken
/// as the nodes strictly within distance R (periodic wrap), so the full set
/// gives exactly 1. The infimum over R^d is resolved to one grid cell.
inline double verify_thickness(const ThickSet& set, double radius) {
  const Grid& grid = set.grid;
  detail::require(radius >= 2.0 * grid.spacing(),
                  "verify_thickness: radius below resolution (need R >= 2 * spacing)");
  detail::require(2.0 * radius < grid.length(),
                  "verify_thickness: ball of radius R wraps onto itself (need 2R < L)");
  const auto rows = detail::ball_rows(grid, radius);
  const int n = grid.points();
  const int d = grid.dim();
  const std::size_t lines = grid.size() / static_cast<std::size_t>(n);

  // Cyclic prefix sums along the last axis, one line per leading multi-index.
  std::vector<std::int64_t> prefix(lines * static_cast<std::size_t>(n + 1), 0);
  for (std::size_t line = 0; line < lines; ++line) {
    std::int64_t* p = prefix.data() + line * (n + 1);
    for (int j = 0; j < n; ++j) p[j + 1] = p[j] + (set.indicator[line * n + j] ? 1 : 0);
  }
  auto line_count = [&](std::size_t line, int centre, int q) -> std::int64_t {
    const std::int64_t* p = prefix.data() + line * (n + 1);
    int lo = centre - q, hi = centre + q;  // inclusive
    std::int64_t total = 0;
    // Rows never exceed one period because 2R < L.
    if (lo < 0) {
      total += p[n] - p[n + lo];
      lo = 0;
    }
    if (hi >= n) {
      total += p[hi - n + 1];
      hi = n - 1;
    }
    total += p[hi + 1] - p[lo];
    return total;
  };

  std::vector<double> ratio(grid.size(), 1.0);
  parallel_for(grid.size(), [&](std::size_t i) {
    const auto idx = grid.unravel(i);
    std::int64_t hits = 0;
    for (std::size_t r = 0; r < rows.leading.size(); ++r) {
      std::array<int, 3> lead = idx;
      for (int a = 0; a < d - 1; ++a) lead[a] = ((idx[a] + rows.leading[r][a]) % n + n) % n;
      std::size_t line = 0;
      for (int a = 0; a < d - 1; ++a) line = line * n + static_cast<std::size_t>(lead[a]);
      hits += line_count(line, idx[d - 1], rows.half_length[r]);
    }
    ratio[i] = static_cast<double>(hits) / static_cast<double>(rows.cells);
  });
  return *std::min_element(ratio.begin(), ratio.end());
}

inline ThickSet with_verification(ThickSet set, double radius) {
  const double delta = verify_thickness(set, radius);
  set.verified = ThicknessCertificate{radius, delta};
  return set;
}

struct PeriodicSetParams {
  double gamma = 0.5;   ///< relative measure per period cell
  double period = 1.0;  ///< lattice period a
  std::optional<double> verify_radius;  ///< defaults to max(a, 2 * spacing)
};

struct RandomSetParams {
  double density = 0.5;
  std::uint64_t seed = 0;
  double blob_radius = 0.5;
  std::optional<double> verify_radius;  ///< defaults to max(4 * blob radius, 2 * spacing)
};

/// Lattice of boxes [k a, k a + s a)^d with side fraction s = gamma^{1/d}, so each
/// period cell has relative measure gamma; in 1D this is the Logvinenko-Sereda
/// set with |E ∩ I| / |I| >= gamma on every interval I of length a.
inline ThickSet generate_set(const Grid& grid, const PeriodicSetParams& p) {
  detail::require(p.gamma > 0.0 && p.gamma <= 1.0, "generate_set: gamma must lie in (0, 1]");
  detail::require(p.period > 0.0 && p.period <= grid.length() / 4.0,
                  "generate_set: period a must satisfy 0 < a <= L/4");
  const int d = grid.dim();
  const double L = grid.length();
  std::vector<Box> boxes;
  if (p.gamma == 1.0) {
    Box b;
    for (int a = 0; a < d; ++a) b.hi[a] = L;
    boxes.push_back(b);
  } else {
    const double side = std::pow(p.gamma, 1.0 / d) * p.period;
    const int per_axis = static_cast<int>(std::ceil(L / p.period - 1e-12));
    std::array<int, 3> k{0, 0, 0};
    const int total = static_cast<int>(std::pow(per_axis, d));
    for (int flat = 0; flat < total; ++flat) {
      int rest = flat;
      for (int a = d - 1; a >= 0; --a) {
        k[a] = rest % per_axis;
        rest /= per_axis;
      }
      Box b;
      for (int a = 0; a < d; ++a) {
        b.lo[a] = k[a] * p.period;
        b.hi[a] = std::min(b.lo[a] + side, L);
      }
      boxes.push_back(b);
    }
  }
  ThickSet set = ThickSet::from_boxes(grid, std::move(boxes));
  if (set.count() == 0) throw InvalidArgument("generate_set: parameters yield an empty set");
  const double radius = p.verify_radius.value_or(std::max(p.period, 2.0 * grid.spacing()));
  return with_verification(std::move(set), radius);
}

/// Union of seeded random balls whose expected coverage equals `density`.
inline ThickSet generate_set(const Grid& grid, const RandomSetParams& p) {
  detail::require(p.density > 0.0 && p.density <= 1.0,
                  "generate_set: density must lie in (0, 1]");
  detail::require(p.blob_radius > 0.0, "generate_set: blob radius must be positive");
  const int d = grid.dim();
  const double L = grid.length();
  const double radius = p.verify_radius.value_or(std::max(4.0 * p.blob_radius, 2.0 * grid.spacing()));
  if (p.density == 1.0) return with_verification(ThickSet::full(grid), radius);

  const double ball_volume = d == 1   ? 2.0 * p.blob_radius
                             : d == 2 ? std::numbers::pi * p.blob_radius * p.blob_radius
                                      : 4.0 / 3.0 * std::numbers::pi * std::pow(p.blob_radius, 3);
  const auto count = static_cast<std::size_t>(
      std::ceil(-std::log(1.0 - p.density) * grid.volume() / ball_volume));
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> uniform(0.0, L);
  std::vector<Point> centres(count);
  for (auto& c : centres)
    for (int a = 0; a < d; ++a) c[a] = uniform(rng);

  ThickSet set(grid);
  const double r2 = p.blob_radius * p.blob_radius;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Point x = grid.node(i);
    for (const auto& c : centres) {
      double dist2 = 0.0;
      for (int a = 0; a < d; ++a) {
        double dx = std::abs(x[a] - c[a]);
        dx = std::min(dx, L - dx);
        dist2 += dx * dx;
      }
      if (dist2 < r2) {
        set.indicator[i] = 1;
        break;
      }
    }
  }
  if (set.count() == 0) throw InvalidArgument("generate_set: parameters yield an empty set");
  return with_verification(std::move(set), radius);
}

/// Integrals of plane waves over omega, m_diff = integer wavenumber vector:
/// M(m) = integral over omega of e^{i (2 pi m / L) . x} dx, exact over the box
/// geometry. Tabulated for every m with |m_a| <= N - 1.
class OmegaMoments {
 public:
  explicit OmegaMoments(const ThickSet& set) : dim_(set.grid.dim()), n_(set.grid.points()) {
    detail::require(set.has_geometry(), "OmegaMoments: set carries no exact geometry");
    const int span = 2 * n_ - 1;
    std::size_t total = 1;
    for (int a = 0; a < dim_; ++a) total *= static_cast<std::size_t>(span);
    table_.assign(total, cplx{0.0, 0.0});
    const double base = 2.0 * std::numbers::pi / set.grid.length();
    // Per-axis 1D integrals for each box, then the product.
    std::vector<cplx> axis_values(static_cast<std::size_t>(dim_) * span);
    for (const auto& b : set.boxes) {
      for (int a = 0; a < dim_; ++a) {
        for (int m = -(n_ - 1); m <= n_ - 1; ++m) {
          const double xi = base * m;
          cplx v;
          if (m == 0) {
            v = b.hi[a] - b.lo[a];
          } else {
            v = (std::exp(cplx{0.0, xi * b.hi[a]}) - std::exp(cplx{0.0, xi * b.lo[a]})) /
                cplx{0.0, xi};
          }
          axis_values[static_cast<std::size_t>(a) * span + (m + n_ - 1)] = v;
        }
      }
      for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t rest = flat;
        cplx prod{1.0, 0.0};
        for (int a = dim_ - 1; a >= 0; --a) {
          const std::size_t m = rest % span;
          rest /= span;
          prod *= axis_values[static_cast<std::size_t>(a) * span + m];
        }
        table_[flat] += prod;
      }
    }
  }

  cplx operator()(const std::array<int, 3>& m) const {
    const int span = 2 * n_ - 1;
    std::size_t flat = 0;
    for (int a = 0; a < dim_; ++a) flat = flat * span + static_cast<std::size_t>(m[a] + n_ - 1);
    return table_[flat];
  }

 private:
  int dim_;
  int n_;
  std::vector<cplx> table_;
};

/// Integral over omega of conj(f) g w. When the set has exact geometry the
/// trigonometric interpolants of f and g*w are integrated in closed form;
/// otherwise the nodal rule spacing^d * sum over omega nodes is used.
inline cplx observed_inner_product(const Field& f, const Field& g, const ThickSet& set,
                                   const Field* weight = nullptr) {
  detail::require_same_grid(f, g, "observed_inner_product");
  detail::require(f.grid == set.grid, "observed_inner_product: set lives on another grid");
  Field gw = g;
  if (weight) {
    detail::require_same_grid(f, *weight, "observed_inner_product");
    for (std::size_t i = 0; i < gw.size(); ++i) gw[i] *= (*weight)[i].real();
  }
  if (!set.has_geometry()) {
    cplx sum{0.0, 0.0};
    for (std::size_t i = 0; i < f.size(); ++i)
      if (set.contains(i)) sum += std::conj(f[i]) * gw[i];
    return sum * f.grid.cell_volume();
  }
  const OmegaMoments moments(set);
  const Field fc = frequency_transform(f, Direction::forward);
  const Field gc = frequency_transform(gw, Direction::forward);
  const Grid& grid = f.grid;
  cplx sum{0.0, 0.0};
  for (std::size_t p = 0; p < grid.size(); ++p) {
    if (fc[p] == cplx{0.0, 0.0}) continue;
    const auto ip = grid.unravel(p);
    cplx inner{0.0, 0.0};
    for (std::size_t q = 0; q < grid.size(); ++q) {
      if (gc[q] == cplx{0.0, 0.0}) continue;
      const auto iq = grid.unravel(q);
      std::array<int, 3> m{0, 0, 0};
      for (int a = 0; a < grid.dim(); ++a) m[a] = grid.wavenumber(iq[a]) - grid.wavenumber(ip[a]);
      inner += moments(m) * gc[q];
    }
    sum += std::conj(fc[p]) * inner;
  }
  return sum;
}

/// Integral of |f|^2 w over omega (see observed_inner_product).
inline double observed_mass(const Field& f, const ThickSet& set, const Field* weight = nullptr) {
  return observed_inner_product(f, f, set, weight).real();
}

// Run-length CSV (1D):
//   # dim=1,L=<L>,N=<N>,R=<R|nan>,delta=<delta|nan>
//   value,run
//   <0|1>,<count>
inline void write_thick_set_rle(std::ostream& os, const ThickSet& set) {
  detail::require(set.grid.dim() == 1, "write_thick_set_rle: run-length CSV is 1D only");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  os << std::setprecision(17) << "# dim=1,L=" << set.grid.length() << ",N=" << set.grid.points()
     << ",R=" << (set.verified ? set.verified->radius : nan)
     << ",delta=" << (set.verified ? set.verified->delta : nan) << "\nvalue,run\n";
  std::size_t i = 0;
  while (i < set.indicator.size()) {
    std::size_t j = i;
    while (j < set.indicator.size() && (set.indicator[j] != 0) == (set.indicator[i] != 0)) ++j;
    os << (set.indicator[i] ? 1 : 0) << ',' << (j - i) << '\n';
    i = j;
  }
}

inline ThickSet read_thick_set_rle(std::istream& is) {
  std::string header;
  std::getline(is, header);
  double length = 0.0, radius = 0.0, delta = 0.0;
  int n = 0;
  {
    std::string body = header.substr(header.find('d'));
    for (char& c : body)
      if (c == ',' || c == '=') c = ' ';
    std::istringstream hs(body);
    std::string key, value;
    while (hs >> key >> value) {
      if (key == "L") length = std::stod(value);
      if (key == "N") n = std::stoi(value);
      if (key == "R") radius = value == "nan" ? std::nan("") : std::stod(value);
      if (key == "delta") delta = value == "nan" ? std::nan("") : std::stod(value);
    }
  }
  ThickSet set(Grid(1, length, n));
  std::string line;
  std::getline(is, line);  // column header
  std::size_t pos = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    const int value = std::stoi(line.substr(0, comma));
    const auto run = static_cast<std::size_t>(std::stoul(line.substr(comma + 1)));
    detail::require(pos + run <= set.indicator.size(), "read_thick_set_rle: runs exceed grid");
    std::fill_n(set.indicator.begin() + static_cast<std::ptrdiff_t>(pos), run, value ? 1 : 0);
    pos += run;
  }
  detail::require(pos == set.indicator.size(), "read_thick_set_rle: runs do not cover grid");
  if (!std::isnan(radius)) set.verified = ThicknessCertificate{radius, delta};
  return set;
}

// Packed bitmask (little-endian):
//   "UCTS" | uint32 version=1 | int32 dim | float64 L | int32 N | float64 R | float64 delta |
//   ceil(N^d / 8) bytes, node i in bit (i % 8) of byte i / 8. R, delta are NaN when unverified.
inline void write_thick_set_bitmask(std::ostream& os, const ThickSet& set) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const std::uint32_t version = 1;
  const std::int32_t dim = set.grid.dim(), n = set.grid.points();
  const double length = set.grid.length();
  const double radius = set.verified ? set.verified->radius : nan;
  const double delta = set.verified ? set.verified->delta : nan;
  os.write("UCTS", 4);
  os.write(reinterpret_cast<const char*>(&version), sizeof version);
  os.write(reinterpret_cast<const char*>(&dim), sizeof dim);
  os.write(reinterpret_cast<const char*>(&length), sizeof length);
  os.write(reinterpret_cast<const char*>(&n), sizeof n);
  os.write(reinterpret_cast<const char*>(&radius), sizeof radius);
  os.write(reinterpret_cast<const char*>(&delta), sizeof delta);
  std::vector<std::uint8_t> packed((set.indicator.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < set.indicator.size(); ++i)
    if (set.indicator[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  os.write(reinterpret_cast<const char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
}

inline ThickSet read_thick_set_bitmask(std::istream& is) {
  char magic[4];
  std::uint32_t version = 0;
  std::int32_t dim = 0, n = 0;
  double length = 0.0, radius = 0.0, delta = 0.0;
  is.read(magic, 4);
  detail::require(is && std::string(magic, 4) == "UCTS", "read_thick_set_bitmask: bad magic");
  is.read(reinterpret_cast<char*>(&version), sizeof version);
  detail::require(version == 1, "read_thick_set_bitmask: unsupported version");
  is.read(reinterpret_cast<char*>(&dim), sizeof dim);
  is.read(reinterpret_cast<char*>(&length), sizeof length);
  is.read(reinterpret_cast<char*>(&n), sizeof n);
  is.read(reinterpret_cast<char*>(&radius), sizeof radius);
  is.read(reinterpret_cast<char*>(&delta), sizeof delta);
  ThickSet set(Grid(dim, length, n));
  std::vector<std::uint8_t> packed((set.indicator.size() + 7) / 8, 0);
  is.read(reinterpret_cast<char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
  detail::require(static_cast<bool>(is), "read_thick_set_bitmask: truncated payload");
  for (std::size_t i = 0; i < set.indicator.size(); ++i)
    set.indicator[i] = (packed[i / 8] >> (i % 8)) & 1u;
  if (!std::isnan(radius)) set.verified = ThicknessCertificate{radius, delta};
  return set;
}

}  // namespace uncplab
