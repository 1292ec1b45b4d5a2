#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "uncplab/errors.hpp"
#include "uncplab/quadrature.hpp"

namespace uncplab {

using cplx = std::complex<double>;
using Point = std::array<double, 3>;

/// Periodic box [0, L)^d sampled at N points per axis, nodes x_j = j * L / N.
///
/// Frequencies per axis are xi_k = 2*pi*k/L for k in {-N/2, ..., N/2-1}, stored
/// in transform order (k = 0, 1, ..., N/2-1, -N/2, ..., -1).
class Grid {
 public:
  Grid(int dim, double length, int points) : dim_(dim), length_(length), points_(points) {
    detail::require(dim >= 1 && dim <= 3, "Grid: dimension must be 1, 2 or 3 (got " +
                                              std::to_string(dim) + ")");
    detail::require(std::isfinite(length) && length > 0.0, "Grid: length must be positive");
    detail::require(points >= 4 && (points & (points - 1)) == 0,
                    "Grid: points per axis must be a power of two >= 4 (got " +
                        std::to_string(points) + ")");
    size_ = 1;
    for (int a = 0; a < dim; ++a) size_ *= static_cast<std::size_t>(points);
  }

  int dim() const { return dim_; }
  double length() const { return length_; }
  int points() const { return points_; }
  // N is a power of two, so L / N is exact and spacing() * points() == length().
  double spacing() const { return length_ / points_; }
  std::size_t size() const { return size_; }
  double cell_volume() const { return std::pow(spacing(), dim_); }
  double volume() const { return std::pow(length_, dim_); }

  /// Integer wavenumber k of transform-order index i.
  int wavenumber(int index) const { return index < points_ / 2 ? index : index - points_; }
  double frequency(int index) const {
    return 2.0 * std::numbers::pi * wavenumber(index) / length_;
  }
  double coordinate(int index) const { return index * spacing(); }

  /// Row-major multi-index (axis 0 slowest).
  std::array<int, 3> unravel(std::size_t flat) const {
    std::array<int, 3> idx{0, 0, 0};
    for (int a = dim_ - 1; a >= 0; --a) {
      idx[a] = static_cast<int>(flat % points_);
      flat /= points_;
    }
    return idx;
  }
  std::size_t ravel(const std::array<int, 3>& idx) const {
    std::size_t flat = 0;
    for (int a = 0; a < dim_; ++a) {
      const int i = ((idx[a] % points_) + points_) % points_;
      flat = flat * points_ + static_cast<std::size_t>(i);
    }
    return flat;
  }
  Point node(std::size_t flat) const {
    const auto idx = unravel(flat);
    Point x{0.0, 0.0, 0.0};
    for (int a = 0; a < dim_; ++a) x[a] = coordinate(idx[a]);
    return x;
  }
  Point frequency_vector(std::size_t flat) const {
    const auto idx = unravel(flat);
    Point xi{0.0, 0.0, 0.0};
    for (int a = 0; a < dim_; ++a) xi[a] = frequency(idx[a]);
    return xi;
  }
  double frequency_norm(std::size_t flat) const {
    const auto xi = frequency_vector(flat);
    return std::sqrt(xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]);
  }

  bool operator==(const Grid& other) const {
    return dim_ == other.dim_ && length_ == other.length_ && points_ == other.points_;
  }

 private:
  int dim_;
  double length_;
  int points_;
  std::size_t size_ = 0;
};

inline Grid make_grid(int dim, double length, int points) { return Grid(dim, length, points); }

enum class Domain { space, frequency };
enum class Direction { forward, inverse };

/// Complex samples on a grid: nodal values (space) or transform coefficients
/// (frequency, transform order).
struct Field {
  Grid grid;
  std::vector<cplx> values;
  Domain domain = Domain::space;

  explicit Field(const Grid& g, Domain d = Domain::space)
      : grid(g), values(g.size(), cplx{0.0, 0.0}), domain(d) {}
  Field(const Grid& g, std::vector<cplx> v, Domain d = Domain::space)
      : grid(g), values(std::move(v)), domain(d) {
    detail::require(values.size() == grid.size(), "Field: value count " +
                                                      std::to_string(values.size()) +
                                                      " does not match grid size " +
                                                      std::to_string(grid.size()));
  }

  static Field from_function(const Grid& g, const std::function<cplx(const Point&)>& fn) {
    Field f(g);
    for (std::size_t i = 0; i < g.size(); ++i) f.values[i] = fn(g.node(i));
    return f;
  }
  static Field constant(const Grid& g, cplx value) {
    return Field(g, std::vector<cplx>(g.size(), value));
  }

  std::size_t size() const { return values.size(); }
  cplx& operator[](std::size_t i) { return values[i]; }
  const cplx& operator[](std::size_t i) const { return values[i]; }
};

namespace detail {

inline void require_same_grid(const Field& a, const Field& b, const char* what) {
  require(a.grid == b.grid, std::string(what) + ": fields live on different grids");
  require(a.values.size() == b.values.size(), std::string(what) + ": size mismatch");
}

// In-place multidimensional DFT, unnormalized in both directions.
inline void dft_in_place(const Grid& grid, std::vector<cplx>& data, bool forward) {
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::Unscaled);
  const int n = grid.points();
  const std::size_t total = grid.size();
  std::vector<cplx> line(n), out(n);
  for (int axis = 0; axis < grid.dim(); ++axis) {
    std::size_t stride = 1;
    for (int a = grid.dim() - 1; a > axis; --a) stride *= static_cast<std::size_t>(n);
    const std::size_t block = stride * static_cast<std::size_t>(n);
    for (std::size_t outer = 0; outer < total; outer += block) {
      for (std::size_t inner = 0; inner < stride; ++inner) {
        const std::size_t base = outer + inner;
        for (int j = 0; j < n; ++j) line[j] = data[base + j * stride];
        if (forward) {
          fft.fwd(out, line);
        } else {
          fft.inv(out, line);
        }
        for (int j = 0; j < n; ++j) data[base + j * stride] = out[j];
      }
    }
  }
}

}  // namespace detail

/// Forward: c_k = N^{-d} sum_j f_j e^{-i xi_k . x_j}, so f(x) = sum_k c_k e^{i xi_k . x}.
/// Parseval: h^d sum |f_j|^2 = L^d sum |c_k|^2. Inverse is the exact two-sided inverse.
inline Field frequency_transform(const Field& f, Direction direction) {
  const bool forward = direction == Direction::forward;
  detail::require(f.values.size() == f.grid.size(), "frequency_transform: malformed field");
  detail::require(f.domain == (forward ? Domain::space : Domain::frequency),
                  forward ? "frequency_transform: forward expects a space-domain field"
                          : "frequency_transform: inverse expects a frequency-domain field");
  Field out(f.grid, f.values, forward ? Domain::frequency : Domain::space);
  detail::dft_in_place(f.grid, out.values, forward);
  if (forward) {
    const double scale = 1.0 / static_cast<double>(f.grid.size());
    for (auto& v : out.values) v *= scale;
  }
  return out;
}

/// spacing^d * sum conj(f) g.
inline cplx weighted_inner_product(const Field& f, const Field& g) {
  detail::require_same_grid(f, g, "weighted_inner_product");
  cplx sum{0.0, 0.0};
  for (std::size_t i = 0; i < f.size(); ++i) sum += std::conj(f[i]) * g[i];
  return sum * f.grid.cell_volume();
}

/// spacing^d * sum conj(f) g w, with w real and positive (plays sqrt(det g)).
inline cplx weighted_inner_product(const Field& f, const Field& g, const Field& w) {
  detail::require_same_grid(f, g, "weighted_inner_product");
  detail::require_same_grid(f, w, "weighted_inner_product");
  cplx sum{0.0, 0.0};
  for (std::size_t i = 0; i < f.size(); ++i) {
    detail::require(w[i].imag() == 0.0 && w[i].real() > 0.0 && std::isfinite(w[i].real()),
                    "weighted_inner_product: weight must be real and positive");
    sum += std::conj(f[i]) * g[i] * w[i].real();
  }
  return sum * f.grid.cell_volume();
}

inline double l2_norm(const Field& f) { return std::sqrt(weighted_inner_product(f, f).real()); }

inline double l2_norm(const Field& f, const Field& w) {
  return std::sqrt(weighted_inner_product(f, f, w).real());
}

/// Spectral derivative along one axis (multiplier i*xi_axis).
inline Field spectral_derivative(const Field& f, int axis) {
  detail::require(axis >= 0 && axis < f.grid.dim(), "spectral_derivative: bad axis");
  Field c = frequency_transform(f, Direction::forward);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const int idx = c.grid.unravel(i)[axis];
    c[i] *= cplx{0.0, c.grid.frequency(idx)};
  }
  return frequency_transform(c, Direction::inverse);
}

/// Frequency ball membership |xi| <= mu with a relative slack of 1e-12 so that
/// lattice points exactly on the sphere are retained.
inline bool within_band(double xi_norm, double mu) {
  return xi_norm <= mu * (1.0 + 1e-12) + 1e-12;
}

/// Fraction of spectral energy with |xi| > mu (0 for the zero field).
/// Field with independent standard complex Gaussian nodal values.
inline Field gaussian_field(const Grid& grid, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Field f(grid);
  for (auto& v : f.values) v = {normal(rng), normal(rng)};
  return f;
}

/// Gaussian coefficients on the band |xi| <= mu_freq, zero elsewhere.
inline Field gaussian_band_limited(const Grid& grid, double mu_freq, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Field c(grid, Domain::frequency);
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (within_band(grid.frequency_norm(i), mu_freq)) c[i] = {normal(rng), normal(rng)};
  return frequency_transform(c, Direction::inverse);
}

inline double band_tail_fraction(const Field& coefficients, double mu) {
  double total = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < coefficients.size(); ++i) {
    const double e = std::norm(coefficients[i]);
    total += e;
    if (!within_band(coefficients.grid.frequency_norm(i), mu)) tail += e;
  }
  return total > 0.0 ? tail / total : 0.0;
}

/// Offsets y in the imaginary directions of U_a = {|Im z| < a}, with quadrature
/// weights for integrals over |y| < a.
struct TubeGeometry {
  int dim = 1;
  double half_width = 0.0;
  std::vector<Point> offsets;
  std::vector<double> weights;

  TubeGeometry(int d, double a, std::vector<Point> ys, std::vector<double> ws = {})
      : dim(d), half_width(a), offsets(std::move(ys)), weights(std::move(ws)) {
    detail::require(a > 0.0 && std::isfinite(a), "TubeGeometry: half width must be positive");
    detail::require(weights.empty() || weights.size() == offsets.size(),
                    "TubeGeometry: weight count must match offsets");
    for (const auto& y : offsets) {
      const double r = std::sqrt(y[0] * y[0] + y[1] * y[1] + y[2] * y[2]);
      detail::require(r < a, "TubeGeometry: every offset must satisfy |y| < a");
    }
  }

  /// Product Gauss rule on the ball |y| < a: interval (d=1), polar (d=2),
  /// spherical (d=3).
  static TubeGeometry quadrature(int d, double a, int order = 24) {
    detail::require(d >= 1 && d <= 3, "TubeGeometry: dimension must be 1, 2 or 3");
    std::vector<Point> ys;
    std::vector<double> ws;
    if (d == 1) {
      const auto rule = gauss_legendre(order, -a, a);
      for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        ys.push_back({rule.nodes[i], 0.0, 0.0});
        ws.push_back(rule.weights[i]);
      }
    } else if (d == 2) {
      const auto radial = gauss_legendre(order, 0.0, a);
      const int angles = 2 * order;
      for (std::size_t i = 0; i < radial.nodes.size(); ++i) {
        for (int k = 0; k < angles; ++k) {
          const double t = 2.0 * std::numbers::pi * (k + 0.5) / angles;
          const double r = radial.nodes[i];
          ys.push_back({r * std::cos(t), r * std::sin(t), 0.0});
          ws.push_back(radial.weights[i] * r * 2.0 * std::numbers::pi / angles);
        }
      }
    } else {
      const auto radial = gauss_legendre(order, 0.0, a);
      const auto polar = gauss_legendre(order, -1.0, 1.0);
      const int angles = 2 * order;
      for (std::size_t i = 0; i < radial.nodes.size(); ++i) {
        for (std::size_t j = 0; j < polar.nodes.size(); ++j) {
          const double ct = polar.nodes[j];
          const double st = std::sqrt(1.0 - ct * ct);
          for (int k = 0; k < angles; ++k) {
            const double p = 2.0 * std::numbers::pi * (k + 0.5) / angles;
            const double r = radial.nodes[i];
            ys.push_back({r * st * std::cos(p), r * st * std::sin(p), r * ct});
            ws.push_back(radial.weights[i] * r * r * polar.weights[j] * 2.0 *
                         std::numbers::pi / angles);
          }
        }
      }
    }
    return TubeGeometry(d, a, std::move(ys), std::move(ws));
  }
};

namespace detail {

inline Field band_limited_coefficients(const Field& f, double mu_freq, const char* what) {
  require(mu_freq >= 0.0, std::string(what) + ": band radius must be non-negative");
  Field c = frequency_transform(f, Direction::forward);
  const double tail = band_tail_fraction(c, mu_freq);
  if (tail > 1e-10) {
    std::ostringstream os;
    os << what << ": field is not band-limited to |xi| <= " << mu_freq
       << " (relative tail mass " << tail << " > 1e-10)";
    throw InvalidArgument(os.str());
  }
  return c;
}

inline double dot(const Point& a, const Point& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

}  // namespace detail

/// L2 norm of x -> f(x + i y) for f band-limited to |xi| <= mu_freq, using
/// f(x + iy) = sum_k c_k e^{-y.xi_k} e^{i xi_k . x}.
inline double tube_slice_norm(const Field& f, std::span<const double> y, double mu_freq) {
  detail::require(static_cast<int>(y.size()) == f.grid.dim(),
                  "tube_slice_norm: offset dimension must match the grid");
  const Field c = detail::band_limited_coefficients(f, mu_freq, "tube_slice_norm");
  Point yy{0.0, 0.0, 0.0};
  for (std::size_t a = 0; a < y.size(); ++a) yy[a] = y[a];
  double sum = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c[i] == cplx{0.0, 0.0}) continue;
    sum += std::norm(c[i]) * std::exp(-2.0 * detail::dot(yy, c.grid.frequency_vector(i)));
  }
  return std::sqrt(sum * c.grid.volume());
}

/// Nodal values of x -> f(x + i y) on the grid.
inline Field tube_slice_values(const Field& f, const Point& y, double mu_freq) {
  Field c = detail::band_limited_coefficients(f, mu_freq, "tube_slice_values");
  for (std::size_t i = 0; i < c.size(); ++i)
    c[i] *= std::exp(-detail::dot(y, c.grid.frequency_vector(i)));
  return frequency_transform(c, Direction::inverse);
}

/// Integral of |f|^2 over the tube, i.e. the y-integral of squared slice norms.
inline double tube_integral(const Field& f, const TubeGeometry& tube, double mu_freq) {
  detail::require(tube.dim == f.grid.dim(), "tube_integral: tube dimension must match grid");
  detail::require(tube.weights.size() == tube.offsets.size(),
                  "tube_integral: tube geometry carries no quadrature weights");
  double total = 0.0;
  for (std::size_t k = 0; k < tube.offsets.size(); ++k) {
    const double s = tube_slice_norm(f, std::span<const double>(tube.offsets[k].data(), tube.dim),
                                     mu_freq);
    total += tube.weights[k] * s * s;
  }
  return total;
}

}  // namespace uncplab
