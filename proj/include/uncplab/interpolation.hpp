#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "uncplab/carleman.hpp"
#include "uncplab/errors.hpp"
#include "uncplab/field.hpp"
#include "uncplab/hash.hpp"
#include "uncplab/quadrature.hpp"
#include "uncplab/thick_set.hpp"

namespace uncplab {

/// Result of checking lhs <= C * rhs over a family of test functions.
/// `constant` is the smallest C that works for every member; `allowed` is the
/// configured C and `pass` holds when constant <= allowed.
struct InterpolationCertificate {
  double exponent = 0.0;
  double constant = 0.0;
  double allowed = 0.0;
  double lhs = 0.0;  ///< worst instance
  double rhs = 0.0;  ///< worst instance, without the factor C
  std::size_t worst_index = 0;
  std::size_t instances = 0;
  bool pass = false;
  std::string geometry_hash;
};

namespace detail {

struct CertificateAccumulator {
  InterpolationCertificate cert;
  double worst_ratio = 0.0;
  void add(double lhs, double rhs) {
    const std::size_t index = cert.instances++;
    if (lhs == 0.0) return;  // zero instances hold for every C
    const double ratio = rhs > 0.0 ? lhs / rhs : std::numeric_limits<double>::infinity();
    if (ratio > worst_ratio) {
      worst_ratio = ratio;
      cert.lhs = lhs;
      cert.rhs = rhs;
      cert.worst_index = index;
    }
  }
  InterpolationCertificate finish(double exponent, double allowed, std::string hash) {
    cert.exponent = exponent;
    cert.constant = worst_ratio;
    cert.allowed = allowed;
    cert.pass = std::isfinite(worst_ratio) && worst_ratio <= allowed * (1.0 + 1e-12);
    cert.geometry_hash = std::move(hash);
    return cert;
  }
};

}  // namespace detail

/// Union of disjoint closed intervals.
struct IntervalSet {
  std::vector<std::pair<double, double>> pieces;

  double measure() const {
    double s = 0.0;
    for (auto [a, b] : pieces) s += b - a;
    return s;
  }
  void validate(double lo, double hi) const {
    for (auto [a, b] : pieces)
      detail::require(a < b && a >= lo - 1e-15 && b <= hi + 1e-15, "IntervalSet: pieces must be non-empty and inside the base interval");
    detail::require(measure() > 0.0, "IntervalSet: |E| must be positive");
  }
  std::string hash() const {
    ContentHash h;
    for (auto [a, b] : pieces) h.add(a).add(b);
    return h.hex();
  }
};

/// Polynomial sum_k c_k (z - centre)^k, evaluated by Horner's rule.
struct Polynomial {
  std::vector<cplx> coefficients;
  cplx centre{0.0, 0.0};

  cplx operator()(cplx z) const {
    cplx s{0.0, 0.0};
    const cplx w = z - centre;
    for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) s = s * w + *it;
    return s;
  }
  Polynomial scaled(cplx factor) const {
    Polynomial p = *this;
    for (auto& c : p.coefficients) c *= factor;
    return p;
  }
};

/// Polynomials of degree <= max_degree on a neighbourhood of [0, 1]: the
/// monomials z^k and (1 - z)^k, the shifted Chebyshev polynomials T_k(2z - 1)
/// and `random_count` seeded members with standard normal complex coefficients.
inline std::vector<Polynomial> polynomial_family(int max_degree, int random_count, std::uint64_t seed) {
  detail::require(max_degree >= 0, "polynomial_family: degree must be non-negative");
  std::vector<Polynomial> out;
  for (int k = 0; k <= max_degree; ++k) {
    Polynomial mono{std::vector<cplx>(k + 1, 0.0), 0.0};
    mono.coefficients[k] = 1.0;
    out.push_back(mono);
    Polynomial flip{std::vector<cplx>(k + 1, 0.0), 1.0};
    flip.coefficients[k] = (k % 2 == 0) ? 1.0 : -1.0;
    out.push_back(flip);
  }
  // T_k(2z - 1) in powers of (z - 1/2): T_k(w) with w = 2(z - 1/2).
  std::vector<std::vector<double>> cheb{{1.0}, {0.0, 1.0}};
  for (int k = 2; k <= max_degree; ++k) {
    std::vector<double> next(k + 1, 0.0);
    for (std::size_t i = 0; i < cheb[k - 1].size(); ++i) next[i + 1] += 2.0 * cheb[k - 1][i];
    for (std::size_t i = 0; i < cheb[k - 2].size(); ++i) next[i] -= cheb[k - 2][i];
    cheb.push_back(next);
  }
  for (int k = 1; k <= max_degree; ++k) {
    Polynomial t{{}, 0.5};
    for (std::size_t i = 0; i < cheb[k].size(); ++i) t.coefficients.push_back(cheb[k][i] * std::pow(2.0, i));
    out.push_back(t);
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int n = 0; n < random_count; ++n) {
    Polynomial p{{}, 0.5};
    for (int k = 0; k <= max_degree; ++k) p.coefficients.push_back({normal(rng) * std::pow(2.0, k), normal(rng) * std::pow(2.0, k)});
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// One-dimensional interpolation on [0, 1]:
//   sup_[0,1] |g| <= C |E|^{-delta/2} (int_E |g|^2)^{delta/2} (sup_X |g|)^{1-delta},
//   delta = c / (1 + |log |E||).

/// Exponent scale c of the one-dimensional inequality, calibrated once with
/// calibrate_line_exponent(polynomial_family(16, 24, 2024), standard sets, C = 1)
/// and rounded down.
inline constexpr double kLineExponentScale = 0.41;
inline constexpr double kLineConstant = 1.0;

struct LineNeighbourhood {
  Disk disk{{0.5, 0.0}, 1.0};
};

namespace detail {

template <class Fn>
double sup_on_segment(Fn&& modulus, double a, double b, int samples = 2048) {
  int best_i = 0;
  double best = -1.0;
  for (int i = 0; i <= samples; ++i) {
    const double v = modulus(a + (b - a) * i / samples);
    if (v > best) {
      best = v;
      best_i = i;
    }
  }
  const double lo = a + (b - a) * std::max(0, best_i - 1) / samples;
  const double hi = a + (b - a) * std::min(samples, best_i + 1) / samples;
  return std::max(best, golden_max(modulus, lo, hi));
}

inline double sup_on_circle(const std::function<double(Planar)>& modulus, const Disk& d, int samples = 2048) {
  return sup_on_segment([&](double t) { return modulus(d.centre + std::polar(d.radius, t)); }, 0.0,
                        2.0 * std::numbers::pi, samples);
}

template <class Fn>
double integral_on_intervals(Fn&& fn, const IntervalSet& e) {
  double s = 0.0;
  for (auto [a, b] : e.pieces) {
    const auto rule = composite_gauss(a, b, 4, 16);
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) s += rule.weights[i] * fn(rule.nodes[i]);
  }
  return s;
}

struct LineTerms {
  double sup_line;
  double mass_E;
  double sup_X;
};

inline LineTerms line_terms(const std::function<cplx(cplx)>& g, const IntervalSet& e, const LineNeighbourhood& x) {
  LineTerms t{};
  t.sup_line = sup_on_segment([&](double s) { return std::abs(g(s)); }, 0.0, 1.0);
  t.mass_E = integral_on_intervals([&](double s) { return std::norm(g(s)); }, e);
  // Maximum modulus: the supremum over the disk is attained on its boundary.
  t.sup_X = sup_on_circle([&](Planar z) { return std::abs(g(z)); }, x.disk);
  return t;
}

inline double line_rhs(const LineTerms& t, double measure, double delta) {
  if (t.mass_E == 0.0 || t.sup_X == 0.0) return 0.0;
  return std::exp(0.5 * delta * std::log(t.mass_E / measure) + (1.0 - delta) * std::log(t.sup_X));
}

}  // namespace detail

inline double line_exponent(double c, const IntervalSet& e) {
  return c / (1.0 + std::abs(std::log(e.measure())));
}

/// Checks the one-dimensional inequality over a family of holomorphic g.
inline InterpolationCertificate interpolate_1d(std::span<const std::function<cplx(cplx)>> family, const IntervalSet& e,
                                               double c = kLineExponentScale, double allowed = kLineConstant,
                                               const LineNeighbourhood& x = {}) {
  e.validate(0.0, 1.0);
  detail::require(c > 0.0 && c <= 1.0, "interpolate_1d: exponent scale c must lie in (0, 1]");
  detail::require(x.disk.contains({0.0, 0.0}) && x.disk.contains({1.0, 0.0}), "interpolate_1d: X must contain [0, 1]");
  const double delta = line_exponent(c, e);
  detail::CertificateAccumulator acc;
  for (const auto& g : family) {
    const auto t = detail::line_terms(g, e, x);
    acc.add(t.sup_line, detail::line_rhs(t, e.measure(), delta));
  }
  ContentHash h;
  h.add(e.hash()).add(x.disk.centre.real()).add(x.disk.centre.imag()).add(x.disk.radius);
  return acc.finish(delta, allowed, h.hex());
}

/// Largest c in (0, 1] for which every member of the family satisfies the
/// inequality with constant C on every set, found by bisection.
inline double calibrate_line_exponent(std::span<const std::function<cplx(cplx)>> family,
                                      std::span<const IntervalSet> sets, double C = 1.0,
                                      const LineNeighbourhood& x = {}) {
  detail::require(!family.empty() && !sets.empty(), "calibrate_line_exponent: empty calibration family");
  std::vector<std::vector<detail::LineTerms>> terms;
  for (const auto& e : sets) {
    e.validate(0.0, 1.0);
    std::vector<detail::LineTerms> row;
    for (const auto& g : family) row.push_back(detail::line_terms(g, e, x));
    terms.push_back(std::move(row));
  }
  auto holds = [&](double c) {
    for (std::size_t s = 0; s < sets.size(); ++s) {
      const double delta = line_exponent(c, sets[s]);
      for (const auto& t : terms[s])
        if (t.sup_line > C * detail::line_rhs(t, sets[s].measure(), delta) * (1.0 + 1e-12)) return false;
    }
    return true;
  };
  if (holds(1.0)) return 1.0;
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (holds(mid) ? lo : hi) = mid;
  }
  if (lo <= 0.0) throw NumericalError("calibrate_line_exponent: no positive exponent scale works with this constant");
  return lo;
}

/// The three observation sets used for calibration: [0,1], [0,1/2] and [0,1/4] u [3/4,1].
inline std::vector<IntervalSet> standard_line_sets() {
  return {IntervalSet{{{0.0, 1.0}}}, IntervalSet{{{0.0, 0.5}}}, IntervalSet{{{0.0, 0.25}, {0.75, 1.0}}}};
}

// ---------------------------------------------------------------------------
// Ball interpolation in d in {1, 2}:
//   int_{B_R} |g|^2 <= C (int_E |g|^2)^delta (int_X |g(z)|^2 |dz|)^{1-delta}
// with X = {z = x + iy : |x - centre| < R + 1, |y| < b}.

struct BallGeometry {
  int dim = 1;
  std::array<double, 2> centre{0.0, 0.0};
  double radius = 1.0;
  double outer_radius = 2.0;  ///< real radius of X
  double width = 1.0;         ///< imaginary half width b of X

  std::string hash() const {
    ContentHash h;
    h.add(static_cast<std::int64_t>(dim)).add(centre[0]).add(centre[1]).add(radius).add(outer_radius).add(width);
    return h.hex();
  }
};

/// E inside B_R as a union of axis-aligned boxes intersected with the ball.
struct BallSubset {
  std::vector<std::pair<std::array<double, 2>, std::array<double, 2>>> boxes;
};

using BallFunction = std::function<cplx(cplx, cplx)>;

namespace detail {

inline double ball_box_integral(const std::function<double(double, double)>& fn, const BallGeometry& ball,
                                const std::array<double, 2>& lo, const std::array<double, 2>& hi, int order = 24) {
  const double R = ball.radius;
  const double cx = ball.centre[0], cy = ball.centre[1];
  if (ball.dim == 1) {
    const double a = std::max(lo[0], cx - R), b = std::min(hi[0], cx + R);
    if (a >= b) return 0.0;
    const auto rule = composite_gauss(a, b, 4, order);
    double s = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) s += rule.weights[i] * fn(rule.nodes[i], 0.0);
    return s;
  }
  // x = cx + R sin(theta) removes the square-root endpoint behaviour of the chord length.
  std::vector<double> cuts{-0.5 * std::numbers::pi, 0.5 * std::numbers::pi};
  for (double edge : {lo[0], hi[0]}) {
    const double u = (edge - cx) / R;
    if (u > -1.0 && u < 1.0) cuts.push_back(std::asin(u));
  }
  std::sort(cuts.begin(), cuts.end());
  double s = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double mid = cx + R * std::sin(0.5 * (cuts[k] + cuts[k + 1]));
    if (mid <= lo[0] || mid >= hi[0]) continue;
    const auto outer = composite_gauss(cuts[k], cuts[k + 1], 2, order);
    for (std::size_t i = 0; i < outer.nodes.size(); ++i) {
      const double t = outer.nodes[i];
      const double x = cx + R * std::sin(t);
      const double chord = R * std::cos(t);
      const double ya = std::max(lo[1], cy - chord), yb = std::min(hi[1], cy + chord);
      if (ya >= yb) continue;
      const auto inner = gauss_legendre(order, ya, yb);
      double row = 0.0;
      for (std::size_t j = 0; j < inner.nodes.size(); ++j) row += inner.weights[j] * fn(x, inner.nodes[j]);
      s += outer.weights[i] * R * std::cos(t) * row;
    }
  }
  return s;
}

inline double ball_integral(const std::function<double(double, double)>& fn, const BallGeometry& ball) {
  return ball_box_integral(fn, ball, {ball.centre[0] - ball.radius, ball.centre[1] - ball.radius},
                           {ball.centre[0] + ball.radius, ball.centre[1] + ball.radius});
}

// Integral of |g(x + iy)|^2 over |x - centre| < outer_radius, |y| < width.
inline double complex_neighbourhood_integral(const BallFunction& g, const BallGeometry& ball, int order = 16) {
  if (ball.dim == 1) {
    const auto rx = composite_gauss(ball.centre[0] - ball.outer_radius, ball.centre[0] + ball.outer_radius, 4, order);
    const auto ry = composite_gauss(-ball.width, ball.width, 2, order);
    double s = 0.0;
    for (std::size_t i = 0; i < rx.nodes.size(); ++i)
      for (std::size_t j = 0; j < ry.nodes.size(); ++j)
        s += rx.weights[i] * ry.weights[j] * std::norm(g({rx.nodes[i], ry.nodes[j]}, 0.0));
    return s;
  }
  auto polar = [order](double radius) {
    std::vector<std::array<double, 3>> pts;  // x, y, weight
    const auto radial = gauss_legendre(order, 0.0, radius);
    const int angles = 2 * order;
    for (std::size_t i = 0; i < radial.nodes.size(); ++i)
      for (int k = 0; k < angles; ++k) {
        const double t = 2.0 * std::numbers::pi * (k + 0.5) / angles;
        pts.push_back({radial.nodes[i] * std::cos(t), radial.nodes[i] * std::sin(t),
                       radial.weights[i] * radial.nodes[i] * 2.0 * std::numbers::pi / angles});
      }
    return pts;
  };
  const auto real_part = polar(ball.outer_radius);
  const auto imag_part = polar(ball.width);
  std::vector<double> partial(real_part.size(), 0.0);
  parallel_for(real_part.size(), [&](std::size_t i) {
    const auto& p = real_part[i];
    double s = 0.0;
    for (const auto& q : imag_part)
      s += q[2] * std::norm(g({ball.centre[0] + p[0], q[0]}, {ball.centre[1] + p[1], q[1]}));
    partial[i] = p[2] * s;
  });
  double total = 0.0;
  for (double v : partial) total += v;
  return total;
}

}  // namespace detail

struct BallTerms {
  double ball_mass = 0.0;
  double observed_mass = 0.0;
  double neighbourhood_mass = 0.0;
};

inline BallTerms ball_terms(const BallFunction& g, const BallSubset& e, const BallGeometry& ball) {
  auto g2 = [&g](double x, double y) { return std::norm(g(x, y)); };
  BallTerms t;
  t.ball_mass = detail::ball_integral(g2, ball);
  for (const auto& [lo, hi] : e.boxes) t.observed_mass += detail::ball_box_integral(g2, ball, lo, hi);
  t.neighbourhood_mass = detail::complex_neighbourhood_integral(g, ball);
  return t;
}

/// Checks the ball inequality for configured (C, delta) over a family.
inline InterpolationCertificate interpolate_ball(std::span<const BallFunction> family, const BallSubset& e,
                                                 const BallGeometry& ball, double delta, double allowed) {
  detail::require(ball.dim == 1 || ball.dim == 2, "interpolate_ball: dimension must be 1 or 2");
  detail::require(ball.radius > 0.0 && ball.outer_radius > ball.radius && ball.width > 0.0,
                  "interpolate_ball: need 0 < R < outer radius and positive width");
  detail::require(delta > 0.0 && delta <= 1.0, "interpolate_ball: delta must lie in (0, 1]");
  double measure = 0.0;
  for (const auto& [lo, hi] : e.boxes)
    measure += detail::ball_box_integral([](double, double) { return 1.0; }, ball, lo, hi);
  detail::require(!e.boxes.empty() && measure > 0.0, "interpolate_ball: E must have positive measure");
  detail::CertificateAccumulator acc;
  for (const auto& g : family) {
    const auto t = ball_terms(g, e, ball);
    const double rhs = (t.observed_mass > 0.0 && t.neighbourhood_mass > 0.0)
                           ? std::exp(delta * std::log(t.observed_mass) + (1.0 - delta) * std::log(t.neighbourhood_mass))
                           : 0.0;
    acc.add(t.ball_mass, rhs);
  }
  ContentHash h;
  h.add(ball.hash());
  for (const auto& [lo, hi] : e.boxes) h.add(lo[0]).add(lo[1]).add(hi[0]).add(hi[1]);
  return acc.finish(delta, allowed, h.hex());
}

// ---------------------------------------------------------------------------
// Tube interpolation on the torus:
//   int |f|^2 <= C (int_omega |f|^2)^nu (mean over |y| < a of int |f(x + iy)|^2 dx)^{1-nu}
// The tube term is normalized by the volume of the y-ball.

struct HolderAggregate {
  double lhs = 0.0;  ///< sum c_k
  double rhs = 0.0;  ///< C (sum a_k)^nu (sum b_k)^{1-nu}
  double per_cell_constant = 0.0;  ///< max_k c_k / (a_k^nu b_k^{1-nu})
  bool per_cell_pass = false;
  bool pass = false;
};

/// Hoelder step: per-cell bounds c_k <= C a_k^nu b_k^{1-nu} imply the
/// aggregate bound with the same C.
inline HolderAggregate holder_aggregate(std::span<const double> a, std::span<const double> b,
                                        std::span<const double> c, double C, double nu) {
  detail::require(a.size() == b.size() && b.size() == c.size() && !a.empty(), "holder_aggregate: size mismatch");
  detail::require(nu > 0.0 && nu < 1.0 + 1e-15, "holder_aggregate: nu must lie in (0, 1]");
  HolderAggregate out;
  double sa = 0.0, sb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    detail::require(a[k] >= 0.0 && b[k] >= 0.0 && c[k] >= 0.0, "holder_aggregate: cell quantities must be non-negative");
    sa += a[k];
    sb += b[k];
    out.lhs += c[k];
    const double bound = std::pow(a[k], nu) * std::pow(b[k], 1.0 - nu);
    if (c[k] > 0.0)
      out.per_cell_constant = std::max(out.per_cell_constant, bound > 0.0 ? c[k] / bound : std::numeric_limits<double>::infinity());
  }
  out.rhs = C * std::pow(sa, nu) * std::pow(sb, 1.0 - nu);
  out.per_cell_pass = out.per_cell_constant <= C * (1.0 + 1e-12);
  out.pass = out.lhs <= out.rhs * (1.0 + 1e-12);
  return out;
}

struct TubeCertificate {
  InterpolationCertificate global;
  double full_mass = 0.0;
  double observed_mass = 0.0;
  double tube_mass = 0.0;  ///< y-ball average of squared slice norms
  std::vector<double> cell_observed;   ///< a_k
  std::vector<double> cell_tube;       ///< b_k
  std::vector<double> cell_full;       ///< c_k
  HolderAggregate aggregate;
};

namespace detail {

struct BandModes {
  std::vector<std::array<int, 3>> wavenumbers;
  std::vector<Point> frequencies;
  std::vector<cplx> coefficients;
};

inline BandModes band_modes(const Field& f, double mu) {
  const Field c = band_limited_coefficients(f, mu, "interpolate_tube");
  BandModes m;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (!within_band(c.grid.frequency_norm(i), mu)) continue;
    const auto idx = c.grid.unravel(i);
    std::array<int, 3> k{0, 0, 0};
    for (int a = 0; a < c.grid.dim(); ++a) k[a] = c.grid.wavenumber(idx[a]);
    m.wavenumbers.push_back(k);
    m.frequencies.push_back(c.grid.frequency_vector(i));
    m.coefficients.push_back(c[i]);
  }
  return m;
}

// Integral over a box set S of |sum_k c_k w_k e^{i xi_k x}|^2 with per-mode weights w_k.
inline double band_mass(const BandModes& m, std::span<const double> weights, const OmegaMoments& moments) {
  cplx s{0.0, 0.0};
  for (std::size_t p = 0; p < m.coefficients.size(); ++p) {
    const cplx cp = std::conj(m.coefficients[p]) * weights[p];
    for (std::size_t q = 0; q < m.coefficients.size(); ++q) {
      std::array<int, 3> d{0, 0, 0};
      for (int a = 0; a < 3; ++a) d[a] = m.wavenumbers[q][a] - m.wavenumbers[p][a];
      s += cp * m.coefficients[q] * weights[q] * moments(d);
    }
  }
  return s.real();
}

inline std::vector<Box> intersect_boxes(const std::vector<Box>& set, const Box& cell, int dim) {
  std::vector<Box> out;
  for (const auto& b : set) {
    Box r;
    bool empty = false;
    for (int a = 0; a < dim; ++a) {
      r.lo[a] = std::max(b.lo[a], cell.lo[a]);
      r.hi[a] = std::min(b.hi[a], cell.hi[a]);
      if (r.lo[a] >= r.hi[a]) empty = true;
    }
    if (!empty) out.push_back(r);
  }
  return out;
}

}  // namespace detail

/// Checks the tube inequality for f band-limited to mu_freq and the Hoelder
/// aggregation over the partition of the torus into `cells_per_axis`^d cubes.
inline TubeCertificate interpolate_tube(const Field& f, double mu_freq, const ThickSet& omega, const TubeGeometry& tube,
                                        double nu, double allowed, int cells_per_axis = 0) {
  detail::require(omega.verified.has_value(), "interpolate_tube: thickness of omega is unverified");
  detail::require(omega.has_geometry(), "interpolate_tube: omega must carry its box geometry");
  detail::require(omega.grid == f.grid, "interpolate_tube: omega lives on another grid");
  detail::require(tube.dim == f.grid.dim() && tube.weights.size() == tube.offsets.size(),
                  "interpolate_tube: tube geometry must match the grid and carry weights");
  detail::require(nu > 0.0 && nu < 1.0, "interpolate_tube: nu must lie in (0, 1)");
  const Grid& grid = f.grid;
  const int d = grid.dim();
  const auto modes = detail::band_modes(f, mu_freq);
  const std::size_t n = modes.coefficients.size();

  double ball_volume = 0.0;
  for (double w : tube.weights) ball_volume += w;
  // Per-mode slice factors e^{-y . xi}, one vector per tube offset.
  std::vector<std::vector<double>> slice(tube.offsets.size(), std::vector<double>(n));
  for (std::size_t k = 0; k < tube.offsets.size(); ++k)
    for (std::size_t p = 0; p < n; ++p) slice[k][p] = std::exp(-detail::dot(tube.offsets[k], modes.frequencies[p]));
  const std::vector<double> ones(n, 1.0);

  TubeCertificate out;
  for (std::size_t p = 0; p < n; ++p) {
    const double c2 = std::norm(modes.coefficients[p]);
    out.full_mass += c2 * grid.volume();
    for (std::size_t k = 0; k < tube.offsets.size(); ++k)
      out.tube_mass += tube.weights[k] * c2 * slice[k][p] * slice[k][p] * grid.volume();
  }
  out.tube_mass /= ball_volume;
  out.observed_mass = detail::band_mass(modes, ones, OmegaMoments(omega));

  const double rhs = (out.observed_mass > 0.0 && out.tube_mass > 0.0)
                         ? std::exp(nu * std::log(out.observed_mass) + (1.0 - nu) * std::log(out.tube_mass))
                         : 0.0;
  detail::CertificateAccumulator acc;
  acc.add(out.full_mass, rhs);
  ContentHash h;
  h.add(static_cast<std::int64_t>(d)).add(grid.length()).add(static_cast<std::int64_t>(grid.points())).add(tube.half_width);
  for (const auto& b : omega.boxes)
    for (int a = 0; a < d; ++a) h.add(b.lo[a]).add(b.hi[a]);
  out.global = acc.finish(nu, allowed, h.hex());

  // Cells of side about twice the thickness radius.
  if (cells_per_axis <= 0)
    cells_per_axis = std::max(1, static_cast<int>(std::lround(grid.length() / (2.0 * omega.verified->radius))));
  const double side = grid.length() / cells_per_axis;
  std::size_t cell_count = 1;
  for (int a = 0; a < d; ++a) cell_count *= static_cast<std::size_t>(cells_per_axis);
  out.cell_observed.assign(cell_count, 0.0);
  out.cell_tube.assign(cell_count, 0.0);
  out.cell_full.assign(cell_count, 0.0);
  parallel_for(cell_count, [&](std::size_t cell) {
    Box box;
    std::size_t rest = cell;
    for (int a = 0; a < d; ++a) {
      const int k = static_cast<int>(rest % static_cast<std::size_t>(cells_per_axis));
      rest /= static_cast<std::size_t>(cells_per_axis);
      box.lo[a] = k * side;
      box.hi[a] = (k + 1) * side;
    }
    ThickSet cell_set(grid);
    cell_set.boxes = {box};
    const OmegaMoments cell_moments(cell_set);
    out.cell_full[cell] = detail::band_mass(modes, ones, cell_moments);
    double tube_part = 0.0;
    for (std::size_t k = 0; k < tube.offsets.size(); ++k)
      tube_part += tube.weights[k] * detail::band_mass(modes, slice[k], cell_moments);
    out.cell_tube[cell] = tube_part / ball_volume;
    ThickSet observed(grid);
    observed.boxes = detail::intersect_boxes(omega.boxes, box, d);
    if (!observed.boxes.empty()) out.cell_observed[cell] = detail::band_mass(modes, ones, OmegaMoments(observed));
  });
  // Clip quadrature round-off below zero.
  for (auto* v : {&out.cell_observed, &out.cell_tube, &out.cell_full})
    for (double& x : *v) x = std::max(x, 0.0);
  double per_cell = 0.0;
  for (std::size_t k = 0; k < cell_count; ++k) {
    if (out.cell_full[k] == 0.0) continue;
    const double bound = std::pow(out.cell_observed[k], nu) * std::pow(out.cell_tube[k], 1.0 - nu);
    per_cell = std::max(per_cell, bound > 0.0 ? out.cell_full[k] / bound : std::numeric_limits<double>::infinity());
  }
  out.aggregate = holder_aggregate(out.cell_observed, out.cell_tube, out.cell_full, per_cell, nu);
  return out;
}

// ---------------------------------------------------------------------------

/// sup over B_{R'} of |u| divided by the L2 norm of u over B_R \ B_{R'}, u the
/// harmonic extension of the boundary data on the circle of radius R. The
/// extension is built from `samples` equispaced boundary values; both norms
/// are then evaluated from its Fourier series. Returns 0 for u = 0.
inline double interior_sup_check(const std::function<double(double)>& boundary_data, double R, double R_prime,
                                 int samples = 256) {
  detail::require(R > 0.0 && R_prime > 0.0, "interior_sup_check: radii must be positive");
  detail::require(R_prime < R, "interior_sup_check: need R' < R");
  detail::require(samples >= 8 && (samples & (samples - 1)) == 0, "interior_sup_check: samples must be a power of two");
  const Grid circle(1, 2.0 * std::numbers::pi, samples);
  const Field data = Field::from_function(circle, [&](const Point& t) { return cplx(boundary_data(t[0]), 0.0); });
  const Field c = frequency_transform(data, Direction::forward);
  // u(r, t) = sum_n c_n (r/R)^{|n|} e^{i n t}; Nyquist mode split evenly keeps u real.
  std::vector<std::pair<int, cplx>> series;
  for (int j = 0; j < samples; ++j) {
    const int n = circle.wavenumber(j);
    if (2 * std::abs(n) == samples) {
      series.push_back({n, 0.5 * c[j]});
      series.push_back({-n, 0.5 * c[j]});
    } else {
      series.push_back({n, c[j]});
    }
  }
  double annulus = 0.0;
  for (const auto& [n, cn] : series) {
    const double m = std::abs(n);
    annulus += std::norm(cn) * 2.0 * std::numbers::pi * (R * R - std::pow(R_prime / R, 2.0 * m) * R_prime * R_prime) /
               (2.0 * m + 2.0);
  }
  if (annulus <= 0.0) return 0.0;
  auto u = [&](double t) {
    cplx s{0.0, 0.0};
    for (const auto& [n, cn] : series) s += cn * std::pow(R_prime / R, std::abs(n)) * std::exp(cplx(0.0, n * t));
    return std::abs(s.real());
  };
  // |u| is subharmonic, so its supremum over the closed ball is on the circle r = R'.
  const double sup = detail::sup_on_segment(u, 0.0, 2.0 * std::numbers::pi, 4 * samples);
  return sup / std::sqrt(annulus);
}

}  // namespace uncplab
