#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "uncplab/errors.hpp"
#include "uncplab/field.hpp"
#include "uncplab/hash.hpp"
#include "uncplab/parallel.hpp"
#include "uncplab/quadrature.hpp"

namespace uncplab {

/// Points of the plane C ~ R^2.
using Planar = std::complex<double>;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Disk {
  Planar centre{0.0, 0.0};
  double radius = 1.0;
  bool contains(Planar x) const { return std::abs(x - centre) < radius; }
  double boundary_distance(Planar x) const { return radius - std::abs(x - centre); }
};

struct Rectangle {
  Planar lo{0.0, 0.0};
  Planar hi{1.0, 1.0};
  bool contains(Planar x) const {
    return x.real() > lo.real() && x.real() < hi.real() && x.imag() > lo.imag() && x.imag() < hi.imag();
  }
  double width() const { return hi.real() - lo.real(); }
  double height() const { return hi.imag() - lo.imag(); }
};

struct Segment {
  Planar a{0.0, 0.0};
  Planar b{1.0, 0.0};
  double length() const { return std::abs(b - a); }
  Planar at(double t) const { return a + t * (b - a); }
};

struct Atom {
  Planar at{0.0, 0.0};
  double mass = 1.0;
};

/// Dirichlet Green function of the disk |x| < R:
///   G(x, y) = (1/2pi) log(|R^2 - x conj(y)| / (R |x - y|)).
inline double green_disk(double R, Planar x, Planar y) {
  detail::require(R > 0.0, "green_disk: radius must be positive");
  detail::require(std::abs(x) <= R && std::abs(y) <= R, "green_disk: points must lie in the closed disk");
  const double sep = std::abs(x - y);
  if (sep == 0.0) throw InvalidArgument("green_disk: x = y is the logarithmic singularity");
  return std::log(std::abs(R * R - x * std::conj(y)) / (R * sep)) / kTwoPi;
}

/// X (disk) ⊃ closure(Y) ⊃ K (segments), with mu a probability measure on K
/// given either by atoms or as normalized arc length on a subset E of K.
struct CarlemanGeometry {
  Disk domain;
  std::variant<Disk, Rectangle> inner = Disk{};
  std::vector<Segment> compact{Segment{}};
  std::vector<Atom> atoms;         ///< non-empty: mu = sum m_i delta_{a_i}
  std::vector<Segment> observed;   ///< E as segments on K; empty means E = K

  bool atomic() const { return !atoms.empty(); }
  const std::vector<Segment>& measure_support() const { return observed.empty() ? compact : observed; }
  double observed_length() const {
    double s = 0.0;
    for (const auto& seg : measure_support()) s += seg.length();
    return s;
  }
  bool in_inner(Planar x) const {
    return std::visit([x](const auto& y) { return y.contains(x); }, inner);
  }

  std::string content_hash() const {
    ContentHash h;
    h.add(domain.centre.real()).add(domain.centre.imag()).add(domain.radius);
    std::visit(
        [&h](const auto& y) {
          using T = std::decay_t<decltype(y)>;
          if constexpr (std::is_same_v<T, Disk>) {
            h.add("disk").add(y.centre.real()).add(y.centre.imag()).add(y.radius);
          } else {
            h.add("rect").add(y.lo.real()).add(y.lo.imag()).add(y.hi.real()).add(y.hi.imag());
          }
        },
        inner);
    for (const auto* list : {&compact, &observed}) {
      h.add("segments");
      for (const auto& s : *list) h.add(s.a.real()).add(s.a.imag()).add(s.b.real()).add(s.b.imag());
    }
    for (const auto& a : atoms) h.add(a.at.real()).add(a.at.imag()).add(a.mass);
    return h.hex();
  }

  /// Checks K ⊂ Y, closure(Y) ⊂ X and mu(K) = 1.
  void validate() const {
    detail::require(domain.radius > 0.0, "CarlemanGeometry: domain radius must be positive");
    detail::require(!compact.empty(), "CarlemanGeometry: K must contain at least one segment");
    std::visit(
        [this](const auto& y) {
          using T = std::decay_t<decltype(y)>;
          if constexpr (std::is_same_v<T, Disk>) {
            detail::require(y.radius > 0.0 && std::abs(y.centre - domain.centre) + y.radius < domain.radius,
                            "CarlemanGeometry: closure of Y must lie inside X");
          } else {
            detail::require(y.width() > 0.0 && y.height() > 0.0, "CarlemanGeometry: empty rectangle Y");
            for (Planar c : {y.lo, y.hi, Planar{y.lo.real(), y.hi.imag()}, Planar{y.hi.real(), y.lo.imag()}})
              detail::require(domain.contains(c), "CarlemanGeometry: closure of Y must lie inside X");
          }
        },
        inner);
    for (const auto& s : compact)
      detail::require(in_inner(s.a) && in_inner(s.b), "CarlemanGeometry: K must lie inside Y");
    if (atomic()) {
      double mass = 0.0;
      for (const auto& a : atoms) {
        detail::require(a.mass > 0.0, "CarlemanGeometry: atom masses must be positive");
        detail::require(on_compact(a.at), "CarlemanGeometry: atoms must lie on K");
        mass += a.mass;
      }
      detail::require(std::abs(mass - 1.0) <= 1e-12, "CarlemanGeometry: mu(K) must equal 1");
    } else {
      for (const auto& e : observed)
        detail::require(on_compact(e.a) && on_compact(e.b) && on_compact(0.5 * (e.a + e.b)),
                        "CarlemanGeometry: E must lie on K");
      detail::require(observed_length() > 0.0, "CarlemanGeometry: |E| must be positive");
    }
  }

  bool on_compact(Planar x) const {
    for (const auto& s : compact) {
      const Planar d = s.b - s.a;
      const double len = std::abs(d);
      if (len == 0.0) {
        if (std::abs(x - s.a) <= 1e-12) return true;
        continue;
      }
      const Planar local = (x - s.a) * std::conj(d) / len;
      if (std::abs(local.imag()) <= 1e-12 && local.real() >= -1e-12 && local.real() <= len + 1e-12) return true;
    }
    return false;
  }
};

/// Named disk geometries: "interval" (K = [0, 1], Y a disk), "interval-rect"
/// (same K, rectangular Y, E two pieces of K) and "two-segments" (K a pair of
/// collinear segments around the origin).
inline CarlemanGeometry carleman_preset(const std::string& name) {
  CarlemanGeometry g;
  if (name == "interval") {
    g.domain = Disk{{0.5, 0.0}, 2.0};
    g.inner = Disk{{0.5, 0.0}, 1.25};
    g.compact = {Segment{{0.0, 0.0}, {1.0, 0.0}}};
  } else if (name == "interval-rect") {
    g.domain = Disk{{0.5, 0.0}, 2.0};
    g.inner = Rectangle{{-0.25, -0.5}, {1.25, 0.5}};
    g.compact = {Segment{{0.0, 0.0}, {1.0, 0.0}}};
    g.observed = {Segment{{0.0, 0.0}, {0.25, 0.0}}, Segment{{0.6, 0.0}, {0.8, 0.0}}};
  } else if (name == "two-segments") {
    g.domain = Disk{{0.0, 0.0}, 1.5};
    g.inner = Disk{{0.0, 0.0}, 0.9};
    g.compact = {Segment{{-0.6, 0.0}, {-0.1, 0.0}}, Segment{{0.1, 0.0}, {0.6, 0.0}}};
  } else {
    throw InvalidArgument("unknown Carleman geometry '" + name +
                          "' (expected interval, interval-rect or two-segments)");
  }
  return g;
}

inline const std::vector<std::string>& carleman_preset_names() {
  static const std::vector<std::string> names{"interval", "interval-rect", "two-segments"};
  return names;
}

namespace detail {

// Integral over s in [0, |b - a|] of log|x - (a + s e)|, e the unit direction.
inline double segment_log_integral(Planar x, const Segment& seg) {
  const double len = seg.length();
  if (len == 0.0) return 0.0;
  const Planar e = (seg.b - seg.a) / len;
  const Planar local = (x - seg.a) * std::conj(e);
  const double u0 = local.real();
  const double q = std::abs(local.imag());
  auto F = [q](double t) {
    if (q == 0.0) return t == 0.0 ? 0.0 : t * std::log(std::abs(t)) - t;
    return 0.5 * t * std::log(t * t + q * q) - t + q * std::atan(t / q);
  };
  return F(len - u0) - F(-u0);
}

// Integral of log|x - y| over the disk |y - c| < rho.
inline double disk_log_integral(Planar x, const Disk& d) {
  const double r = std::abs(x - d.centre);
  const double rho = d.radius;
  if (r >= rho) return std::numbers::pi * rho * rho * std::log(r);
  return std::numbers::pi * (rho * rho * std::log(rho) - 0.5 * (rho * rho - r * r));
}

// Integral of log|x - y| over a rectangle, from the corner antiderivative of
// (1/2) log(u^2 + v^2).
inline double rectangle_log_integral(Planar x, const Rectangle& rect) {
  auto F = [](double u, double v) {
    const double s = u * u + v * v;
    double value = s > 0.0 ? u * v * std::log(s) - 3.0 * u * v : 0.0;
    if (u != 0.0) value += u * u * std::atan(v / u);
    if (v != 0.0) value += v * v * std::atan(u / v);
    return value;
  };
  const double u0 = rect.lo.real() - x.real(), u1 = rect.hi.real() - x.real();
  const double v0 = rect.lo.imag() - x.imag(), v1 = rect.hi.imag() - x.imag();
  return 0.5 * (F(u1, v1) - F(u0, v1) - F(u1, v0) + F(u0, v0));
}

}  // namespace detail

/// Pointwise evaluation of W, Phi_mu and Psi_Y. The logarithmic part of the
/// Green function is integrated in closed form; the harmonic remainder
/// H(x, y) = (1/2pi)(log|R^2 - x' conj(y')| - log R) by composite Gauss rules
/// whose density is `quad_points` nodes per unit length.
class CarlemanPotentials {
 public:
  CarlemanPotentials(CarlemanGeometry geometry, int quad_points) : geom_(std::move(geometry)) {
    geom_.validate();
    detail::require(quad_points >= 16, "CarlemanPotentials: quad_points must be at least 16");
    constexpr int order = 16;
    for (const auto& seg : geom_.measure_support()) {
      const int panels = std::max(1, static_cast<int>(std::ceil(seg.length() * quad_points / 64.0)));
      const auto rule = composite_gauss(0.0, 1.0, panels, order);
      for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        mu_nodes_.push_back(seg.at(rule.nodes[i]));
        mu_weights_.push_back(rule.weights[i] * seg.length() / geom_.observed_length());
      }
    }
    if (const auto* rect = std::get_if<Rectangle>(&geom_.inner)) {
      const int px = std::max(1, static_cast<int>(std::ceil(rect->width() * quad_points / 64.0)));
      const int py = std::max(1, static_cast<int>(std::ceil(rect->height() * quad_points / 64.0)));
      const auto rx = composite_gauss(rect->lo.real(), rect->hi.real(), px, order);
      const auto ry = composite_gauss(rect->lo.imag(), rect->hi.imag(), py, order);
      for (std::size_t i = 0; i < rx.nodes.size(); ++i)
        for (std::size_t j = 0; j < ry.nodes.size(); ++j) {
          y_nodes_.push_back({rx.nodes[i], ry.nodes[j]});
          y_weights_.push_back(rx.weights[i] * ry.weights[j]);
        }
    }
  }

  const CarlemanGeometry& geometry() const { return geom_; }

  double green(Planar x, Planar y) const {
    return green_disk(geom_.domain.radius, x - geom_.domain.centre, y - geom_.domain.centre);
  }

  /// Harmonic part H(x, y) = G(x, y) + (1/2pi) log|x - y|.
  double harmonic_part(Planar x, Planar y) const {
    const double R = geom_.domain.radius;
    const Planar xs = x - geom_.domain.centre, ys = y - geom_.domain.centre;
    return (std::log(std::abs(R * R - xs * std::conj(ys))) - std::log(R)) / kTwoPi;
  }

  /// W(x) = -(1/2pi) integral log|x - y| dmu(y).
  double log_potential(Planar x) const {
    if (geom_.atomic()) {
      double s = 0.0;
      for (const auto& a : geom_.atoms) {
        const double sep = std::abs(x - a.at);
        if (sep == 0.0) return std::numeric_limits<double>::infinity();
        s -= a.mass * std::log(sep);
      }
      return s / kTwoPi;
    }
    double s = 0.0;
    for (const auto& seg : geom_.measure_support()) s += detail::segment_log_integral(x, seg);
    return -s / (kTwoPi * geom_.observed_length());
  }

  /// Phi_mu(x) = integral G(x, y) dmu(y), zero on the boundary of X.
  double phi_mu(Planar x) const {
    check_in_domain(x, "phi_mu");
    if (geom_.domain.boundary_distance(x) <= 0.0) return 0.0;
    double harmonic = 0.0;
    if (geom_.atomic()) {
      for (const auto& a : geom_.atoms) harmonic += a.mass * harmonic_part(x, a.at);
    } else {
      for (std::size_t i = 0; i < mu_nodes_.size(); ++i) harmonic += mu_weights_[i] * harmonic_part(x, mu_nodes_[i]);
    }
    return log_potential(x) + harmonic;
  }

  /// Psi_Y(x) = -integral over Y of G(x, y) dy, so Delta Psi_Y = 1_Y and Psi_Y = 0 on the boundary of X.
  double psi_y(Planar x) const {
    check_in_domain(x, "psi_y");
    if (geom_.domain.boundary_distance(x) <= 0.0) return 0.0;
    if (const auto* disk = std::get_if<Disk>(&geom_.inner)) {
      // H(x, .) is harmonic, so its disk integral is the area times the centre value.
      const double area = std::numbers::pi * disk->radius * disk->radius;
      return detail::disk_log_integral(x, *disk) / kTwoPi - area * harmonic_part(x, disk->centre);
    }
    const auto& rect = std::get<Rectangle>(geom_.inner);
    double harmonic = 0.0;
    for (std::size_t i = 0; i < y_nodes_.size(); ++i) harmonic += y_weights_[i] * harmonic_part(x, y_nodes_[i]);
    return detail::rectangle_log_integral(x, rect) / kTwoPi - harmonic;
  }

 private:
  void check_in_domain(Planar x, const char* what) const {
    if (geom_.domain.boundary_distance(x) < -1e-12)
      throw InvalidArgument(std::string(what) + ": point lies outside X");
  }

  CarlemanGeometry geom_;
  std::vector<Planar> mu_nodes_;
  std::vector<double> mu_weights_;
  std::vector<Planar> y_nodes_;
  std::vector<double> y_weights_;
};

struct CarlemanConstants {
  double C_mu = 0.0;
  double c_Y = 0.0;
  double C_Y = 0.0;
  double rho = 0.0;
  double delta = 0.0;
};

/// delta = c_Y / (4 C_mu - c_Y), in (0, 1/3] whenever 0 < c_Y <= C_mu.
inline double delta_from_constants(double c_Y, double C_mu) {
  detail::require(c_Y > 0.0 && c_Y <= C_mu, "delta_from_constants: need 0 < c_Y <= C_mu");
  return c_Y / (4.0 * C_mu - c_Y);
}

/// Weight fields sampled on the square grid covering X; zero outside X.
struct CarlemanFields {
  Grid grid;
  Planar origin;
  Field W;
  Field Phi_mu;
  Field Psi_Y;
  Field phi;
};

struct CarlemanResult {
  CarlemanConstants constants;
  CarlemanFields fields;
  double c2 = 0.0;                ///< sup of Phi_mu / dist(x, boundary of X) near the boundary
  bool boundary_ratio_bounded = false;
  double cutoff_radius = 0.0;     ///< r with 4 c2 r <= c_Y and Y inside {dist >= r}
  double cutoff_bound = 0.0;      ///< M = sup |dbar psi|
  double refinement_error = 0.0;  ///< max relative change of the constants under quadrature doubling
  double min_phi_mu = 0.0;        ///< smallest sampled Phi_mu on the interior of X
  double max_psi_y = 0.0;         ///< largest sampled Psi_Y on X
  double inf_phi_on_y = 0.0;      ///< smallest sampled Phi_mu on Y
};

namespace detail {

// Golden-section maximization of a unimodal function on [lo, hi].
template <class Fn>
double golden_max(Fn&& fn, double lo, double hi, int iterations = 60) {
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = fn(c), fd = fn(d);
  for (int it = 0; it < iterations && b - a > 1e-13; ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = fn(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = fn(d);
    }
  }
  return std::max(fc, fd);
}

// Compass search maximizing fn over a box of parameters, starting at x0 with step h0.
template <class Fn>
double pattern_max(Fn&& fn, std::vector<double> x, double step, double min_step = 1e-10) {
  double best = fn(x);
  while (step > min_step) {
    bool improved = false;
    for (std::size_t k = 0; k < x.size(); ++k) {
      for (double dir : {1.0, -1.0}) {
        std::vector<double> trial = x;
        trial[k] += dir * step;
        const double v = fn(trial);
        if (v > best) {
          best = v;
          x = trial;
          improved = true;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return best;
}

inline Planar inner_boundary_point(const std::variant<Disk, Rectangle>& inner, double t) {
  t -= std::floor(t);
  if (const auto* d = std::get_if<Disk>(&inner)) return d->centre + std::polar(d->radius, kTwoPi * t);
  const auto& r = std::get<Rectangle>(inner);
  const double w = r.width(), h = r.height(), per = 2.0 * (w + h);
  double s = t * per;
  if (s < w) return {r.lo.real() + s, r.lo.imag()};
  s -= w;
  if (s < h) return {r.hi.real(), r.lo.imag() + s};
  s -= h;
  if (s < w) return {r.hi.real() - s, r.hi.imag()};
  s -= w;
  return {r.lo.real(), r.hi.imag() - s};
}

// Maps (s, t) in [0, 1]^2 into Y.
inline Planar inner_point(const std::variant<Disk, Rectangle>& inner, double s, double t) {
  s = std::clamp(s, 0.0, 1.0);
  if (const auto* d = std::get_if<Disk>(&inner)) return d->centre + std::polar(d->radius * s, kTwoPi * t);
  const auto& r = std::get<Rectangle>(inner);
  t = std::clamp(t, 0.0, 1.0);
  return {r.lo.real() + s * r.width(), r.lo.imag() + t * r.height()};
}

// Smooth step chi(t) = f(t) / (f(t) + f(1 - t)), f(t) = e^{-1/t} for t > 0.
inline double smooth_step(double t) {
  auto f = [](double s) { return s > 0.0 ? std::exp(-1.0 / s) : 0.0; };
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  return f(t) / (f(t) + f(1.0 - t));
}

inline double smooth_step_max_slope() {
  double best = 0.0;
  const double dt = 1e-6;
  for (int i = 1; i < 2000; ++i) {
    const double t = i / 2000.0;
    best = std::max(best, (smooth_step(t + dt) - smooth_step(t - dt)) / (2.0 * dt));
  }
  return best;
}

struct ExtremeValues {
  double C_mu, c_Y, C_Y;
};

inline ExtremeValues extreme_values(const CarlemanPotentials& pot) {
  const auto& g = pot.geometry();
  // C_mu: Phi_mu is harmonic off K and vanishes on the boundary, so its supremum is on K.
  double C_mu = 0.0;
  for (const auto& seg : g.compact) {
    constexpr int samples = 256;
    std::vector<double> values(samples + 1);
    for (int i = 0; i <= samples; ++i) values[i] = pot.phi_mu(seg.at(static_cast<double>(i) / samples));
    const auto it = std::max_element(values.begin(), values.end());
    const int k = static_cast<int>(it - values.begin());
    const double lo = std::max(0.0, (k - 1.0) / samples), hi = std::min(1.0, (k + 1.0) / samples);
    C_mu = std::max({C_mu, *it, golden_max([&](double t) { return pot.phi_mu(seg.at(t)); }, lo, hi)});
  }
  // c_Y: G(., y) is superharmonic on Y, so the infimum over Y is attained on its boundary.
  double c_Y = std::numeric_limits<double>::infinity();
  std::vector<double> best_args{0.0, 0.0};
  std::size_t best_seg = 0;
  constexpr int boundary_samples = 256, k_samples = 128;
  for (std::size_t sidx = 0; sidx < g.compact.size(); ++sidx) {
    for (int i = 0; i < boundary_samples; ++i) {
      const Planar x = inner_boundary_point(g.inner, static_cast<double>(i) / boundary_samples);
      for (int j = 0; j <= k_samples; ++j) {
        const double v = pot.green(x, g.compact[sidx].at(static_cast<double>(j) / k_samples));
        if (v < c_Y) {
          c_Y = v;
          best_args = {static_cast<double>(i) / boundary_samples, static_cast<double>(j) / k_samples};
          best_seg = sidx;
        }
      }
    }
  }
  c_Y = -pattern_max(
      [&](const std::vector<double>& a) {
        const double t = std::clamp(a[1], 0.0, 1.0);
        return -pot.green(inner_boundary_point(g.inner, a[0]), g.compact[best_seg].at(t));
      },
      best_args, 1.0 / k_samples);
  // C_Y = sup over Y of -Psi_Y.
  constexpr int grid = 48;
  double C_Y = 0.0;
  std::vector<double> start{0.0, 0.0};
  for (int i = 0; i <= grid; ++i)
    for (int j = 0; j <= grid; ++j) {
      const double s = static_cast<double>(i) / grid, t = static_cast<double>(j) / grid;
      const double v = -pot.psi_y(inner_point(g.inner, s, t));
      if (v > C_Y) {
        C_Y = v;
        start = {s, t};
      }
    }
  C_Y = std::max(C_Y, pattern_max(
                          [&](const std::vector<double>& a) { return -pot.psi_y(inner_point(g.inner, a[0], a[1])); },
                          start, 1.0 / grid));
  return {C_mu, c_Y, C_Y};
}

}  // namespace detail

/// Builds the Carleman weight phi = Phi_mu + rho Psi_Y and its constants.
/// Extremal values are sampled and then refined locally; the whole
/// computation is repeated at doubled quadrature density and a relative change
/// above 1e-4 in any constant raises NumericalError.
inline CarlemanResult carleman_weight(const CarlemanGeometry& geometry, int quad_points = 64,
                                      int field_points = 128) {
  geometry.validate();
  if (geometry.atomic())
    throw InvalidArgument(
        "carleman_weight: atomic mu has a discontinuous potential (C_mu is infinite); "
        "use CarlemanPotentials for pointwise values");
  detail::require(quad_points >= 64, "carleman_weight: quad_points must be at least 64 per unit length");

  detail::require(field_points >= 4 && (field_points & (field_points - 1)) == 0,
                  "carleman_weight: field_points must be a power of two >= 4");
  const Disk& X = geometry.domain;
  const Grid grid(2, 2.0 * X.radius, field_points);
  const Planar origin = X.centre - Planar{X.radius, X.radius};
  CarlemanResult result{.constants = {},
                        .fields = CarlemanFields{grid, origin, Field(grid), Field(grid), Field(grid), Field(grid)}};

  const CarlemanPotentials pot(geometry, quad_points);
  const CarlemanPotentials fine(geometry, 2 * quad_points);
  const auto coarse_values = detail::extreme_values(pot);
  const auto fine_values = detail::extreme_values(fine);
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); };
  result.refinement_error = std::max({rel(coarse_values.C_mu, fine_values.C_mu), rel(coarse_values.c_Y, fine_values.c_Y),
                                      rel(coarse_values.C_Y, fine_values.C_Y)});
  if (result.refinement_error > 1e-4) {
    std::ostringstream os;
    os << "carleman_weight: constants change by " << result.refinement_error
       << " under quadrature doubling (limit 1e-4)";
    throw NumericalError(os.str());
  }

  auto& c = result.constants;
  c.C_mu = fine_values.C_mu;
  c.c_Y = fine_values.c_Y;
  c.C_Y = fine_values.C_Y;
  if (!(c.C_mu > 0.0 && c.c_Y > 0.0 && c.C_Y > 0.0))
    throw NumericalError("carleman_weight: constants must be strictly positive");
  c.rho = c.c_Y / (2.0 * c.C_Y);
  c.delta = delta_from_constants(c.c_Y, c.C_mu);

  // c2 from Phi_mu / dist on shrinking boundary layers.
  constexpr int angles = 128;
  auto layer_ratio = [&](double d) {
    double best = 0.0;
    for (int k = 0; k < angles; ++k) {
      const Planar x = X.centre + std::polar(X.radius - d, kTwoPi * k / angles);
      best = std::max(best, fine.phi_mu(x) / d);
    }
    return best;
  };
  const double d0 = 0.01 * X.radius;
  const double r1 = layer_ratio(d0), r2 = layer_ratio(0.5 * d0), r3 = layer_ratio(0.25 * d0);
  result.c2 = std::max({r1, r2, r3, layer_ratio(2.0 * d0), layer_ratio(4.0 * d0)});
  result.boundary_ratio_bounded = std::isfinite(result.c2) && r3 <= 1.01 * r2 && r2 <= 1.01 * r1 + 1e-12 &&
                                  std::abs(r3 - r2) <= 0.5 * std::abs(r2 - r1) + 1e-6 * r1;

  // Cutoff psi = chi(2 dist / r - 1): zero within r/2 of the boundary, one beyond r.
  double dist_y = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 1024; ++k)
    dist_y = std::min(dist_y, X.boundary_distance(detail::inner_boundary_point(geometry.inner, k / 1024.0)));
  double r = std::min(c.c_Y / (4.0 * result.c2), dist_y);
  // Enforce sup over the cutoff layer of Phi_mu <= c_Y / 4 on samples.
  for (int attempt = 0; attempt < 30; ++attempt) {
    double layer_max = 0.0;
    for (int j = 1; j <= 16; ++j)
      for (int k = 0; k < angles; ++k)
        layer_max = std::max(layer_max, fine.phi_mu(X.centre + std::polar(X.radius - r * j / 16.0, kTwoPi * k / angles)));
    if (layer_max <= 0.25 * c.c_Y) break;
    r *= 0.9;
  }
  result.cutoff_radius = r;
  result.cutoff_bound = detail::smooth_step_max_slope() / r;

  // Fields on the square grid covering X.
  auto& fields = result.fields;
  std::vector<double> min_phi(grid.size(), std::numeric_limits<double>::infinity());
  std::vector<double> max_psi(grid.size(), -std::numeric_limits<double>::infinity());
  std::vector<double> min_phi_y(grid.size(), std::numeric_limits<double>::infinity());
  parallel_for(grid.size(), [&](std::size_t i) {
    const Point p = grid.node(i);
    const Planar x = origin + Planar{p[0], p[1]};
    if (!X.contains(x)) return;
    const double w = pot.log_potential(x);
    const double phi_mu = pot.phi_mu(x);
    const double psi = pot.psi_y(x);
    fields.W[i] = w;
    fields.Phi_mu[i] = phi_mu;
    fields.Psi_Y[i] = psi;
    fields.phi[i] = phi_mu + c.rho * psi;
    min_phi[i] = phi_mu;
    max_psi[i] = psi;
    if (geometry.in_inner(x)) min_phi_y[i] = phi_mu;
  });
  result.min_phi_mu = *std::min_element(min_phi.begin(), min_phi.end());
  result.max_psi_y = *std::max_element(max_psi.begin(), max_psi.end());
  result.inf_phi_on_y = *std::min_element(min_phi_y.begin(), min_phi_y.end());
  return result;
}

// ---------------------------------------------------------------------------
// Numerical verification of the Carleman inequality
//   4 h^2 int e^{2 phi/h} |dbar f|^2 >= h int e^{2 phi/h} |f|^2 d nu,  nu = Delta phi.

struct CarlemanInstance {
  std::function<cplx(Planar)> f;              ///< compactly supported test function
  std::function<double(Planar)> phi;          ///< continuous weight
  std::function<double(Planar)> laplacian_phi;  ///< density of nu = Delta phi
  Disk support;                               ///< disk containing supp f
  Disk domain;                                ///< X
};

struct CheckResult {
  std::vector<double> h;
  std::vector<double> lhs;
  std::vector<double> rhs;
  double worst_ratio = std::numeric_limits<double>::infinity();  ///< min lhs / rhs
  bool pass = false;
};

/// Evaluates both sides on a uniform grid over the support disk, with dbar f by
/// centred differences; passes when lhs >= (1 - 1e-3) rhs for every h.
inline CheckResult carleman_inequality_check(const CarlemanInstance& inst, std::span<const double> h_values,
                                             int points = 256) {
  detail::require(inst.support.radius > 0.0, "carleman_inequality_check: empty support");
  detail::require(std::abs(inst.support.centre - inst.domain.centre) + inst.support.radius < inst.domain.radius,
                  "carleman_inequality_check: support of f touches the boundary of X");
  for (double h : h_values) detail::require(h > 0.0, "carleman_inequality_check: h must be positive");

  const double half = inst.support.radius * (1.0 + 2.0 / points);
  const double step = 2.0 * half / points;
  const Planar lo = inst.support.centre - Planar{half, half};
  const int n = points + 1;
  std::vector<cplx> f(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) f[i * n + j] = inst.f(lo + Planar{i * step, j * step});
  std::vector<double> dbar2(f.size(), 0.0), f2(f.size(), 0.0), phi(f.size(), 0.0), nu(f.size(), 0.0);
  for (int i = 1; i + 1 < n; ++i)
    for (int j = 1; j + 1 < n; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * n + j;
      const cplx fx = (f[k + n] - f[k - n]) / (2.0 * step);
      const cplx fy = (f[k + 1] - f[k - 1]) / (2.0 * step);
      dbar2[k] = std::norm(0.5 * (fx + cplx(0.0, 1.0) * fy));
      f2[k] = std::norm(f[k]);
      const Planar x = lo + Planar{i * step, j * step};
      phi[k] = inst.phi(x);
      nu[k] = inst.laplacian_phi(x);
    }
  CheckResult out;
  out.pass = true;
  const double cell = step * step;
  for (double h : h_values) {
    // Factor out the largest exponent to keep the sums finite.
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < f.size(); ++k)
      if (f2[k] > 0.0 || dbar2[k] > 0.0) shift = std::max(shift, 2.0 * phi[k] / h);
    if (!std::isfinite(shift)) shift = 0.0;
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) {
      const double w = std::exp(2.0 * phi[k] / h - shift);
      lhs += w * dbar2[k];
      rhs += w * f2[k] * nu[k];
    }
    lhs *= 4.0 * h * h * cell;
    rhs *= h * cell;
    out.h.push_back(h);
    out.lhs.push_back(lhs);
    out.rhs.push_back(rhs);
    if (rhs > 0.0) out.worst_ratio = std::min(out.worst_ratio, lhs / rhs);
    if (lhs < rhs - 1e-3 * std::abs(rhs)) out.pass = false;
  }
  return out;
}

/// Smooth bump supported in |x - c| < s, equal to 1 on |x - c| <= s * flat.
inline double bump(Planar x, Planar c, double s, double flat = 0.0) {
  const double r = std::abs(x - c) / s;
  if (r >= 1.0) return 0.0;
  if (r <= flat) return 1.0;
  return 1.0 - detail::smooth_step((r - flat) / (1.0 - flat));
}

/// Seeded instances f = bump * P(z, conj z) with P of degree <= 3 and
/// phi = |x|^2 / 2 (Delta phi = 2) on the disk X of radius 1.5.
inline std::vector<CarlemanInstance> carleman_test_instances(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<CarlemanInstance> out;
  for (int n = 0; n < count; ++n) {
    std::vector<std::pair<std::array<int, 2>, cplx>> terms;
    for (int p = 0; p <= 3; ++p)
      for (int q = 0; p + q <= 3; ++q) terms.push_back({{p, q}, cplx(normal(rng), normal(rng))});
    // Force a non-holomorphic part so dbar f does not vanish off the bump's slope.
    terms.push_back({{0, 1}, cplx(1.0, 0.0)});
    std::uniform_real_distribution<double> offset(-0.25, 0.25);
    const Planar centre{offset(rng), offset(rng)};
    auto poly = [terms](Planar z) {
      cplx s{0.0, 0.0};
      for (const auto& [pq, c] : terms) s += c * std::pow(z, pq[0]) * std::pow(std::conj(z), pq[1]);
      return s;
    };
    CarlemanInstance inst;
    inst.f = [poly, centre](Planar x) { return bump(x, centre, 1.0) * poly(x); };
    inst.phi = [](Planar x) { return 0.5 * std::norm(x); };
    inst.laplacian_phi = [](Planar) { return 2.0; };
    inst.support = Disk{centre, 1.0};
    inst.domain = Disk{{0.0, 0.0}, 1.5};
    out.push_back(std::move(inst));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Three-term inequality for holomorphic g:
//   4 h^2 M e^{c_Y/2h} int_X |g|^2 + h e^{2 C_mu/h} int_K |g|^2 dmu >= h rho e^{c_Y/h} int_Y |g|^2

struct ThreeTermResult {
  double h = 0.0;
  double integral_X = 0.0;
  double integral_K = 0.0;
  double integral_Y = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = false;
};

namespace detail {

inline double disk_integral(const std::function<double(Planar)>& fn, const Disk& d, int order = 48) {
  const auto radial = gauss_legendre(order, 0.0, d.radius);
  const int angles = 2 * order;
  double s = 0.0;
  for (std::size_t i = 0; i < radial.nodes.size(); ++i)
    for (int k = 0; k < angles; ++k) {
      const double r = radial.nodes[i];
      s += radial.weights[i] * r * fn(d.centre + std::polar(r, kTwoPi * (k + 0.5) / angles));
    }
  return s * kTwoPi / angles;
}

inline double rectangle_integral(const std::function<double(Planar)>& fn, const Rectangle& r, int order = 48) {
  const auto gx = gauss_legendre(order, r.lo.real(), r.hi.real());
  const auto gy = gauss_legendre(order, r.lo.imag(), r.hi.imag());
  double s = 0.0;
  for (std::size_t i = 0; i < gx.nodes.size(); ++i)
    for (std::size_t j = 0; j < gy.nodes.size(); ++j) s += gx.weights[i] * gy.weights[j] * fn({gx.nodes[i], gy.nodes[j]});
  return s;
}

}  // namespace detail

inline ThreeTermResult three_term_check(const CarlemanGeometry& geometry, const CarlemanResult& weight,
                                        const std::function<cplx(Planar)>& g, double h) {
  detail::require(h > 0.0, "three_term_check: h must be positive");
  ThreeTermResult out;
  out.h = h;
  auto g2 = [&g](Planar x) { return std::norm(g(x)); };
  out.integral_X = detail::disk_integral(g2, geometry.domain);
  out.integral_Y = std::visit(
      [&](const auto& y) {
        using T = std::decay_t<decltype(y)>;
        if constexpr (std::is_same_v<T, Disk>) {
          return detail::disk_integral(g2, y);
        } else {
          return detail::rectangle_integral(g2, y);
        }
      },
      geometry.inner);
  for (const auto& seg : geometry.measure_support()) {
    const auto rule = composite_gauss(0.0, 1.0, 8, 16);
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
      out.integral_K += rule.weights[i] * seg.length() * g2(seg.at(rule.nodes[i]));
  }
  out.integral_K /= geometry.observed_length();
  const auto& c = weight.constants;
  // Compare after dividing both sides by h e^{c_Y/h} to avoid overflow at small h.
  out.lhs = 4.0 * h * weight.cutoff_bound * std::exp(-c.c_Y / (2.0 * h)) * out.integral_X +
            std::exp((2.0 * c.C_mu - c.c_Y) / h) * out.integral_K;
  out.rhs = c.rho * out.integral_Y;
  out.pass = out.lhs >= out.rhs * (1.0 - 1e-10);
  return out;
}

}  // namespace uncplab
