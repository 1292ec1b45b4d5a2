#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "uncplab/errors.hpp"
#include "uncplab/field.hpp"
#include "uncplab/interpolation.hpp"
#include "uncplab/parallel.hpp"
#include "uncplab/schrodinger.hpp"
#include "uncplab/thick_set.hpp"

namespace uncplab {

/// Fourier band |xi| <= mu_freq on a periodic grid.
struct FlatSource {
  Grid grid;
  double mu_freq = 0.0;
};

/// Spectral subspace sigma_j < lambda of a decomposition.
struct SpectralSource {
  const SpectralDecomposition* dec = nullptr;
  double lambda = 0.0;
};

/// Flat indices |xi_k| <= mu_freq in grid order.
inline std::vector<std::size_t> band_indices(const Grid& grid, double mu_freq) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (within_band(grid.frequency_norm(i), mu_freq)) out.push_back(i);
  return out;
}

/// Orthonormal plane waves e^{i xi . x} / sqrt(L^d) spanning the band.
inline std::vector<Field> flat_basis(const Grid& grid, double mu_freq) {
  std::vector<Field> out;
  const double norm = 1.0 / std::sqrt(grid.volume());
  for (std::size_t k : band_indices(grid, mu_freq)) {
    const Point xi = grid.frequency_vector(k);
    out.push_back(Field::from_function(grid, [&](const Point& x) {
      return norm * std::exp(cplx(0.0, detail::dot(xi, x)));
    }));
  }
  return out;
}

inline std::vector<Field> spectral_basis(const SpectralDecomposition& dec, double lambda) {
  std::vector<Field> out;
  for (std::size_t j = 0; j < dec.size(); ++j)
    if (dec.eigenvalues(static_cast<Eigen::Index>(j)) < lambda) out.push_back(dec.eigenvector(j));
  return out;
}

namespace detail {

inline Eigen::MatrixXcd hermitize(const Eigen::MatrixXcd& g) { return 0.5 * (g + g.adjoint()); }

inline std::array<int, 3> wavenumber_vector(const Grid& grid, std::size_t flat) {
  const auto idx = grid.unravel(flat);
  std::array<int, 3> k{0, 0, 0};
  for (int a = 0; a < grid.dim(); ++a) k[a] = grid.wavenumber(idx[a]);
  return k;
}

// T_pq = integral over omega of e^{i (xi_q - xi_p) . x} on the listed modes.
inline Eigen::MatrixXcd moment_matrix(const Grid& grid, const OmegaMoments& moments, std::span<const std::size_t> rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXcd t(n, n);
  std::vector<std::array<int, 3>> k(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) k[i] = wavenumber_vector(grid, rows[i]);
  for (Eigen::Index p = 0; p < n; ++p)
    for (Eigen::Index q = 0; q < n; ++q) {
      std::array<int, 3> m{0, 0, 0};
      for (int a = 0; a < grid.dim(); ++a) m[a] = k[q][a] - k[p][a];
      t(p, q) = moments(m);
    }
  return t;
}

}  // namespace detail

/// G_jk = integral over omega of conj(b_j) b_k w. Exact for trigonometric
/// interpolants when omega carries box geometry, nodal rule otherwise.
/// Throws when the basis is not orthonormal in <.,.>_w to 1e-8.
inline Eigen::MatrixXcd compressed_gram(std::span<const Field> basis, const ThickSet& omega,
                                        const Field* weight = nullptr) {
  detail::require(!basis.empty(), "compressed_gram: empty basis");
  const Grid& grid = omega.grid;
  const auto r = static_cast<Eigen::Index>(basis.size());
  const auto m = static_cast<Eigen::Index>(grid.size());
  Eigen::MatrixXcd b(m, r);
  Eigen::VectorXd w = Eigen::VectorXd::Ones(m);
  if (weight) {
    detail::require(weight->grid == grid, "compressed_gram: weight on another grid");
    for (Eigen::Index i = 0; i < m; ++i) w(i) = (*weight)[static_cast<std::size_t>(i)].real();
  }
  for (Eigen::Index j = 0; j < r; ++j) {
    detail::require(basis[static_cast<std::size_t>(j)].grid == grid, "compressed_gram: basis on another grid");
    for (Eigen::Index i = 0; i < m; ++i) b(i, j) = basis[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
  }
  const double cell = grid.cell_volume();
  const Eigen::MatrixXcd bw = w.asDiagonal() * b;
  const Eigen::MatrixXcd gram_full = cell * (b.adjoint() * bw);
  const double defect = (gram_full - Eigen::MatrixXcd::Identity(r, r)).cwiseAbs().maxCoeff();
  if (defect > 1e-8) {
    std::ostringstream os;
    os << "compressed_gram: basis is not orthonormal (defect " << defect << " > 1e-8)";
    throw InvalidArgument(os.str());
  }

  if (!omega.has_geometry()) {
    Eigen::VectorXd mask(m);
    for (Eigen::Index i = 0; i < m; ++i) mask(i) = omega.contains(static_cast<std::size_t>(i)) ? cell : 0.0;
    return detail::hermitize(b.adjoint() * mask.asDiagonal() * bw);
  }

  // Fourier coefficients of b and b w, then G = C_l^* T C_r on the joint support.
  Eigen::MatrixXcd cl(m, r), cr(m, r);
  for (Eigen::Index j = 0; j < r; ++j) {
    Field left(grid), right(grid);
    for (Eigen::Index i = 0; i < m; ++i) {
      left[static_cast<std::size_t>(i)] = b(i, j);
      right[static_cast<std::size_t>(i)] = bw(i, j);
    }
    const Field lc = frequency_transform(left, Direction::forward);
    const Field rc = frequency_transform(right, Direction::forward);
    for (Eigen::Index i = 0; i < m; ++i) {
      cl(i, j) = lc[static_cast<std::size_t>(i)];
      cr(i, j) = rc[static_cast<std::size_t>(i)];
    }
  }
  const double scale = std::max(cl.cwiseAbs().maxCoeff(), cr.cwiseAbs().maxCoeff());
  std::vector<std::size_t> support;
  for (Eigen::Index i = 0; i < m; ++i)
    if (std::max(cl.row(i).cwiseAbs().maxCoeff(), cr.row(i).cwiseAbs().maxCoeff()) > 1e-15 * scale)
      support.push_back(static_cast<std::size_t>(i));
  const auto s = static_cast<Eigen::Index>(support.size());
  Eigen::MatrixXcd cls(s, r), crs(s, r);
  for (Eigen::Index i = 0; i < s; ++i) {
    cls.row(i) = cl.row(static_cast<Eigen::Index>(support[static_cast<std::size_t>(i)]));
    crs.row(i) = cr.row(static_cast<Eigen::Index>(support[static_cast<std::size_t>(i)]));
  }
  const OmegaMoments moments(omega);
  const Eigen::MatrixXcd t = detail::moment_matrix(grid, moments, support);
  return detail::hermitize(cls.adjoint() * t * crs);
}

/// Gram of the plane-wave basis directly from the moments: G_pq = M(k_q - k_p) / L^d.
inline Eigen::MatrixXcd flat_gram(const Grid& grid, double mu_freq, const ThickSet& omega) {
  detail::require(omega.grid == grid, "flat_gram: omega lives on another grid");
  const auto modes = band_indices(grid, mu_freq);
  detail::require(!modes.empty(), "flat_gram: band contains no modes");
  if (!omega.has_geometry()) {
    const auto basis = flat_basis(grid, mu_freq);
    return compressed_gram(basis, omega);
  }
  const OmegaMoments moments(omega);
  return detail::hermitize(detail::moment_matrix(grid, moments, modes) / grid.volume());
}

struct ObservabilityValue {
  double c = 0.0;            ///< smallest Gram eigenvalue, clipped at 0
  double raw_min = 0.0;      ///< unclipped smallest eigenvalue
  double max_eigenvalue = 0.0;
  std::size_t rank = 0;
};

namespace detail {

inline ObservabilityValue gram_extremes(const Eigen::MatrixXcd& g) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(g, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("observability_constant: Gram eigensolve failed");
  ObservabilityValue v;
  v.rank = static_cast<std::size_t>(g.rows());
  v.raw_min = solver.eigenvalues()(0);
  v.max_eigenvalue = solver.eigenvalues()(g.rows() - 1);
  v.c = std::max(0.0, v.raw_min);
  return v;
}

}  // namespace detail

/// c = min over f in the range of the projector of ||f||^2_{L2(omega)} / ||f||^2.
inline ObservabilityValue observability_constant(const FlatSource& src, const ThickSet& omega) {
  const auto modes = band_indices(src.grid, src.mu_freq);
  if (modes.empty()) throw InvalidArgument("observability_constant: projector has rank 0");
  return detail::gram_extremes(flat_gram(src.grid, src.mu_freq, omega));
}

inline ObservabilityValue observability_constant(const SpectralSource& src, const ThickSet& omega) {
  detail::require(src.dec != nullptr, "observability_constant: missing decomposition");
  const auto basis = spectral_basis(*src.dec, src.lambda);
  if (basis.empty()) throw InvalidArgument("observability_constant: projector has rank 0");
  return detail::gram_extremes(compressed_gram(basis, omega, &src.dec->weight));
}

// ---------------------------------------------------------------------------
// Sweeps and exponential-law fits log(1/c) <= 2 C mu_eff + 2 log A.

struct LawFit {
  double A = 1.0;
  double C = 0.0;
  double residual = 0.0;  ///< root-mean-square residual of the least-squares line
};

struct ObservabilityCurve {
  std::string mode;  ///< "flat" or "spectral"
  std::vector<double> thresholds;
  std::vector<double> mu_eff;
  std::vector<double> c_values;
  std::vector<std::size_t> ranks;
  LawFit fit;            ///< upper envelope: the line dominates every point
  LawFit least_squares;  ///< ordinary least squares
  double envelope_gap = 0.0;  ///< min over points of line - log(1/c); >= -1e-6 when dominating
  bool monotone = true;       ///< c non-increasing along the thresholds
  bool dominates() const { return envelope_gap >= -1e-6; }
};

/// Least-squares slope in x = 2 mu_eff (clipped at 0), then the intercept
/// raised until the line lies above every point.
inline std::pair<LawFit, LawFit> fit_exponential_law(std::span<const double> mu_eff, std::span<const double> c) {
  detail::require(mu_eff.size() == c.size(), "fit_exponential_law: size mismatch");
  if (c.size() < 3) throw InvalidArgument("fit_exponential_law: need at least 3 points for a fit");
  const std::size_t n = c.size();
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    detail::require(c[i] > 0.0, "fit_exponential_law: every c must be positive");
    x[i] = 2.0 * mu_eff[i];
    y[i] = -std::log(c[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  const double intercept = my - slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) rss += std::pow(y[i] - slope * x[i] - intercept, 2);
  LawFit ols{std::exp(0.5 * intercept), slope, std::sqrt(rss / n)};

  const double envelope_slope = std::max(0.0, slope);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) top = std::max(top, y[i] - envelope_slope * x[i]);
  double env_rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) env_rss += std::pow(y[i] - envelope_slope * x[i] - top, 2);
  LawFit envelope{std::exp(0.5 * top), envelope_slope, std::sqrt(env_rss / n)};
  return {envelope, ols};
}

namespace detail {

inline ObservabilityCurve finish_curve(std::string mode, std::span<const double> thresholds,
                                       std::vector<double> mu_eff, std::vector<ObservabilityValue> values) {
  ObservabilityCurve curve;
  curve.mode = std::move(mode);
  curve.thresholds.assign(thresholds.begin(), thresholds.end());
  curve.mu_eff = std::move(mu_eff);
  for (const auto& v : values) {
    curve.c_values.push_back(v.c);
    curve.ranks.push_back(v.rank);
  }
  for (std::size_t i = 1; i < values.size(); ++i)
    if (curve.c_values[i] > curve.c_values[i - 1] * (1.0 + 1e-10) + 1e-14) curve.monotone = false;
  auto [envelope, ols] = fit_exponential_law(curve.mu_eff, curve.c_values);
  curve.fit = envelope;
  curve.least_squares = ols;
  curve.envelope_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double line = 2.0 * envelope.C * curve.mu_eff[i] + 2.0 * std::log(envelope.A);
    curve.envelope_gap = std::min(curve.envelope_gap, line - (-std::log(curve.c_values[i])));
  }
  return curve;
}

inline void require_sorted(std::span<const double> thresholds) {
  detail::require(std::is_sorted(thresholds.begin(), thresholds.end()), "sweep: thresholds must be sorted ascending");
}

}  // namespace detail

inline ObservabilityCurve sweep(const Grid& grid, const ThickSet& omega, std::span<const double> mu_freqs) {
  detail::require_sorted(mu_freqs);
  std::vector<ObservabilityValue> values(mu_freqs.size());
  for (double mu : mu_freqs)
    if (band_indices(grid, mu).empty()) throw InvalidArgument("sweep: a threshold yields a rank-0 projector");
  parallel_for(mu_freqs.size(), [&](std::size_t i) { values[i] = observability_constant(FlatSource{grid, mu_freqs[i]}, omega); });
  return detail::finish_curve("flat", mu_freqs, {mu_freqs.begin(), mu_freqs.end()}, std::move(values));
}

inline ObservabilityCurve sweep(const SpectralDecomposition& dec, const ThickSet& omega, std::span<const double> lambdas) {
  detail::require_sorted(lambdas);
  for (double l : lambdas)
    if (dec.rank_below(l) == 0) throw InvalidArgument("sweep: a threshold yields a rank-0 projector");
  std::vector<ObservabilityValue> values(lambdas.size());
  parallel_for(lambdas.size(), [&](std::size_t i) { values[i] = observability_constant(SpectralSource{&dec, lambdas[i]}, omega); });
  std::vector<double> mu_eff;
  for (double l : lambdas) mu_eff.push_back(std::sqrt(std::max(l, 0.0)));
  return detail::finish_curve("spectral", lambdas, std::move(mu_eff), std::move(values));
}

inline void write_sweep_csv(std::ostream& os, const ObservabilityCurve& curve, const std::string& config_hash = "") {
  if (!config_hash.empty()) os << "# config_hash=" << config_hash << "\n";
  os << "mode,threshold,rank,c_min,log_inv_c,fit_A,fit_C,residual\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i) {
    os << curve.mode << ',' << curve.thresholds[i] << ',' << curve.ranks[i] << ',' << curve.c_values[i] << ','
       << -std::log(curve.c_values[i]) << ',' << curve.fit.A << ',' << curve.fit.C << ',' << curve.fit.residual << '\n';
  }
}

// ---------------------------------------------------------------------------

/// (gamma / K)^{K (a b + 1)} for 0 < gamma < K.
inline double kovrijkine_bound(double gamma, double a, double b, double K) {
  detail::require(gamma > 0.0, "kovrijkine_bound: gamma must be positive");
  detail::require(gamma < K, "kovrijkine_bound: need gamma < K");
  detail::require(a >= 0.0 && b >= 0.0, "kovrijkine_bound: a and b must be non-negative");
  return std::pow(gamma / K, K * (a * b + 1.0));
}

struct KovrijkineFit {
  double K = 0.0;
  std::vector<double> bounds;  ///< bound at each sweep point with the fitted K
  double min_ratio = 0.0;      ///< min over points of c / bound (>= 1 when the bound holds)
};

/// Smallest K > gamma with c(mu) >= (gamma/K)^{K (a mu / pi + 1)} at every
/// flat sweep point (band radius mu read as b = mu / pi).
inline KovrijkineFit kovrijkine_fit(const ObservabilityCurve& curve, double gamma, double a) {
  detail::require(curve.mode == "flat", "kovrijkine_fit: needs a flat-mode curve");
  detail::require(gamma > 0.0 && gamma < 1.0 + 1e-15 && a > 0.0, "kovrijkine_fit: need 0 < gamma <= 1 and a > 0");
  auto holds = [&](double K) {
    for (std::size_t i = 0; i < curve.c_values.size(); ++i)
      if (curve.c_values[i] < kovrijkine_bound(gamma, a, curve.thresholds[i] / std::numbers::pi, K)) return false;
    return true;
  };
  double hi = 2.0 * gamma;
  while (!holds(hi)) {
    hi *= 2.0;
    if (hi > 1e6) throw NumericalError("kovrijkine_fit: no K up to 1e6 bounds the curve");
  }
  double lo = gamma;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (holds(mid) ? hi : lo) = mid;
  }
  KovrijkineFit fit;
  fit.K = hi;
  fit.min_ratio = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < curve.c_values.size(); ++i) {
    fit.bounds.push_back(kovrijkine_bound(gamma, a, curve.thresholds[i] / std::numbers::pi, hi));
    fit.min_ratio = std::min(fit.min_ratio, curve.c_values[i] / fit.bounds.back());
  }
  return fit;
}

// ---------------------------------------------------------------------------
// End-to-end pipeline: h = inverse Poisson of f, f = P_{s0} h, tube bound,
// tube interpolation and the final observability inequality.

struct PipelineOptions {
  double s0 = 0.3;
  Branch branch = Branch::plus;
  std::uint64_t seed = 0;
  std::vector<double> sweep_thresholds;  ///< mu is added when missing
  double nu = 0.5;                       ///< tube interpolation exponent
  int tube_order = 16;
};

struct PipelineReport {
  std::string mode;
  double mu = 0.0;
  double s0 = 0.0;
  std::uint64_t seed = 0;
  std::size_t rank = 0;
  double f_norm = 0.0;
  double h_norm = 0.0;
  double multiplier_bound = 0.0;  ///< max over the range of |e^{s0 sigma^{1/2}}|
  double reconstruction_error = 0.0;
  double tube_mean = std::numeric_limits<double>::quiet_NaN();
  double tube_bound_ratio = std::numeric_limits<double>::quiet_NaN();  ///< tube mean / (e^{2 s0 mu} ||f||^2)
  double observed_mass = 0.0;
  double c_at_mu = 0.0;
  LawFit fit;
  double final_inequality_margin = 0.0;  ///< (A^2 e^{2 C mu_eff} int_omega |f|^2 - ||f||^2) / ||f||^2
  double chain_constant = std::numeric_limits<double>::quiet_NaN();
  double chain_margin = std::numeric_limits<double>::quiet_NaN();
  bool h_bound_ok = false;
  bool reconstruction_ok = false;
  bool tube_bound_ok = false;
  bool margin_ok = false;
  bool pass() const { return h_bound_ok && reconstruction_ok && tube_bound_ok && margin_ok; }
};

namespace detail {

inline Field random_range_element(std::span<const Field> basis, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Field f(basis.front().grid);
  for (const auto& b : basis) {
    const cplx c(normal(rng), normal(rng));
    for (std::size_t i = 0; i < f.size(); ++i) f[i] += c * b[i];
  }
  return f;
}

inline std::vector<double> with_threshold(std::vector<double> t, double mu) {
  if (std::find(t.begin(), t.end(), mu) == t.end()) t.push_back(mu);
  std::sort(t.begin(), t.end());
  return t;
}

inline void finish_pipeline(PipelineReport& r, const ObservabilityCurve& curve, double mu_eff) {
  r.fit = curve.fit;
  const auto it = std::find(curve.thresholds.begin(), curve.thresholds.end(), r.mu);
  r.c_at_mu = curve.c_values[static_cast<std::size_t>(it - curve.thresholds.begin())];
  const double bound = r.fit.A * r.fit.A * std::exp(2.0 * r.fit.C * mu_eff);
  const double f2 = r.f_norm * r.f_norm;
  r.final_inequality_margin = (bound * r.observed_mass - f2) / f2;
  r.margin_ok = r.final_inequality_margin >= -1e-9;
}

}  // namespace detail

inline PipelineReport theorem_pipeline(const FlatSource& src, const ThickSet& omega, const PipelineOptions& opt) {
  detail::require(opt.s0 > 0.0, "theorem_pipeline: s0 must be positive");
  const Grid& grid = src.grid;
  const auto basis = flat_basis(grid, src.mu_freq);
  if (basis.empty()) throw InvalidArgument("theorem_pipeline: projector has rank 0");
  PipelineReport r;
  r.mode = "flat";
  r.mu = src.mu_freq;
  r.s0 = opt.s0;
  r.seed = opt.seed;
  r.rank = basis.size();
  const Field f = detail::random_range_element(basis, opt.seed);
  r.f_norm = l2_norm(f);
  const Field h = flat_inverse_poisson(grid, opt.s0, f, src.mu_freq);
  r.h_norm = l2_norm(h);
  r.multiplier_bound = std::exp(opt.s0 * src.mu_freq);
  r.h_bound_ok = r.h_norm <= r.multiplier_bound * r.f_norm + 1e-10;
  Field back = flat_poisson(grid, opt.s0, h);
  for (std::size_t i = 0; i < back.size(); ++i) back[i] -= f[i];
  r.reconstruction_error = l2_norm(back) / r.f_norm;
  r.reconstruction_ok = r.reconstruction_error <= 1e-10;

  // f = P_{s0} h extends to |Im z| < s0 with slice norms <= e^{s0 mu} ||f||.
  const TubeGeometry tube = TubeGeometry::quadrature(grid.dim(), opt.s0, opt.tube_order);
  double ball = 0.0;
  for (double w : tube.weights) ball += w;
  r.tube_mean = tube_integral(f, tube, src.mu_freq) / ball;
  r.tube_bound_ratio = r.tube_mean / (std::exp(2.0 * opt.s0 * src.mu_freq) * r.f_norm * r.f_norm);
  r.tube_bound_ok = std::isfinite(r.tube_mean) && r.tube_bound_ratio <= 1.0 + 1e-10;

  r.observed_mass = omega.has_geometry() ? detail::band_mass(detail::band_modes(f, src.mu_freq),
                                                             std::vector<double>(r.rank, 1.0), OmegaMoments(omega))
                                         : observed_mass(f, omega);
  if (omega.verified) {
    const auto cert = interpolate_tube(f, src.mu_freq, omega, tube, opt.nu, std::numeric_limits<double>::infinity());
    // ||f||^2 <= C (int_omega)^nu (e^{2 s0 mu} ||f||^2)^{1-nu}  =>  ||f||^2 <= C^{1/nu} e^{2 (1-nu) s0 mu / nu} int_omega.
    r.chain_constant = std::pow(cert.global.constant, 1.0 / opt.nu) *
                       std::exp(2.0 * (1.0 - opt.nu) * opt.s0 * src.mu_freq / opt.nu);
    const double f2 = r.f_norm * r.f_norm;
    r.chain_margin = (r.chain_constant * r.observed_mass - f2) / f2;
  }
  const auto thresholds = detail::with_threshold(opt.sweep_thresholds, src.mu_freq);
  const auto curve = sweep(grid, omega, thresholds);
  detail::finish_pipeline(r, curve, src.mu_freq);
  return r;
}

inline PipelineReport theorem_pipeline(const SpectralSource& src, const ThickSet& omega, const PipelineOptions& opt) {
  detail::require(opt.s0 > 0.0, "theorem_pipeline: s0 must be positive");
  detail::require(src.dec != nullptr, "theorem_pipeline: missing decomposition");
  const auto& dec = *src.dec;
  const auto basis = spectral_basis(dec, src.lambda);
  if (basis.empty()) throw InvalidArgument("theorem_pipeline: projector has rank 0");
  PipelineReport r;
  r.mode = "spectral";
  r.mu = src.lambda;
  r.s0 = opt.s0;
  r.seed = opt.seed;
  r.rank = basis.size();
  const Field f = detail::random_range_element(basis, opt.seed);
  r.f_norm = l2_norm(f, dec.weight);
  const Field h = inverse_poisson(dec, opt.s0, opt.branch, f, src.lambda);
  r.h_norm = l2_norm(h, dec.weight);
  r.multiplier_bound = std::abs(std::exp(opt.s0 * sqrt_pm(src.lambda, opt.branch)));
  r.h_bound_ok = r.h_norm <= r.multiplier_bound * r.f_norm + 1e-10;
  Field back = poisson(dec, opt.s0, opt.branch, h);
  for (std::size_t i = 0; i < back.size(); ++i) back[i] -= f[i];
  r.reconstruction_error = l2_norm(back, dec.weight) / r.f_norm;
  r.reconstruction_ok = r.reconstruction_error <= 1e-10;
  r.tube_bound_ok = true;  // tube quantities need a Fourier band
  r.observed_mass = observed_mass(f, omega, &dec.weight);
  const auto thresholds = detail::with_threshold(opt.sweep_thresholds, src.lambda);
  const auto curve = sweep(dec, omega, thresholds);
  detail::finish_pipeline(r, curve, std::sqrt(std::max(src.lambda, 0.0)));
  return r;
}

}  // namespace uncplab
