// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "uncplab/carleman.hpp"
#include "uncplab/field.hpp"
#include "uncplab/interpolation.hpp"
#include "uncplab/observability.hpp"
#include "uncplab/schrodinger.hpp"
#include "uncplab/thick_set.hpp"

using namespace uncplab;

namespace {

constexpr double kPi = std::numbers::pi;

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [violated: " << what << "]";
    }
  }
};

double max_abs(const Field& f) {
  double m = 0.0;
  for (const auto& v : f.values) m = std::max(m, std::abs(v));
  return m;
}

double max_diff(const Field& a, const Field& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// (1/L) * integral over the boxes of e^{i m 2 pi x / L}, evaluated per box.
cplx box_moment(const std::vector<Box>& boxes, double L, int m) {
  cplx s{0.0, 0.0};
  for (const auto& b : boxes) {
    if (m == 0) {
      s += b.hi[0] - b.lo[0];
    } else {
      const double w = 2.0 * kPi * m / L;
      s += (std::exp(cplx(0.0, w * b.hi[0])) - std::exp(cplx(0.0, w * b.lo[0]))) / cplx(0.0, w);
    }
  }
  return s / L;
}

double smallest_eigenvalue(const Eigen::MatrixXcd& g) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(g, Eigen::EigenvaluesOnly).eigenvalues()(0);
}

// ---------------------------------------------------------------------------

Verdict flat_spectral_inequality() {
  Verdict v;
  const Grid grid(1, 16.0, 1024);
  const ThickSet omega = generate_set(grid, PeriodicSetParams{0.5, 1.0, std::nullopt});
  std::vector<double> mus;
  for (int m = 2; m <= 24; m += 2) mus.push_back(m);
  const auto curve = sweep(grid, omega, mus);

  double c_min = std::numeric_limits<double>::infinity(), worst_oracle = 0.0, worst_above = -1e300;
  for (std::size_t i = 0; i < mus.size(); ++i) {
    c_min = std::min(c_min, curve.c_values[i]);
    // Dense Gram of the band modes from per-box exponential integrals.
    const int kmax = static_cast<int>(std::floor(mus[i] * grid.length() / (2.0 * kPi) + 1e-12));
    const int n = 2 * kmax + 1;
    Eigen::MatrixXcd g(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) g(a, b) = box_moment(omega.boxes, grid.length(), a - b);
    worst_oracle = std::max(worst_oracle, std::abs(smallest_eigenvalue(g) - curve.c_values[i]));
    const double line = 2.0 * curve.fit.C * curve.mu_eff[i] + 2.0 * std::log(curve.fit.A);
    worst_above = std::max(worst_above, -std::log(curve.c_values[i]) - line);
  }
  v.detail << "c in [" << c_min << ", " << curve.c_values.front() << "], envelope A=" << curve.fit.A
           << " C=" << curve.fit.C << ", max point above envelope " << worst_above
           << ", Gram oracle gap " << worst_oracle;
  v.require(c_min > 0.0, "c(mu) > 0");
  v.require(worst_above <= 1e-6, "envelope residual <= 1e-6");
  v.require(std::abs(curve.envelope_gap) <= 1e-6, "envelope touches the sweep");
  v.require(worst_oracle <= 1e-10, "sweep matches dense Gram oracle");
  return v;
}

Verdict negative_spectrum_flatness() {
  Verdict v;
  const Grid grid(1, 16.0 * kPi, 1024);
  const auto problem = poschl_teller_problem(grid, 2.0);
  const auto dec = decompose(assemble(problem));
  int in_window = 0;
  for (Eigen::Index j = 0; j < dec.eigenvalues.size(); ++j)
    if (dec.eigenvalues(j) > -1.05 && dec.eigenvalues(j) < -0.95) ++in_window;
  const double centre = problem.centre()[0];

  // Bound state of the reflectionless well: energy -1, profile sech.
  const Field phi0 = dec.eigenvector(0);
  Field sech = Field::from_function(grid, [&](const Point& x) { return cplx(1.0 / std::cosh(x[0] - centre)); });
  const double overlap = std::abs(weighted_inner_product(sech, phi0, dec.weight)) / l2_norm(sech, dec.weight);

  const ThickSet omega = generate_set(grid, PeriodicSetParams{0.5, 1.0, std::nullopt});
  const std::vector<double> lambdas{-0.85, -0.7, -0.5, -0.3, -0.15, -0.06};
  const auto curve = sweep(dec, omega, lambdas);
  const auto [lo, hi] = std::minmax_element(curve.c_values.begin(), curve.c_values.end());
  double num = 0.0;
  for (const auto& b : omega.boxes) num += std::tanh(b.hi[0] - centre) - std::tanh(b.lo[0] - centre);
  const double closed = num / (std::tanh(grid.length() - centre) - std::tanh(-centre));

  v.detail << "eigenvalues in window " << in_window << ", sigma_0=" << dec.eigenvalues(0) << ", sech overlap "
           << overlap << ", c spread " << (*hi - *lo) << ", c=" << *lo << " vs tanh form " << closed;
  v.require(in_window == 1, "exactly one eigenvalue in (-1.05, -0.95)");
  v.require(std::abs(dec.eigenvalues(0) + 1.0) < 1e-6, "bound state energy -1");
  v.require(std::abs(overlap - 1.0) < 1e-8, "bound state is sech");
  v.require(*hi - *lo <= 1e-10, "c constant to 1e-10");
  v.require(std::abs(*lo - closed) <= 1e-6, "c matches tanh closed form");
  for (std::size_t r : curve.ranks) v.require(r == 1, "rank one below zero");
  return v;
}

Verdict projector_algebra() {
  Verdict v;
  struct Case {
    SchrodingerProblem problem;
    double lambda;
  };
  const Grid line(1, 8.0 * kPi, 128);
  const Grid plane(2, 2.0 * kPi, 16);
  std::vector<Case> cases{{poschl_teller_problem(line), 2.0}, {gaussian_metric_problem(plane, 0.3, 1.0), 6.0}};
  double idem = 0.0, adj = 0.0, semi = 0.0, ident = 0.0, modulus = 0.0;
  int fields = 0;
  for (const auto& cs : cases) {
    const auto dec = decompose(assemble(cs.problem));
    for (int k = 0; k < 25; ++k, ++fields) {
      const Field f = gaussian_field(dec.grid, 1000 + 2 * fields), g = gaussian_field(dec.grid, 1001 + 2 * fields);
      const double scale = max_abs(f);
      const Field pf = project(dec, cs.lambda, f);
      idem = std::max(idem, max_diff(project(dec, cs.lambda, pf), pf) / scale);
      const cplx lhs = weighted_inner_product(pf, g, dec.weight);
      const cplx rhs = weighted_inner_product(f, project(dec, cs.lambda, g), dec.weight);
      adj = std::max(adj, std::abs(lhs - rhs) / (l2_norm(f, dec.weight) * l2_norm(g, dec.weight)));
      for (Branch b : {Branch::plus, Branch::minus}) {
        const Field st = poisson(dec, 0.2, b, poisson(dec, 0.35, b, pf));
        semi = std::max(semi, max_diff(st, poisson(dec, 0.55, b, pf)) / scale);
        ident = std::max(ident, max_diff(poisson(dec, 0.0, b, f), f) / scale);
      }
    }
    for (Eigen::Index j = 0; j < dec.eigenvalues.size() && dec.eigenvalues(j) < 0.0; ++j) {
      const Field mode = dec.eigenvector(static_cast<std::size_t>(j));
      for (Branch b : {Branch::plus, Branch::minus})
        for (double s : {0.3, 1.0, 2.5})
          modulus = std::max(modulus, std::abs(l2_norm(poisson(dec, s, b, mode), dec.weight) - 1.0));
    }
  }
  const double tol = 1e-10;
  v.detail << fields << " fields: idempotence " << idem << ", self-adjointness " << adj << ", semigroup " << semi
           << ", identity " << ident << ", negative-mode modulus " << modulus;
  v.require(idem <= tol, "idempotence");
  v.require(adj <= tol, "self-adjointness");
  v.require(semi <= tol, "semigroup");
  v.require(ident <= tol, "identity at s = 0");
  v.require(modulus <= tol, "negative modes keep modulus one");
  return v;
}

Verdict tube_bound() {
  Verdict v;
  const Grid grid(1, 16.0, 256);
  const double offsets[] = {-0.4, -0.25, -0.1, 0.0, 0.15, 0.3, 0.4};
  double worst_excess = -1e300, worst_oracle = 0.0;
  for (int k = 0; k < 100; ++k) {
    const double mu = 1.0 + 9.0 * (k % 10) / 9.0;
    const Field f = gaussian_band_limited(grid, mu, 500 + k);
    const double norm = l2_norm(f);
    const Field c = frequency_transform(f, Direction::forward);
    for (double y : offsets) {
      const double slice = tube_slice_norm(f, std::span<const double>(&y, 1), mu);
      // Direct evaluation of f(x + i y) at the nodes from the mode sum.
      double direct = 0.0;
      for (std::size_t j = 0; j < grid.size(); ++j) {
        const double x = grid.coordinate(static_cast<int>(j));
        cplx s{0.0, 0.0};
        for (std::size_t m = 0; m < grid.size(); ++m) {
          if (c[m] == cplx{0.0, 0.0}) continue;
          const double xi = grid.frequency(static_cast<int>(m));
          s += c[m] * std::exp(cplx(-xi * y, xi * x));
        }
        direct += std::norm(s);
      }
      direct = std::sqrt(direct * grid.spacing());
      worst_oracle = std::max(worst_oracle, std::abs(direct - slice) / slice);
      worst_excess = std::max(worst_excess, slice - (std::exp(mu * std::abs(y)) * norm + 1e-9));
    }
  }
  // Single modes: the bound is attained when y points against the frequency.
  double equality = 0.0;
  for (int m : {1, 5, 12, 25}) {
    const double xi = 2.0 * kPi * m / grid.length();
    for (int sign : {1, -1}) {
      const Field mode = Field::from_function(grid, [&](const Point& x) { return std::exp(cplx(0.0, sign * xi * x[0])); });
      for (double a : {0.1, 0.25, 0.4}) {
        const double y = -sign * a;
        const double slice = tube_slice_norm(mode, std::span<const double>(&y, 1), xi);
        const double bound = std::exp(xi * a) * l2_norm(mode);
        equality = std::max(equality, std::abs(slice - bound) / bound);
      }
    }
  }
  v.detail << "max slice - bound " << worst_excess << ", direct-sum oracle gap " << worst_oracle
           << ", single-mode equality gap " << equality;
  v.require(worst_excess <= 0.0, "slice norm <= e^{mu|y|} ||f|| + 1e-9");
  v.require(worst_oracle <= 1e-10, "slice norm matches direct summation");
  v.require(equality <= 1e-10, "equality for aligned single modes");
  return v;
}

Verdict carleman_inequality() {
  Verdict v;
  const auto instances = carleman_test_instances(20, 7);
  const std::vector<double> hs{0.1, 0.5, 1.0};
  double worst = std::numeric_limits<double>::infinity();
  int passed = 0;
  for (const auto& inst : instances) {
    const auto r = carleman_inequality_check(inst, hs);
    worst = std::min(worst, r.worst_ratio);
    passed += r.pass ? 1 : 0;
  }
  v.detail << passed << "/20 instances, worst lhs/rhs " << worst;
  v.require(worst >= 1.0 - 1e-3, "lhs >= rhs within 1e-3 relative");
  return v;
}

Verdict interpolation_certificates() {
  Verdict v;
  const auto polys = polynomial_family(16, 24, 2024);
  const std::vector<std::function<cplx(cplx)>> line(polys.begin(), polys.end());
  std::vector<BallFunction> ball_family;
  for (const auto& p : polys) ball_family.push_back([p](cplx z, cplx) { return p(z); });

  double line_worst = 0.0, ball_worst = 0.0;
  for (const auto& e : standard_line_sets()) {
    const auto cert = interpolate_1d(line, e, kLineExponentScale, kLineConstant);
    line_worst = std::max(line_worst, cert.constant);
    v.require(cert.pass, "line certificate on |E| = " + std::to_string(e.measure()));
    BallSubset subset;
    for (auto [a, b] : e.pieces) subset.boxes.push_back({{a, -1.0}, {b, 1.0}});
    const BallGeometry ball{1, {0.5, 0.0}, 0.5, 1.5, 1.0};
    const auto bc = interpolate_ball(ball_family, subset, ball, line_exponent(kLineExponentScale, e), 1.0);
    ball_worst = std::max(ball_worst, bc.constant);
    v.require(bc.pass, "ball certificate on |E| = " + std::to_string(e.measure()));
  }
  const double calibrated = calibrate_line_exponent(line, standard_line_sets(), kLineConstant, LineNeighbourhood{});
  v.require(calibrated >= kLineExponentScale, "frozen exponent scale admissible");

  const Grid grid(1, 16.0, 256);
  const ThickSet omega = with_verification(generate_set(grid, PeriodicSetParams{0.5, 1.0, std::nullopt}), 1.0);
  const TubeGeometry tube = TubeGeometry::quadrature(1, 0.5);
  double tube_worst = 0.0, holder_gap = 0.0, holder_slack = 0.0;
  for (int k = 0; k < 10; ++k) {
    const Field f = gaussian_band_limited(grid, 4.0, 300 + k);
    const auto cert = interpolate_tube(f, 4.0, omega, tube, 0.5, 2.0);
    tube_worst = std::max(tube_worst, cert.global.constant);
    v.require(cert.global.pass && cert.aggregate.pass, "tube certificate");
    // Hoelder: sum a^nu b^{1-nu} <= (sum a)^nu (sum b)^{1-nu}, with equality when b is proportional to a.
    double sa = 0.0, sb = 0.0, mixed = 0.0, prop = 0.0;
    const double nu = 0.5, kappa = 3.7;
    for (std::size_t c = 0; c < cert.cell_observed.size(); ++c) {
      const double a = cert.cell_observed[c], b = cert.cell_tube[c];
      sa += a;
      sb += b;
      mixed += std::pow(a, nu) * std::pow(b, 1.0 - nu);
      prop += std::pow(a, nu) * std::pow(kappa * a, 1.0 - nu);
    }
    holder_slack = std::max(holder_slack, mixed - std::pow(sa, nu) * std::pow(sb, 1.0 - nu));
    const double eq_rhs = std::pow(sa, nu) * std::pow(kappa * sa, 1.0 - nu);
    holder_gap = std::max(holder_gap, std::abs(prop - eq_rhs) / eq_rhs);
    std::vector<double> b_eq(cert.cell_observed.size());
    for (std::size_t c = 0; c < b_eq.size(); ++c) b_eq[c] = kappa * cert.cell_observed[c];
    const auto agg = holder_aggregate(cert.cell_observed, b_eq, std::vector<double>(b_eq.size(), 0.0), 1.0, nu);
    holder_gap = std::max(holder_gap, std::abs(agg.rhs - eq_rhs) / eq_rhs);
  }
  v.detail << "(c, C) = (" << kLineExponentScale << ", " << kLineConstant << "), line worst C " << line_worst
           << ", calibrated c " << calibrated << "; ball worst C " << ball_worst << "; tube worst C " << tube_worst
           << ", Hoelder equality gap " << holder_gap << ", Hoelder slack " << holder_slack;
  v.require(holder_gap <= 1e-12, "Hoelder aggregation equality case");
  v.require(holder_slack <= 1e-12 * tube_worst + 1e-300, "Hoelder inequality on cells");
  return v;
}

Verdict carleman_constants() {
  Verdict v;
  for (const auto& name : carleman_preset_names()) {
    const auto geometry = carleman_preset(name);
    const auto base = carleman_weight(geometry, 64, 64);
    const auto fine = carleman_weight(geometry, 128, 64);
    const auto& c = base.constants;
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); };
    const double drift = std::max({rel(c.C_mu, fine.constants.C_mu), rel(c.c_Y, fine.constants.c_Y),
                                   rel(c.C_Y, fine.constants.C_Y), rel(c.rho, fine.constants.rho),
                                   rel(c.delta, fine.constants.delta)});
    double phi_min = std::numeric_limits<double>::infinity(), psi_max = -phi_min;
    const auto& f = base.fields;
    for (std::size_t i = 0; i < f.grid.size(); ++i) {
      const auto idx = f.grid.unravel(i);
      const Planar x = f.origin + Planar{idx[0] * f.grid.spacing(), idx[1] * f.grid.spacing()};
      if (!geometry.domain.contains(x)) continue;
      phi_min = std::min(phi_min, f.Phi_mu[i].real());
      psi_max = std::max(psi_max, f.Psi_Y[i].real());
    }
    v.detail << name << ": C_mu=" << c.C_mu << " c_Y=" << c.c_Y << " C_Y=" << c.C_Y << " rho=" << c.rho
             << " delta=" << c.delta << " drift=" << drift << "; ";
    v.require(c.C_mu >= c.c_Y, name + ": C_mu >= c_Y");
    v.require(c.delta > 0.0 && c.delta <= 1.0 / 3.0, name + ": delta in (0, 1/3]");
    v.require(2.0 * c.rho * c.C_Y <= c.c_Y, name + ": 2 rho C_Y <= c_Y");
    v.require(base.min_phi_mu > 0.0 && phi_min > 0.0, name + ": Phi_mu > 0");
    v.require(base.max_psi_y <= 0.0 && psi_max <= 0.0, name + ": Psi_Y <= 0");
    v.require(base.boundary_ratio_bounded, name + ": boundary ratio bounded");
    v.require(drift <= 1e-3, name + ": stable under refinement doubling");
  }
  return v;
}

Verdict end_to_end_pipeline() {
  Verdict v;
  const Grid grid(1, 16.0, 256);
  const ThickSet omega = generate_set(grid, PeriodicSetParams{0.5, 1.0, std::nullopt});
  PipelineOptions opt;
  opt.s0 = 0.3;
  opt.seed = 42;
  opt.sweep_thresholds = {1.0, 2.0, 3.0, 4.0, 5.0};
  const auto r = theorem_pipeline(FlatSource{grid, 5.0}, omega, opt);
  const double h_bound = std::exp(opt.s0 * 5.0) * r.f_norm;
  v.detail << "reconstruction " << r.reconstruction_error << ", ||h|| " << r.h_norm << " <= " << h_bound
           << ", tube mean / (e^{2 s0 mu} ||f||^2) " << r.tube_bound_ratio << ", chain constant " << r.chain_constant
           << ", final margin " << r.final_inequality_margin;
  v.require(r.reconstruction_error <= 1e-10, "reconstruction error <= 1e-10");
  v.require(r.h_norm <= h_bound * (1.0 + 1e-12), "||h|| <= e^{s0 mu} ||f||");
  v.require(std::isfinite(r.tube_mean) && r.tube_bound_ok, "tube integral finite and within bound");
  v.require(r.final_inequality_margin >= 0.0, "final inequality margin >= 0");
  return v;
}

Verdict oracle_equivalence() {
  Verdict v;
  double worst = 0.0;
  for (int n : {16, 32, 64, 128}) {
    const Grid g(1, 2.0 * kPi, n);
    const auto dec = decompose(assemble(flat_problem(g)));
    for (int k = 0; k < 3; ++k) {
      const Field f = gaussian_field(g, 77 + 10 * n + k);
      // Squared wavenumbers 25 and 36 straddle 30.5; 9 and 16 straddle 12.5.
      worst = std::max(worst, max_diff(flat_project(g, 5.0, f), project(dec, 30.5, f)) / max_abs(f));
      worst = std::max(worst, max_diff(flat_project(g, 3.0, f), project(dec, 12.5, f)) / max_abs(f));
    }
  }
  {
    const Grid g(2, 2.0 * kPi, 16);
    const auto dec = decompose(assemble(flat_problem(g)));
    const Field f = gaussian_field(g, 5);
    worst = std::max(worst, max_diff(flat_project(g, 5.0, f), project(dec, 25.5, f)) / max_abs(f));
  }

  // Seven modes k = -3..3 on (1, 2 pi, 64), omega = [0, pi).
  const Grid g(1, 2.0 * kPi, 64);
  const ThickSet omega = ThickSet::from_boxes(g, {Box{{0.0, 0.0, 0.0}, {kPi, 0.0, 0.0}}});
  const auto basis = flat_basis(g, 3.0);
  const auto gram = compressed_gram(basis, omega);
  std::vector<int> ks;
  for (std::size_t i : band_indices(g, 3.0)) ks.push_back(g.wavenumber(static_cast<int>(i)));
  const auto m = static_cast<Eigen::Index>(ks.size());
  Eigen::MatrixXcd closed(m, m), simpson(m, m);
  const int panels = 4000;
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b) {
      const int d = ks[static_cast<std::size_t>(b)] - ks[static_cast<std::size_t>(a)];
      closed(a, b) = d == 0 ? cplx(0.5) : (std::exp(cplx(0.0, d * kPi)) - 1.0) / (2.0 * kPi * cplx(0.0, d));
      cplx s{0.0, 0.0};
      for (int j = 0; j <= panels; ++j) {
        const double x = kPi * j / panels;
        const double w = (j == 0 || j == panels) ? 1.0 : (j % 2 ? 4.0 : 2.0);
        s += w * std::exp(cplx(0.0, d * x));
      }
      simpson(a, b) = s * (kPi / panels / 3.0) / (2.0 * kPi);
    }
  const double closed_vs_quad = (closed - simpson).cwiseAbs().maxCoeff();
  const double library_vs_closed = (gram - closed).cwiseAbs().maxCoeff();
  const double eig_gap = std::abs(smallest_eigenvalue(gram) - smallest_eigenvalue(closed));
  v.detail << "flat vs eigen path " << worst << "; 7-mode Gram: closed vs quadrature " << closed_vs_quad
           << ", compressed vs closed " << library_vs_closed << ", lambda_min gap " << eig_gap;
  v.require(m == 7, "seven band modes");
  v.require(worst <= 1e-10, "flat_project matches eigen path");
  v.require(closed_vs_quad <= 1e-8, "closed form matches quadrature");
  v.require(library_vs_closed <= 1e-8, "compressed Gram matches closed form");
  return v;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double budget_s;
    std::function<Verdict()> run;
  };
  const Criterion criteria[] = {
      {"flat spectral inequality sweep", 60, flat_spectral_inequality},
      {"negative-spectrum flatness", 120, negative_spectrum_flatness},
      {"projector and Poisson algebra", 10, projector_algebra},
      {"tube bound", 10, tube_bound},
      {"Carleman inequality", 30, carleman_inequality},
      {"interpolation certificates", 60, interpolation_certificates},
      {"Carleman constants", 60, carleman_constants},
      {"end-to-end pipeline", 30, end_to_end_pipeline},
      {"oracle equivalence", 10, oracle_equivalence},
  };
  int failures = 0, index = 0;
  for (const auto& c : criteria) {
    ++index;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << "exception: " << e.what();
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool on_time = elapsed <= c.budget_s;
    const bool ok = v.pass && on_time;
    failures += ok ? 0 : 1;
    std::printf("%s criterion %d (%s): %s (%.2f s of %.0f s%s)\n", ok ? "PASS" : "FAIL", index, c.name,
                v.detail.str().c_str(), elapsed, c.budget_s, on_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria passed\n", index - failures, index);
  return failures == 0 ? 0 : 1;
}
