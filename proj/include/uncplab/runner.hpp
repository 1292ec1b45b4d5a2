#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "uncplab/carleman.hpp"
#include "uncplab/config.hpp"
#include "uncplab/interpolation.hpp"
#include "uncplab/observability.hpp"
#include "uncplab/schrodinger.hpp"
#include "uncplab/thick_set.hpp"

namespace uncplab {

using json = nlohmann::ordered_json;

/// One invariant checked by a run.
struct Check {
  std::string name;
  bool pass = false;
  double value = 0.0;  ///< the measured quantity behind the verdict
};

struct RunOutcome {
  int status = 0;  ///< 0 all checks pass, 1 a check failed, 2 invalid configuration
  std::vector<Check> checks;
  std::vector<std::string> artifacts;
  std::string message;
};

// ---------------------------------------------------------------------------
// JSON views of the library results.

inline json to_json(const LawFit& fit) { return {{"A", fit.A}, {"C", fit.C}, {"residual", fit.residual}}; }

inline json to_json(const InterpolationCertificate& c) {
  return {{"exponent", c.exponent},       {"constant", c.constant}, {"allowed", c.allowed},
          {"worst_lhs", c.lhs},           {"worst_rhs", c.rhs},     {"worst_index", c.worst_index},
          {"instances", c.instances},     {"pass", c.pass},         {"geometry_hash", c.geometry_hash}};
}

inline json to_json(const CarlemanConstants& c) {
  return {{"C_mu", c.C_mu}, {"c_Y", c.c_Y}, {"C_Y", c.C_Y}, {"rho", c.rho}, {"delta", c.delta}};
}

inline json to_json(const PipelineReport& r) {
  return {{"mode", r.mode},
          {"mu", r.mu},
          {"s0", r.s0},
          {"seed", r.seed},
          {"rank", r.rank},
          {"f_norm", r.f_norm},
          {"h_norm", r.h_norm},
          {"multiplier_bound", r.multiplier_bound},
          {"reconstruction_error", r.reconstruction_error},
          {"tube_mean", r.tube_mean},
          {"tube_bound_ratio", r.tube_bound_ratio},
          {"observed_mass", r.observed_mass},
          {"c_at_mu", r.c_at_mu},
          {"fit", to_json(r.fit)},
          {"final_inequality_margin", r.final_inequality_margin},
          {"chain_constant", r.chain_constant},
          {"chain_margin", r.chain_margin},
          {"pass", r.pass()}};
}

inline json to_json(const ObservabilityCurve& c) {
  return {{"mode", c.mode},
          {"thresholds", c.thresholds},
          {"mu_eff", c.mu_eff},
          {"c", c.c_values},
          {"ranks", c.ranks},
          {"envelope", to_json(c.fit)},
          {"least_squares", to_json(c.least_squares)},
          {"envelope_gap", c.envelope_gap},
          {"monotone", c.monotone}};
}

namespace detail {

class RunContext {
 public:
  RunContext(const ExperimentConfig& config, std::filesystem::path out, std::ostream& log, bool verbose)
      : config_(config), out_(std::move(out)), log_(log), verbose_(verbose), hash_(config.hash()) {}

  const ExperimentConfig& config() const { return config_; }
  const std::string& hash() const { return hash_; }
  RunOutcome& outcome() { return outcome_; }

  void note(const std::string& text) const {
    if (verbose_) log_ << text << '\n';
  }

  void check(std::string name, bool pass, double value) {
    note("check " + name + (pass ? " ok" : " FAILED"));
    outcome_.checks.push_back(Check{std::move(name), pass, value});
  }

  /// Opens an artifact for writing; text artifacts start with the config hash.
  std::ofstream open(const std::string& name, bool csv_header = true) {
    const auto path = out_ / name;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write artifact " + path.string());
    os << std::setprecision(17);
    if (csv_header) os << "# config_hash=" << hash_ << '\n';
    outcome_.artifacts.push_back(name);
    note("writing " + path.string());
    return os;
  }

  void write_json(const std::string& name, json body) {
    json doc = {{"config_hash", hash_}};
    doc.update(body);
    auto os = open(name, false);
    os << doc.dump(2) << '\n';
  }

 private:
  const ExperimentConfig& config_;
  std::filesystem::path out_;
  std::ostream& log_;
  bool verbose_;
  std::string hash_;
  RunOutcome outcome_;
};

inline Grid config_grid(const ExperimentConfig& c) { return Grid(c.grid.dim, c.grid.length, c.grid.points); }

inline SchrodingerProblem config_problem(const ExperimentConfig& c, const Grid& grid) {
  const auto& p = c.problem;
  if (p.preset == "poschl-teller") return poschl_teller_problem(grid, p.depth, p.epsilon);
  if (p.preset == "gaussian-metric") return gaussian_metric_problem(grid, p.amplitude, p.width, p.epsilon);
  return make_preset_problem(p.preset, grid);
}

inline ThickSet config_set(const ExperimentConfig& c, const Grid& grid) {
  const auto& s = c.set;
  if (s.kind == "full") {
    const double radius = s.verify_radius ? *s.verify_radius : std::max(1.0, 2.0 * grid.spacing());
    return with_verification(ThickSet::full(grid), radius);
  }
  if (s.kind == "random") return generate_set(grid, RandomSetParams{s.density, c.seed, s.blob_radius, s.verify_radius});
  return generate_set(grid, PeriodicSetParams{s.gamma, s.period, s.verify_radius});
}

// -- observe ---------------------------------------------------------------

inline void run_observe(RunContext& ctx) {
  const auto& c = ctx.config();
  const Grid grid = config_grid(c);
  const ThickSet omega = config_set(c, grid);
  ObservabilityCurve curve;
  if (c.sweep.mode == "flat") {
    curve = sweep(grid, omega, c.sweep.thresholds);
  } else {
    const auto dec = decompose(assemble(config_problem(c, grid)));
    curve = sweep(dec, omega, c.sweep.thresholds);
  }
  {
    auto os = ctx.open("sweep.csv", false);
    write_sweep_csv(os, curve, ctx.hash());
  }
  double c_min = std::numeric_limits<double>::infinity();
  for (double v : curve.c_values) c_min = std::min(c_min, v);
  ctx.check("observability_constant_positive", c_min > 0.0, c_min);
  ctx.check("envelope_dominates_sweep", curve.envelope_gap >= -c.tolerances.envelope, curve.envelope_gap);

  json fit = {{"curve", to_json(curve)}};
  if (c.sweep.mode == "flat" && grid.dim() == 1 && c.set.kind == "periodic" && c_min > 0.0) {
    const auto k = kovrijkine_fit(curve, c.set.gamma, c.set.period);
    fit["kovrijkine"] = {{"K", k.K}, {"bounds", k.bounds}, {"min_ratio", k.min_ratio}};
  }
  ctx.write_json("fit.json", fit);
}

// -- thickness ---------------------------------------------------------------

inline void run_thickness(RunContext& ctx) {
  const auto& c = ctx.config();
  const Grid grid = config_grid(c);
  const ThickSet omega = config_set(c, grid);
  const double fraction = omega.measure() / grid.volume();
  const auto& cert = omega.verified;
  if (!cert) throw InvalidArgument("thickness: the set carries no thickness certificate");
  {
    auto os = ctx.open("thickness.csv");
    os << "kind,radius,delta,measure_fraction\n"
       << c.set.kind << ',' << cert->radius << ',' << cert->delta << ',' << fraction << '\n';
  }
  ctx.write_json("thickness.json",
                 {{"kind", c.set.kind}, {"radius", cert->radius}, {"delta", cert->delta}, {"measure_fraction", fraction}});
  ctx.check("thickness_positive", cert->delta > 0.0, cert->delta);
  // The mean of the local density over all ball positions is the global fraction.
  ctx.check("thickness_below_measure_fraction", cert->delta <= fraction + 1e-12, fraction - cert->delta);
}

// -- project -----------------------------------------------------------------

inline void run_project(RunContext& ctx) {
  const auto& c = ctx.config();
  const Grid grid = config_grid(c);
  const auto dec = decompose(assemble(config_problem(c, grid)));
  {
    auto os = ctx.open("eigenvalues.csv");
    write_eigenvalue_csv(os, dec);
  }
  const double lambda = c.project.threshold;
  const bool compare_flat = c.problem.preset == "flat" && c.project.flat_band.has_value();
  auto rel = [&](const Field& a, const Field& b, const Field& scale) {
    double diff = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      diff = std::max(diff, std::abs(a[i] - b[i]));
      norm = std::max(norm, std::abs(scale[i]));
    }
    return norm > 0.0 ? diff / norm : diff;
  };

  double worst_idem = 0.0, worst_adj = 0.0, worst_semi = 0.0, worst_id = 0.0, worst_flat = 0.0;
  auto os = ctx.open("project.csv");
  os << "field,idempotence,self_adjointness,semigroup,identity_at_zero,flat_vs_eigen\n";
  for (int k = 0; k < c.project.fields; ++k) {
    const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(k);
    const Field f = gaussian_field(grid, 2 * seed), g = gaussian_field(grid, 2 * seed + 1);
    const Field pf = project(dec, lambda, f);
    const double idem = rel(project(dec, lambda, pf), pf, f);
    const double nf = l2_norm(f, dec.weight), ng = l2_norm(g, dec.weight);
    const double adj = std::abs(weighted_inner_product(pf, g, dec.weight) -
                                weighted_inner_product(f, project(dec, lambda, g), dec.weight)) /
                       (nf * ng);
    double semi = 0.0;
    for (Branch b : {Branch::plus, Branch::minus})
      for (double s : c.project.s)
        for (double t : c.project.s)
          semi = std::max(semi, rel(poisson(dec, s, b, poisson(dec, t, b, pf)), poisson(dec, s + t, b, pf), pf));
    const double ident = std::max(rel(poisson(dec, 0.0, Branch::plus, f), f, f),
                                  rel(poisson(dec, 0.0, Branch::minus, f), f, f));
    const double flat = compare_flat ? rel(flat_project(grid, *c.project.flat_band, f), pf, f) : 0.0;
    os << k << ',' << idem << ',' << adj << ',' << semi << ',' << ident << ',' << flat << '\n';
    worst_idem = std::max(worst_idem, idem);
    worst_adj = std::max(worst_adj, adj);
    worst_semi = std::max(worst_semi, semi);
    worst_id = std::max(worst_id, ident);
    worst_flat = std::max(worst_flat, flat);
  }
  double worst_modulus = 0.0;
  for (Eigen::Index j = 0; j < dec.eigenvalues.size() && dec.eigenvalues(j) < 0.0; ++j)
    for (Branch b : {Branch::plus, Branch::minus})
      for (double s : c.project.s)
        worst_modulus = std::max(worst_modulus, std::abs(std::abs(std::exp(-s * sqrt_pm(dec.eigenvalues(j), b))) - 1.0));

  const double tol = c.tolerances.algebra;
  ctx.check("projector_idempotent", worst_idem <= tol, worst_idem);
  ctx.check("projector_self_adjoint", worst_adj <= tol, worst_adj);
  ctx.check("poisson_semigroup", worst_semi <= tol, worst_semi);
  ctx.check("poisson_identity_at_zero", worst_id <= tol, worst_id);
  ctx.check("negative_modes_unit_modulus", worst_modulus <= tol, worst_modulus);
  if (compare_flat) ctx.check("flat_projector_matches_eigen_path", worst_flat <= tol, worst_flat);
}

// -- pipeline ----------------------------------------------------------------

inline void run_pipeline(RunContext& ctx) {
  const auto& c = ctx.config();
  const Grid grid = config_grid(c);
  const ThickSet omega = config_set(c, grid);
  PipelineOptions opt;
  opt.s0 = c.pipeline.s0;
  opt.branch = c.pipeline.branch;
  opt.seed = c.seed;
  opt.sweep_thresholds = c.pipeline.thresholds;
  opt.nu = c.pipeline.nu;
  opt.tube_order = c.pipeline.tube_order;
  PipelineReport report;
  if (c.pipeline.mode == "flat") {
    report = theorem_pipeline(FlatSource{grid, c.pipeline.mu}, omega, opt);
  } else {
    const auto dec = decompose(assemble(config_problem(c, grid)));
    report = theorem_pipeline(SpectralSource{&dec, c.pipeline.mu}, omega, opt);
  }
  ctx.write_json("pipeline.json", {{"report", to_json(report)}});
  ctx.check("reconstruction_error", report.reconstruction_error <= c.tolerances.reconstruction,
            report.reconstruction_error);
  ctx.check("inverse_poisson_norm_bound", report.h_bound_ok, report.h_norm);
  if (c.pipeline.mode == "flat") ctx.check("tube_bound", report.tube_bound_ok, report.tube_bound_ratio);
  ctx.check("final_inequality_margin", report.margin_ok, report.final_inequality_margin);
}

// -- carleman ----------------------------------------------------------------

inline void run_carleman(RunContext& ctx) {
  const auto& c = ctx.config();
  json constants = json::array();
  for (const auto& name : c.carleman.geometries) {
    const CarlemanGeometry geometry = carleman_preset(name);
    const CarlemanResult res = carleman_weight(geometry, c.carleman.quad_points, c.carleman.field_points);
    const auto& k = res.constants;
    constants.push_back({{"geometry", name},
                         {"geometry_hash", geometry.content_hash()},
                         {"constants", to_json(k)},
                         {"c2", res.c2},
                         {"boundary_ratio_bounded", res.boundary_ratio_bounded},
                         {"cutoff_radius", res.cutoff_radius},
                         {"cutoff_bound", res.cutoff_bound},
                         {"refinement_error", res.refinement_error},
                         {"min_phi_mu", res.min_phi_mu},
                         {"max_psi_y", res.max_psi_y},
                         {"inf_phi_on_y", res.inf_phi_on_y}});
    {
      auto os = ctx.open("fields_" + name + ".csv");
      os << "x,y,W,Phi_mu,Psi_Y,phi\n";
      const auto& f = res.fields;
      const double h = f.grid.spacing();
      for (std::size_t i = 0; i < f.grid.size(); ++i) {
        const auto idx = f.grid.unravel(i);
        os << f.origin.real() + idx[0] * h << ',' << f.origin.imag() + idx[1] * h << ',' << f.W[i].real() << ','
           << f.Phi_mu[i].real() << ',' << f.Psi_Y[i].real() << ',' << f.phi[i].real() << '\n';
      }
    }
    const std::string tag = "[" + name + "]";
    ctx.check("C_mu_at_least_c_Y" + tag, k.C_mu >= k.c_Y, k.C_mu - k.c_Y);
    ctx.check("delta_in_range" + tag, k.delta > 0.0 && k.delta <= 1.0 / 3.0, k.delta);
    ctx.check("rho_bound" + tag, 2.0 * k.rho * k.C_Y <= k.c_Y, k.c_Y - 2.0 * k.rho * k.C_Y);
    ctx.check("Phi_mu_positive" + tag, res.min_phi_mu > 0.0, res.min_phi_mu);
    ctx.check("Psi_Y_non_positive" + tag, res.max_psi_y <= 0.0, res.max_psi_y);
    ctx.check("boundary_ratio_bounded" + tag, res.boundary_ratio_bounded, res.c2);
    ctx.check("refinement_stable" + tag, res.refinement_error <= c.tolerances.refinement, res.refinement_error);
  }
  json doc = {{"geometries", constants}};
  if (c.carleman.instances > 0) {
    const auto instances = carleman_test_instances(c.carleman.instances, c.seed);
    auto os = ctx.open("carleman_check.csv");
    os << "instance,h,lhs,rhs,ratio\n";
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const CheckResult r = carleman_inequality_check(instances[i], c.carleman.h, c.carleman.check_points);
      worst = std::min(worst, r.worst_ratio);
      for (std::size_t j = 0; j < r.h.size(); ++j)
        os << i << ',' << r.h[j] << ',' << r.lhs[j] << ',' << r.rhs[j] << ',' << r.lhs[j] / r.rhs[j] << '\n';
    }
    doc["inequality_worst_ratio"] = worst;
    ctx.check("carleman_inequality", worst >= 1.0 - c.tolerances.carleman, worst);
  }
  ctx.write_json("carleman.json", doc);
}

// -- interp ------------------------------------------------------------------

inline void run_interp(RunContext& ctx) {
  const auto& c = ctx.config();
  const auto polys = polynomial_family(c.interp.max_degree, c.interp.random_count, c.seed);
  const std::vector<std::function<cplx(cplx)>> line(polys.begin(), polys.end());
  std::vector<BallFunction> ball_family;
  for (const auto& p : polys) ball_family.push_back([p](cplx z, cplx) { return p(z); });

  json line_certs = json::array(), ball_certs = json::array();
  for (const auto& e : standard_line_sets()) {
    const auto cert = interpolate_1d(line, e, c.interp.line_scale, c.interp.line_constant, LineNeighbourhood{});
    line_certs.push_back(to_json(cert));
    ctx.check("line_certificate[" + e.hash() + "]", cert.pass, cert.constant);

    BallSubset subset;
    for (auto [a, b] : e.pieces) subset.boxes.push_back({{a, -1.0}, {b, 1.0}});
    const BallGeometry ball{1, {0.5, 0.0}, 0.5, 1.5, 1.0};
    const auto bcert = interpolate_ball(ball_family, subset, ball,
                                          c.interp.ball_delta.value_or(line_exponent(c.interp.line_scale, e)),
                                          c.interp.ball_constant);
    ball_certs.push_back(to_json(bcert));
    ctx.check("ball_certificate[" + e.hash() + "]", bcert.pass, bcert.constant);
  }

  json tube = json::array();
  if (c.interp.tube_fields > 0) {
    const Grid grid = config_grid(c);
    const ThickSet omega = config_set(c, grid);
    const TubeGeometry geometry = TubeGeometry::quadrature(grid.dim(), c.interp.tube_half_width);
    auto os = ctx.open("tube_certificates.csv");
    os << "field,constant,allowed,pass,aggregate_pass\n";
    bool all = true;
    double worst = 0.0;
    for (int k = 0; k < c.interp.tube_fields; ++k) {
      const Field f = gaussian_band_limited(grid, c.interp.tube_mu, c.seed + static_cast<std::uint64_t>(k));
      const auto cert = interpolate_tube(f, c.interp.tube_mu, omega, geometry, c.interp.tube_nu, c.interp.tube_constant);
      all = all && cert.global.pass && cert.aggregate.pass;
      worst = std::max(worst, cert.global.constant);
      os << k << ',' << cert.global.constant << ',' << cert.global.allowed << ',' << (cert.global.pass ? 1 : 0) << ','
         << (cert.aggregate.pass ? 1 : 0) << '\n';
      tube.push_back(to_json(cert.global));
    }
    ctx.check("tube_certificates", all, worst);
  }
  ctx.write_json("certificates.json", {{"family_seed", c.seed},
                                       {"family_size", polys.size()},
                                       {"line", line_certs},
                                       {"ball", ball_certs},
                                       {"tube", tube}});
}

}  // namespace detail

/// Runs the configured experiment, writing artifacts and summary.json into
/// `out`. Library precondition failures during the run map to status 2,
/// numerical failures and failed checks to status 1.
inline RunOutcome run(const ExperimentConfig& config, const std::filesystem::path& out, std::ostream& log,
                      bool verbose = false) {
  std::filesystem::create_directories(out);
  detail::RunContext ctx(config, out, log, verbose);
  ctx.note("experiment " + to_string(config.experiment) + " config_hash=" + ctx.hash() +
           " seed=" + std::to_string(config.seed));
  RunOutcome& outcome = ctx.outcome();
  try {
    switch (config.experiment) {
      case Experiment::observe: detail::run_observe(ctx); break;
      case Experiment::thickness: detail::run_thickness(ctx); break;
      case Experiment::project: detail::run_project(ctx); break;
      case Experiment::pipeline: detail::run_pipeline(ctx); break;
      case Experiment::carleman: detail::run_carleman(ctx); break;
      case Experiment::interp: detail::run_interp(ctx); break;
    }
    outcome.status = 0;
    for (const auto& c : outcome.checks)
      if (!c.pass) {
        outcome.status = 1;
        outcome.message += (outcome.message.empty() ? "check failed: " : ", ") + c.name;
      }
  } catch (const InvalidArgument& e) {
    outcome.status = 2;
    outcome.message = config.source + ":0: " + e.what();
  } catch (const NumericalError& e) {
    outcome.status = 1;
    outcome.message = std::string("numerical failure: ") + e.what();
  }

  json checks = json::array();
  for (const auto& c : outcome.checks)
    checks.push_back({{"name", c.name}, {"pass", c.pass}, {"value", c.value}});
  json summary = {{"config_hash", ctx.hash()},
                  {"experiment", to_string(config.experiment)},
                  {"seed", config.seed},
                  {"status", outcome.status},
                  {"pass", outcome.status == 0},
                  {"checks", checks},
                  {"artifacts", outcome.artifacts}};
  if (!outcome.message.empty()) summary["message"] = outcome.message;
  {
    std::ofstream os(out / "summary.json");
    os << summary.dump(2) << '\n';
  }
  return outcome;
}

}  // namespace uncplab
