#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "uncplab/carleman.hpp"
#include "uncplab/hash.hpp"
#include "uncplab/interpolation.hpp"
#include "uncplab/schrodinger.hpp"

namespace uncplab {

/// Invalid configuration, anchored to a line of its source (line 0 when the
/// problem is not tied to one line).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, const std::string& message)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + message), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// ---------------------------------------------------------------------------
// Key-value documents with [sections]. '#' and ';' start comments.

struct IniEntry {
  std::string value;
  int line = 0;
};

struct IniDocument {
  std::string source;
  std::map<std::string, std::map<std::string, IniEntry>> sections;
  std::map<std::string, int> section_lines;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace detail

inline IniDocument parse_ini(std::istream& is, const std::string& source) {
  IniDocument doc;
  doc.source = source;
  std::string raw, section;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    const auto comment = raw.find_first_of("#;");
    const std::string text = detail::trim(comment == std::string::npos ? raw : raw.substr(0, comment));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']' || text.size() < 3) throw ConfigError(source, line, "malformed section header '" + text + "'");
      section = detail::lower(detail::trim(text.substr(1, text.size() - 2)));
      if (doc.sections.count(section)) throw ConfigError(source, line, "duplicate section [" + section + "]");
      doc.sections[section];
      doc.section_lines[section] = line;
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError(source, line, "expected 'key = value', got '" + text + "'");
    if (section.empty()) throw ConfigError(source, line, "key outside of any [section]");
    const std::string key = detail::lower(detail::trim(text.substr(0, eq)));
    const std::string value = detail::trim(text.substr(eq + 1));
    if (key.empty()) throw ConfigError(source, line, "empty key");
    auto& entries = doc.sections[section];
    if (entries.count(key)) throw ConfigError(source, line, "duplicate key '" + key + "' in [" + section + "]");
    entries[key] = IniEntry{value, line};
  }
  return doc;
}

// ---------------------------------------------------------------------------
// Experiment configuration.

enum class Experiment { observe, carleman, interp, pipeline, thickness, project };

inline std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::observe: return "observe";
    case Experiment::carleman: return "carleman";
    case Experiment::interp: return "interp";
    case Experiment::pipeline: return "pipeline";
    case Experiment::thickness: return "thickness";
    case Experiment::project: return "project";
  }
  return "?";
}

inline std::optional<Experiment> experiment_from_string(const std::string& name) {
  for (Experiment e : {Experiment::observe, Experiment::carleman, Experiment::interp, Experiment::pipeline,
                       Experiment::thickness, Experiment::project})
    if (to_string(e) == name) return e;
  return std::nullopt;
}

struct GridSpec {
  int dim = 1;
  double length = 16.0;
  int points = 256;
};

struct ProblemSpec {
  std::string preset = "flat";
  double depth = 2.0;      ///< poschl-teller well depth
  double amplitude = 0.2;  ///< gaussian-metric bump height
  double width = 1.0;      ///< gaussian-metric bump width
  double epsilon = 0.5;
};

struct SetSpec {
  std::string kind = "periodic";  ///< periodic | random | full
  double gamma = 0.5;
  double period = 1.0;
  double density = 0.5;
  double blob_radius = 0.5;
  std::optional<double> verify_radius;
};

struct SweepSpec {
  std::string mode = "flat";  ///< flat | spectral
  std::vector<double> thresholds{2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24};
};

struct PipelineSpec {
  std::string mode = "flat";
  double mu = 5.0;
  double s0 = 0.3;
  Branch branch = Branch::plus;
  double nu = 0.5;
  int tube_order = 16;
  std::vector<double> thresholds;
};

struct CarlemanSpec {
  std::vector<std::string> geometries{"interval"};
  int quad_points = 64;
  int field_points = 128;
  int instances = 20;
  std::vector<double> h{0.1, 0.5, 1.0};
  int check_points = 256;
};

struct InterpSpec {
  int max_degree = 16;
  int random_count = 24;
  double line_scale = kLineExponentScale;
  double line_constant = kLineConstant;
  std::optional<double> ball_delta;  ///< defaults to the line exponent of each set
  double ball_constant = 1.0;
  int tube_fields = 10;
  double tube_mu = 4.0;
  double tube_nu = 0.5;
  double tube_half_width = 0.5;
  double tube_constant = 2.0;
};

struct ProjectSpec {
  int fields = 50;
  double threshold = 25.0;  ///< lambda for the eigen path
  std::optional<double> flat_band;  ///< mu_freq compared against the eigen path on flat problems
  std::vector<double> s{0.2, 0.3};
};

struct Tolerances {
  double algebra = 1e-10;
  double envelope = 1e-6;
  double refinement = 1e-3;
  double carleman = 1e-3;
  double reconstruction = 1e-10;
};

struct ExperimentConfig {
  std::string source = "<config>";
  Experiment experiment = Experiment::observe;
  std::uint64_t seed = 0;
  GridSpec grid;
  ProblemSpec problem;
  SetSpec set;
  SweepSpec sweep;
  PipelineSpec pipeline;
  CarlemanSpec carleman;
  InterpSpec interp;
  ProjectSpec project;
  Tolerances tolerances;
  std::string output_dir = "out";

  /// Resolved settings as text; equal configs give equal text.
  std::string canonical() const {
    std::ostringstream os;
    os << std::setprecision(17);
    auto list = [&os](const auto& v) {
      for (const auto& x : v) os << x << ',';
      os << '\n';
    };
    os << "experiment=" << to_string(experiment) << "\nseed=" << seed << '\n';
    os << "grid=" << grid.dim << ',' << grid.length << ',' << grid.points << '\n';
    os << "problem=" << problem.preset << ',' << problem.depth << ',' << problem.amplitude << ','
       << problem.width << ',' << problem.epsilon << '\n';
    os << "set=" << set.kind << ',' << set.gamma << ',' << set.period << ',' << set.density << ','
       << set.blob_radius << ',' << (set.verify_radius ? *set.verify_radius : -1.0) << '\n';
    os << "sweep=" << sweep.mode << ';';
    list(sweep.thresholds);
    os << "pipeline=" << pipeline.mode << ',' << pipeline.mu << ',' << pipeline.s0 << ','
       << (pipeline.branch == Branch::plus ? "plus" : "minus") << ',' << pipeline.nu << ',' << pipeline.tube_order << ';';
    list(pipeline.thresholds);
    os << "carleman=" << carleman.quad_points << ',' << carleman.field_points << ',' << carleman.instances << ','
       << carleman.check_points << ';';
    list(carleman.geometries);
    list(carleman.h);
    os << "interp=" << interp.max_degree << ',' << interp.random_count << ',' << interp.line_scale << ','
       << interp.line_constant << ',' << (interp.ball_delta ? *interp.ball_delta : -1.0) << ',' << interp.ball_constant << ',' << interp.tube_fields
       << ',' << interp.tube_mu << ',' << interp.tube_nu << ',' << interp.tube_half_width << ','
       << interp.tube_constant << '\n';
    os << "project=" << project.fields << ',' << project.threshold << ','
       << (project.flat_band ? *project.flat_band : -1.0) << ';';
    list(project.s);
    os << "tolerances=" << tolerances.algebra << ',' << tolerances.envelope << ',' << tolerances.refinement << ','
       << tolerances.carleman << ',' << tolerances.reconstruction << '\n';
    return os.str();
  }

  std::string hash() const { return ContentHash().add(canonical()).hex(); }
};

namespace detail {

/// Typed access to an IniDocument; every key must be consumed, every value is
/// range-checked against the line it came from.
class ConfigReader {
 public:
  explicit ConfigReader(const IniDocument& doc) : doc_(doc) {}

  const IniEntry* find(const std::string& section, const std::string& key) {
    const auto s = doc_.sections.find(section);
    if (s == doc_.sections.end()) return nullptr;
    const auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    used_.insert(section + "." + key);
    return &k->second;
  }

  [[noreturn]] void fail(const IniEntry& e, const std::string& section, const std::string& key,
                         const std::string& message) const {
    throw ConfigError(doc_.source, e.line, section + "." + key + " " + message);
  }

  void number(const std::string& section, const std::string& key, double& out,
              const std::function<bool(double)>& ok = {}, const char* range = "") {
    const IniEntry* e = find(section, key);
    if (!e) return;
    out = parse_double(*e, section, key);
    if (ok && !ok(out)) fail(*e, section, key, std::string("must ") + range + ", got " + e->value);
  }

  void optional_number(const std::string& section, const std::string& key, std::optional<double>& out,
                       const std::function<bool(double)>& ok, const char* range) {
    const IniEntry* e = find(section, key);
    if (!e) return;
    const double v = parse_double(*e, section, key);
    if (!ok(v)) fail(*e, section, key, std::string("must ") + range + ", got " + e->value);
    out = v;
  }

  void integer(const std::string& section, const std::string& key, int& out,
               const std::function<bool(long long)>& ok, const char* range) {
    const IniEntry* e = find(section, key);
    if (!e) return;
    const long long v = parse_integer(*e, section, key);
    if (!ok(v)) fail(*e, section, key, std::string("must ") + range + ", got " + e->value);
    out = static_cast<int>(v);
  }

  void unsigned_integer(const std::string& section, const std::string& key, std::uint64_t& out) {
    const IniEntry* e = find(section, key);
    if (!e) return;
    const long long v = parse_integer(*e, section, key);
    if (v < 0) fail(*e, section, key, "must be non-negative, got " + e->value);
    out = static_cast<std::uint64_t>(v);
  }

  void choice(const std::string& section, const std::string& key, std::string& out,
              const std::vector<std::string>& allowed) {
    const IniEntry* e = find(section, key);
    if (!e) return;
    const std::string v = lower(e->value);
    if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
      std::string names;
      for (const auto& a : allowed) names += (names.empty() ? "" : ", ") + a;
      fail(*e, section, key, "unknown value '" + e->value + "' (expected one of " + names + ")");
    }
    out = v;
  }

  /// "a, b, c" or an inclusive range "start:stop:step".
  void numbers(const std::string& section, const std::string& key, std::vector<double>& out,
               const std::function<bool(double)>& ok = {}, const char* range = "") {
    const IniEntry* e = find(section, key);
    if (!e) return;
    std::vector<double> values;
    if (e->value.find(':') != std::string::npos) {
      std::vector<double> parts;
      std::istringstream is(e->value);
      std::string item;
      while (std::getline(is, item, ':')) parts.push_back(parse_double(IniEntry{trim(item), e->line}, section, key));
      if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0])
        fail(*e, section, key, "range must read start:stop:step with step > 0 and stop >= start");
      const auto count = static_cast<long long>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
      if (count > 100000) fail(*e, section, key, "range has too many points");
      for (long long k = 0; k <= count; ++k) values.push_back(parts[0] + static_cast<double>(k) * parts[2]);
    } else {
      std::istringstream is(e->value);
      std::string item;
      while (std::getline(is, item, ',')) {
        item = trim(item);
        if (item.empty()) fail(*e, section, key, "empty list entry");
        values.push_back(parse_double(IniEntry{item, e->line}, section, key));
      }
    }
    if (values.empty()) fail(*e, section, key, "must not be empty");
    for (double v : values)
      if (ok && !ok(v)) fail(*e, section, key, std::string("entries must ") + range);
    out = std::move(values);
  }

  void names(const std::string& section, const std::string& key, std::vector<std::string>& out,
             const std::vector<std::string>& allowed) {
    const IniEntry* e = find(section, key);
    if (!e) return;
    std::vector<std::string> values;
    std::istringstream is(e->value);
    std::string item;
    while (std::getline(is, item, ',')) {
      item = lower(trim(item));
      if (std::find(allowed.begin(), allowed.end(), item) == allowed.end())
        fail(*e, section, key, "unknown name '" + item + "'");
      values.push_back(item);
    }
    if (values.empty()) fail(*e, section, key, "must not be empty");
    out = std::move(values);
  }

  void text(const std::string& section, const std::string& key, std::string& out) {
    if (const IniEntry* e = find(section, key)) out = e->value;
  }

  int line_of(const std::string& section, const std::string& key) const {
    const auto s = doc_.sections.find(section);
    if (s != doc_.sections.end()) {
      const auto k = s->second.find(key);
      if (k != s->second.end()) return k->second.line;
      return doc_.section_lines.at(section);
    }
    return 0;
  }

  void reject_unused(const std::set<std::string>& known) const {
    for (const auto& [section, entries] : doc_.sections) {
      if (!known.count(section))
        throw ConfigError(doc_.source, doc_.section_lines.at(section), "unknown section [" + section + "]");
      for (const auto& [key, entry] : entries)
        if (!used_.count(section + "." + key))
          throw ConfigError(doc_.source, entry.line, "unknown key '" + key + "' in [" + section + "]");
    }
  }

 private:
  double parse_double(const IniEntry& e, const std::string& section, const std::string& key) const {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(e.value, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != e.value.size() || !std::isfinite(v))
      throw ConfigError(doc_.source, e.line, section + "." + key + " expects a finite number, got '" + e.value + "'");
    return v;
  }

  long long parse_integer(const IniEntry& e, const std::string& section, const std::string& key) const {
    std::size_t pos = 0;
    long long v = 0;
    try {
      v = std::stoll(e.value, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != e.value.size())
      throw ConfigError(doc_.source, e.line, section + "." + key + " expects an integer, got '" + e.value + "'");
    return v;
  }

  const IniDocument& doc_;
  std::set<std::string> used_;
};

}  // namespace detail

/// Builds and validates an ExperimentConfig. Unknown sections, keys and preset
/// names are errors. `expected`, when given, is the experiment requested by the
/// caller; a config naming a different one is rejected.
inline ExperimentConfig parse_config(const IniDocument& doc, std::optional<Experiment> expected = std::nullopt) {
  ExperimentConfig c;
  c.source = doc.source;
  detail::ConfigReader r(doc);
  auto positive = [](double v) { return v > 0.0; };
  auto non_negative = [](double v) { return v >= 0.0; };

  if (expected) c.experiment = *expected;
  if (const IniEntry* e = r.find("run", "experiment")) {
    const auto parsed = experiment_from_string(detail::lower(e->value));
    if (!parsed) r.fail(*e, "run", "experiment", "unknown experiment '" + e->value + "'");
    if (expected && *parsed != *expected)
      r.fail(*e, "run", "experiment", "is '" + e->value + "' but '" + to_string(*expected) + "' was requested");
    c.experiment = *parsed;
  }
  r.unsigned_integer("run", "seed", c.seed);

  r.integer("grid", "dim", c.grid.dim, [](long long v) { return v >= 1 && v <= 3; }, "be 1, 2 or 3");
  r.number("grid", "length", c.grid.length, positive, "be positive");
  r.integer("grid", "points", c.grid.points, [](long long v) { return v >= 2 && v % 2 == 0 && v <= 1 << 20; },
            "be an even count >= 2");

  r.choice("problem", "preset", c.problem.preset, {"flat", "gaussian-metric", "poschl-teller"});
  r.number("problem", "depth", c.problem.depth, non_negative, "be non-negative");
  r.number("problem", "amplitude", c.problem.amplitude, [](double v) { return v > -1.0; }, "exceed -1");
  r.number("problem", "width", c.problem.width, positive, "be positive");
  r.number("problem", "epsilon", c.problem.epsilon, positive, "be positive");

  r.choice("set", "kind", c.set.kind, {"periodic", "random", "full"});
  r.number("set", "gamma", c.set.gamma, [](double v) { return v > 0.0 && v <= 1.0; }, "lie in (0, 1]");
  r.number("set", "period", c.set.period, positive, "be positive");
  r.number("set", "density", c.set.density, [](double v) { return v > 0.0 && v <= 1.0; }, "lie in (0, 1]");
  r.number("set", "blob_radius", c.set.blob_radius, positive, "be positive");
  r.optional_number("set", "verify_radius", c.set.verify_radius, positive, "be positive");
  if (c.set.kind == "periodic" && !(c.set.period <= c.grid.length / 4.0))
    throw ConfigError(doc.source, r.line_of("set", "period"), "set.period must not exceed grid.length / 4");

  r.choice("sweep", "mode", c.sweep.mode, {"flat", "spectral"});
  r.numbers("sweep", "thresholds", c.sweep.thresholds);

  r.choice("pipeline", "mode", c.pipeline.mode, {"flat", "spectral"});
  r.number("pipeline", "mu", c.pipeline.mu, non_negative, "be non-negative");
  r.number("pipeline", "s0", c.pipeline.s0, positive, "be positive");
  std::string branch = "plus";
  r.choice("pipeline", "branch", branch, {"plus", "minus"});
  c.pipeline.branch = branch == "plus" ? Branch::plus : Branch::minus;
  r.number("pipeline", "nu", c.pipeline.nu, [](double v) { return v > 0.0 && v < 1.0; }, "lie in (0, 1)");
  r.integer("pipeline", "tube_order", c.pipeline.tube_order, [](long long v) { return v >= 2 && v <= 64; },
            "lie in [2, 64]");
  r.numbers("pipeline", "thresholds", c.pipeline.thresholds);

  r.names("carleman", "geometries", c.carleman.geometries, carleman_preset_names());
  r.integer("carleman", "quad_points", c.carleman.quad_points, [](long long v) { return v >= 64 && v <= 4096; },
            "lie in [64, 4096]");
  r.integer("carleman", "field_points", c.carleman.field_points,
            [](long long v) { return v >= 8 && v <= 1024 && (v & (v - 1)) == 0; }, "be a power of two in [8, 1024]");
  r.integer("carleman", "instances", c.carleman.instances, [](long long v) { return v >= 0 && v <= 10000; },
            "lie in [0, 10000]");
  r.numbers("carleman", "h", c.carleman.h, positive, "be positive");
  r.integer("carleman", "check_points", c.carleman.check_points, [](long long v) { return v >= 16 && v <= 4096; },
            "lie in [16, 4096]");

  r.integer("interp", "max_degree", c.interp.max_degree, [](long long v) { return v >= 0 && v <= 64; },
            "lie in [0, 64]");
  r.integer("interp", "random_count", c.interp.random_count, [](long long v) { return v >= 0 && v <= 10000; },
            "lie in [0, 10000]");
  r.number("interp", "line_scale", c.interp.line_scale, positive, "be positive");
  r.number("interp", "line_constant", c.interp.line_constant, positive, "be positive");
  r.optional_number("interp", "ball_delta", c.interp.ball_delta, [](double v) { return v > 0.0 && v <= 1.0; },
                    "lie in (0, 1]");
  r.number("interp", "ball_constant", c.interp.ball_constant, positive, "be positive");
  r.integer("interp", "tube_fields", c.interp.tube_fields, [](long long v) { return v >= 0 && v <= 10000; },
            "lie in [0, 10000]");
  r.number("interp", "tube_mu", c.interp.tube_mu, non_negative, "be non-negative");
  r.number("interp", "tube_nu", c.interp.tube_nu, [](double v) { return v > 0.0 && v < 1.0; }, "lie in (0, 1)");
  r.number("interp", "tube_half_width", c.interp.tube_half_width, positive, "be positive");
  r.number("interp", "tube_constant", c.interp.tube_constant, positive, "be positive");

  r.integer("project", "fields", c.project.fields, [](long long v) { return v >= 1 && v <= 100000; },
            "lie in [1, 100000]");
  r.number("project", "threshold", c.project.threshold);
  r.optional_number("project", "flat_band", c.project.flat_band, non_negative, "be non-negative");
  r.numbers("project", "s", c.project.s, non_negative, "be non-negative");

  r.number("tolerances", "algebra", c.tolerances.algebra, positive, "be positive");
  r.number("tolerances", "envelope", c.tolerances.envelope, positive, "be positive");
  r.number("tolerances", "refinement", c.tolerances.refinement, positive, "be positive");
  r.number("tolerances", "carleman", c.tolerances.carleman, positive, "be positive");
  r.number("tolerances", "reconstruction", c.tolerances.reconstruction, positive, "be positive");

  r.text("output", "dir", c.output_dir);

  r.reject_unused({"run", "grid", "problem", "set", "sweep", "pipeline", "carleman", "interp", "project",
                   "tolerances", "output"});

  const bool needs_thresholds = c.experiment == Experiment::observe;
  if (needs_thresholds && c.sweep.thresholds.size() < 3)
    throw ConfigError(doc.source, r.line_of("sweep", "thresholds"), "sweep.thresholds needs at least 3 values");
  return c;
}

inline ExperimentConfig load_config(const std::string& path, std::optional<Experiment> expected = std::nullopt) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path, 0, "cannot open config file");
  return parse_config(parse_ini(is, path), expected);
}

inline ExperimentConfig parse_config_text(const std::string& text, const std::string& source = "<config>",
                                          std::optional<Experiment> expected = std::nullopt) {
  std::istringstream is(text);
  return parse_config(parse_ini(is, source), expected);
}

}  // namespace uncplab
