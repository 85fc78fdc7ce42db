#include "fdivlab/cli/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "fdivlab/error.hpp"

namespace fdivlab::cli {

namespace {

struct KindName {
  Kind kind;
  const char* name;
};

constexpr KindName kKinds[] = {
    {Kind::DivergenceFlow, "divergence-flow"}, {Kind::StabilityMarkov, "stability-markov"},
    {Kind::FilterDual, "filter-dual"},         {Kind::BackwardMap, "backward-map"},
    {Kind::Prop5, "prop5"},                    {Kind::Bsde, "bsde"},
    {Kind::Thermo, "thermo"},                  {Kind::DemonSweep, "demon-sweep"},
    {Kind::SecondLaw, "second-law"},
};

[[noreturn]] void invalid(const std::string& path, const std::string& why) {
  throw Error(ErrorCode::ConfigInvalid, path + ": " + why);
}

YAML::Node child(const YAML::Node& node, const std::string& key) {
  if (!node || !node.IsMap()) return YAML::Node();
  return node[key];
}

YAML::Node required(const YAML::Node& node, const std::string& key, const std::string& path) {
  YAML::Node c = child(node, key);
  if (!c || c.IsNull()) invalid(path, "missing required field");
  return c;
}

double as_double(const YAML::Node& n, const std::string& path) {
  if (!n.IsScalar()) invalid(path, "expected a number");
  try {
    return n.as<double>();
  } catch (const YAML::Exception&) {
    invalid(path, "expected a number, got '" + n.Scalar() + "'");
  }
}

long long as_integer(const YAML::Node& n, const std::string& path) {
  const double v = as_double(n, path);
  if (v != static_cast<double>(static_cast<long long>(v))) invalid(path, "expected an integer");
  return static_cast<long long>(v);
}

std::string as_string(const YAML::Node& n, const std::string& path) {
  if (!n.IsScalar()) invalid(path, "expected a string");
  return n.Scalar();
}

double opt_double(const YAML::Node& parent, const std::string& key, const std::string& path, double fallback) {
  YAML::Node c = child(parent, key);
  return c ? as_double(c, path) : fallback;
}

std::vector<double> as_list(const YAML::Node& n, const std::string& path) {
  if (n.IsScalar()) return {as_double(n, path)};
  if (!n.IsSequence()) invalid(path, "expected a number or a list of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < n.size(); ++i) out.push_back(as_double(n[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

Eigen::VectorXd as_vector(const YAML::Node& n, const std::string& path) {
  const std::vector<double> v = as_list(n, path);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// A scalar, a flat list (one row) or a list of rows.
Eigen::MatrixXd as_matrix(const YAML::Node& n, const std::string& path) {
  if (n.IsScalar()) return Eigen::MatrixXd::Constant(1, 1, as_double(n, path));
  if (!n.IsSequence() || n.size() == 0) invalid(path, "expected a matrix");
  if (!n[0].IsSequence()) {
    const Eigen::VectorXd v = as_vector(n, path);
    return v.transpose();
  }
  const std::size_t rows = n.size();
  const std::size_t cols = n[0].size();
  Eigen::MatrixXd out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const std::string rp = path + "[" + std::to_string(i) + "]";
    if (!n[i].IsSequence() || n[i].size() != cols) invalid(rp, "rows must have equal length");
    for (std::size_t j = 0; j < cols; ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          as_double(n[i][j], rp + "[" + std::to_string(j) + "]");
  }
  return out;
}

ModelBlock parse_model(const YAML::Node& node) {
  ModelBlock m;
  const std::string fam = as_string(required(node, "family", "model.family"), "model.family");
  if (fam == "finite") {
    m.family = Family::FiniteState;
    m.rates = as_matrix(required(node, "rates", "model.rates"), "model.rates");
    if (m.rates.rows() != m.rates.cols() || m.rates.rows() < 2) invalid("model.rates", "need a square matrix, d >= 2");
  } else if (fam == "langevin") {
    m.family = Family::Langevin1D;
    const YAML::Node pot = required(node, "potential", "model.potential");
    m.potential_type = as_string(required(pot, "type", "model.potential.type"), "model.potential.type");
    if (m.potential_type == "quadratic") {
      m.stiffness = opt_double(pot, "stiffness", "model.potential.stiffness", 1.0);
      m.center = opt_double(pot, "center", "model.potential.center", 0.0);
      if (!(m.stiffness > 0.0)) invalid("model.potential.stiffness", "must be positive");
    } else if (m.potential_type == "polynomial") {
      m.coefficients =
          as_list(required(pot, "coefficients", "model.potential.coefficients"), "model.potential.coefficients");
    } else {
      invalid("model.potential.type", "expected quadratic or polynomial");
    }
    const YAML::Node g = required(node, "grid", "model.grid");
    m.grid_min = as_double(required(g, "min", "model.grid.min"), "model.grid.min");
    m.grid_max = as_double(required(g, "max", "model.grid.max"), "model.grid.max");
    m.cells = static_cast<int>(as_integer(required(g, "cells", "model.grid.cells"), "model.grid.cells"));
    if (!(m.grid_max > m.grid_min)) invalid("model.grid.max", "must exceed model.grid.min");
    if (m.cells < 3) invalid("model.grid.cells", "need at least 3 cells");
  } else if (fam == "linear-gaussian") {
    m.family = Family::LinearGaussian;
    m.stiffness_matrix = as_matrix(required(node, "stiffness", "model.stiffness"), "model.stiffness");
    if (m.stiffness_matrix.rows() != m.stiffness_matrix.cols()) invalid("model.stiffness", "must be square");
  } else {
    invalid("model.family", "expected finite, langevin or linear-gaussian, got '" + fam + "'");
  }
  return m;
}

PriorBlock parse_prior(const YAML::Node& node, const std::string& path, const ModelBlock& model) {
  PriorBlock p;
  if (!node) return p;
  p.present = true;
  if (model.family == Family::FiniteState) {
    p.masses = as_vector(required(node, "masses", path + ".masses"), path + ".masses");
    if (p.masses.size() != model.rates.rows()) invalid(path + ".masses", "length differs from the state count");
    if ((p.masses.array() < 0.0).any()) invalid(path + ".masses", "entries must be nonnegative");
    if (std::abs(p.masses.sum() - 1.0) > 1e-9) invalid(path + ".masses", "entries must sum to 1");
    return p;
  }
  p.mean = as_vector(required(node, "mean", path + ".mean"), path + ".mean");
  p.cov = as_matrix(required(node, "variance", path + ".variance"), path + ".variance");
  const Eigen::Index d = model.family == Family::LinearGaussian ? model.stiffness_matrix.rows() : 1;
  if (p.mean.size() != d) invalid(path + ".mean", "dimension differs from the model");
  if (p.cov.rows() != d || p.cov.cols() != d) invalid(path + ".variance", "dimension differs from the model");
  return p;
}

void require_family(const ScenarioConfig& c, Family f, const char* what) {
  if (c.model.family != f) invalid("model.family", std::string("kind ") + to_string(c.kind) + " needs " + what);
}

void require_positive_horizon(const Numerics& n) {
  if (!(n.horizon > 0.0)) invalid("numerics.T", "must be positive");
}

}  // namespace

std::string to_string(Kind kind) {
  for (const auto& k : kKinds)
    if (k.kind == kind) return k.name;
  return "unknown";
}

std::optional<Kind> kind_from_string(const std::string& s) {
  for (const auto& k : kKinds)
    if (s == k.name) return k.kind;
  return std::nullopt;
}

const std::vector<Kind>& all_kinds() {
  static const std::vector<Kind> kinds = [] {
    std::vector<Kind> v;
    for (const auto& k : kKinds) v.push_back(k.kind);
    return v;
  }();
  return kinds;
}

Generator ModelBlock::generator() const {
  switch (family) {
    case Family::FiniteState: return build_finite_generator(rates);
    case Family::Langevin1D: return Generator::langevin(potential(), grid());
    case Family::LinearGaussian: return Generator::linear_gaussian(stiffness_matrix);
  }
  throw Error(ErrorCode::UnsupportedFamily, "unknown family");
}

Potential ModelBlock::potential() const {
  if (potential_type == "polynomial") return Potential::polynomial(coefficients);
  return Potential::quadratic(stiffness, center);
}

Grid ModelBlock::grid() const { return Grid(grid_min, grid_max, cells); }

Measure PriorBlock::build(const ModelBlock& model) const {
  switch (model.family) {
    case Family::FiniteState: return Measure::finite(masses);
    case Family::Langevin1D: return discretize(Measure::gaussian(mean, cov), model.grid());
    case Family::LinearGaussian: return Measure::gaussian(mean, cov);
  }
  throw Error(ErrorCode::UnsupportedFamily, "unknown family");
}

FeedbackPolicy ThermoBlock::policy_object() const {
  if (policy == "center-tracking") return FeedbackPolicy::center_tracking(stiffness, gain);
  const double k0 = stiffness, kr = stiffness_rate, c = center;
  return FeedbackPolicy::open_loop([k0, kr](double t) { return k0 + kr * t; }, [c](double) { return c; });
}

ThermoScenario ThermoBlock::scenario(double horizon, double dt) const {
  ThermoScenario s;
  s.policy = policy_object();
  s.observation_gain = observation_gain;
  s.prior_mean = prior_mean;
  s.prior_var = prior_var;
  s.horizon = horizon;
  s.dt = dt;
  s.quadrature = quadrature;
  return s;
}

ObservationFunction ScenarioConfig::observation() const {
  if (model.family == Family::FiniteState) return ObservationFunction::finite(h);
  return ObservationFunction::linear_map(h);
}

ScenarioConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("yaml: ") + e.what());
  }
  if (!root || !root.IsMap()) invalid("<root>", "expected a mapping");

  ScenarioConfig c;
  c.source_text = text;
  const std::string kind = as_string(required(root, "kind", "kind"), "kind");
  const auto k = kind_from_string(kind);
  if (!k) invalid("kind", "unknown experiment kind '" + kind + "'");
  c.kind = *k;
  if (auto n = child(root, "name")) c.name = as_string(n, "name");
  if (auto n = child(root, "description")) c.description = as_string(n, "description");
  if (auto n = child(root, "seed")) {
    const long long s = as_integer(n, "seed");
    if (s < 0) invalid("seed", "must be nonnegative");
    c.seed = static_cast<std::uint64_t>(s);
  }
  if (auto n = child(root, "output")) c.output_dir = as_string(n, "output");

  const bool thermo_kind = c.kind == Kind::Thermo || c.kind == Kind::DemonSweep;
  if (!thermo_kind) c.model = parse_model(required(root, "model", "model"));

  const YAML::Node priors = child(root, "priors");
  if (!thermo_kind) {
    c.mu = parse_prior(child(priors, "mu"), "priors.mu", c.model);
    c.nu = parse_prior(child(priors, "nu"), "priors.nu", c.model);
  }

  if (const YAML::Node obs = child(root, "observation")) {
    c.has_observation = true;
    c.h = as_matrix(required(obs, "h", "observation.h"), "observation.h");
    if (c.model.family == Family::FiniteState && !thermo_kind) {
      if (c.h.rows() == 1 && c.h.cols() == c.model.rates.rows()) c.h.transposeInPlace();
      if (c.h.rows() != c.model.rates.rows()) invalid("observation.h", "need one row per state");
    }
  }

  const YAML::Node num = required(root, "numerics", "numerics");
  c.numerics.dt = as_double(required(num, "dt", "numerics.dt"), "numerics.dt");
  if (!(c.numerics.dt > 0.0)) invalid("numerics.dt", "must be positive");
  if (auto n = child(num, "T")) c.numerics.horizon = as_double(n, "numerics.T");
  if (auto n = child(num, "horizons")) c.numerics.horizons = as_list(n, "numerics.horizons");
  if (auto n = child(num, "trials")) {
    const long long t = as_integer(n, "numerics.trials");
    if (t < 1) invalid("numerics.trials", "must be >= 1");
    c.numerics.trials = static_cast<std::size_t>(t);
  }
  if (auto n = child(num, "reference_trials")) {
    const long long t = as_integer(n, "numerics.reference_trials");
    if (t < 1) invalid("numerics.reference_trials", "must be >= 1");
    c.numerics.reference_trials = static_cast<std::size_t>(t);
  }
  if (auto n = child(num, "basis_degree")) c.numerics.basis_degree = static_cast<int>(as_integer(n, "numerics.basis_degree"));
  if (auto n = child(num, "tolerance")) c.numerics.tolerance = as_double(n, "numerics.tolerance");
  if (auto n = child(num, "resolution")) c.numerics.resolution = static_cast<int>(as_integer(n, "numerics.resolution"));
  if (c.numerics.horizon > 0.0 && c.numerics.dt > c.numerics.horizon) invalid("numerics.dt", "must not exceed numerics.T");
  for (double T : c.numerics.horizons)
    if (!(T > 0.0) || c.numerics.dt > T) invalid("numerics.horizons", "each horizon must be positive and >= dt");

  if (const YAML::Node pr = child(root, "protocol")) {
    c.protocol.stiffness_rate = opt_double(pr, "stiffness_rate", "protocol.stiffness_rate", 0.0);
    c.protocol.center_rate = opt_double(pr, "center_rate", "protocol.center_rate", 0.0);
  }

  if (thermo_kind) {
    const YAML::Node th = required(root, "thermo", "thermo");
    ThermoBlock& t = c.thermo;
    if (auto n = child(th, "policy")) t.policy = as_string(n, "thermo.policy");
    if (t.policy != "center-tracking" && t.policy != "open-loop") {
      invalid("thermo.policy", "expected center-tracking or open-loop");
    }
    t.stiffness = opt_double(th, "stiffness", "thermo.stiffness", 1.0);
    t.stiffness_rate = opt_double(th, "stiffness_rate", "thermo.stiffness_rate", 0.0);
    t.center = opt_double(th, "center", "thermo.center", 0.0);
    t.gain = opt_double(th, "gain", "thermo.gain", 1.0);
    t.observation_gain = opt_double(th, "observation_gain", "thermo.observation_gain", 1.0);
    t.prior_mean = opt_double(th, "prior_mean", "thermo.prior_mean", 0.0);
    t.prior_var = opt_double(th, "prior_var", "thermo.prior_var", 1.0);
    if (auto n = child(th, "quadrature")) {
      try {
        t.quadrature = work_quadrature_from_string(as_string(n, "thermo.quadrature"));
      } catch (const Error&) {
        invalid("thermo.quadrature", "expected post_update, midpoint or left_endpoint");
      }
    }
    if (auto n = child(th, "gains")) t.gains = as_list(n, "thermo.gains");
    if (auto n = child(th, "refine_levels")) t.refine_levels = static_cast<int>(as_integer(n, "thermo.refine_levels"));
    if (!(t.stiffness > 0.0)) invalid("thermo.stiffness", "must be positive");
    if (!(t.prior_var > 0.0)) invalid("thermo.prior_var", "must be positive");
    if (t.refine_levels < 0 || t.refine_levels == 1) invalid("thermo.refine_levels", "use 0 (off) or >= 2");
  }

  // Per-kind requirements.
  switch (c.kind) {
    case Kind::DivergenceFlow:
      if (!c.mu.present) invalid("priors.mu", "missing required field");
      require_positive_horizon(c.numerics);
      break;
    case Kind::StabilityMarkov:
      if (!c.mu.present) invalid("priors.mu", "missing required field");
      require_positive_horizon(c.numerics);
      break;
    case Kind::FilterDual:
    case Kind::BackwardMap:
    case Kind::Bsde:
      require_family(c, Family::FiniteState, "a finite model");
      if (!c.mu.present) invalid("priors.mu", "missing required field");
      if (!c.nu.present) invalid("priors.nu", "missing required field");
      if (!c.has_observation) invalid("observation.h", "missing required field");
      require_positive_horizon(c.numerics);
      break;
    case Kind::Prop5:
      require_family(c, Family::FiniteState, "a finite model");
      if (!c.mu.present) invalid("priors.mu", "missing required field");
      if (!c.has_observation) invalid("observation.h", "missing required field");
      if (c.numerics.horizons.empty()) invalid("numerics.horizons", "missing required field");
      break;
    case Kind::Thermo:
      require_positive_horizon(c.numerics);
      if (c.numerics.trials < 2) invalid("numerics.trials", "need at least 2 trials");
      break;
    case Kind::DemonSweep:
      if (c.numerics.horizons.empty()) invalid("numerics.horizons", "missing required field");
      if (c.thermo.gains.empty()) invalid("thermo.gains", "missing required field");
      if (c.numerics.trials < 2) invalid("numerics.trials", "need at least 2 trials");
      break;
    case Kind::SecondLaw:
      if (c.model.family == Family::FiniteState) invalid("model.family", "second-law needs langevin or linear-gaussian");
      if (!c.mu.present) invalid("priors.mu", "missing required field");
      require_positive_horizon(c.numerics);
      if (c.model.family == Family::LinearGaussian && c.protocol.stiffness_rate != 0.0 &&
          c.model.stiffness_matrix.rows() != 1) {
        invalid("protocol.stiffness_rate", "time-varying stiffness is scalar only");
      }
      break;
  }
  return c;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_hash(const std::string& text, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](unsigned char b) {
    h ^= b;
    h *= 1099511628211ULL;
  };
  for (unsigned char ch : text) mix(ch);
  for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>((seed >> (8 * i)) & 0xFFu));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 8);
}

}  // namespace fdivlab::cli
