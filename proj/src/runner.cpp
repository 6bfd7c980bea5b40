#include "mlpmcmc/runner.hpp"

#include "mlpmcmc/coalescent.hpp"
#include "mlpmcmc/migration.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace mlpmcmc {

using nlohmann::json;

namespace {

const std::set<std::string> kKnownKeys = {
    "model", "d",     "m",     "g",      "y",        "mu",      "R",     "G",        "algorithm",  "N",
    "K",     "seed",  "prior", "proposal", "levels", "initial", "output", "acf_lags", "dump_paths",
    "max_init_attempts"};

std::string in_quotes(std::string_view key) { return "\"" + std::string(key) + "\""; }

const json& require(const json& j, const std::string& key) {
  if (!j.contains(key)) throw ConfigKeyError(key, "missing required key " + in_quotes(key));
  return j.at(key);
}

int as_int(const json& v, std::string_view key) {
  if (!v.is_number_integer()) throw ConfigTypeError("key " + in_quotes(key) + " must be an integer");
  const auto x = v.get<long long>();
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
    throw ConfigTypeError("key " + in_quotes(key) + " is out of integer range");
  }
  return static_cast<int>(x);
}

double as_double(const json& v, std::string_view key) {
  if (!v.is_number()) throw ConfigTypeError("key " + in_quotes(key) + " must be a number");
  return v.get<double>();
}

std::string as_string(const json& v, std::string_view key) {
  if (!v.is_string()) throw ConfigTypeError("key " + in_quotes(key) + " must be a string");
  return v.get<std::string>();
}

bool as_bool(const json& v, std::string_view key) {
  if (!v.is_boolean()) throw ConfigTypeError("key " + in_quotes(key) + " must be a boolean");
  return v.get<bool>();
}

std::uint64_t as_seed(const json& v, std::string_view key) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
  throw ConfigTypeError("key " + in_quotes(key) + " must be a non-negative 64-bit integer");
}

std::vector<int> as_int_list(const json& v, std::string_view key) {
  if (!v.is_array()) throw ConfigTypeError("key " + in_quotes(key) + " must be a list of integers");
  std::vector<int> out;
  for (const auto& e : v) out.push_back(as_int(e, key));
  return out;
}

std::vector<double> as_double_list(const json& v, std::string_view key) {
  if (!v.is_array()) throw ConfigTypeError("key " + in_quotes(key) + " must be a list of numbers");
  std::vector<double> out;
  for (const auto& e : v) out.push_back(as_double(e, key));
  return out;
}

// Scalar or per-coordinate list.
template <typename T, typename Get>
std::vector<T> broadcast(const json& v, std::size_t dim, std::string_view key, Get get) {
  if (!v.is_array()) return std::vector<T>(dim, get(v, key));
  std::vector<T> out;
  for (const auto& e : v) out.push_back(get(e, key));
  if (out.size() != dim) {
    throw ConfigValidationError("key " + in_quotes(key) + " needs " + std::to_string(dim) + " entries");
  }
  return out;
}

Algorithm parse_algorithm(const std::string& s) {
  if (s == "smc") return Algorithm::smc;
  if (s == "pimh") return Algorithm::pimh;
  if (s == "pmmh") return Algorithm::pmmh;
  if (s == "adaptive-pmmh") return Algorithm::adaptive_pmmh;
  throw ConfigValidationError("algorithm must be one of smc, pimh, pmmh, adaptive-pmmh (got " + in_quotes(s) + ")");
}

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::smc: return "smc";
    case Algorithm::pimh: return "pimh";
    case Algorithm::pmmh: return "pmmh";
    case Algorithm::adaptive_pmmh: return "adaptive-pmmh";
  }
  return "";
}

PriorComponent parse_prior_component(const json& j) {
  if (!j.is_object()) throw ConfigTypeError("key \"prior\" entries must be objects");
  const auto kind = as_string(require(j, "kind"), "prior.kind");
  try {
    if (kind == "uniform") {
      return PriorComponent::uniform(as_double(require(j, "lo"), "prior.lo"), as_double(require(j, "hi"), "prior.hi"));
    }
    if (kind == "gamma") {
      return PriorComponent::gamma(as_double(require(j, "shape"), "prior.shape"),
                                   as_double(require(j, "scale"), "prior.scale"));
    }
    if (kind == "grid") return PriorComponent::grid(as_double_list(require(j, "points"), "prior.points"));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigValidationError(std::string("prior: ") + e.what());
  }
  throw ConfigValidationError("prior kind must be uniform, gamma or grid (got " + in_quotes(kind) + ")");
}

json prior_component_json(const PriorComponent& c) {
  switch (c.kind) {
    case PriorComponent::Kind::uniform: return {{"kind", "uniform"}, {"lo", c.a}, {"hi", c.b}};
    case PriorComponent::Kind::gamma: return {{"kind", "gamma"}, {"shape", c.a}, {"scale", c.b}};
    case PriorComponent::Kind::grid: return {{"kind", "grid"}, {"points", c.points}};
  }
  return {};
}

ProposalSpec::Transform parse_transform(const json& v, std::string_view key) {
  const auto s = as_string(v, key);
  if (s == "log") return ProposalSpec::Transform::log;
  if (s == "identity") return ProposalSpec::Transform::identity;
  if (s == "grid") return ProposalSpec::Transform::grid;
  throw ConfigValidationError("proposal transform must be log, identity or grid (got " + in_quotes(s) + ")");
}

std::string transform_name(ProposalSpec::Transform t) {
  switch (t) {
    case ProposalSpec::Transform::log: return "log";
    case ProposalSpec::Transform::identity: return "identity";
    case ProposalSpec::Transform::grid: return "grid";
  }
  return "";
}

int free_dimension(const RunConfig& c) { return c.model == ModelKind::migration ? 1 + c.g * (c.g - 1) / 2 : 1; }

std::vector<int> default_support(const RunConfig& c) {
  std::vector<int> support;
  if (c.model == ModelKind::migration) {
    for (int p : kMigrationLevelSupport) {
      if (p <= c.m - 2) support.push_back(p);
    }
  }
  if (support.empty()) {
    for (int p = 1; p <= c.m - 2; ++p) support.push_back(p);
  }
  return support;
}

}  // namespace

LevelPolicy default_adaptive_policy(const RunConfig& c) {
  LevelPolicy lp;
  lp.kind = LevelPolicy::Kind::adaptive;
  lp.support = default_support(c);
  lp.rule = c.model == ModelKind::migration ? "migration-power" : "mu-power";
  return lp;
}

namespace {

LevelPolicy parse_levels(const json& j, const RunConfig& c) {
  if (!j.is_object()) throw ConfigTypeError("key \"levels\" must be an object");
  const auto policy = j.contains("policy") ? as_string(j.at("policy"), "levels.policy") : std::string("fixed");
  LevelPolicy lp;
  if (policy == "fixed") {
    lp.kind = LevelPolicy::Kind::fixed;
    if (j.contains("levels")) {
      auto levels = as_int_list(j.at("levels"), "levels.levels");
      if (j.contains("deadlines")) {
        lp.schedule = {levels, as_int_list(j.at("deadlines"), "levels.deadlines")};
      } else {
        try {
          lp.schedule = make_schedule(levels, c.m);
        } catch (const std::invalid_argument& e) {
          throw ConfigValidationError(std::string("levels: ") + e.what());
        }
      }
    } else {
      const int p = j.contains("p") ? as_int(j.at("p"), "levels.p") : std::max(1, (c.m - 2) / 2);
      try {
        lp.schedule = build_level_schedule(c.m, p);
      } catch (const std::invalid_argument& e) {
        throw ConfigValidationError(std::string("levels: ") + e.what());
      }
    }
    return lp;
  }
  if (policy == "adaptive") {
    lp = default_adaptive_policy(c);
    if (j.contains("support")) lp.support = as_int_list(j.at("support"), "levels.support");
    if (j.contains("rule")) lp.rule = as_string(j.at("rule"), "levels.rule");
    return lp;
  }
  throw ConfigValidationError("levels.policy must be fixed or adaptive (got " + in_quotes(policy) + ")");
}

Eigen::MatrixXd full_migration_matrix(const RunConfig& c) {
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(c.g, c.g);
  Eigen::Index k = 0;
  for (int a = 0; a < c.g; ++a) {
    for (int b = a + 1; b < c.g; ++b) {
      G(a, b) = G(b, a) = c.G_upper[k++];
    }
  }
  return G;
}

bool same_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

}  // namespace

bool RunConfig::operator==(const RunConfig& o) const {
  const bool same_initial =
      initial.has_value() == o.initial.has_value() &&
      (!initial || (initial->size() == o.initial->size() && *initial == *o.initial));
  return model == o.model && d == o.d && m == o.m && g == o.g && y.size() == o.y.size() && y == o.y && mu == o.mu &&
         same_matrix(R, o.R) && G_upper.size() == o.G_upper.size() && G_upper == o.G_upper &&
         algorithm == o.algorithm && N == o.N && K == o.K && seed == o.seed && prior == o.prior &&
         proposal == o.proposal && levels == o.levels && same_initial && max_init_attempts == o.max_init_attempts &&
         output_dir == o.output_dir && acf_lags == o.acf_lags && dump_paths == o.dump_paths;
}

ParameterPoint config_parameters(const RunConfig& c) {
  ParameterPoint theta{c.mu, c.R, std::nullopt};
  if (c.model == ModelKind::migration) theta.G = full_migration_matrix(c);
  return theta;
}

std::unique_ptr<StoppedProcessModel> make_model(const RunConfig& c) {
  if (c.model == ModelKind::migration) return std::make_unique<MigrationModel>(config_parameters(c), c.g, c.y);
  return std::make_unique<CoalescentModel>(config_parameters(c), c.y);
}

LevelAdapter make_adapter(const RunConfig& c) {
  if (c.levels.kind != LevelPolicy::Kind::adaptive) return LevelAdapter::fixed(static_cast<int>(c.levels.schedule.size()));
  if (c.levels.rule == "mu-power") return LevelAdapter::mu_power(c.levels.support);
  if (c.levels.rule == "migration-power") return LevelAdapter::migration_power(c.levels.support);
  throw ConfigValidationError("levels.rule must be mu-power or migration-power (got " + in_quotes(c.levels.rule) + ")");
}

void validate_config(const RunConfig& c) {
  if (c.d < 1) throw ConfigValidationError("d must be at least 1");
  if (c.g < 1) throw ConfigValidationError("g must be at least 1");
  const int len = c.model == ModelKind::migration ? c.g * c.d : c.d;
  if (c.y.size() != len) throw ConfigValidationError("y must have " + std::to_string(len) + " entries");
  if (c.y.sum() != c.m) throw ConfigValidationError("m must equal the sum of y");
  if (c.R.rows() != c.d || c.R.cols() != c.d) throw ConfigValidationError("R must have d * d entries");
  if (c.model == ModelKind::migration && c.G_upper.size() != c.g * (c.g - 1) / 2) {
    throw ConfigValidationError("G must list the g * (g - 1) / 2 upper-triangle entries");
  }
  if (c.N < 1) throw ConfigValidationError("N must be at least 1");
  if (c.K < 1) throw ConfigValidationError("K must be at least 1");
  if (c.max_init_attempts < 1) throw ConfigValidationError("max_init_attempts must be at least 1");
  if (c.acf_lags < 0) throw ConfigValidationError("acf_lags must be non-negative");

  std::unique_ptr<StoppedProcessModel> model;
  try {
    model = make_model(c);
  } catch (const std::invalid_argument& e) {
    throw ConfigValidationError(std::string("model: ") + e.what());
  }

  const bool adaptive = c.algorithm == Algorithm::adaptive_pmmh;
  if (adaptive && c.levels.kind != LevelPolicy::Kind::adaptive) {
    throw ConfigValidationError("algorithm adaptive-pmmh needs an adaptive level policy");
  }
  if (!adaptive && c.levels.kind == LevelPolicy::Kind::adaptive && c.algorithm != Algorithm::smc) {
    throw ConfigValidationError("an adaptive level policy needs algorithm adaptive-pmmh");
  }
  if (c.levels.kind == LevelPolicy::Kind::fixed) {
    try {
      validate_level_schedule(c.levels.schedule, c.m);
    } catch (const std::invalid_argument& e) {
      throw ConfigValidationError(std::string("levels: ") + e.what());
    }
  } else {
    if (c.levels.support.empty()) throw ConfigValidationError("levels.support must not be empty");
    std::set<int> seen;
    for (int p : c.levels.support) {
      if (p < 1 || p > c.m - 2) {
        throw ConfigValidationError("levels.support entries must lie in [1, m - 2]");
      }
      if (!seen.insert(p).second) throw ConfigValidationError("levels.support has a repeated entry");
    }
    make_adapter(c);
  }

  const auto dim = static_cast<std::size_t>(free_dimension(c));
  if (c.prior.components.size() != dim) {
    throw ConfigValidationError("prior needs " + std::to_string(dim) + " components");
  }
  try {
    c.proposal.validate(dim);
  } catch (const std::invalid_argument& e) {
    throw ConfigValidationError(std::string("proposal: ") + e.what());
  }
  for (std::size_t j = 0; j < dim; ++j) {
    const bool grid_prior = c.prior.components[j].kind == PriorComponent::Kind::grid;
    const bool grid_walk = c.proposal.transforms[j] == ProposalSpec::Transform::grid;
    if (grid_walk && !grid_prior) throw ConfigValidationError("a grid proposal needs a grid prior");
    if (grid_prior && !grid_walk) throw ConfigValidationError("a grid prior needs a grid proposal");
  }
  if (c.initial) {
    if (static_cast<std::size_t>(c.initial->size()) != dim) {
      throw ConfigValidationError("initial needs " + std::to_string(dim) + " entries");
    }
    if (is_log_zero(c.prior.log_density(*c.initial))) {
      throw ConfigValidationError("initial has zero prior density");
    }
  }
}

RunConfig parse_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigTypeError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigTypeError("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kKnownKeys.count(key)) throw ConfigValidationError("unknown key " + in_quotes(key));
  }

  RunConfig c;
  if (j.contains("model")) {
    const auto kind = as_string(j.at("model"), "model");
    if (kind == "coalescent") {
      c.model = ModelKind::coalescent;
    } else if (kind == "migration") {
      c.model = ModelKind::migration;
    } else {
      throw ConfigValidationError("model must be coalescent or migration (got " + in_quotes(kind) + ")");
    }
  }
  c.d = as_int(require(j, "d"), "d");
  c.m = as_int(require(j, "m"), "m");
  const auto y = as_int_list(require(j, "y"), "y");
  c.y = Eigen::Map<const State>(y.data(), static_cast<Eigen::Index>(y.size()));
  c.mu = as_double(require(j, "mu"), "mu");
  const auto r = as_double_list(require(j, "R"), "R");
  if (c.d < 1 || r.size() != static_cast<std::size_t>(c.d) * static_cast<std::size_t>(c.d)) {
    throw ConfigValidationError("R must have d * d entries");
  }
  c.R = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(r.data(), c.d, c.d);
  if (c.model == ModelKind::migration) {
    c.g = as_int(require(j, "g"), "g");
    const auto G = as_double_list(require(j, "G"), "G");
    c.G_upper = Eigen::Map<const Eigen::VectorXd>(G.data(), static_cast<Eigen::Index>(G.size()));
  } else if (j.contains("g") || j.contains("G")) {
    throw ConfigValidationError("keys \"g\" and \"G\" need model \"migration\"");
  }

  c.algorithm = parse_algorithm(as_string(require(j, "algorithm"), "algorithm"));
  c.N = as_int(require(j, "N"), "N");
  c.K = as_int(require(j, "K"), "K");
  c.seed = as_seed(require(j, "seed"), "seed");
  if (c.m < 3) throw ConfigValidationError("m must be at least 3");

  const auto dim = static_cast<std::size_t>(free_dimension(c));
  if (j.contains("prior")) {
    const auto& pj = j.at("prior");
    if (pj.is_array()) {
      for (const auto& e : pj) c.prior.components.push_back(parse_prior_component(e));
    } else {
      c.prior.components.assign(dim, parse_prior_component(pj));
    }
  } else if (c.model == ModelKind::migration) {
    c.prior.components.assign(dim, PriorComponent::gamma(1.0, 1.0));
  } else {
    c.prior.components.assign(dim, PriorComponent::uniform(0.0, 1.5));
  }

  c.proposal.scales.assign(dim, 0.4);
  c.proposal.transforms.clear();
  for (std::size_t k = 0; k < dim; ++k) {
    const bool grid = k < c.prior.components.size() && c.prior.components[k].kind == PriorComponent::Kind::grid;
    c.proposal.transforms.push_back(grid ? ProposalSpec::Transform::grid : ProposalSpec::Transform::log);
  }
  if (j.contains("proposal")) {
    const auto& qj = j.at("proposal");
    if (!qj.is_object()) throw ConfigTypeError("key \"proposal\" must be an object");
    if (qj.contains("scale")) c.proposal.scales = broadcast<double>(qj.at("scale"), dim, "proposal.scale", as_double);
    if (qj.contains("transform")) {
      c.proposal.transforms =
          broadcast<ProposalSpec::Transform>(qj.at("transform"), dim, "proposal.transform", parse_transform);
    }
  }

  if (j.contains("levels")) {
    c.levels = parse_levels(j.at("levels"), c);
  } else if (c.algorithm == Algorithm::adaptive_pmmh) {
    c.levels = default_adaptive_policy(c);
  } else {
    c.levels.kind = LevelPolicy::Kind::fixed;
    try {
      c.levels.schedule = build_level_schedule(c.m, std::max(1, (c.m - 2) / 2));
    } catch (const std::invalid_argument& e) {
      throw ConfigValidationError(std::string("levels: ") + e.what());
    }
  }

  if (j.contains("initial")) {
    const auto v = broadcast<double>(j.at("initial"), dim, "initial", as_double);
    c.initial = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  if (j.contains("max_init_attempts")) c.max_init_attempts = as_int(j.at("max_init_attempts"), "max_init_attempts");
  if (j.contains("output")) c.output_dir = as_string(j.at("output"), "output");
  if (j.contains("acf_lags")) c.acf_lags = as_int(j.at("acf_lags"), "acf_lags");
  if (j.contains("dump_paths")) c.dump_paths = as_bool(j.at("dump_paths"), "dump_paths");

  validate_config(c);
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

json config_to_json(const RunConfig& c) {
  json j;
  j["model"] = c.model == ModelKind::migration ? "migration" : "coalescent";
  j["d"] = c.d;
  j["m"] = c.m;
  j["y"] = std::vector<int>(c.y.data(), c.y.data() + c.y.size());
  j["mu"] = c.mu;
  std::vector<double> r;
  for (int a = 0; a < c.d; ++a) {
    for (int b = 0; b < c.d; ++b) r.push_back(c.R(a, b));
  }
  j["R"] = r;
  if (c.model == ModelKind::migration) {
    j["g"] = c.g;
    j["G"] = std::vector<double>(c.G_upper.data(), c.G_upper.data() + c.G_upper.size());
  }
  j["algorithm"] = algorithm_name(c.algorithm);
  j["N"] = c.N;
  j["K"] = c.K;
  j["seed"] = c.seed;
  json prior = json::array();
  for (const auto& comp : c.prior.components) prior.push_back(prior_component_json(comp));
  j["prior"] = prior;
  json transforms = json::array();
  for (auto t : c.proposal.transforms) transforms.push_back(transform_name(t));
  j["proposal"] = {{"scale", c.proposal.scales}, {"transform", transforms}};
  if (c.levels.kind == LevelPolicy::Kind::fixed) {
    j["levels"] = {{"policy", "fixed"}, {"levels", c.levels.schedule.levels}, {"deadlines", c.levels.schedule.deadlines}};
  } else {
    j["levels"] = {{"policy", "adaptive"}, {"support", c.levels.support}, {"rule", c.levels.rule}};
  }
  if (c.initial) j["initial"] = std::vector<double>(c.initial->data(), c.initial->data() + c.initial->size());
  j["max_init_attempts"] = c.max_init_attempts;
  j["output"] = c.output_dir;
  j["acf_lags"] = c.acf_lags;
  j["dump_paths"] = c.dump_paths;
  return j;
}

std::string serialize_config(const RunConfig& c) { return config_to_json(c).dump(2) + "\n"; }

ChainKind chain_kind(Algorithm a) {
  switch (a) {
    case Algorithm::pimh: return ChainKind::pimh;
    case Algorithm::pmmh: return ChainKind::pmmh;
    case Algorithm::adaptive_pmmh: return ChainKind::adaptive;
    case Algorithm::smc: break;
  }
  throw ConfigValidationError("algorithm smc does not run a chain");
}

ChainComponents make_components(const RunConfig& c) {
  ChainComponents comp;
  comp.particles = c.N;
  comp.prior = c.prior;
  comp.proposal = c.proposal;
  if (c.levels.kind == LevelPolicy::Kind::fixed) {
    comp.schedule = c.levels.schedule;
  } else {
    comp.adapter = make_adapter(c);
  }
  comp.initial = c.initial;
  comp.max_init_attempts = c.max_init_attempts;
  comp.keep_paths = c.dump_paths;
  return comp;
}

SmcResult run_configured_smc(const RunConfig& c) {
  const auto model = make_model(c);
  Rng rng(c.seed);
  LevelSchedule schedule = c.levels.schedule;
  if (c.levels.kind == LevelPolicy::Kind::adaptive) {
    const auto adapter = make_adapter(c);
    schedule = adapter.builder(adapter.sample(model->parameters(), rng), c.m);
  }
  return run_multilevel_smc(*model, schedule, c.N, rng);
}

ChainRecord run_configured_chain(const RunConfig& c) {
  const auto kind = chain_kind(c.algorithm);
  const auto model = make_model(c);
  Rng rng(c.seed);
  return run_chain(kind, c.K, *model, make_components(c), rng);
}

double acceptance_rate(const ChainRecord& record) {
  if (record.rows.size() < 2) throw std::invalid_argument("acceptance rate needs at least one iteration");
  long accepted = 0;
  for (std::size_t i = 1; i < record.rows.size(); ++i) accepted += record.rows[i].accepted ? 1 : 0;
  return static_cast<double>(accepted) / static_cast<double>(record.rows.size() - 1);
}

std::vector<double> autocorrelation(std::span<const double> x, int max_lag) {
  if (max_lag < 0) throw std::invalid_argument("max_lag must be non-negative");
  if (x.size() <= static_cast<std::size_t>(max_lag)) throw std::invalid_argument("series is shorter than max_lag + 1");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double denom = 0.0;
  for (double v : x) denom += (v - mean) * (v - mean);
  if (!(denom > 0.0)) throw std::invalid_argument("series has zero variance");
  std::vector<double> r(static_cast<std::size_t>(max_lag) + 1);
  for (std::size_t k = 0; k < r.size(); ++k) {
    double num = 0.0;
    for (std::size_t t = 0; t + k < x.size(); ++t) num += (x[t] - mean) * (x[t + k] - mean);
    r[k] = num / denom;
  }
  r[0] = 1.0;
  return r;
}

Histogram histogram(std::span<const double> samples, std::span<const double> edges) {
  if (edges.size() < 2) throw std::invalid_argument("histogram needs at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) throw std::invalid_argument("histogram edges must be strictly increasing");
  }
  Histogram h;
  h.counts.assign(edges.size() - 1, 0);
  for (double v : samples) {
    if (v < edges.front()) {
      ++h.underflow;
    } else if (!(v < edges.back())) {
      ++h.overflow;
    } else {
      const auto it = std::upper_bound(edges.begin(), edges.end(), v);
      ++h.counts[static_cast<std::size_t>(it - edges.begin()) - 1];
    }
  }
  return h;
}

namespace {

double quantile(std::vector<double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

Summary summarize(const ChainRecord& record, int acf_lags) {
  Summary s;
  s.acceptance_rate = acceptance_rate(record);
  const std::size_t n = record.rows.size() - 1;
  s.iterations = static_cast<int>(n);

  std::vector<double> levels;
  double tau = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    tau += record.rows[i].tau;
    levels.push_back(record.rows[i].p);
  }
  s.tau_mean = tau / static_cast<double>(n);

  const int pmin = static_cast<int>(*std::min_element(levels.begin(), levels.end()));
  const int pmax = static_cast<int>(*std::max_element(levels.begin(), levels.end()));
  std::vector<double> edges;
  for (int p = pmin; p <= pmax + 1; ++p) edges.push_back(p - 0.5);
  const auto h = histogram(levels, edges);
  for (int p = pmin; p <= pmax; ++p) {
    const long count = h.counts[static_cast<std::size_t>(p - pmin)];
    if (count > 0) s.level_counts[p] = count;
  }

  const auto dim = record.rows.front().theta.size();
  for (Eigen::Index j = 0; j < dim; ++j) {
    ParameterSummary ps;
    ps.name = static_cast<std::size_t>(j) < record.parameter_names.size()
                  ? record.parameter_names[static_cast<std::size_t>(j)]
                  : "theta_" + std::to_string(j);
    std::vector<double> series;
    for (std::size_t i = 1; i <= n; ++i) series.push_back(record.rows[i].theta[j]);
    double mean = 0.0;
    for (double v : series) mean += v;
    ps.mean = mean / static_cast<double>(n);
    std::vector<double> sorted = series;
    std::sort(sorted.begin(), sorted.end());
    ps.q025 = quantile(sorted, 0.025);
    ps.median = quantile(sorted, 0.5);
    ps.q975 = quantile(sorted, 0.975);
    if (sorted.front() != sorted.back()) {
      ps.acf = autocorrelation(series, std::min(acf_lags, static_cast<int>(n) - 1));
    }
    s.parameters.push_back(std::move(ps));
  }
  return s;
}

json summary_to_json(const Summary& s) {
  json params = json::array();
  for (const auto& p : s.parameters) {
    params.push_back({{"name", p.name},
                      {"mean", p.mean},
                      {"q025", p.q025},
                      {"median", p.median},
                      {"q975", p.q975},
                      {"acf", p.acf}});
  }
  json levels = json::object();
  for (const auto& [p, count] : s.level_counts) levels[std::to_string(p)] = count;
  return {{"iterations", s.iterations},   {"acceptance_rate", s.acceptance_rate},
          {"tau_mean", s.tau_mean},       {"acf_estimator", "biased"},
          {"parameters", params},         {"level_counts", levels}};
}

TraceFormat parse_trace_format(std::string_view name) {
  if (name == "csv") return TraceFormat::csv;
  if (name == "json") return TraceFormat::json;
  throw std::invalid_argument("unknown trace format " + in_quotes(name) + " (expected csv or json)");
}

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> csv_columns(const ChainRecord& record) {
  std::vector<std::string> cols{"iter", "accepted", "log_zhat", "p"};
  const auto dim = record.rows.empty() ? static_cast<Eigen::Index>(record.parameter_names.size())
                                       : record.rows.front().theta.size();
  for (Eigen::Index j = 0; j < dim; ++j) cols.push_back("theta_" + std::to_string(j));
  cols.push_back("tau");
  return cols;
}

template <typename T>
T parse_number(std::string_view field, const std::string& what) {
  T v{};
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw std::runtime_error("trace: bad " + what + " field " + in_quotes(field));
  }
  return v;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

void write_trace(const ChainRecord& record, std::ostream& out, TraceFormat format, const RunConfig* config) {
  const auto cols = csv_columns(record);
  if (format == TraceFormat::csv) {
    for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c];
    out << "\n";
    for (const auto& r : record.rows) {
      out << r.iteration << "," << (r.accepted ? 1 : 0) << "," << format_double(r.log_zhat) << "," << r.p;
      for (Eigen::Index j = 0; j < r.theta.size(); ++j) out << "," << format_double(r.theta[j]);
      out << "," << r.tau << "\n";
    }
    return;
  }
  json j;
  j["format"] = "mlpmcmc-trace";
  j["version"] = kVersion;
  j["acf_estimator"] = "biased";
  if (config) {
    j["seed"] = config->seed;
    j["config"] = config_to_json(*config);
  }
  j["parameters"] = record.parameter_names;
  j["columns"] = cols;
  json rows = json::array();
  for (const auto& r : record.rows) {
    json row = json::array({r.iteration, r.accepted ? 1 : 0, r.log_zhat, r.p});
    for (Eigen::Index k = 0; k < r.theta.size(); ++k) row.push_back(r.theta[k]);
    row.push_back(r.tau);
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  out << j.dump() << "\n";
}

void export_trace(const ChainRecord& record, const std::filesystem::path& path, TraceFormat format,
                  const RunConfig* config) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_trace(record, out, format, config);
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

void export_trace(const ChainRecord& record, const std::filesystem::path& path, std::string_view format,
                  const RunConfig* config) {
  export_trace(record, path, parse_trace_format(format), config);
}

ChainRecord read_trace(std::istream& in, TraceFormat format) {
  ChainRecord record;
  if (format == TraceFormat::csv) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("trace: empty file");
    const auto header = split(line);
    if (header.size() < 5 || header[0] != "iter" || header[1] != "accepted" || header[2] != "log_zhat" ||
        header[3] != "p" || header.back() != "tau") {
      throw std::runtime_error("trace: unexpected CSV header");
    }
    const std::size_t dim = header.size() - 5;
    for (std::size_t k = 0; k < dim; ++k) record.parameter_names.emplace_back(header[4 + k]);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = split(line);
      if (f.size() != header.size()) throw std::runtime_error("trace: row has the wrong number of fields");
      ChainRow r;
      r.iteration = parse_number<int>(f[0], "iter");
      r.accepted = parse_number<int>(f[1], "accepted") != 0;
      r.log_zhat = parse_number<double>(f[2], "log_zhat");
      r.p = parse_number<int>(f[3], "p");
      r.theta.resize(static_cast<Eigen::Index>(dim));
      for (std::size_t k = 0; k < dim; ++k) r.theta[static_cast<Eigen::Index>(k)] = parse_number<double>(f[4 + k], "theta");
      r.tau = parse_number<int>(f.back(), "tau");
      record.rows.push_back(std::move(r));
    }
    return record;
  }
  json j;
  try {
    j = json::parse(in);
    record.parameter_names = j.at("parameters").get<std::vector<std::string>>();
    const std::size_t dim = record.parameter_names.size();
    for (const auto& row : j.at("rows")) {
      if (row.size() != dim + 5) throw std::runtime_error("trace: row has the wrong number of fields");
      ChainRow r;
      r.iteration = row.at(0).get<int>();
      r.accepted = row.at(1).get<int>() != 0;
      r.log_zhat = row.at(2).get<double>();
      r.p = row.at(3).get<int>();
      r.theta.resize(static_cast<Eigen::Index>(dim));
      for (std::size_t k = 0; k < dim; ++k) r.theta[static_cast<Eigen::Index>(k)] = row.at(4 + k).get<double>();
      r.tau = row.at(4 + dim).get<int>();
      record.rows.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("trace: malformed JSON: ") + e.what());
  }
  return record;
}

ChainRecord import_trace(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  const TraceFormat format = parse_trace_format(ext.empty() ? ext : ext.substr(1));
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read trace " + path.string());
  try {
    return read_trace(in, format);
  } catch (const std::runtime_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace mlpmcmc
