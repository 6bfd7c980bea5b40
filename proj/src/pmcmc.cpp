#include "mlpmcmc/pmcmc.hpp"

#include "mlpmcmc/coalescent.hpp"
#include "mlpmcmc/migration.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace mlpmcmc {
namespace {

double log_normal_pdf(double z) { return -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

std::vector<double> normalize_log_weights(const std::vector<double>& lw) {
  const double mx = *std::max_element(lw.begin(), lw.end());
  if (!std::isfinite(mx)) throw std::invalid_argument("level-count weights must be positive and finite");
  std::vector<double> out(lw.size());
  double total = 0.0;
  for (std::size_t k = 0; k < lw.size(); ++k) total += (out[k] = std::exp(lw[k] - mx));
  for (auto& w : out) w /= total;
  return out;
}

}  // namespace

PriorComponent PriorComponent::uniform(double lo, double hi) {
  if (!(hi > lo)) throw std::invalid_argument("uniform prior needs lo < hi");
  return {Kind::uniform, lo, hi, {}};
}

PriorComponent PriorComponent::gamma(double shape, double scale) {
  if (!(shape > 0.0) || !(scale > 0.0)) throw std::invalid_argument("gamma prior needs shape, scale > 0");
  return {Kind::gamma, shape, scale, {}};
}

PriorComponent PriorComponent::grid(std::vector<double> points) {
  if (points.empty()) throw std::invalid_argument("grid prior needs at least one point");
  if (!std::is_sorted(points.begin(), points.end()) ||
      std::adjacent_find(points.begin(), points.end()) != points.end()) {
    throw std::invalid_argument("grid points must be strictly increasing");
  }
  return {Kind::grid, 0.0, 0.0, std::move(points)};
}

int PriorComponent::grid_index(double v) const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (std::abs(points[i] - v) <= 1e-12 * std::max(1.0, std::abs(v))) return static_cast<int>(i);
  }
  return -1;
}

double PriorComponent::log_density(double v) const {
  if (std::isnan(v)) return kLogZero;
  switch (kind) {
    case Kind::uniform:
      return (v >= a && v <= b) ? -std::log(b - a) : kLogZero;
    case Kind::gamma:
      if (!(v > 0.0)) return kLogZero;
      return (a - 1.0) * std::log(v) - v / b - std::lgamma(a) - a * std::log(b);
    case Kind::grid:
      return grid_index(v) >= 0 ? -std::log(static_cast<double>(points.size())) : kLogZero;
  }
  return kLogZero;
}

double PriorComponent::sample(Rng& rng) const {
  switch (kind) {
    case Kind::uniform:
      return a + (b - a) * rng.uniform();
    case Kind::gamma:
      return std::gamma_distribution<double>(a, b)(rng);
    case Kind::grid: {
      auto i = static_cast<std::size_t>(rng.uniform() * static_cast<double>(points.size()));
      return points[std::min(i, points.size() - 1)];
    }
  }
  return 0.0;
}

double PriorSpec::log_density(const Eigen::VectorXd& v) const {
  if (static_cast<std::size_t>(v.size()) != components.size()) {
    throw std::invalid_argument("prior dimension does not match the parameter");
  }
  double lp = 0.0;
  for (std::size_t j = 0; j < components.size(); ++j) {
    lp += components[j].log_density(v[static_cast<Eigen::Index>(j)]);
    if (is_log_zero(lp)) return kLogZero;
  }
  return lp;
}

Eigen::VectorXd PriorSpec::sample(Rng& rng) const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(components.size()));
  for (std::size_t j = 0; j < components.size(); ++j) v[static_cast<Eigen::Index>(j)] = components[j].sample(rng);
  return v;
}

void ProposalSpec::validate(std::size_t dim) const {
  if (scales.size() != dim || transforms.size() != dim) {
    throw std::invalid_argument("proposal needs one scale and transform per parameter");
  }
  for (double s : scales) {
    if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("proposal scales must be positive");
  }
}

ProposalSpec::Draw ProposalSpec::propose(const Eigen::VectorXd& current, const PriorSpec& prior, Rng& rng) const {
  validate(static_cast<std::size_t>(current.size()));
  std::normal_distribution<double> normal;
  Draw draw{current, 0.0};
  for (Eigen::Index j = 0; j < current.size(); ++j) {
    const auto uj = static_cast<std::size_t>(j);
    const double z = normal(rng);
    const double v = current[j];
    switch (transforms[uj]) {
      case Transform::log: {
        if (!(v > 0.0)) throw std::invalid_argument("log-scale walk needs a positive current value");
        const double next = std::exp(std::log(v) + scales[uj] * z);
        draw.value[j] = next;
        draw.log_q_ratio += std::log(next) - std::log(v);
        break;
      }
      case Transform::identity:
        draw.value[j] = v + scales[uj] * z;
        break;
      case Transform::grid: {
        if (uj >= prior.components.size() || prior.components[uj].kind != PriorComponent::Kind::grid) {
          throw std::invalid_argument("grid walk needs a grid prior");
        }
        const auto& pts = prior.components[uj].points;
        const int idx = prior.components[uj].grid_index(v);
        if (idx < 0) throw std::invalid_argument("grid walk started off the grid");
        const long next = idx + std::lround(scales[uj] * z);
        draw.value[j] = (next >= 0 && next < static_cast<long>(pts.size()))
                            ? pts[static_cast<std::size_t>(next)]
                            : std::numeric_limits<double>::quiet_NaN();
        break;
      }
    }
  }
  return draw;
}

double ProposalSpec::log_density(const Eigen::VectorXd& from, const Eigen::VectorXd& to,
                                 const PriorSpec& prior) const {
  validate(static_cast<std::size_t>(from.size()));
  double lq = 0.0;
  for (Eigen::Index j = 0; j < from.size(); ++j) {
    const auto uj = static_cast<std::size_t>(j);
    const double s = scales[uj];
    switch (transforms[uj]) {
      case Transform::log:
        if (!(to[j] > 0.0)) return kLogZero;
        lq += log_normal_pdf((std::log(to[j]) - std::log(from[j])) / s) - std::log(s) - std::log(to[j]);
        break;
      case Transform::identity:
        lq += log_normal_pdf((to[j] - from[j]) / s) - std::log(s);
        break;
      case Transform::grid: {
        const auto& c = prior.components.at(uj);
        const int a = c.grid_index(from[j]), b = c.grid_index(to[j]);
        if (a < 0 || b < 0) return kLogZero;
        const double step = b - a;
        lq += std::log(normal_cdf((step + 0.5) / s) - normal_cdf((step - 0.5) / s));
        break;
      }
    }
  }
  return lq;
}

std::vector<double> LevelAdapter::probabilities(const ParameterPoint& theta) const {
  if (support.empty()) throw std::invalid_argument("level adapter support is empty");
  std::vector<double> lw(support.size());
  for (std::size_t k = 0; k < support.size(); ++k) lw[k] = log_weight(theta, support[k]);
  return normalize_log_weights(lw);
}

int LevelAdapter::sample(const ParameterPoint& theta, Rng& rng) const {
  if (support.size() == 1) return support.front();
  const auto probs = probabilities(theta);
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    acc += probs[k];
    if (u < acc) return support[k];
  }
  return support.back();
}

LevelAdapter LevelAdapter::mu_power(std::vector<int> support) {
  return {std::move(support), [](const ParameterPoint& theta, int p) { return p * std::log(theta.mu); },
          [](int p, int m) { return build_level_schedule(m, p); }};
}

LevelAdapter LevelAdapter::migration_power(std::vector<int> support) {
  return {std::move(support),
          [](const ParameterPoint& theta, int p) {
            const double load = theta.mu + (theta.G ? total_migration(*theta.G) : 0.0);
            return std::log(load + 1.0) * std::log(static_cast<double>(p));
          },
          [](int p, int m) { return build_level_schedule(m, p); }};
}

LevelAdapter LevelAdapter::fixed(int p) {
  return {{p}, [](const ParameterPoint&, int) { return 0.0; }, [](int q, int m) { return build_level_schedule(m, q); }};
}

double mh_accept_probability(double log_zhat_new, double log_zhat_old, double log_prior_new, double log_prior_old,
                             double log_q_forward, double log_q_backward) {
  if (is_log_zero(log_zhat_new) || is_log_zero(log_prior_new)) return 0.0;
  if (is_log_zero(log_zhat_old)) throw std::invalid_argument("current state has zero Z-hat");
  const double log_ratio =
      (log_zhat_new - log_zhat_old) + (log_prior_new - log_prior_old) + (log_q_backward - log_q_forward);
  if (std::isnan(log_ratio)) return 0.0;
  return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
}

namespace {

// Fills k, path and Z-hat from a successful run.
ChainState make_state(ParameterPoint theta, Eigen::VectorXd free, std::optional<int> aux, double log_prior,
                      SmcResult&& smc, Rng& rng) {
  ChainState s;
  s.theta = std::move(theta);
  s.free = std::move(free);
  s.aux_p = aux;
  s.log_prior = log_prior;
  s.selected_k = sample_final_index(smc, rng);
  s.path = select_path(smc, s.selected_k);
  s.log_zhat = smc.log_zhat;
  s.smc = std::make_shared<const SmcResult>(std::move(smc));
  return s;
}

StepOutcome propose_and_accept(const ChainState& state, const StoppedProcessModel& model_at_proposal,
                               Eigen::VectorXd free, std::optional<int> aux, double log_prior_new,
                               double log_q_ratio, const LevelSchedule& schedule, int particles, Rng& rng,
                               const SmcOptions& options) {
  auto smc = run_multilevel_smc(model_at_proposal, schedule, particles, rng, options);
  if (!smc.success) return {state, false};
  ChainState candidate = make_state(model_at_proposal.parameters(), std::move(free), aux, log_prior_new,
                                    std::move(smc), rng);
  const double alpha =
      mh_accept_probability(candidate.log_zhat, state.log_zhat, log_prior_new, state.log_prior, 0.0, log_q_ratio);
  if (rng.uniform() < alpha) return {std::move(candidate), true};
  return {state, false};
}

}  // namespace

StepOutcome pimh_step(const ChainState& state, const StoppedProcessModel& model, const LevelSchedule& schedule,
                      int particles, Rng& rng, const SmcOptions& options) {
  return propose_and_accept(state, model, state.free, state.aux_p, state.log_prior, 0.0, schedule, particles, rng,
                            options);
}

StepOutcome pmmh_step(const ChainState& state, const StoppedProcessModel& model, const PriorSpec& prior,
                      const ProposalSpec& proposal, const LevelSchedule& schedule, int particles, Rng& rng,
                      const SmcOptions& options) {
  auto draw = proposal.propose(state.free, prior, rng);
  const double lp = prior.log_density(draw.value);
  if (is_log_zero(lp)) return {state, false};
  const auto moved = model.with_parameters(model.parameters_from_free(draw.value));
  return propose_and_accept(state, *moved, std::move(draw.value), std::nullopt, lp, draw.log_q_ratio, schedule,
                            particles, rng, options);
}

StepOutcome adaptive_pmmh_step(const ChainState& state, const StoppedProcessModel& model, const PriorSpec& prior,
                               const ProposalSpec& proposal, const LevelAdapter& adapter, int particles, Rng& rng,
                               const SmcOptions& options) {
  auto draw = proposal.propose(state.free, prior, rng);
  const double lp = prior.log_density(draw.value);
  if (is_log_zero(lp)) return {state, false};
  const auto moved = model.with_parameters(model.parameters_from_free(draw.value));
  const int p = adapter.sample(moved->parameters(), rng);
  const auto schedule = adapter.builder(p, moved->size());
  return propose_and_accept(state, *moved, std::move(draw.value), p, lp, draw.log_q_ratio, schedule, particles,
                            rng, options);
}

std::vector<std::string> free_parameter_names(const StoppedProcessModel& model) {
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < model.free_parameters().size(); ++j) names.push_back("theta_" + std::to_string(j));
  return names;
}

namespace {

ChainRow make_row(int iteration, const ChainState& s, bool accepted) {
  return {iteration, s.free, s.log_zhat, static_cast<int>(s.smc->schedule.size()), accepted, s.path.total_tau};
}

ChainState initialize(ChainKind kind, const StoppedProcessModel& model, const ChainComponents& c, Rng& rng) {
  for (int attempt = 0; attempt < c.max_init_attempts; ++attempt) {
    Eigen::VectorXd free = model.free_parameters();
    double lp = 0.0;
    std::unique_ptr<StoppedProcessModel> moved;
    if (kind != ChainKind::pimh) {
      free = c.initial ? *c.initial : c.prior.sample(rng);
      lp = c.prior.log_density(free);
      if (is_log_zero(lp)) {
        if (c.initial) throw std::invalid_argument("initial parameter has zero prior density");
        continue;
      }
      moved = model.with_parameters(model.parameters_from_free(free));
    }
    const StoppedProcessModel& at = moved ? *moved : model;

    std::optional<int> aux;
    LevelSchedule schedule;
    if (kind == ChainKind::adaptive) {
      aux = c.adapter->sample(at.parameters(), rng);
      schedule = c.adapter->builder(*aux, at.size());
    } else {
      schedule = *c.schedule;
    }
    auto smc = run_multilevel_smc(at, schedule, c.particles, rng, c.smc);
    if (smc.success) return make_state(at.parameters(), std::move(free), aux, lp, std::move(smc), rng);
  }
  throw InitializationError("initial SMC failed " + std::to_string(c.max_init_attempts) + " times");
}

}  // namespace

ChainRecord run_chain(ChainKind kind, int iterations, const StoppedProcessModel& model,
                      const ChainComponents& c, Rng& rng) {
  if (iterations < 1) throw std::invalid_argument("need at least one iteration");
  if (c.particles < 1) throw std::invalid_argument("need at least one particle");
  if (c.max_init_attempts < 1) throw std::invalid_argument("need at least one initialisation attempt");
  if (kind == ChainKind::adaptive) {
    if (!c.adapter) throw std::invalid_argument("adaptive chain needs a level adapter");
  } else if (!c.schedule) {
    throw std::invalid_argument("chain needs a level schedule");
  }
  if (kind != ChainKind::pimh) {
    const auto dim = static_cast<std::size_t>(model.free_parameters().size());
    if (c.prior.components.size() != dim) throw std::invalid_argument("prior dimension does not match the model");
    c.proposal.validate(dim);
  }

  ChainRecord record;
  record.parameter_names = free_parameter_names(model);
  record.rows.reserve(static_cast<std::size_t>(iterations) + 1);

  ChainState state = initialize(kind, model, c, rng);
  record.rows.push_back(make_row(0, state, true));
  if (c.keep_paths) record.paths.push_back(state.path);

  for (int i = 1; i <= iterations; ++i) {
    StepOutcome out;
    switch (kind) {
      case ChainKind::pimh:
        out = pimh_step(state, model, *c.schedule, c.particles, rng, c.smc);
        break;
      case ChainKind::pmmh:
        out = pmmh_step(state, model, c.prior, c.proposal, *c.schedule, c.particles, rng, c.smc);
        break;
      case ChainKind::adaptive:
        out = adaptive_pmmh_step(state, model, c.prior, c.proposal, *c.adapter, c.particles, rng, c.smc);
        break;
    }
    state = std::move(out.state);
    record.rows.push_back(make_row(i, state, out.accepted));
    if (c.keep_paths) record.paths.push_back(state.path);
  }
  return record;
}

}  // namespace mlpmcmc
