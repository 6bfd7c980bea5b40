#include "mlpmcmc/coalescent.hpp"

#include "mlpmcmc/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mlpmcmc {
namespace {

double split_density(int count, int n, double mu) {
  return (static_cast<double>(count) / n) * ((n - 1) / (n - 1 + mu));
}

double mutation_density(int count, int n, double mu, double r) {
  return (static_cast<double>(count) / n) * (mu / (n - 1 + mu)) * r;
}

void check_oracle_size(const CoalescentModel& model) {
  if (model.types() > 3 || model.size() > 8) {
    throw OracleSizeError("exact oracles require d <= 3 and m <= 8");
  }
}

void fill_compositions(int total, int parts, State& cur, int pos, std::vector<State>& out) {
  if (pos == parts - 1) {
    cur[pos] = total;
    out.push_back(cur);
    return;
  }
  for (int k = 0; k <= total; ++k) {
    cur[pos] = k;
    fill_compositions(total - k, parts, cur, pos + 1, out);
  }
}

}  // namespace

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& R) {
  const auto d = R.rows();
  if (d == 0 || R.cols() != d) throw ModelError("mutation matrix must be square and non-empty");
  const Eigen::MatrixXd A = R.transpose() - Eigen::MatrixXd::Identity(d, d);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  lu.setThreshold(1e-12);
  if (lu.rank() != d - 1) {
    throw ModelError("mutation matrix has no unique stationary distribution");
  }
  Eigen::MatrixXd M = A;
  M.row(d - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
  rhs[d - 1] = 1.0;
  Eigen::VectorXd nu = M.fullPivLu().solve(rhs);
  // Clamp round-off below zero; the solution is a probability vector.
  nu = nu.cwiseMax(0.0);
  return nu / nu.sum();
}

std::vector<State> compositions(int total, int parts) {
  std::vector<State> out;
  if (parts <= 0 || total < 0) return out;
  State cur = State::Zero(parts);
  fill_compositions(total, parts, cur, 0, out);
  return out;
}

double log_sampling_factor(const State& y) {
  double s = -std::lgamma(static_cast<double>(y.sum()) + 1.0);
  for (Eigen::Index i = 0; i < y.size(); ++i) s += std::lgamma(static_cast<double>(y[i]) + 1.0);
  return s;
}

CoalescentModel::CoalescentModel(ParameterPoint theta, State y) : theta_(std::move(theta)), y_(std::move(y)) {
  validate_parameters(theta_);
  if (theta_.G) throw ModelError("the coalescent model takes no migration matrix");
  if (y_.size() != theta_.R.rows()) throw ModelError("y must have one entry per type");
  if ((y_.array() < 0).any()) throw ModelError("y has a negative entry");
  if (y_.sum() < 3) throw ModelError("m = |y| must be at least 3");
  nu_ = stationary_distribution(theta_.R);
  const int m = size();
  log_prefactor_ = std::log((m - 1) / (m - 1 + theta_.mu)) + log_sampling_factor(y_);
}

void CoalescentModel::check_state(const State& x) const {
  if (x.size() != y_.size()) throw ModelError("state has the wrong number of types");
  if ((x.array() < 0).any()) throw ModelError("state has a negative count");
}

double CoalescentModel::forward_density(const State& from, const State& to) const {
  check_state(from);
  check_state(to);
  const int n = population(from);
  const int m = size();
  if (n < 2 || n > m) throw ModelError("source state outside 2 <= |x| <= m");
  if (population(to) > m) return 0.0;

  const State diff = to - from;
  const int s = diff.sum();
  const double mu = theta_.mu;
  if (s == 1) {
    for (Eigen::Index i = 0; i < diff.size(); ++i) {
      if (diff[i] == 1) {
        return (diff.cwiseAbs().sum() == 1) ? split_density(from[i], n, mu) : 0.0;
      }
    }
    return 0.0;
  }
  if (s != 0) return 0.0;
  const int moved = diff.cwiseAbs().sum();
  if (moved == 0) {
    double self = 0.0;
    for (Eigen::Index a = 0; a < from.size(); ++a) self += mutation_density(from[a], n, mu, theta_.R(a, a));
    return self;
  }
  if (moved != 2) return 0.0;
  Eigen::Index i = 0, l = 0;
  diff.minCoeff(&i);
  diff.maxCoeff(&l);
  return mutation_density(from[i], n, mu, theta_.R(i, l));
}

double CoalescentModel::log_forward_density(const State& from, const State& to) const {
  return std::log(forward_density(from, to));
}

std::vector<Move> CoalescentModel::predecessors(const State& x) const {
  const int n = population(x);
  const int m = size();
  const double mu = theta_.mu;
  const auto d = x.size();
  std::vector<Move> out;

  if (n - 1 >= 2) {
    for (Eigen::Index i = 0; i < d; ++i) {
      if (x[i] < 2) continue;
      State xp = x;
      --xp[i];
      const double f = split_density(xp[i], n - 1, mu);
      if (f > 0.0) out.push_back({std::move(xp), std::log(f), 0.0});
    }
  }
  if (n < m && mu > 0.0) {
    double self = 0.0;
    for (Eigen::Index a = 0; a < d; ++a) {
      self += mutation_density(x[a], n, mu, theta_.R(a, a));
      for (Eigen::Index b = 0; b < d; ++b) {
        if (a == b || x[b] < 1) continue;
        State xp = x;
        ++xp[a];
        --xp[b];
        const double f = mutation_density(xp[a], n, mu, theta_.R(a, b));
        if (f > 0.0) out.push_back({std::move(xp), std::log(f), 0.0});
      }
    }
    if (self > 0.0) out.push_back({x, std::log(self), 0.0});
  }

  double total = 0.0;
  for (const auto& mv : out) total += std::exp(mv.log_forward);
  const double log_total = std::log(total);
  for (auto& mv : out) mv.log_proposal = mv.log_forward - log_total;
  return out;
}

double CoalescentModel::log_initial_density(const State& x) const {
  if (population(x) != 2) return kLogZero;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x[i] == 2) return std::log(nu_[i]);
  }
  return kLogZero;
}

std::vector<State> CoalescentModel::level_states(int l) const { return compositions(l, types()); }

std::unique_ptr<StoppedProcessModel> CoalescentModel::with_parameters(const ParameterPoint& theta) const {
  return std::make_unique<CoalescentModel>(theta, y_);
}

Eigen::VectorXd CoalescentModel::free_parameters() const {
  Eigen::VectorXd v(1);
  v[0] = theta_.mu;
  return v;
}

ParameterPoint CoalescentModel::parameters_from_free(const Eigen::VectorXd& v) const {
  if (v.size() != 1) throw ModelError("the coalescent model has one free parameter (mu)");
  ParameterPoint p = theta_;
  p.mu = v[0];
  return p;
}

double forward_transition_density(const ParameterPoint& theta, int m, const State& x_prev,
                                  const State& x_next) {
  // y only fixes d and m here; any composition of m works.
  State y = State::Zero(theta.R.rows());
  y[0] = m;
  return CoalescentModel(theta, y).forward_density(x_prev, x_next);
}

std::vector<std::pair<State, double>> valid_predecessors(const StoppedProcessModel& model,
                                                         const State& x) {
  std::vector<std::pair<State, double>> out;
  for (auto& mv : model.predecessors(x)) out.emplace_back(std::move(mv.state), std::exp(mv.log_forward));
  return out;
}

double backward_proposal_density(const StoppedProcessModel& model, const State& x,
                                 const State& x_prev) {
  return std::exp(model.log_proposal_density(x, x_prev));
}

std::pair<State, double> backward_proposal_sample(const StoppedProcessModel& model, const State& x,
                                                  Rng& rng) {
  auto mv = model.sample_predecessor(x, rng);
  if (!mv) throw ModelDegenerateError("state has no valid predecessor");
  return {std::move(mv->state), std::exp(mv->log_proposal)};
}

double segment_weight(const StoppedProcessModel& model, const PathSegment& segment, std::size_t n,
                      const LevelSchedule& schedule) {
  return std::exp(log_segment_weight(model, segment, n, schedule));
}

double exact_normalizer_backward(const CoalescentModel& model) {
  check_oracle_size(model);
  return oracle::backward_normalizer(model);
}

double exact_marginal_forward(const CoalescentModel& model) {
  check_oracle_size(model);
  return oracle::forward_marginal(model, log_sampling_factor(model.observed()));
}

LevelSchedule build_level_schedule(int m, int p) {
  if (p < 1 || p > m - 2) {
    throw ScheduleError("level count p = " + std::to_string(p) + " outside 1.." + std::to_string(m - 2));
  }
  std::vector<int> levels;
  for (int n = 1; n <= p; ++n) {
    const double raw = m - static_cast<double>(n * (m - 2)) / p;
    const int l = (n == p) ? 2 : static_cast<int>(std::lround(raw));
    if (levels.empty() || l < levels.back()) levels.push_back(l);
  }
  if (levels.back() != 2) levels.push_back(2);
  auto schedule = make_schedule(std::move(levels), m);
  validate_level_schedule(schedule, m);
  return schedule;
}

std::vector<double> level_count_probabilities(double mu, std::span<const int> support) {
  if (support.empty()) throw std::invalid_argument("level-count support is empty");
  if (!(mu > 0.0)) throw std::invalid_argument("mu^p weights need mu > 0");
  std::vector<double> lw(support.size());
  for (std::size_t k = 0; k < support.size(); ++k) lw[k] = support[k] * std::log(mu);
  const double mx = *std::max_element(lw.begin(), lw.end());
  double total = 0.0;
  for (auto& w : lw) total += (w = std::exp(w - mx));
  for (auto& w : lw) w /= total;
  return lw;
}

int sample_level_count(double mu, std::span<const int> support, Rng& rng) {
  const auto probs = level_count_probabilities(mu, support);
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    acc += probs[k];
    if (u < acc) return support[k];
  }
  return support.back();
}

}  // namespace mlpmcmc
