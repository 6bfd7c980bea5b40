#include "mlpmcmc/migration.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mlpmcmc {
namespace {

// Same operation order as the coalescent so that g = 1, G = 0 reproduces it
// bit for bit.
double split_density(int count, int n, double denom) {
  return (static_cast<double>(count) / n) * ((n - 1) / denom);
}

double mutation_density(int count, int n, double mu, double denom, double r) {
  return (static_cast<double>(count) / n) * (mu / denom) * r;
}

double migration_density(int count, int n, double rate, double denom) {
  return (static_cast<double>(count) / n) * (rate / denom);
}

}  // namespace

double total_migration(const Eigen::MatrixXd& G) {
  double s = 0.0;
  for (Eigen::Index a = 0; a < G.rows(); ++a) {
    for (Eigen::Index b = a + 1; b < G.cols(); ++b) s += G(a, b);
  }
  return s;
}

MigrationModel::MigrationModel(ParameterPoint theta, int groups, State y)
    : theta_(std::move(theta)), g_(groups), y_(std::move(y)) {
  if (g_ < 1) throw ModelError("need at least one group");
  if (!theta_.G) theta_.G = Eigen::MatrixXd::Zero(g_, g_);
  validate_parameters(theta_);
  if (theta_.G->rows() != g_) throw ModelError("migration matrix must be g x g");
  if (y_.size() != g_ * theta_.R.rows()) throw ModelError("y must have g * d entries");
  if ((y_.array() < 0).any()) throw ModelError("y has a negative entry");
  if (y_.sum() < 3) throw ModelError("m = |y| must be at least 3");
  nu_ = stationary_distribution(theta_.R);
  gamma_ = theta_.G->rowwise().sum();
  const int m = size();
  log_prefactor_ = std::log((m - 1) / (m - 1 + theta_.mu)) + log_sampling_factor(y_);
}

double MigrationModel::denominator(int n, Eigen::Index group) const {
  return n - 1 + theta_.mu + gamma_[group];
}

void MigrationModel::check_state(const State& x) const {
  if (x.size() != y_.size()) throw ModelError("state has the wrong length");
  if ((x.array() < 0).any()) throw ModelError("state has a negative count");
}

double MigrationModel::forward_density(const State& from, const State& to) const {
  check_state(from);
  check_state(to);
  const int n = population(from);
  const int m = size();
  if (n < 2 || n > m) throw ModelError("source state outside 2 <= |x| <= m");
  if (population(to) > m) return 0.0;

  const auto d = static_cast<Eigen::Index>(types());
  const double mu = theta_.mu;
  const State diff = to - from;
  const int s = diff.sum();
  const int moved = diff.cwiseAbs().sum();
  if (s == 1) {
    if (moved != 1) return 0.0;
    Eigen::Index k = 0;
    diff.maxCoeff(&k);
    return split_density(from[k], n, denominator(n, k / d));
  }
  if (s != 0) return 0.0;
  if (moved == 0) {
    double self = 0.0;
    for (Eigen::Index k = 0; k < from.size(); ++k) {
      self += mutation_density(from[k], n, mu, denominator(n, k / d), theta_.R(k % d, k % d));
    }
    return self;
  }
  if (moved != 2) return 0.0;
  Eigen::Index src = 0, dst = 0;
  diff.minCoeff(&src);
  diff.maxCoeff(&dst);
  const Eigen::Index alpha = src / d, beta = dst / d, i = src % d, l = dst % d;
  const double denom = denominator(n, alpha);
  if (alpha == beta) return mutation_density(from[src], n, mu, denom, theta_.R(i, l));
  if (i == l) return migration_density(from[src], n, (*theta_.G)(alpha, beta), denom);
  return 0.0;
}

double MigrationModel::log_forward_density(const State& from, const State& to) const {
  return std::log(forward_density(from, to));
}

std::vector<Move> MigrationModel::predecessors(const State& x) const {
  const int n = population(x);
  const int m = size();
  const double mu = theta_.mu;
  const auto d = static_cast<Eigen::Index>(types());
  const auto len = x.size();
  const auto& G = *theta_.G;
  std::vector<Move> out;

  if (n - 1 >= 2) {
    for (Eigen::Index k = 0; k < len; ++k) {
      if (x[k] < 2) continue;
      State xp = x;
      --xp[k];
      const double f = split_density(xp[k], n - 1, denominator(n - 1, k / d));
      if (f > 0.0) out.push_back({std::move(xp), std::log(f), 0.0});
    }
  }
  if (n < m) {
    if (mu > 0.0) {
      double self = 0.0;
      for (Eigen::Index alpha = 0; alpha < g_; ++alpha) {
        const double denom = denominator(n, alpha);
        for (Eigen::Index a = 0; a < d; ++a) {
          const Eigen::Index ka = alpha * d + a;
          self += mutation_density(x[ka], n, mu, denom, theta_.R(a, a));
          for (Eigen::Index b = 0; b < d; ++b) {
            const Eigen::Index kb = alpha * d + b;
            if (a == b || x[kb] < 1) continue;
            State xp = x;
            ++xp[ka];
            --xp[kb];
            const double f = mutation_density(xp[ka], n, mu, denom, theta_.R(a, b));
            if (f > 0.0) out.push_back({std::move(xp), std::log(f), 0.0});
          }
        }
      }
      if (self > 0.0) out.push_back({x, std::log(self), 0.0});
    }
    // Reverse migrations: x = x' - e_{alpha,i} + e_{beta,i}.
    for (Eigen::Index alpha = 0; alpha < g_; ++alpha) {
      for (Eigen::Index beta = 0; beta < g_; ++beta) {
        if (alpha == beta || !(G(alpha, beta) > 0.0)) continue;
        for (Eigen::Index i = 0; i < d; ++i) {
          const Eigen::Index ka = alpha * d + i, kb = beta * d + i;
          if (x[kb] < 1) continue;
          State xp = x;
          ++xp[ka];
          --xp[kb];
          const double f = migration_density(xp[ka], n, G(alpha, beta), denominator(n, alpha));
          if (f > 0.0) out.push_back({std::move(xp), std::log(f), 0.0});
        }
      }
    }
  }

  double total = 0.0;
  for (const auto& mv : out) total += std::exp(mv.log_forward);
  const double log_total = std::log(total);
  for (auto& mv : out) mv.log_proposal = mv.log_forward - log_total;
  return out;
}

double MigrationModel::log_initial_density(const State& x) const {
  if (population(x) != 2) return kLogZero;
  const auto d = static_cast<Eigen::Index>(types());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    if (x[k] == 2) return std::log(nu_[k % d] / g_);
  }
  return kLogZero;
}

std::vector<State> MigrationModel::level_states(int l) const {
  return compositions(l, static_cast<int>(y_.size()));
}

std::unique_ptr<StoppedProcessModel> MigrationModel::with_parameters(const ParameterPoint& theta) const {
  return std::make_unique<MigrationModel>(theta, g_, y_);
}

Eigen::VectorXd MigrationModel::free_parameters() const {
  Eigen::VectorXd v(1 + g_ * (g_ - 1) / 2);
  v[0] = theta_.mu;
  Eigen::Index k = 1;
  for (Eigen::Index a = 0; a < g_; ++a) {
    for (Eigen::Index b = a + 1; b < g_; ++b) v[k++] = (*theta_.G)(a, b);
  }
  return v;
}

ParameterPoint MigrationModel::parameters_from_free(const Eigen::VectorXd& v) const {
  if (v.size() != 1 + g_ * (g_ - 1) / 2) throw ModelError("wrong number of free parameters");
  ParameterPoint p = theta_;
  p.mu = v[0];
  Eigen::Index k = 1;
  for (Eigen::Index a = 0; a < g_; ++a) {
    for (Eigen::Index b = a + 1; b < g_; ++b) {
      (*p.G)(a, b) = v[k];
      (*p.G)(b, a) = v[k];
      ++k;
    }
  }
  return p;
}

double forward_transition_density_mig(const ParameterPoint& theta, int groups, int m,
                                      const State& x_prev, const State& x_next) {
  State y = State::Zero(groups * theta.R.rows());
  y[0] = m;
  return MigrationModel(theta, groups, y).forward_density(x_prev, x_next);
}

std::pair<State, double> backward_proposal_mig(const MigrationModel& model, const State& x, Rng& rng) {
  return backward_proposal_sample(model, x, rng);
}

double backward_proposal_density_mig(const MigrationModel& model, const State& x, const State& x_prev) {
  return backward_proposal_density(model, x, x_prev);
}

std::vector<double> level_count_probabilities_mig(const ParameterPoint& theta, std::span<const int> support) {
  if (support.empty()) throw std::invalid_argument("level-count support is empty");
  const double load = theta.mu + (theta.G ? total_migration(*theta.G) : 0.0);
  if (!(load >= 0.0)) throw std::invalid_argument("mu + sum G must be non-negative");
  const double exponent = std::log(load + 1.0);
  std::vector<double> lw(support.size());
  for (std::size_t k = 0; k < support.size(); ++k) lw[k] = exponent * std::log(static_cast<double>(support[k]));
  const double mx = *std::max_element(lw.begin(), lw.end());
  double total = 0.0;
  for (auto& w : lw) total += (w = std::exp(w - mx));
  for (auto& w : lw) w /= total;
  return lw;
}

int sample_level_count_mig(const ParameterPoint& theta, std::span<const int> support, Rng& rng) {
  const auto probs = level_count_probabilities_mig(theta, support);
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    acc += probs[k];
    if (u < acc) return support[k];
  }
  return support.back();
}

}  // namespace mlpmcmc
