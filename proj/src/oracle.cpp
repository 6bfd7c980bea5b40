#include "mlpmcmc/oracle.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace mlpmcmc::oracle {
namespace {

double forward(const StoppedProcessModel& model, const State& from, const State& to) {
  return std::exp(model.log_forward_density(from, to));
}

std::vector<State> level(const StoppedProcessModel& model, int l, const Limits& limits) {
  auto states = model.level_states(l);
  if (static_cast<int>(states.size()) > limits.max_states_per_level) {
    throw OracleSizeError("level " + std::to_string(l) + " has " + std::to_string(states.size()) +
                          " states; too large for the exact oracle");
  }
  return states;
}

// Brute-force predecessors: every state on the same level (below m) and on
// the level below with positive forward density into x.
std::vector<std::pair<State, double>> brute_predecessors(const StoppedProcessModel& model,
                                                         const State& x,
                                                         const std::map<int, std::vector<State>>& levels) {
  std::vector<std::pair<State, double>> out;
  const int l = model.level(x);
  const int m = model.size();
  auto scan = [&](int lv) {
    auto it = levels.find(lv);
    if (it == levels.end()) return;
    for (const auto& xp : it->second) {
      const double f = forward(model, xp, x);
      if (f > 0.0) out.emplace_back(xp, f);
    }
  };
  if (l < m) scan(l);
  if (l - 1 >= 2) scan(l - 1);
  return out;
}

}  // namespace

StateMap remaining_path_weight(const StoppedProcessModel& model, Limits limits) {
  const int m = model.size();
  StateMap H;
  std::vector<State> below = level(model, 2, limits);
  for (const auto& x : below) H[x] = std::exp(model.log_initial_density(x));

  for (int n = 3; n < m; ++n) {
    const auto states = level(model, n, limits);
    const auto k = static_cast<Eigen::Index>(states.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(k, k);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = 0; j < k; ++j) A(i, j) -= forward(model, states[j], states[i]);
      for (const auto& xp : below) rhs[i] += forward(model, xp, states[i]) * H.at(xp);
    }
    const Eigen::VectorXd h = A.partialPivLu().solve(rhs);
    for (Eigen::Index i = 0; i < k; ++i) H[states[i]] = h[i];
    below = states;
  }

  const State& y = model.observed();
  double hy = 0.0;
  for (const auto& xp : below) hy += forward(model, xp, y) * H.at(xp);
  H[y] = hy;
  return H;
}

double backward_normalizer(const StoppedProcessModel& model, Limits limits) {
  const auto H = remaining_path_weight(model, limits);
  return std::exp(model.log_prefactor()) * H.at(model.observed());
}

double forward_marginal(const StoppedProcessModel& model, double log_data_factor, Limits limits) {
  const int m = model.size();
  const State& y = model.observed();
  std::vector<State> above = level(model, m, limits);
  Eigen::VectorXd h_above(static_cast<Eigen::Index>(above.size()));
  for (std::size_t i = 0; i < above.size(); ++i) h_above[static_cast<Eigen::Index>(i)] = same_state(above[i], y) ? 1.0 : 0.0;

  for (int n = m - 1; n >= 2; --n) {
    const auto states = level(model, n, limits);
    const auto k = static_cast<Eigen::Index>(states.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(k, k);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = 0; j < k; ++j) A(i, j) -= forward(model, states[i], states[j]);
      for (std::size_t a = 0; a < above.size(); ++a) {
        rhs[i] += forward(model, states[i], above[a]) * h_above[static_cast<Eigen::Index>(a)];
      }
    }
    h_above = A.partialPivLu().solve(rhs);
    above = states;
  }

  double z = 0.0;
  for (std::size_t i = 0; i < above.size(); ++i) {
    const double nu = std::exp(model.log_initial_density(above[i]));
    z += nu * h_above[static_cast<Eigen::Index>(i)];
  }
  return std::exp(log_data_factor) * z;
}

TauPosterior tau_posterior(const StoppedProcessModel& model, double tail_tolerance, Limits limits) {
  const int m = model.size();
  const auto H = remaining_path_weight(model, limits);
  const double total = H.at(model.observed());
  TauPosterior out;
  if (!(total > 0.0)) return out;

  std::map<int, std::vector<State>> levels;
  for (int l = 2; l <= m; ++l) levels[l] = level(model, l, limits);
  std::map<State, std::vector<std::pair<State, double>>, StateLess> preds;
  auto preds_of = [&](const State& x) -> const std::vector<std::pair<State, double>>& {
    auto it = preds.find(x);
    if (it == preds.end()) it = preds.emplace(x, brute_predecessors(model, x, levels)).first;
    return it->second;
  };

  StateMap alive{{model.observed(), 1.0}};
  out.probability.push_back(0.0);
  double tail = total;
  while (!alive.empty() && tail > tail_tolerance * total) {
    StateMap next;
    double stopped = 0.0;
    for (const auto& [x, w] : alive) {
      for (const auto& [xp, f] : preds_of(x)) {
        if (model.level(xp) == 2) {
          stopped += w * f * std::exp(model.log_initial_density(xp));
        } else {
          next[xp] += w * f;
        }
      }
    }
    out.probability.push_back(stopped / total);
    tail = 0.0;
    for (const auto& [x, w] : next) tail += w * H.at(x);
    alive = std::move(next);
  }
  out.tail_mass = tail / total;
  return out;
}

}  // namespace mlpmcmc::oracle
