#pragma once

#include "mlpmcmc/model.hpp"

#include <span>
#include <utility>
#include <vector>

namespace mlpmcmc {

/// Stationary law of a row-stochastic matrix. Throws ModelError when the
/// stationary distribution is not unique (more than one closed class).
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& R);

/// All count vectors of `parts` non-negative entries summing to `total`, in
/// lexicographic order.
std::vector<State> compositions(int total, int parts);

/// log(prod_i y_i! / m!).
double log_sampling_factor(const State& y);

/// Coalescent with mutation, reversed in time: starts at the data y and
/// proposes predecessors with the locally normalised reverse kernel
/// M(x_prev | x) proportional to P(x | x_prev).
class CoalescentModel final : public StoppedProcessModel {
 public:
  CoalescentModel(ParameterPoint theta, State y);

  int types() const { return static_cast<int>(theta_.R.rows()); }
  const Eigen::VectorXd& initial_weights() const { return nu_; }

  const ParameterPoint& parameters() const override { return theta_; }
  const State& observed() const override { return y_; }

  /// P(to | from): split and mutation moves.
  double forward_density(const State& from, const State& to) const;
  double log_forward_density(const State& from, const State& to) const override;

  std::vector<Move> predecessors(const State& x) const override;
  double log_initial_density(const State& x) const override;
  double log_prefactor() const override { return log_prefactor_; }
  std::vector<State> level_states(int l) const override;

  std::unique_ptr<StoppedProcessModel> with_parameters(const ParameterPoint& theta) const override;
  Eigen::VectorXd free_parameters() const override;
  ParameterPoint parameters_from_free(const Eigen::VectorXd& v) const override;

 private:
  void check_state(const State& x) const;

  ParameterPoint theta_;
  State y_;
  Eigen::VectorXd nu_;
  double log_prefactor_ = 0.0;
};

/// Forward transition density for the coalescent at parameter theta with
/// stopping size m. Throws ModelError on malformed states.
double forward_transition_density(const ParameterPoint& theta, int m, const State& x_prev,
                                  const State& x_next);

/// Predecessors of x with their forward density into x. Predecessors at level
/// m are never returned; from level m only reverse splits qualify.
std::vector<std::pair<State, double>> valid_predecessors(const StoppedProcessModel& model,
                                                         const State& x);

/// M(x_prev | x). Throws ModelDegenerateError if x has no predecessor.
double backward_proposal_density(const StoppedProcessModel& model, const State& x,
                                 const State& x_prev);

/// Draws from M(. | x); returns (x_prev, density). Throws ModelDegenerateError
/// if x has no predecessor.
std::pair<State, double> backward_proposal_sample(const StoppedProcessModel& model, const State& x,
                                                  Rng& rng);

/// Linear-scale segment weight (see log_segment_weight).
double segment_weight(const StoppedProcessModel& model, const PathSegment& segment, std::size_t n,
                      const LevelSchedule& schedule);

/// Exact normalising constant of the backward multi-level target for small
/// instances (d <= 3, m <= 8). Solves one linear system per level.
double exact_normalizer_backward(const CoalescentModel& model);

/// Exact forward marginal likelihood prod y! / m! * sum_i nu_i h(2 e_i),
/// solved level by level from m down to 2 (d <= 3, m <= 8).
double exact_marginal_forward(const CoalescentModel& model);

/// Almost equally spaced levels l_n = round(m - n (m - 2) / p), l_p = 2,
/// with default deadlines. Requires 1 <= p <= m - 2.
LevelSchedule build_level_schedule(int m, int p);

/// Probabilities proportional to mu^p over the support.
std::vector<double> level_count_probabilities(double mu, std::span<const int> support);

/// Draws p with probability mu^p / sum_{p'} mu^{p'}. Throws for mu <= 0.
int sample_level_count(double mu, std::span<const int> support, Rng& rng);

}  // namespace mlpmcmc
