#pragma once

#include "mlpmcmc/coalescent.hpp"

namespace mlpmcmc {

/// Coalescent with migration between g sub-groups. The state is the
/// concatenation of g blocks of d type counts; entry (alpha, i) lives at
/// alpha * d + i.
///
/// Forward moves from x with n = |x|: pick an individual (alpha, i) with
/// probability x_{alpha,i} / n, then with D_alpha = n - 1 + mu + gamma_alpha
/// and gamma_alpha = sum_beta G_{alpha beta}:
///   split              (n - 1) / D_alpha
///   mutation i -> l    mu r_il / D_alpha
///   migration -> beta  G_{alpha beta} / D_alpha
class MigrationModel final : public StoppedProcessModel {
 public:
  MigrationModel(ParameterPoint theta, int groups, State y);

  int groups() const { return g_; }
  int types() const { return static_cast<int>(theta_.R.rows()); }
  const Eigen::VectorXd& initial_weights() const { return nu_; }

  const ParameterPoint& parameters() const override { return theta_; }
  const State& observed() const override { return y_; }

  double forward_density(const State& from, const State& to) const;
  double log_forward_density(const State& from, const State& to) const override;

  std::vector<Move> predecessors(const State& x) const override;
  double log_initial_density(const State& x) const override;
  double log_prefactor() const override { return log_prefactor_; }
  std::vector<State> level_states(int l) const override;

  std::unique_ptr<StoppedProcessModel> with_parameters(const ParameterPoint& theta) const override;
  /// (mu, G_01, G_02, ..., G_{g-2,g-1}).
  Eigen::VectorXd free_parameters() const override;
  ParameterPoint parameters_from_free(const Eigen::VectorXd& v) const override;

 private:
  void check_state(const State& x) const;
  double denominator(int n, Eigen::Index group) const;

  ParameterPoint theta_;
  int g_ = 1;
  State y_;
  Eigen::VectorXd nu_;
  Eigen::VectorXd gamma_;
  double log_prefactor_ = 0.0;
};

/// Forward density of the migration model.
double forward_transition_density_mig(const ParameterPoint& theta, int groups, int m,
                                      const State& x_prev, const State& x_next);

/// Draws x_prev from the locally normalised reverse kernel (reverse splits,
/// mutations and migrations). Throws ModelDegenerateError on an empty set.
std::pair<State, double> backward_proposal_mig(const MigrationModel& model, const State& x, Rng& rng);

/// Density twin of backward_proposal_mig.
double backward_proposal_density_mig(const MigrationModel& model, const State& x, const State& x_prev);

/// Sum of the strict upper triangle of G.
double total_migration(const Eigen::MatrixXd& G);

/// Probabilities proportional to p^{log(mu + sum_{i>j} G_ij + 1)}.
std::vector<double> level_count_probabilities_mig(const ParameterPoint& theta, std::span<const int> support);

int sample_level_count_mig(const ParameterPoint& theta, std::span<const int> support, Rng& rng);

/// Default support {10, 20, 33}.
inline constexpr int kMigrationLevelSupport[] = {10, 20, 33};

}  // namespace mlpmcmc
