#pragma once

#include "mlpmcmc/smc.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mlpmcmc {

struct InitializationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Prior on one free coordinate.
struct PriorComponent {
  enum class Kind { uniform, gamma, grid };
  Kind kind = Kind::uniform;
  double a = 0.0;              // uniform: lower bound; gamma: shape
  double b = 1.0;              // uniform: upper bound; gamma: scale
  std::vector<double> points;  // grid: support points, uniform mass

  static PriorComponent uniform(double lo, double hi);
  static PriorComponent gamma(double shape, double scale);
  static PriorComponent grid(std::vector<double> points);

  double log_density(double v) const;
  double sample(Rng& rng) const;
  /// Index of v on the grid, or -1.
  int grid_index(double v) const;
  bool operator==(const PriorComponent&) const = default;
};

/// Independent product prior over the free coordinates.
struct PriorSpec {
  std::vector<PriorComponent> components;

  double log_density(const Eigen::VectorXd& v) const;
  Eigen::VectorXd sample(Rng& rng) const;
  bool operator==(const PriorSpec&) const = default;
};

/// Per-coordinate random walk. `log` walks on log v (the q-ratio picks up
/// v'/v), `identity` walks on v, `grid` moves round(scale * N(0,1)) grid
/// points along the prior's grid.
struct ProposalSpec {
  enum class Transform { log, identity, grid };
  std::vector<double> scales;
  std::vector<Transform> transforms;

  struct Draw {
    Eigen::VectorXd value;
    /// log q(v | v') - log q(v' | v).
    double log_q_ratio = 0.0;
  };
  Draw propose(const Eigen::VectorXd& current, const PriorSpec& prior, Rng& rng) const;
  /// log q(to | from) for the continuous transforms (grid: log of the
  /// index-step probability).
  double log_density(const Eigen::VectorXd& from, const Eigen::VectorXd& to, const PriorSpec& prior) const;
  void validate(std::size_t dim) const;
  bool operator==(const ProposalSpec&) const = default;
};

/// Lambda_theta: a law over level counts p and a schedule builder.
struct LevelAdapter {
  std::vector<int> support;
  std::function<double(const ParameterPoint&, int)> log_weight;
  std::function<LevelSchedule(int, int)> builder;

  std::vector<double> probabilities(const ParameterPoint& theta) const;
  /// p ~ Lambda_theta. A single-point support consumes no randomness.
  int sample(const ParameterPoint& theta, Rng& rng) const;

  /// Weights mu^p, coalescent level builder.
  static LevelAdapter mu_power(std::vector<int> support);
  /// Weights p^{log(mu + sum G + 1)}, coalescent level builder.
  static LevelAdapter migration_power(std::vector<int> support);
  static LevelAdapter fixed(int p);
};

struct ChainState {
  ParameterPoint theta;
  Eigen::VectorXd free;
  std::optional<int> aux_p;  // v; absent for fixed-level runs
  int selected_k = 0;
  std::shared_ptr<const SmcResult> smc;
  double log_zhat = kLogZero;
  double log_prior = 0.0;
  Trajectory path;  // lineage of selected_k
};

struct StepOutcome {
  ChainState state;
  bool accepted = false;
};

/// 1 ^ [Z' p(theta') q(theta | theta')] / [Z p(theta) q(theta' | theta)].
double mh_accept_probability(double log_zhat_new, double log_zhat_old, double log_prior_new,
                             double log_prior_old, double log_q_forward, double log_q_backward);

/// Fresh SMC at the state's parameter; accept with 1 ^ Z'/Z.
StepOutcome pimh_step(const ChainState& state, const StoppedProcessModel& model, const LevelSchedule& schedule,
                      int particles, Rng& rng, const SmcOptions& options = {});

/// theta' ~ q(. | theta), SMC at theta', MH accept. A zero prior at theta'
/// rejects without running SMC.
StepOutcome pmmh_step(const ChainState& state, const StoppedProcessModel& model, const PriorSpec& prior,
                      const ProposalSpec& proposal, const LevelSchedule& schedule, int particles, Rng& rng,
                      const SmcOptions& options = {});

/// As pmmh_step with v' ~ Lambda_theta' and the schedule built from v'.
StepOutcome adaptive_pmmh_step(const ChainState& state, const StoppedProcessModel& model, const PriorSpec& prior,
                               const ProposalSpec& proposal, const LevelAdapter& adapter, int particles, Rng& rng,
                               const SmcOptions& options = {});

enum class ChainKind { pimh, pmmh, adaptive };

struct ChainComponents {
  int particles = 16;
  PriorSpec prior;
  ProposalSpec proposal;
  std::optional<LevelSchedule> schedule;  // pimh, pmmh
  std::optional<LevelAdapter> adapter;    // adaptive
  std::optional<Eigen::VectorXd> initial; // free coordinates; drawn from the prior when absent
  int max_init_attempts = 100;
  bool keep_paths = false;
  SmcOptions smc;
};

struct ChainRow {
  int iteration = 0;
  Eigen::VectorXd theta;
  double log_zhat = 0.0;
  int p = 0;
  bool accepted = false;
  int tau = 0;
  bool operator==(const ChainRow& o) const {
    return iteration == o.iteration && theta.size() == o.theta.size() && theta == o.theta &&
           log_zhat == o.log_zhat && p == o.p && accepted == o.accepted && tau == o.tau;
  }
};

struct ChainRecord {
  std::vector<std::string> parameter_names;
  std::vector<ChainRow> rows;
  std::vector<Trajectory> paths;  // filled when keep_paths
  bool operator==(const ChainRecord& o) const {
    return parameter_names == o.parameter_names && rows == o.rows;
  }
};

/// Column names theta_0, theta_1, ... of the free coordinates (mu first,
/// then the upper triangle of G row by row).
std::vector<std::string> free_parameter_names(const StoppedProcessModel& model);

/// Initialises (retrying up to max_init_attempts, redrawing theta from the
/// prior for pmmh/adaptive) and runs K steps. Row 0 is the initial state.
ChainRecord run_chain(ChainKind kind, int iterations, const StoppedProcessModel& model,
                      const ChainComponents& components, Rng& rng);

}  // namespace mlpmcmc
