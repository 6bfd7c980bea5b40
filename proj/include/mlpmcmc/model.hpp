#pragma once

#include "mlpmcmc/rng.hpp"
#include "mlpmcmc/types.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace mlpmcmc {

/// One backward step x -> x_prev together with the forward density
/// P(x | x_prev) and the proposal density M(x_prev | x), both in log space.
struct Move {
  State state;
  double log_forward = kLogZero;
  double log_proposal = kLogZero;
};

/// A stopped Markov process in the reversed frame: paths start at the data y
/// (level m) and are stopped at the first hit of level 2. A model object is
/// bound to one parameter point and is immutable.
class StoppedProcessModel {
 public:
  virtual ~StoppedProcessModel() = default;

  virtual const ParameterPoint& parameters() const = 0;
  /// Start of the backward process (the observed counts).
  virtual const State& observed() const = 0;
  /// Stopping population size m = |y|_1.
  int size() const { return population(observed()); }

  /// Level index of a state; B_n = { x : level(x) = l_n }.
  int level(const State& x) const { return population(x); }
  bool in_level(const State& x, int l) const { return level(x) == l; }

  /// log P(to | from) under the forward process.
  virtual double log_forward_density(const State& from, const State& to) const = 0;

  /// All predecessors of x with positive forward density into x, with the
  /// proposal density filled in (locally normalised over the returned set).
  virtual std::vector<Move> predecessors(const State& x) const = 0;

  /// Draws x_prev ~ M(. | x). Returns nullopt when x has no predecessor.
  virtual std::optional<Move> sample_predecessor(const State& x, Rng& rng) const;

  /// log M(x_prev | x). Throws ModelDegenerateError if x has no predecessor.
  virtual double log_proposal_density(const State& x, const State& x_prev) const;

  /// log of the initial density at the root (level 2).
  virtual double log_initial_density(const State& x) const = 0;

  /// log of the constant attached to the first segment.
  virtual double log_prefactor() const = 0;

  /// Every state with |x|_1 = l (brute-force enumeration for oracles).
  virtual std::vector<State> level_states(int l) const = 0;

  /// Same model at a different parameter point.
  virtual std::unique_ptr<StoppedProcessModel> with_parameters(const ParameterPoint& theta) const = 0;

  /// Free coordinates inferred by PMMH (mu for the coalescent, mu and the
  /// upper triangle of G with migration), and the inverse map.
  virtual Eigen::VectorXd free_parameters() const = 0;
  virtual ParameterPoint parameters_from_free(const Eigen::VectorXd& v) const = 0;
};

/// Deadlines t_n = t_{n-1} + 200 (l_{n-1} - l_n), l_0 = m, t_0 = 0.
std::vector<int> default_deadlines(const std::vector<int>& levels, int m);

/// Schedule with default deadlines.
LevelSchedule make_schedule(std::vector<int> levels, int m);

/// Returns the schedule unchanged if m > l_1 > ... > l_p = 2 and the
/// deadlines are positive and strictly increasing; throws ScheduleError.
const LevelSchedule& validate_level_schedule(const LevelSchedule& schedule, int m);

/// log of the importance weight of segment n (0-based):
/// prod P(x_{l-1}|x_l) / M(x_l|x_{l-1}) over the segment's steps, zero when
/// the level was missed, times the prefactor for n = 0 and the initial
/// density of the endpoint for n = p - 1.
double log_segment_weight(const StoppedProcessModel& model, const PathSegment& segment,
                          std::size_t n, const LevelSchedule& schedule);

/// Propagates from `origin` (at cumulative step `start_tau`) until level
/// `level` is hit or the cumulative step count reaches `deadline`. The
/// returned log weight excludes the prefactor and initial-density terms.
struct Propagation {
  PathSegment segment;
  double log_incremental = kLogZero;
};
Propagation propagate_to_level(const StoppedProcessModel& model, const State& origin,
                               int start_tau, int level, int deadline, Rng& rng);

}  // namespace mlpmcmc
