#pragma once

#include "mlpmcmc/model.hpp"

#include <map>
#include <vector>

// Exact small-instance oracles. They only use the model's forward density,
// initial density and level enumeration; predecessor sets are rebuilt by
// brute force so the oracles stay independent of the proposal code.
namespace mlpmcmc::oracle {

using StateMap = std::map<State, double, StateLess>;

/// Largest level population the brute-force oracles accept.
struct Limits {
  int max_states_per_level = 200;
};

/// H(x): total weight prod P(x_{j-1}|x_j) * initial(x_end) of all backward
/// paths from x to their first hit of level 2, for every state on levels
/// 2..m-1 and for y. Same-level moves are resolved with one dense linear
/// solve per level.
StateMap remaining_path_weight(const StoppedProcessModel& model, Limits limits = {});

/// prefactor * H(y).
double backward_normalizer(const StoppedProcessModel& model, Limits limits = {});

/// exp(log_data_factor) * sum_{|x|=2} initial(x) h(x), where h(x) is the
/// probability that the forward process started at x is absorbed at y.
double forward_marginal(const StoppedProcessModel& model, double log_data_factor,
                        Limits limits = {});

/// Posterior law of the total backward step count tau under the multi-level
/// target, by enumeration over step counts. Enumeration stops once the exact
/// remaining mass (alive weight times H) falls below `tail_tolerance` times
/// the total.
struct TauPosterior {
  std::vector<double> probability;  // index = tau
  double tail_mass = 0.0;           // relative mass beyond the last index
};
TauPosterior tau_posterior(const StoppedProcessModel& model, double tail_tolerance = 1e-10,
                           Limits limits = {});

}  // namespace mlpmcmc::oracle
