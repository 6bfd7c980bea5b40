#pragma once

#include "mlpmcmc/model.hpp"

#include <span>
#include <vector>

namespace mlpmcmc {

/// Simulated segments and weights of one multi-level SMC run.
/// Column n holds level n (0-based), row i particle i.
struct ParticleCloud {
  std::vector<std::vector<PathSegment>> columns;  // columns[n][i]
  Eigen::MatrixXd log_weights;                    // N x p, -inf marks a zero weight
  Eigen::MatrixXd norm_weights;                   // N x p, columns sum to 1

  int particles() const { return static_cast<int>(log_weights.rows()); }
  int levels() const { return static_cast<int>(log_weights.cols()); }
  const PathSegment& segment(int i, int n) const { return columns[static_cast<std::size_t>(n)][static_cast<std::size_t>(i)]; }
};

/// ancestors(i, n): index of the level-n particle that particle i of level
/// n + 1 descends from. N x (p - 1).
struct AncestryMatrix {
  Eigen::MatrixXi ancestors;
};

struct SmcResult {
  ParticleCloud cloud;
  AncestryMatrix ancestry;
  double log_zhat = kLogZero;  // kLogZero on failure (Z-hat = 0)
  bool success = false;
  LevelSchedule schedule;
  /// Level at which all weights vanished, or -1.
  int failed_level = -1;
};

struct SmcOptions {
  /// Worker threads for particle propagation; 0 reads MLPMCMC_THREADS
  /// (unset or 0 = hardware concurrency).
  unsigned threads = 0;
};

/// Thread count resolved from MLPMCMC_THREADS.
unsigned default_thread_count();

struct NormalizedWeights {
  Eigen::VectorXd weights;
  double log_mean = kLogZero;  // log(N^-1 sum_j W_j)
  bool degenerate = true;      // all weights zero
};

/// W_i / sum_j W_j from log weights, with a max-shifted log-mean. The sum is
/// taken in sorted order so the result does not depend on particle order.
NormalizedWeights normalize_weights(std::span<const double> log_weights);
NormalizedWeights normalize_weights(const Eigen::VectorXd& log_weights);

/// N independent draws from the categorical law `weights` (0-based indices).
/// Throws ResampleError on an all-zero vector.
std::vector<int> multinomial_resample(const Eigen::VectorXd& weights, int n, Rng& rng);
inline std::vector<int> multinomial_resample(const Eigen::VectorXd& weights, Rng& rng) {
  return multinomial_resample(weights, static_cast<int>(weights.size()), rng);
}

/// Multi-level SMC: per level, resample ancestors from the previous level's
/// weights (from the second level on), propagate every particle until it hits
/// the level or its deadline, and weight by the segment weight. A level whose
/// weights all vanish ends the run with success = false.
SmcResult run_multilevel_smc(const StoppedProcessModel& model, const LevelSchedule& schedule, int particles,
                             Rng& rng, const SmcOptions& options = {});

/// sum_n log(N^-1 sum_j W_n^j); kLogZero if any column is all zero.
double estimate_normalizing_constant(const ParticleCloud& cloud);

/// Lineage b_0..b_{p-1} of final particle k: b_{p-1} = k,
/// b_n = ancestors(b_{n+1}, n). Throws std::out_of_range for a bad k.
std::vector<int> trace_ancestry(const AncestryMatrix& ancestry, int k, int p);

/// Concatenation of the segments along the lineage of k. Throws NoPathError
/// when the run failed.
Trajectory select_path(const SmcResult& result, int k);

/// k ~ normalised final-level weights.
int sample_final_index(const SmcResult& result, Rng& rng);

}  // namespace mlpmcmc
