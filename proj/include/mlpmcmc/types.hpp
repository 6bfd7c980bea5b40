#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mlpmcmc {

/// Type counts of the population (length d for the coalescent, g*d with migration).
using State = Eigen::VectorXi;

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

inline bool is_log_zero(double lw) { return !(lw > kLogZero); }

/// Strict weak order on states, used as a key for enumeration maps.
struct StateLess {
  bool operator()(const State& a, const State& b) const {
    if (a.size() != b.size()) return a.size() < b.size();
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      if (a[i] != b[i]) return a[i] < b[i];
    }
    return false;
  }
};

inline bool same_state(const State& a, const State& b) {
  return a.size() == b.size() && a == b;
}

inline int population(const State& x) { return x.sum(); }

// Errors. All derive from the standard hierarchy so callers can catch broadly.
struct ScheduleError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ModelError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ModelDegenerateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ResampleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoPathError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct OracleSizeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Model parameter: mutation rate, mutation matrix and (for the migration
/// model) a symmetric migration matrix with zero diagonal.
struct ParameterPoint {
  double mu = 0.0;
  Eigen::MatrixXd R;
  std::optional<Eigen::MatrixXd> G;

  bool operator==(const ParameterPoint& o) const {
    if (mu != o.mu || R.rows() != o.R.rows() || R.cols() != o.R.cols() || R != o.R) return false;
    if (G.has_value() != o.G.has_value()) return false;
    if (G && (G->rows() != o.G->rows() || *G != *o.G)) return false;
    return true;
  }
};

/// Throws ModelError unless mu >= 0, R is square row-stochastic with
/// non-negative entries and G (if present) is symmetric, non-negative,
/// zero on the diagonal.
void validate_parameters(const ParameterPoint& theta);

/// Piece of a backward path between two level hits.
///
/// `origin` is the last state of the previous segment (or the data y for the
/// first one); `states` are the states visited strictly after it, the last of
/// which lies in B_n when `hit` is true. `tau` is the cumulative step count at
/// the level hit (or at the deadline when the level was missed).
struct PathSegment {
  State origin;
  std::vector<State> states;
  int tau = 0;
  bool hit = false;

  const State& last() const { return states.empty() ? origin : states.back(); }
  bool operator==(const PathSegment&) const = default;
};

struct Trajectory {
  std::vector<PathSegment> segments;
  int total_tau = 0;

  /// Full state sequence y = x_0, x_1, ..., x_tau.
  std::vector<State> states() const;
};

struct LevelSchedule {
  std::vector<int> levels;     // l_1 > ... > l_p = 2
  std::vector<int> deadlines;  // t_1 < ... < t_p, cumulative step caps

  std::size_t size() const { return levels.size(); }
  bool operator==(const LevelSchedule&) const = default;
};

}  // namespace mlpmcmc
