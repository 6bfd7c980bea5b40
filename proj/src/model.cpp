#include "mlpmcmc/model.hpp"

#include <cmath>
#include <string>

namespace mlpmcmc {

void validate_parameters(const ParameterPoint& theta) {
  if (!(theta.mu >= 0.0) || !std::isfinite(theta.mu)) {
    throw ModelError("mutation rate must be finite and non-negative");
  }
  const auto& R = theta.R;
  if (R.rows() == 0 || R.rows() != R.cols()) throw ModelError("mutation matrix must be square and non-empty");
  for (Eigen::Index i = 0; i < R.rows(); ++i) {
    if ((R.row(i).array() < 0.0).any()) throw ModelError("mutation matrix has a negative entry");
    if (std::abs(R.row(i).sum() - 1.0) > 1e-12) {
      throw ModelError("mutation matrix row " + std::to_string(i) + " does not sum to 1");
    }
  }
  if (theta.G) {
    const auto& G = *theta.G;
    if (G.rows() != G.cols()) throw ModelError("migration matrix must be square");
    for (Eigen::Index a = 0; a < G.rows(); ++a) {
      if (G(a, a) != 0.0) throw ModelError("migration matrix must have a zero diagonal");
      for (Eigen::Index b = 0; b < G.cols(); ++b) {
        if (!(G(a, b) >= 0.0)) throw ModelError("migration matrix has a negative entry");
        if (G(a, b) != G(b, a)) throw ModelError("migration matrix must be symmetric");
      }
    }
  }
}

std::vector<State> Trajectory::states() const {
  std::vector<State> out;
  if (segments.empty()) return out;
  out.push_back(segments.front().origin);
  for (const auto& seg : segments) out.insert(out.end(), seg.states.begin(), seg.states.end());
  return out;
}

std::optional<Move> StoppedProcessModel::sample_predecessor(const State& x, Rng& rng) const {
  auto moves = predecessors(x);
  if (moves.empty()) return std::nullopt;
  double total = 0.0;
  for (const auto& mv : moves) total += std::exp(mv.log_forward);
  const double u = rng.uniform() * total;
  double acc = 0.0;
  for (auto& mv : moves) {
    acc += std::exp(mv.log_forward);
    if (u < acc) return std::move(mv);
  }
  return std::move(moves.back());
}

double StoppedProcessModel::log_proposal_density(const State& x, const State& x_prev) const {
  const auto moves = predecessors(x);
  if (moves.empty()) throw ModelDegenerateError("state has no valid predecessor");
  for (const auto& mv : moves) {
    if (same_state(mv.state, x_prev)) return mv.log_proposal;
  }
  return kLogZero;
}

std::vector<int> default_deadlines(const std::vector<int>& levels, int m) {
  std::vector<int> out;
  out.reserve(levels.size());
  int prev_level = m;
  int t = 0;
  for (int l : levels) {
    t += 200 * (prev_level - l);
    out.push_back(t);
    prev_level = l;
  }
  return out;
}

LevelSchedule make_schedule(std::vector<int> levels, int m) {
  LevelSchedule s;
  s.deadlines = default_deadlines(levels, m);
  s.levels = std::move(levels);
  return s;
}

const LevelSchedule& validate_level_schedule(const LevelSchedule& schedule, int m) {
  const auto& l = schedule.levels;
  if (l.empty()) throw ScheduleError("level schedule is empty");
  if (l.back() != 2) throw ScheduleError("last level must be 2");
  if (l.front() >= m) throw ScheduleError("first level must be below m = " + std::to_string(m));
  for (std::size_t n = 1; n < l.size(); ++n) {
    if (l[n] >= l[n - 1]) throw ScheduleError("levels must be strictly decreasing");
  }
  const auto& t = schedule.deadlines;
  if (t.size() != l.size()) throw ScheduleError("one deadline per level is required");
  if (t.front() < 1) throw ScheduleError("deadlines must be positive");
  for (std::size_t n = 1; n < t.size(); ++n) {
    if (t[n] <= t[n - 1]) throw ScheduleError("deadlines must be strictly increasing");
  }
  return schedule;
}

double log_segment_weight(const StoppedProcessModel& model, const PathSegment& segment,
                          std::size_t n, const LevelSchedule& schedule) {
  if (n >= schedule.size()) throw ScheduleError("segment index beyond the schedule");
  const bool hit = segment.hit && !segment.states.empty() &&
                   model.in_level(segment.states.back(), schedule.levels[n]) &&
                   segment.tau <= schedule.deadlines[n];
  if (!hit) return kLogZero;

  double lw = 0.0;
  const State* prev = &segment.origin;
  for (const auto& x : segment.states) {
    lw += model.log_forward_density(x, *prev) - model.log_proposal_density(*prev, x);
    prev = &x;
  }
  if (n == 0) lw += model.log_prefactor();
  if (n + 1 == schedule.size()) lw += model.log_initial_density(segment.states.back());
  return std::isnan(lw) ? kLogZero : lw;
}

Propagation propagate_to_level(const StoppedProcessModel& model, const State& origin,
                               int start_tau, int level, int deadline, Rng& rng) {
  Propagation out;
  out.segment.origin = origin;
  out.segment.tau = start_tau;
  double lw = 0.0;
  State x = origin;
  int t = start_tau;
  while (t < deadline) {
    auto mv = model.sample_predecessor(x, rng);
    if (!mv) break;  // dead end
    ++t;
    lw += mv->log_forward - mv->log_proposal;
    x = mv->state;
    out.segment.states.push_back(std::move(mv->state));
    if (model.in_level(x, level)) {
      out.segment.hit = true;
      break;
    }
  }
  out.segment.tau = t;
  out.log_incremental = out.segment.hit ? lw : kLogZero;
  return out;
}

}  // namespace mlpmcmc
