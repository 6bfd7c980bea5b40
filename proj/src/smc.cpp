#include "mlpmcmc/smc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>

namespace mlpmcmc {
namespace {

constexpr std::uint64_t kResampleStream = ~std::uint64_t{0};

template <typename Fn>
void parallel_for(int n, unsigned threads, Fn&& fn) {
  if (threads <= 1 || n < 2) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int workers = static_cast<int>(std::min<unsigned>(threads, static_cast<unsigned>(n)));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

unsigned default_thread_count() {
  if (const char* env = std::getenv("MLPMCMC_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

NormalizedWeights normalize_weights(std::span<const double> log_weights) {
  NormalizedWeights out;
  const auto n = static_cast<Eigen::Index>(log_weights.size());
  out.weights = Eigen::VectorXd::Zero(n);
  if (n == 0) return out;

  double mx = kLogZero;
  for (double lw : log_weights) {
    if (!is_log_zero(lw)) mx = std::max(mx, lw);
  }
  if (is_log_zero(mx)) return out;

  std::vector<double> scaled(log_weights.size());
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    scaled[i] = is_log_zero(log_weights[i]) ? 0.0 : std::exp(log_weights[i] - mx);
  }
  std::vector<double> sorted = scaled;
  std::sort(sorted.begin(), sorted.end());
  double total = 0.0;
  for (double w : sorted) total += w;

  for (Eigen::Index i = 0; i < n; ++i) out.weights[i] = scaled[static_cast<std::size_t>(i)] / total;
  out.log_mean = mx + std::log(total / static_cast<double>(n));
  out.degenerate = false;
  return out;
}

NormalizedWeights normalize_weights(const Eigen::VectorXd& log_weights) {
  return normalize_weights(std::span<const double>(log_weights.data(), static_cast<std::size_t>(log_weights.size())));
}

std::vector<int> multinomial_resample(const Eigen::VectorXd& weights, int n, Rng& rng) {
  if (weights.size() == 0) throw ResampleError("cannot resample from an empty weight vector");
  if ((weights.array() < 0.0).any() || !weights.allFinite()) {
    throw std::invalid_argument("resampling weights must be finite and non-negative");
  }
  if (!(weights.sum() > 0.0)) throw ResampleError("cannot resample from all-zero weights");
  std::discrete_distribution<int> pick(weights.data(), weights.data() + weights.size());
  std::vector<int> out(static_cast<std::size_t>(n));
  for (auto& a : out) a = pick(rng);
  return out;
}

SmcResult run_multilevel_smc(const StoppedProcessModel& model, const LevelSchedule& schedule, int particles,
                             Rng& rng, const SmcOptions& options) {
  if (particles < 1) throw std::invalid_argument("need at least one particle");
  validate_level_schedule(schedule, model.size());

  const int p = static_cast<int>(schedule.size());
  const unsigned threads = options.threads == 0 ? default_thread_count() : options.threads;
  const std::uint64_t run_seed = rng();
  Rng resample_rng = derive_stream(run_seed, kResampleStream, 0);

  SmcResult result;
  result.schedule = schedule;
  auto& cloud = result.cloud;
  cloud.columns.assign(static_cast<std::size_t>(p), std::vector<PathSegment>(static_cast<std::size_t>(particles)));
  cloud.log_weights = Eigen::MatrixXd::Constant(particles, p, kLogZero);
  cloud.norm_weights = Eigen::MatrixXd::Zero(particles, p);
  result.ancestry.ancestors = Eigen::MatrixXi::Zero(particles, std::max(p - 1, 0));

  double log_zhat = 0.0;
  std::vector<int> parents;
  for (int n = 0; n < p; ++n) {
    if (n > 0) {
      parents = multinomial_resample(cloud.norm_weights.col(n - 1), particles, resample_rng);
      for (int i = 0; i < particles; ++i) result.ancestry.ancestors(i, n - 1) = parents[static_cast<std::size_t>(i)];
    }
    const int level = schedule.levels[static_cast<std::size_t>(n)];
    const int deadline = schedule.deadlines[static_cast<std::size_t>(n)];
    auto& column = cloud.columns[static_cast<std::size_t>(n)];

    parallel_for(particles, threads, [&](int i) {
      const PathSegment* parent = n == 0 ? nullptr : &cloud.segment(parents[static_cast<std::size_t>(i)], n - 1);
      const State& origin = parent ? parent->last() : model.observed();
      const int start_tau = parent ? parent->tau : 0;
      Rng stream = derive_stream(run_seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(i));
      auto prop = propagate_to_level(model, origin, start_tau, level, deadline, stream);
      double lw = prop.log_incremental;
      if (!is_log_zero(lw)) {
        if (n == 0) lw += model.log_prefactor();
        if (n == p - 1) lw += model.log_initial_density(prop.segment.last());
      }
      if (std::isnan(lw)) lw = kLogZero;
      cloud.log_weights(i, n) = lw;
      column[static_cast<std::size_t>(i)] = std::move(prop.segment);
    });

    const auto nw = normalize_weights(Eigen::VectorXd(cloud.log_weights.col(n)));
    if (nw.degenerate) {
      result.failed_level = n;
      result.success = false;
      result.log_zhat = kLogZero;
      return result;
    }
    cloud.norm_weights.col(n) = nw.weights;
    log_zhat += nw.log_mean;
  }
  result.success = true;
  result.log_zhat = log_zhat;
  return result;
}

double estimate_normalizing_constant(const ParticleCloud& cloud) {
  double total = 0.0;
  for (int n = 0; n < cloud.levels(); ++n) {
    const auto nw = normalize_weights(Eigen::VectorXd(cloud.log_weights.col(n)));
    if (nw.degenerate) return kLogZero;
    total += nw.log_mean;
  }
  return total;
}

std::vector<int> trace_ancestry(const AncestryMatrix& ancestry, int k, int p) {
  const auto N = static_cast<int>(ancestry.ancestors.rows());
  if (p < 1) throw std::out_of_range("lineage needs p >= 1");
  if (p > 1 && ancestry.ancestors.cols() < p - 1) throw std::out_of_range("ancestry has fewer than p - 1 columns");
  if (k < 0 || (p > 1 && k >= N)) throw std::out_of_range("particle index " + std::to_string(k) + " out of range");
  std::vector<int> b(static_cast<std::size_t>(p));
  b[static_cast<std::size_t>(p - 1)] = k;
  for (int n = p - 2; n >= 0; --n) {
    b[static_cast<std::size_t>(n)] = ancestry.ancestors(b[static_cast<std::size_t>(n + 1)], n);
  }
  return b;
}

Trajectory select_path(const SmcResult& result, int k) {
  if (!result.success) throw NoPathError("SMC run failed; no path to select");
  const int p = result.cloud.levels();
  if (k < 0 || k >= result.cloud.particles()) throw std::out_of_range("particle index out of range");
  const auto b = trace_ancestry(result.ancestry, k, p);
  Trajectory path;
  for (int n = 0; n < p; ++n) path.segments.push_back(result.cloud.segment(b[static_cast<std::size_t>(n)], n));
  path.total_tau = path.segments.back().tau;
  return path;
}

int sample_final_index(const SmcResult& result, Rng& rng) {
  if (!result.success) throw NoPathError("SMC run failed; no particle to select");
  return multinomial_resample(result.cloud.norm_weights.col(result.cloud.levels() - 1), 1, rng).front();
}

}  // namespace mlpmcmc
