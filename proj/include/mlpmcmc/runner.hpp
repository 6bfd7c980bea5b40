#pragma once

#include "mlpmcmc/pmcmc.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>

namespace mlpmcmc {

inline constexpr const char* kVersion = "0.1.0";

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
/// A required key is absent; key() names it.
struct ConfigKeyError : ConfigError {
  ConfigKeyError(std::string key, const std::string& what) : ConfigError(what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};
struct ConfigTypeError : ConfigError {
  using ConfigError::ConfigError;
};
struct ConfigValidationError : ConfigError {
  using ConfigError::ConfigError;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ModelKind { coalescent, migration };
enum class Algorithm { smc, pimh, pmmh, adaptive_pmmh };

struct LevelPolicy {
  enum class Kind { fixed, adaptive };
  Kind kind = Kind::fixed;
  LevelSchedule schedule;    // fixed
  std::vector<int> support;  // adaptive
  std::string rule;          // adaptive: "mu-power" or "migration-power"
  bool operator==(const LevelPolicy&) const = default;
};

struct RunConfig {
  ModelKind model = ModelKind::coalescent;
  int d = 0;
  int m = 0;
  int g = 1;
  State y;
  double mu = 0.0;
  Eigen::MatrixXd R;
  Eigen::VectorXd G_upper;  // migration only, upper triangle row by row

  Algorithm algorithm = Algorithm::pmmh;
  int N = 0;
  int K = 0;
  std::uint64_t seed = 0;
  PriorSpec prior;
  ProposalSpec proposal;
  LevelPolicy levels;
  std::optional<Eigen::VectorXd> initial;
  int max_init_attempts = 100;
  std::string output_dir = "out";
  int acf_lags = 20;
  bool dump_paths = false;

  bool operator==(const RunConfig& o) const;
};

/// Parses and validates a JSON config, applying defaults.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const RunConfig& config);
std::string serialize_config(const RunConfig& config);
/// Re-checks every invariant (used after command-line overrides).
void validate_config(const RunConfig& config);

/// Default adaptive policy: support 1..m-2 with mu^p weights (coalescent),
/// {10, 20, 33} within range with migration weights (migration).
LevelPolicy default_adaptive_policy(const RunConfig& config);

ParameterPoint config_parameters(const RunConfig& config);
std::unique_ptr<StoppedProcessModel> make_model(const RunConfig& config);
LevelAdapter make_adapter(const RunConfig& config);
ChainComponents make_components(const RunConfig& config);
ChainKind chain_kind(Algorithm algorithm);

/// Single SMC run at the configured parameter; the adaptive policy draws p
/// from Lambda_theta first.
SmcResult run_configured_smc(const RunConfig& config);
ChainRecord run_configured_chain(const RunConfig& config);

// Diagnostics

/// Fraction of rows 1..K that were accepted.
double acceptance_rate(const ChainRecord& record);

/// Biased ACF r(k) = sum (x_t - xbar)(x_{t+k} - xbar) / sum (x_t - xbar)^2
/// for k = 0..max_lag.
std::vector<double> autocorrelation(std::span<const double> series, int max_lag);

struct Histogram {
  std::vector<long> counts;
  long underflow = 0;
  long overflow = 0;
  bool operator==(const Histogram&) const = default;
};
/// Half-open bins [e_j, e_{j+1}); values below e_0 or at/after the last edge
/// are under/overflow.
Histogram histogram(std::span<const double> samples, std::span<const double> edges);

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double q025 = 0.0;
  double median = 0.0;
  double q975 = 0.0;
  std::vector<double> acf;  // empty when the trace is constant
  bool operator==(const ParameterSummary&) const = default;
};

struct Summary {
  int iterations = 0;
  double acceptance_rate = 0.0;
  double tau_mean = 0.0;
  std::vector<ParameterSummary> parameters;
  std::map<int, long> level_counts;
  bool operator==(const Summary&) const = default;
};

/// Statistics over rows 1..K.
Summary summarize(const ChainRecord& record, int acf_lags);
nlohmann::json summary_to_json(const Summary& summary);

// Trace files

enum class TraceFormat { csv, json };
TraceFormat parse_trace_format(std::string_view name);

void write_trace(const ChainRecord& record, std::ostream& out, TraceFormat format,
                 const RunConfig* config = nullptr);
void export_trace(const ChainRecord& record, const std::filesystem::path& path, TraceFormat format,
                  const RunConfig* config = nullptr);
void export_trace(const ChainRecord& record, const std::filesystem::path& path, std::string_view format,
                  const RunConfig* config = nullptr);

ChainRecord read_trace(std::istream& in, TraceFormat format);
/// Format chosen by extension (.csv or .json).
ChainRecord import_trace(const std::filesystem::path& path);

/// Command-line driver; returns the process exit code.
int cli_main(int argc, const char* const* argv);
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mlpmcmc
