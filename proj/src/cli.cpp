#include "mlpmcmc/coalescent.hpp"
#include "mlpmcmc/oracle.hpp"
#include "mlpmcmc/runner.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace mlpmcmc {
namespace {

struct Options {
  std::string config;
  std::string out;
  std::string trace;
  std::uint64_t seed = 0;
  int particles = 0;
  int iters = 0;
  int lags = 20;
  bool adapt_levels = false;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* out_opt = nullptr;
  CLI::Option* particles_opt = nullptr;
  CLI::Option* iters_opt = nullptr;
};

void add_run_flags(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "run configuration (JSON)")->required();
  o.seed_opt = sub->add_option("--seed", o.seed, "override the config seed");
  o.out_opt = sub->add_option("--out", o.out, "output directory");
  o.particles_opt = sub->add_option("--particles", o.particles, "override N");
  o.iters_opt = sub->add_option("--iters", o.iters, "override K");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

RunConfig load_with_overrides(const Options& o, const std::vector<CLI::Option*>& opts) {
  RunConfig c;
  try {
    c = load_config(o.config);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  for (const auto* opt : opts) {
    if (!opt || opt->count() == 0) continue;
    if (opt->get_name() == "--seed") c.seed = o.seed;
    if (opt->get_name() == "--out") c.output_dir = o.out;
    if (opt->get_name() == "--particles") c.N = o.particles;
    if (opt->get_name() == "--iters") c.K = o.iters;
  }
  return c;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

nlohmann::json path_json(const Trajectory& t) {
  nlohmann::json states = nlohmann::json::array();
  for (const auto& x : t.states()) states.push_back(std::vector<int>(x.data(), x.data() + x.size()));
  return {{"tau", t.total_tau}, {"states", states}};
}

int run_smc(const RunConfig& c, bool write_out, std::ostream& out) {
  const auto result = run_configured_smc(c);
  out << "log_zhat " << (result.success ? fmt(result.log_zhat) : std::string("-inf")) << "\n";
  out << "success " << (result.success ? "true" : "false") << "\n";
  out << "levels " << result.schedule.size() << "\n";
  if (write_out) {
    std::filesystem::create_directories(c.output_dir);
    nlohmann::json j{{"version", kVersion},
                     {"seed", c.seed},
                     {"config", config_to_json(c)},
                     {"success", result.success},
                     {"levels", result.schedule.levels},
                     {"deadlines", result.schedule.deadlines}};
    j["log_zhat"] = result.success ? nlohmann::json(result.log_zhat) : nlohmann::json(nullptr);
    write_json(std::filesystem::path(c.output_dir) / "smc.json", j);
  }
  return 0;
}

int run_chain_command(RunConfig c, std::ostream& out) {
  validate_config(c);
  const auto record = run_configured_chain(c);
  const std::filesystem::path dir(c.output_dir);
  std::filesystem::create_directories(dir);
  export_trace(record, dir / "trace.csv", TraceFormat::csv, &c);
  export_trace(record, dir / "trace.json", TraceFormat::json, &c);
  const auto summary = summarize(record, c.acf_lags);
  write_json(dir / "summary.json", summary_to_json(summary));
  if (c.dump_paths) {
    nlohmann::json paths = nlohmann::json::array();
    for (const auto& t : record.paths) paths.push_back(path_json(t));
    write_json(dir / "paths.json", paths);
  }
  out << "acceptance_rate " << fmt(summary.acceptance_rate) << "\n";
  for (const auto& p : summary.parameters) out << p.name << "_mean " << fmt(p.mean) << "\n";
  out << "trace " << (dir / "trace.csv").string() << "\n";
  return 0;
}

int run_oracle(const RunConfig& c, std::ostream& out) {
  const auto model = make_model(c);
  double backward = 0.0, forward = 0.0;
  if (const auto* coal = dynamic_cast<const CoalescentModel*>(model.get())) {
    backward = exact_normalizer_backward(*coal);
    forward = exact_marginal_forward(*coal);
  } else {
    backward = oracle::backward_normalizer(*model);
    forward = oracle::forward_marginal(*model, log_sampling_factor(c.y));
  }
  out << "backward " << fmt(backward) << "\n";
  out << "forward " << fmt(forward) << "\n";
  return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-level SMC and particle MCMC for stopped Markov processes", "mlpmcmc"};
  app.require_subcommand(1);
  Options o;

  auto* smc = app.add_subcommand("smc", "one multi-level SMC run; prints log Z-hat");
  add_run_flags(smc, o);
  const std::vector<CLI::Option*> smc_opts{o.seed_opt, o.out_opt, o.particles_opt, o.iters_opt};

  Options po;
  auto* pimh = app.add_subcommand("pimh", "particle independent Metropolis-Hastings at the configured parameter");
  add_run_flags(pimh, po);
  const std::vector<CLI::Option*> pimh_opts{po.seed_opt, po.out_opt, po.particles_opt, po.iters_opt};

  Options mo;
  auto* pmmh = app.add_subcommand("pmmh", "particle marginal Metropolis-Hastings");
  add_run_flags(pmmh, mo);
  pmmh->add_flag("--adapt-levels", mo.adapt_levels, "draw the level count per proposal");
  const std::vector<CLI::Option*> pmmh_opts{mo.seed_opt, mo.out_opt, mo.particles_opt, mo.iters_opt};

  Options oo;
  auto* orc = app.add_subcommand("oracle", "exact normalising constant of a small instance");
  orc->add_option("--config", oo.config, "run configuration (JSON)")->required();

  Options dop;
  auto* diag = app.add_subcommand("diag", "summary statistics of a trace file");
  diag->add_option("--trace", dop.trace, "trace file (.csv or .json)")->required();
  diag->add_option("--lags", dop.lags, "autocorrelation lags")->check(CLI::NonNegativeNumber);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 1;
  }

  try {
    if (smc->parsed()) {
      auto c = load_with_overrides(o, smc_opts);
      validate_config(c);
      return run_smc(c, o.out_opt->count() > 0, out);
    }
    if (pimh->parsed()) {
      auto c = load_with_overrides(po, pimh_opts);
      c.algorithm = Algorithm::pimh;
      return run_chain_command(c, out);
    }
    if (pmmh->parsed()) {
      auto c = load_with_overrides(mo, pmmh_opts);
      if (mo.adapt_levels || c.algorithm == Algorithm::adaptive_pmmh) {
        c.algorithm = Algorithm::adaptive_pmmh;
        if (c.levels.kind != LevelPolicy::Kind::adaptive) c.levels = default_adaptive_policy(c);
      } else {
        c.algorithm = Algorithm::pmmh;
      }
      return run_chain_command(c, out);
    }
    if (orc->parsed()) return run_oracle(load_with_overrides(oo, {}), out);
    if (diag->parsed()) {
      const auto record = import_trace(dop.trace);
      out << summary_to_json(summarize(record, dop.lags)).dump(2) << "\n";
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

int cli_main(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace mlpmcmc
