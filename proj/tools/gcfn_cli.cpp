// gcfn command-line driver. Every subcommand writes its outputs atomically and
// echoes the resolved configuration next to them as <out>.config.json.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gcfn/baselines.hpp"
#include "gcfn/benchmark.hpp"
#include "gcfn/dataset.hpp"
#include "gcfn/error.hpp"
#include "gcfn/eval.hpp"
#include "gcfn/io.hpp"
#include "gcfn/oracle.hpp"
#include "gcfn/outcome.hpp"
#include "gcfn/rng.hpp"
#include "gcfn/runtime.hpp"
#include "gcfn/simgen.hpp"
#include "gcfn/vde.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gcfn;

namespace {

void write_json(const fs::path& path, const json& j) { io::write_file_atomic(path, j.dump(2) + "\n"); }

void echo_config(const fs::path& out, const json& resolved) {
  write_json(fs::path(out.string() + ".config.json"), resolved);
}

json read_json(const fs::path& path) {
  try {
    return json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ConfigError("expected a comma-separated list of numbers, got '" + s + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

// Effect function for a dataset whose metadata names a simulated scenario.
std::optional<eval::EffectFn> metadata_truth(const Dataset& data) {
  try {
    const auto kind = sim::parse_scenario(data.metadata.scenario);
    if (kind == sim::ScenarioKind::counterexample) return std::nullopt;
    return sim::true_effect_fn({kind, data.metadata.alpha, data.metadata.rho, data.metadata.n, data.metadata.seed});
  } catch (const ConfigError&) {
    return std::nullopt;
  }
}

void attach_truth(outcome::EffectCurve& curve, const Dataset& data) {
  const auto truth = metadata_truth(data);
  if (!truth) throw ConfigError("--truth needs data generated from a simulation scenario");
  std::vector<double> tau(curve.grid.size());
  for (std::size_t i = 0; i < tau.size(); ++i) tau[i] = (*truth)(curve.grid[i]);
  curve.tau_true = std::move(tau);
}

struct Options {
  // simulate
  std::string scenario = "mult_outcome";
  double alpha = 1.0, rho = 1.0;
  std::size_t n = 5000;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> seed_override;  // train-vde, fit-outcome: else keep the config's seed
  // shared paths
  std::string out, data, config, model, outcome_path;
  std::string grid = "-1:1:200";
  bool truth = false;
  // overrides
  std::optional<double> kappa, zeta;
  std::optional<std::string> decoder;
  std::optional<std::size_t> epochs;
  bool partially_linear = false;
  bool zeta_observed_mean = false;
  // baseline
  std::string method = "2sls";
  // diagnose
  std::size_t eps_bins = 10, permutations = 199;
  std::optional<double> lipschitz_L, lipschitz_Lg;
  // select-kappa / benchmark
  std::string kappas = "0.1,0.2,0.3", alphas = "0.5,1,2";
  double holdout = 0.2;
  std::size_t seeds = 5;
  std::optional<std::size_t> bench_n;
  std::optional<double> bench_rho;
  // oracle
  std::string mode = "random";
  std::size_t n_states = 5, mod_n = 5, trials = 100;
};

// A --config file is either a bare config object or a previous run's echo, in
// which case the named section is used.
json config_section(const json& j, const char* key) {
  if (!j.is_object() || !j.contains("command")) return j;
  if (!j.contains(key)) throw ConfigError(std::string("config echo has no '") + key + "' section");
  return j.at(key);
}

vde::VdeConfig resolve_vde(const Options& o) {
  vde::VdeConfig c;
  if (!o.config.empty()) c = config_section(read_json(o.config), "vde").get<vde::VdeConfig>();
  if (o.kappa) c.kappa = *o.kappa;
  if (o.zeta) c.zeta = *o.zeta;
  if (o.zeta_observed_mean) c.zeta_observed_mean = true;
  if (o.decoder) c.decoder_structure = vde::parse_structure(*o.decoder);
  if (o.epochs) c.epochs = *o.epochs;
  if (o.seed_override) c.seed = *o.seed_override;
  c.validate();
  return c;
}

int cmd_simulate(const Options& o) {
  const sim::ScenarioSpec spec{sim::parse_scenario(o.scenario), o.alpha, o.rho, o.n, o.seed};
  const Dataset data = sim::generate(spec);
  save_csv(data, o.out);
  echo_config(o.out, {{"command", "simulate"},
                      {"scenario", sim::scenario_name(spec.kind)},
                      {"alpha", spec.alpha},
                      {"rho", spec.rho},
                      {"n", spec.n},
                      {"seed", spec.seed}});
  return 0;
}

int cmd_train_vde(const Options& o) {
  const Dataset data = load_csv(o.data);
  const auto cfg = resolve_vde(o);
  const auto model = vde::train_vde(data, cfg);
  vde::save_model(model, o.out);
  echo_config(o.out, {{"command", "train-vde"}, {"data", o.data}, {"vde", cfg}});
  return 0;
}

int cmd_fit_outcome(const Options& o) {
  const Dataset data = load_csv(o.data);
  const auto model = vde::load_model(o.model);
  outcome::OutcomeConfig cfg;
  if (!o.config.empty()) cfg = config_section(read_json(o.config), "outcome").get<outcome::OutcomeConfig>();
  if (o.epochs) cfg.epochs = *o.epochs;
  if (o.partially_linear) cfg.partially_linear = true;
  if (o.seed_override) cfg.seed = *o.seed_override;
  const auto out = outcome::fit_outcome(data, model, cfg);
  outcome::save_model(out, o.out);
  echo_config(o.out, {{"command", "fit-outcome"}, {"data", o.data}, {"model", o.model}, {"outcome", cfg}});
  return 0;
}

int cmd_estimate(const Options& o) {
  const Dataset data = load_csv(o.data);
  const auto model = vde::load_model(o.model);
  const auto out = outcome::load_model(o.outcome_path);
  if (out.k_categories != model.k()) {
    throw ConfigError("outcome model has " + std::to_string(out.k_categories) + " categories, VDE has " +
                      std::to_string(model.k()));
  }
  const auto grid = outcome::parse_grid(o.grid);
  auto curve = outcome::estimate_effect(out, outcome::marginal_control(data, model), grid);
  if (o.truth) attach_truth(curve, data);
  outcome::save_curve(curve, o.out);
  echo_config(o.out, {{"command", "estimate"},
                      {"data", o.data},
                      {"model", o.model},
                      {"outcome", o.outcome_path},
                      {"grid", o.grid},
                      {"truth", o.truth}});
  return 0;
}

int cmd_baseline(const Options& o) {
  const Dataset data = load_csv(o.data);
  const auto grid = outcome::parse_grid(o.grid);
  json fit_json;
  outcome::EffectCurve curve;
  json resolved = {{"command", "baseline"}, {"method", o.method}, {"data", o.data}, {"grid", o.grid}};
  const auto linear = [](const baselines::LinearFit& f) {
    return json{{"intercept", f.intercept},
                {"slope", f.slope},
                {"slope_se", f.slope_se},
                {"slope_se_robust", f.slope_se_robust},
                {"r2", f.r2}};
  };
  if (o.method == "2sls") {
    const auto fit = baselines::fit_2sls(data);
    fit_json = {{"first_stage", linear(fit.first_stage)},
                {"second_stage", linear(fit.second_stage)},
                {"weak_instrument", fit.weak_instrument}};
    curve = baselines::baseline_effect(fit, grid);
  } else if (o.method == "cfn") {
    baselines::CfnConfig cfg;
    cfg.seed = o.seed;
    if (o.epochs) cfg.epochs = *o.epochs;
    const auto fit = baselines::fit_cfn(data, cfg);
    fit_json = {{"first_stage", linear(fit.first_stage)}, {"rho", fit.rho}, {"final_loss", fit.final_loss}};
    curve = baselines::baseline_effect(fit, grid);
    resolved["seed"] = cfg.seed;
    resolved["epochs"] = cfg.epochs;
  } else {
    throw ConfigError("unknown baseline method '" + o.method + "' (expected 2sls or cfn)");
  }
  if (o.truth) attach_truth(curve, data);
  outcome::save_curve(curve, o.out);
  write_json(fs::path(o.out + ".fit.json"), fit_json);
  resolved["truth"] = o.truth;
  echo_config(o.out, resolved);
  return 0;
}

int cmd_diagnose(const Options& o) {
  const Dataset data = load_csv(o.data);
  const auto model = vde::load_model(o.model);
  const auto report = eval::diagnose(model, data, o.eps_bins, o.permutations, o.seed);
  json j = eval::to_json(report);
  json resolved = {{"command", "diagnose"},   {"data", o.data},
                   {"model", o.model},        {"eps_bins", o.eps_bins},
                   {"permutations", o.permutations}, {"seed", o.seed}};
  if (!o.outcome_path.empty()) {
    const auto truth = metadata_truth(data);
    if (!truth) throw ConfigError("the bound audit needs data generated from a simulation scenario");
    const auto out = outcome::load_model(o.outcome_path);
    // Defaults for the additive-treatment scenario: with zt = z / sqrt(2) the
    // outcome t + alpha t^2 sqrt(2) zt has slope bound sqrt(2) alpha on |t| <= 1,
    // and g(eps) = eps / sqrt(2).
    const double L = o.lipschitz_L.value_or(std::sqrt(2.0) * data.metadata.alpha);
    const double Lg = o.lipschitz_Lg.value_or(1.0 / std::sqrt(2.0));
    const auto bound = eval::bound_check_additive(model, out, data, *truth, L, Lg,
                                                  "confounder rescaled to z / sqrt(2) so that t = z' + g(eps)");
    j["bound"] = eval::to_json(bound);
    resolved["outcome"] = o.outcome_path;
    resolved["lipschitz_L"] = L;
    resolved["lipschitz_Lg"] = Lg;
  }
  write_json(o.out, j);
  echo_config(o.out, resolved);
  return 0;
}

int cmd_select_kappa(const Options& o) {
  const Dataset data = load_csv(o.data);
  vde::VdeConfig vcfg;
  outcome::OutcomeConfig ocfg;
  if (!o.config.empty()) {
    const json c = read_json(o.config);
    io::reject_unknown_keys(c, {"vde", "outcome"}, "select-kappa config");
    if (c.contains("vde")) vcfg = c["vde"].get<vde::VdeConfig>();
    if (c.contains("outcome")) ocfg = c["outcome"].get<outcome::OutcomeConfig>();
  }
  if (o.decoder) vcfg.decoder_structure = vde::parse_structure(*o.decoder);
  if (o.zeta) vcfg.zeta = *o.zeta;
  if (o.zeta_observed_mean) vcfg.zeta_observed_mean = true;
  if (o.epochs) {
    vcfg.epochs = *o.epochs;
    ocfg.epochs = *o.epochs;
  }
  vcfg.seed = derive_seed(o.seed, 1);
  ocfg.seed = derive_seed(o.seed, 2);
  const auto kappas = parse_list(o.kappas);
  const auto sel = eval::select_kappa(data, kappas, vcfg, ocfg, o.holdout, derive_seed(o.seed, 3));
  io::write_file_atomic(o.out, eval::kappa_table_csv(sel));
  echo_config(o.out, {{"command", "select-kappa"},
                      {"data", o.data},
                      {"kappas", kappas},
                      {"holdout", o.holdout},
                      {"seed", o.seed},
                      {"vde", vcfg},
                      {"outcome", ocfg},
                      {"best_kappa", sel.best_kappa}});
  return 0;
}

int cmd_benchmark(const Options& o, const CLI::App& sub) {
  const auto kind = sim::parse_scenario(o.scenario);
  auto cfg = bench::BenchmarkConfig::for_scenario(kind);
  if (!o.config.empty()) cfg = read_json(o.config).get<bench::BenchmarkConfig>();
  // A config file names its own scenario; --scenario must agree with it.
  if (cfg.scenario != kind) throw ConfigError("--scenario disagrees with the scenario in --config");
  if (sub.count("--alphas")) cfg.alphas = parse_list(o.alphas);
  if (sub.count("--kappas")) cfg.kappas = parse_list(o.kappas);
  if (sub.count("--seeds")) {
    cfg.seeds.clear();
    for (std::size_t s = 0; s < o.seeds; ++s) cfg.seeds.push_back(s);
  }
  if (o.bench_n) cfg.n = *o.bench_n;
  if (o.bench_rho) cfg.rho = *o.bench_rho;
  if (o.epochs) {
    cfg.vde.epochs = *o.epochs;
    cfg.outcome.epochs = *o.epochs;
    cfg.cfn.epochs = *o.epochs;
  }
  if (sub.count("--grid")) cfg.grid = outcome::parse_grid(o.grid);
  cfg.threads = thread_count_from_env();

  const fs::path dir = o.out;
  fs::create_directories(dir);
  write_json(dir / "config.json", cfg);
  const auto rows = bench::run_benchmark(cfg);
  io::write_file_atomic(dir / "rmse.csv", bench::rows_to_csv(rows));
  write_json(dir / "summary.json", bench::to_json(bench::summarize(rows)));
  return 0;
}

int cmd_oracle(const Options& o) {
  json report;
  json resolved = {{"command", "oracle"}, {"mode", o.mode}};
  if (o.mode == "random") {
    SplitMix64 rng(o.seed);
    json trials = json::array();
    std::size_t premises = 0, matched = 0;
    double worst = 0.0;
    for (std::size_t i = 0; i < o.trials; ++i) {
      const auto [scm, cf] = oracle::random_identity_scm(rng, o.n_states);
      const auto rep = oracle::verify_identification(scm, cf);
      premises += rep.premises_ok;
      matched += rep.effects_match;
      worst = std::max(worst, rep.max_effect_gap);
      trials.push_back(oracle::to_json(rep, scm, cf));
    }
    report = {{"trials", o.trials},
              {"premises_ok", premises},
              {"effects_match", matched},
              {"max_effect_gap", worst},
              {"reports", trials}};
    resolved["trials"] = o.trials;
    resolved["n_states"] = o.n_states;
    resolved["seed"] = o.seed;
  } else if (o.mode == "counterexample" || o.mode == "positivity" || o.mode == "file") {
    std::pair<oracle::DiscreteScm, oracle::DiscreteControlFunction> m;
    if (o.mode == "counterexample") {
      m = oracle::build_mod_counterexample(o.mod_n);
      resolved["modN"] = o.mod_n;
    } else if (o.mode == "positivity") {
      m = oracle::build_positivity_example();
    } else {
      if (o.model.empty()) throw ConfigError("--mode file needs --model");
      m = oracle::model_from_json(read_json(o.model));
      resolved["model"] = o.model;
    }
    const auto& [scm, cf] = m;
    const auto rep = oracle::verify_identification(scm, cf);
    using V = oracle::Variable;
    const auto ze = oracle::check_marginal_independence(scm, cf, V::zhat, V::eps);
    const auto zz = oracle::check_marginal_independence(scm, cf, V::zhat, V::z);
    report = oracle::to_json(rep, scm, cf);
    report["marginal_independence"] = {
        {"zhat_eps", {{"ok", ze.ok}, {"max_deviation", ze.max_deviation}}},
        {"zhat_z", {{"ok", zz.ok}, {"max_deviation", zz.max_deviation}}}};
    report["model"] = {{"scm", oracle::to_json(scm)}, {"control_function", oracle::to_json(cf, scm)}};
  } else {
    throw ConfigError("unknown oracle mode '" + o.mode + "' (expected random, counterexample, positivity or file)");
  }
  write_json(o.out, report);
  echo_config(o.out, resolved);
  return 0;
}

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"General control function estimation"};
  app.require_subcommand(1);
  Options o;

  auto* simulate = app.add_subcommand("simulate", "Generate a scenario dataset");
  simulate->add_option("--scenario", o.scenario)->required();
  simulate->add_option("--alpha", o.alpha);
  simulate->add_option("--rho", o.rho);
  simulate->add_option("--n", o.n);
  simulate->add_option("--seed", o.seed);
  simulate->add_option("--out", o.out)->required();

  auto* train = app.add_subcommand("train-vde", "Train the first stage");
  train->add_option("--data", o.data)->required();
  train->add_option("--config", o.config);
  train->add_option("--out", o.out)->required();
  train->add_option("--kappa", o.kappa);
  train->add_option("--zeta", o.zeta);
  train->add_flag("--zeta-observed-mean", o.zeta_observed_mean, "Average the supervised term over rows with z observed");
  train->add_option("--decoder", o.decoder);
  train->add_option("--epochs", o.epochs);
  train->add_option("--seed", o.seed_override);

  auto* fit = app.add_subcommand("fit-outcome", "Fit the outcome stage");
  fit->add_option("--data", o.data)->required();
  fit->add_option("--model", o.model)->required();
  fit->add_option("--config", o.config);
  fit->add_option("--out", o.out)->required();
  fit->add_option("--epochs", o.epochs);
  fit->add_option("--seed", o.seed_override);
  fit->add_flag("--partially-linear", o.partially_linear);

  auto* estimate = app.add_subcommand("estimate", "Evaluate the effect curve");
  estimate->add_option("--model", o.model)->required();
  estimate->add_option("--outcome", o.outcome_path)->required();
  estimate->add_option("--data", o.data)->required();
  estimate->add_option("--grid", o.grid);
  estimate->add_option("--out", o.out)->required();
  estimate->add_flag("--truth", o.truth, "Add tau_true from the dataset's scenario");

  auto* baseline = app.add_subcommand("baseline", "Two-stage least squares or residual control function");
  baseline->add_option("--method", o.method)->required();
  baseline->add_option("--data", o.data)->required();
  baseline->add_option("--grid", o.grid);
  baseline->add_option("--out", o.out)->required();
  baseline->add_option("--epochs", o.epochs);
  baseline->add_option("--seed", o.seed);
  baseline->add_flag("--truth", o.truth);

  auto* diagnose = app.add_subcommand("diagnose", "Independence, reconstruction and bound diagnostics");
  diagnose->add_option("--model", o.model)->required();
  diagnose->add_option("--data", o.data)->required();
  diagnose->add_option("--out", o.out)->required();
  diagnose->add_option("--eps-bins", o.eps_bins);
  diagnose->add_option("--permutations", o.permutations);
  diagnose->add_option("--seed", o.seed);
  diagnose->add_option("--outcome", o.outcome_path, "Outcome model; enables the bound audit");
  diagnose->add_option("--lipschitz-L", o.lipschitz_L);
  diagnose->add_option("--lipschitz-Lg", o.lipschitz_Lg);

  auto* select = app.add_subcommand("select-kappa", "Choose kappa by held-out outcome likelihood");
  select->add_option("--data", o.data)->required();
  select->add_option("--kappas", o.kappas);
  select->add_option("--holdout", o.holdout);
  select->add_option("--config", o.config);
  select->add_option("--decoder", o.decoder);
  select->add_option("--zeta", o.zeta);
  select->add_flag("--zeta-observed-mean", o.zeta_observed_mean, "Average the supervised term over rows with z observed");
  select->add_option("--epochs", o.epochs);
  select->add_option("--seed", o.seed);
  select->add_option("--out", o.out)->required();

  auto* benchmark = app.add_subcommand("benchmark", "Run GCFN and baselines over alphas, kappas and seeds");
  benchmark->add_option("--scenario", o.scenario)->required();
  benchmark->add_option("--alphas", o.alphas);
  benchmark->add_option("--kappas", o.kappas);
  benchmark->add_option("--seeds", o.seeds, "Number of seeds, 0..seeds-1");
  benchmark->add_option("--n", o.bench_n);
  benchmark->add_option("--rho", o.bench_rho);
  benchmark->add_option("--epochs", o.epochs);
  benchmark->add_option("--grid", o.grid);
  benchmark->add_option("--config", o.config);
  benchmark->add_option("--out", o.out)->required();

  auto* oracle_cmd = app.add_subcommand("oracle", "Exact finite-model identification checks");
  oracle_cmd->add_option("--mode", o.mode);
  oracle_cmd->add_option("--n-states", o.n_states);
  oracle_cmd->add_option("--modN", o.mod_n);
  oracle_cmd->add_option("--trials", o.trials);
  oracle_cmd->add_option("--seed", o.seed);
  oracle_cmd->add_option("--model", o.model);
  oracle_cmd->add_option("--out", o.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 2;
  }

  try {
    if (*simulate) return cmd_simulate(o);
    if (*train) return cmd_train_vde(o);
    if (*fit) return cmd_fit_outcome(o);
    if (*estimate) return cmd_estimate(o);
    if (*baseline) return cmd_baseline(o);
    if (*diagnose) return cmd_diagnose(o);
    if (*select) return cmd_select_kappa(o);
    if (*benchmark) return cmd_benchmark(o, *benchmark);
    if (*oracle_cmd) return cmd_oracle(o);
  } catch (const Error& e) {
    print_error(e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 1;
}
