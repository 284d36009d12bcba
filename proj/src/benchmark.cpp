#include "gcfn/benchmark.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <thread>
#include <tuple>

#include "gcfn/error.hpp"
#include "gcfn/eval.hpp"
#include "gcfn/io.hpp"
#include "gcfn/rng.hpp"

namespace gcfn::bench {

namespace {

enum : std::uint64_t { kVdeStream = 101, kOutcomeStream = 102, kCfnStream = 103, kSplitStream = 104 };

}  // namespace

BenchmarkConfig BenchmarkConfig::for_scenario(sim::ScenarioKind kind) {
  BenchmarkConfig c;
  c.scenario = kind;
  switch (kind) {
    case sim::ScenarioKind::mult_outcome:
    case sim::ScenarioKind::cfn_violation:
      c.vde.decoder_structure = vde::DecoderStructure::additive;
      break;
    case sim::ScenarioKind::mult_treatment:
      c.vde.decoder_structure = vde::DecoderStructure::multiplicative;
      break;
    case sim::ScenarioKind::semi:
      c.vde.decoder_structure = vde::DecoderStructure::categorical;
      c.vde.zeta = 0.5;
      c.vde.zeta_observed_mean = true;
      c.kappas = {0.1};
      c.alphas = {1.0};
      break;
    case sim::ScenarioKind::counterexample:
      throw ConfigError("the counterexample scenario has no effect benchmark");
  }
  return c;
}

void to_json(nlohmann::json& j, const BenchmarkConfig& c) {
  j = {{"scenario", sim::scenario_name(c.scenario)},
       {"alphas", c.alphas},
       {"kappas", c.kappas},
       {"seeds", c.seeds},
       {"n", c.n},
       {"rho", c.rho},
       {"holdout_fraction", c.holdout_fraction},
       {"vde", c.vde},
       {"outcome", c.outcome},
       {"cfn",
        {{"epochs", c.cfn.epochs},
         {"batch_size", c.cfn.batch_size},
         {"learning_rate", c.cfn.learning_rate},
         {"hidden_units", c.cfn.hidden_units}}},
       {"grid", c.grid},
       {"run_baselines", c.run_baselines}};
}

void from_json(const nlohmann::json& j, BenchmarkConfig& c) {
  io::reject_unknown_keys(j,
                          {"scenario", "alphas", "kappas", "seeds", "n", "rho", "holdout_fraction", "vde", "outcome",
                           "cfn", "grid", "run_baselines"},
                          "benchmark config");
  try {
    if (j.contains("scenario")) c.scenario = sim::parse_scenario(j["scenario"].get<std::string>());
    if (j.contains("alphas")) c.alphas = j["alphas"].get<std::vector<double>>();
    if (j.contains("kappas")) c.kappas = j["kappas"].get<std::vector<double>>();
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("n")) c.n = j["n"].get<std::size_t>();
    if (j.contains("rho")) c.rho = j["rho"].get<double>();
    if (j.contains("holdout_fraction")) c.holdout_fraction = j["holdout_fraction"].get<double>();
    if (j.contains("vde")) c.vde = j["vde"].get<vde::VdeConfig>();
    if (j.contains("outcome")) c.outcome = j["outcome"].get<outcome::OutcomeConfig>();
    if (j.contains("cfn")) {
      const auto& f = j["cfn"];
      io::reject_unknown_keys(f, {"epochs", "batch_size", "learning_rate", "hidden_units"}, "cfn config");
      c.cfn.epochs = f.value("epochs", c.cfn.epochs);
      c.cfn.batch_size = f.value("batch_size", c.cfn.batch_size);
      c.cfn.learning_rate = f.value("learning_rate", c.cfn.learning_rate);
      c.cfn.hidden_units = f.value("hidden_units", c.cfn.hidden_units);
    }
    if (j.contains("grid")) c.grid = j["grid"].get<std::vector<double>>();
    if (j.contains("run_baselines")) c.run_baselines = j["run_baselines"].get<bool>();
  } catch (const nlohmann::json::type_error& e) {
    throw ConfigError(std::string("benchmark config: ") + e.what());
  }
}

bool row_less(const BenchmarkRow& a, const BenchmarkRow& b) {
  const double ka = a.kappa.value_or(-1.0), kb = b.kappa.value_or(-1.0);
  return std::tie(a.scenario, a.alpha, ka, a.seed, a.method) < std::tie(b.scenario, b.alpha, kb, b.seed, b.method);
}

std::vector<BenchmarkRow> run_cell(const BenchmarkConfig& config, double alpha, std::uint64_t seed) {
  if (config.kappas.empty()) throw ConfigError("benchmark needs at least one kappa");
  const sim::ScenarioSpec spec{config.scenario, alpha, config.rho, config.n, seed};
  const Dataset data = sim::generate(spec);
  const auto truth = sim::true_effect_fn(spec);
  const std::string scenario = sim::scenario_name(config.scenario);
  std::vector<BenchmarkRow> rows;
  const auto add = [&](std::optional<double> kappa, const std::string& method, const outcome::EffectCurve& curve) {
    rows.push_back({scenario, alpha, kappa, seed, method, eval::effect_rmse(curve, truth)});
  };

  vde::VdeConfig vcfg = config.vde;
  vcfg.seed = derive_seed(seed, kVdeStream);
  outcome::OutcomeConfig ocfg = config.outcome;
  ocfg.seed = derive_seed(seed, kOutcomeStream);
  const bool semi = config.scenario == sim::ScenarioKind::semi;
  const std::string gcfn_name = semi ? "gcfn_semi" : "gcfn";

  if (config.kappas.size() > 1) {
    const auto sel =
        eval::select_kappa(data, config.kappas, vcfg, ocfg, config.holdout_fraction, derive_seed(seed, kSplitStream));
    for (const auto& e : sel.table) {
      if (!e.success) continue;
      const auto curve = outcome::estimate_effect(*e.outcome, outcome::marginal_control(data, *e.vde), config.grid);
      add(e.kappa, gcfn_name, curve);
      if (&e == &sel.best()) add(e.kappa, gcfn_name + "_selected", curve);
    }
  } else {
    vcfg.kappa = config.kappas.front();
    const auto model = vde::train_vde(data, vcfg);
    const auto out = outcome::fit_outcome(data, model, ocfg);
    add(vcfg.kappa, gcfn_name, outcome::estimate_effect(out, outcome::marginal_control(data, model), config.grid));
  }

  if (semi) {
    const auto sup = baselines::fit_supervised(data, vcfg.treatment_bins, ocfg);
    add(std::nullopt, "supervised", outcome::estimate_effect(sup.model, sup.marginal, config.grid));
  }
  if (config.run_baselines) {
    baselines::CfnConfig ccfg = config.cfn;
    ccfg.seed = derive_seed(seed, kCfnStream);
    add(std::nullopt, "cfn", baselines::baseline_effect(baselines::fit_cfn(data, ccfg), config.grid));
    add(std::nullopt, "2sls", baselines::baseline_effect(baselines::fit_2sls(data), config.grid));
  }
  return rows;
}

std::vector<BenchmarkRow> run_benchmark(const BenchmarkConfig& config) {
  std::vector<std::pair<double, std::uint64_t>> cells;
  for (double a : config.alphas) {
    for (auto s : config.seeds) cells.emplace_back(a, s);
  }
  std::vector<std::vector<BenchmarkRow>> results(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        results[i] = run_cell(config, cells[i].first, cells[i].second);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(config.threads, 1, std::max<std::size_t>(cells.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<BenchmarkRow> rows;
  for (auto& r : results) rows.insert(rows.end(), r.begin(), r.end());
  std::sort(rows.begin(), rows.end(), row_less);
  return rows;
}

std::string rows_to_csv(const std::vector<BenchmarkRow>& rows) {
  std::string out = "scenario,alpha,kappa,seed,method,rmse\n";
  for (const auto& r : rows) {
    out += r.scenario + "," + io::format_double(r.alpha) + "," + (r.kappa ? io::format_double(*r.kappa) : "") + "," +
           std::to_string(r.seed) + "," + r.method + "," + io::format_double(r.rmse) + "\n";
  }
  return out;
}

std::vector<MethodSummary> summarize(const std::vector<BenchmarkRow>& rows) {
  std::map<std::pair<std::string, double>, std::vector<double>> by_alpha;
  std::map<std::string, std::vector<double>> pooled;
  for (const auto& r : rows) {
    by_alpha[{r.method, r.alpha}].push_back(r.rmse);
    pooled[r.method].push_back(r.rmse);
  }
  const auto stats = [](const std::vector<double>& v, MethodSummary& s) {
    s.count = v.size();
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    s.mean = m;
    s.sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  };
  std::vector<MethodSummary> out;
  for (const auto& [method, v] : pooled) {
    MethodSummary s;
    s.method = method;
    stats(v, s);
    out.push_back(s);
  }
  for (const auto& [key, v] : by_alpha) {
    MethodSummary s;
    s.method = key.first;
    s.alpha = key.second;
    stats(v, s);
    out.push_back(s);
  }
  return out;
}

nlohmann::json to_json(const std::vector<MethodSummary>& summary) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& s : summary) {
    j.push_back({{"method", s.method},
                 {"alpha", s.alpha ? nlohmann::json(*s.alpha) : nlohmann::json(nullptr)},
                 {"mean_rmse", s.mean},
                 {"sd_rmse", s.sd},
                 {"count", s.count}});
  }
  return j;
}

}  // namespace gcfn::bench
