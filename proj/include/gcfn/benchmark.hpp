#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gcfn/baselines.hpp"
#include "gcfn/outcome.hpp"
#include "gcfn/simgen.hpp"
#include "gcfn/vde.hpp"

namespace gcfn::bench {

struct BenchmarkConfig {
  sim::ScenarioKind scenario = sim::ScenarioKind::mult_outcome;
  std::vector<double> alphas{0.5, 1.0, 2.0};
  std::vector<double> kappas{0.1, 0.2, 0.3};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::size_t n = 5000;
  double rho = 0.05;  // semi only
  // With more than one kappa the GCFN rows come from select_kappa on this
  // held-out fraction; a single kappa trains on the full data.
  double holdout_fraction = 0.2;
  vde::VdeConfig vde;  // kappa and seed are overwritten per cell
  outcome::OutcomeConfig outcome;
  baselines::CfnConfig cfn;
  std::vector<double> grid = outcome::make_grid(-1.0, 1.0, 200);
  bool run_baselines = true;
  std::size_t threads = 1;

  // Defaults for a scenario: decoder structure and zeta.
  static BenchmarkConfig for_scenario(sim::ScenarioKind kind);
};

void to_json(nlohmann::json& j, const BenchmarkConfig& c);
void from_json(const nlohmann::json& j, BenchmarkConfig& c);

struct BenchmarkRow {
  std::string scenario;
  double alpha = 0.0;
  std::optional<double> kappa;  // absent for methods without a kappa
  std::uint64_t seed = 0;
  std::string method;
  double rmse = 0.0;
};

// Rows are ordered by (scenario, alpha, kappa, seed, method), baselines'
// missing kappa first.
bool row_less(const BenchmarkRow& a, const BenchmarkRow& b);

// All methods on one (alpha, seed) cell.
std::vector<BenchmarkRow> run_cell(const BenchmarkConfig& config, double alpha, std::uint64_t seed);

// Every cell, on config.threads worker threads; rows sorted with row_less.
std::vector<BenchmarkRow> run_benchmark(const BenchmarkConfig& config);

// Header `scenario,alpha,kappa,seed,method,rmse`.
std::string rows_to_csv(const std::vector<BenchmarkRow>& rows);

struct MethodSummary {
  std::string method;
  std::optional<double> alpha;  // absent: pooled over alphas
  double mean = 0.0;
  double sd = 0.0;
  std::size_t count = 0;
};

std::vector<MethodSummary> summarize(const std::vector<BenchmarkRow>& rows);
nlohmann::json to_json(const std::vector<MethodSummary>& summary);

}  // namespace gcfn::bench
