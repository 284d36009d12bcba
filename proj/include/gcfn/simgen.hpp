#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gcfn/dataset.hpp"

namespace gcfn::sim {

// z, eps ~ N(0, 1) throughout; the y noise has variance 0.1.
//   mult_outcome   t = (z + eps)/sqrt2,  y ~ N(t + alpha t^2 z, 0.1)
//   mult_treatment t = z eps,             y ~ N(t + alpha z, 0.1)
//   semi           t = eps z,             y ~ N(t + t z, 0.1),  m ~ Bernoulli(rho)
//   cfn_violation  t = (z + eps)/sqrt2,  y ~ N(t^2 + alpha z^2, 0.1)
//   counterexample eps = a, z = b ~ U(0,1), t = c(a, b), y = z
enum class ScenarioKind { mult_outcome, mult_treatment, semi, cfn_violation, counterexample };

// Accepts both `mult-outcome` and `mult_outcome` spellings.
ScenarioKind parse_scenario(const std::string& name);
std::string scenario_name(ScenarioKind kind);

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::mult_outcome;
  double alpha = 1.0;
  double rho = 1.0;  // semi only
  std::size_t n = 5000;
  std::uint64_t seed = 0;
};

inline constexpr double kOutcomeNoiseVariance = 0.1;

Dataset generate(const ScenarioSpec& spec);

// tau(t) = E[y | do(t)]. Throws DomainError for the counterexample.
std::function<double(double)> true_effect_fn(const ScenarioSpec& spec);

struct CounterexampleTable {
  std::vector<double> a, b, c;
};

// c = a + b wrapped into [0, 1): marginally uniform and independent of a and
// of b, yet (c, b) depends on a.
double wrap_sum(double a, double b);
CounterexampleTable generate_counterexample(std::size_t n, std::uint64_t seed);
// b from (c, a): c - a if c > a, else c - a + 1.
double recover_b(double c, double a);

}  // namespace gcfn::sim
