#include "gcfn/simgen.hpp"

#include <cmath>

#include "gcfn/error.hpp"
#include "gcfn/rng.hpp"

namespace gcfn::sim {

ScenarioKind parse_scenario(const std::string& name) {
  std::string s = name;
  for (auto& ch : s) ch = ch == '-' ? '_' : ch;
  if (s == "mult_outcome") return ScenarioKind::mult_outcome;
  if (s == "mult_treatment") return ScenarioKind::mult_treatment;
  if (s == "semi") return ScenarioKind::semi;
  if (s == "cfn_violation") return ScenarioKind::cfn_violation;
  if (s == "counterexample") return ScenarioKind::counterexample;
  throw ConfigError("unknown scenario kind '" + name + "'");
}

std::string scenario_name(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::mult_outcome: return "mult_outcome";
    case ScenarioKind::mult_treatment: return "mult_treatment";
    case ScenarioKind::semi: return "semi";
    case ScenarioKind::cfn_violation: return "cfn_violation";
    case ScenarioKind::counterexample: return "counterexample";
  }
  return "unknown";
}

double wrap_sum(double a, double b) {
  const double s = a + b;
  return s > 1.0 ? s - 1.0 : s;
}

double recover_b(double c, double a) { return c > a ? c - a : c - a + 1.0; }

namespace {

// Uniform on the 2^-52 grid in [0, 1): sums, wraps and differences of two such
// values are exact, so recover_b reproduces b bit-for-bit.
double grid_uniform(SplitMix64& rng) {
  return static_cast<double>(rng.next() >> 12) * 0x1.0p-52;
}

}  // namespace

Dataset generate(const ScenarioSpec& spec) {
  if (spec.n == 0) throw ConfigError("scenario n must be at least 1");
  if (spec.kind == ScenarioKind::semi && !(spec.rho >= 0.0 && spec.rho <= 1.0)) {
    throw ConfigError("rho must lie in [0, 1]");
  }
  SplitMix64 rng(spec.seed);
  const double noise_sd = std::sqrt(kOutcomeNoiseVariance);
  Dataset d;
  d.t.reserve(spec.n);
  d.eps.reserve(spec.n);
  d.y.reserve(spec.n);
  d.z.reserve(spec.n);
  d.m.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    double z = 0.0, eps = 0.0, t = 0.0, y = 0.0;
    std::uint8_t m = 1;
    switch (spec.kind) {
      case ScenarioKind::mult_outcome:
        z = rng.normal();
        eps = rng.normal();
        t = (z + eps) / std::sqrt(2.0);
        y = t + spec.alpha * t * t * z + noise_sd * rng.normal();
        break;
      case ScenarioKind::mult_treatment:
        z = rng.normal();
        eps = rng.normal();
        t = z * eps;
        y = t + spec.alpha * z + noise_sd * rng.normal();
        break;
      case ScenarioKind::semi:
        z = rng.normal();
        eps = rng.normal();
        t = eps * z;
        y = t + t * z + noise_sd * rng.normal();
        m = rng.uniform() < spec.rho ? 1 : 0;
        break;
      case ScenarioKind::cfn_violation:
        z = rng.normal();
        eps = rng.normal();
        t = (z + eps) / std::sqrt(2.0);
        y = t * t + spec.alpha * z * z + noise_sd * rng.normal();
        break;
      case ScenarioKind::counterexample: {
        eps = grid_uniform(rng);
        z = grid_uniform(rng);
        t = wrap_sum(eps, z);
        y = z;
        break;
      }
    }
    d.t.push_back(t);
    d.eps.push_back(eps);
    d.y.push_back(y);
    d.z.push_back(z);
    d.m.push_back(m);
  }
  d.metadata.scenario = scenario_name(spec.kind);
  d.metadata.alpha = spec.alpha;
  d.metadata.rho = spec.kind == ScenarioKind::semi ? spec.rho : 1.0;
  d.metadata.n = spec.n;
  d.metadata.seed = spec.seed;
  d.metadata.noise_variance = spec.kind == ScenarioKind::counterexample ? 0.0 : kOutcomeNoiseVariance;
  return d;
}

std::function<double(double)> true_effect_fn(const ScenarioSpec& spec) {
  switch (spec.kind) {
    case ScenarioKind::mult_outcome:
    case ScenarioKind::mult_treatment:
    case ScenarioKind::semi:
      return [](double t) { return t; };
    case ScenarioKind::cfn_violation: {
      const double alpha = spec.alpha;
      return [alpha](double t) { return t * t + alpha; };
    }
    case ScenarioKind::counterexample:
      break;
  }
  throw DomainError("the counterexample scenario has no scalar effect function");
}

CounterexampleTable generate_counterexample(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("counterexample n must be at least 1");
  SplitMix64 rng(seed);
  CounterexampleTable out;
  out.a.reserve(n);
  out.b.reserve(n);
  out.c.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = grid_uniform(rng);
    const double b = grid_uniform(rng);
    out.a.push_back(a);
    out.b.push_back(b);
    out.c.push_back(wrap_sum(a, b));
  }
  return out;
}

}  // namespace gcfn::sim
