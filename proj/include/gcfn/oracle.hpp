#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gcfn/rng.hpp"

namespace gcfn::oracle {

// Finite structural model t = g(z, eps, delta) with independent factors and a
// conditional-mean outcome table E[y | t, z]. Everything is stored by index;
// labels are kept for I/O only.
struct DiscreteScm {
  std::vector<std::string> z_labels, eps_labels, delta_labels, t_labels;
  std::vector<double> pz, peps, pdelta;
  std::vector<std::size_t> g_table;   // [(z * E + e) * D + d] -> t
  std::vector<double> outcome_table;  // [t * Z + z]

  std::size_t nz() const { return pz.size(); }
  std::size_t ne() const { return peps.size(); }
  std::size_t nd() const { return pdelta.size(); }
  std::size_t nt() const { return t_labels.size(); }
  std::size_t g(std::size_t z, std::size_t e, std::size_t d) const { return g_table[(z * ne() + e) * nd() + d]; }
  double outcome(std::size_t t, std::size_t z) const { return outcome_table[t * nz() + z]; }

  // Throws ConfigError.
  void validate() const;
};

// q(zhat | t, eps).
struct DiscreteControlFunction {
  std::vector<std::string> zhat_labels;
  std::vector<double> q_table;  // [(t * E + e) * H + h]

  std::size_t nh() const { return zhat_labels.size(); }
  double q(std::size_t t, std::size_t e, std::size_t h, std::size_t ne) const {
    return q_table[(t * ne + e) * nh() + h];
  }

  void validate(const DiscreteScm& scm) const;
};

// A positive-probability cell of the joint over (z, eps, delta, t, zhat).
struct JointCell {
  std::size_t z, e, d, t, h;
  double p;
};

std::vector<JointCell> enumerate_joint(const DiscreteScm& scm, const DiscreteControlFunction& cf);

struct ReconstructionWitness {
  std::size_t zhat, eps, t1, t2;
};

struct ReconstructionCheck {
  bool ok = true;
  std::optional<ReconstructionWitness> witness;
};

// True iff every positive (zhat, eps) pair carries exactly one t.
ReconstructionCheck check_reconstruction(const DiscreteScm& scm, const DiscreteControlFunction& cf);

struct IndependenceCheck {
  bool ok = true;
  double max_deviation = 0.0;
};

// max |p(eps, z, zhat, delta) - p(eps) p(z, zhat, delta)| <= tol.
IndependenceCheck check_joint_independence(const DiscreteScm& scm, const DiscreteControlFunction& cf,
                                           double tol = 1e-12);

enum class Variable { z, eps, delta, t, zhat };

// max |p(a, b) - p(a) p(b)| <= tol for two of the enumerated variables.
IndependenceCheck check_marginal_independence(const DiscreteScm& scm, const DiscreteControlFunction& cf,
                                              Variable a, Variable b, double tol = 1e-12);

struct PositivityCheck {
  bool ok = true;
  double c_min = 0.0;
};

// c_min = min over t with positive mass and all (z, delta) of P(t | z, delta).
PositivityCheck check_positivity(const DiscreteScm& scm);

// sum_z p(z) E[y | t, z].
double true_effect(const DiscreteScm& scm, std::size_t t);
// sum_zhat q(zhat) E[y | t, zhat] from the exact joint. Throws DomainError if
// some zhat of positive mass never co-occurs with t.
double cf_effect(const DiscreteScm& scm, const DiscreteControlFunction& cf, std::size_t t);

struct EffectRow {
  std::size_t t = 0;
  double true_effect = 0.0;
  std::optional<double> cf_effect;  // absent on a positivity violation
  double gap = 0.0;                 // infinite when cf_effect is absent
};

struct IdentificationReport {
  bool reconstruction_ok = false;
  std::optional<ReconstructionWitness> witness;
  bool joint_independence_ok = false;
  double joint_max_deviation = 0.0;
  bool positivity_ok = false;
  double c_min = 0.0;
  bool premises_ok = false;
  bool effects_match = false;  // max_effect_gap <= tolerance
  double max_effect_gap = 0.0;
  double tolerance = 0.0;
  // False only if every premise passed and the effects still differ.
  bool consistent = true;
  std::vector<EffectRow> rows;
};

IdentificationReport verify_identification(const DiscreteScm& scm, const DiscreteControlFunction& cf, double tol = 1e-9);

// eps = (a, u) with a uniform on Z_N and u uniform on {0, 1}; z = b uniform on
// Z_N; t = b + a [u = 0] mod N; zhat = (a + b) mod N; E[y | t, z] = z.
// zhat is independent of eps and of z separately, every premise except joint
// independence holds, and the control-function effect is wrong.
std::pair<DiscreteScm, DiscreteControlFunction> build_mod_counterexample(std::size_t n);

// z, delta, eps uniform on {0, 1}, t = (2 delta + z + eps) mod 4, so t is
// independent of eps, and zhat = z read back from (t, eps). Positivity and
// reconstruction fail while the control-function effect is still exact.
std::pair<DiscreteScm, DiscreteControlFunction> build_positivity_example();

// Random model with supports of size 2..max_support whose treatment
// g(z, eps) = tau((rho(z) + pi(eps)) mod N) is injective in z and surjective
// in eps; the returned control function recovers z exactly.
std::pair<DiscreteScm, DiscreteControlFunction> random_identity_scm(SplitMix64& rng, std::size_t max_support = 5);

nlohmann::json to_json(const DiscreteScm& scm);
nlohmann::json to_json(const DiscreteControlFunction& cf, const DiscreteScm& scm);
// {"scm": ..., "control_function": ...}.
std::pair<DiscreteScm, DiscreteControlFunction> model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const IdentificationReport& report, const DiscreteScm& scm, const DiscreteControlFunction& cf);

}  // namespace gcfn::oracle
