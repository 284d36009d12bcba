#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "gcfn/error.hpp"
#include "gcfn/oracle.hpp"
#include "gcfn/rng.hpp"

using namespace gcfn;
using namespace gcfn::oracle;

namespace {

// Single eps and delta state unless stated; t = g_table entry.
DiscreteScm small_scm(std::size_t nz, std::size_t ne, std::vector<std::size_t> g, std::size_t nt) {
  DiscreteScm s;
  for (std::size_t i = 0; i < nz; ++i) s.z_labels.push_back("z" + std::to_string(i));
  for (std::size_t i = 0; i < ne; ++i) s.eps_labels.push_back("e" + std::to_string(i));
  s.delta_labels = {"d0"};
  for (std::size_t i = 0; i < nt; ++i) s.t_labels.push_back("t" + std::to_string(i));
  s.pz.assign(nz, 1.0 / nz);
  s.peps.assign(ne, 1.0 / ne);
  s.pdelta = {1.0};
  s.g_table = std::move(g);
  s.outcome_table.resize(nt * nz);
  for (std::size_t t = 0; t < nt; ++t)
    for (std::size_t z = 0; z < nz; ++z) s.outcome_table[t * nz + z] = 1.0 + t + 2.0 * z;
  return s;
}

// zhat = z, read back through a lookup from (t, eps).
DiscreteControlFunction identity_cf(const DiscreteScm& s) {
  DiscreteControlFunction cf;
  cf.zhat_labels = s.z_labels;
  cf.q_table.assign(s.nt() * s.ne() * s.nz(), 0.0);
  for (std::size_t z = 0; z < s.nz(); ++z)
    for (std::size_t e = 0; e < s.ne(); ++e) cf.q_table[(s.g(z, e, 0) * s.ne() + e) * s.nz() + z] = 1.0;
  // Unreachable (t, eps) cells get a uniform row.
  for (std::size_t t = 0; t < s.nt(); ++t)
    for (std::size_t e = 0; e < s.ne(); ++e) {
      double* row = &cf.q_table[(t * s.ne() + e) * s.nz()];
      if (std::accumulate(row, row + s.nz(), 0.0) == 0.0) std::fill(row, row + s.nz(), 1.0 / s.nz());
    }
  return cf;
}

DiscreteControlFunction constant_cf(const DiscreteScm& s) {
  DiscreteControlFunction cf;
  cf.zhat_labels = {"c"};
  cf.q_table.assign(s.nt() * s.ne(), 1.0);
  return cf;
}

}  // namespace

TEST_CASE("reconstruction") {
  // t = (z + e) mod 3.
  std::vector<std::size_t> g;
  for (std::size_t z = 0; z < 3; ++z)
    for (std::size_t e = 0; e < 3; ++e) g.push_back((z + e) % 3);
  const auto s = small_scm(3, 3, g, 3);
  CHECK(check_reconstruction(s, identity_cf(s)).ok);
  const auto bad = check_reconstruction(s, constant_cf(s));
  CHECK_FALSE(bad.ok);
  REQUIRE(bad.witness.has_value());
  CHECK(bad.witness->t1 != bad.witness->t2);
  CHECK(check_reconstruction(build_mod_counterexample(3).first, build_mod_counterexample(3).second).ok);
}

TEST_CASE("joint independence") {
  std::vector<std::size_t> g;
  for (std::size_t z = 0; z < 2; ++z)
    for (std::size_t e = 0; e < 2; ++e) g.push_back(2 * z + e);
  const auto s = small_scm(2, 2, g, 4);
  const auto ok = check_joint_independence(s, identity_cf(s));
  CHECK(ok.ok);
  CHECK(ok.max_deviation == 0.0);

  // zhat = eps, read from t = 2z + e.
  DiscreteControlFunction dep;
  dep.zhat_labels = {"a", "b"};
  dep.q_table.assign(4 * 2 * 2, 0.0);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t e = 0; e < 2; ++e) dep.q_table[(t * 2 + e) * 2 + e] = 1.0;
  const auto bad = check_joint_independence(s, dep);
  CHECK_FALSE(bad.ok);
  CHECK(bad.max_deviation > 1e-12);
}

TEST_CASE("positivity") {
  // t = e: the instrument alone moves the treatment.
  std::vector<std::size_t> g;
  for (std::size_t z = 0; z < 2; ++z)
    for (std::size_t e = 0; e < 4; ++e) g.push_back(e);
  const auto s = small_scm(2, 4, g, 4);
  const auto p = check_positivity(s);
  CHECK(p.ok);
  CHECK(p.c_min == doctest::Approx(0.25).epsilon(1e-15));

  // t = z: no instrument influence.
  std::vector<std::size_t> g2;
  for (std::size_t z = 0; z < 3; ++z)
    for (std::size_t e = 0; e < 2; ++e) g2.push_back(z);
  CHECK_FALSE(check_positivity(small_scm(3, 2, g2, 3)).ok);
}

TEST_CASE("effects") {
  std::vector<std::size_t> g;
  for (std::size_t z = 0; z < 3; ++z)
    for (std::size_t e = 0; e < 3; ++e) g.push_back((z + 2 * e) % 3);
  auto s = small_scm(3, 3, g, 3);
  s.pz = {0.2, 0.5, 0.3};
  s.peps = {0.6, 0.1, 0.3};
  const auto cf = identity_cf(s);
  for (std::size_t t = 0; t < 3; ++t) CHECK(std::abs(cf_effect(s, cf, t) - true_effect(s, t)) <= 1e-12);

  std::fill(s.outcome_table.begin(), s.outcome_table.end(), 2.5);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(true_effect(s, t) == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(cf_effect(s, cf, t) == doctest::Approx(2.5).epsilon(1e-15));
  }
}

TEST_CASE("enumerated joints are normalized") {
  SplitMix64 rng(11);
  for (int i = 0; i < 20; ++i) {
    const auto [s, cf] = random_identity_scm(rng);
    double total = 0.0;
    for (const auto& c : enumerate_joint(s, cf)) total += c.p;
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("premises imply effect equality on random models") {
  SplitMix64 rng(1);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto [s, cf] = random_identity_scm(rng);
    const auto r = verify_identification(s, cf);
    CHECK(r.premises_ok);
    CHECK(r.effects_match);
    CHECK(r.consistent);
    worst = std::max(worst, r.max_effect_gap);
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("mod-N counterexample") {
  const std::vector<std::pair<std::size_t, std::vector<double>>> cases{
      {3, {-0.75, 0.0, 0.75}}, {5, {-5.0 / 3.0, -5.0 / 6.0, 0.0, 5.0 / 6.0, 5.0 / 3.0}}};
  for (const auto& [n, gaps] : cases) {
    const auto [s, cf] = build_mod_counterexample(n);
    const auto ze = check_marginal_independence(s, cf, Variable::zhat, Variable::eps);
    const auto zz = check_marginal_independence(s, cf, Variable::zhat, Variable::z);
    CHECK(ze.ok);
    CHECK(zz.ok);
    CHECK(ze.max_deviation < 1e-12);
    CHECK(zz.max_deviation < 1e-12);
    CHECK_FALSE(check_joint_independence(s, cf).ok);

    const auto r = verify_identification(s, cf);
    CHECK(r.reconstruction_ok);
    CHECK(r.positivity_ok);
    CHECK(r.c_min == doctest::Approx(1.0 / (2.0 * n)).epsilon(1e-14));
    CHECK_FALSE(r.joint_independence_ok);
    CHECK_FALSE(r.premises_ok);
    CHECK(r.max_effect_gap > 0.1);
    REQUIRE(r.rows.size() == n);
    for (std::size_t t = 0; t < n; ++t) {
      CHECK(r.rows[t].true_effect == doctest::Approx((n - 1) / 2.0).epsilon(1e-14));
      REQUIRE(r.rows[t].cf_effect.has_value());
      CHECK(*r.rows[t].cf_effect - r.rows[t].true_effect == doctest::Approx(gaps[t]).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(build_mod_counterexample(2), ConfigError);
}

TEST_CASE("positivity failure with an exact confounder readout") {
  const auto [s, cf] = build_positivity_example();
  const auto r = verify_identification(s, cf);
  CHECK_FALSE(r.positivity_ok);
  CHECK_FALSE(r.premises_ok);
  CHECK(r.joint_independence_ok);
  for (const auto& row : r.rows) {
    REQUIRE(row.cf_effect.has_value());
    CHECK(std::abs(*row.cf_effect - row.true_effect) < 1e-12);
  }
}

TEST_CASE("json round trip") {
  SplitMix64 rng(3);
  const auto [s, cf] = random_identity_scm(rng);
  const nlohmann::json j{{"scm", to_json(s)}, {"control_function", to_json(cf, s)}};
  const auto [s2, cf2] = model_from_json(j);
  CHECK(s2.g_table == s.g_table);
  CHECK(s2.pz == s.pz);
  CHECK(cf2.q_table == cf.q_table);
  auto bad = j;
  bad["scm"]["pz"][0] = 5.0;
  CHECK_THROWS(model_from_json(bad));
}
