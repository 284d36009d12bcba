#include "gcfn/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gcfn/error.hpp"

namespace gcfn::oracle {

namespace {

constexpr double kSumTol = 1e-12;

void check_distribution(const std::vector<double>& p, const std::vector<std::string>& labels, const char* name) {
  if (p.empty()) throw ConfigError(std::string(name) + ": empty support");
  if (p.size() != labels.size()) throw ConfigError(std::string(name) + ": probabilities and labels differ in length");
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + ": negative or non-finite probability");
    s += v;
  }
  if (std::abs(s - 1.0) > kSumTol) throw ConfigError(std::string(name) + ": probabilities sum to " + std::to_string(s));
}

std::size_t var_size(const DiscreteScm& scm, const DiscreteControlFunction& cf, Variable v) {
  switch (v) {
    case Variable::z: return scm.nz();
    case Variable::eps: return scm.ne();
    case Variable::delta: return scm.nd();
    case Variable::t: return scm.nt();
    case Variable::zhat: return cf.nh();
  }
  return 0;
}

std::size_t var_value(const JointCell& c, Variable v) {
  switch (v) {
    case Variable::z: return c.z;
    case Variable::eps: return c.e;
    case Variable::delta: return c.d;
    case Variable::t: return c.t;
    case Variable::zhat: return c.h;
  }
  return 0;
}

std::vector<std::string> numbered(std::size_t n) {
  std::vector<std::string> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::to_string(i);
  return out;
}

std::size_t index_of(const std::vector<std::string>& labels, const std::string& s, const char* what) {
  const auto it = std::find(labels.begin(), labels.end(), s);
  if (it == labels.end()) throw ParseError(std::string("unknown ") + what + " label '" + s + "'");
  return static_cast<std::size_t>(it - labels.begin());
}

}  // namespace

void DiscreteScm::validate() const {
  check_distribution(pz, z_labels, "pz");
  check_distribution(peps, eps_labels, "peps");
  check_distribution(pdelta, delta_labels, "pdelta");
  if (t_labels.empty()) throw ConfigError("treatment support is empty");
  if (g_table.size() != nz() * ne() * nd()) throw ConfigError("g_table must cover every (z, eps, delta)");
  for (auto t : g_table) {
    if (t >= nt()) throw ConfigError("g_table maps outside the treatment support");
  }
  if (outcome_table.size() != nt() * nz()) throw ConfigError("outcome_table must cover every (t, z)");
  for (double v : outcome_table) {
    if (!std::isfinite(v)) throw ConfigError("outcome_table has a non-finite entry");
  }
}

void DiscreteControlFunction::validate(const DiscreteScm& scm) const {
  if (zhat_labels.empty()) throw ConfigError("control function support is empty");
  if (q_table.size() != scm.nt() * scm.ne() * nh()) throw ConfigError("q_table must cover every (t, eps)");
  for (std::size_t row = 0; row < scm.nt() * scm.ne(); ++row) {
    double s = 0.0;
    for (std::size_t h = 0; h < nh(); ++h) {
      const double v = q_table[row * nh() + h];
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("q_table has a negative or non-finite entry");
      s += v;
    }
    if (std::abs(s - 1.0) > kSumTol) throw ConfigError("q_table row does not sum to 1");
  }
}

std::vector<JointCell> enumerate_joint(const DiscreteScm& scm, const DiscreteControlFunction& cf) {
  scm.validate();
  cf.validate(scm);
  std::vector<JointCell> cells;
  for (std::size_t z = 0; z < scm.nz(); ++z) {
    for (std::size_t e = 0; e < scm.ne(); ++e) {
      for (std::size_t d = 0; d < scm.nd(); ++d) {
        const double base = scm.pz[z] * scm.peps[e] * scm.pdelta[d];
        if (base <= 0.0) continue;
        const std::size_t t = scm.g(z, e, d);
        for (std::size_t h = 0; h < cf.nh(); ++h) {
          const double p = base * cf.q(t, e, h, scm.ne());
          if (p > 0.0) cells.push_back({z, e, d, t, h, p});
        }
      }
    }
  }
  return cells;
}

ReconstructionCheck check_reconstruction(const DiscreteScm& scm, const DiscreteControlFunction& cf) {
  const auto cells = enumerate_joint(scm, cf);
  const std::size_t none = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> seen(cf.nh() * scm.ne(), none);
  ReconstructionCheck out;
  for (const auto& c : cells) {
    auto& slot = seen[c.h * scm.ne() + c.e];
    if (slot == none) {
      slot = c.t;
    } else if (slot != c.t) {
      out.ok = false;
      out.witness = ReconstructionWitness{c.h, c.e, slot, c.t};
      return out;
    }
  }
  return out;
}

IndependenceCheck check_joint_independence(const DiscreteScm& scm, const DiscreteControlFunction& cf, double tol) {
  const auto cells = enumerate_joint(scm, cf);
  const std::size_t Z = scm.nz(), E = scm.ne(), D = scm.nd(), H = cf.nh();
  std::vector<double> full(E * Z * H * D, 0.0), rest(Z * H * D, 0.0), pe(E, 0.0);
  for (const auto& c : cells) {
    const std::size_t r = (c.z * H + c.h) * D + c.d;
    full[c.e * Z * H * D + r] += c.p;
    rest[r] += c.p;
    pe[c.e] += c.p;
  }
  IndependenceCheck out;
  for (std::size_t e = 0; e < E; ++e) {
    for (std::size_t r = 0; r < rest.size(); ++r) {
      out.max_deviation = std::max(out.max_deviation, std::abs(full[e * rest.size() + r] - pe[e] * rest[r]));
    }
  }
  out.ok = out.max_deviation <= tol;
  return out;
}

IndependenceCheck check_marginal_independence(const DiscreteScm& scm, const DiscreteControlFunction& cf, Variable a,
                                              Variable b, double tol) {
  const auto cells = enumerate_joint(scm, cf);
  const std::size_t A = var_size(scm, cf, a), B = var_size(scm, cf, b);
  std::vector<double> pab(A * B, 0.0), pa(A, 0.0), pb(B, 0.0);
  for (const auto& c : cells) {
    const std::size_t i = var_value(c, a), j = var_value(c, b);
    pab[i * B + j] += c.p;
    pa[i] += c.p;
    pb[j] += c.p;
  }
  IndependenceCheck out;
  for (std::size_t i = 0; i < A; ++i) {
    for (std::size_t j = 0; j < B; ++j) {
      out.max_deviation = std::max(out.max_deviation, std::abs(pab[i * B + j] - pa[i] * pb[j]));
    }
  }
  out.ok = out.max_deviation <= tol;
  return out;
}

PositivityCheck check_positivity(const DiscreteScm& scm) {
  scm.validate();
  std::vector<double> pt(scm.nt(), 0.0);
  for (std::size_t z = 0; z < scm.nz(); ++z) {
    for (std::size_t e = 0; e < scm.ne(); ++e) {
      for (std::size_t d = 0; d < scm.nd(); ++d) pt[scm.g(z, e, d)] += scm.pz[z] * scm.peps[e] * scm.pdelta[d];
    }
  }
  PositivityCheck out;
  out.c_min = std::numeric_limits<double>::infinity();
  for (std::size_t z = 0; z < scm.nz(); ++z) {
    if (scm.pz[z] <= 0.0) continue;
    for (std::size_t d = 0; d < scm.nd(); ++d) {
      if (scm.pdelta[d] <= 0.0) continue;
      std::vector<double> cond(scm.nt(), 0.0);
      for (std::size_t e = 0; e < scm.ne(); ++e) cond[scm.g(z, e, d)] += scm.peps[e];
      for (std::size_t t = 0; t < scm.nt(); ++t) {
        if (pt[t] > 0.0) out.c_min = std::min(out.c_min, cond[t]);
      }
    }
  }
  out.ok = out.c_min > 0.0;
  return out;
}

double true_effect(const DiscreteScm& scm, std::size_t t) {
  scm.validate();
  if (t >= scm.nt()) throw ConfigError("treatment index out of range");
  double s = 0.0;
  for (std::size_t z = 0; z < scm.nz(); ++z) s += scm.pz[z] * scm.outcome(t, z);
  return s;
}

double cf_effect(const DiscreteScm& scm, const DiscreteControlFunction& cf, std::size_t t) {
  if (t >= scm.nt()) throw ConfigError("treatment index out of range");
  const auto cells = enumerate_joint(scm, cf);
  const std::size_t H = cf.nh();
  std::vector<double> ph(H, 0.0), pth(H, 0.0), num(H, 0.0);
  for (const auto& c : cells) {
    ph[c.h] += c.p;
    if (c.t != t) continue;
    pth[c.h] += c.p;
    num[c.h] += c.p * scm.outcome(t, c.z);
  }
  double s = 0.0;
  for (std::size_t h = 0; h < H; ++h) {
    if (ph[h] <= 0.0) continue;
    if (pth[h] <= 0.0) {
      throw DomainError("positivity violation: t = " + scm.t_labels[t] + " never occurs with zhat = " +
                        cf.zhat_labels[h]);
    }
    s += ph[h] * (num[h] / pth[h]);
  }
  return s;
}

IdentificationReport verify_identification(const DiscreteScm& scm, const DiscreteControlFunction& cf, double tol) {
  IdentificationReport rep;
  rep.tolerance = tol;
  const auto recon = check_reconstruction(scm, cf);
  rep.reconstruction_ok = recon.ok;
  rep.witness = recon.witness;
  const auto joint = check_joint_independence(scm, cf);
  rep.joint_independence_ok = joint.ok;
  rep.joint_max_deviation = joint.max_deviation;
  const auto pos = check_positivity(scm);
  rep.positivity_ok = pos.ok;
  rep.c_min = pos.c_min;
  rep.premises_ok = rep.reconstruction_ok && rep.joint_independence_ok && rep.positivity_ok;

  const auto cells = enumerate_joint(scm, cf);
  std::vector<double> pt(scm.nt(), 0.0);
  for (const auto& c : cells) pt[c.t] += c.p;
  for (std::size_t t = 0; t < scm.nt(); ++t) {
    if (pt[t] <= 0.0) continue;
    EffectRow row;
    row.t = t;
    row.true_effect = true_effect(scm, t);
    try {
      row.cf_effect = cf_effect(scm, cf, t);
      row.gap = std::abs(*row.cf_effect - row.true_effect);
    } catch (const DomainError&) {
      row.gap = std::numeric_limits<double>::infinity();
    }
    rep.max_effect_gap = std::max(rep.max_effect_gap, row.gap);
    rep.rows.push_back(row);
  }
  rep.effects_match = rep.max_effect_gap <= tol;
  rep.consistent = !rep.premises_ok || rep.effects_match;
  return rep;
}

std::pair<DiscreteScm, DiscreteControlFunction> build_mod_counterexample(std::size_t n) {
  if (n < 3) throw ConfigError("mod-N counterexample needs N >= 3");
  DiscreteScm scm;
  scm.z_labels = numbered(n);
  scm.t_labels = numbered(n);
  scm.delta_labels = {"0"};
  scm.pdelta = {1.0};
  scm.pz.assign(n, 1.0 / static_cast<double>(n));
  // eps index = a * 2 + u.
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t u = 0; u < 2; ++u) scm.eps_labels.push_back(std::to_string(a) + "/" + std::to_string(u));
  }
  const std::size_t E = 2 * n;
  scm.peps.assign(E, 1.0 / static_cast<double>(E));
  scm.g_table.resize(n * E);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t e = 0; e < E; ++e) {
      const std::size_t a = e / 2, u = e % 2;
      scm.g_table[b * E + e] = (b + (u == 0 ? a : 0)) % n;
    }
  }
  scm.outcome_table.resize(n * n);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t b = 0; b < n; ++b) scm.outcome_table[t * n + b] = static_cast<double>(b);
  }

  DiscreteControlFunction cf;
  cf.zhat_labels = numbered(n);
  cf.q_table.assign(n * E * n, 0.0);
  // b = t - a [u = 0], so c = a + b = t + a [u = 1].
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t e = 0; e < E; ++e) {
      const std::size_t a = e / 2, u = e % 2;
      cf.q_table[(t * E + e) * n + (t + (u == 1 ? a : 0)) % n] = 1.0;
    }
  }
  return {scm, cf};
}

std::pair<DiscreteScm, DiscreteControlFunction> build_positivity_example() {
  DiscreteScm scm;
  scm.z_labels = numbered(2);
  scm.delta_labels = numbered(2);
  scm.eps_labels = numbered(2);
  scm.t_labels = numbered(4);
  scm.pz = {0.5, 0.5};
  scm.pdelta = {0.5, 0.5};
  scm.peps = {0.5, 0.5};
  scm.g_table.resize(8);
  for (std::size_t z = 0; z < 2; ++z) {
    for (std::size_t e = 0; e < 2; ++e) {
      for (std::size_t d = 0; d < 2; ++d) scm.g_table[(z * 2 + e) * 2 + d] = (2 * d + z + e) % 4;
    }
  }
  scm.outcome_table.resize(8);
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t z = 0; z < 2; ++z) {
      scm.outcome_table[t * 2 + z] = static_cast<double>(t) * (1.0 + 2.0 * static_cast<double>(z));
    }
  }
  // z = ((t - eps) mod 4) mod 2.
  DiscreteControlFunction cf;
  cf.zhat_labels = numbered(2);
  cf.q_table.assign(4 * 2 * 2, 0.0);
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t e = 0; e < 2; ++e) cf.q_table[(t * 2 + e) * 2 + ((t + 4 - e) % 4) % 2] = 1.0;
  }
  return {scm, cf};
}

std::pair<DiscreteScm, DiscreteControlFunction> random_identity_scm(SplitMix64& rng, std::size_t max_support) {
  if (max_support < 2) throw ConfigError("max_support must be at least 2");
  const auto draw = [&](std::size_t lo, std::size_t hi) { return lo + static_cast<std::size_t>(rng.below(hi - lo + 1)); };
  const std::size_t Z = draw(2, max_support);
  const std::size_t E = draw(Z, max_support);
  const std::size_t N = draw(Z, E);

  const auto random_probs = [&](std::size_t k) {
    std::vector<double> p(k);
    double s = 0.0;
    for (auto& v : p) s += (v = rng.uniform(0.1, 1.0));
    for (auto& v : p) v /= s;
    return p;
  };

  DiscreteScm scm;
  scm.z_labels = numbered(Z);
  scm.eps_labels = numbered(E);
  scm.delta_labels = {"0"};
  scm.t_labels = numbered(N);
  scm.pz = random_probs(Z);
  scm.peps = random_probs(E);
  scm.pdelta = {1.0};

  const auto perm_n = permutation(N, rng);
  const auto perm_e = permutation(E, rng);
  const auto tau = permutation(N, rng);
  std::vector<std::size_t> rho(perm_n.begin(), perm_n.begin() + static_cast<std::ptrdiff_t>(Z));
  std::vector<std::size_t> pi(E);
  for (std::size_t i = 0; i < E; ++i) pi[perm_e[i]] = i < N ? i : static_cast<std::size_t>(rng.below(N));

  scm.g_table.resize(Z * E);
  for (std::size_t z = 0; z < Z; ++z) {
    for (std::size_t e = 0; e < E; ++e) scm.g_table[z * E + e] = tau[(rho[z] + pi[e]) % N];
  }
  scm.outcome_table.resize(N * Z);
  for (auto& v : scm.outcome_table) v = rng.uniform(-2.0, 2.0);

  DiscreteControlFunction cf;
  cf.zhat_labels = scm.z_labels;
  cf.q_table.assign(N * E * Z, 1.0 / static_cast<double>(Z));
  for (std::size_t e = 0; e < E; ++e) {
    for (std::size_t z = 0; z < Z; ++z) {
      const std::size_t t = scm.g_table[z * E + e];
      for (std::size_t h = 0; h < Z; ++h) cf.q_table[(t * E + e) * Z + h] = h == z ? 1.0 : 0.0;
    }
  }
  return {scm, cf};
}

nlohmann::json to_json(const DiscreteScm& scm) {
  nlohmann::json g = nlohmann::json::array();
  for (std::size_t z = 0; z < scm.nz(); ++z) {
    nlohmann::json ge = nlohmann::json::array();
    for (std::size_t e = 0; e < scm.ne(); ++e) {
      nlohmann::json gd = nlohmann::json::array();
      for (std::size_t d = 0; d < scm.nd(); ++d) gd.push_back(scm.t_labels[scm.g(z, e, d)]);
      ge.push_back(gd);
    }
    g.push_back(ge);
  }
  nlohmann::json outcome = nlohmann::json::array();
  for (std::size_t t = 0; t < scm.nt(); ++t) {
    std::vector<double> row(scm.outcome_table.begin() + static_cast<std::ptrdiff_t>(t * scm.nz()),
                            scm.outcome_table.begin() + static_cast<std::ptrdiff_t>((t + 1) * scm.nz()));
    outcome.push_back(row);
  }
  return {{"z_support", scm.z_labels}, {"eps_support", scm.eps_labels}, {"delta_support", scm.delta_labels},
          {"t_support", scm.t_labels}, {"pz", scm.pz},                   {"peps", scm.peps},
          {"pdelta", scm.pdelta},      {"g_table", g},                   {"outcome_table", outcome}};
}

nlohmann::json to_json(const DiscreteControlFunction& cf, const DiscreteScm& scm) {
  nlohmann::json q = nlohmann::json::array();
  for (std::size_t t = 0; t < scm.nt(); ++t) {
    nlohmann::json qe = nlohmann::json::array();
    for (std::size_t e = 0; e < scm.ne(); ++e) {
      std::vector<double> row(cf.nh());
      for (std::size_t h = 0; h < cf.nh(); ++h) row[h] = cf.q(t, e, h, scm.ne());
      qe.push_back(row);
    }
    q.push_back(qe);
  }
  return {{"zhat_support", cf.zhat_labels}, {"q_table", q}};
}

std::pair<DiscreteScm, DiscreteControlFunction> model_from_json(const nlohmann::json& j) {
  try {
    const auto& js = j.at("scm");
    DiscreteScm scm;
    scm.z_labels = js.at("z_support").get<std::vector<std::string>>();
    scm.eps_labels = js.at("eps_support").get<std::vector<std::string>>();
    scm.delta_labels = js.value("delta_support", std::vector<std::string>{"0"});
    scm.t_labels = js.at("t_support").get<std::vector<std::string>>();
    scm.pz = js.at("pz").get<std::vector<double>>();
    scm.peps = js.at("peps").get<std::vector<double>>();
    scm.pdelta = js.value("pdelta", std::vector<double>{1.0});
    const auto& g = js.at("g_table");
    if (g.size() != scm.z_labels.size()) throw ParseError("g_table: wrong number of z rows");
    for (const auto& ge : g) {
      if (ge.size() != scm.eps_labels.size()) throw ParseError("g_table: wrong number of eps entries");
      for (const auto& gd : ge) {
        if (gd.size() != scm.delta_labels.size()) throw ParseError("g_table: wrong number of delta entries");
        for (const auto& t : gd) scm.g_table.push_back(index_of(scm.t_labels, t.get<std::string>(), "treatment"));
      }
    }
    for (const auto& row : js.at("outcome_table")) {
      const auto r = row.get<std::vector<double>>();
      if (r.size() != scm.z_labels.size()) throw ParseError("outcome_table: wrong number of z entries");
      scm.outcome_table.insert(scm.outcome_table.end(), r.begin(), r.end());
    }
    scm.validate();

    const auto& jc = j.at("control_function");
    DiscreteControlFunction cf;
    cf.zhat_labels = jc.at("zhat_support").get<std::vector<std::string>>();
    const auto& q = jc.at("q_table");
    if (q.size() != scm.nt()) throw ParseError("q_table: wrong number of t rows");
    for (const auto& qe : q) {
      if (qe.size() != scm.ne()) throw ParseError("q_table: wrong number of eps entries");
      for (const auto& row : qe) {
        const auto r = row.get<std::vector<double>>();
        if (r.size() != cf.nh()) throw ParseError("q_table: wrong number of zhat entries");
        cf.q_table.insert(cf.q_table.end(), r.begin(), r.end());
      }
    }
    cf.validate(scm);
    return {scm, cf};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("oracle model: ") + e.what());
  }
}

nlohmann::json to_json(const IdentificationReport& r, const DiscreteScm& scm, const DiscreteControlFunction& cf) {
  const auto finite_or_null = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"t", scm.t_labels[row.t]},
                    {"true_effect", row.true_effect},
                    {"cf_effect", row.cf_effect ? nlohmann::json(*row.cf_effect) : nlohmann::json(nullptr)},
                    {"gap", finite_or_null(row.gap)}});
  }
  nlohmann::json j = {{"reconstruction_ok", r.reconstruction_ok},
                      {"joint_independence_ok", r.joint_independence_ok},
                      {"joint_max_deviation", r.joint_max_deviation},
                      {"positivity_ok", r.positivity_ok},
                      {"c_min", finite_or_null(r.c_min)},
                      {"premises_ok", r.premises_ok},
                      {"effects_match", r.effects_match},
                      {"max_effect_gap", finite_or_null(r.max_effect_gap)},
                      {"tolerance", r.tolerance},
                      {"consistent", r.consistent},
                      {"per_t", rows}};
  if (r.witness) {
    j["witness"] = {{"zhat", cf.zhat_labels[r.witness->zhat]},
                    {"eps", scm.eps_labels[r.witness->eps]},
                    {"t1", scm.t_labels[r.witness->t1]},
                    {"t2", scm.t_labels[r.witness->t2]}};
  }
  return j;
}

}  // namespace gcfn::oracle
