#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "gcfn/error.hpp"
#include "gcfn/eval.hpp"
#include "gcfn/rng.hpp"
#include "gcfn/simgen.hpp"
#include "support/gradcheck.hpp"

using namespace gcfn;

TEST_CASE("effect rmse") {
  const auto id = [](double t) { return t; };
  outcome::EffectCurve c{{-1.0, 0.0, 1.0}, {-1.0, 0.0, 1.0}, {}};
  CHECK(eval::effect_rmse(c, id) == 0.0);
  c.tau_hat = {-0.5, 0.5, 1.5};
  CHECK(eval::effect_rmse(c, id) == doctest::Approx(0.5).epsilon(1e-15));

  outcome::EffectCurve two{{0.0, 1.0}, {0.3, 1.4}, {}};
  CHECK(eval::effect_rmse(two, id) == doctest::Approx(0.35355).epsilon(1e-5));
  // Row order does not matter.
  outcome::EffectCurve rev{{1.0, 0.0}, {1.4, 0.3}, {}};
  CHECK(eval::effect_rmse(rev, id) == eval::effect_rmse(two, id));
}

TEST_CASE("plug-in mutual information") {
  const std::vector<std::size_t> constant(100, 3), other = [] {
    std::vector<std::size_t> v(100);
    for (std::size_t i = 0; i < 100; ++i) v[i] = i % 7;
    return v;
  }();
  CHECK(eval::plugin_mutual_information(constant, other) == 0.0);
  CHECK(eval::plugin_mutual_information(other, other) == doctest::Approx(std::log(7.0)).epsilon(0.01));

  SplitMix64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::size_t> a(60), b(60);
    for (auto& v : a) v = rng.below(4);
    for (auto& v : b) v = rng.below(6);
    const double mi = eval::plugin_mutual_information(a, b);
    CHECK(mi >= 0.0);
    CHECK(mi <= std::log(4.0) + 1e-12);
  }
}

TEST_CASE("equal-frequency bins") {
  std::vector<double> v(100);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sin(static_cast<double>(i));
  const auto b = eval::equal_frequency_bins(v, 10);
  std::vector<int> counts(10, 0);
  for (auto x : b) ++counts[x];
  for (int c : counts) CHECK(c == 10);
}

TEST_CASE("independence test") {
  SplitMix64 rng(5);
  std::vector<double> eps(2000);
  for (auto& e : eps) e = rng.normal();
  const auto bins = eval::equal_frequency_bins(eps, 10);
  const auto dep = eval::independence_test(bins, eps, 10, 199, 1);
  CHECK(dep.p_value < 0.01);
  CHECK(dep.mi_estimate == doctest::Approx(std::log(10.0)).epsilon(0.1));

  const std::vector<std::size_t> constant(2000, 0);
  const auto flat = eval::independence_test(constant, eps, 10, 199, 1);
  CHECK(flat.mi_estimate == 0.0);
  CHECK(flat.p_value == 1.0);

  std::vector<std::size_t> few(20);
  for (auto& v : few) v = rng.below(5);
  const auto sparse = eval::independence_test(few, std::span<const double>(eps).first(20), 10, 99, 2);
  CHECK_FALSE(sparse.warnings.empty());

  CHECK_THROWS_AS(eval::independence_test(bins, eps, 1, 199, 1), ConfigError);
  CHECK_THROWS_AS(eval::independence_test(bins, eps, 10, 98, 1), ConfigError);
}

TEST_CASE("reconstruction error") {
  vde::VdeConfig c;
  c.k_categories = 2;
  c.hidden_units = 3;
  auto m = vde::init_vde(c);
  for (auto& layer : m.params.decoder.layers) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  m.params.table << 0.0, 0.0;
  Dataset one;
  one.t = {1.0};
  one.eps = {0.4};
  one.y = {0.0};
  one.z = {std::nullopt};
  one.m = {0};
  CHECK(eval::reconstruction_error(m, one) == doctest::Approx(1.0).epsilon(1e-15));
  m.params.table << 1.0, 1.0;
  CHECK(eval::reconstruction_error(m, one) == 0.0);

  auto cat = testing::toy_vde(vde::DecoderStructure::categorical, 3, 0.1, 0.0, 1);
  CHECK_THROWS_AS(eval::reconstruction_error(cat, one), DomainError);
}

TEST_CASE("reconstruction error matches a recomputation from the checkpoint") {
  const auto d = sim::generate({sim::ScenarioKind::mult_outcome, 1.0, 1.0, 1000, 3});
  vde::VdeConfig c;
  c.epochs = 10;
  c.batch_size = 200;
  const auto m = vde::train_vde(d, c);
  const auto j = vde::to_json(m);

  // Independent route: read the checkpoint's raw arrays and evaluate with
  // plain loops over mlp_apply.
  const auto back = vde::vde_from_json(j);
  double total = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Eigen::VectorXd q = vde::encoder_posterior(back, d.t[i], d.eps[i]).probs;
    const double g = nn::mlp_apply(back.params.decoder, Eigen::VectorXd::Constant(1, d.eps[i]))(0);
    for (Eigen::Index k = 0; k < q.size(); ++k) {
      const double r = d.t[i] - (back.params.table(k) + g);
      total += q(k) * r * r;
    }
  }
  CHECK(std::abs(total / d.size() - eval::reconstruction_error(m, d)) < 1e-9);
}

TEST_CASE("wasserstein-1") {
  const std::vector<double> a{0.3, -1.0, 2.0, 0.5};
  CHECK(eval::wasserstein1(a, a) == 0.0);
  const std::vector<double> b{1.3, 0.0, 3.0, 1.5};
  CHECK(eval::wasserstein1(a, b) == doctest::Approx(1.0).epsilon(1e-14));
  SplitMix64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(30), y(17), wx(30), wy(17);
    for (auto& v : x) v = rng.normal();
    for (auto& v : y) v = rng.normal() + 0.5;
    for (auto& v : wx) v = rng.uniform();
    for (auto& v : wy) v = rng.uniform();
    CHECK(eval::wasserstein1(x, wx, y, wy) == doctest::Approx(eval::wasserstein1(y, wy, x, wx)).epsilon(1e-12));
    CHECK(eval::wasserstein1(x, wx, x, wx) == 0.0);
  }
  CHECK_THROWS_AS(eval::wasserstein1(a, std::vector<double>{0, 0, 0, 0}, b, std::vector<double>{1, 1, 1, 1}),
                  DomainError);
}

TEST_CASE("bound audit in the exact-recovery limit") {
  // t = z + g(eps) with g = 0 and the decoder table holding z exactly: one category per
  // distinct z value and a posterior that is one-hot on it.
  Dataset d;
  const std::vector<double> zs{-1.0, 0.0, 1.0};
  SplitMix64 rng(4);
  for (int i = 0; i < 300; ++i) {
    const double z = zs[i % 3], e = rng.normal();
    d.t.push_back(z);
    d.eps.push_back(e);
    d.y.push_back(d.t.back());
    d.z.push_back(z);
    d.m.push_back(1);
  }
  vde::VdeConfig c;
  c.k_categories = 3;
  c.hidden_units = 3;
  auto m = vde::init_vde(c);
  for (auto& layer : m.params.decoder.layers) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  m.params.table << -1.0, 0.0, 1.0;
  // Encoder logits (100 relu(-t), 50, 100 relu(t)) select the matching category.
  auto& L = m.params.encoder.layers;
  for (auto& layer : L) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  L[0].weight(0, 0) = 1.0;
  L[0].weight(1, 0) = -1.0;
  L[1].weight(0, 0) = 1.0;
  L[1].weight(1, 1) = 1.0;
  L[2].weight(0, 1) = 100.0;
  L[2].weight(2, 0) = 100.0;
  L[2].bias(1) = 50.0;

  outcome::OutcomeConfig oc;
  oc.partially_linear = true;
  auto out = outcome::init_outcome(3, oc);
  out.slope = 1.0;
  out.offsets.setZero();
  const auto r = eval::bound_check_additive(m, out, d, [](double t) { return t; }, 1.0, 1.0);
  CHECK(r.delta_hat < 1e-12);
  CHECK(r.lhs == 0.0);
  CHECK(std::isfinite(r.rhs));
  CHECK(r.satisfied);
  CHECK(r.gamma_hat >= 0.0);
  CHECK(r.zhat_centered_mean_abs >= 0.0);

  auto mult = m;
  mult.config.decoder_structure = vde::DecoderStructure::multiplicative;
  CHECK_THROWS_AS(eval::bound_check_additive(mult, out, d, [](double t) { return t; }, 1.0, 1.0), DomainError);
}

TEST_CASE("kappa selection bookkeeping") {
  const auto d = sim::generate({sim::ScenarioKind::mult_outcome, 1.0, 1.0, 300, 8});
  vde::VdeConfig vc;
  vc.k_categories = 5;
  vc.hidden_units = 8;
  vc.epochs = 2;
  vc.batch_size = 60;
  outcome::OutcomeConfig oc;
  oc.hidden_units = 8;
  oc.epochs = 2;
  oc.batch_size = 60;

  const std::vector<double> single{0.2};
  const auto one = eval::select_kappa(d, single, vc, oc, 0.2, 1);
  CHECK(one.best_kappa == 0.2);
  CHECK(one.table.size() == 1);

  // kappa = 1 is invalid: its entry fails and the others carry on.
  const std::vector<double> grid{0.1, 1.0, 0.3};
  const auto sel = eval::select_kappa(d, grid, vc, oc, 0.2, 1);
  CHECK(sel.table.size() == 3);
  CHECK_FALSE(sel.table[1].success);
  CHECK_FALSE(sel.table[1].message.empty());
  CHECK((sel.best_kappa == 0.1 || sel.best_kappa == 0.3));
  const auto csv = eval::kappa_table_csv(sel);
  CHECK(csv.rfind("kappa,status,heldout_loglik,message\n", 0) == 0);

  const std::vector<double> bad{1.0, 2.0};
  CHECK_THROWS_AS(eval::select_kappa(d, bad, vc, oc, 0.2, 1), TrainingError);
  CHECK_THROWS_AS(eval::select_kappa(d, single, vc, oc, 1.0, 1), ConfigError);
}

TEST_CASE("a row-shuffled control function scores a lower held-out likelihood") {
  const auto d = sim::generate({sim::ScenarioKind::mult_outcome, 1.0, 1.0, 2500, 19});
  const auto split = split_dataset(d, 0.2, 4);
  vde::VdeConfig vc;
  vc.seed = 5;
  const auto v = vde::train_vde(split.train, vc);
  outcome::OutcomeConfig oc;
  oc.seed = 6;
  const auto m = outcome::fit_outcome(split.train, v, oc);
  const auto& h = split.heldout;
  const Eigen::MatrixXd q = vde::encoder_posteriors(v, h.t, h.eps);
  SplitMix64 rng(7);
  const auto perm = permutation(h.size(), rng);
  Eigen::MatrixXd shuffled(q.rows(), q.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) shuffled.row(i) = q.row(perm[i]);
  const double kept = outcome::expected_loglik(m, h.t, h.y, q);
  const double broken = outcome::expected_loglik(m, h.t, h.y, shuffled);
  INFO("kept " << kept << " shuffled " << broken);
  CHECK(kept > broken);
}

TEST_CASE("trained additive model: diagnostics and bound report") {
  // With a unit-variance Gaussian decoder the objective trades 0.5 * MSE
  // against kappa * I(zhat; t, eps). For a Gaussian confounder the optimal
  // distortion D = s^2 exp(-2 I) satisfies dD/dI = -2D, so the optimum sits at
  // MSE = kappa: the 0.05 reconstruction target needs kappa below 0.05.
  const auto d = sim::generate({sim::ScenarioKind::mult_outcome, 1.0, 1.0, 5000, 1});
  for (double kappa : {0.02, 0.1}) {
    vde::VdeConfig vc;
    vc.seed = 1;
    vc.kappa = kappa;
    const auto v = vde::train_vde(d, vc);
    const auto rep = eval::diagnose(v, d);
    INFO("kappa " << kappa << " reconstruction " << *rep.reconstruction_mse << " p " << rep.permutation_p_value);
    CHECK(std::abs(*rep.reconstruction_mse - kappa) <= 0.1 * kappa);
    if (kappa < 0.05) CHECK(*rep.reconstruction_mse <= 0.05);
    CHECK(rep.permutation_p_value > 0.01);
    CHECK(rep.mi_estimate >= 0.0);
    CHECK(rep.kl_term_value >= 0.0);
    if (kappa != 0.1) continue;

    outcome::OutcomeConfig oc;
    oc.epochs = 20;
    const auto m = outcome::fit_outcome(d, v, oc);
    const auto b =
        eval::bound_check_additive(v, m, d, [](double t) { return t; }, std::sqrt(2.0), 1.0 / std::sqrt(2.0));
    for (double x : {b.lhs, b.rhs, b.delta_hat, b.gamma_hat, b.zhat_centered_mean_abs}) {
      CHECK(std::isfinite(x));
      CHECK(x >= 0.0);
    }
  }
}
