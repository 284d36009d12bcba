#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include "gcfn/error.hpp"
#include "gcfn/outcome.hpp"
#include "gcfn/simgen.hpp"
#include "gcfn/vde.hpp"
#include "support/gradcheck.hpp"

using namespace gcfn;

TEST_CASE("outcome gradients match finite differences") {
  for (bool pl : {false, true}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto r = testing::check_outcome(pl, seed);
      INFO("partially_linear " << pl << " seed " << seed << " worst " << r.worst_rel);
      CHECK(r.ok());
    }
  }
}

TEST_CASE("batched prediction agrees with the one-hot network route") {
  outcome::OutcomeConfig c;
  c.hidden_units = 7;
  const auto m = outcome::init_outcome(4, c);
  const std::vector<double> t{-1.2, 0.0, 0.4, 2.0};
  const auto all = outcome::outcome_predict_all(m, t);
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t k = 0; k < 4; ++k)
      CHECK(all(i, k) == doctest::Approx(outcome::outcome_predict(m, t[i], k)).epsilon(1e-13));
  CHECK_THROWS_AS(outcome::outcome_predict(m, 0.0, 4), ConfigError);
}

TEST_CASE("estimate_effect examples") {
  outcome::OutcomeConfig c;
  c.partially_linear = true;
  auto m = outcome::init_outcome(2, c);
  m.slope = 0.0;
  m.offsets << 0.0, 4.0;
  const auto grid = outcome::make_grid(-1.0, 1.0, 5);
  const auto curve = outcome::estimate_effect(m, Eigen::Vector2d(0.25, 0.75), grid);
  for (double v : curve.tau_hat) CHECK(v == doctest::Approx(3.0).epsilon(1e-15));

  m.slope = 1.0;
  m.offsets.setZero();
  const auto ident = outcome::estimate_effect(m, Eigen::Vector2d(0.6, 0.4), grid);
  for (std::size_t i = 0; i < grid.size(); ++i) CHECK(ident.tau_hat[i] == doctest::Approx(grid[i]).epsilon(1e-15));

  CHECK_THROWS_AS(outcome::estimate_effect(m, Eigen::Vector3d(0.2, 0.3, 0.5), grid), ConfigError);
}

TEST_CASE("estimate_effect is linear in the marginal") {
  outcome::OutcomeConfig c;
  c.hidden_units = 6;
  const auto m = outcome::init_outcome(5, c);
  const auto grid = outcome::make_grid(-1.0, 1.0, 11);
  SplitMix64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd q1(5), q2(5);
    for (auto& v : q1) v = rng.uniform();
    for (auto& v : q2) v = rng.uniform();
    q1 /= q1.sum();
    q2 /= q2.sum();
    const double a = rng.uniform();
    const auto mix = outcome::estimate_effect(m, a * q1 + (1 - a) * q2, grid);
    const auto e1 = outcome::estimate_effect(m, q1, grid);
    const auto e2 = outcome::estimate_effect(m, q2, grid);
    for (std::size_t i = 0; i < grid.size(); ++i)
      CHECK(mix.tau_hat[i] == doctest::Approx(a * e1.tau_hat[i] + (1 - a) * e2.tau_hat[i]).epsilon(1e-12));
    // One-hot marginal picks out a single category.
    const auto one = outcome::estimate_effect(m, Eigen::VectorXd::Unit(5, 2), grid);
    for (std::size_t i = 0; i < grid.size(); ++i)
      CHECK(one.tau_hat[i] == doctest::Approx(outcome::outcome_predict(m, grid[i], 2)).epsilon(1e-13));
  }
}

TEST_CASE("grids and curve csv") {
  const auto g = outcome::parse_grid("-1:1:200");
  CHECK(g.size() == 200);
  CHECK(g.front() == -1.0);
  CHECK(g.back() == 1.0);
  for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] > g[i - 1]);
  CHECK_THROWS_AS(outcome::parse_grid("1:-1:5"), ConfigError);
  CHECK_THROWS_AS(outcome::parse_grid("0:1"), ConfigError);
  CHECK_THROWS_AS(outcome::parse_grid("0:1:x"), ConfigError);

  outcome::EffectCurve c{{0.0, 0.5}, {1.0, 2.0}, std::vector<double>{1.0, 1.5}};
  CHECK(outcome::curve_to_csv(c).rfind("t,tau_hat,tau_true\n", 0) == 0);
  c.tau_true.reset();
  CHECK(outcome::curve_to_csv(c) == "t,tau_hat\n0,1\n0.5,2\n");
  c.grid = {0.5, 0.0};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("marginal control") {
  vde::VdeConfig vc;
  vc.k_categories = 6;
  vc.hidden_units = 5;
  const auto v = vde::init_vde(vc);
  const auto d = testing::toy_batch(30, 1);
  const auto q = outcome::marginal_control(d, v);
  CHECK(std::abs(q.sum() - 1.0) < 1e-9);
  const auto one = d.subset(std::vector<std::size_t>{3});
  CHECK((outcome::marginal_control(one, v) - vde::encoder_posterior(v, d.t[3], d.eps[3]).probs).norm() < 1e-15);
}

TEST_CASE("checkpoint round trip") {
  outcome::OutcomeConfig c;
  c.hidden_units = 4;
  c.epochs = 2;
  c.batch_size = 10;
  const auto d = testing::toy_batch(40, 2);
  Eigen::MatrixXd q = Eigen::MatrixXd::Constant(40, 3, 1.0 / 3.0);
  const auto m = outcome::fit_outcome_weighted(d.t, d.y, q, c);
  const auto back = outcome::outcome_from_json(outcome::to_json(m));
  CHECK(outcome::to_json(back).dump() == outcome::to_json(m).dump());
  auto j = outcome::to_json(m);
  j["format"] = "other";
  CHECK_THROWS_AS(outcome::outcome_from_json(j), ParseError);
  CHECK_THROWS_AS(outcome::fit_outcome_weighted(d.t, d.y, Eigen::MatrixXd::Constant(39, 3, 1.0 / 3.0), c),
                  ConfigError);
}

TEST_CASE("a constant zero outcome is fitted as zero") {
  auto d = testing::toy_batch(2000, 5);
  std::fill(d.y.begin(), d.y.end(), 0.0);
  outcome::OutcomeConfig c;
  const Eigen::MatrixXd q = Eigen::MatrixXd::Constant(2000, 4, 0.25);
  const auto m = outcome::fit_outcome_weighted(d.t, d.y, q, c);
  const auto grid = outcome::make_grid(-1.0, 1.0, 200);
  const auto all = outcome::outcome_predict_all(m, grid);
  CHECK(all.cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("a uniform posterior reduces to the regression of y on t") {
  // For the multiplicative-outcome scenario E[y | t] = t + alpha t^3 / sqrt(2).
  const auto d = sim::generate({sim::ScenarioKind::mult_outcome, 1.0, 1.0, 5000, 13});
  outcome::OutcomeConfig c;
  const Eigen::MatrixXd q = Eigen::MatrixXd::Constant(5000, 5, 0.2);
  const auto m = outcome::fit_outcome_weighted(d.t, d.y, q, c);
  const auto grid = outcome::make_grid(-1.0, 1.0, 200);
  const auto curve = outcome::estimate_effect(m, Eigen::VectorXd::Constant(5, 0.2), grid);
  double worst = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double t = grid[i];
    worst = std::max(worst, std::abs(curve.tau_hat[i] - (t + t * t * t / std::sqrt(2.0))));
  }
  INFO("max deviation " << worst);
  CHECK(worst < 0.05);
}

TEST_CASE("the outcome stage explains held-out signal after the first stage") {
  const auto d = sim::generate({sim::ScenarioKind::mult_outcome, 1.0, 1.0, 2500, 17});
  const auto split = split_dataset(d, 0.2, 1);
  vde::VdeConfig vc;
  vc.seed = 2;
  const auto v = vde::train_vde(split.train, vc);
  outcome::OutcomeConfig oc;
  oc.seed = 3;
  const auto m = outcome::fit_outcome(split.train, v, oc);
  const auto& h = split.heldout;
  const auto pred = outcome::outcome_predict_all(m, h.t);
  const auto q = vde::encoder_posteriors(v, h.t, h.eps);
  double mse = 0.0, mean = 0.0, var = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) mean += h.y[i] / h.size();
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double r = h.y[i] - q.row(i).dot(pred.row(i));
    mse += r * r / h.size();
    var += (h.y[i] - mean) * (h.y[i] - mean) / h.size();
  }
  INFO("held-out mse " << mse << " var(y) " << var);
  CHECK(mse < 0.9 * var);
}
