#include <doctest.h>

#include <cmath>
#include <vector>

#include "gcfn/error.hpp"
#include "gcfn/nn.hpp"
#include "gcfn/rng.hpp"
#include "support/gradcheck.hpp"

using namespace gcfn;

namespace {

nn::MlpParams hand_net() {
  const std::size_t dims[] = {1, 3, 2};
  auto p = nn::MlpParams::zeros(dims);
  p.layers[0].weight << 1.0, -2.0, 0.5;
  p.layers[0].bias << 0.1, 0.2, -0.3;
  p.layers[1].weight << 0.3, -0.7, 1.5, -1.0, 0.25, 2.0;
  p.layers[1].bias << 0.05, -0.1;
  return p;
}

}  // namespace

TEST_CASE("splitmix64 streams are reproducible and distinct") {
  SplitMix64 a(42), b(42), c(43);
  for (int i = 0; i < 10; ++i) {
    const auto x = a.next();
    CHECK(x == b.next());
    CHECK(x != c.next());
  }
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
}

TEST_CASE("normal draws have unit moments") {
  SplitMix64 rng(3);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(std::abs(s / n) < 4.0 / std::sqrt(n));
  CHECK(std::abs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("below is unbiased over a small range") {
  SplitMix64 rng(9);
  std::vector<int> counts(3, 0);
  for (int i = 0; i < 30000; ++i) ++counts[rng.below(3)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 400);
}

TEST_CASE("mlp_apply basics") {
  const std::size_t dims[] = {2, 4, 3};
  const auto zero = nn::MlpParams::zeros(dims);
  CHECK(nn::mlp_apply(zero, Eigen::Vector2d(3.0, -1.0)).isZero(0.0));

  const std::size_t id_dims[] = {2, 2};
  auto id = nn::MlpParams::zeros(id_dims);
  id.layers[0].weight.setIdentity();
  const Eigen::VectorXd out = nn::mlp_apply(id, Eigen::Vector2d(1.0, -2.0));
  CHECK(out(0) == 1.0);
  CHECK(out(1) == -2.0);

  const Eigen::VectorXd hand = nn::mlp_apply(hand_net(), Eigen::VectorXd::Constant(1, 0.5));
  CHECK(hand(0) == doctest::Approx(0.23).epsilon(1e-12));
  CHECK(hand(1) == doctest::Approx(-0.7).epsilon(1e-12));

  CHECK_THROWS_AS(nn::mlp_apply(hand_net(), Eigen::Vector2d(1.0, 1.0)), ConfigError);
}

TEST_CASE("mlp_apply is deterministic") {
  SplitMix64 rng(1);
  const auto p = testing::random_mlp({3, 8, 8, 2}, rng);
  const Eigen::Vector3d x(0.1, -0.2, 0.3);
  CHECK(nn::mlp_apply(p, x) == nn::mlp_apply(p, x));
}

TEST_CASE("mlp_gradient closed forms") {
  const std::size_t dims[] = {2, 2};
  SplitMix64 rng(5);
  auto p = nn::MlpParams::glorot(dims, rng);
  const Eigen::Vector2d x(0.7, -1.3), u(2.0, -0.5);
  const auto g = nn::mlp_gradient(p, x, u);
  CHECK((g.layers[0].weight - u * x.transpose()).norm() < 1e-15);
  CHECK((g.layers[0].bias - u).norm() < 1e-15);

  const auto z = nn::mlp_gradient(hand_net(), Eigen::VectorXd::Constant(1, 0.5), Eigen::Vector2d::Zero());
  for (auto block : nn::blocks(z))
    for (double v : block) CHECK(v == 0.0);

  CHECK_THROWS_AS(nn::mlp_gradient(hand_net(), Eigen::VectorXd::Constant(1, 0.5), Eigen::Vector3d::Zero()),
                  ConfigError);
}

TEST_CASE("mlp gradients match finite differences on 100 random draws") {
  testing::GradCheck total;
  for (std::uint64_t s = 0; s < 100; ++s) total.merge(testing::check_mlp(s));
  INFO("worst relative error " << total.worst_rel);
  CHECK(total.ok());
  for (std::uint64_t s = 0; s < 10; ++s) CHECK(testing::check_mlp_batched(s).ok());
}

TEST_CASE("softmax_logprobs") {
  const Eigen::VectorXd a = nn::softmax_logprobs(Eigen::Vector3d::Zero());
  for (int i = 0; i < 3; ++i) CHECK(a(i) == doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-14));

  const Eigen::VectorXd b = nn::softmax_logprobs(Eigen::Vector2d(1.0, 2.0));
  const Eigen::VectorXd c = nn::softmax_logprobs(Eigen::Vector2d(101.0, 102.0));
  CHECK((b - c).cwiseAbs().maxCoeff() < 1e-13);

  const Eigen::VectorXd d = nn::softmax_logprobs(Eigen::Vector2d(0.0, std::log(3.0)));
  CHECK(d(0) == doctest::Approx(std::log(0.25)).epsilon(1e-14));
  CHECK(d(1) == doctest::Approx(std::log(0.75)).epsilon(1e-14));

  SplitMix64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd l(7);
    for (auto& v : l) v = 20.0 * rng.normal();
    const Eigen::VectorXd p = nn::softmax_logprobs(l).array().exp();
    CHECK(p.minCoeff() >= 0.0);
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);
    const Eigen::VectorXd shifted = nn::softmax_logprobs((l.array() + 5.0).matrix());
    CHECK((shifted - nn::softmax_logprobs(l)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("gaussian_loglik") {
  CHECK(nn::gaussian_loglik(0.3, 0.3, 1.0) == doctest::Approx(-0.5 * std::log(2.0 * M_PI)).epsilon(1e-15));
  CHECK(nn::gaussian_loglik(1.0, 0.0, 1.0) == doctest::Approx(-1.41894).epsilon(1e-5));
  CHECK(nn::gaussian_loglik(0.2, -0.4, 2.5) == doctest::Approx(nn::gaussian_loglik(3.2, 2.6, 2.5)).epsilon(1e-14));
  CHECK_THROWS_AS(nn::gaussian_loglik(0.0, 0.0, 0.0), DomainError);
}

TEST_CASE("adam_update") {
  std::vector<double> x{1.5};
  std::vector<double> g{0.0};
  std::vector<std::span<double>> p{std::span<double>(x)};
  std::vector<std::span<const double>> gr{std::span<const double>(g)};

  nn::AdamState s;
  nn::adam_update(s, p, gr);
  CHECK(x[0] == 1.5);
  CHECK(s.step_count == 1);

  nn::AdamState s2;
  g[0] = 0.37;
  nn::adam_update(s2, p, gr);
  CHECK(x[0] - 1.5 == doctest::Approx(-s2.learning_rate * 0.37 / (0.37 + s2.epsilon_hat)).epsilon(1e-12));

  g[0] = std::nan("");
  CHECK_THROWS_AS(nn::adam_update(s2, p, gr), TrainingError);
}

TEST_CASE("learning rate halves only after a worse window") {
  nn::LearningRateSchedule sched(1e-2, 2);
  sched.end_epoch(1.0);
  sched.end_epoch(1.0);
  CHECK(sched.rate() == 1e-2);
  sched.end_epoch(0.5);
  sched.end_epoch(0.5);
  CHECK(sched.rate() == 1e-2);
  sched.end_epoch(0.9);
  sched.end_epoch(0.9);
  CHECK(sched.rate() == 5e-3);
}

TEST_CASE("minibatch driver reports the batch that produced a NaN") {
  nn::LoopSettings s{3, 2, 1e-2, 0};
  int calls = 0;
  try {
    nn::run_minibatch_training(4, s, [&](std::span<const std::size_t>, double) {
      return ++calls == 4 ? std::nan("") : 1.0;
    });
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    const std::string what = e.what();
    CHECK(what.find("epoch") != std::string::npos);
    CHECK(what.find("batch") != std::string::npos);
  }
}
