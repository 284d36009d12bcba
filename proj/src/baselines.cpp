#include "gcfn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "gcfn/error.hpp"
#include "gcfn/rng.hpp"

namespace gcfn::baselines {

namespace {

constexpr std::uint64_t kInitStream = 21;
constexpr std::uint64_t kShuffleStream = 22;

void check_design(const Dataset& data) {
  data.validate();
  if (data.size() < 3) throw EstimationError("need at least 3 rows, got " + std::to_string(data.size()));
}

}  // namespace

LinearFit ols(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n != y.size()) throw ConfigError("ols: x and y differ in length");
  if (n < 3) throw EstimationError("ols: need at least 3 rows");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0.0)) throw EstimationError("degenerate design: regressor has zero variance");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  const double sse = std::max(0.0, syy - fit.slope * sxy);
  fit.slope_se = std::sqrt(sse / static_cast<double>(n - 2) / sxx);
  double meat = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double e = y[i] - fit.intercept - fit.slope * x[i];
    meat += dx * dx * e * e;
  }
  fit.slope_se_robust = std::sqrt(meat) / sxx;
  fit.r2 = syy > 0.0 ? std::clamp(1.0 - sse / syy, 0.0, 1.0) : 0.0;
  return fit;
}

TwoSlsFit fit_2sls(const Dataset& data) {
  check_design(data);
  TwoSlsFit fit;
  fit.first_stage = ols(data.eps, data.t);
  std::vector<double> t_hat(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    t_hat[i] = fit.first_stage.intercept + fit.first_stage.slope * data.eps[i];
  }
  fit.second_stage = ols(t_hat, data.y);
  fit.weak_instrument = std::abs(fit.first_stage.slope) < 2.0 * fit.first_stage.slope_se_robust;
  return fit;
}

CfnFit fit_cfn(const Dataset& data, const CfnConfig& config) {
  check_design(data);
  if (config.epochs == 0 || config.batch_size == 0 || config.hidden_units == 0 || !(config.learning_rate > 0.0)) {
    throw ConfigError("cfn: epochs, batch_size, hidden_units and learning_rate must be positive");
  }
  const std::size_t n = data.size();
  CfnFit fit;
  fit.first_stage = ols(data.eps, data.t);
  fit.residuals.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    fit.residuals[i] = data.t[i] - fit.first_stage.intercept - fit.first_stage.slope * data.eps[i];
  }

  SplitMix64 rng(derive_seed(config.seed, kInitStream));
  const std::size_t dims[] = {1, config.hidden_units, config.hidden_units, 1};
  fit.outcome_net = nn::MlpParams::glorot(dims, rng);

  nn::AdamState adam;
  nn::LoopSettings loop{config.epochs, std::min(config.batch_size, n), config.learning_rate,
                        derive_seed(config.seed, kShuffleStream)};
  fit.final_loss = nn::run_minibatch_training(n, loop, [&](std::span<const std::size_t> idx, double lr) {
    const auto B = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd x(B, 1);
    Eigen::VectorXd v(B), y(B);
    for (Eigen::Index i = 0; i < B; ++i) {
      x(i, 0) = data.t[idx[i]];
      v(i) = fit.residuals[idx[i]];
      y(i) = data.y[idx[i]];
    }
    nn::Tape tape;
    const Eigen::MatrixXd f = nn::forward(fit.outcome_net, x, &tape);
    const Eigen::VectorXd resid = y - f.col(0) - fit.rho * v;
    const double loss = resid.squaredNorm() / static_cast<double>(B);
    if (!std::isfinite(loss)) return loss;
    const Eigen::MatrixXd d = (-2.0 / static_cast<double>(B)) * resid;
    nn::MlpGrads g = fit.outcome_net.zeros_like();
    nn::backward(fit.outcome_net, tape, d, g);
    double g_rho = d.col(0).dot(v);
    auto p = nn::blocks(fit.outcome_net);
    p.emplace_back(&fit.rho, 1);
    auto gb = nn::blocks(std::as_const(g));
    gb.emplace_back(&g_rho, 1);
    adam.learning_rate = lr;
    nn::adam_update(adam, p, gb);
    return loss;
  });
  return fit;
}

SupervisedFit fit_supervised(const Dataset& data, const vde::BinScheme& bins, const outcome::OutcomeConfig& config) {
  data.validate();
  std::vector<double> t, y;
  std::vector<std::size_t> cat;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto z = data.observed_z(i);
    if (!z) continue;
    t.push_back(data.t[i]);
    y.push_back(data.y[i]);
    cat.push_back(bins.bin(*z));
  }
  if (t.empty()) throw DataError("supervised baseline: no rows with the confounder observed");
  const auto K = static_cast<Eigen::Index>(bins.count());
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(t.size()), K);
  for (std::size_t i = 0; i < cat.size(); ++i) onehot(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(cat[i])) = 1.0;
  SupervisedFit fit;
  fit.rows_used = t.size();
  fit.model = outcome::fit_outcome_weighted(t, y, onehot, config);
  fit.marginal = onehot.colwise().sum().transpose() / static_cast<double>(t.size());
  return fit;
}

outcome::EffectCurve baseline_effect(const BaselineFit& fit, std::span<const double> grid) {
  outcome::EffectCurve curve;
  curve.grid.assign(grid.begin(), grid.end());
  curve.tau_hat.resize(grid.size());
  if (const auto* tsls = std::get_if<TwoSlsFit>(&fit)) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      curve.tau_hat[i] = tsls->second_stage.intercept + tsls->second_stage.slope * grid[i];
    }
  } else {
    const auto& cfn = std::get<CfnFit>(fit);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(grid.size()), 1);
    for (std::size_t i = 0; i < grid.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = grid[i];
    const Eigen::MatrixXd f = nn::forward(cfn.outcome_net, x);
    for (std::size_t i = 0; i < grid.size(); ++i) curve.tau_hat[i] = f(static_cast<Eigen::Index>(i), 0);
  }
  return curve;
}

}  // namespace gcfn::baselines
