#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "gcfn/dataset.hpp"
#include "gcfn/nn.hpp"
#include "gcfn/outcome.hpp"
#include "gcfn/vde.hpp"

namespace gcfn::baselines {

// Simple linear regression y = intercept + slope * x.
struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double slope_se = 0.0;         // homoskedastic standard error
  double slope_se_robust = 0.0;  // White (HC0) standard error
  double r2 = 0.0;
};

// Throws EstimationError when n < 3 or x has zero sample variance.
LinearFit ols(std::span<const double> x, std::span<const double> y);

struct TwoSlsFit {
  LinearFit first_stage;   // t on eps
  LinearFit second_stage;  // y on fitted t
  // |first-stage slope| < 2 robust SE.
  bool weak_instrument = false;
};

TwoSlsFit fit_2sls(const Dataset& data);

struct CfnConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 500;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;
  std::size_t hidden_units = 50;
};

struct CfnFit {
  LinearFit first_stage;
  std::vector<double> residuals;  // t - fitted t
  nn::MlpParams outcome_net;      // f(t): 1 -> H -> H -> 1
  double rho = 0.0;               // coefficient on the residual
  double final_loss = 0.0;
};

// y ~ f(t) + rho * v by least squares; f alone is the effect estimate.
CfnFit fit_cfn(const Dataset& data, const CfnConfig& config);

// Outcome model fitted only on rows with the confounder observed, using the
// one-hot confounder bin in place of a control function. The effect averages
// over the empirical bin distribution of those rows.
struct SupervisedFit {
  outcome::OutcomeModel model;
  Eigen::VectorXd marginal;
  std::size_t rows_used = 0;
};

// Throws DataError when no row has m = 1.
SupervisedFit fit_supervised(const Dataset& data, const vde::BinScheme& bins, const outcome::OutcomeConfig& config);

using BaselineFit = std::variant<TwoSlsFit, CfnFit>;

outcome::EffectCurve baseline_effect(const BaselineFit& fit, std::span<const double> grid);

}  // namespace gcfn::baselines
