#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gcfn/dataset.hpp"
#include "gcfn/nn.hpp"
#include "gcfn/vde.hpp"

namespace gcfn::outcome {

struct OutcomeConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 500;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;
  std::size_t hidden_units = 50;
  // f(t, k) = slope * t + offsets[k] instead of the network.
  bool partially_linear = false;

  void validate() const;
};

void to_json(nlohmann::json& j, const OutcomeConfig& c);
void from_json(const nlohmann::json& j, OutcomeConfig& c);

// Mean model f(t, zhat) for y with a unit-variance Gaussian likelihood. The
// network input is [t, one-hot(zhat)].
struct OutcomeModel {
  OutcomeConfig config;
  std::size_t k_categories = 0;
  nn::MlpParams net;
  double slope = 0.0;
  Eigen::VectorXd offsets;
  double noise_variance = 1.0;
  double final_loss = 0.0;

  std::vector<std::span<double>> blocks();
  std::vector<std::span<const double>> blocks() const;
  OutcomeModel zeros_like() const;
};

OutcomeModel init_outcome(std::size_t k_categories, const OutcomeConfig& config);

double outcome_predict(const OutcomeModel& model, double t, std::size_t k);
// Row i, column k: f(t[i], k).
Eigen::MatrixXd outcome_predict_all(const OutcomeModel& model, std::span<const double> t);

struct OutcomeLoss {
  double loss = 0.0;
  std::optional<OutcomeModel> gradient;
};

// (1/B) sum_i sum_k Q(i, k) (y_i - f(t_i, k))^2.
OutcomeLoss outcome_loss(const OutcomeModel& model, std::span<const double> t, std::span<const double> y,
                         const Eigen::MatrixXd& posteriors, bool with_gradient = true);

// Fits f under fixed per-row category weights (rows of `posteriors`).
OutcomeModel fit_outcome_weighted(std::span<const double> t, std::span<const double> y,
                                  const Eigen::MatrixXd& posteriors, const OutcomeConfig& config);

// Exact-marginalization outcome stage under the VDE encoder posterior.
OutcomeModel fit_outcome(const Dataset& data, const vde::VdeModel& vde, const OutcomeConfig& config);

// Mean encoder posterior over the rows of `data`.
Eigen::VectorXd marginal_control(const Dataset& data, const vde::VdeModel& vde);

// Mean over rows of sum_k Q(i, k) log N(y_i; f(t_i, k), 1).
double expected_loglik(const OutcomeModel& model, std::span<const double> t, std::span<const double> y,
                       const Eigen::MatrixXd& posteriors);

struct EffectCurve {
  std::vector<double> grid;
  std::vector<double> tau_hat;
  std::optional<std::vector<double>> tau_true;

  // Grid strictly increasing, equal lengths.
  void validate() const;
};

// tau_hat(t) = sum_k marginal[k] f(t, k).
EffectCurve estimate_effect(const OutcomeModel& model, const Eigen::VectorXd& marginal,
                            std::span<const double> grid);

// Inclusive, equally spaced.
std::vector<double> make_grid(double lo, double hi, std::size_t count);
// "lo:hi:count".
std::vector<double> parse_grid(const std::string& spec);

// Header `t,tau_hat[,tau_true]`.
std::string curve_to_csv(const EffectCurve& curve);
void save_curve(const EffectCurve& curve, const std::filesystem::path& path);

nlohmann::json to_json(const OutcomeModel& model);
OutcomeModel outcome_from_json(const nlohmann::json& j);
void save_model(const OutcomeModel& model, const std::filesystem::path& path);
OutcomeModel load_model(const std::filesystem::path& path);

}  // namespace gcfn::outcome
