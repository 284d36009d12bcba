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

namespace gcfn::vde {

enum class DecoderStructure { additive, multiplicative, categorical };

DecoderStructure parse_structure(const std::string& name);
std::string structure_name(DecoderStructure s);

// Discretization of a real axis: one bin below `lo`, `interior` equal-width
// bins on [lo, hi), one bin at or above `hi`.
struct BinScheme {
  double lo = -3.5;
  double hi = 3.5;
  std::size_t interior = 48;

  std::size_t count() const { return interior + 2; }
  // Throws DomainError for non-finite x.
  std::size_t bin(double x) const;
  // The interior + 1 finite edges.
  std::vector<double> edges() const;
};

struct VdeConfig {
  std::size_t k_categories = 50;
  double kappa = 0.1;  // lambda / (1 + lambda)
  DecoderStructure decoder_structure = DecoderStructure::additive;
  double zeta = 0.0;  // weight of the supervised term on m = 1 rows
  // Average the supervised term over the batch's m = 1 rows rather than the
  // whole batch, so its weight does not shrink with the supervision fraction.
  bool zeta_observed_mean = false;
  std::size_t epochs = 100;
  std::size_t batch_size = 500;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;
  std::size_t hidden_units = 100;
  BinScheme treatment_bins;

  // Throws ConfigError.
  void validate() const;
};

void to_json(nlohmann::json& j, const VdeConfig& c);
// Rejects unknown keys; missing keys keep their defaults.
void from_json(const nlohmann::json& j, VdeConfig& c);

// Trainable parameters. The decoder network is g'(eps) (1 -> H -> H -> 1) for
// the additive and multiplicative structures, and (one-hot zhat, eps) -> bin
// logits for the categorical one; `table` holds h'(zhat) and is empty for the
// categorical structure.
struct VdeParameters {
  nn::MlpParams encoder;  // (t, eps) -> K logits
  Eigen::VectorXd table;
  nn::MlpParams decoder;
  Eigen::VectorXd marginal_logits;  // r_nu

  VdeParameters zeros_like() const;
  std::vector<std::span<double>> blocks();
  std::vector<std::span<const double>> blocks() const;
};

struct VdeModel {
  VdeConfig config;
  VdeParameters params;
  double final_loss = 0.0;

  DecoderStructure structure() const { return config.decoder_structure; }
  std::size_t k() const { return config.k_categories; }
};

// Glorot-initialized model (seeded from config.seed).
VdeModel init_vde(const VdeConfig& config);

struct ControlPosterior {
  Eigen::VectorXd probs;
};

ControlPosterior encoder_posterior(const VdeModel& model, double t, double eps);
// Row i holds the posterior at (t[i], eps[i]).
Eigen::MatrixXd encoder_posteriors(const VdeModel& model, std::span<const double> t,
                                   std::span<const double> eps);

// log p(t | zhat = k, eps): a unit-variance Gaussian log-density for the
// additive/multiplicative structures, a bin log-mass for the categorical one.
double decoder_logdensity(const VdeModel& model, double t, std::size_t k, double eps);
Eigen::MatrixXd decoder_logdensities(const VdeModel& model, std::span<const double> t,
                                     std::span<const double> eps);

// Structural decoder mean h'[k] + g'(eps) or h'[k] * g'(eps); row i, column k.
// Throws DomainError for the categorical structure.
Eigen::MatrixXd decoder_means(const VdeModel& model, std::span<const double> eps);

// Sum_k q_k log(q_k / r_k) with 0 log 0 = 0.
double kl_categorical(const Eigen::VectorXd& q, const Eigen::VectorXd& r);

// Single-row loss without the supervised term:
//   -(sum_k q_k logp_k) + kappa * KL(q || r).
double row_loss(const Eigen::VectorXd& q, const Eigen::VectorXd& logp, const Eigen::VectorXd& r,
                double kappa);

struct VdeLoss {
  double loss = 0.0;
  double reconstruction = 0.0;  // mean_rows sum_k q_k log p
  double kl = 0.0;              // mean_rows KL(q || r)
  double supervised = 0.0;      // mean of m log q_{bin(z)} (over m = 1 rows if zeta_observed_mean)
  std::optional<VdeParameters> gradient;
};

// Batch objective with exact marginalization over the K categories:
//   loss = -(1/B) sum_rows [ sum_k q_k log p(t|k,eps) - kappa KL(q || r)
//                            + zeta m log q_{bin(z)} ],
// with the zeta term divided by the number of m = 1 rows instead of B when
// config.zeta_observed_mean is set.
// kappa and zeta are read from `config`, which may differ from model.config.
VdeLoss vde_loss(const VdeModel& model, const Dataset& batch, const VdeConfig& config,
                 bool with_gradient = true);

// Minibatch Adam on vde_loss for config.epochs epochs.
VdeModel train_vde(const Dataset& data, const VdeConfig& config);

nlohmann::json to_json(const VdeModel& model);
VdeModel vde_from_json(const nlohmann::json& j);
void save_model(const VdeModel& model, const std::filesystem::path& path);
VdeModel load_model(const std::filesystem::path& path);

}  // namespace gcfn::vde
