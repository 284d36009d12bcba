#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gcfn/dataset.hpp"
#include "gcfn/outcome.hpp"
#include "gcfn/vde.hpp"

namespace gcfn::eval {

using EffectFn = std::function<double(double)>;

// sqrt(mean over the grid of (tau_hat - truth)^2); rows are sorted by grid
// value first so the result does not depend on row order.
double effect_rmse(const outcome::EffectCurve& curve, const EffectFn& truth);

// Plug-in mutual information (nats) of two label sequences.
double plugin_mutual_information(std::span<const std::size_t> a, std::span<const std::size_t> b);

// Equal-frequency bin index for each value; ties broken by row order.
std::vector<std::size_t> equal_frequency_bins(std::span<const double> values, std::size_t bins);

struct IndependenceTest {
  double mi_estimate = 0.0;
  double p_value = 1.0;
  std::vector<std::string> warnings;
};

// Permutation test of labels against equal-frequency bins of eps, with
// statistic = plug-in MI. p = (1 + #{perm MI >= observed}) / (1 + n_permutations).
IndependenceTest independence_test(std::span<const std::size_t> labels, std::span<const double> eps,
                                   std::size_t eps_bins, std::size_t n_permutations, std::uint64_t seed);

// One category drawn per row from the encoder posterior.
std::vector<std::size_t> sample_controls(const vde::VdeModel& vde, const Dataset& data, std::uint64_t seed);

IndependenceTest independence_diagnostic(const vde::VdeModel& vde, const Dataset& data, std::size_t eps_bins,
                                         std::size_t n_permutations, std::uint64_t seed);

// Mean over rows of sum_k q_k (t - decoder mean(k, eps))^2. Throws
// DomainError for the categorical decoder.
double reconstruction_error(const vde::VdeModel& vde, const Dataset& data);

// Mean over rows of KL(q(.|t, eps) || softmax(marginal logits)).
double kl_term(const vde::VdeModel& vde, const Dataset& data);

struct DiagnosticsReport {
  std::optional<double> reconstruction_mse;  // absent for the categorical decoder
  double mi_estimate = 0.0;
  double permutation_p_value = 1.0;
  double kl_term_value = 0.0;
  std::size_t eps_bins = 0;
  std::size_t n_permutations = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

DiagnosticsReport diagnose(const vde::VdeModel& vde, const Dataset& data, std::size_t eps_bins = 10,
                           std::size_t n_permutations = 199, std::uint64_t seed = 0);

nlohmann::json to_json(const DiagnosticsReport& report);

// W1 between two weighted 1-D samples: the integral of |F_x - F_y|. Weights
// need not be normalized but must be non-negative with positive sums.
double wasserstein1(std::span<const double> x, std::span<const double> wx, std::span<const double> y,
                    std::span<const double> wy);
// Unweighted form; equal sizes reduce to the mean |x_(i) - y_(i)|.
double wasserstein1(std::span<const double> x, std::span<const double> y);

struct BoundReport {
  double lhs = 0.0;
  double rhs = 0.0;
  bool satisfied = false;
  double delta_hat = 0.0;
  double gamma_hat = 0.0;
  double lipschitz_L = 0.0;
  double lipschitz_Lg = 0.0;
  double zhat_centered_mean_abs = 0.0;
  std::string note;
};

// Audit of E|tau_hat - tau| <= L sqrt(delta + 4 gamma L_g E|zhat_c|) for an
// additive-decoder model. The scalar control is the centered decoder table
// h'[zhat] - sum_k qbar_k h'[k].
BoundReport bound_check_additive(const vde::VdeModel& vde, const outcome::OutcomeModel& outcome,
                                 const Dataset& data, const EffectFn& truth, double lipschitz_L,
                                 double lipschitz_Lg, std::string note = {});

nlohmann::json to_json(const BoundReport& report);

struct KappaEntry {
  double kappa = 0.0;
  bool success = false;
  double heldout_loglik = 0.0;
  std::string message;
  std::optional<vde::VdeModel> vde;
  std::optional<outcome::OutcomeModel> outcome;
};

struct KappaSelection {
  double best_kappa = 0.0;
  std::size_t best_index = 0;
  std::vector<KappaEntry> table;  // one entry per grid element, grid order

  const KappaEntry& best() const { return table[best_index]; }
};

// For each kappa: train the VDE and the outcome stage on the train split and
// score the mean expected outcome log-likelihood on the held-out split. The
// highest score wins, ties to the smaller kappa. Failed entries are kept with
// their message; throws TrainingError if every entry fails.
KappaSelection select_kappa(const Dataset& data, std::span<const double> kappa_grid,
                            const vde::VdeConfig& vde_template, const outcome::OutcomeConfig& outcome_config,
                            double holdout_fraction, std::uint64_t split_seed);

// Header `kappa,status,heldout_loglik,message`.
std::string kappa_table_csv(const KappaSelection& selection);

}  // namespace gcfn::eval
