#pragma once

// Central finite-difference checks shared by the unit tests and the
// acceptance runner.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gcfn/dataset.hpp"
#include "gcfn/nn.hpp"
#include "gcfn/outcome.hpp"
#include "gcfn/rng.hpp"
#include "gcfn/vde.hpp"

namespace gcfn::testing {

struct GradCheck {
  std::size_t checked = 0;
  std::size_t failures = 0;
  double worst_rel = 0.0;  // over entries above the absolute floor
  double worst_abs = 0.0;

  bool ok() const { return checked > 0 && failures == 0; }
  void merge(const GradCheck& o) {
    checked += o.checked;
    failures += o.failures;
    worst_rel = std::max(worst_rel, o.worst_rel);
    worst_abs = std::max(worst_abs, o.worst_abs);
  }
};

inline constexpr double kRelTol = 1e-4;
inline constexpr double kAbsFloor = 1e-8;
inline constexpr double kStep = 1e-5;

// Perturbs every entry of `params` in place (restoring it afterwards) and
// compares (loss(+h) - loss(-h)) / 2h with the matching analytic entry.
inline GradCheck compare_blocks(const std::vector<std::span<double>>& params,
                                const std::vector<std::span<const double>>& analytic,
                                const std::function<double()>& loss, double step = kStep) {
  GradCheck r;
  for (std::size_t b = 0; b < params.size(); ++b) {
    for (std::size_t i = 0; i < params[b].size(); ++i) {
      double& x = params[b][i];
      const double saved = x;
      x = saved + step;
      const double up = loss();
      x = saved - step;
      const double down = loss();
      x = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[b][i];
      const double diff = std::abs(a - numeric);
      const double rel = diff / std::max({std::abs(a), std::abs(numeric), 1e-300});
      ++r.checked;
      r.worst_abs = std::max(r.worst_abs, diff);
      if (diff > kAbsFloor) {
        r.worst_rel = std::max(r.worst_rel, rel);
        if (rel > kRelTol) ++r.failures;
      }
    }
  }
  return r;
}

inline nn::MlpParams random_mlp(std::vector<std::size_t> dims, SplitMix64& rng) {
  auto p = nn::MlpParams::glorot(dims, rng);
  for (auto& layer : p.layers)
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = rng.uniform(-0.5, 0.5);
  return p;
}

// Random MLP and input; loss = upstream . mlp_apply(input).
inline GradCheck check_mlp(std::uint64_t seed) {
  SplitMix64 rng(seed);
  const std::size_t in = 1 + rng.below(3), hid = 2 + rng.below(5), out = 1 + rng.below(3);
  auto params = random_mlp({in, hid, hid, out}, rng);
  Eigen::VectorXd x(in), u(out);
  for (auto& v : x) v = rng.normal();
  for (auto& v : u) v = rng.normal();
  const auto grad = nn::mlp_gradient(params, x, u);
  return compare_blocks(nn::blocks(params), nn::blocks(grad), [&] { return u.dot(nn::mlp_apply(params, x)); });
}

// Batched forward/backward against the same finite differences.
inline GradCheck check_mlp_batched(std::uint64_t seed) {
  SplitMix64 rng(seed);
  const std::size_t rows = 4;
  auto params = random_mlp({2, 5, 4, 3}, rng);
  Eigen::MatrixXd x(rows, 2), u(rows, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = rng.normal();
  nn::Tape tape;
  nn::forward(params, x, &tape);
  auto grad = params.zeros_like();
  nn::backward(params, tape, u, grad);
  return compare_blocks(nn::blocks(params), nn::blocks(std::as_const(grad)),
                        [&] { return (u.array() * nn::forward(params, x).array()).sum(); });
}

// Toy batch: rows of (t, eps, y) with z observed on every other row.
inline Dataset toy_batch(std::size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = rng.normal(), e = rng.normal();
    d.t.push_back((z + e) / std::sqrt(2.0));
    d.eps.push_back(e);
    d.y.push_back(d.t.back() + z + 0.1 * rng.normal());
    d.z.push_back(z);
    d.m.push_back(i % 2 == 0 ? 1 : 0);
  }
  return d;
}

inline vde::VdeModel toy_vde(vde::DecoderStructure structure, std::size_t k, double kappa, double zeta,
                             std::uint64_t seed) {
  vde::VdeConfig c;
  c.k_categories = k;
  c.kappa = kappa;
  c.zeta = zeta;
  c.decoder_structure = structure;
  c.hidden_units = 6;
  c.batch_size = 1;
  c.seed = seed;
  // One bin per category so the supervised term is defined; the narrow range
  // keeps both tail bins populated.
  c.treatment_bins.lo = -1.0;
  c.treatment_bins.hi = 1.0;
  c.treatment_bins.interior = k - 2;
  auto model = vde::init_vde(c);
  SplitMix64 rng(derive_seed(seed, 99));
  // Move off the zero-initialized biases and tables so every path is active.
  for (auto block : model.params.blocks())
    for (double& v : block) v += 0.3 * rng.normal();
  return model;
}

inline GradCheck check_vde(vde::DecoderStructure structure, double kappa, double zeta, std::uint64_t seed,
                           std::size_t k = 3, std::size_t rows = 2, bool observed_mean = false) {
  auto model = toy_vde(structure, k, kappa, zeta, seed);
  model.config.zeta_observed_mean = observed_mean;
  const Dataset batch = toy_batch(rows, derive_seed(seed, 7));
  const auto loss = vde::vde_loss(model, batch, model.config, true);
  return compare_blocks(model.params.blocks(), std::as_const(*loss.gradient).blocks(),
                        [&] { return vde::vde_loss(model, batch, model.config, false).loss; });
}

inline GradCheck check_outcome(bool partially_linear, std::uint64_t seed, std::size_t k = 3, std::size_t rows = 4) {
  outcome::OutcomeConfig c;
  c.hidden_units = 5;
  c.partially_linear = partially_linear;
  c.seed = seed;
  auto model = outcome::init_outcome(k, c);
  SplitMix64 rng(derive_seed(seed, 5));
  for (auto block : model.blocks())
    for (double& v : block) v += 0.3 * rng.normal();
  std::vector<double> t(rows), y(rows);
  Eigen::MatrixXd q(rows, k);
  for (std::size_t i = 0; i < rows; ++i) {
    t[i] = rng.normal();
    y[i] = rng.normal();
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += q(i, j) = rng.uniform(0.05, 1.0);
    q.row(i) /= s;
  }
  const auto loss = outcome::outcome_loss(model, t, y, q, true);
  return compare_blocks(model.blocks(), std::as_const(*loss.gradient).blocks(),
                        [&] { return outcome::outcome_loss(model, t, y, q, false).loss; });
}

}  // namespace gcfn::testing
