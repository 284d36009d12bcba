#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gcfn/rng.hpp"

namespace gcfn::nn {

// One affine layer; weight is (out x in).
struct Dense {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

// Feed-forward network: ReLU on every hidden layer, identity on the output.
// Gradients use the same type.
struct MlpParams {
  std::vector<Dense> layers;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const;
  // Throws ConfigError on incompatible consecutive shapes or non-finite entries.
  void validate() const;

  // dims = {in, hidden..., out}.
  static MlpParams zeros(std::span<const std::size_t> dims);
  // Uniform(+-sqrt(6 / (fan_in + fan_out))) weights, zero biases.
  static MlpParams glorot(std::span<const std::size_t> dims, SplitMix64& rng);
  MlpParams zeros_like() const;
};

using MlpGrads = MlpParams;

// Contiguous views of every parameter block, in a fixed order.
std::vector<std::span<double>> blocks(MlpParams& params);
std::vector<std::span<const double>> blocks(const MlpParams& params);

Eigen::VectorXd mlp_apply(const MlpParams& params, const Eigen::VectorXd& input);

// d(upstream . output) / d(params) for a single input.
MlpGrads mlp_gradient(const MlpParams& params, const Eigen::VectorXd& input,
                      const Eigen::VectorXd& upstream);

// Activations saved by a batched forward pass. inputs[l] is the input of layer
// l (rows are samples); entries before the starting layer stay empty.
struct Tape {
  std::vector<Eigen::MatrixXd> inputs;
};

// Batched forward pass starting at layer `first`; `x` is the input of that
// layer (for first > 0: the post-ReLU activation of layer first - 1).
Eigen::MatrixXd forward(const MlpParams& params, const Eigen::MatrixXd& x,
                        Tape* tape = nullptr, std::size_t first = 0);

// Accumulates (+=) parameter gradients of sum(upstream .* output) into grads
// for layers >= first. If input_grad is non-null it receives the gradient with
// respect to the input of layer `first`.
void backward(const MlpParams& params, const Tape& tape,
              const Eigen::MatrixXd& upstream, MlpGrads& grads,
              Eigen::MatrixXd* input_grad = nullptr, std::size_t first = 0);

Eigen::VectorXd softmax_logprobs(const Eigen::VectorXd& logits);
// Row-wise log-softmax.
Eigen::MatrixXd softmax_logprobs_rows(const Eigen::MatrixXd& logits);

// Log-density of N(mean, variance) at x. Throws DomainError for variance <= 0.
double gaussian_loglik(double x, double mean, double variance);

inline constexpr double kHalfLogTwoPi = 0.91893853320467274178;

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::int64_t step_count = 0;
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon_hat = 1e-8;
};

// One bias-corrected Adam step. Moments are allocated on the first call and
// must match the block shapes afterwards. Throws TrainingError if a gradient
// is NaN and ConfigError on shape mismatch.
void adam_update(AdamState& state, std::span<const std::span<double>> params,
                 std::span<const std::span<const double>> grads);
void adam_update(AdamState& state, MlpParams& params, const MlpGrads& grads);

// Halves the rate after a window of epochs whose mean loss exceeded the mean
// of the previous window.
class LearningRateSchedule {
 public:
  explicit LearningRateSchedule(double initial, int window = 10)
      : rate_(initial), window_(window) {}
  double rate() const { return rate_; }
  void end_epoch(double mean_loss);

 private:
  double rate_;
  int window_;
  double current_sum_ = 0.0;
  int current_count_ = 0;
  double previous_mean_ = 0.0;
  bool has_previous_ = false;
};

struct LoopSettings {
  std::size_t epochs = 100;
  std::size_t batch_size = 500;
  double learning_rate = 1e-2;
  std::uint64_t shuffle_seed = 0;
};

// Minibatch driver shared by every trained model. Each epoch visits a fresh
// permutation of 0..n-1 in batches; step(indices, lr) performs one optimizer
// step and returns the batch mean loss. Returns the mean loss of the final
// epoch. A non-finite batch loss raises TrainingError naming epoch and batch.
using StepFn = std::function<double(std::span<const std::size_t>, double)>;
double run_minibatch_training(std::size_t n, const LoopSettings& settings,
                              const StepFn& step);

}  // namespace gcfn::nn
