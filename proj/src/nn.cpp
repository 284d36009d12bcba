#include "gcfn/nn.hpp"

#include <cmath>
#include <sstream>

#include "gcfn/error.hpp"

namespace gcfn::nn {

std::size_t MlpParams::input_dim() const {
  return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weight.cols());
}

std::size_t MlpParams::output_dim() const {
  return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weight.rows());
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

void MlpParams::validate() const {
  if (layers.empty()) throw ConfigError("network has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.bias.size() != l.weight.rows()) {
      std::ostringstream os;
      os << "layer " << i << ": bias length " << l.bias.size() << " != out dim " << l.weight.rows();
      throw ConfigError(os.str());
    }
    if (i + 1 < layers.size() && layers[i + 1].weight.cols() != l.weight.rows()) {
      std::ostringstream os;
      os << "layer " << i + 1 << ": in dim " << layers[i + 1].weight.cols()
         << " != previous out dim " << l.weight.rows();
      throw ConfigError(os.str());
    }
    if (!l.weight.allFinite() || !l.bias.allFinite()) {
      throw ConfigError("layer " + std::to_string(i) + " has non-finite entries");
    }
  }
}

MlpParams MlpParams::zeros(std::span<const std::size_t> dims) {
  if (dims.size() < 2) throw ConfigError("network needs at least input and output dims");
  MlpParams p;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const auto in = static_cast<Eigen::Index>(dims[i]);
    const auto out = static_cast<Eigen::Index>(dims[i + 1]);
    p.layers.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
  }
  return p;
}

MlpParams MlpParams::glorot(std::span<const std::size_t> dims, SplitMix64& rng) {
  MlpParams p = zeros(dims);
  for (auto& l : p.layers) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.weight.rows() + l.weight.cols()));
    // Row-major fill order, independent of Eigen's storage order.
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = rng.uniform(-limit, limit);
  }
  return p;
}

MlpParams MlpParams::zeros_like() const {
  MlpParams p;
  p.layers.reserve(layers.size());
  for (const auto& l : layers) {
    p.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                        Eigen::VectorXd::Zero(l.bias.size())});
  }
  return p;
}

std::vector<std::span<double>> blocks(MlpParams& params) {
  std::vector<std::span<double>> out;
  for (auto& l : params.layers) {
    out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  return out;
}

std::vector<std::span<const double>> blocks(const MlpParams& params) {
  std::vector<std::span<const double>> out;
  for (const auto& l : params.layers) {
    out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  return out;
}

Eigen::VectorXd mlp_apply(const MlpParams& params, const Eigen::VectorXd& input) {
  if (params.layers.empty()) throw ConfigError("network has no layers");
  if (static_cast<std::size_t>(input.size()) != params.input_dim()) {
    throw ConfigError("input dimension " + std::to_string(input.size()) +
                      " does not match network input " + std::to_string(params.input_dim()));
  }
  Eigen::VectorXd h = input;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    Eigen::VectorXd next = l.weight * h + l.bias;
    if (i + 1 < params.layers.size()) next = next.cwiseMax(0.0);
    h = std::move(next);
  }
  return h;
}

MlpGrads mlp_gradient(const MlpParams& params, const Eigen::VectorXd& input,
                      const Eigen::VectorXd& upstream) {
  if (static_cast<std::size_t>(input.size()) != params.input_dim()) {
    throw ConfigError("input dimension does not match network input");
  }
  if (static_cast<std::size_t>(upstream.size()) != params.output_dim()) {
    throw ConfigError("upstream dimension " + std::to_string(upstream.size()) +
                      " does not match network output " + std::to_string(params.output_dim()));
  }
  Tape tape;
  forward(params, input.transpose(), &tape);
  MlpGrads grads = params.zeros_like();
  backward(params, tape, upstream.transpose(), grads);
  return grads;
}

Eigen::MatrixXd forward(const MlpParams& params, const Eigen::MatrixXd& x, Tape* tape,
                        std::size_t first) {
  const std::size_t n_layers = params.layers.size();
  if (first >= n_layers) throw ConfigError("forward: start layer out of range");
  if (x.cols() != params.layers[first].weight.cols()) {
    throw ConfigError("forward: input width " + std::to_string(x.cols()) +
                      " does not match layer in dim " +
                      std::to_string(params.layers[first].weight.cols()));
  }
  if (tape) tape->inputs.assign(n_layers, Eigen::MatrixXd());
  Eigen::MatrixXd h = x;
  for (std::size_t i = first; i < n_layers; ++i) {
    const auto& l = params.layers[i];
    Eigen::MatrixXd next(h.rows(), l.weight.rows());
    next.noalias() = h * l.weight.transpose();
    next.rowwise() += l.bias.transpose();
    if (i + 1 < n_layers) next = next.cwiseMax(0.0);
    if (tape) {
      tape->inputs[i] = std::move(h);
    }
    h = std::move(next);
  }
  return h;
}

void backward(const MlpParams& params, const Tape& tape, const Eigen::MatrixXd& upstream,
              MlpGrads& grads, Eigen::MatrixXd* input_grad, std::size_t first) {
  const std::size_t n_layers = params.layers.size();
  if (grads.layers.size() != n_layers) throw ConfigError("backward: gradient shape mismatch");
  if (upstream.cols() != params.layers.back().weight.rows()) {
    throw ConfigError("backward: upstream width does not match network output");
  }
  Eigen::MatrixXd delta = upstream;
  for (std::size_t i = n_layers; i-- > first;) {
    const auto& l = params.layers[i];
    const Eigen::MatrixXd& in = tape.inputs[i];
    grads.layers[i].weight.noalias() += delta.transpose() * in;
    grads.layers[i].bias += delta.colwise().sum().transpose();
    if (i > first) {
      Eigen::MatrixXd d_in(delta.rows(), l.weight.cols());
      d_in.noalias() = delta * l.weight;
      // ReLU mask: the stored input is the post-activation of layer i - 1.
      delta = (in.array() > 0.0).select(d_in, 0.0);
    } else if (input_grad) {
      input_grad->resize(delta.rows(), l.weight.cols());
      input_grad->noalias() = delta * l.weight;
    }
  }
}

Eigen::VectorXd softmax_logprobs(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

Eigen::MatrixXd softmax_logprobs_rows(const Eigen::MatrixXd& logits) {
  Eigen::VectorXd m = logits.rowwise().maxCoeff();
  Eigen::MatrixXd shifted = logits.colwise() - m;
  Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log().matrix() + m;
  return logits.colwise() - lse;
}

double gaussian_loglik(double x, double mean, double variance) {
  if (!(variance > 0.0)) throw DomainError("gaussian_loglik: variance must be positive");
  const double d = x - mean;
  return -0.5 * std::log(2.0 * M_PI * variance) - d * d / (2.0 * variance);
}

void adam_update(AdamState& state, std::span<const std::span<double>> params,
                 std::span<const std::span<const double>> grads) {
  if (params.size() != grads.size()) throw ConfigError("adam: parameter/gradient block count mismatch");
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), 0.0);
      state.second_moment.emplace_back(p.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) throw ConfigError("adam: moment shape mismatch");
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != grads[b].size() || state.first_moment[b].size() != params[b].size()) {
      throw ConfigError("adam: block " + std::to_string(b) + " shape mismatch");
    }
    for (double g : grads[b]) {
      if (std::isnan(g)) throw TrainingError("adam: NaN gradient in block " + std::to_string(b));
    }
  }
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = state.first_moment[b];
    auto& v = state.second_moment[b];
    const auto g = grads[b];
    auto p = params[b];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon_hat);
    }
  }
}

void adam_update(AdamState& state, MlpParams& params, const MlpGrads& grads) {
  auto p = blocks(params);
  auto g = blocks(grads);
  adam_update(state, p, g);
}

void LearningRateSchedule::end_epoch(double mean_loss) {
  current_sum_ += mean_loss;
  current_count_ += 1;
  if (current_count_ < window_) return;
  const double mean = current_sum_ / current_count_;
  if (has_previous_ && mean > previous_mean_) rate_ *= 0.5;
  previous_mean_ = mean;
  has_previous_ = true;
  current_sum_ = 0.0;
  current_count_ = 0;
}

double run_minibatch_training(std::size_t n, const LoopSettings& settings, const StepFn& step) {
  if (n == 0) throw DataError("training on an empty dataset");
  if (settings.epochs == 0) throw ConfigError("epochs must be positive");
  if (settings.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(settings.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  SplitMix64 rng(settings.shuffle_seed);
  LearningRateSchedule schedule(settings.learning_rate);
  const std::size_t batch = std::min(settings.batch_size, n);
  double epoch_loss = 0.0;
  for (std::size_t epoch = 0; epoch < settings.epochs; ++epoch) {
    const auto order = permutation(n, rng);
    double total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += batch, ++batch_index) {
      const std::size_t len = std::min(batch, n - start);
      const double loss = step(std::span<const std::size_t>(order.data() + start, len), schedule.rate());
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index));
      }
      total += loss * static_cast<double>(len);
    }
    epoch_loss = total / static_cast<double>(n);
    schedule.end_epoch(epoch_loss);
  }
  return epoch_loss;
}

}  // namespace gcfn::nn
