#include "gcfn/outcome.hpp"

#include <cmath>
#include <sstream>

#include "gcfn/error.hpp"
#include "gcfn/io.hpp"
#include "gcfn/rng.hpp"

namespace gcfn::outcome {

namespace {

constexpr std::uint64_t kInitStream = 11;
constexpr std::uint64_t kShuffleStream = 12;

// Hidden pre-activation for category k: t_i W[:, 0] + W[:, 1 + k] + b, i.e. the
// first layer applied to [t, one-hot(k)] without materializing the one-hot.
// `base` holds t_i W[:, 0] + b.
Eigen::MatrixXd base_layer(const nn::MlpParams& net, std::span<const double> t) {
  const auto& l0 = net.layers.front();
  Eigen::Map<const Eigen::VectorXd> tv(t.data(), static_cast<Eigen::Index>(t.size()));
  Eigen::MatrixXd base = tv * l0.weight.col(0).transpose();
  base.rowwise() += l0.bias.transpose();
  return base;
}

}  // namespace

void OutcomeConfig::validate() const {
  if (epochs == 0) throw ConfigError("outcome epochs must be positive");
  if (batch_size == 0) throw ConfigError("outcome batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("outcome learning_rate must be positive");
  if (hidden_units == 0) throw ConfigError("outcome hidden_units must be positive");
}

void to_json(nlohmann::json& j, const OutcomeConfig& c) {
  j = {{"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"seed", c.seed},
       {"hidden_units", c.hidden_units},
       {"partially_linear", c.partially_linear}};
}

void from_json(const nlohmann::json& j, OutcomeConfig& c) {
  io::reject_unknown_keys(j, {"epochs", "batch_size", "learning_rate", "seed", "hidden_units", "partially_linear"},
                          "outcome config");
  try {
    if (j.contains("epochs")) c.epochs = j["epochs"].get<std::size_t>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("hidden_units")) c.hidden_units = j["hidden_units"].get<std::size_t>();
    if (j.contains("partially_linear")) c.partially_linear = j["partially_linear"].get<bool>();
  } catch (const nlohmann::json::type_error& e) {
    throw ConfigError(std::string("outcome config: ") + e.what());
  }
}

std::vector<std::span<double>> OutcomeModel::blocks() {
  auto out = nn::blocks(net);
  out.emplace_back(&slope, 1);
  out.emplace_back(offsets.data(), static_cast<std::size_t>(offsets.size()));
  return out;
}

std::vector<std::span<const double>> OutcomeModel::blocks() const {
  auto out = nn::blocks(net);
  out.emplace_back(&slope, 1);
  out.emplace_back(offsets.data(), static_cast<std::size_t>(offsets.size()));
  return out;
}

OutcomeModel OutcomeModel::zeros_like() const {
  OutcomeModel z = *this;
  z.net = net.zeros_like();
  z.slope = 0.0;
  z.offsets.setZero();
  return z;
}

OutcomeModel init_outcome(std::size_t k_categories, const OutcomeConfig& config) {
  config.validate();
  if (k_categories == 0) throw ConfigError("outcome model needs at least one category");
  OutcomeModel model;
  model.config = config;
  model.k_categories = k_categories;
  SplitMix64 rng(derive_seed(config.seed, kInitStream));
  if (config.partially_linear) {
    model.offsets = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k_categories));
  } else {
    const std::size_t H = config.hidden_units;
    const std::size_t dims[] = {1 + k_categories, H, H, 1};
    model.net = nn::MlpParams::glorot(dims, rng);
    model.offsets = Eigen::VectorXd(0);
  }
  return model;
}

double outcome_predict(const OutcomeModel& model, double t, std::size_t k) {
  if (k >= model.k_categories) throw ConfigError("category index out of range");
  if (model.config.partially_linear) return model.slope * t + model.offsets(static_cast<Eigen::Index>(k));
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(1 + model.k_categories));
  x(0) = t;
  x(static_cast<Eigen::Index>(1 + k)) = 1.0;
  return nn::mlp_apply(model.net, x)(0);
}

Eigen::MatrixXd outcome_predict_all(const OutcomeModel& model, std::span<const double> t) {
  const auto B = static_cast<Eigen::Index>(t.size());
  const auto K = static_cast<Eigen::Index>(model.k_categories);
  if (model.config.partially_linear) {
    Eigen::Map<const Eigen::VectorXd> tv(t.data(), B);
    return (model.slope * tv * Eigen::RowVectorXd::Ones(K)).rowwise() + model.offsets.transpose();
  }
  const Eigen::MatrixXd base = base_layer(model.net, t);
  const auto& w0 = model.net.layers.front().weight;
  Eigen::MatrixXd f(B, K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const Eigen::MatrixXd a0 = (base.rowwise() + w0.col(1 + k).transpose()).cwiseMax(0.0);
    f.col(k) = nn::forward(model.net, a0, nullptr, 1).col(0);
  }
  return f;
}

OutcomeLoss outcome_loss(const OutcomeModel& model, std::span<const double> t, std::span<const double> y,
                         const Eigen::MatrixXd& posteriors, bool with_gradient) {
  const auto B = static_cast<Eigen::Index>(t.size());
  const auto K = static_cast<Eigen::Index>(model.k_categories);
  if (B == 0) throw DataError("outcome loss on an empty batch");
  if (y.size() != t.size() || posteriors.rows() != B || posteriors.cols() != K) {
    throw ConfigError("outcome loss: shape mismatch (posterior width must equal k_categories)");
  }
  const double inv_b = 1.0 / static_cast<double>(B);
  Eigen::Map<const Eigen::VectorXd> tv(t.data(), B);
  Eigen::Map<const Eigen::VectorXd> yv(y.data(), B);

  OutcomeLoss out;
  if (model.config.partially_linear) {
    const Eigen::MatrixXd f = outcome_predict_all(model, t);
    const Eigen::MatrixXd resid = (-f).colwise() + yv;
    out.loss = inv_b * posteriors.cwiseProduct(resid.cwiseProduct(resid)).sum();
    if (with_gradient) {
      // d loss / d f_ik = -2 q_ik resid_ik / B.
      const Eigen::MatrixXd d = -2.0 * inv_b * posteriors.cwiseProduct(resid);
      OutcomeModel g = model.zeros_like();
      g.slope = (d.array().colwise() * tv.array()).sum();
      g.offsets = d.colwise().sum().transpose();
      out.gradient = std::move(g);
    }
    return out;
  }

  // The objective separates over categories, so each category's block of B
  // rows is pushed forward and back on its own; blocks stay cache-resident.
  const Eigen::MatrixXd base = base_layer(model.net, t);
  const auto& w0 = model.net.layers.front().weight;
  OutcomeModel g;
  if (with_gradient) g = model.zeros_like();
  nn::Tape tape;
  Eigen::MatrixXd d_a0;
  for (Eigen::Index k = 0; k < K; ++k) {
    const Eigen::MatrixXd pre = base.rowwise() + w0.col(1 + k).transpose();
    const Eigen::MatrixXd f = nn::forward(model.net, pre.cwiseMax(0.0), with_gradient ? &tape : nullptr, 1);
    const Eigen::VectorXd resid = yv - f.col(0);
    out.loss += inv_b * posteriors.col(k).dot(resid.cwiseProduct(resid));
    if (!with_gradient) continue;
    const Eigen::MatrixXd d = -2.0 * inv_b * posteriors.col(k).cwiseProduct(resid);
    nn::backward(model.net, tape, d, g.net, &d_a0, 1);
    const Eigen::MatrixXd d_pre = (pre.array() > 0.0).select(d_a0, 0.0);
    auto& g0 = g.net.layers.front();
    const Eigen::VectorXd col_sum = d_pre.colwise().sum().transpose();
    g0.weight.col(1 + k) += col_sum;
    g0.weight.col(0) += d_pre.transpose() * tv;
    g0.bias += col_sum;
  }
  if (!with_gradient) return out;
  out.gradient = std::move(g);
  return out;
}

OutcomeModel fit_outcome_weighted(std::span<const double> t, std::span<const double> y,
                                  const Eigen::MatrixXd& posteriors, const OutcomeConfig& config) {
  config.validate();
  const std::size_t n = t.size();
  if (n == 0) throw DataError("fit_outcome: empty dataset");
  if (y.size() != n || static_cast<std::size_t>(posteriors.rows()) != n) {
    throw ConfigError("fit_outcome: t, y and posterior rows differ in length");
  }
  OutcomeModel model = init_outcome(static_cast<std::size_t>(posteriors.cols()), config);
  nn::AdamState adam;
  nn::LoopSettings loop{config.epochs, std::min(config.batch_size, n), config.learning_rate,
                        derive_seed(config.seed, kShuffleStream)};
  std::vector<double> bt, by;
  model.final_loss = nn::run_minibatch_training(n, loop, [&](std::span<const std::size_t> idx, double lr) {
    const auto B = static_cast<Eigen::Index>(idx.size());
    bt.resize(idx.size());
    by.resize(idx.size());
    Eigen::MatrixXd bq(B, posteriors.cols());
    for (Eigen::Index i = 0; i < B; ++i) {
      bt[i] = t[idx[i]];
      by[i] = y[idx[i]];
      bq.row(i) = posteriors.row(static_cast<Eigen::Index>(idx[i]));
    }
    OutcomeLoss l = outcome_loss(model, bt, by, bq, true);
    if (!std::isfinite(l.loss)) return l.loss;
    adam.learning_rate = lr;
    auto p = model.blocks();
    const OutcomeModel& grad = *l.gradient;
    auto gb = grad.blocks();
    nn::adam_update(adam, p, gb);
    return l.loss;
  });
  return model;
}

OutcomeModel fit_outcome(const Dataset& data, const vde::VdeModel& vde, const OutcomeConfig& config) {
  data.validate();
  if (data.empty()) throw DataError("fit_outcome: empty dataset");
  const Eigen::MatrixXd q = vde::encoder_posteriors(vde, data.t, data.eps);
  return fit_outcome_weighted(data.t, data.y, q, config);
}

Eigen::VectorXd marginal_control(const Dataset& data, const vde::VdeModel& vde) {
  if (data.empty()) throw DataError("marginal_control: empty dataset");
  const Eigen::MatrixXd q = vde::encoder_posteriors(vde, data.t, data.eps);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(q.cols());
  for (Eigen::Index i = 0; i < q.rows(); ++i) mean += q.row(i).transpose();
  return mean / static_cast<double>(q.rows());
}

double expected_loglik(const OutcomeModel& model, std::span<const double> t, std::span<const double> y,
                       const Eigen::MatrixXd& posteriors) {
  const auto B = static_cast<Eigen::Index>(t.size());
  if (B == 0) throw DataError("expected_loglik: empty data");
  const Eigen::MatrixXd f = outcome_predict_all(model, t);
  Eigen::Map<const Eigen::VectorXd> yv(y.data(), B);
  const Eigen::MatrixXd resid = (-f).colwise() + yv;
  const Eigen::MatrixXd ll = (-nn::kHalfLogTwoPi) - 0.5 * resid.array().square();
  return posteriors.cwiseProduct(ll).sum() / static_cast<double>(B);
}

void EffectCurve::validate() const {
  if (tau_hat.size() != grid.size() || (tau_true && tau_true->size() != grid.size())) {
    throw ConfigError("effect curve columns differ in length");
  }
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw ConfigError("effect curve grid must be strictly increasing");
  }
}

EffectCurve estimate_effect(const OutcomeModel& model, const Eigen::VectorXd& marginal,
                            std::span<const double> grid) {
  if (static_cast<std::size_t>(marginal.size()) != model.k_categories) {
    throw ConfigError("marginal length " + std::to_string(marginal.size()) + " does not match k_categories " +
                      std::to_string(model.k_categories));
  }
  EffectCurve curve;
  curve.grid.assign(grid.begin(), grid.end());
  const Eigen::VectorXd tau = outcome_predict_all(model, grid) * marginal;
  curve.tau_hat.assign(tau.data(), tau.data() + tau.size());
  return curve;
}

std::vector<double> make_grid(double lo, double hi, std::size_t count) {
  if (count == 0) throw ConfigError("grid count must be positive");
  if (count == 1) return {lo};
  if (!(hi > lo)) throw ConfigError("grid needs hi > lo");
  std::vector<double> g(count);
  const double step = (hi - lo) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) g[i] = lo + step * static_cast<double>(i);
  g.back() = hi;
  return g;
}

std::vector<double> parse_grid(const std::string& spec) {
  const auto a = spec.find(':');
  const auto b = a == std::string::npos ? a : spec.find(':', a + 1);
  if (a == std::string::npos || b == std::string::npos) {
    throw ConfigError("grid must be lo:hi:count, got '" + spec + "'");
  }
  try {
    std::size_t used = 0;
    const double lo = std::stod(spec.substr(0, a));
    const double hi = std::stod(spec.substr(a + 1, b - a - 1));
    const std::string count_s = spec.substr(b + 1);
    const long count = std::stol(count_s, &used);
    if (used != count_s.size() || count <= 0) throw std::invalid_argument("count");
    return make_grid(lo, hi, static_cast<std::size_t>(count));
  } catch (const std::logic_error&) {
    throw ConfigError("grid must be lo:hi:count, got '" + spec + "'");
  }
}

std::string curve_to_csv(const EffectCurve& curve) {
  curve.validate();
  std::string out = curve.tau_true ? "t,tau_hat,tau_true\n" : "t,tau_hat\n";
  for (std::size_t i = 0; i < curve.grid.size(); ++i) {
    out += io::format_double(curve.grid[i]);
    out += ',';
    out += io::format_double(curve.tau_hat[i]);
    if (curve.tau_true) {
      out += ',';
      out += io::format_double((*curve.tau_true)[i]);
    }
    out += '\n';
  }
  return out;
}

void save_curve(const EffectCurve& curve, const std::filesystem::path& path) {
  io::write_file_atomic(path, curve_to_csv(curve));
}

nlohmann::json to_json(const OutcomeModel& model) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : model.net.layers) {
    layers.push_back({{"weight", io::matrix_to_json(l.weight)}, {"bias", io::vector_to_json(l.bias)}});
  }
  return {{"format", "gcfn-outcome-1"},
          {"config", model.config},
          {"k_categories", model.k_categories},
          {"network", layers},
          {"slope", model.slope},
          {"offsets", io::vector_to_json(model.offsets)},
          {"noise_variance", model.noise_variance},
          {"final_loss", model.final_loss}};
}

OutcomeModel outcome_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "gcfn-outcome-1") throw ParseError("not an outcome checkpoint");
    OutcomeModel m;
    m.config = j.at("config").get<OutcomeConfig>();
    m.k_categories = j.at("k_categories").get<std::size_t>();
    for (const auto& l : j.at("network")) {
      m.net.layers.push_back({io::matrix_from_json(l.at("weight")), io::vector_from_json(l.at("bias"))});
    }
    m.slope = j.at("slope").get<double>();
    m.offsets = io::vector_from_json(j.at("offsets"));
    m.noise_variance = j.at("noise_variance").get<double>();
    m.final_loss = j.at("final_loss").get<double>();
    if (m.config.partially_linear) {
      if (static_cast<std::size_t>(m.offsets.size()) != m.k_categories) throw ParseError("offsets length mismatch");
    } else {
      m.net.validate();
      if (m.net.input_dim() != 1 + m.k_categories || m.net.output_dim() != 1 || m.net.layers.size() < 2) {
        throw ParseError("outcome network shape disagrees with k_categories");
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("outcome checkpoint: ") + e.what());
  }
}

void save_model(const OutcomeModel& model, const std::filesystem::path& path) {
  io::write_file_atomic(path, to_json(model).dump() + "\n");
}

OutcomeModel load_model(const std::filesystem::path& path) {
  try {
    return outcome_from_json(nlohmann::json::parse(io::read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace gcfn::outcome
