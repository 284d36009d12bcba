#include "gcfn/vde.hpp"

#include <algorithm>
#include <cmath>

#include "gcfn/error.hpp"
#include "gcfn/io.hpp"
#include "gcfn/rng.hpp"

namespace gcfn::vde {

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;

Eigen::MatrixXd encoder_input(std::span<const double> t, std::span<const double> eps) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(t.size()), 2);
  for (std::size_t i = 0; i < t.size(); ++i) {
    x(static_cast<Eigen::Index>(i), 0) = t[i];
    x(static_cast<Eigen::Index>(i), 1) = eps[i];
  }
  return x;
}

Eigen::MatrixXd column(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// The categorical decoder's first layer acts on [one-hot(k), eps], so its
// pre-activation for category k is W[:, k] + eps W[:, K] + b. `base` holds
// eps W[:, K] + b for the batch; one category block is evaluated at a time.
Eigen::MatrixXd categorical_base(const nn::MlpParams& net, std::span<const double> eps, std::size_t k_categories) {
  const auto& first = net.layers.front();
  Eigen::MatrixXd base = column(eps) * first.weight.col(static_cast<Eigen::Index>(k_categories)).transpose();
  base.rowwise() += first.bias.transpose();
  return base;
}

Eigen::MatrixXd categorical_pre(const nn::MlpParams& net, const Eigen::MatrixXd& base, Eigen::Index k) {
  return base.rowwise() + net.layers.front().weight.col(k).transpose();
}

std::vector<std::size_t> bin_indices(const BinScheme& bins, std::span<const double> t) {
  std::vector<std::size_t> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = bins.bin(t[i]);
  return out;
}

Eigen::VectorXd marginal_logprobs(const VdeModel& model) {
  return nn::softmax_logprobs(model.params.marginal_logits);
}

}  // namespace

DecoderStructure parse_structure(const std::string& name) {
  if (name == "additive") return DecoderStructure::additive;
  if (name == "multiplicative") return DecoderStructure::multiplicative;
  if (name == "categorical") return DecoderStructure::categorical;
  throw ConfigError("unknown decoder structure '" + name + "'");
}

std::string structure_name(DecoderStructure s) {
  switch (s) {
    case DecoderStructure::additive: return "additive";
    case DecoderStructure::multiplicative: return "multiplicative";
    case DecoderStructure::categorical: return "categorical";
  }
  return "unknown";
}

std::size_t BinScheme::bin(double x) const {
  if (!std::isfinite(x)) throw DomainError("cannot bin a non-finite value");
  if (x < lo) return 0;
  if (x >= hi) return interior + 1;
  const double width = (hi - lo) / static_cast<double>(interior);
  const auto j = static_cast<std::size_t>(std::floor((x - lo) / width));
  return 1 + std::min(j, interior - 1);
}

std::vector<double> BinScheme::edges() const {
  std::vector<double> e(interior + 1);
  const double width = (hi - lo) / static_cast<double>(interior);
  for (std::size_t i = 0; i <= interior; ++i) e[i] = lo + width * static_cast<double>(i);
  e.back() = hi;
  return e;
}

void VdeConfig::validate() const {
  if (k_categories < 2) throw ConfigError("k_categories must be at least 2");
  if (!(kappa >= 0.0 && kappa < 1.0)) throw ConfigError("kappa must lie in [0, 1)");
  if (!(zeta >= 0.0) || !std::isfinite(zeta)) throw ConfigError("zeta must be non-negative");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (hidden_units == 0) throw ConfigError("hidden_units must be positive");
  if (treatment_bins.interior == 0 || !(treatment_bins.hi > treatment_bins.lo)) {
    throw ConfigError("treatment_bins must have hi > lo and at least one interior bin");
  }
}

void to_json(nlohmann::json& j, const VdeConfig& c) {
  j = {{"k_categories", c.k_categories},
       {"kappa", c.kappa},
       {"decoder_structure", structure_name(c.decoder_structure)},
       {"zeta", c.zeta},
       {"zeta_observed_mean", c.zeta_observed_mean},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"seed", c.seed},
       {"hidden_units", c.hidden_units},
       {"treatment_bins",
        {{"lo", c.treatment_bins.lo}, {"hi", c.treatment_bins.hi}, {"interior", c.treatment_bins.interior}}}};
}

void from_json(const nlohmann::json& j, VdeConfig& c) {
  io::reject_unknown_keys(j, {"k_categories", "kappa", "decoder_structure", "zeta", "zeta_observed_mean", "epochs", "batch_size",
                              "learning_rate", "seed", "hidden_units", "treatment_bins"},
                          "vde config");
  try {
    if (j.contains("k_categories")) c.k_categories = j["k_categories"].get<std::size_t>();
    if (j.contains("kappa")) c.kappa = j["kappa"].get<double>();
    if (j.contains("decoder_structure")) c.decoder_structure = parse_structure(j["decoder_structure"].get<std::string>());
    if (j.contains("zeta")) c.zeta = j["zeta"].get<double>();
    if (j.contains("zeta_observed_mean")) c.zeta_observed_mean = j["zeta_observed_mean"].get<bool>();
    if (j.contains("epochs")) c.epochs = j["epochs"].get<std::size_t>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("hidden_units")) c.hidden_units = j["hidden_units"].get<std::size_t>();
    if (j.contains("treatment_bins")) {
      const auto& b = j["treatment_bins"];
      io::reject_unknown_keys(b, {"lo", "hi", "interior"}, "vde config treatment_bins");
      if (b.contains("lo")) c.treatment_bins.lo = b["lo"].get<double>();
      if (b.contains("hi")) c.treatment_bins.hi = b["hi"].get<double>();
      if (b.contains("interior")) c.treatment_bins.interior = b["interior"].get<std::size_t>();
    }
  } catch (const nlohmann::json::type_error& e) {
    throw ConfigError(std::string("vde config: ") + e.what());
  }
}

VdeParameters VdeParameters::zeros_like() const {
  return {encoder.zeros_like(), Eigen::VectorXd::Zero(table.size()), decoder.zeros_like(),
          Eigen::VectorXd::Zero(marginal_logits.size())};
}

std::vector<std::span<double>> VdeParameters::blocks() {
  auto out = nn::blocks(encoder);
  out.emplace_back(table.data(), static_cast<std::size_t>(table.size()));
  for (auto b : nn::blocks(decoder)) out.push_back(b);
  out.emplace_back(marginal_logits.data(), static_cast<std::size_t>(marginal_logits.size()));
  return out;
}

std::vector<std::span<const double>> VdeParameters::blocks() const {
  auto out = nn::blocks(encoder);
  out.emplace_back(table.data(), static_cast<std::size_t>(table.size()));
  for (auto b : nn::blocks(decoder)) out.push_back(b);
  out.emplace_back(marginal_logits.data(), static_cast<std::size_t>(marginal_logits.size()));
  return out;
}

VdeModel init_vde(const VdeConfig& config) {
  config.validate();
  SplitMix64 rng(derive_seed(config.seed, kInitStream));
  const std::size_t K = config.k_categories;
  const std::size_t H = config.hidden_units;
  VdeModel model;
  model.config = config;
  const std::size_t enc_dims[] = {2, H, H, K};
  model.params.encoder = nn::MlpParams::glorot(enc_dims, rng);
  if (config.decoder_structure == DecoderStructure::categorical) {
    const std::size_t dec_dims[] = {K + 1, H, H, config.treatment_bins.count()};
    model.params.decoder = nn::MlpParams::glorot(dec_dims, rng);
    model.params.table = Eigen::VectorXd(0);
  } else {
    const std::size_t dec_dims[] = {1, H, H, 1};
    model.params.decoder = nn::MlpParams::glorot(dec_dims, rng);
    // h' as a linear map on the one-hot code: fan_in K, fan_out 1.
    const double limit = std::sqrt(6.0 / static_cast<double>(K + 1));
    model.params.table.resize(static_cast<Eigen::Index>(K));
    for (Eigen::Index k = 0; k < model.params.table.size(); ++k) model.params.table(k) = rng.uniform(-limit, limit);
  }
  model.params.marginal_logits = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(K));
  return model;
}

ControlPosterior encoder_posterior(const VdeModel& model, double t, double eps) {
  Eigen::VectorXd x(2);
  x << t, eps;
  return {nn::softmax_logprobs(nn::mlp_apply(model.params.encoder, x)).array().exp()};
}

Eigen::MatrixXd encoder_posteriors(const VdeModel& model, std::span<const double> t,
                                   std::span<const double> eps) {
  if (t.size() != eps.size()) throw ConfigError("t and eps lengths differ");
  const auto logits = nn::forward(model.params.encoder, encoder_input(t, eps));
  return nn::softmax_logprobs_rows(logits).array().exp();
}

double decoder_logdensity(const VdeModel& model, double t, std::size_t k, double eps) {
  const std::size_t K = model.k();
  if (k >= K) throw ConfigError("category index out of range");
  switch (model.structure()) {
    case DecoderStructure::additive:
    case DecoderStructure::multiplicative: {
      Eigen::VectorXd x(1);
      x << eps;
      const double g = nn::mlp_apply(model.params.decoder, x)(0);
      const double h = model.params.table(static_cast<Eigen::Index>(k));
      const double mean = model.structure() == DecoderStructure::additive ? h + g : h * g;
      return nn::gaussian_loglik(t, mean, 1.0);
    }
    case DecoderStructure::categorical: {
      const std::size_t b = model.config.treatment_bins.bin(t);
      Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(K + 1));
      x(static_cast<Eigen::Index>(k)) = 1.0;
      x(static_cast<Eigen::Index>(K)) = eps;
      return nn::softmax_logprobs(nn::mlp_apply(model.params.decoder, x))(static_cast<Eigen::Index>(b));
    }
  }
  return 0.0;
}

Eigen::MatrixXd decoder_means(const VdeModel& model, std::span<const double> eps) {
  if (model.structure() == DecoderStructure::categorical) {
    throw DomainError("the categorical decoder has no structural mean");
  }
  const Eigen::VectorXd g = nn::forward(model.params.decoder, column(eps));
  const Eigen::RowVectorXd h = model.params.table.transpose();
  if (model.structure() == DecoderStructure::additive) {
    return (g * Eigen::RowVectorXd::Ones(h.size())).rowwise() + h;
  }
  return g * h;
}

Eigen::MatrixXd decoder_logdensities(const VdeModel& model, std::span<const double> t,
                                     std::span<const double> eps) {
  if (t.size() != eps.size()) throw ConfigError("t and eps lengths differ");
  const auto B = static_cast<Eigen::Index>(t.size());
  const auto K = static_cast<Eigen::Index>(model.k());
  if (model.structure() != DecoderStructure::categorical) {
    Eigen::MatrixXd resid = (-decoder_means(model, eps)).colwise() + column(t).col(0);
    return (-nn::kHalfLogTwoPi) - 0.5 * resid.array().square();
  }
  const auto bins = bin_indices(model.config.treatment_bins, t);
  const Eigen::MatrixXd base = categorical_base(model.params.decoder, eps, model.k());
  Eigen::MatrixXd out(B, K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const Eigen::MatrixXd pre = categorical_pre(model.params.decoder, base, k);
    const Eigen::MatrixXd logp_all = nn::softmax_logprobs_rows(nn::forward(model.params.decoder, pre.cwiseMax(0.0), nullptr, 1));
    for (Eigen::Index i = 0; i < B; ++i) out(i, k) = logp_all(i, static_cast<Eigen::Index>(bins[i]));
  }
  return out;
}

double kl_categorical(const Eigen::VectorXd& q, const Eigen::VectorXd& r) {
  if (q.size() != r.size()) throw ConfigError("kl: length mismatch");
  double kl = 0.0;
  for (Eigen::Index k = 0; k < q.size(); ++k) {
    if (q(k) > 0.0) kl += q(k) * (std::log(q(k)) - std::log(r(k)));
  }
  return kl;
}

double row_loss(const Eigen::VectorXd& q, const Eigen::VectorXd& logp, const Eigen::VectorXd& r,
                double kappa) {
  if (q.size() != logp.size()) throw ConfigError("row_loss: length mismatch");
  return -q.dot(logp) + kappa * kl_categorical(q, r);
}

VdeLoss vde_loss(const VdeModel& model, const Dataset& batch, const VdeConfig& config, bool with_gradient) {
  if (batch.empty()) throw DataError("vde_loss on an empty batch");
  if (!(config.kappa >= 0.0 && config.kappa < 1.0)) throw ConfigError("kappa must lie in [0, 1)");
  if (!(config.zeta >= 0.0)) throw ConfigError("zeta must be non-negative");
  const auto B = static_cast<Eigen::Index>(batch.size());
  const auto K = static_cast<Eigen::Index>(model.k());
  const double inv_b = 1.0 / static_cast<double>(B);
  const double kappa = config.kappa;
  double zeta = config.zeta;
  const auto& params = model.params;

  // Supervised targets.
  std::vector<std::int64_t> target(static_cast<std::size_t>(B), -1);
  if (zeta > 0.0) {
    for (Eigen::Index i = 0; i < B; ++i) {
      if (!batch.m[i]) continue;
      if (!batch.z[i]) throw DataError("row " + std::to_string(i) + ": m = 1 but z is missing");
      const std::size_t c = model.config.treatment_bins.bin(*batch.z[i]);
      if (static_cast<Eigen::Index>(c) >= K) {
        throw ConfigError("supervised term needs k_categories == number of confounder bins (" +
                          std::to_string(model.config.treatment_bins.count()) + ")");
      }
      target[i] = static_cast<std::int64_t>(c);
    }
  }
  // Folding B / n_observed into zeta turns the batch mean into a mean over m = 1 rows.
  const auto n_observed = std::count_if(target.begin(), target.end(), [](std::int64_t c) { return c >= 0; });
  const double sup_scale = config.zeta_observed_mean && n_observed > 0 ? static_cast<double>(B) / n_observed : 1.0;
  zeta *= sup_scale;

  // Encoder.
  nn::Tape enc_tape;
  const Eigen::MatrixXd logits =
      nn::forward(params.encoder, encoder_input(batch.t, batch.eps), with_gradient ? &enc_tape : nullptr);
  const Eigen::MatrixXd logq = nn::softmax_logprobs_rows(logits);
  const Eigen::MatrixXd q = logq.array().exp();
  const Eigen::VectorXd logr = marginal_logprobs(model);
  const Eigen::VectorXd r = logr.array().exp();

  // Decoder log-densities, plus what the backward pass needs.
  Eigen::MatrixXd logp(B, K);
  Eigen::MatrixXd resid;  // t - mean, additive / multiplicative
  Eigen::VectorXd g;      // g'(eps)
  nn::Tape dec_tape;
  std::optional<VdeParameters> grad;
  if (with_gradient) grad = params.zeros_like();
  if (model.structure() == DecoderStructure::categorical) {
    // d loss / d logp_ik = -q_ik / B does not involve the decoder, so each
    // category block is differentiated right after its forward pass.
    const auto t_bins = bin_indices(model.config.treatment_bins, batch.t);
    const Eigen::MatrixXd base = categorical_base(params.decoder, batch.eps, model.k());
    Eigen::MatrixXd d_a1;
    for (Eigen::Index k = 0; k < K; ++k) {
      const Eigen::MatrixXd pre = categorical_pre(params.decoder, base, k);
      const Eigen::MatrixXd logp_all =
          nn::softmax_logprobs_rows(nn::forward(params.decoder, pre.cwiseMax(0.0), with_gradient ? &dec_tape : nullptr, 1));
      for (Eigen::Index i = 0; i < B; ++i) logp(i, k) = logp_all(i, static_cast<Eigen::Index>(t_bins[i]));
      if (!with_gradient) continue;
      Eigen::MatrixXd d_out = -logp_all.array().exp();  // -softmax
      for (Eigen::Index i = 0; i < B; ++i) {
        d_out(i, static_cast<Eigen::Index>(t_bins[i])) += 1.0;
        d_out.row(i) *= -inv_b * q(i, k);
      }
      nn::backward(params.decoder, dec_tape, d_out, grad->decoder, &d_a1, 1);
      const Eigen::MatrixXd d_pre0 = (pre.array() > 0.0).select(d_a1, 0.0);
      auto& g0 = grad->decoder.layers.front();
      const Eigen::VectorXd col_sum = d_pre0.colwise().sum().transpose();
      g0.weight.col(k) += col_sum;
      g0.weight.col(K) += d_pre0.transpose() * column(batch.eps).col(0);
      g0.bias += col_sum;
    }
  } else {
    g = nn::forward(params.decoder, column(batch.eps), with_gradient ? &dec_tape : nullptr);
    const Eigen::RowVectorXd h = params.table.transpose();
    Eigen::MatrixXd mean = model.structure() == DecoderStructure::additive
                               ? Eigen::MatrixXd((g * Eigen::RowVectorXd::Ones(K)).rowwise() + h)
                               : Eigen::MatrixXd(g * h);
    resid = (-mean).colwise() + column(batch.t).col(0);
    logp = (-nn::kHalfLogTwoPi) - 0.5 * resid.array().square();
  }

  VdeLoss out;
  Eigen::MatrixXd d_logits;  // d loss / d encoder logits
  if (with_gradient) d_logits.resize(B, K);
  Eigen::VectorXd d_marginal = Eigen::VectorXd::Zero(K);
  double recon_sum = 0.0, kl_sum = 0.0, sup_sum = 0.0;
  for (Eigen::Index i = 0; i < B; ++i) {
    double recon = 0.0, kl = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
      recon += q(i, k) * logp(i, k);
      kl += q(i, k) * (logq(i, k) - logr(k));
    }
    recon_sum += recon;
    kl_sum += kl;
    const double objective_i = recon - kappa * kl;
    if (target[i] >= 0) sup_sum += logq(i, target[i]);
    if (with_gradient) {
      // d/dL_j sum_k q_k a_k = q_j (a_j - sum_k q_k a_k), a_k = logp_k - kappa log(q_k / r_k).
      for (Eigen::Index k = 0; k < K; ++k) {
        const double a = logp(i, k) - kappa * (logq(i, k) - logr(k));
        double d = q(i, k) * (a - objective_i);
        if (target[i] >= 0) d += zeta * ((k == target[i] ? 1.0 : 0.0) - q(i, k));
        d_logits(i, k) = -inv_b * d;
      }
      d_marginal += (q.row(i).transpose() - r);
    }
  }
  out.reconstruction = recon_sum * inv_b;
  out.kl = kl_sum * inv_b;
  out.supervised = sup_sum * inv_b * sup_scale;
  out.loss = -(out.reconstruction - kappa * out.kl + config.zeta * out.supervised);
  if (!with_gradient) return out;

  nn::backward(params.encoder, enc_tape, d_logits, grad->encoder);
  grad->marginal_logits = -inv_b * kappa * d_marginal;

  if (model.structure() != DecoderStructure::categorical) {
    // d logp / d mean = resid, so d loss / d mean_ik = -q_ik resid_ik / B.
    const Eigen::MatrixXd w = -inv_b * q.cwiseProduct(resid);
    Eigen::MatrixXd d_g(B, 1);
    if (model.structure() == DecoderStructure::additive) {
      grad->table = w.colwise().sum().transpose();
      d_g.col(0) = w.rowwise().sum();
    } else {
      grad->table = (w.array().colwise() * g.array()).colwise().sum().transpose();
      d_g.col(0) = w * params.table;
    }
    nn::backward(params.decoder, dec_tape, d_g, grad->decoder);
  }
  out.gradient = std::move(grad);
  return out;
}

VdeModel train_vde(const Dataset& data, const VdeConfig& config) {
  config.validate();
  data.validate();
  if (data.empty()) throw DataError("train_vde: empty dataset");
  if (config.batch_size > data.size()) throw ConfigError("batch_size exceeds dataset size");
  VdeModel model = init_vde(config);
  nn::AdamState adam;
  adam.learning_rate = config.learning_rate;
  nn::LoopSettings loop{config.epochs, config.batch_size, config.learning_rate,
                        derive_seed(config.seed, kShuffleStream)};
  model.final_loss = nn::run_minibatch_training(data.size(), loop, [&](std::span<const std::size_t> idx, double lr) {
    const Dataset batch = data.subset(idx);
    VdeLoss l = vde_loss(model, batch, config, true);
    if (!std::isfinite(l.loss)) return l.loss;
    adam.learning_rate = lr;
    auto p = model.params.blocks();
    const auto& grad = *l.gradient;
    auto g = grad.blocks();
    nn::adam_update(adam, p, g);
    return l.loss;
  });
  return model;
}

nlohmann::json to_json(const VdeModel& model) {
  auto mlp_json = [](const nn::MlpParams& p) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : p.layers) {
      layers.push_back({{"weight", io::matrix_to_json(l.weight)}, {"bias", io::vector_to_json(l.bias)}});
    }
    return layers;
  };
  nlohmann::json j;
  j["format"] = "gcfn-vde-1";
  j["config"] = model.config;
  j["encoder"] = mlp_json(model.params.encoder);
  j["decoder"] = {{"structure", structure_name(model.structure())},
                  {"table", io::vector_to_json(model.params.table)},
                  {"network", mlp_json(model.params.decoder)}};
  j["marginal_logits"] = io::vector_to_json(model.params.marginal_logits);
  if (model.structure() == DecoderStructure::categorical || model.config.zeta > 0.0) {
    j["bin_edges"] = model.config.treatment_bins.edges();
  }
  j["final_loss"] = model.final_loss;
  return j;
}

namespace {

nn::MlpParams mlp_from_json(const nlohmann::json& j) {
  nn::MlpParams p;
  for (const auto& l : j) {
    p.layers.push_back({io::matrix_from_json(l.at("weight")), io::vector_from_json(l.at("bias"))});
  }
  p.validate();
  return p;
}

}  // namespace

VdeModel vde_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "gcfn-vde-1") throw ParseError("not a VDE checkpoint");
    VdeModel model;
    model.config = j.at("config").get<VdeConfig>();
    model.config.validate();
    model.params.encoder = mlp_from_json(j.at("encoder"));
    const auto& dec = j.at("decoder");
    if (parse_structure(dec.at("structure").get<std::string>()) != model.structure()) {
      throw ParseError("decoder structure disagrees with config");
    }
    model.params.table = io::vector_from_json(dec.at("table"));
    model.params.decoder = mlp_from_json(dec.at("network"));
    model.params.marginal_logits = io::vector_from_json(j.at("marginal_logits"));
    model.final_loss = j.at("final_loss").get<double>();
    const auto K = static_cast<std::size_t>(model.k());
    if (model.params.encoder.input_dim() != 2 || model.params.encoder.output_dim() != K ||
        static_cast<std::size_t>(model.params.marginal_logits.size()) != K) {
      throw ParseError("VDE checkpoint shapes disagree with k_categories");
    }
    if (model.structure() == DecoderStructure::categorical) {
      if (model.params.decoder.input_dim() != K + 1 ||
          model.params.decoder.output_dim() != model.config.treatment_bins.count() ||
          model.params.decoder.layers.size() < 2) {
        throw ParseError("categorical decoder shape disagrees with config");
      }
    } else if (static_cast<std::size_t>(model.params.table.size()) != K ||
               model.params.decoder.input_dim() != 1 || model.params.decoder.output_dim() != 1) {
      throw ParseError("structural decoder shape disagrees with config");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("VDE checkpoint: ") + e.what());
  }
}

void save_model(const VdeModel& model, const std::filesystem::path& path) {
  io::write_file_atomic(path, to_json(model).dump() + "\n");
}

VdeModel load_model(const std::filesystem::path& path) {
  try {
    return vde_from_json(nlohmann::json::parse(io::read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace gcfn::vde
