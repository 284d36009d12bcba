#include "gcfn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gcfn/error.hpp"
#include "gcfn/io.hpp"
#include "gcfn/rng.hpp"

namespace gcfn::eval {

double effect_rmse(const outcome::EffectCurve& curve, const EffectFn& truth) {
  if (curve.grid.empty()) throw ConfigError("effect_rmse: empty grid");
  if (curve.tau_hat.size() != curve.grid.size()) throw ConfigError("effect_rmse: column lengths differ");
  std::vector<std::size_t> order(curve.grid.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return curve.grid[a] < curve.grid[b] || (curve.grid[a] == curve.grid[b] && curve.tau_hat[a] < curve.tau_hat[b]);
  });
  double sse = 0.0;
  for (std::size_t i : order) {
    const double e = curve.tau_hat[i] - truth(curve.grid[i]);
    sse += e * e;
  }
  return std::sqrt(sse / static_cast<double>(order.size()));
}

namespace {

std::size_t label_count(std::span<const std::size_t> labels) {
  std::size_t m = 0;
  for (auto l : labels) m = std::max(m, l + 1);
  return m;
}

// Plug-in MI from a dense contingency table of counts.
double table_mi(const std::vector<double>& counts, std::size_t rows, std::size_t cols, double n) {
  std::vector<double> row_sum(rows, 0.0), col_sum(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      row_sum[r] += counts[r * cols + c];
      col_sum[c] += counts[r * cols + c];
    }
  }
  double mi = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double nrc = counts[r * cols + c];
      if (nrc > 0.0) mi += nrc / n * std::log(nrc * n / (row_sum[r] * col_sum[c]));
    }
  }
  return std::max(0.0, mi);
}

std::vector<double> tabulate(std::span<const std::size_t> a, std::span<const std::size_t> b, std::size_t rows,
                             std::size_t cols) {
  std::vector<double> counts(rows * cols, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) counts[a[i] * cols + b[i]] += 1.0;
  return counts;
}

}  // namespace

double plugin_mutual_information(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  if (a.size() != b.size()) throw ConfigError("mutual information: label sequences differ in length");
  if (a.empty()) throw DataError("mutual information of an empty sample");
  const std::size_t rows = label_count(a), cols = label_count(b);
  return table_mi(tabulate(a, b, rows, cols), rows, cols, static_cast<double>(a.size()));
}

std::vector<std::size_t> equal_frequency_bins(std::span<const double> values, std::size_t bins) {
  if (bins == 0) throw ConfigError("equal_frequency_bins: bins must be positive");
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<std::size_t> out(n);
  for (std::size_t rank = 0; rank < n; ++rank) out[order[rank]] = rank * bins / n;
  return out;
}

IndependenceTest independence_test(std::span<const std::size_t> labels, std::span<const double> eps,
                                   std::size_t eps_bins, std::size_t n_permutations, std::uint64_t seed) {
  if (eps_bins < 2) throw ConfigError("independence test: eps_bins must be at least 2");
  if (n_permutations < 99) throw ConfigError("independence test: n_permutations must be at least 99");
  if (labels.size() != eps.size()) throw ConfigError("independence test: labels and eps differ in length");
  if (labels.empty()) throw DataError("independence test on an empty sample");

  const auto ebin = equal_frequency_bins(eps, eps_bins);
  const std::size_t rows = label_count(labels);
  const double n = static_cast<double>(labels.size());
  IndependenceTest out;
  auto counts = tabulate(labels, ebin, rows, eps_bins);
  out.mi_estimate = table_mi(counts, rows, eps_bins, n);

  std::vector<double> row_sum(rows, 0.0), col_sum(eps_bins, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < eps_bins; ++c) {
      row_sum[r] += counts[r * eps_bins + c];
      col_sum[c] += counts[r * eps_bins + c];
    }
  }
  double min_expected = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < rows; ++r) {
    if (row_sum[r] == 0.0) continue;
    for (std::size_t c = 0; c < eps_bins; ++c) min_expected = std::min(min_expected, row_sum[r] * col_sum[c] / n);
  }
  if (min_expected < 1.0) {
    out.warnings.push_back("sparse contingency table: smallest expected cell count " + io::format_double(min_expected) +
                           " < 1");
  }

  SplitMix64 rng(seed);
  std::vector<std::size_t> shuffled(labels.begin(), labels.end());
  std::size_t at_least = 0;
  // Relative slack so permutations that reproduce the observed table count as ties.
  const double threshold = out.mi_estimate * (1.0 - 1e-12) - 1e-15;
  for (std::size_t p = 0; p < n_permutations; ++p) {
    for (std::size_t i = shuffled.size() - 1; i > 0; --i) std::swap(shuffled[i], shuffled[rng.below(i + 1)]);
    const double mi = table_mi(tabulate(shuffled, ebin, rows, eps_bins), rows, eps_bins, n);
    if (mi >= threshold) ++at_least;
  }
  out.p_value = static_cast<double>(1 + at_least) / static_cast<double>(1 + n_permutations);
  return out;
}

std::vector<std::size_t> sample_controls(const vde::VdeModel& vde, const Dataset& data, std::uint64_t seed) {
  const Eigen::MatrixXd q = vde::encoder_posteriors(vde, data.t, data.eps);
  SplitMix64 rng(seed);
  std::vector<std::size_t> out(data.size());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    const double u = rng.uniform();
    double acc = 0.0;
    Eigen::Index k = 0;
    for (; k < q.cols() - 1; ++k) {
      acc += q(i, k);
      if (u < acc) break;
    }
    out[static_cast<std::size_t>(i)] = static_cast<std::size_t>(k);
  }
  return out;
}

IndependenceTest independence_diagnostic(const vde::VdeModel& vde, const Dataset& data, std::size_t eps_bins,
                                         std::size_t n_permutations, std::uint64_t seed) {
  if (data.empty()) throw DataError("independence diagnostic on an empty dataset");
  const auto labels = sample_controls(vde, data, derive_seed(seed, 1));
  return independence_test(labels, data.eps, eps_bins, n_permutations, derive_seed(seed, 2));
}

double reconstruction_error(const vde::VdeModel& vde, const Dataset& data) {
  if (vde.structure() == vde::DecoderStructure::categorical) {
    throw DomainError("reconstruction_error needs a structural decoder; use held-out log-mass for categorical");
  }
  if (data.empty()) throw DataError("reconstruction_error on an empty dataset");
  const Eigen::MatrixXd q = vde::encoder_posteriors(vde, data.t, data.eps);
  const Eigen::MatrixXd mean = vde::decoder_means(vde, data.eps);
  Eigen::Map<const Eigen::VectorXd> t(data.t.data(), static_cast<Eigen::Index>(data.size()));
  const Eigen::MatrixXd resid = (-mean).colwise() + t;
  return q.cwiseProduct(resid.cwiseProduct(resid)).sum() / static_cast<double>(data.size());
}

double kl_term(const vde::VdeModel& vde, const Dataset& data) {
  if (data.empty()) throw DataError("kl_term on an empty dataset");
  const Eigen::MatrixXd q = vde::encoder_posteriors(vde, data.t, data.eps);
  const Eigen::VectorXd r = nn::softmax_logprobs(vde.params.marginal_logits).array().exp();
  double total = 0.0;
  for (Eigen::Index i = 0; i < q.rows(); ++i) total += vde::kl_categorical(q.row(i).transpose(), r);
  return total / static_cast<double>(q.rows());
}

DiagnosticsReport diagnose(const vde::VdeModel& vde, const Dataset& data, std::size_t eps_bins,
                           std::size_t n_permutations, std::uint64_t seed) {
  DiagnosticsReport report;
  report.eps_bins = eps_bins;
  report.n_permutations = n_permutations;
  report.seed = seed;
  if (vde.structure() != vde::DecoderStructure::categorical) report.reconstruction_mse = reconstruction_error(vde, data);
  const auto test = independence_diagnostic(vde, data, eps_bins, n_permutations, seed);
  report.mi_estimate = test.mi_estimate;
  report.permutation_p_value = test.p_value;
  report.warnings = test.warnings;
  report.kl_term_value = kl_term(vde, data);
  return report;
}

nlohmann::json to_json(const DiagnosticsReport& r) {
  nlohmann::json j = {{"mi_estimate", r.mi_estimate},
                      {"permutation_p_value", r.permutation_p_value},
                      {"kl_term_value", r.kl_term_value},
                      {"eps_bins", r.eps_bins},
                      {"n_permutations", r.n_permutations},
                      {"seed", r.seed},
                      {"warnings", r.warnings}};
  j["reconstruction_mse"] = r.reconstruction_mse ? nlohmann::json(*r.reconstruction_mse) : nlohmann::json(nullptr);
  return j;
}

namespace {

std::vector<std::size_t> sorted_order(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  return order;
}

double checked_total(std::span<const double> x, std::span<const double> w, const char* name) {
  if (x.size() != w.size()) throw ConfigError(std::string("wasserstein1: ") + name + " values and weights differ");
  double s = 0.0;
  for (double wi : w) {
    if (!(wi >= 0.0) || !std::isfinite(wi)) throw DomainError("wasserstein1: weights must be finite and non-negative");
    s += wi;
  }
  if (!(s > 0.0)) throw DomainError(std::string("wasserstein1: ") + name + " has zero total weight");
  return s;
}

}  // namespace

double wasserstein1(std::span<const double> x, std::span<const double> wx, std::span<const double> y,
                    std::span<const double> wy) {
  const double sx = checked_total(x, wx, "x"), sy = checked_total(y, wy, "y");
  const auto ox = sorted_order(x), oy = sorted_order(y);
  double fx = 0.0, fy = 0.0, total = 0.0;
  std::size_t i = 0, j = 0;
  double current = std::min(x[ox[0]], y[oy[0]]);
  while (i < ox.size() || j < oy.size()) {
    while (i < ox.size() && x[ox[i]] == current) fx += wx[ox[i++]] / sx;
    while (j < oy.size() && y[oy[j]] == current) fy += wy[oy[j++]] / sy;
    if (i == ox.size() && j == oy.size()) break;
    const double next = std::min(i < ox.size() ? x[ox[i]] : INFINITY, j < oy.size() ? y[oy[j]] : INFINITY);
    total += std::abs(fx - fy) * (next - current);
    current = next;
  }
  return total;
}

double wasserstein1(std::span<const double> x, std::span<const double> y) {
  const std::vector<double> wx(x.size(), 1.0), wy(y.size(), 1.0);
  return wasserstein1(x, wx, y, wy);
}

BoundReport bound_check_additive(const vde::VdeModel& vde, const outcome::OutcomeModel& outcome,
                                 const Dataset& data, const EffectFn& truth, double lipschitz_L,
                                 double lipschitz_Lg, std::string note) {
  if (vde.structure() != vde::DecoderStructure::additive) {
    throw DomainError("bound_check_additive needs the additive decoder");
  }
  if (data.empty()) throw DataError("bound_check_additive on an empty dataset");
  if (!(lipschitz_L >= 0.0) || !(lipschitz_Lg >= 0.0)) throw ConfigError("Lipschitz constants must be non-negative");

  BoundReport rep;
  rep.lipschitz_L = lipschitz_L;
  rep.lipschitz_Lg = lipschitz_Lg;
  rep.note = std::move(note);
  rep.delta_hat = reconstruction_error(vde, data);

  const Eigen::MatrixXd q = vde::encoder_posteriors(vde, data.t, data.eps);
  const auto n = static_cast<double>(data.size());
  const Eigen::VectorXd qbar = q.colwise().sum().transpose() / n;
  const Eigen::VectorXd& table = vde.params.table;
  const double center = qbar.dot(table);
  const Eigen::VectorXd abs_c = (table.array() - center).abs().matrix();
  rep.zhat_centered_mean_abs = (q * abs_c).sum() / n;

  const double floor = 1.0 / (2.0 * static_cast<double>(vde.k()));
  const std::vector<double> ones(data.size(), 1.0);
  std::vector<double> wk(data.size());
  for (Eigen::Index k = 0; k < q.cols(); ++k) {
    if (!(qbar(k) > floor)) continue;
    for (std::size_t i = 0; i < data.size(); ++i) wk[i] = q(static_cast<Eigen::Index>(i), k);
    rep.gamma_hat = std::max(rep.gamma_hat, wasserstein1(data.eps, wk, data.eps, ones));
  }

  const Eigen::MatrixXd f = outcome::outcome_predict_all(outcome, data.t);
  const Eigen::VectorXd tau_hat = f * qbar;
  double lhs = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    lhs += std::abs(tau_hat(static_cast<Eigen::Index>(i)) - truth(data.t[i]));
  }
  rep.lhs = lhs / n;
  rep.rhs = lipschitz_L * std::sqrt(rep.delta_hat + 4.0 * rep.gamma_hat * lipschitz_Lg * rep.zhat_centered_mean_abs);
  rep.satisfied = rep.lhs <= rep.rhs;
  return rep;
}

nlohmann::json to_json(const BoundReport& r) {
  return {{"lhs", r.lhs},
          {"rhs", r.rhs},
          {"satisfied", r.satisfied},
          {"delta_hat", r.delta_hat},
          {"gamma_hat", r.gamma_hat},
          {"lipschitz_L", r.lipschitz_L},
          {"lipschitz_Lg", r.lipschitz_Lg},
          {"zhat_centered_mean_abs", r.zhat_centered_mean_abs},
          {"note", r.note}};
}

KappaSelection select_kappa(const Dataset& data, std::span<const double> kappa_grid,
                            const vde::VdeConfig& vde_template, const outcome::OutcomeConfig& outcome_config,
                            double holdout_fraction, std::uint64_t split_seed) {
  if (kappa_grid.empty()) throw ConfigError("select_kappa: empty kappa grid");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("select_kappa: holdout_fraction must lie in (0, 1)");
  }
  const Split split = split_dataset(data, holdout_fraction, split_seed);
  KappaSelection sel;
  for (double kappa : kappa_grid) {
    KappaEntry e;
    e.kappa = kappa;
    try {
      vde::VdeConfig cfg = vde_template;
      cfg.kappa = kappa;
      vde::VdeModel model = vde::train_vde(split.train, cfg);
      outcome::OutcomeModel out = outcome::fit_outcome(split.train, model, outcome_config);
      const Eigen::MatrixXd qh = vde::encoder_posteriors(model, split.heldout.t, split.heldout.eps);
      e.heldout_loglik = outcome::expected_loglik(out, split.heldout.t, split.heldout.y, qh);
      if (!std::isfinite(e.heldout_loglik)) throw TrainingError("non-finite held-out log-likelihood");
      e.success = true;
      e.vde = std::move(model);
      e.outcome = std::move(out);
    } catch (const Error& err) {
      e.success = false;
      e.message = std::string(err.kind()) + ": " + err.what();
    }
    sel.table.push_back(std::move(e));
  }
  bool found = false;
  for (std::size_t i = 0; i < sel.table.size(); ++i) {
    const auto& e = sel.table[i];
    if (!e.success) continue;
    const auto& cur = sel.table[sel.best_index];
    if (!found || e.heldout_loglik > cur.heldout_loglik ||
        (e.heldout_loglik == cur.heldout_loglik && e.kappa < cur.kappa)) {
      sel.best_index = i;
      found = true;
    }
  }
  if (!found) throw TrainingError("select_kappa: every kappa entry failed");
  sel.best_kappa = sel.table[sel.best_index].kappa;
  return sel;
}

std::string kappa_table_csv(const KappaSelection& selection) {
  std::string out = "kappa,status,heldout_loglik,message\n";
  for (const auto& e : selection.table) {
    std::string msg = e.message;
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    out += io::format_double(e.kappa) + (e.success ? ",success," : ",failure,") +
           (e.success ? io::format_double(e.heldout_loglik) : std::string()) + "," + msg + "\n";
  }
  return out;
}

}  // namespace gcfn::eval
