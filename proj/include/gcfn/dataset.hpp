#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace gcfn {

// How a dataset was produced. Gaussian second arguments in the generators are
// variances; noise_convention records that.
struct DatasetMetadata {
  std::string scenario = "unknown";
  double alpha = 0.0;
  double rho = 1.0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double noise_variance = 0.1;
  std::string noise_convention = "variance";
  std::string normal_method = "marsaglia-polar/splitmix64";
};

void to_json(nlohmann::json& j, const DatasetMetadata& m);
void from_json(const nlohmann::json& j, DatasetMetadata& m);

// Columnar observations (t, eps, y, z, m). z is retained even where m = 0;
// estimators must only read z on rows with m = 1.
struct Dataset {
  std::vector<double> t;
  std::vector<double> eps;
  std::vector<double> y;
  std::vector<std::optional<double>> z;
  std::vector<std::uint8_t> m;
  DatasetMetadata metadata;

  std::size_t size() const { return t.size(); }
  bool empty() const { return t.empty(); }
  // Column lengths agree, values finite, m in {0,1}, m = 1 implies z present.
  void validate() const;
  // Rows at the given indices, in that order.
  Dataset subset(std::span<const std::size_t> rows) const;
  // z on supervised rows, or nullopt.
  std::optional<double> observed_z(std::size_t row) const {
    return m[row] ? z[row] : std::nullopt;
  }
};

// CSV with header `t,eps,y,z,m` (z may be empty); doubles written with 17
// significant digits. The metadata sidecar sits next to the CSV as
// `<stem>.meta.json`.
std::string to_csv(const Dataset& data);
Dataset from_csv(const std::string& text);
void save_csv(const Dataset& data, const std::filesystem::path& path);
Dataset load_csv(const std::filesystem::path& path);
std::filesystem::path metadata_path(const std::filesystem::path& csv_path);

// Deterministic train / held-out split.
struct Split {
  Dataset train;
  Dataset heldout;
};
Split split_dataset(const Dataset& data, double holdout_fraction, std::uint64_t seed);

}  // namespace gcfn
