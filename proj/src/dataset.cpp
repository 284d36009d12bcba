#include "gcfn/dataset.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "gcfn/error.hpp"
#include "gcfn/io.hpp"
#include "gcfn/rng.hpp"

namespace gcfn {

void to_json(nlohmann::json& j, const DatasetMetadata& m) {
  j = {{"scenario", m.scenario},
       {"alpha", m.alpha},
       {"rho", m.rho},
       {"n", m.n},
       {"seed", m.seed},
       {"noise_variance", m.noise_variance},
       {"noise_convention", m.noise_convention},
       {"normal_method", m.normal_method}};
}

void from_json(const nlohmann::json& j, DatasetMetadata& m) {
  io::reject_unknown_keys(j, {"scenario", "alpha", "rho", "n", "seed", "noise_variance",
                              "noise_convention", "normal_method"},
                          "dataset metadata");
  m = DatasetMetadata{};
  if (j.contains("scenario")) m.scenario = j["scenario"].get<std::string>();
  if (j.contains("alpha")) m.alpha = j["alpha"].get<double>();
  if (j.contains("rho")) m.rho = j["rho"].get<double>();
  if (j.contains("n")) m.n = j["n"].get<std::size_t>();
  if (j.contains("seed")) m.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("noise_variance")) m.noise_variance = j["noise_variance"].get<double>();
  if (j.contains("noise_convention")) m.noise_convention = j["noise_convention"].get<std::string>();
  if (j.contains("normal_method")) m.normal_method = j["normal_method"].get<std::string>();
}

void Dataset::validate() const {
  const std::size_t n = t.size();
  if (eps.size() != n || y.size() != n || z.size() != n || m.size() != n) {
    throw DataError("dataset columns have different lengths");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(t[i]) || !std::isfinite(eps[i]) || !std::isfinite(y[i]) ||
        (z[i] && !std::isfinite(*z[i]))) {
      throw DataError("row " + std::to_string(i) + " has a non-finite value");
    }
    if (m[i] > 1) throw DataError("row " + std::to_string(i) + ": mask must be 0 or 1");
    if (m[i] == 1 && !z[i]) throw DataError("row " + std::to_string(i) + ": m = 1 but z is missing");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.metadata = metadata;
  out.t.reserve(rows.size());
  out.eps.reserve(rows.size());
  out.y.reserve(rows.size());
  out.z.reserve(rows.size());
  out.m.reserve(rows.size());
  for (std::size_t r : rows) {
    out.t.push_back(t[r]);
    out.eps.push_back(eps[r]);
    out.y.push_back(y[r]);
    out.z.push_back(z[r]);
    out.m.push_back(m[r]);
  }
  out.metadata.n = rows.size();
  return out;
}

std::string to_csv(const Dataset& data) {
  std::string out = "t,eps,y,z,m\n";
  out.reserve(data.size() * 96);
  for (std::size_t i = 0; i < data.size(); ++i) {
    out += io::format_double(data.t[i]);
    out += ',';
    out += io::format_double(data.eps[i]);
    out += ',';
    out += io::format_double(data.y[i]);
    out += ',';
    if (data.z[i]) out += io::format_double(*data.z[i]);
    out += ',';
    out += data.m[i] ? '1' : '0';
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

double parse_number(std::string_view field, std::size_t line_no, std::string_view column) {
  double value = 0.0;
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
    throw ParseError("line " + std::to_string(line_no) + ": column '" + std::string(column) +
                     "': cannot parse '" + std::string(field) + "' as a finite number");
  }
  return value;
}

}  // namespace

Dataset from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("line 1: empty file, expected header");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_commas(line);
  int col_t = -1, col_eps = -1, col_y = -1, col_z = -1, col_m = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto h = header[c];
    int* slot = h == "t" ? &col_t : h == "eps" ? &col_eps : h == "y" ? &col_y : h == "z" ? &col_z
                : h == "m" ? &col_m : nullptr;
    if (!slot) throw ParseError("line 1: unknown column '" + std::string(h) + "'");
    if (*slot >= 0) throw ParseError("line 1: duplicate column '" + std::string(h) + "'");
    *slot = static_cast<int>(c);
  }
  for (auto [name, col] : {std::pair{"t", col_t}, std::pair{"eps", col_eps}, std::pair{"y", col_y}}) {
    if (col < 0) throw ParseError("line 1: missing required column '" + std::string(name) + "'");
  }

  Dataset data;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != header.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));
    }
    data.t.push_back(parse_number(fields[col_t], line_no, "t"));
    data.eps.push_back(parse_number(fields[col_eps], line_no, "eps"));
    data.y.push_back(parse_number(fields[col_y], line_no, "y"));
    std::optional<double> z;
    if (col_z >= 0 && !fields[col_z].empty()) z = parse_number(fields[col_z], line_no, "z");
    data.z.push_back(z);
    std::uint8_t m = z ? 1 : 0;
    if (col_m >= 0) {
      const auto f = fields[col_m];
      if (f == "1") {
        m = 1;
      } else if (f == "0") {
        m = 0;
      } else {
        throw ParseError("line " + std::to_string(line_no) + ": column 'm' must be 0 or 1");
      }
    }
    if (m == 1 && !z) {
      throw ParseError("line " + std::to_string(line_no) + ": m = 1 requires a value in column 'z'");
    }
    data.m.push_back(m);
  }
  data.metadata.n = data.size();
  return data;
}

std::filesystem::path metadata_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension();
  p += ".meta.json";
  return p;
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  data.validate();
  io::write_file_atomic(path, to_csv(data));
  io::write_file_atomic(metadata_path(path), nlohmann::json(data.metadata).dump(2) + "\n");
}

Dataset load_csv(const std::filesystem::path& path) {
  Dataset data = from_csv(io::read_file(path));
  const auto meta = metadata_path(path);
  if (std::filesystem::exists(meta)) {
    try {
      data.metadata = nlohmann::json::parse(io::read_file(meta)).get<DatasetMetadata>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(meta.string() + ": " + e.what());
    }
    data.metadata.n = data.size();
  }
  return data;
}

Split split_dataset(const Dataset& data, double holdout_fraction, std::uint64_t seed) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("holdout fraction must be in (0, 1)");
  }
  SplitMix64 rng(seed);
  const auto order = permutation(data.size(), rng);
  const auto n_hold = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(data.size())));
  if (n_hold == 0 || n_hold >= data.size()) throw DataError("dataset too small to split");
  std::span<const std::size_t> all(order);
  return {data.subset(all.subspan(n_hold)), data.subset(all.first(n_hold))};
}

}  // namespace gcfn
