#include "sharelr/harness/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace sharelr {

SyntheticData Synthesize(const SynthesisOptions& o) {
  if (o.features < 1) throw DataError("synthesis needs at least one feature");
  if (o.rows < o.features + 1) throw DataError(fmt::format("need at least {} rows per party", o.features + 1));
  if (o.sources < 1) throw DataError("synthesis needs at least one source party");
  const auto k = static_cast<Eigen::Index>(o.features);

  SyntheticData out;
  if (o.plant) {
    if (o.plant->size() != k + 1) throw DataError("plant must have features + 1 values");
    out.plant = *o.plant;
  } else {
    out.plant.resize(k + 1);
    for (Eigen::Index j = 0; j < k; ++j) out.plant(j) = (j % 2 == 0 ? 0.5 : -0.5) / static_cast<double>(k);
    out.plant(k) = 0.5;
  }

  auto root = Prng::Seeded(o.seed, "synthesize");
  auto make = [&](std::size_t index) {
    auto rng = root.Derive(fmt::format("party-{}", index));
    Eigen::VectorXd w = out.plant;
    if (o.party_spread > 0) {
      for (Eigen::Index j = 0; j < k; ++j) w(j) += o.party_spread * rng.Gaussian() / static_cast<double>(k);
    }
    PlainDataset d{Eigen::MatrixXd(o.rows, k), Eigen::VectorXd(o.rows)};
    for (std::size_t r = 0; r < o.rows; ++r) {
      for (Eigen::Index j = 0; j < k; ++j) d.x(r, j) = rng.UniformReal(-1, 1);
      double y = d.x.row(r).dot(w.head(k)) + w(k);
      if (o.noise > 0) y += o.noise * rng.Gaussian();
      d.y(r) = std::clamp(y, 0.0, 1.0);
    }
    return d;
  };
  for (std::size_t i = 1; i <= o.sources; ++i) out.sources.push_back(make(i));
  out.target = make(o.sources + 1);
  return out;
}

// --- scaling -----------------------------------------------------------------

Scaling Scaling::Identity(std::size_t features) {
  return {std::vector<double>(features, -1.0), std::vector<double>(features, 1.0)};
}

Scaling Scaling::Fit(const Eigen::MatrixXd& x) {
  if (x.rows() == 0) throw DataError("cannot fit scaling on zero rows");
  Scaling s;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    s.lo.push_back(x.col(c).minCoeff());
    s.hi.push_back(x.col(c).maxCoeff());
  }
  return s;
}

Eigen::MatrixXd Scaling::Apply(const Eigen::MatrixXd& x, bool clamp) const {
  if (static_cast<std::size_t>(x.cols()) != lo.size()) {
    throw DataError(fmt::format("scaling covers {} columns, data has {}", lo.size(), x.cols()));
  }
  constexpr double kSlack = 1e-12;
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    double span = hi[c] - lo[c];
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      double v = x(r, c);
      if (lo[c] != -1.0 || hi[c] != 1.0) v = span > 0 ? 2 * (v - lo[c]) / span - 1 : 0.0;
      if (v < -1 - kSlack || v > 1 + kSlack) {
        if (!clamp) {
          throw DataError(fmt::format("row {} column {}: {} scales to {} outside [-1, 1]", r + 1, c + 1, x(r, c), v));
        }
      }
      out(r, c) = std::clamp(v, -1.0, 1.0);
    }
  }
  return out;
}

KeyValueFile Scaling::ToConfig() const {
  KeyValueFile kv;
  kv.Set("features", std::to_string(lo.size()));
  for (std::size_t c = 0; c < lo.size(); ++c) kv.Append("range", fmt::format("{:.17g} {:.17g}", lo[c], hi[c]));
  return kv;
}

Scaling Scaling::FromConfig(const KeyValueFile& kv) {
  Scaling s;
  for (const auto& line : kv.GetAll("range")) {
    std::istringstream in(line);
    double a = 0, b = 0;
    if (!(in >> a >> b) || !(a <= b)) throw ConfigError(fmt::format("bad range '{}'", line));
    s.lo.push_back(a);
    s.hi.push_back(b);
  }
  if (static_cast<long long>(s.lo.size()) != kv.GetInt("features", static_cast<long long>(s.lo.size()))) {
    throw ConfigError("scaling file lists a different number of ranges than features");
  }
  return s;
}

// --- CSV -----------------------------------------------------------------------

namespace {

std::vector<std::string_view> SplitCells(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    std::string_view cell = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!cell.empty() && std::isspace(static_cast<unsigned char>(cell.front()))) cell.remove_prefix(1);
    while (!cell.empty() && std::isspace(static_cast<unsigned char>(cell.back()))) cell.remove_suffix(1);
    cells.push_back(cell);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::optional<double> ParseNumber(std::string_view cell) {
  if (cell.empty()) return std::nullopt;
  double v = 0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

Ingested IngestCsv(const std::filesystem::path& path, const IngestOptions& o) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  std::string line;
  std::size_t line_no = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto cells = SplitCells(line);
    std::vector<double> values;
    bool numeric = true;
    for (auto c : cells) {
      auto v = ParseNumber(c);
      if (!v) {
        numeric = false;
        break;
      }
      values.push_back(*v);
    }
    if (!numeric) {
      if (first_content) {  // header
        first_content = false;
        continue;
      }
      throw DataError(fmt::format("{}:{}: non-numeric cell", path.string(), line_no));
    }
    first_content = false;
    if (width == 0) {
      width = values.size();
      std::size_t want = o.features + (o.has_response ? 1 : 0);
      if (o.features > 0 && width != want) {
        throw DataError(fmt::format("{}:{}: expected {} cells, found {}", path.string(), line_no, want, width));
      }
      if (o.has_response && width < 2) {
        throw DataError(fmt::format("{}:{}: need at least one feature and a response", path.string(), line_no));
      }
    } else if (values.size() != width) {
      throw DataError(fmt::format("{}:{}: ragged row with {} cells, expected {}", path.string(), line_no,
                                  values.size(), width));
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw DataError(fmt::format("{} contains no data rows", path.string()));
  const std::size_t k = o.has_response ? width - 1 : width;
  Eigen::MatrixXd x(rows.size(), k);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < k; ++c) x(r, c) = rows[r][c];
    if (o.has_response) y(r) = rows[r][k];
  }
  Ingested out;
  out.scaling = o.scaling ? *o.scaling : Scaling::Fit(x);
  out.data = {o.scale ? out.scaling.Apply(x, o.clamp) : x, y};
  return out;
}

void WriteCsv(const std::filesystem::path& path, const Eigen::MatrixXd& x, const Eigen::VectorXd* y) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  for (Eigen::Index c = 0; c < x.cols(); ++c) out << (c ? "," : "") << "x" << c + 1;
  if (y) out << ",y";
  out << "\n";
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    std::string row;
    for (Eigen::Index c = 0; c < x.cols(); ++c) row += fmt::format("{}{:.17g}", c ? "," : "", x(r, c));
    if (y) row += fmt::format(",{:.17g}", (*y)(r));
    out << row << "\n";
  }
  if (!out) throw DataError(fmt::format("short write to {}", path.string()));
}

void WriteDataset(const std::filesystem::path& path, const PlainDataset& data) { WriteCsv(path, data.x, &data.y); }

std::pair<PlainDataset, PlainDataset> SplitRows(const PlainDataset& data, std::size_t calibration_rows) {
  if (calibration_rows < 1 || calibration_rows >= data.rows()) {
    throw DataError(fmt::format("cannot split {} rows with {} calibration rows", data.rows(), calibration_rows));
  }
  auto n = static_cast<Eigen::Index>(calibration_rows);
  auto rest = static_cast<Eigen::Index>(data.rows()) - n;
  return {PlainDataset{data.x.topRows(n), data.y.head(n)}, PlainDataset{data.x.bottomRows(rest), data.y.tail(rest)}};
}

}  // namespace sharelr
