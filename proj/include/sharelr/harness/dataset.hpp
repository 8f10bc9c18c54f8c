#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sharelr/config.hpp"
#include "sharelr/regression.hpp"

namespace sharelr {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SynthesisOptions {
  std::uint64_t seed = 1;
  std::size_t sources = 14;  // m
  std::size_t rows = 1200;   // per party, target included
  std::size_t features = 30;
  double noise = 0.05;
  // Per-party deviation of the coefficients from the shared plant, so that
  // parties differ the way drivers do.
  double party_spread = 0.0;
  // Explicit plant (features + 1 values, intercept last). Default: intercept
  // 0.5 and coefficients of magnitude 0.5 / features with alternating signs,
  // which keeps noiseless responses inside [0, 1].
  std::optional<Eigen::VectorXd> plant;
};

struct SyntheticData {
  std::vector<PlainDataset> sources;
  PlainDataset target;    // held out: never used for training in TI-LR
  Eigen::VectorXd plant;  // intercept last
};

// Features uniform in [-1, 1]; responses plant . [x, 1] + Gaussian noise,
// clamped to [0, 1]. Deterministic in the options.
SyntheticData Synthesize(const SynthesisOptions& options);

// Per-column affine map of a declared or fitted range onto [-1, 1].
struct Scaling {
  std::vector<double> lo;
  std::vector<double> hi;

  static Scaling Identity(std::size_t features);  // [-1, 1] -> [-1, 1]
  static Scaling Fit(const Eigen::MatrixXd& x);
  // Values that land outside [-1, 1] are clamped when `clamp` is set and
  // rejected otherwise.
  Eigen::MatrixXd Apply(const Eigen::MatrixXd& x, bool clamp = true) const;

  KeyValueFile ToConfig() const;
  static Scaling FromConfig(const KeyValueFile& kv);
};

struct IngestOptions {
  std::size_t features = 0;  // 0: inferred from the first row
  bool has_response = true;
  std::optional<Scaling> scaling;  // none: fit on this file
  bool clamp = true;
  bool scale = true;  // false: values as read; the scaling is still reported
};

struct Ingested {
  PlainDataset data;
  Scaling scaling;
};

// Rows of `features` numbers followed by the response; a header line is
// detected and skipped. Errors name the offending line.
Ingested IngestCsv(const std::filesystem::path& path, const IngestOptions& options = {});

// Header x1..xk[,y]; values printed with 17 significant digits so that a
// round trip is exact.
void WriteCsv(const std::filesystem::path& path, const Eigen::MatrixXd& x, const Eigen::VectorXd* y);
void WriteDataset(const std::filesystem::path& path, const PlainDataset& data);

// Splits off the first `calibration_rows` rows.
std::pair<PlainDataset, PlainDataset> SplitRows(const PlainDataset& data, std::size_t calibration_rows);

}  // namespace sharelr
