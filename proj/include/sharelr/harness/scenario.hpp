#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "sharelr/config.hpp"
#include "sharelr/harness/dataset.hpp"
#include "sharelr/harness/report.hpp"
#include "sharelr/harness/session.hpp"

namespace sharelr {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LaunchMode { kLocalSpawn, kInProcess };

LaunchMode ParseLaunchMode(std::string_view name);  // "local-spawn" | "in-process"
std::string_view LaunchModeName(LaunchMode mode);

struct ScenarioConfig {
  ScenarioKind scenario = ScenarioKind::kTargetIndependent;
  std::size_t m = 2;
  std::size_t features = 10;           // k, without the intercept
  std::size_t rows = 200;              // per party, target included
  std::size_t calibration_rows = 100;  // TC-LR: leading target rows used for training
  int e = 64;
  int f = 64;
  int kappa = kDefaultKappa;
  std::size_t iterations = 32;
  double trace_bound = 0;  // 0: derived from the row counts
  bool intercept = true;
  std::uint64_t data_seed = 1;
  std::uint64_t protocol_seed = 0;  // 0: OS randomness in every role
  double noise = 0.05;
  double party_spread = 0.0;
  // Instead of synthesizing: party-<i>.csv for the sources, test.csv and
  // (TC-LR) calibration.csv. test.csv holds responses iff test_labeled.
  std::filesystem::path data_dir;
  bool test_labeled = true;
  LaunchMode mode = LaunchMode::kLocalSpawn;
  // Explicit roster (repeated `party = id [host]`); default: ids 1..n on
  // localhost, n = m (TI-LR) or m + 1 (TC-LR).
  std::vector<RosterParty> parties;
  std::string agent_host = "127.0.0.1";
  std::uint16_t agent_port = 0;  // 0: any free port
  bool encrypt = true;
  std::chrono::milliseconds round_timeout{60000};
  std::chrono::milliseconds startup_timeout{600000};
  std::filesystem::path work_dir = "sharelr-run";
  std::filesystem::path cli_path;  // the sharelr binary, for local-spawn
  std::filesystem::path report_path;  // JSONL records are appended here when set

  std::size_t columns() const { return features + (intercept ? 1 : 0); }

  // Keys: scenario, m, features, rows, calibration_rows, field.e, field.f,
  // kappa, iterations, trace_bound, intercept, data_seed, protocol_seed,
  // noise, party_spread, data_dir, test_labeled, mode, agent_host,
  // agent_port, party, encrypt, timeout_ms, startup_timeout_ms, work_dir, cli,
  // report. Keys absent from `kv` keep the values of `base`.
  static ScenarioConfig FromConfig(const KeyValueFile& kv, ScenarioConfig base);
  static ScenarioConfig FromConfig(const KeyValueFile& kv) { return FromConfig(kv, ScenarioConfig()); }
  void WriteTo(KeyValueFile& kv) const;
  void Validate() const;
  // The roster every role of a run shares.
  SessionConfig MakeSession(double trace_bound, std::size_t inferences, std::uint16_t agent_port) const;
};

// Training and test data of one scenario.
struct ScenarioData {
  std::vector<PlainDataset> sources;
  PlainDataset calibration;  // TC-LR only
  PlainDataset test;         // responses are meaningful iff labeled
  bool labeled = true;

  std::size_t total_training_rows() const;
};

ScenarioData LoadScenarioData(const ScenarioConfig& config);

// Public trace bound agreed by every session of the run.
double ScenarioTraceBound(const ScenarioConfig& config, const ScenarioData& data);

// Plaintext counterpart of a run: one model (TI-LR) or m pairwise models
// whose predictions are averaged (TC-LR).
struct ClearResult {
  std::vector<Eigen::VectorXd> betas;
  Eigen::VectorXd predictions;
  double train_seconds = 0;
  double infer_seconds = 0;
};

ClearResult RunClear(const ScenarioConfig& config, const ScenarioData& data);

// Everything a run leaves behind, for reports and audits.
struct ScenarioOutcome {
  RunReport report;
  ClearResult clear;
  std::vector<Eigen::VectorXd> smc_betas;  // reconstructed from every share
  Eigen::VectorXd smc_predictions;
  std::vector<TranscriptEntry> transcript;  // all roles
  std::vector<PartyModel> models;           // index = party id - 1
  SessionConfig session;
  ScenarioData data;
};

// Offline phase, training and inference over the full test set, plus the
// plaintext path. Throws on any protocol abort, naming the failing role.
ScenarioOutcome RunScenario(const ScenarioConfig& config);

// Byte patterns of every party's encoded rows, local moments and model
// shares, for the transcript audit.
std::vector<Bytes> SecretPatterns(const ScenarioConfig& config, const ScenarioData& data,
                                  const std::vector<PartyModel>& models);

// Path of the running executable.
std::filesystem::path SelfExecutable();

}  // namespace sharelr
