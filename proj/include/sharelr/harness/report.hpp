#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sharelr/transport/transcript.hpp"

namespace sharelr {

struct MessageTally {
  std::uint64_t messages = 0;
  std::uint64_t bytes = 0;

  bool operator==(const MessageTally&) const = default;
};

struct MessageStats {
  MessageTally total;
  std::map<std::string, MessageTally> by_kind;   // payload kind
  std::map<std::string, MessageTally> by_round;  // "<protocol>/<round>"
};

// Tallies the sent entries of one or more role transcripts.
MessageStats TallyMessages(const std::vector<TranscriptEntry>& entries);

struct RunReport {
  std::string scenario;
  std::string mode;
  std::size_t m = 0;
  std::size_t features = 0;
  std::size_t rows = 0;  // per source party
  std::size_t test_rows = 0;
  double setup_seconds = 0;
  double train_clear_seconds = 0;
  double train_smc_seconds = 0;
  double infer_clear_seconds = 0;
  double infer_smc_seconds = 0;
  // Present iff the test set carries responses.
  std::optional<double> rmse_clear;
  std::optional<double> rmse_smc;
  double max_beta_diff = 0;        // SMC vs clear, infinity norm over all plans
  double max_prediction_diff = 0;  // SMC vs clear
  std::uint64_t online_rounds = 0;
  std::uint64_t ti_envelopes_after_setup = 0;
  std::optional<std::size_t> agent_peak_connections;
  MessageStats messages;

  nlohmann::json ToJson() const;
  static RunReport FromJson(const nlohmann::json& j);
  std::string Table() const;
};

// Aligned text table with one row per report, in the shape of the
// clear-vs-SMC result tables.
std::string SummaryTable(const std::vector<RunReport>& reports);

void AppendJsonl(const std::string& path, const RunReport& report);
std::vector<RunReport> ReadJsonl(const std::string& path);

// --- transcript audit ------------------------------------------------------------

struct TranscriptAudit {
  std::size_t dmm_instances = 0;
  std::size_t dmm_multi_round = 0;  // Dmm instances using more than round 0
  std::size_t matinv_instances = 0;
  std::size_t matinv_min_rounds = 0;
  std::size_t matinv_max_rounds = 0;
  std::size_t ti_after_setup = 0;  // TI envelopes outside setup instances
  std::size_t secret_hits = 0;     // sent payloads containing a secret pattern
};

// Per (session, sender, instance) the distinct rounds used in sent share
// messages. `secrets` are byte patterns that must never appear in a sent
// payload.
TranscriptAudit AuditTranscripts(const std::vector<TranscriptEntry>& entries, const std::vector<Bytes>& secrets);

// Order-independent message fingerprints: one line per sent envelope with
// its session, instance, round, endpoints, kind and payload digest.
std::vector<std::string> CanonicalMessages(const std::vector<TranscriptEntry>& entries);

}  // namespace sharelr
