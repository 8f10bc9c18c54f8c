#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sharelr/harness/dataset.hpp"
#include "sharelr/harness/session.hpp"

namespace sharelr {

// Entry points of the separate processes of a deployment. Every role reads
// the same SessionConfig and talks only through the broadcast agent.

struct AgentServeOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  std::filesystem::path port_file;   // receives the bound port when set
  std::filesystem::path stats_file;  // AgentStats as JSON on exit
  std::vector<PartyId> parties;
};

// Blocks until a controller asks the agent to shut down.
void ServeAgent(const AgentServeOptions& options);
void RequestAgentShutdown(const std::string& host, std::uint16_t port);

// Waits for `path` to hold a port number written by ServeAgent.
std::uint16_t AwaitPortFile(const std::filesystem::path& path, std::chrono::milliseconds timeout);

struct TiRunOptions {
  std::filesystem::path bundle_dir;  // writes every bundle here when set
  std::filesystem::path out_dir;     // transcript and stats when set
  bool distribute = true;
};

nlohmann::json RunTrustedInitializer(const SessionConfig& config, const TiRunOptions& options);

struct PartyRunOptions {
  PartyId id = 0;
  std::filesystem::path data;     // training rows (TC target: calibration rows)
  std::filesystem::path queries;  // TC target only: rows to predict
  std::filesystem::path out_dir;  // bundles, model, transcript, stats, predictions
  std::optional<Scaling> scaling;  // default: features already in [-1, 1]
};

// Receives (or reloads) its bundles, trains, saves its model share and
// serves inference until the client or target finishes. Returns the stats
// it also writes to out_dir.
nlohmann::json RunParty(const SessionConfig& config, const PartyRunOptions& options);

struct ClientRunOptions {
  std::filesystem::path queries;
  std::filesystem::path out_dir;
  std::optional<Scaling> scaling;
};

nlohmann::json RunClient(const SessionConfig& config, const ClientRunOptions& options);

// File names inside a role's out_dir.
std::filesystem::path ModelPath(const std::filesystem::path& out_dir, PartyId id);
std::filesystem::path TranscriptPath(const std::filesystem::path& out_dir, PartyId id);
std::filesystem::path StatsPath(const std::filesystem::path& out_dir, PartyId id);
std::filesystem::path PredictionsPath(const std::filesystem::path& out_dir);

void WriteJson(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json ReadJson(const std::filesystem::path& path);
void WritePredictions(const std::filesystem::path& path, const Eigen::VectorXd& predictions);
Eigen::VectorXd ReadPredictions(const std::filesystem::path& path);

}  // namespace sharelr
