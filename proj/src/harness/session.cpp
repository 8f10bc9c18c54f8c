#include "sharelr/harness/session.hpp"

#include <fstream>

#include <fmt/format.h>

namespace sharelr {

Workload SessionConfig::workload() const {
  return Workload{roster.scenario, sources(), columns, iterations, inferences};
}

SessionConfig SessionConfig::FromConfig(const KeyValueFile& kv) {
  SessionConfig c;
  c.roster = SessionRoster::FromConfig(kv);
  c.columns = static_cast<std::size_t>(kv.GetInt("columns", 0));
  c.iterations = static_cast<std::size_t>(kv.GetInt("iterations", 32));
  c.inferences = static_cast<std::size_t>(kv.GetInt("inferences", 0));
  c.trace_bound = kv.GetDouble("trace_bound", 0);
  c.intercept = kv.GetBool("intercept", true);
  c.seed = static_cast<std::uint64_t>(kv.GetInt("seed", 0));
  c.round_timeout = std::chrono::milliseconds(kv.GetInt("timeout_ms", 60000));
  c.startup_timeout = std::chrono::milliseconds(kv.GetInt("startup_timeout_ms", 600000));
  c.aggregator = static_cast<PartyId>(kv.GetInt("aggregator", 1));
  c.Validate();
  return c;
}

void SessionConfig::WriteTo(KeyValueFile& kv) const {
  roster.WriteTo(kv);
  kv.Set("columns", std::to_string(columns));
  kv.Set("iterations", std::to_string(iterations));
  kv.Set("inferences", std::to_string(inferences));
  kv.Set("trace_bound", fmt::format("{:.17g}", trace_bound));
  kv.Set("intercept", intercept ? "true" : "false");
  kv.Set("seed", std::to_string(seed));
  kv.Set("timeout_ms", std::to_string(round_timeout.count()));
  kv.Set("startup_timeout_ms", std::to_string(startup_timeout.count()));
  kv.Set("aggregator", std::to_string(aggregator));
}

SessionConfig SessionConfig::Load(const std::filesystem::path& path) {
  return FromConfig(KeyValueFile::Load(path.string()));
}

void SessionConfig::Save(const std::filesystem::path& path) const {
  KeyValueFile kv;
  WriteTo(kv);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << kv.ToText();
  if (!out) throw ConfigError(fmt::format("cannot write {}", path.string()));
}

void SessionConfig::Validate() const {
  roster.Validate();
  if (columns < 1) throw ConfigError("session needs columns >= 1");
  if (iterations < 1) throw ConfigError("session needs iterations >= 1");
  if (!(trace_bound > 0)) throw ConfigError("session needs a positive trace_bound");
  if (round_timeout.count() <= 0 || startup_timeout.count() <= 0) throw ConfigError("timeouts must be positive");
  if (roster.scenario == ScenarioKind::kTargetCalibrated && (aggregator < 1 || aggregator > sources())) {
    throw ConfigError(fmt::format("aggregator {} is not a source party", aggregator));
  }
}

Prng RoleRng(const SessionConfig& config, std::string_view label) {
  return config.seed == 0 ? Prng::Secure() : Prng::Seeded(config.seed, label);
}

}  // namespace sharelr
