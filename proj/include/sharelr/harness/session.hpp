#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>

#include "sharelr/config.hpp"
#include "sharelr/randomness.hpp"
#include "sharelr/transport/roster.hpp"

namespace sharelr {

// What every role of one run agrees on out of band: the roster plus the
// public workload parameters the TI plans material for.
struct SessionConfig {
  SessionRoster roster;
  std::size_t columns = 0;  // k, intercept included
  std::size_t iterations = 32;
  std::size_t inferences = 0;
  double trace_bound = 0;
  bool intercept = true;
  std::uint64_t seed = 0;  // 0: OS randomness everywhere
  std::chrono::milliseconds round_timeout{60000};
  // Bound on waits that span other roles' start-up: bundle receipt, the
  // TI's acknowledgments, the first query and the first answer.
  std::chrono::milliseconds startup_timeout{600000};
  PartyId aggregator = 1;

  FieldPtr field() const { return MakeParams(roster.e, roster.f); }
  Workload workload() const;
  std::size_t sources() const { return roster.sources(); }

  // Adds keys columns, iterations, inferences, trace_bound, intercept, seed,
  // timeout_ms, startup_timeout_ms and aggregator to the roster keys.
  static SessionConfig FromConfig(const KeyValueFile& kv);
  void WriteTo(KeyValueFile& kv) const;
  static SessionConfig Load(const std::filesystem::path& path);
  void Save(const std::filesystem::path& path) const;
  void Validate() const;
};

// Randomness of a role, reproducible when the session is seeded.
Prng RoleRng(const SessionConfig& config, std::string_view label);

}  // namespace sharelr
