#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sharelr/config.hpp"
#include "sharelr/field.hpp"
#include "sharelr/ids.hpp"
#include "sharelr/randomness.hpp"

namespace sharelr {

struct RosterParty {
  PartyId id = 0;
  std::string host = "127.0.0.1";
};

// Who takes part in a run and where the relay lives. Party ids are 1..N
// without gaps. For TC-LR the last party is the target.
struct SessionRoster {
  SessionId session{};
  ScenarioKind scenario = ScenarioKind::kTargetIndependent;
  int e = 64;
  int f = 64;
  int kappa = kDefaultKappa;
  std::string agent_host = "127.0.0.1";
  std::uint16_t agent_port = 0;
  std::vector<RosterParty> parties;
  bool has_ti = true;
  bool has_client = true;
  bool encrypt = true;

  std::vector<PartyId> party_ids() const;
  std::size_t sources() const;
  PartyId target() const;  // TC-LR only

  // Throws ConfigError on duplicate or non-contiguous ids, unknown fields,
  // or bad parameters.
  void Validate() const;

  // Keys: session, scenario, field.e, field.f, kappa, agent (host:port),
  // party (repeated "id host"), ti.enabled, client.enabled, encrypt. Without party lines the
  // roster falls back to `default_parties` parties on localhost.
  static SessionRoster FromConfig(const KeyValueFile& kv, std::size_t default_parties = 0);
  void WriteTo(KeyValueFile& kv) const;
};

}  // namespace sharelr
