#include "sharelr/transport/roster.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace sharelr {

std::vector<PartyId> SessionRoster::party_ids() const {
  std::vector<PartyId> ids;
  for (const auto& p : parties) ids.push_back(p.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::size_t SessionRoster::sources() const {
  return scenario == ScenarioKind::kTargetCalibrated ? parties.size() - 1 : parties.size();
}

PartyId SessionRoster::target() const {
  if (scenario != ScenarioKind::kTargetCalibrated) throw ConfigError("only TC-LR rosters have a target");
  return static_cast<PartyId>(parties.size());
}

void SessionRoster::Validate() const {
  if (e < 1 || f < 1) throw ConfigError("field.e and field.f must be at least 1");
  if (kappa < 0) throw ConfigError("kappa must be non-negative");
  std::set<PartyId> seen;
  for (const auto& p : parties) {
    if (!seen.insert(p.id).second) throw ConfigError(fmt::format("duplicate party id {} in roster", p.id));
    if (IsReservedId(p.id)) throw ConfigError(fmt::format("party id {} is reserved", p.id));
  }
  for (std::size_t i = 1; i <= parties.size(); ++i) {
    if (!seen.count(static_cast<PartyId>(i))) {
      throw ConfigError(fmt::format("roster party ids must be 1..{} without gaps; {} is missing", parties.size(), i));
    }
  }
  std::size_t min_parties = scenario == ScenarioKind::kTargetCalibrated ? 2 : 1;
  if (parties.size() < min_parties) throw ConfigError("roster has too few parties for its scenario");
}

SessionRoster SessionRoster::FromConfig(const KeyValueFile& kv, std::size_t default_parties) {
  SessionRoster r;
  if (auto s = kv.Get("session")) r.session = SessionFromHex(*s);
  if (auto s = kv.Get("scenario")) r.scenario = ParseScenarioKind(*s);
  r.e = static_cast<int>(kv.GetInt("field.e", 64));
  r.f = static_cast<int>(kv.GetInt("field.f", 64));
  r.kappa = static_cast<int>(kv.GetInt("kappa", kDefaultKappa));
  r.encrypt = kv.GetBool("encrypt", true);
  r.has_ti = kv.GetBool("ti.enabled", true);
  r.has_client = kv.GetBool("client.enabled", true);
  if (auto a = kv.Get("agent")) {
    auto colon = a->rfind(':');
    if (colon == std::string::npos) throw ConfigError(fmt::format("agent must be host:port, got '{}'", *a));
    r.agent_host = a->substr(0, colon);
    int port = 0;
    try {
      port = std::stoi(a->substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("agent port in '{}' is not a number", *a));
    }
    if (port < 0 || port > 65535) throw ConfigError(fmt::format("agent port {} out of range", port));
    r.agent_port = static_cast<std::uint16_t>(port);
  }
  for (const auto& line : kv.GetAll("party")) {
    std::istringstream in(line);
    long id = 0;
    RosterParty p;
    if (!(in >> id)) throw ConfigError(fmt::format("party line '{}' must start with an id", line));
    if (id < 1 || id > 0xFFFF) throw ConfigError(fmt::format("party id {} out of range", id));
    p.id = static_cast<PartyId>(id);
    std::string host;
    if (in >> host) p.host = host;
    r.parties.push_back(p);
  }
  if (r.parties.empty()) {
    for (std::size_t i = 1; i <= default_parties; ++i) r.parties.push_back({static_cast<PartyId>(i), "127.0.0.1"});
  }
  r.Validate();
  return r;
}

void SessionRoster::WriteTo(KeyValueFile& kv) const {
  kv.Set("session", SessionToHex(session));
  kv.Set("scenario", std::string(ScenarioName(scenario)));
  kv.Set("field.e", std::to_string(e));
  kv.Set("field.f", std::to_string(f));
  kv.Set("kappa", std::to_string(kappa));
  kv.Set("agent", fmt::format("{}:{}", agent_host, agent_port));
  kv.Set("encrypt", encrypt ? "true" : "false");
  kv.Set("ti.enabled", has_ti ? "true" : "false");
  kv.Set("client.enabled", has_client ? "true" : "false");
  kv.Remove("party");
  for (const auto& p : parties) kv.Append("party", fmt::format("{} {}", p.id, p.host));
}

}  // namespace sharelr
