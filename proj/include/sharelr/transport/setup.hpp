#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "sharelr/randomness.hpp"
#include "sharelr/transport/endpoint.hpp"

namespace sharelr {

// Session of the plan at `index` (see PlanRequirements): the roster session
// for TI-LR, a derived per-pair session for TC-LR.
SessionId SessionForPlan(const SessionId& root, ScenarioKind kind, std::size_t index);

// Setup instance carrying the bundles of the plan at `index`. Round 0 holds
// the bundle, round 1 the party's acknowledgment.
std::uint64_t SetupInstance(std::size_t index);

// Plan indices whose bundles `party` receives.
std::vector<std::size_t> PlansOfParty(ScenarioKind kind, std::size_t sources, PartyId party);

struct BundleDelivery {
  std::size_t plan_index = 0;
  PartyId party = 0;
  Bytes bytes;  // serialized CorrelatedBundle
};

struct DistributionReceipt {
  std::size_t bundles = 0;
  std::size_t bytes = 0;
  // (plan index, party) -> SHA-256 of the bundle bytes, as acknowledged.
  std::map<std::pair<std::size_t, PartyId>, std::array<std::uint8_t, 32>> checksums;
};

// Generates every plan's bundles for `workload`, plan by plan from one
// stream, in the order DistributeBundles sends them.
std::vector<BundleDelivery> GenerateDeliveries(const SessionId& root, const Workload& workload, const FieldPtr& field,
                                               int kappa, Prng& rng, std::vector<Requirements>* planned = nullptr);

// Trusted-initializer side: sends every bundle, then waits for each party to
// acknowledge it with the matching checksum. A missing or wrong ack
// broadcasts an Abort to the roster and throws ProtocolAbort.
// `ack_timeout` bounds the wait for all acknowledgments.
DistributionReceipt DistributeBundles(Endpoint& ti, const SessionId& root, std::vector<BundleDelivery> deliveries,
                                      std::optional<std::chrono::milliseconds> ack_timeout = {});

// Party side: receives the bundles of `plan_indices` from the TI, checks
// session, owner and group, acknowledges each one and optionally persists it
// under `persist_dir`. Returned in the order of `plan_indices`.
std::vector<CorrelatedBundle> ReceiveBundles(Endpoint& party, const SessionId& root, ScenarioKind kind,
                                             std::span<const std::size_t> plan_indices,
                                             const std::filesystem::path& persist_dir = {},
                                             std::optional<std::chrono::milliseconds> timeout = {});

std::filesystem::path BundlePath(const std::filesystem::path& dir, const SessionId& session, PartyId owner);
// Atomic: writes a temporary file and renames it into place.
void SaveBundle(const std::filesystem::path& path, const Bytes& bytes);
CorrelatedBundle LoadBundle(const std::filesystem::path& path);

}  // namespace sharelr
