#include "sharelr/transport/setup.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "sharelr/protocols.hpp"

namespace sharelr {

SessionId SessionForPlan(const SessionId& root, ScenarioKind kind, std::size_t index) {
  if (kind == ScenarioKind::kTargetIndependent) return root;
  return DeriveSession(root, fmt::format("tc-pair-{}", index));
}

std::uint64_t SetupInstance(std::size_t index) { return MakeInstanceId(ProtocolKind::kSetup, index + 1); }

std::vector<std::size_t> PlansOfParty(ScenarioKind kind, std::size_t sources, PartyId party) {
  if (kind == ScenarioKind::kTargetIndependent) {
    if (party < 1 || party > sources) throw std::invalid_argument(fmt::format("party {} not in 1..{}", party, sources));
    return {0};
  }
  if (party >= 1 && party <= sources) return {party};
  if (party == sources + 1) {
    std::vector<std::size_t> all;
    for (std::size_t i = 1; i <= sources; ++i) all.push_back(i);
    return all;
  }
  throw std::invalid_argument(fmt::format("party {} not in 1..{}", party, sources + 1));
}

namespace {

void AbortAll(Endpoint& ti, const SessionId& root, std::uint64_t instance, const std::string& reason) {
  Bytes payload(reason.begin(), reason.end());
  try {
    ti.Send(root, instance, 0, kBroadcast, PayloadKind::kAbort, payload);
  } catch (const std::exception& e) {
    spdlog::warn("trusted initializer could not broadcast abort: {}", e.what());
  }
}

}  // namespace

std::vector<BundleDelivery> GenerateDeliveries(const SessionId& root, const Workload& workload, const FieldPtr& field,
                                               int kappa, Prng& rng, std::vector<Requirements>* planned) {
  std::vector<BundleDelivery> out;
  for (const auto& plan : PlanRequirements(workload)) {
    if (planned) planned->push_back(plan.requirements);
    SessionId session = SessionForPlan(root, workload.kind, plan.index);
    auto bytes = GenerateSerializedBundles(plan.requirements, plan.group, session, field, kappa, rng);
    for (std::size_t j = 0; j < plan.group.size(); ++j) out.push_back({plan.index, plan.group[j], std::move(bytes[j])});
  }
  return out;
}

DistributionReceipt DistributeBundles(Endpoint& ti, const SessionId& root, std::vector<BundleDelivery> deliveries,
                                      std::optional<std::chrono::milliseconds> ack_timeout) {
  DistributionReceipt receipt;
  std::map<std::size_t, std::map<PartyId, std::array<std::uint8_t, 32>>> expected;
  for (auto& d : deliveries) {
    auto digest = Sha256(d.bytes);
    if (!expected[d.plan_index].emplace(d.party, digest).second) {
      throw std::invalid_argument(fmt::format("two bundles for party {} in plan {}", d.party, d.plan_index));
    }
    receipt.bytes += d.bytes.size();
    ++receipt.bundles;
    ti.Send(root, SetupInstance(d.plan_index), 0, d.party, PayloadKind::kBundle, std::move(d.bytes));
  }
  for (const auto& [index, parties] : expected) {
    std::vector<PartyId> senders;
    for (const auto& [p, digest] : parties) senders.push_back(p);
    std::uint64_t instance = SetupInstance(index);
    std::map<PartyId, Envelope> acks;
    try {
      acks = ti.RecvRound(root, instance, 1, senders, ack_timeout);
    } catch (const ProtocolAbort& e) {
      AbortAll(ti, root, instance, fmt::format("bundle distribution incomplete: {}", e.what()));
      throw;
    }
    for (const auto& [p, env] : acks) {
      const auto& want = parties.at(p);
      bool ok = env.kind == PayloadKind::kBundleAck && env.payload.size() == want.size() &&
                std::equal(want.begin(), want.end(), env.payload.begin());
      if (!ok) {
        std::string reason = fmt::format("party {} acknowledged plan {} with a wrong checksum", p, index);
        AbortAll(ti, root, instance, reason);
        throw ProtocolAbort(reason, instance, 1, {p});
      }
      receipt.checksums[{index, p}] = want;
    }
  }
  return receipt;
}

std::vector<CorrelatedBundle> ReceiveBundles(Endpoint& party, const SessionId& root, ScenarioKind kind,
                                             std::span<const std::size_t> plan_indices,
                                             const std::filesystem::path& persist_dir,
                                             std::optional<std::chrono::milliseconds> timeout) {
  std::vector<CorrelatedBundle> out;
  for (std::size_t index : plan_indices) {
    std::uint64_t instance = SetupInstance(index);
    Envelope env = party.RecvFrom(root, instance, 0, kTiId, timeout);
    if (env.kind != PayloadKind::kBundle) {
      throw ProtocolAbort(fmt::format("expected a bundle from the trusted initializer, got {}",
                                      PayloadKindName(env.kind)),
                          instance, 0);
    }
    CorrelatedBundle bundle = CorrelatedBundle::Deserialize(env.payload);
    SessionId want = SessionForPlan(root, kind, index);
    if (bundle.session() != want || bundle.owner() != party.self() ||
        std::find(bundle.group().begin(), bundle.group().end(), party.self()) == bundle.group().end()) {
      throw ProtocolAbort(fmt::format("party {}: bundle for plan {} does not belong to this party and session",
                                      party.self(), index),
                          instance, 0);
    }
    if (!persist_dir.empty()) SaveBundle(BundlePath(persist_dir, want, party.self()), env.payload);
    auto digest = Sha256(env.payload);
    party.Send(root, instance, 1, kTiId, PayloadKind::kBundleAck, Bytes(digest.begin(), digest.end()));
    out.push_back(std::move(bundle));
  }
  return out;
}

std::filesystem::path BundlePath(const std::filesystem::path& dir, const SessionId& session, PartyId owner) {
  return dir / fmt::format("bundle-{}-p{}.bin", SessionToHex(session), owner);
}

void SaveBundle(const std::filesystem::path& path, const Bytes& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", tmp.string()));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error(fmt::format("short write to {}", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

CorrelatedBundle LoadBundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open bundle {}", path.string()));
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return CorrelatedBundle::Deserialize(bytes);
}

}  // namespace sharelr
