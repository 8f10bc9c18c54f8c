#include <atomic>
#include <chrono>
#include <filesystem>
#include <thread>

#include <gtest/gtest.h>

#include "sharelr/config.hpp"
#include "sharelr/protocols.hpp"
#include "sharelr/transport/roster.hpp"
#include "sharelr/transport/setup.hpp"
#include "sharelr/transport/tcp.hpp"
#include "protocol_fixture.hpp"

namespace sharelr {
namespace {

using namespace std::chrono_literals;
using testing::FixtureSession;
using testing::Parties;

Envelope Sample(std::uint64_t instance, std::uint32_t round, PartyId sender, PartyId recipient, Bytes payload = {}) {
  return Envelope{FixtureSession(), instance, round, sender, recipient, PayloadKind::kShares, std::move(payload)};
}

bool WaitUntil(const std::function<bool()>& pred, std::chrono::milliseconds limit = 5s) {
  auto end = std::chrono::steady_clock::now() + limit;
  while (std::chrono::steady_clock::now() < end) {
    if (pred()) return true;
    std::this_thread::sleep_for(5ms);
  }
  return pred();
}

// --- envelope codec --------------------------------------------------------

TEST(Envelope, BitExactLayout) {
  Envelope e;
  for (int i = 0; i < 16; ++i) e.session[i] = static_cast<std::uint8_t>(i);
  e.instance = 0x0102030405060708ULL;
  e.round = 0x0A0B0C0D;
  e.sender = 0x1122;
  e.recipient = 0xFFFF;
  e.kind = PayloadKind::kShares;
  e.payload = {0xAA, 0xBB, 0xCC};
  Bytes wire = EncodeEnvelope(e);
  Bytes want;
  for (int i = 0; i < 16; ++i) want.push_back(static_cast<std::uint8_t>(i));
  for (std::uint8_t b : {1, 2, 3, 4, 5, 6, 7, 8}) want.push_back(b);
  for (std::uint8_t b : {0x0A, 0x0B, 0x0C, 0x0D}) want.push_back(b);
  for (std::uint8_t b : {0x11, 0x22, 0xFF, 0xFF}) want.push_back(b);
  want.push_back(static_cast<std::uint8_t>(PayloadKind::kShares));
  for (std::uint8_t b : {0, 0, 0, 3, 0xAA, 0xBB, 0xCC}) want.push_back(b);
  EXPECT_EQ(wire, want);
  EXPECT_EQ(wire.size(), kEnvelopeHeaderBytes + 3);
}

TEST(Envelope, RandomizedRoundTrip) {
  auto rng = Prng::Seeded(7, "envelope");
  for (int trial = 0; trial < 200; ++trial) {
    Envelope e;
    rng.Fill(e.session);
    e.instance = rng.NextU64();
    e.round = static_cast<std::uint32_t>(rng.NextU64());
    e.sender = static_cast<PartyId>(rng.NextU64());
    e.recipient = static_cast<PartyId>(rng.NextU64());
    e.kind = static_cast<PayloadKind>(1 + rng.NextU64() % 13);
    e.payload.resize(rng.NextU64() % 2000);
    rng.Fill(e.payload);
    EXPECT_EQ(DecodeEnvelope(EncodeEnvelope(e)), e);
  }
}

TEST(Envelope, MaximalPayloadRoundTrip) {
  Envelope e = Sample(1, 2, 3, 4);
  e.payload.assign(kMaxPayloadBytes, 0x5A);
  e.payload.front() = 1;
  e.payload.back() = 2;
  Bytes wire = EncodeEnvelope(e);
  EXPECT_EQ(wire.size(), kEnvelopeHeaderBytes + kMaxPayloadBytes);
  EXPECT_EQ(DecodeEnvelope(wire), e);
  e.payload.push_back(0);
  EXPECT_THROW(EncodeEnvelope(e), DecodeError);
}

TEST(Envelope, MalformedFramesRejected) {
  Bytes wire = EncodeEnvelope(Sample(1, 0, 1, 2, {1, 2, 3}));
  Bytes shorter(wire.begin(), wire.end() - 1);
  EXPECT_THROW(DecodeEnvelope(shorter), DecodeError);
  Bytes longer = wire;
  longer.push_back(0);
  EXPECT_THROW(DecodeEnvelope(longer), DecodeError);
  Bytes header_only(wire.begin(), wire.begin() + 20);
  EXPECT_THROW(DecodeEnvelope(header_only), DecodeError);
  Bytes bad_kind = wire;
  bad_kind[32] = 0;
  EXPECT_THROW(DecodeEnvelope(bad_kind), DecodeError);
  bad_kind[32] = 200;
  EXPECT_THROW(DecodeEnvelope(bad_kind), DecodeError);
  Bytes huge = wire;
  huge[33] = 0x7F;
  EXPECT_THROW(PeekPayloadLength(std::span<const std::uint8_t>(huge.data(), kEnvelopeHeaderBytes)), DecodeError);
}

// --- mailbox ----------------------------------------------------------------

class NullLink : public Link {
 public:
  void Send(const Envelope& e) override { sent.push_back(e); }
  std::vector<Envelope> sent;
};

TEST(Mailbox, DuplicateRejectedFirstKept) {
  Endpoint ep(1, {.round_timeout = 1s, .encrypt = false});
  ep.Deliver(Sample(9, 0, 2, 1, {1}));
  ep.Deliver(Sample(9, 0, 2, 1, {2}));
  PartyId from = 2;
  auto got = ep.RecvRound(FixtureSession(), 9, 0, std::span(&from, 1));
  EXPECT_EQ(got.at(2).payload, Bytes{1});
  EXPECT_EQ(ep.rejected(), 1u);
}

TEST(Mailbox, LateEnvelopeForClosedRoundRejected) {
  Endpoint ep(1, {.round_timeout = 1s, .encrypt = false});
  ep.Deliver(Sample(9, 0, 2, 1, {1}));
  ep.RecvFrom(FixtureSession(), 9, 0, 2);
  ep.Deliver(Sample(9, 0, 2, 1, {1}));
  EXPECT_EQ(ep.rejected(), 1u);
}

TEST(Mailbox, TimeoutNamesMissingSender) {
  Endpoint ep(1, {.round_timeout = 100ms, .encrypt = false});
  ep.Deliver(Sample(9, 3, 2, 1));
  std::vector<PartyId> from{2, 3};
  try {
    ep.RecvRound(FixtureSession(), 9, 3, from);
    FAIL() << "expected a timeout";
  } catch (const ProtocolAbort& e) {
    EXPECT_EQ(e.missing(), std::vector<PartyId>{3});
    EXPECT_EQ(e.instance(), 9u);
    EXPECT_EQ(e.round(), 3u);
    EXPECT_NE(std::string(e.what()).find("missing 3"), std::string::npos);
  }
}

TEST(Mailbox, UnexpectedSenderRejectedAtClose) {
  Endpoint ep(1, {.round_timeout = 1s, .encrypt = false});
  ep.Deliver(Sample(9, 0, 2, 1));
  ep.Deliver(Sample(9, 0, 7, 1));
  ep.RecvFrom(FixtureSession(), 9, 0, 2);
  EXPECT_EQ(ep.rejected(), 1u);
}

TEST(Mailbox, InstancesAreIndependent) {
  Endpoint ep(1, {.round_timeout = 2s, .encrypt = false});
  std::thread late([&] {
    std::this_thread::sleep_for(50ms);
    ep.Deliver(Sample(10, 0, 2, 1, {10}));
  });
  ep.Deliver(Sample(11, 0, 2, 1, {11}));
  EXPECT_EQ(ep.RecvFrom(FixtureSession(), 11, 0, 2).payload, Bytes{11});
  EXPECT_EQ(ep.RecvFrom(FixtureSession(), 10, 0, 2).payload, Bytes{10});
  late.join();
}

TEST(Mailbox, AbortWakesWaiters) {
  Endpoint ep(1, {.round_timeout = 5s, .encrypt = false});
  std::thread t([&] {
    std::this_thread::sleep_for(30ms);
    Envelope a = Sample(0, 0, 3, kBroadcast, Bytes{'x'});
    a.kind = PayloadKind::kAbort;
    ep.Deliver(a);
  });
  auto start = std::chrono::steady_clock::now();
  EXPECT_THROW(ep.RecvFrom(FixtureSession(), 4, 0, 2), ProtocolAbort);
  EXPECT_LT(std::chrono::steady_clock::now() - start, 2s);
  t.join();
  EXPECT_TRUE(ep.failed());
}

TEST(Mailbox, SealedPayloadHidesPlaintext) {
  Endpoint a(1, {.round_timeout = 1s, .encrypt = true});
  Endpoint b(2, {.round_timeout = 1s, .encrypt = true});
  a.AddPeerKey(2, *b.public_key());
  b.AddPeerKey(1, *a.public_key());
  auto link = std::make_shared<NullLink>();
  a.Attach(link);
  Bytes secret(64, 0x42);
  a.Send(FixtureSession(), 5, 0, 2, PayloadKind::kShares, secret);
  a.Send(FixtureSession(), 5, 0, kBroadcast, PayloadKind::kShares, secret);
  ASSERT_EQ(link->sent.size(), 2u);
  const Envelope& wire = link->sent[0];
  EXPECT_EQ(wire.payload.size(), secret.size() + 40);
  EXPECT_EQ(std::search(wire.payload.begin(), wire.payload.end(), secret.begin(), secret.begin() + 8),
            wire.payload.end());
  EXPECT_EQ(link->sent[1].payload, secret);
  b.Deliver(wire);
  EXPECT_EQ(b.RecvFrom(FixtureSession(), 5, 0, 1).payload, secret);
  Envelope tampered = wire;
  tampered.round = 1;
  tampered.payload[30] ^= 1;
  b.Deliver(tampered);
  EXPECT_EQ(b.rejected(), 1u);
}

// --- in-memory hub ----------------------------------------------------------

TEST(MemoryHub, ThreePartyRoundReturnsTwoPeerEnvelopes) {
  testing::LocalSession s(MakeParams(8, 8), 3, {}, 1);
  auto counts = s.Run<std::size_t>([](PartyContext& ctx, std::size_t) {
    ctx.endpoint().Send(ctx.session(), 77, 0, kBroadcast, PayloadKind::kShares, Bytes{1});
    return ctx.endpoint().RecvRound(ctx.session(), 77, 0, ctx.peers()).size();
  });
  EXPECT_EQ(counts, (std::vector<std::size_t>{2, 2, 2}));
}

TEST(MemoryHub, BroadcastReachesEveryOtherPartyOnce) {
  auto hub = MemoryHub::Create();
  std::vector<std::unique_ptr<Endpoint>> eps;
  for (PartyId p = 1; p <= 5; ++p) {
    eps.push_back(std::make_unique<Endpoint>(p, EndpointOptions{.round_timeout = 1s, .encrypt = false}));
    hub->Connect(eps.back().get());
  }
  Endpoint client(kClientId, {.round_timeout = 1s, .encrypt = false});
  hub->Connect(&client);
  eps[0]->Send(Sample(3, 0, 1, kBroadcast, {9}));
  EXPECT_EQ(hub->delivered(), 4u);
  for (std::size_t i = 1; i < eps.size(); ++i) {
    EXPECT_EQ(eps[i]->RecvFrom(FixtureSession(), 3, 0, 1).payload, Bytes{9});
  }
  EXPECT_THROW(client.RecvFrom(FixtureSession(), 3, 0, 1), ProtocolAbort);
}

TEST(MemoryHub, HeldUntilRecipientConnects) {
  auto hub = MemoryHub::Create();
  Endpoint a(1, {.round_timeout = 1s, .encrypt = false});
  hub->Connect(&a);
  a.Send(Sample(3, 0, 1, 2, {5}));
  Endpoint b(2, {.round_timeout = 1s, .encrypt = false});
  hub->Connect(&b);
  EXPECT_EQ(b.RecvFrom(FixtureSession(), 3, 0, 1).payload, Bytes{5});
  Endpoint dup(2, {.round_timeout = 1s, .encrypt = false});
  EXPECT_THROW(hub->Connect(&dup), std::invalid_argument);
}

// --- broadcast agent over TCP -----------------------------------------------

struct TcpRole {
  std::unique_ptr<Endpoint> endpoint;
  std::shared_ptr<TcpLink> link;
};

TcpRole Join(BroadcastAgent& ba, PartyId id, Role role, bool encrypt) {
  TcpRole r;
  r.endpoint = std::make_unique<Endpoint>(id, EndpointOptions{.round_timeout = 5s, .encrypt = encrypt});
  r.link = TcpLink::Connect("127.0.0.1", ba.port(), r.endpoint.get(), role, 5s);
  return r;
}

TEST(BroadcastAgent, LinearSocketCountAndBroadcast) {
  const std::size_t m = 6;
  BroadcastAgent ba({.parties = Parties(m)});
  std::vector<TcpRole> parties;
  for (PartyId p = 1; p <= m; ++p) parties.push_back(Join(ba, p, Role::kParty, true));
  TcpRole ti = Join(ba, kTiId, Role::kTrustedInitializer, true);
  TcpRole client = Join(ba, kClientId, Role::kClient, true);
  ASSERT_TRUE(WaitUntil([&] { return ba.stats().registrations == m + 2; }));
  EXPECT_EQ(ba.stats().connections, m + 2);
  EXPECT_LE(ba.stats().peak_connections, m + 3);

  parties[2].endpoint->Send(Sample(8, 0, 3, kBroadcast, {3}));
  for (std::size_t i = 0; i < m; ++i) {
    if (i == 2) continue;
    EXPECT_EQ(parties[i].endpoint->RecvFrom(FixtureSession(), 8, 0, 3).payload, Bytes{3});
  }
  EXPECT_EQ(ba.stats().envelopes_relayed, 1u);
  EXPECT_EQ(ba.stats().frames_delivered, m - 1);

  // Addressed and sealed: the client asks party 1, party 1 answers.
  std::vector<PartyId> everyone = Parties(m);
  everyone.push_back(kTiId);
  client.endpoint->AwaitPeerKeys(everyone);
  client.endpoint->Send(FixtureSession(), 9, 0, 1, PayloadKind::kClientInput, Bytes{1, 2, 3});
  EXPECT_EQ(parties[0].endpoint->RecvFrom(FixtureSession(), 9, 0, kClientId).payload, (Bytes{1, 2, 3}));
  parties[0].endpoint->Send(FixtureSession(), 9, 1, kClientId, PayloadKind::kResultShare, Bytes{4});
  EXPECT_EQ(client.endpoint->RecvFrom(FixtureSession(), 9, 1, 1).payload, Bytes{4});
  ba.Stop();
}

TEST(BroadcastAgent, PerSenderFifo) {
  BroadcastAgent ba({.parties = {1, 2}});
  TcpRole a = Join(ba, 1, Role::kParty, false);
  TcpRole b = Join(ba, 2, Role::kParty, false);
  const std::uint32_t n = 300;
  for (std::uint32_t r = 0; r < n; ++r) a.endpoint->Send(Sample(1, r, 1, 2, {static_cast<std::uint8_t>(r)}));
  auto transcript = std::make_shared<Transcript>();
  b.endpoint->SetTranscript(transcript);
  for (std::uint32_t r = 0; r < n; ++r) {
    EXPECT_EQ(b.endpoint->RecvFrom(FixtureSession(), 1, r, 1).payload[0], static_cast<std::uint8_t>(r));
  }
  // Arrival order is send order.
  std::uint32_t expect = 0;
  bool ordered = true;
  for (const auto& e : transcript->Entries()) {
    if (e.event != TranscriptEvent::kReceived) continue;
    ordered &= e.round >= expect;
    expect = e.round;
  }
  EXPECT_TRUE(ordered);
  ba.Stop();
}

TEST(BroadcastAgent, DuplicateRegistrationRejected) {
  BroadcastAgent ba;
  TcpRole first = Join(ba, 1, Role::kParty, false);
  ASSERT_TRUE(WaitUntil([&] { return ba.stats().registrations == 1; }));
  TcpRole second = Join(ba, 1, Role::kParty, false);
  EXPECT_TRUE(WaitUntil([&] { return second.endpoint->failed(); }));
  EXPECT_FALSE(first.endpoint->failed());
  EXPECT_GE(ba.stats().rejected, 1u);
  ba.Stop();
}

TEST(BroadcastAgent, HoldsForLateRecipientAndRejectsSpoofing) {
  BroadcastAgent ba({.parties = {1, 2}});
  TcpRole a = Join(ba, 1, Role::kParty, false);
  a.endpoint->Send(Sample(4, 0, 1, 2, {4}));
  a.endpoint->Send(Sample(4, 1, 1, kBroadcast, {5}));
  std::this_thread::sleep_for(50ms);
  TcpRole b = Join(ba, 2, Role::kParty, false);
  EXPECT_EQ(b.endpoint->RecvFrom(FixtureSession(), 4, 0, 1).payload, Bytes{4});
  EXPECT_EQ(b.endpoint->RecvFrom(FixtureSession(), 4, 1, 1).payload, Bytes{5});
  ba.Stop();
}

TEST(BroadcastAgent, HeldEnvelopesExpire) {
  BroadcastAgent ba({.hold_timeout = 100ms});
  TcpRole a = Join(ba, 1, Role::kParty, false);
  a.endpoint->Send(Sample(4, 0, 1, 9, {4}));
  EXPECT_TRUE(WaitUntil([&] { return ba.stats().dropped == 1; }, 3s));
  ba.Stop();
}

TEST(BroadcastAgent, ShutdownControlStopsAgent) {
  BroadcastAgent ba;
  TcpRole c = Join(ba, kClientId, Role::kController, false);
  std::string word = "shutdown";
  c.endpoint->Send(FixtureSession(), 0, 0, kAgentId, PayloadKind::kControl, Bytes(word.begin(), word.end()));
  std::thread waiter([&] { ba.Wait(); });
  EXPECT_TRUE(WaitUntil([&] { return ba.stopped(); }));
  waiter.join();
}

// --- trusted initializer distribution ---------------------------------------

struct Distribution {
  std::shared_ptr<MemoryHub> hub = MemoryHub::Create();
  std::shared_ptr<Transcript> transcript = std::make_shared<Transcript>(false);
  std::unique_ptr<Endpoint> ti;
  std::vector<std::unique_ptr<Endpoint>> parties;
  std::vector<Bytes> bytes;

  explicit Distribution(std::size_t m) {
    EndpointOptions opts{.round_timeout = 2s, .encrypt = true};
    ti = std::make_unique<Endpoint>(kTiId, opts);
    ti->SetTranscript(transcript);
    hub->Connect(ti.get());
    std::vector<Endpoint*> raw{ti.get()};
    for (PartyId p = 1; p <= m; ++p) {
      parties.push_back(std::make_unique<Endpoint>(p, opts));
      parties.back()->SetTranscript(transcript);
      hub->Connect(parties.back().get());
      raw.push_back(parties.back().get());
    }
    MemoryHub::ExchangeKeys(raw);
    auto rng = Prng::Seeded(3, "ti");
    Requirements req = cost::Predict(3).Times(2);
    auto group = Parties(m);
    bytes = GenerateSerializedBundles(req, group, FixtureSession(), MakeParams(16, 16), 8, rng);
  }

  std::vector<BundleDelivery> Deliveries() const {
    std::vector<BundleDelivery> d;
    for (std::size_t i = 0; i < bytes.size(); ++i) d.push_back({0, static_cast<PartyId>(i + 1), bytes[i]});
    return d;
  }
};

TEST(TiDistribute, ChecksumsMatchAndTiFallsSilent) {
  Distribution d(3);
  auto dir = std::filesystem::temp_directory_path() / "sharelr_ti_distribute";
  std::filesystem::remove_all(dir);
  std::vector<std::vector<CorrelatedBundle>> received(3);
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < 3; ++i) {
    threads.emplace_back([&, i] {
      std::size_t plan = 0;
      received[i] = ReceiveBundles(*d.parties[i], FixtureSession(), ScenarioKind::kTargetIndependent,
                                   std::span(&plan, 1), dir);
    });
  }
  DistributionReceipt receipt = DistributeBundles(*d.ti, FixtureSession(), d.Deliveries());
  for (auto& t : threads) t.join();
  EXPECT_EQ(receipt.bundles, 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    ASSERT_EQ(received[i].size(), 1u);
    EXPECT_EQ(received[i][0].Serialize(), d.bytes[i]);
    EXPECT_EQ((receipt.checksums.at({0, static_cast<PartyId>(i + 1)})), Sha256(d.bytes[i]));
    d.parties[i]->ForbidSender(kTiId);
  }
  std::size_t before = d.transcript->size();

  // Any later TI message is a protocol violation and never reaches a round.
  d.ti->Send(FixtureSession(), 99, 0, 1, PayloadKind::kShares, Bytes{1});
  EXPECT_EQ(d.parties[0]->violations(), 1u);
  auto entries = d.transcript->Entries();
  std::size_t ti_processed = 0;
  for (std::size_t i = before; i < entries.size(); ++i) {
    if (entries[i].sender == kTiId && entries[i].event != TranscriptEvent::kSent &&
        entries[i].event != TranscriptEvent::kRejected) {
      ++ti_processed;
    }
  }
  EXPECT_EQ(ti_processed, 0u);

  // A restarted party reloads its persisted bundle.
  for (PartyId p = 1; p <= 3; ++p) {
    auto path = BundlePath(dir, FixtureSession(), p);
    ASSERT_TRUE(std::filesystem::exists(path));
    EXPECT_EQ(LoadBundle(path).Serialize(), d.bytes[p - 1]);
  }
  std::filesystem::remove_all(dir);
}

TEST(TiDistribute, WrongAckAbortsBeforeOnlinePhase) {
  Distribution d(2);
  std::thread honest([&] {
    std::size_t plan = 0;
    ReceiveBundles(*d.parties[0], FixtureSession(), ScenarioKind::kTargetIndependent, std::span(&plan, 1));
  });
  std::thread liar([&] {
    d.parties[1]->RecvFrom(FixtureSession(), SetupInstance(0), 0, kTiId);
    d.parties[1]->Send(FixtureSession(), SetupInstance(0), 1, kTiId, PayloadKind::kBundleAck, Bytes(32, 0));
  });
  EXPECT_THROW(DistributeBundles(*d.ti, FixtureSession(), d.Deliveries()), ProtocolAbort);
  honest.join();
  liar.join();
  EXPECT_TRUE(d.parties[0]->failed());
  EXPECT_TRUE(d.parties[1]->failed());
}

TEST(TiDistribute, SilentPartyAbortsDistribution) {
  Distribution d(2);
  std::thread honest([&] {
    std::size_t plan = 0;
    ReceiveBundles(*d.parties[0], FixtureSession(), ScenarioKind::kTargetIndependent, std::span(&plan, 1));
  });
  try {
    DistributeBundles(*d.ti, FixtureSession(), d.Deliveries());
    FAIL() << "expected an abort";
  } catch (const ProtocolAbort& e) {
    EXPECT_EQ(e.missing(), std::vector<PartyId>{2});
  }
  honest.join();
  EXPECT_TRUE(d.parties[1]->failed());
}

TEST(TiDistribute, PlanAssignment) {
  EXPECT_EQ(PlansOfParty(ScenarioKind::kTargetIndependent, 4, 2), std::vector<std::size_t>{0});
  EXPECT_EQ(PlansOfParty(ScenarioKind::kTargetCalibrated, 3, 2), std::vector<std::size_t>{2});
  EXPECT_EQ(PlansOfParty(ScenarioKind::kTargetCalibrated, 3, 4), (std::vector<std::size_t>{1, 2, 3}));
  EXPECT_THROW(PlansOfParty(ScenarioKind::kTargetCalibrated, 3, 5), std::invalid_argument);
  EXPECT_EQ(SessionForPlan(FixtureSession(), ScenarioKind::kTargetIndependent, 0), FixtureSession());
  EXPECT_NE(SessionForPlan(FixtureSession(), ScenarioKind::kTargetCalibrated, 1),
            SessionForPlan(FixtureSession(), ScenarioKind::kTargetCalibrated, 2));
}

// --- roster and transcript ---------------------------------------------------

TEST(Roster, ParsesAndRoundTrips) {
  auto kv = KeyValueFile::Parse(R"(
session = 000102030405060708090a0b0c0d0e0f
scenario = tc-lr
field.e = 16   # small
field.f = 20
agent = 10.0.0.5:7000
party = 2 10.0.0.2
party = 1 10.0.0.1
party = 3
)");
  auto r = SessionRoster::FromConfig(kv);
  EXPECT_EQ(r.scenario, ScenarioKind::kTargetCalibrated);
  EXPECT_EQ(r.e, 16);
  EXPECT_EQ(r.f, 20);
  EXPECT_EQ(r.agent_host, "10.0.0.5");
  EXPECT_EQ(r.agent_port, 7000);
  EXPECT_EQ(r.party_ids(), (std::vector<PartyId>{1, 2, 3}));
  EXPECT_EQ(r.sources(), 2u);
  EXPECT_EQ(r.target(), 3);
  KeyValueFile out;
  r.WriteTo(out);
  auto again = SessionRoster::FromConfig(KeyValueFile::Parse(out.ToText()));
  EXPECT_EQ(again.session, r.session);
  EXPECT_EQ(again.party_ids(), r.party_ids());
  EXPECT_EQ(again.parties[0].host, "10.0.0.2");
}

TEST(Roster, RejectsBadIds) {
  EXPECT_THROW(SessionRoster::FromConfig(KeyValueFile::Parse("party = 1\nparty = 1\n")), ConfigError);
  EXPECT_THROW(SessionRoster::FromConfig(KeyValueFile::Parse("party = 1\nparty = 3\n")), ConfigError);
  EXPECT_THROW(SessionRoster::FromConfig(KeyValueFile::Parse("party = 0\n")), ConfigError);
  EXPECT_THROW(SessionRoster::FromConfig(KeyValueFile::Parse("agent = nohost\n"), 2), ConfigError);
  EXPECT_THROW(KeyValueFile::Parse("just words\n"), ConfigError);
  auto defaults = SessionRoster::FromConfig(KeyValueFile::Parse(""), 4);
  EXPECT_EQ(defaults.party_ids(), (std::vector<PartyId>{1, 2, 3, 4}));
}

TEST(Transcript, JsonlRoundTrip) {
  Transcript t;
  t.Record(TranscriptEvent::kSent, 1, Sample(MakeInstanceId(ProtocolKind::kDmm, 3), 2, 1, kBroadcast, {1, 2}));
  t.Record(TranscriptEvent::kProcessed, 2, Sample(5, 0, 1, 2, {}));
  auto path = std::filesystem::temp_directory_path() / "sharelr_transcript.jsonl";
  t.WriteJsonl(path.string());
  auto back = Transcript::ReadJsonl(path.string());
  auto orig = t.Entries();
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].event, orig[i].event);
    EXPECT_EQ(back[i].instance, orig[i].instance);
    EXPECT_EQ(back[i].round, orig[i].round);
    EXPECT_EQ(back[i].digest, orig[i].digest);
    EXPECT_EQ(back[i].payload, orig[i].payload);
  }
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace sharelr
