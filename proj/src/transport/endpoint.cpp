#include "sharelr/transport/endpoint.hpp"

#include <algorithm>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/spdlog.h>

namespace sharelr {

ProtocolAbort::ProtocolAbort(const std::string& what, std::uint64_t instance, std::uint32_t round,
                             std::vector<PartyId> missing)
    : std::runtime_error(what), instance_(instance), round_(round), missing_(std::move(missing)) {}

bool IsSealedKind(PayloadKind kind) {
  switch (kind) {
    case PayloadKind::kBundle:
    case PayloadKind::kBundleAck:
    case PayloadKind::kShares:
    case PayloadKind::kClientInput:
    case PayloadKind::kResultShare:
    case PayloadKind::kMaskedPrediction:
    case PayloadKind::kMaskShare:
    case PayloadKind::kMaskSum:
      return true;
    default:
      return false;
  }
}

namespace {

bool Sealed(const EndpointOptions& o, const Envelope& e) {
  return o.encrypt && e.recipient != kBroadcast && IsSealedKind(e.kind);
}

}  // namespace

Endpoint::Endpoint(PartyId self, EndpointOptions options) : self_(self), options_(options) {
  if (options_.encrypt) crypto_ = std::make_unique<PairwiseCrypto>();
}

Endpoint::~Endpoint() {
  if (link_) link_->Close();
}

void Endpoint::Attach(std::shared_ptr<Link> link) { link_ = std::move(link); }

std::optional<PublicKey> Endpoint::public_key() const {
  if (!crypto_) return std::nullopt;
  return crypto_->public_key();
}

void Endpoint::AddPeerKey(PartyId peer, const PublicKey& key) {
  if (!crypto_) return;
  crypto_->AddPeer(peer, key);
  std::lock_guard lock(mu_);
  cv_.notify_all();
}

void Endpoint::AwaitPeerKeys(std::span<const PartyId> peers) {
  if (!crypto_) return;
  std::unique_lock lock(mu_);
  bool ok = cv_.wait_for(lock, options_.round_timeout, [&] {
    if (failure_) return true;
    return std::all_of(peers.begin(), peers.end(), [&](PartyId p) { return crypto_->HasPeer(p); });
  });
  if (failure_) throw ProtocolAbort(*failure_, 0, 0);
  if (!ok) {
    std::vector<PartyId> missing;
    for (PartyId p : peers) {
      if (!crypto_->HasPeer(p)) missing.push_back(p);
    }
    throw ProtocolAbort(fmt::format("party {}: no public key announced by {}", self_, fmt::join(missing, ", ")),
                        0, 0, missing);
  }
}

void Endpoint::Send(Envelope e) {
  if (!link_) throw std::logic_error("endpoint has no link");
  e.sender = self_;
  if (transcript_) transcript_->Record(TranscriptEvent::kSent, self_, e);
  if (Sealed(options_, e)) {
    PartyId peer = e.recipient;
    AwaitPeerKeys(std::span<const PartyId>(&peer, 1));
    e.payload = crypto_->Seal(peer, e.payload);
  }
  link_->Send(e);
}

void Endpoint::Send(const SessionId& session, std::uint64_t instance, std::uint32_t round, PartyId recipient,
                    PayloadKind kind, Bytes payload) {
  Send(Envelope{session, instance, round, self_, recipient, kind, std::move(payload)});
}

void Endpoint::Reject(const Envelope& e, const char* why) {
  spdlog::warn("party {}: rejected {} from {} (instance {:#x}, round {}): {}", self_, PayloadKindName(e.kind),
               e.sender, e.instance, e.round, why);
  ++rejected_;
  if (transcript_) transcript_->Record(TranscriptEvent::kRejected, self_, e);
}

void Endpoint::Deliver(Envelope e) {
  if (e.recipient != self_ && e.recipient != kBroadcast) return;
  {
    std::lock_guard lock(mu_);
    if (forbidden_.count(e.sender)) {
      ++violations_;
      Reject(e, "protocol violation: sender is no longer part of the session");
      return;
    }
  }
  if (Sealed(options_, e)) {
    try {
      e.payload = crypto_->Open(e.sender, e.payload);
    } catch (const DecodeError& err) {
      std::lock_guard lock(mu_);
      Reject(e, err.what());
      return;
    }
  }
  std::lock_guard lock(mu_);
  if (e.kind == PayloadKind::kAbort) {
    std::string reason(e.payload.begin(), e.payload.end());
    if (transcript_) transcript_->Record(TranscriptEvent::kReceived, self_, e);
    if (!failure_) failure_ = fmt::format("abort from party {}: {}", e.sender, reason);
    cv_.notify_all();
    return;
  }
  Key key{e.session, e.instance, e.round};
  if (closed_.count(key)) {
    Reject(e, "round already closed");
    return;
  }
  auto& slot = mailbox_[key];
  if (slot.count(e.sender)) {
    Reject(e, "duplicate for this round");
    return;
  }
  if (transcript_) transcript_->Record(TranscriptEvent::kReceived, self_, e);
  slot.emplace(e.sender, std::move(e));
  cv_.notify_all();
}

std::map<PartyId, Envelope> Endpoint::RecvRound(const SessionId& session, std::uint64_t instance,
                                                std::uint32_t round, std::span<const PartyId> senders,
                                                std::optional<std::chrono::milliseconds> timeout) {
  Key key{session, instance, round};
  std::unique_lock lock(mu_);
  auto complete = [&] {
    auto it = mailbox_.find(key);
    if (senders.empty()) return true;
    if (it == mailbox_.end()) return false;
    return std::all_of(senders.begin(), senders.end(), [&](PartyId p) { return it->second.count(p) > 0; });
  };
  bool ok = cv_.wait_for(lock, timeout.value_or(options_.round_timeout),
                         [&] { return failure_.has_value() || complete(); });
  if (!complete()) {
    std::vector<PartyId> missing;
    auto it = mailbox_.find(key);
    for (PartyId p : senders) {
      if (it == mailbox_.end() || !it->second.count(p)) missing.push_back(p);
    }
    if (failure_) {
      throw ProtocolAbort(fmt::format("party {}: instance {:#x} round {} aborted: {}", self_, instance, round,
                                      *failure_),
                          instance, round, missing);
    }
    (void)ok;
    throw ProtocolAbort(fmt::format("party {}: timeout in instance {:#x} round {}; missing {}", self_, instance,
                                    round, fmt::join(missing, ", ")),
                        instance, round, missing);
  }
  std::map<PartyId, Envelope> out;
  auto it = mailbox_.find(key);
  if (it != mailbox_.end()) {
    for (PartyId p : senders) {
      auto node = it->second.extract(p);
      out.emplace(p, std::move(node.mapped()));
    }
    // Anything else filed under this key came from an unexpected sender.
    for (auto& [p, env] : it->second) Reject(env, "sender not expected in this round");
    mailbox_.erase(it);
  }
  closed_.insert(key);
  if (transcript_) {
    for (const auto& [p, env] : out) transcript_->Record(TranscriptEvent::kProcessed, self_, env);
  }
  return out;
}

Envelope Endpoint::RecvFrom(const SessionId& session, std::uint64_t instance, std::uint32_t round, PartyId sender,
                            std::optional<std::chrono::milliseconds> timeout) {
  auto got = RecvRound(session, instance, round, std::span<const PartyId>(&sender, 1), timeout);
  return std::move(got.begin()->second);
}

void Endpoint::Fail(const std::string& reason) {
  std::lock_guard lock(mu_);
  if (!failure_) failure_ = reason;
  cv_.notify_all();
}

bool Endpoint::failed() const {
  std::lock_guard lock(mu_);
  return failure_.has_value();
}

std::size_t Endpoint::rejected() const {
  std::lock_guard lock(mu_);
  return rejected_;
}

void Endpoint::ForbidSender(PartyId sender) {
  std::lock_guard lock(mu_);
  forbidden_.insert(sender);
}

std::size_t Endpoint::violations() const {
  std::lock_guard lock(mu_);
  return violations_;
}

// --- MemoryHub -------------------------------------------------------------

namespace {

class MemoryLink : public Link {
 public:
  MemoryLink(std::weak_ptr<MemoryHub> hub, PartyId self, std::function<void(const Envelope&)> route)
      : hub_(std::move(hub)), self_(self), route_(std::move(route)) {}

  void Send(const Envelope& e) override {
    if (hub_.expired()) throw ProtocolAbort("in-memory hub is gone", e.instance, e.round);
    route_(e);
  }
  void Close() override {
    if (auto h = hub_.lock()) h->Disconnect(self_);
  }

 private:
  std::weak_ptr<MemoryHub> hub_;
  PartyId self_;
  std::function<void(const Envelope&)> route_;
};

}  // namespace

std::shared_ptr<MemoryHub> MemoryHub::Create() { return std::shared_ptr<MemoryHub>(new MemoryHub()); }

std::shared_ptr<Link> MemoryHub::Connect(Endpoint* endpoint) {
  std::weak_ptr<MemoryHub> weak = weak_from_this();
  auto link = std::make_shared<MemoryLink>(weak, endpoint->self(), [weak](const Envelope& e) {
    if (auto h = weak.lock()) h->Route(e);
  });
  std::vector<Envelope> held;
  {
    std::lock_guard lock(mu_);
    if (endpoints_.count(endpoint->self())) {
      throw std::invalid_argument(fmt::format("id {} is already connected to the hub", endpoint->self()));
    }
    endpoints_[endpoint->self()] = endpoint;
    auto it = pending_.find(endpoint->self());
    if (it != pending_.end()) {
      held = std::move(it->second);
      pending_.erase(it);
    }
    for (auto& e : held) {
      endpoint->Deliver(e);
      ++delivered_;
    }
  }
  endpoint->Attach(link);
  return link;
}

void MemoryHub::Disconnect(PartyId id) {
  std::lock_guard lock(mu_);
  endpoints_.erase(id);
}

void MemoryHub::Route(const Envelope& e) {
  std::lock_guard lock(mu_);
  if (e.recipient == kBroadcast) {
    for (auto& [id, ep] : endpoints_) {
      if (id == e.sender || IsReservedId(id)) continue;
      ep->Deliver(e);
      ++delivered_;
    }
    return;
  }
  auto it = endpoints_.find(e.recipient);
  if (it == endpoints_.end()) {
    pending_[e.recipient].push_back(e);
    return;
  }
  it->second->Deliver(e);
  ++delivered_;
}

std::size_t MemoryHub::delivered() const {
  std::lock_guard lock(mu_);
  return delivered_;
}

std::size_t MemoryHub::connections() const {
  std::lock_guard lock(mu_);
  return endpoints_.size();
}

void MemoryHub::ExchangeKeys(std::span<Endpoint* const> endpoints) {
  for (Endpoint* a : endpoints) {
    for (Endpoint* b : endpoints) {
      if (a == b) continue;
      if (auto key = b->public_key()) a->AddPeerKey(b->self(), *key);
    }
  }
}

}  // namespace sharelr
