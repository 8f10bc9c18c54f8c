#pragma once

#include <chrono>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "sharelr/transport/crypto.hpp"
#include "sharelr/transport/envelope.hpp"
#include "sharelr/transport/transcript.hpp"

namespace sharelr {

// A protocol instance cannot complete: a peer went silent, the link died or
// a peer announced an abort. Carries the failing instance and round.
class ProtocolAbort : public std::runtime_error {
 public:
  ProtocolAbort(const std::string& what, std::uint64_t instance, std::uint32_t round,
                std::vector<PartyId> missing = {});

  std::uint64_t instance() const { return instance_; }
  std::uint32_t round() const { return round_; }
  const std::vector<PartyId>& missing() const { return missing_; }

 private:
  std::uint64_t instance_;
  std::uint32_t round_;
  std::vector<PartyId> missing_;
};

// Outbound half of a connection. Implementations must be thread-safe and
// preserve the order of Send calls.
class Link {
 public:
  virtual ~Link() = default;
  virtual void Send(const Envelope& e) = 0;
  virtual void Close() {}
};

struct EndpointOptions {
  std::chrono::milliseconds round_timeout{60000};
  bool encrypt = true;
};

// Addressed payloads of these kinds travel sealed when encryption is on.
bool IsSealedKind(PayloadKind kind);

// A role's session handle: sends through its link, and files inbound
// envelopes into a mailbox keyed by (session, instance, round, sender) so
// concurrent protocol instances never block each other.
class Endpoint {
 public:
  explicit Endpoint(PartyId self, EndpointOptions options = {});
  ~Endpoint();
  Endpoint(const Endpoint&) = delete;
  Endpoint& operator=(const Endpoint&) = delete;

  PartyId self() const { return self_; }
  const EndpointOptions& options() const { return options_; }

  void Attach(std::shared_ptr<Link> link);
  void SetTranscript(std::shared_ptr<Transcript> transcript) { transcript_ = std::move(transcript); }
  const std::shared_ptr<Transcript>& transcript() const { return transcript_; }

  // Present only when encryption is enabled.
  PairwiseCrypto* crypto() { return crypto_.get(); }
  std::optional<PublicKey> public_key() const;
  void AddPeerKey(PartyId peer, const PublicKey& key);
  void AwaitPeerKeys(std::span<const PartyId> peers);

  // Stamps the sender, seals addressed payloads and hands the envelope to
  // the link.
  void Send(Envelope e);
  void Send(const SessionId& session, std::uint64_t instance, std::uint32_t round, PartyId recipient,
            PayloadKind kind, Bytes payload);

  // Inbound path, called from link reader threads.
  void Deliver(Envelope e);

  // Blocks until one envelope from every listed sender has arrived for
  // (session, instance, round), then closes that round. Throws ProtocolAbort
  // naming the missing senders on timeout. `timeout` overrides the round
  // timeout, e.g. for waits that span another role's start-up.
  std::map<PartyId, Envelope> RecvRound(const SessionId& session, std::uint64_t instance, std::uint32_t round,
                                        std::span<const PartyId> senders,
                                        std::optional<std::chrono::milliseconds> timeout = {});
  Envelope RecvFrom(const SessionId& session, std::uint64_t instance, std::uint32_t round, PartyId sender,
                    std::optional<std::chrono::milliseconds> timeout = {});

  // Wakes every waiter with a ProtocolAbort carrying `reason`.
  void Fail(const std::string& reason);
  bool failed() const;

  std::size_t rejected() const;

  // Every later envelope from `sender` is rejected as a protocol violation.
  // Used once the trusted initializer has finished distribution.
  void ForbidSender(PartyId sender);
  std::size_t violations() const;

 private:
  using Key = std::tuple<SessionId, std::uint64_t, std::uint32_t>;

  void Reject(const Envelope& e, const char* why);

  PartyId self_;
  EndpointOptions options_;
  std::shared_ptr<Link> link_;
  std::shared_ptr<Transcript> transcript_;
  std::unique_ptr<PairwiseCrypto> crypto_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<Key, std::map<PartyId, Envelope>> mailbox_;
  std::set<Key> closed_;
  std::optional<std::string> failure_;
  std::size_t rejected_ = 0;
  std::set<PartyId> forbidden_;
  std::size_t violations_ = 0;
};

// In-process relay with broadcast agent semantics, for tests and single-host
// runs: broadcasts reach every connected party except the sender, addressed
// envelopes reach their recipient, and envelopes for roles that have not
// connected yet are held until they do.
class MemoryHub : public std::enable_shared_from_this<MemoryHub> {
 public:
  static std::shared_ptr<MemoryHub> Create();

  std::shared_ptr<Link> Connect(Endpoint* endpoint);
  void Disconnect(PartyId id);

  std::size_t delivered() const;
  std::size_t connections() const;

  // Introduces every pair of endpoints' public keys.
  static void ExchangeKeys(std::span<Endpoint* const> endpoints);

 private:
  MemoryHub() = default;
  void Route(const Envelope& e);

  mutable std::mutex mu_;
  std::map<PartyId, Endpoint*> endpoints_;
  std::map<PartyId, std::vector<Envelope>> pending_;
  std::size_t delivered_ = 0;
};

}  // namespace sharelr
