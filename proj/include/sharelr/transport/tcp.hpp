#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "sharelr/transport/endpoint.hpp"

namespace sharelr {

enum class Role : std::uint8_t { kParty = 1, kClient = 2, kTrustedInitializer = 3, kController = 4 };

std::string_view RoleName(Role role);

// Registration payload: role[1] has_key[1] key[32 if has_key].
// KeyAnnounce payload: id[2] role[1] has_key[1] key[32 if has_key].
Bytes EncodeRegistration(Role role, const std::optional<PublicKey>& key);

// Blocking stream helpers; false on orderly EOF, throw on errors.
bool ReadExact(int fd, std::uint8_t* out, std::size_t n);
void WriteAll(int fd, const std::uint8_t* data, std::size_t n);
// Reads one envelope frame; nullopt on EOF before the first byte.
std::optional<Envelope> ReadFrame(int fd);

// Endpoint link over one TCP connection to the broadcast agent. A reader
// thread feeds inbound envelopes into the endpoint and key announcements
// into its key table.
class TcpLink : public Link, public std::enable_shared_from_this<TcpLink> {
 public:
  // Connects (retrying until `connect_timeout`), registers `endpoint` under
  // its id and role, and attaches itself to the endpoint.
  static std::shared_ptr<TcpLink> Connect(const std::string& host, std::uint16_t port, Endpoint* endpoint, Role role,
                                          std::chrono::milliseconds connect_timeout = std::chrono::seconds(30));
  ~TcpLink() override;

  void Send(const Envelope& e) override;
  void Close() override;

 private:
  TcpLink(int fd, Endpoint* endpoint);
  void ReadLoop();

  int fd_;
  Endpoint* endpoint_;
  std::mutex write_mu_;
  std::atomic<bool> closing_{false};
  std::thread reader_;
};

struct AgentOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks a free port
  // Envelopes for roles that never register are dropped after this long.
  std::chrono::milliseconds hold_timeout{60000};
  // Party ids of the roster. Broadcasts are held for listed parties that
  // have not registered yet; without a list only registered parties count.
  std::vector<PartyId> parties;
};

struct AgentStats {
  std::size_t connections = 0;
  std::size_t peak_connections = 0;
  std::size_t registrations = 0;
  std::uint64_t envelopes_relayed = 0;  // inbound envelopes routed
  std::uint64_t frames_delivered = 0;   // outbound copies, one per recipient
  std::uint64_t bytes_relayed = 0;
  std::uint64_t rejected = 0;
  std::uint64_t dropped = 0;
  std::map<PartyId, std::uint64_t> sent_by;
};

// The relay ("bulletin board"): one connection per role, broadcast to all
// registered parties, addressed relay to one recipient, per-sender FIFO. It
// reads envelope headers only; payloads pass through untouched.
class BroadcastAgent {
 public:
  explicit BroadcastAgent(AgentOptions options = {});
  ~BroadcastAgent();
  BroadcastAgent(const BroadcastAgent&) = delete;
  BroadcastAgent& operator=(const BroadcastAgent&) = delete;

  std::uint16_t port() const { return port_; }

  // Blocks until Stop() or a shutdown control message.
  void Wait();
  void Stop();
  bool stopped() const { return stopped_; }

  AgentStats stats() const;

 private:
  struct Connection;

  void AcceptLoop();
  void Serve(std::shared_ptr<Connection> conn);
  void Route(const std::shared_ptr<Connection>& from, Envelope e);
  void Enqueue(const std::shared_ptr<Connection>& to, const Bytes& frame);
  void Register(const std::shared_ptr<Connection>& conn, const Envelope& e);
  void Unregister(const std::shared_ptr<Connection>& conn);
  void SweepHeld();

  AgentOptions options_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopped_{false};
  std::thread acceptor_;
  std::thread sweeper_;

  mutable std::mutex mu_;
  std::condition_variable stop_cv_;
  std::map<PartyId, std::shared_ptr<Connection>> registered_;
  std::vector<std::shared_ptr<Connection>> all_;
  std::vector<std::pair<PartyId, Bytes>> announcements_;
  struct Held {
    Bytes frame;
    std::chrono::steady_clock::time_point since;
  };
  std::map<PartyId, std::deque<Held>> held_;
  AgentStats stats_;
};

}  // namespace sharelr
