#include "sharelr/transport/tcp.hpp"

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace sharelr {

std::string_view RoleName(Role role) {
  switch (role) {
    case Role::kParty: return "party";
    case Role::kClient: return "client";
    case Role::kTrustedInitializer: return "ti";
    case Role::kController: return "controller";
  }
  return "unknown";
}

Bytes EncodeRegistration(Role role, const std::optional<PublicKey>& key) {
  ByteWriter w;
  w.U8(static_cast<std::uint8_t>(role));
  w.U8(key ? 1 : 0);
  if (key) w.Raw(*key);
  return w.Take();
}

namespace {

struct Registration {
  Role role;
  std::optional<PublicKey> key;
};

Registration ParseRegistration(ByteReader& r) {
  Registration reg{};
  std::uint8_t role = r.U8();
  if (role < 1 || role > 4) throw DecodeError(fmt::format("unknown role {}", role));
  reg.role = static_cast<Role>(role);
  if (r.U8()) {
    PublicKey k{};
    auto raw = r.Raw(32);
    std::copy(raw.begin(), raw.end(), k.begin());
    reg.key = k;
  }
  return reg;
}

[[noreturn]] void ThrowErrno(const std::string& what) {
  throw std::runtime_error(fmt::format("{}: {}", what, std::strerror(errno)));
}

}  // namespace

bool ReadExact(int fd, std::uint8_t* out, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    ssize_t r = ::recv(fd, out + got, n - got, 0);
    if (r == 0) {
      if (got == 0) return false;
      throw DecodeError("connection closed mid-frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      ThrowErrno("recv");
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

void WriteAll(int fd, const std::uint8_t* data, std::size_t n) {
  std::size_t sent = 0;
  while (sent < n) {
    ssize_t r = ::send(fd, data + sent, n - sent, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      ThrowErrno("send");
    }
    sent += static_cast<std::size_t>(r);
  }
}

std::optional<Envelope> ReadFrame(int fd) {
  Bytes frame(kEnvelopeHeaderBytes);
  if (!ReadExact(fd, frame.data(), kEnvelopeHeaderBytes)) return std::nullopt;
  std::uint32_t len = PeekPayloadLength(frame);
  frame.resize(kEnvelopeHeaderBytes + len);
  if (len > 0 && !ReadExact(fd, frame.data() + kEnvelopeHeaderBytes, len)) {
    throw DecodeError("connection closed mid-frame");
  }
  return DecodeEnvelope(frame);
}

// --- TcpLink ---------------------------------------------------------------

namespace {

int ConnectSocket(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (int rc = ::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res); rc != 0) {
    throw std::runtime_error(fmt::format("resolve {}: {}", host, gai_strerror(rc)));
  }
  int fd = -1;
  for (addrinfo* a = res; a; a = a->ai_next) {
    fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd >= 0) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  return fd;
}

}  // namespace

std::shared_ptr<TcpLink> TcpLink::Connect(const std::string& host, std::uint16_t port, Endpoint* endpoint, Role role,
                                          std::chrono::milliseconds connect_timeout) {
  auto deadline = std::chrono::steady_clock::now() + connect_timeout;
  int fd = -1;
  while ((fd = ConnectSocket(host, port)) < 0) {
    if (std::chrono::steady_clock::now() > deadline) {
      throw std::runtime_error(fmt::format("cannot reach broadcast agent at {}:{}", host, port));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  std::shared_ptr<TcpLink> link(new TcpLink(fd, endpoint));
  endpoint->Attach(link);
  Envelope reg;
  reg.sender = endpoint->self();
  reg.recipient = kAgentId;
  reg.kind = PayloadKind::kRegister;
  reg.payload = EncodeRegistration(role, endpoint->public_key());
  link->Send(reg);
  link->reader_ = std::thread([raw = link.get()] { raw->ReadLoop(); });
  return link;
}

TcpLink::TcpLink(int fd, Endpoint* endpoint) : fd_(fd), endpoint_(endpoint) {}

TcpLink::~TcpLink() {
  Close();
  ::close(fd_);
}

void TcpLink::Send(const Envelope& e) {
  Bytes frame = EncodeEnvelope(e);
  std::lock_guard lock(write_mu_);
  if (closing_) throw ProtocolAbort("link closed", e.instance, e.round);
  try {
    WriteAll(fd_, frame.data(), frame.size());
  } catch (const std::exception& err) {
    throw ProtocolAbort(fmt::format("send to broadcast agent failed: {}", err.what()), e.instance, e.round);
  }
}

void TcpLink::Close() {
  if (closing_.exchange(true)) {
    if (reader_.joinable() && reader_.get_id() != std::this_thread::get_id()) reader_.join();
    return;
  }
  ::shutdown(fd_, SHUT_RDWR);
  if (reader_.joinable() && reader_.get_id() != std::this_thread::get_id()) reader_.join();
}

void TcpLink::ReadLoop() {
  std::string why = "broadcast agent closed the connection";
  try {
    while (auto e = ReadFrame(fd_)) {
      if (e->kind == PayloadKind::kKeyAnnounce) {
        ByteReader r(e->payload);
        PartyId id = r.U16();
        Registration reg = ParseRegistration(r);
        if (reg.key && id != endpoint_->self()) endpoint_->AddPeerKey(id, *reg.key);
        continue;
      }
      if (e->kind == PayloadKind::kReject) {
        why = fmt::format("broadcast agent refused registration: {}",
                          std::string(e->payload.begin(), e->payload.end()));
        break;
      }
      endpoint_->Deliver(std::move(*e));
    }
  } catch (const std::exception& err) {
    why = fmt::format("connection to broadcast agent failed: {}", err.what());
  }
  if (!closing_) endpoint_->Fail(why);
}

// --- BroadcastAgent --------------------------------------------------------

struct BroadcastAgent::Connection {
  int fd = -1;
  PartyId id = 0;
  Role role = Role::kParty;
  bool registered = false;
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Bytes> outbox;
  bool dead = false;
  std::thread reader;
  std::thread writer;

  void Push(Bytes frame) {
    std::lock_guard lock(mu);
    if (dead) return;
    outbox.push_back(std::move(frame));
    cv.notify_one();
  }
  void Kill() {
    {
      std::lock_guard lock(mu);
      dead = true;
      cv.notify_all();
    }
    ::shutdown(fd, SHUT_RDWR);
  }
  void WriteLoop() {
    for (;;) {
      Bytes frame;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return dead || !outbox.empty(); });
        if (outbox.empty()) return;
        frame = std::move(outbox.front());
        outbox.pop_front();
      }
      try {
        WriteAll(fd, frame.data(), frame.size());
      } catch (const std::exception&) {
        Kill();
        return;
      }
    }
  }
};

BroadcastAgent::BroadcastAgent(AgentOptions options) : options_(std::move(options)) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  if (int rc = ::getaddrinfo(options_.host.c_str(), std::to_string(options_.port).c_str(), &hints, &res); rc != 0) {
    throw std::runtime_error(fmt::format("resolve {}: {}", options_.host, gai_strerror(rc)));
  }
  listen_fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (listen_fd_ < 0) {
    ::freeaddrinfo(res);
    ThrowErrno("socket");
  }
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(listen_fd_, res->ai_addr, res->ai_addrlen) != 0 || ::listen(listen_fd_, 128) != 0) {
    ::freeaddrinfo(res);
    ::close(listen_fd_);
    ThrowErrno(fmt::format("bind {}:{}", options_.host, options_.port));
  }
  ::freeaddrinfo(res);
  sockaddr_storage addr{};
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port
                                           : reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
  acceptor_ = std::thread([this] { AcceptLoop(); });
  sweeper_ = std::thread([this] {
    std::unique_lock lock(mu_);
    while (!stopped_) {
      stop_cv_.wait_for(lock, std::chrono::milliseconds(250));
      lock.unlock();
      SweepHeld();
      lock.lock();
    }
  });
  spdlog::info("broadcast agent listening on {}:{}", options_.host, port_);
}

BroadcastAgent::~BroadcastAgent() { Stop(); }

void BroadcastAgent::Wait() {
  std::unique_lock lock(mu_);
  stop_cv_.wait(lock, [&] { return stopped_.load(); });
}

void BroadcastAgent::Stop() {
  bool was = stopped_.exchange(true);
  {
    std::lock_guard lock(mu_);
    stop_cv_.notify_all();
  }
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
  }
  if (acceptor_.joinable()) acceptor_.join();
  if (sweeper_.joinable()) sweeper_.join();
  std::vector<std::shared_ptr<Connection>> conns;
  {
    std::lock_guard lock(mu_);
    conns = all_;
  }
  for (auto& c : conns) c->Kill();
  for (auto& c : conns) {
    if (c->reader.joinable()) c->reader.join();
    if (c->writer.joinable()) c->writer.join();
    if (c->fd >= 0) {
      ::close(c->fd);
      c->fd = -1;
    }
  }
  if (listen_fd_ >= 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  if (!was) spdlog::info("broadcast agent stopped");
}

AgentStats BroadcastAgent::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

void BroadcastAgent::AcceptLoop() {
  while (!stopped_) {
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      return;
    }
    if (stopped_) {
      ::close(fd);
      return;
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    auto conn = std::make_shared<Connection>();
    conn->fd = fd;
    {
      std::lock_guard lock(mu_);
      all_.push_back(conn);
      stats_.connections++;
      stats_.peak_connections = std::max(stats_.peak_connections, stats_.connections);
    }
    conn->writer = std::thread([conn] { conn->WriteLoop(); });
    conn->reader = std::thread([this, conn] { Serve(conn); });
  }
}

void BroadcastAgent::Serve(std::shared_ptr<Connection> conn) {
  try {
    while (auto e = ReadFrame(conn->fd)) {
      if (!conn->registered) {
        if (e->kind != PayloadKind::kRegister) {
          spdlog::warn("agent: first envelope on a connection must register; closing");
          break;
        }
        Register(conn, *e);
        if (!conn->registered) break;
        continue;
      }
      if (e->sender != conn->id) {
        std::lock_guard lock(mu_);
        stats_.rejected++;
        spdlog::warn("agent: connection of {} sent an envelope claiming sender {}; dropped", conn->id, e->sender);
        continue;
      }
      if (e->recipient == kAgentId) {
        if (e->kind == PayloadKind::kControl && std::string(e->payload.begin(), e->payload.end()) == "shutdown") {
          spdlog::info("agent: shutdown requested by {}", conn->id);
          std::lock_guard lock(mu_);
          stopped_ = true;
          stop_cv_.notify_all();
        }
        continue;
      }
      Route(conn, std::move(*e));
    }
  } catch (const std::exception& err) {
    spdlog::warn("agent: connection of {} faulted: {}", conn->id, err.what());
  }
  Unregister(conn);
  // Let queued frames drain before the socket goes away.
  {
    std::lock_guard lock(conn->mu);
    conn->dead = true;
    conn->cv.notify_all();
  }
}

void BroadcastAgent::Register(const std::shared_ptr<Connection>& conn, const Envelope& e) {
  ByteReader r(e.payload);
  Registration reg = ParseRegistration(r);
  std::lock_guard lock(mu_);
  if (registered_.count(e.sender)) {
    std::string why = fmt::format("id {} is already registered", e.sender);
    spdlog::warn("agent: {}", why);
    stats_.rejected++;
    Envelope rej;
    rej.sender = kAgentId;
    rej.recipient = e.sender;
    rej.kind = PayloadKind::kReject;
    rej.payload.assign(why.begin(), why.end());
    conn->Push(EncodeEnvelope(rej));
    return;
  }
  conn->id = e.sender;
  conn->role = reg.role;
  conn->registered = true;
  registered_[e.sender] = conn;
  stats_.registrations++;

  for (const auto& [id, frame] : announcements_) {
    if (id != e.sender) conn->Push(frame);
  }
  Envelope ann;
  ann.sender = kAgentId;
  ann.recipient = kBroadcast;
  ann.kind = PayloadKind::kKeyAnnounce;
  ByteWriter w;
  w.U16(e.sender);
  w.Raw(EncodeRegistration(reg.role, reg.key));
  ann.payload = w.Take();
  Bytes frame = EncodeEnvelope(ann);
  std::erase_if(announcements_, [&](const auto& a) { return a.first == e.sender; });
  announcements_.emplace_back(e.sender, frame);
  for (auto& [id, other] : registered_) {
    if (id != e.sender) other->Push(frame);
  }
  auto held = held_.find(e.sender);
  if (held != held_.end()) {
    for (auto& h : held->second) conn->Push(std::move(h.frame));
    held_.erase(held);
  }
  spdlog::debug("agent: registered {} {}", RoleName(reg.role), e.sender);
}

void BroadcastAgent::Unregister(const std::shared_ptr<Connection>& conn) {
  std::lock_guard lock(mu_);
  if (conn->registered) {
    auto it = registered_.find(conn->id);
    if (it != registered_.end() && it->second == conn) registered_.erase(it);
  }
  if (stats_.connections > 0) stats_.connections--;
}

void BroadcastAgent::Route(const std::shared_ptr<Connection>& from, Envelope e) {
  Bytes frame = EncodeEnvelope(e);
  std::lock_guard lock(mu_);
  stats_.envelopes_relayed++;
  stats_.bytes_relayed += frame.size();
  stats_.sent_by[from->id]++;
  auto deliver = [&](PartyId to) {
    stats_.frames_delivered++;
    auto it = registered_.find(to);
    if (it != registered_.end()) {
      it->second->Push(frame);
    } else {
      held_[to].push_back({frame, std::chrono::steady_clock::now()});
    }
  };
  if (e.recipient == kBroadcast) {
    std::vector<PartyId> targets = options_.parties;
    for (const auto& [id, c] : registered_) {
      if (c->role == Role::kParty && !IsReservedId(id)) targets.push_back(id);
    }
    std::sort(targets.begin(), targets.end());
    targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
    for (PartyId to : targets) {
      if (to != e.sender) deliver(to);
    }
    return;
  }
  deliver(e.recipient);
}

void BroadcastAgent::SweepHeld() {
  std::lock_guard lock(mu_);
  auto now = std::chrono::steady_clock::now();
  for (auto it = held_.begin(); it != held_.end();) {
    auto& q = it->second;
    while (!q.empty() && now - q.front().since > options_.hold_timeout) {
      q.pop_front();
      stats_.dropped++;
      spdlog::warn("agent: dropped an envelope held for unregistered recipient {}", it->first);
    }
    it = q.empty() ? held_.erase(it) : std::next(it);
  }
}

}  // namespace sharelr
