#include "sharelr/transport/transcript.hpp"

#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "sharelr/randomness.hpp"

namespace sharelr {

std::string_view TranscriptEventName(TranscriptEvent e) {
  switch (e) {
    case TranscriptEvent::kSent: return "sent";
    case TranscriptEvent::kReceived: return "received";
    case TranscriptEvent::kProcessed: return "processed";
    case TranscriptEvent::kRejected: return "rejected";
  }
  return "unknown";
}

TranscriptEvent ParseTranscriptEvent(std::string_view name) {
  for (auto e : {TranscriptEvent::kSent, TranscriptEvent::kReceived, TranscriptEvent::kProcessed,
                 TranscriptEvent::kRejected}) {
    if (TranscriptEventName(e) == name) return e;
  }
  throw DecodeError(fmt::format("unknown transcript event '{}'", name));
}

Transcript::Transcript(bool keep_payloads)
    : keep_payloads_(keep_payloads), start_(std::chrono::steady_clock::now()) {}

void Transcript::Record(TranscriptEvent event, PartyId at, const Envelope& e) {
  TranscriptEntry entry;
  entry.event = event;
  entry.at = at;
  entry.session = e.session;
  entry.instance = e.instance;
  entry.round = e.round;
  entry.sender = e.sender;
  entry.recipient = e.recipient;
  entry.kind = e.kind;
  entry.payload_bytes = e.payload.size();
  entry.digest = ToHex(Sha256(e.payload));
  if (keep_payloads_ && event == TranscriptEvent::kSent && e.kind != PayloadKind::kBundle) {
    entry.payload = e.payload;
  }
  entry.micros =
      std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start_).count();
  std::lock_guard lock(mu_);
  entries_.push_back(std::move(entry));
}

std::vector<TranscriptEntry> Transcript::Entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::size_t Transcript::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

void Transcript::WriteJsonl(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(fmt::format("cannot write transcript {}", path));
  for (const auto& e : Entries()) {
    nlohmann::json j = {
        {"event", TranscriptEventName(e.event)},
        {"at", e.at},
        {"session", SessionToHex(e.session)},
        {"instance", e.instance},
        {"round", e.round},
        {"sender", e.sender},
        {"recipient", e.recipient},
        {"kind", PayloadKindName(e.kind)},
        {"kind_code", static_cast<int>(e.kind)},
        {"bytes", e.payload_bytes},
        {"sha256", e.digest},
        {"us", e.micros},
    };
    if (!e.payload.empty()) j["payload"] = ToHex(e.payload);
    out << j.dump() << '\n';
  }
}

std::vector<TranscriptEntry> Transcript::ReadJsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot read transcript {}", path));
  std::vector<TranscriptEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    TranscriptEntry e;
    e.event = ParseTranscriptEvent(j.at("event").get<std::string>());
    e.at = j.at("at").get<PartyId>();
    e.session = SessionFromHex(j.at("session").get<std::string>());
    e.instance = j.at("instance").get<std::uint64_t>();
    e.round = j.at("round").get<std::uint32_t>();
    e.sender = j.at("sender").get<PartyId>();
    e.recipient = j.at("recipient").get<PartyId>();
    e.kind = static_cast<PayloadKind>(j.at("kind_code").get<int>());
    e.payload_bytes = j.at("bytes").get<std::uint64_t>();
    e.digest = j.at("sha256").get<std::string>();
    e.micros = j.at("us").get<std::int64_t>();
    if (j.contains("payload")) e.payload = FromHex(j["payload"].get<std::string>());
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace sharelr
