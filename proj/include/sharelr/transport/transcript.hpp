#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "sharelr/transport/envelope.hpp"

namespace sharelr {

enum class TranscriptEvent : std::uint8_t { kSent, kReceived, kProcessed, kRejected };

std::string_view TranscriptEventName(TranscriptEvent e);
TranscriptEvent ParseTranscriptEvent(std::string_view name);

// One logical message event as seen by one endpoint. Payloads are the
// plaintext handed to / returned from the transport, never ciphertext.
struct TranscriptEntry {
  TranscriptEvent event = TranscriptEvent::kSent;
  PartyId at = 0;
  SessionId session{};
  std::uint64_t instance = 0;
  std::uint32_t round = 0;
  PartyId sender = 0;
  PartyId recipient = 0;
  PayloadKind kind = PayloadKind::kShares;
  std::uint64_t payload_bytes = 0;
  std::string digest;   // SHA-256 of the payload, hex
  Bytes payload;        // kept for sent protocol payloads when enabled
  std::int64_t micros = 0;
};

// Append-only, thread-safe event log of one endpoint (or several sharing a
// process).
class Transcript {
 public:
  explicit Transcript(bool keep_payloads = true);

  void Record(TranscriptEvent event, PartyId at, const Envelope& e);
  std::vector<TranscriptEntry> Entries() const;
  std::size_t size() const;

  // One JSON object per line.
  void WriteJsonl(const std::string& path) const;
  static std::vector<TranscriptEntry> ReadJsonl(const std::string& path);

 private:
  bool keep_payloads_;
  std::chrono::steady_clock::time_point start_;
  mutable std::mutex mu_;
  std::vector<TranscriptEntry> entries_;
};

}  // namespace sharelr
