#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

#include "sharelr/bytes.hpp"
#include "sharelr/ids.hpp"

namespace sharelr {

enum class PayloadKind : std::uint8_t {
  kRegister = 1,          // role byte + X25519 public key, addressed to the agent
  kKeyAnnounce = 2,       // relayed registration of a peer
  kBundle = 3,            // serialized CorrelatedBundle, TI -> party
  kBundleAck = 4,         // SHA-256 of the received bundle, party -> TI
  kShares = 5,            // protocol round: u16 count + matrices
  kClientInput = 6,       // client's fragment of a query vector
  kResultShare = 7,       // party's fragment of a prediction, back to the client
  kMaskedPrediction = 8,  // source's prediction fragment + r_i, to the target
  kMaskShare = 9,         // r_i, to the mask aggregator
  kMaskSum = 10,          // sum of masks, aggregator -> target
  kAbort = 11,            // UTF-8 reason
  kControl = 12,          // UTF-8 command
  kReject = 13,           // registration refused, UTF-8 reason
};

std::string_view PayloadKindName(PayloadKind kind);

// Wire layout, all integers big-endian:
//   session[16] instance[8] round[4] sender[2] recipient[2] kind[1] length[4] payload[length]
struct Envelope {
  SessionId session{};
  std::uint64_t instance = 0;
  std::uint32_t round = 0;
  PartyId sender = 0;
  PartyId recipient = 0;
  PayloadKind kind = PayloadKind::kShares;
  Bytes payload;

  bool operator==(const Envelope&) const = default;
};

inline constexpr std::size_t kEnvelopeHeaderBytes = 37;
inline constexpr std::size_t kMaxPayloadBytes = std::size_t{64} << 20;

Bytes EncodeEnvelope(const Envelope& e);
// Exact decode of one envelope; throws DecodeError on any malformation,
// including a length field that disagrees with the buffer.
Envelope DecodeEnvelope(std::span<const std::uint8_t> bytes);

// Header-only parse; returns the payload length announced by the header.
std::uint32_t PeekPayloadLength(std::span<const std::uint8_t> header);

}  // namespace sharelr
