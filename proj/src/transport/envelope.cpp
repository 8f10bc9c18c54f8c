#include "sharelr/transport/envelope.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace sharelr {

std::string_view PayloadKindName(PayloadKind kind) {
  switch (kind) {
    case PayloadKind::kRegister: return "register";
    case PayloadKind::kKeyAnnounce: return "key-announce";
    case PayloadKind::kBundle: return "bundle";
    case PayloadKind::kBundleAck: return "bundle-ack";
    case PayloadKind::kShares: return "shares";
    case PayloadKind::kClientInput: return "client-input";
    case PayloadKind::kResultShare: return "result-share";
    case PayloadKind::kMaskedPrediction: return "masked-prediction";
    case PayloadKind::kMaskShare: return "mask-share";
    case PayloadKind::kMaskSum: return "mask-sum";
    case PayloadKind::kAbort: return "abort";
    case PayloadKind::kControl: return "control";
    case PayloadKind::kReject: return "reject";
  }
  return "unknown";
}

namespace {

bool KnownKind(std::uint8_t k) { return k >= 1 && k <= 13; }

}  // namespace

Bytes EncodeEnvelope(const Envelope& e) {
  if (e.payload.size() > kMaxPayloadBytes) {
    throw DecodeError(fmt::format("payload of {} bytes exceeds the 64 MiB frame cap", e.payload.size()));
  }
  ByteWriter w;
  w.bytes().reserve(kEnvelopeHeaderBytes + e.payload.size());
  w.Raw(e.session);
  w.U64(e.instance);
  w.U32(e.round);
  w.U16(e.sender);
  w.U16(e.recipient);
  w.U8(static_cast<std::uint8_t>(e.kind));
  w.U32(static_cast<std::uint32_t>(e.payload.size()));
  w.Raw(e.payload);
  return w.Take();
}

std::uint32_t PeekPayloadLength(std::span<const std::uint8_t> header) {
  if (header.size() < kEnvelopeHeaderBytes) throw DecodeError("short envelope header");
  ByteReader r(header.subspan(kEnvelopeHeaderBytes - 4, 4));
  std::uint32_t len = r.U32();
  if (len > kMaxPayloadBytes) throw DecodeError(fmt::format("announced payload {} exceeds frame cap", len));
  return len;
}

Envelope DecodeEnvelope(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  Envelope e;
  auto s = r.Raw(16);
  std::copy(s.begin(), s.end(), e.session.begin());
  e.instance = r.U64();
  e.round = r.U32();
  e.sender = r.U16();
  e.recipient = r.U16();
  std::uint8_t kind = r.U8();
  if (!KnownKind(kind)) throw DecodeError(fmt::format("unknown payload kind {}", kind));
  e.kind = static_cast<PayloadKind>(kind);
  std::uint32_t len = r.U32();
  if (len > kMaxPayloadBytes) throw DecodeError(fmt::format("announced payload {} exceeds frame cap", len));
  if (r.remaining() != len) {
    throw DecodeError(fmt::format("length field says {} bytes, frame carries {}", len, r.remaining()));
  }
  auto p = r.Raw(len);
  e.payload.assign(p.begin(), p.end());
  return e;
}

}  // namespace sharelr
