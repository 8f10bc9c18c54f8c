#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace sharelr {

using PartyId = std::uint16_t;
using SessionId = std::array<std::uint8_t, 16>;

// Party ids are 1..N. The remaining roles use reserved ids at the top of the
// 16-bit range.
inline constexpr PartyId kControllerId = 0xFFFB;
inline constexpr PartyId kAgentId = 0xFFFC;
inline constexpr PartyId kClientId = 0xFFFD;
inline constexpr PartyId kTiId = 0xFFFE;
inline constexpr PartyId kBroadcast = 0xFFFF;

inline bool IsReservedId(PartyId id) { return id == 0 || id >= kControllerId; }

std::string SessionToHex(const SessionId& s);
SessionId SessionFromHex(std::string_view hex);
// Child session for sub-protocols run by a subset of the roster (e.g. one
// source/target pair): first 16 bytes of SHA-256(parent || label).
SessionId DeriveSession(const SessionId& parent, std::string_view label);

}  // namespace sharelr
