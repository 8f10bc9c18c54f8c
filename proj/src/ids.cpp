#include "sharelr/ids.hpp"

#include <algorithm>

#include <sodium.h>

#include "sharelr/bytes.hpp"
#include "sharelr/random.hpp"

namespace sharelr {

std::string SessionToHex(const SessionId& s) { return ToHex(s); }

SessionId SessionFromHex(std::string_view hex) {
  Bytes raw = FromHex(hex);
  if (raw.size() != 16) throw DecodeError("session id must be 16 bytes (32 hex digits)");
  SessionId s{};
  std::copy(raw.begin(), raw.end(), s.begin());
  return s;
}

SessionId DeriveSession(const SessionId& parent, std::string_view label) {
  EnsureSodium();
  Bytes material(parent.begin(), parent.end());
  material.insert(material.end(), label.begin(), label.end());
  std::array<std::uint8_t, crypto_hash_sha256_BYTES> digest{};
  crypto_hash_sha256(digest.data(), material.data(), material.size());
  SessionId s{};
  std::copy_n(digest.begin(), s.size(), s.begin());
  return s;
}

}  // namespace sharelr
