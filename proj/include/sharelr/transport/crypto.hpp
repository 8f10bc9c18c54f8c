#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <mutex>
#include <span>

#include "sharelr/bytes.hpp"
#include "sharelr/ids.hpp"

namespace sharelr {

using PublicKey = std::array<std::uint8_t, 32>;

// Pairwise authenticated encryption for addressed payloads relayed by the
// broadcast agent: X25519 key agreement with XSalsa20-Poly1305 (libsodium
// crypto_box), one precomputed key per peer. Sealed form: nonce[24] || box.
class PairwiseCrypto {
 public:
  PairwiseCrypto();
  ~PairwiseCrypto();
  PairwiseCrypto(const PairwiseCrypto&) = delete;
  PairwiseCrypto& operator=(const PairwiseCrypto&) = delete;

  const PublicKey& public_key() const { return public_; }

  void AddPeer(PartyId peer, const PublicKey& key);
  bool HasPeer(PartyId peer) const;

  Bytes Seal(PartyId peer, std::span<const std::uint8_t> plaintext) const;
  // Throws DecodeError when authentication fails.
  Bytes Open(PartyId peer, std::span<const std::uint8_t> sealed) const;

 private:
  const std::array<std::uint8_t, 32>& SharedKey(PartyId peer) const;

  PublicKey public_{};
  std::array<std::uint8_t, 32> secret_{};
  mutable std::mutex mu_;
  std::map<PartyId, std::array<std::uint8_t, 32>> shared_;
};

}  // namespace sharelr
