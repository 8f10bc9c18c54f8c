#include "sharelr/transport/crypto.hpp"

#include <fmt/format.h>
#include <sodium.h>

#include "sharelr/random.hpp"

namespace sharelr {

PairwiseCrypto::PairwiseCrypto() {
  EnsureSodium();
  crypto_box_keypair(public_.data(), secret_.data());
}

PairwiseCrypto::~PairwiseCrypto() {
  sodium_memzero(secret_.data(), secret_.size());
  for (auto& [peer, key] : shared_) sodium_memzero(key.data(), key.size());
}

void PairwiseCrypto::AddPeer(PartyId peer, const PublicKey& key) {
  std::array<std::uint8_t, 32> shared{};
  if (crypto_box_beforenm(shared.data(), key.data(), secret_.data()) != 0) {
    throw DecodeError(fmt::format("unusable public key announced for party {}", peer));
  }
  std::lock_guard lock(mu_);
  shared_[peer] = shared;
}

bool PairwiseCrypto::HasPeer(PartyId peer) const {
  std::lock_guard lock(mu_);
  return shared_.count(peer) > 0;
}

const std::array<std::uint8_t, 32>& PairwiseCrypto::SharedKey(PartyId peer) const {
  std::lock_guard lock(mu_);
  auto it = shared_.find(peer);
  if (it == shared_.end()) throw DecodeError(fmt::format("no key for party {}", peer));
  return it->second;
}

Bytes PairwiseCrypto::Seal(PartyId peer, std::span<const std::uint8_t> plaintext) const {
  const auto& key = SharedKey(peer);
  Bytes out(crypto_box_NONCEBYTES + crypto_box_MACBYTES + plaintext.size());
  randombytes_buf(out.data(), crypto_box_NONCEBYTES);
  crypto_box_easy_afternm(out.data() + crypto_box_NONCEBYTES, plaintext.data(), plaintext.size(), out.data(),
                          key.data());
  return out;
}

Bytes PairwiseCrypto::Open(PartyId peer, std::span<const std::uint8_t> sealed) const {
  if (sealed.size() < crypto_box_NONCEBYTES + crypto_box_MACBYTES) throw DecodeError("sealed payload too short");
  const auto& key = SharedKey(peer);
  Bytes out(sealed.size() - crypto_box_NONCEBYTES - crypto_box_MACBYTES);
  if (crypto_box_open_easy_afternm(out.data(), sealed.data() + crypto_box_NONCEBYTES,
                                   sealed.size() - crypto_box_NONCEBYTES, sealed.data(), key.data()) != 0) {
    throw DecodeError(fmt::format("payload from party {} failed authentication", peer));
  }
  return out;
}

}  // namespace sharelr
