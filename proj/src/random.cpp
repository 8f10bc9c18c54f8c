#include "sharelr/random.hpp"

#include <cmath>
#include <cstring>
#include <mutex>
#include <stdexcept>
#include <vector>

#include <sodium.h>

#include "sharelr/bytes.hpp"

namespace sharelr {

void EnsureSodium() {
  static std::once_flag once;
  static bool ok = false;
  std::call_once(once, [] { ok = sodium_init() >= 0; });
  if (!ok) throw std::runtime_error("libsodium initialization failed");
}

Prng Prng::Secure() {
  EnsureSodium();
  return Prng();
}

Prng Prng::Seeded(std::uint64_t seed, std::string_view label) {
  EnsureSodium();
  ByteWriter w;
  w.U64(seed);
  w.Raw(std::span(reinterpret_cast<const std::uint8_t*>(label.data()), label.size()));
  std::array<std::uint8_t, 32> key{};
  crypto_hash_sha256(key.data(), w.bytes().data(), w.size());
  Prng p;
  p.key_ = key;
  return p;
}

Prng Prng::Derive(std::string_view label) const {
  if (!key_) return Secure();
  Bytes material(key_->begin(), key_->end());
  material.push_back(0x2f);
  material.insert(material.end(), label.begin(), label.end());
  std::array<std::uint8_t, 32> key{};
  crypto_hash_sha256(key.data(), material.data(), material.size());
  Prng p;
  p.key_ = key;
  return p;
}

void Prng::Refill() {
  if (key_) {
    static const std::array<std::uint8_t, crypto_stream_chacha20_ietf_NONCEBYTES> nonce{};
    std::memset(buffer_.data(), 0, buffer_.size());
    crypto_stream_chacha20_ietf_xor_ic(buffer_.data(), buffer_.data(), buffer_.size(),
                                       nonce.data(), block_counter_, key_->data());
    block_counter_ += static_cast<std::uint32_t>(buffer_.size() / 64);
  } else {
    randombytes_buf(buffer_.data(), buffer_.size());
  }
  used_ = 0;
}

void Prng::Fill(std::span<std::uint8_t> out) {
  std::size_t done = 0;
  while (done < out.size()) {
    if (used_ == buffer_.size()) Refill();
    std::size_t take = std::min(out.size() - done, buffer_.size() - used_);
    std::memcpy(out.data() + done, buffer_.data() + used_, take);
    used_ += take;
    done += take;
  }
}

std::uint64_t Prng::NextU64() {
  std::array<std::uint8_t, 8> b{};
  Fill(b);
  std::uint64_t v = 0;
  for (auto byte : b) v = (v << 8) | byte;
  return v;
}

mpz_class Prng::UniformBits(std::size_t bits) {
  if (bits == 0) return 0;
  std::size_t nbytes = (bits + 7) / 8;
  std::vector<std::uint8_t> buf(nbytes);
  Fill(buf);
  std::size_t excess = nbytes * 8 - bits;
  buf[0] &= static_cast<std::uint8_t>(0xFFu >> excess);
  mpz_class out;
  mpz_import(out.get_mpz_t(), nbytes, 1, 1, 1, 0, buf.data());
  return out;
}

mpz_class Prng::UniformBelow(const mpz_class& bound) {
  if (bound <= 0) throw std::invalid_argument("UniformBelow: bound must be positive");
  std::size_t bits = mpz_sizeinbase(bound.get_mpz_t(), 2);
  for (;;) {
    mpz_class candidate = UniformBits(bits);
    if (candidate < bound) return candidate;
  }
}

double Prng::UniformReal(double lo, double hi) {
  double unit = static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * unit;
}

double Prng::Gaussian() {
  if (spare_gaussian_) {
    double v = *spare_gaussian_;
    spare_gaussian_.reset();
    return v;
  }
  // Marsaglia polar method.
  double u, v, s;
  do {
    u = UniformReal(-1.0, 1.0);
    v = UniformReal(-1.0, 1.0);
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  double scale = std::sqrt(-2.0 * std::log(s) / s);
  spare_gaussian_ = v * scale;
  return u * scale;
}

}  // namespace sharelr
