#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

#include <gmpxx.h>

namespace sharelr {

// Calls sodium_init() exactly once; throws if libsodium cannot initialize.
void EnsureSodium();

// Byte stream used for every random draw in the system. Secure() reads the
// OS CSPRNG; Seeded() is a ChaCha20 keystream so tests and reproducible runs
// can replay identical transcripts.
class Prng {
 public:
  static Prng Secure();
  static Prng Seeded(std::uint64_t seed, std::string_view label = {});

  Prng(Prng&&) noexcept = default;
  Prng& operator=(Prng&&) noexcept = default;
  Prng(const Prng&) = delete;
  Prng& operator=(const Prng&) = delete;

  bool seeded() const { return key_.has_value(); }

  // Independent child stream. For a seeded generator the child is a pure
  // function of (key, label); for a secure one it is a fresh secure stream.
  Prng Derive(std::string_view label) const;

  void Fill(std::span<std::uint8_t> out);
  std::uint64_t NextU64();

  // Uniform in [0, bound) by rejection sampling.
  mpz_class UniformBelow(const mpz_class& bound);
  // Uniform in [0, 2^bits).
  mpz_class UniformBits(std::size_t bits);

  double UniformReal(double lo, double hi);
  double Gaussian();

 private:
  Prng() = default;
  void Refill();

  std::optional<std::array<std::uint8_t, 32>> key_;
  std::uint32_t block_counter_ = 0;
  std::array<std::uint8_t, 4096> buffer_{};
  std::size_t used_ = 4096;
  std::optional<double> spare_gaussian_;
};

}  // namespace sharelr
