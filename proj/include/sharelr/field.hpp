#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <gmpxx.h>

#include "sharelr/bytes.hpp"

namespace sharelr {

// Operands from different fields, bad parameter choices, shape mismatches.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A real value cannot be represented by the fixed-point codec.
class RangeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Prime field F_q together with the fixed-point layout it was sized for:
// e integer bits, f fractional bits, q > 2^(e + 2f + 1).
struct FieldParams {
  int e = 0;
  int f = 0;
  mpz_class q;

  std::size_t ModulusBits() const { return mpz_sizeinbase(q.get_mpz_t(), 2); }
  // Width of the canonical big-endian element encoding.
  std::size_t ElementBytes() const { return (ModulusBits() + 7) / 8; }
  std::string Describe() const;
};

using FieldPtr = std::shared_ptr<const FieldParams>;

// Miller-Rabin with `rounds` bases drawn from a fixed-seed generator, so the
// verdict for a given n is reproducible.
bool IsProbablePrime(const mpz_class& n, int rounds = 64);
mpz_class NextPrimeAbove(const mpz_class& n);

// q = smallest prime > 2^(e + 2f + 1). Deterministic in (e, f).
FieldPtr MakeParams(int e, int f);
// Explicit modulus, validated against the same bound. Used for the small
// hand-checkable fields in tests (e.g. q = 17).
FieldPtr MakeParamsWithModulus(int e, int f, const mpz_class& q);

bool SameField(const FieldPtr& a, const FieldPtr& b);
void RequireSameField(const FieldPtr& a, const FieldPtr& b);

class FieldElement {
 public:
  FieldElement(FieldPtr field, const mpz_class& value);
  FieldElement(FieldPtr field, long value);

  const mpz_class& value() const { return value_; }
  const FieldPtr& field() const { return field_; }
  bool IsZero() const { return value_ == 0; }

  FieldElement operator+(const FieldElement& o) const;
  FieldElement operator-(const FieldElement& o) const;
  FieldElement operator*(const FieldElement& o) const;
  FieldElement operator-() const;
  FieldElement Inverse() const;

  bool operator==(const FieldElement& o) const;

  std::string ToString() const { return value_.get_str(); }

 private:
  FieldPtr field_;
  mpz_class value_;
};

// Row-major dense matrix over F_q. Entries are always reduced.
class FieldMatrix {
 public:
  FieldMatrix() = default;
  FieldMatrix(FieldPtr field, std::size_t rows, std::size_t cols);

  static FieldMatrix Identity(FieldPtr field, std::size_t n);
  // Reduces every value mod q (negative inputs welcome).
  static FieldMatrix FromValues(FieldPtr field, std::size_t rows, std::size_t cols,
                                const std::vector<mpz_class>& values);
  static FieldMatrix Scalar(const FieldElement& v);

  const FieldPtr& field() const { return field_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool SameShape(const FieldMatrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  const mpz_class& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  const mpz_class& operator[](std::size_t i) const { return data_[i]; }
  FieldElement Get(std::size_t r, std::size_t c) const { return {field_, (*this)(r, c)}; }
  void Set(std::size_t r, std::size_t c, const FieldElement& v);
  // Stores value mod q.
  void SetRaw(std::size_t i, const mpz_class& v);
  std::span<const mpz_class> values() const { return data_; }

  FieldMatrix Transposed() const;
  FieldMatrix Scaled(const mpz_class& c) const;

  FieldMatrix& operator+=(const FieldMatrix& o);
  FieldMatrix& operator-=(const FieldMatrix& o);
  friend FieldMatrix operator+(FieldMatrix a, const FieldMatrix& b) { return a += b; }
  friend FieldMatrix operator-(FieldMatrix a, const FieldMatrix& b) { return a -= b; }
  FieldMatrix operator-() const;
  // Matrix product; each entry is accumulated unreduced and reduced once.
  friend FieldMatrix operator*(const FieldMatrix& a, const FieldMatrix& b);

  bool operator==(const FieldMatrix& o) const;

 private:
  void CheckCompatible(const FieldMatrix& o, const char* op) const;

  FieldPtr field_;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<mpz_class> data_;
};

// Signed fixed-point view of F_q: x -> round(x * 2^f) mod q, with residues
// above q/2 read back as negatives.
class FixedPointCodec {
 public:
  explicit FixedPointCodec(FieldPtr field);

  const FieldPtr& field() const { return field_; }
  int frac_bits() const { return field_->f; }

  FieldElement Encode(double x) const { return EncodeScaled(x, field_->f); }
  // round(x * 2^scale_bits), round half away from zero. Throws RangeError
  // when |x| >= 2^e or x is not finite.
  FieldElement EncodeScaled(double x, int scale_bits) const;
  double Decode(const FieldElement& a) const { return DecodeScaled(a.value(), field_->f); }
  double DecodeScaled(const mpz_class& residue, int scale_bits) const;

  // Representative in (-q/2, q/2].
  mpz_class Signed(const mpz_class& residue) const;

  FieldMatrix EncodeMatrix(std::size_t rows, std::size_t cols, std::span<const double> values) const;
  std::vector<double> DecodeMatrix(const FieldMatrix& m, int scale_bits) const;
  std::vector<double> DecodeMatrix(const FieldMatrix& m) const { return DecodeMatrix(m, field_->f); }

 private:
  FieldPtr field_;
  mpz_class half_q_;
  double max_magnitude_;
};

// Canonical wire form: fixed-width big-endian unsigned, ElementBytes() wide.
void WriteElement(ByteWriter& out, const mpz_class& v, std::size_t width);
mpz_class ReadElement(ByteReader& in, std::size_t width);

// u32 rows, u32 cols, then rows*cols elements.
void WriteMatrix(ByteWriter& out, const FieldMatrix& m);
FieldMatrix ReadMatrix(ByteReader& in, const FieldPtr& field);

}  // namespace sharelr
