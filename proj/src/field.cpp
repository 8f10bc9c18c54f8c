#include "sharelr/field.hpp"

#include <array>
#include <cmath>

#include <fmt/format.h>

namespace sharelr {

namespace {

constexpr std::array<unsigned, 25> kSmallPrimes = {2,  3,  5,  7,  11, 13, 17, 19, 23,
                                                    29, 31, 37, 41, 43, 47, 53, 59, 61,
                                                    67, 71, 73, 79, 83, 89, 97};

}  // namespace

std::string FieldParams::Describe() const {
  return fmt::format("e={} f={} bits(q)={} q={}", e, f, ModulusBits(), q.get_str());
}

bool IsProbablePrime(const mpz_class& n, int rounds) {
  if (n < 2) return false;
  for (unsigned p : kSmallPrimes) {
    if (n == p) return true;
    if (mpz_divisible_ui_p(n.get_mpz_t(), p)) return false;
  }
  mpz_class n_minus_1 = n - 1;
  mpz_class d = n_minus_1;
  unsigned long s = mpz_scan1(d.get_mpz_t(), 0);
  mpz_fdiv_q_2exp(d.get_mpz_t(), d.get_mpz_t(), s);

  gmp_randclass bases(gmp_randinit_default);
  bases.seed(0x5eedULL);
  mpz_class span = n - 3;
  mpz_class x;
  for (int i = 0; i < rounds; ++i) {
    mpz_class a = bases.get_z_range(span) + 2;
    mpz_powm(x.get_mpz_t(), a.get_mpz_t(), d.get_mpz_t(), n.get_mpz_t());
    if (x == 1 || x == n_minus_1) continue;
    bool witness = true;
    for (unsigned long r = 1; r < s; ++r) {
      mpz_powm_ui(x.get_mpz_t(), x.get_mpz_t(), 2, n.get_mpz_t());
      if (x == n_minus_1) {
        witness = false;
        break;
      }
    }
    if (witness) return false;
  }
  return true;
}

mpz_class NextPrimeAbove(const mpz_class& n) {
  mpz_class c = n + 1;
  if (c <= 2) return 2;
  if (mpz_even_p(c.get_mpz_t())) c += 1;
  while (!IsProbablePrime(c)) c += 2;
  return c;
}

FieldPtr MakeParams(int e, int f) {
  if (e < 1 || f < 1) throw ConfigError(fmt::format("field params need e >= 1 and f >= 1 (got e={} f={})", e, f));
  mpz_class bound;
  mpz_ui_pow_ui(bound.get_mpz_t(), 2, static_cast<unsigned long>(e + 2 * f + 1));
  auto p = std::make_shared<FieldParams>();
  p->e = e;
  p->f = f;
  p->q = NextPrimeAbove(bound);
  return p;
}

FieldPtr MakeParamsWithModulus(int e, int f, const mpz_class& q) {
  if (e < 1 || f < 1) throw ConfigError(fmt::format("field params need e >= 1 and f >= 1 (got e={} f={})", e, f));
  mpz_class bound;
  mpz_ui_pow_ui(bound.get_mpz_t(), 2, static_cast<unsigned long>(e + 2 * f + 1));
  if (q <= bound) {
    throw ConfigError(fmt::format("modulus {} does not exceed 2^{}", q.get_str(), e + 2 * f + 1));
  }
  if (!IsProbablePrime(q)) throw ConfigError(fmt::format("modulus {} is not prime", q.get_str()));
  auto p = std::make_shared<FieldParams>();
  p->e = e;
  p->f = f;
  p->q = q;
  return p;
}

bool SameField(const FieldPtr& a, const FieldPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  return a->q == b->q && a->e == b->e && a->f == b->f;
}

void RequireSameField(const FieldPtr& a, const FieldPtr& b) {
  if (!SameField(a, b)) throw ConfigError("operands belong to different fields");
}

// ---------------------------------------------------------------------------

FieldElement::FieldElement(FieldPtr field, const mpz_class& value) : field_(std::move(field)) {
  if (!field_) throw ConfigError("field element without field");
  mpz_mod(value_.get_mpz_t(), value.get_mpz_t(), field_->q.get_mpz_t());
}

FieldElement::FieldElement(FieldPtr field, long value) : FieldElement(std::move(field), mpz_class(value)) {}

FieldElement FieldElement::operator+(const FieldElement& o) const {
  RequireSameField(field_, o.field_);
  return {field_, value_ + o.value_};
}

FieldElement FieldElement::operator-(const FieldElement& o) const {
  RequireSameField(field_, o.field_);
  return {field_, value_ - o.value_};
}

FieldElement FieldElement::operator*(const FieldElement& o) const {
  RequireSameField(field_, o.field_);
  return {field_, value_ * o.value_};
}

FieldElement FieldElement::operator-() const { return {field_, -value_}; }

FieldElement FieldElement::Inverse() const {
  mpz_class inv;
  if (mpz_invert(inv.get_mpz_t(), value_.get_mpz_t(), field_->q.get_mpz_t()) == 0) {
    throw std::domain_error("zero has no inverse");
  }
  return {field_, inv};
}

bool FieldElement::operator==(const FieldElement& o) const {
  return SameField(field_, o.field_) && value_ == o.value_;
}

// ---------------------------------------------------------------------------

FieldMatrix::FieldMatrix(FieldPtr field, std::size_t rows, std::size_t cols)
    : field_(std::move(field)), rows_(rows), cols_(cols), data_(rows * cols) {
  if (!field_) throw ConfigError("matrix without field");
}

FieldMatrix FieldMatrix::Identity(FieldPtr field, std::size_t n) {
  FieldMatrix m(std::move(field), n, n);
  for (std::size_t i = 0; i < n; ++i) m.data_[i * n + i] = 1;
  return m;
}

FieldMatrix FieldMatrix::FromValues(FieldPtr field, std::size_t rows, std::size_t cols,
                                    const std::vector<mpz_class>& values) {
  if (values.size() != rows * cols) {
    throw ConfigError(fmt::format("FromValues: {} values for a {}x{} matrix", values.size(), rows, cols));
  }
  FieldMatrix m(std::move(field), rows, cols);
  for (std::size_t i = 0; i < values.size(); ++i) m.SetRaw(i, values[i]);
  return m;
}

FieldMatrix FieldMatrix::Scalar(const FieldElement& v) {
  FieldMatrix m(v.field(), 1, 1);
  m.data_[0] = v.value();
  return m;
}

void FieldMatrix::Set(std::size_t r, std::size_t c, const FieldElement& v) {
  RequireSameField(field_, v.field());
  data_[r * cols_ + c] = v.value();
}

void FieldMatrix::SetRaw(std::size_t i, const mpz_class& v) {
  mpz_mod(data_[i].get_mpz_t(), v.get_mpz_t(), field_->q.get_mpz_t());
}

FieldMatrix FieldMatrix::Transposed() const {
  FieldMatrix t(field_, cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t.data_[c * rows_ + r] = data_[r * cols_ + c];
  return t;
}

FieldMatrix FieldMatrix::Scaled(const mpz_class& c) const {
  FieldMatrix out(field_, rows_, cols_);
  mpz_class cr;
  mpz_mod(cr.get_mpz_t(), c.get_mpz_t(), field_->q.get_mpz_t());
  for (std::size_t i = 0; i < data_.size(); ++i) {
    mpz_mul(out.data_[i].get_mpz_t(), data_[i].get_mpz_t(), cr.get_mpz_t());
    mpz_mod(out.data_[i].get_mpz_t(), out.data_[i].get_mpz_t(), field_->q.get_mpz_t());
  }
  return out;
}

void FieldMatrix::CheckCompatible(const FieldMatrix& o, const char* op) const {
  RequireSameField(field_, o.field_);
  if (!SameShape(o)) {
    throw ConfigError(fmt::format("{}: shape mismatch {}x{} vs {}x{}", op, rows_, cols_, o.rows_, o.cols_));
  }
}

FieldMatrix& FieldMatrix::operator+=(const FieldMatrix& o) {
  CheckCompatible(o, "add");
  const mpz_class& q = field_->q;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    data_[i] += o.data_[i];
    if (data_[i] >= q) data_[i] -= q;
  }
  return *this;
}

FieldMatrix& FieldMatrix::operator-=(const FieldMatrix& o) {
  CheckCompatible(o, "sub");
  const mpz_class& q = field_->q;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    data_[i] -= o.data_[i];
    if (data_[i] < 0) data_[i] += q;
  }
  return *this;
}

FieldMatrix FieldMatrix::operator-() const {
  FieldMatrix out(field_, rows_, cols_);
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (data_[i] != 0) out.data_[i] = field_->q - data_[i];
  }
  return out;
}

FieldMatrix operator*(const FieldMatrix& a, const FieldMatrix& b) {
  RequireSameField(a.field_, b.field_);
  if (a.cols_ != b.rows_) {
    throw ConfigError(fmt::format("matmul: inner dimensions differ ({}x{} * {}x{})", a.rows_, a.cols_,
                                  b.rows_, b.cols_));
  }
  FieldMatrix out(a.field_, a.rows_, b.cols_);
  const mpz_srcptr q = a.field_->q.get_mpz_t();
  mpz_class acc;
  for (std::size_t i = 0; i < a.rows_; ++i) {
    for (std::size_t j = 0; j < b.cols_; ++j) {
      acc = 0;
      for (std::size_t t = 0; t < a.cols_; ++t) {
        mpz_addmul(acc.get_mpz_t(), a.data_[i * a.cols_ + t].get_mpz_t(),
                   b.data_[t * b.cols_ + j].get_mpz_t());
      }
      mpz_mod(out.data_[i * out.cols_ + j].get_mpz_t(), acc.get_mpz_t(), q);
    }
  }
  return out;
}

bool FieldMatrix::operator==(const FieldMatrix& o) const {
  return SameField(field_, o.field_) && SameShape(o) && data_ == o.data_;
}

// ---------------------------------------------------------------------------

FixedPointCodec::FixedPointCodec(FieldPtr field) : field_(std::move(field)) {
  if (!field_) throw ConfigError("codec without field");
  half_q_ = field_->q / 2;
  max_magnitude_ = std::ldexp(1.0, field_->e);
}

FieldElement FixedPointCodec::EncodeScaled(double x, int scale_bits) const {
  if (!std::isfinite(x)) throw RangeError("cannot encode a non-finite value");
  if (std::fabs(x) >= max_magnitude_) {
    throw RangeError(fmt::format("|{}| is not below 2^{}", x, field_->e));
  }
  double scaled = std::round(std::ldexp(x, scale_bits));
  mpz_class v;
  mpz_set_d(v.get_mpz_t(), scaled);
  return {field_, v};
}

mpz_class FixedPointCodec::Signed(const mpz_class& residue) const {
  if (residue > half_q_) return residue - field_->q;
  return residue;
}

double FixedPointCodec::DecodeScaled(const mpz_class& residue, int scale_bits) const {
  mpz_class s = Signed(residue);
  long exp = 0;
  double mant = mpz_get_d_2exp(&exp, s.get_mpz_t());
  return std::ldexp(mant, static_cast<int>(exp) - scale_bits);
}

FieldMatrix FixedPointCodec::EncodeMatrix(std::size_t rows, std::size_t cols,
                                          std::span<const double> values) const {
  if (values.size() != rows * cols) throw ConfigError("EncodeMatrix: value count does not match shape");
  FieldMatrix m(field_, rows, cols);
  for (std::size_t i = 0; i < values.size(); ++i) m.SetRaw(i, Encode(values[i]).value());
  return m;
}

std::vector<double> FixedPointCodec::DecodeMatrix(const FieldMatrix& m, int scale_bits) const {
  RequireSameField(field_, m.field());
  std::vector<double> out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = DecodeScaled(m[i], scale_bits);
  return out;
}

// ---------------------------------------------------------------------------

void WriteElement(ByteWriter& out, const mpz_class& v, std::size_t width) {
  std::size_t needed = (mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8;
  if (v < 0 || (v != 0 && needed > width)) throw ConfigError("element does not fit the wire width");
  std::vector<std::uint8_t> buf(width, 0);
  if (v != 0) {
    std::size_t count = 0;
    mpz_export(buf.data() + (width - needed), &count, 1, 1, 1, 0, v.get_mpz_t());
  }
  out.Raw(buf);
}

mpz_class ReadElement(ByteReader& in, std::size_t width) {
  auto raw = in.Raw(width);
  mpz_class v;
  mpz_import(v.get_mpz_t(), width, 1, 1, 1, 0, raw.data());
  return v;
}

void WriteMatrix(ByteWriter& out, const FieldMatrix& m) {
  out.U32(static_cast<std::uint32_t>(m.rows()));
  out.U32(static_cast<std::uint32_t>(m.cols()));
  std::size_t width = m.field()->ElementBytes();
  for (const auto& v : m.values()) WriteElement(out, v, width);
}

FieldMatrix ReadMatrix(ByteReader& in, const FieldPtr& field) {
  std::size_t rows = in.U32();
  std::size_t cols = in.U32();
  std::size_t width = field->ElementBytes();
  if (rows != 0 && cols != 0 && in.remaining() / width / cols < rows) {
    throw DecodeError(fmt::format("matrix {}x{} exceeds remaining payload", rows, cols));
  }
  FieldMatrix m(field, rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) {
    mpz_class v = ReadElement(in, width);
    if (v >= field->q) throw DecodeError("element not reduced modulo q");
    m.SetRaw(i, v);
  }
  return m;
}

}  // namespace sharelr
