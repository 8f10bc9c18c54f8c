#include "sharelr/randomness.hpp"

#include <algorithm>
#include <functional>

#include <fmt/format.h>
#include <sodium.h>

namespace sharelr {

namespace {

constexpr std::array<std::uint8_t, 4> kBundleMagic = {'S', 'L', 'R', 'B'};
constexpr std::uint8_t kBundleVersion = 1;
constexpr std::uint8_t kTagTriple = 0x01;
constexpr std::uint8_t kTagTrunc = 0x02;

}  // namespace

std::string TripleShape::ToString() const { return fmt::format("({}x{})*({}x{})", rows, inner, inner, cols); }

TruncLayout MakeTruncLayout(const FieldParams& field, int kappa) {
  if (kappa < 0) throw ConfigError("kappa must be non-negative");
  TruncLayout layout;
  layout.frac_bits = field.f;
  layout.kappa = kappa;
  layout.input_bits = static_cast<int>(field.ModulusBits()) - kappa - 3;
  layout.high_bits = layout.input_bits + 1 + kappa - field.f;
  if (layout.input_bits <= 2 * field.f) {
    throw ConfigError(fmt::format("kappa={} leaves {} bits for truncation inputs; need more than 2f={} "
                                  "(bits(q)={})",
                                  kappa, layout.input_bits, 2 * field.f, field.ModulusBits()));
  }
  return layout;
}

// --- Requirements ----------------------------------------------------------

Requirements& Requirements::operator+=(const Requirements& o) {
  for (const auto& [shape, n] : o.triples) triples[shape] += n;
  trunc_pairs += o.trunc_pairs;
  return *this;
}

Requirements Requirements::Times(std::size_t n) const {
  Requirements out;
  for (const auto& [shape, c] : triples) {
    if (c != 0 && n != 0) out.triples[shape] = c * n;
  }
  out.trunc_pairs = trunc_pairs * n;
  return out;
}

std::size_t Requirements::TotalTriples() const {
  std::size_t total = 0;
  for (const auto& [shape, n] : triples) total += n;
  return total;
}

std::string Requirements::ToString() const {
  std::string out;
  for (const auto& [shape, n] : triples) out += fmt::format("{} x{}; ", shape.ToString(), n);
  out += fmt::format("trunc pairs x{}", trunc_pairs);
  return out;
}

namespace cost {

Requirements Multiply(TripleShape shape, bool left_pending, bool right_pending) {
  Requirements r;
  r.triples[shape] = 1;
  if (left_pending) r.trunc_pairs += std::size_t{shape.rows} * shape.inner;
  if (right_pending) r.trunc_pairs += std::size_t{shape.inner} * shape.cols;
  return r;
}

Requirements Truncate(std::size_t elements) {
  Requirements r;
  r.trunc_pairs = elements;
  return r;
}

Requirements MatInv(std::size_t k, std::size_t iterations) {
  auto kk = static_cast<std::uint32_t>(k);
  TripleShape square{kk, kk, kk};
  Requirements r;
  for (std::size_t t = 0; t < iterations; ++t) {
    r += Multiply(square, false, t > 0);  // A * X_t; X_t pending after the first step
    r += Multiply(square, false, true);   // X_t * (2I - A X_t)
  }
  return r;
}

Requirements Train(std::size_t k, std::size_t iterations) {
  auto kk = static_cast<std::uint32_t>(k);
  Requirements r = MatInv(k, iterations);
  r += Multiply({kk, kk, 1}, iterations > 0, false);
  r += Truncate(k);
  return r;
}

Requirements Predict(std::size_t k) {
  auto kk = static_cast<std::uint32_t>(k);
  return Multiply({1, kk, 1}, false, false) + Truncate(1);
}

}  // namespace cost

ScenarioKind ParseScenarioKind(std::string_view name) {
  if (name == "ti-lr" || name == "TI-LR") return ScenarioKind::kTargetIndependent;
  if (name == "tc-lr" || name == "TC-LR") return ScenarioKind::kTargetCalibrated;
  throw ConfigError(fmt::format("unknown scenario kind '{}' (expected ti-lr or tc-lr)", name));
}

std::string_view ScenarioName(ScenarioKind kind) {
  return kind == ScenarioKind::kTargetIndependent ? "ti-lr" : "tc-lr";
}

std::vector<SessionPlan> PlanRequirements(const Workload& w) {
  if (w.sources < 1) throw ConfigError("workload needs at least one source party");
  if (w.columns < 1) throw ConfigError("workload needs at least one column");
  Requirements per_session = cost::Train(w.columns, w.iterations) + cost::Predict(w.columns).Times(w.inferences);
  std::vector<SessionPlan> plans;
  switch (w.kind) {
    case ScenarioKind::kTargetIndependent: {
      SessionPlan plan;
      for (std::size_t i = 1; i <= w.sources; ++i) plan.group.push_back(static_cast<PartyId>(i));
      plan.requirements = per_session;
      plans.push_back(std::move(plan));
      break;
    }
    case ScenarioKind::kTargetCalibrated: {
      auto target = static_cast<PartyId>(w.sources + 1);
      for (std::size_t i = 1; i <= w.sources; ++i) {
        plans.push_back({i, {static_cast<PartyId>(i), target}, per_session});
      }
      break;
    }
    default:
      throw ConfigError("unknown scenario kind");
  }
  return plans;
}

// --- Bundle ----------------------------------------------------------------

CorrelatedBundle::CorrelatedBundle(SessionId session, PartyId owner, std::vector<PartyId> group, FieldPtr field,
                                   int kappa)
    : session_(session), owner_(owner), group_(NormalizeGroup(group)), field_(std::move(field)), kappa_(kappa) {
  if (!std::binary_search(group_.begin(), group_.end(), owner_)) {
    throw ConfigError(fmt::format("bundle owner {} is not in its group", owner_));
  }
}

void CorrelatedBundle::AddTriple(MatMulTriple triple) {
  const auto& s = triple.shape;
  if (triple.u.rows() != s.rows || triple.u.cols() != s.inner || triple.v.rows() != s.inner ||
      triple.v.cols() != s.cols || triple.w.rows() != s.rows || triple.w.cols() != s.cols) {
    throw ConfigError("triple matrices do not match their declared shape");
  }
  triples_[s].push_back(std::move(triple));
}

void CorrelatedBundle::AddTruncPair(TruncPair pair) { trunc_.push_back(std::move(pair)); }

MatMulTriple CorrelatedBundle::NextTriple(const TripleShape& shape) {
  auto it = triples_.find(shape);
  if (it == triples_.end() || it->second.empty()) {
    throw MaterialExhausted(fmt::format("party {}: no triple of shape {} left", owner_, shape.ToString()));
  }
  MatMulTriple t = std::move(it->second.front());
  it->second.pop_front();
  consumed_.triples[shape] += 1;
  consumed_serials_.push_back(t.serial);
  return t;
}

TruncPair CorrelatedBundle::NextTruncPair() {
  if (trunc_.empty()) throw MaterialExhausted(fmt::format("party {}: truncation pairs exhausted", owner_));
  TruncPair p = std::move(trunc_.front());
  trunc_.pop_front();
  consumed_.trunc_pairs += 1;
  consumed_serials_.push_back(p.serial);
  return p;
}

TruncBatch CorrelatedBundle::NextTruncPairs(std::size_t rows, std::size_t cols) {
  std::size_t n = rows * cols;
  if (trunc_.size() < n) {
    throw MaterialExhausted(
        fmt::format("party {}: need {} truncation pairs, {} left", owner_, n, trunc_.size()));
  }
  TruncBatch batch{{}, FieldMatrix(field_, rows, cols), FieldMatrix(field_, rows, cols)};
  batch.serials.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    TruncPair p = NextTruncPair();
    batch.serials.push_back(p.serial);
    batch.r_low.SetRaw(i, p.r_low);
    batch.r_high.SetRaw(i, p.r_high);
  }
  return batch;
}

Requirements CorrelatedBundle::Remaining() const {
  Requirements r;
  for (const auto& [shape, q] : triples_) {
    if (!q.empty()) r.triples[shape] = q.size();
  }
  r.trunc_pairs = trunc_.size();
  return r;
}

void WriteFieldHeader(ByteWriter& out, const FieldParams& field) {
  out.U16(static_cast<std::uint16_t>(field.e));
  out.U16(static_cast<std::uint16_t>(field.f));
  std::size_t qbytes = field.ElementBytes();
  out.U16(static_cast<std::uint16_t>(qbytes));
  WriteElement(out, field.q, qbytes);
}

FieldPtr ReadFieldHeader(ByteReader& in) {
  int e = in.U16();
  int f = in.U16();
  std::size_t qbytes = in.U16();
  mpz_class q = ReadElement(in, qbytes);
  return MakeParamsWithModulus(e, f, q);
}

namespace {

void WriteBundleHeader(ByteWriter& out, const SessionId& session, PartyId owner, const std::vector<PartyId>& group,
                       const FieldParams& field, int kappa, std::size_t triples, std::size_t truncs) {
  out.Raw(kBundleMagic);
  out.U8(kBundleVersion);
  out.Raw(session);
  out.U16(owner);
  out.U16(static_cast<std::uint16_t>(group.size()));
  for (PartyId p : group) out.U16(p);
  WriteFieldHeader(out, field);
  out.U16(static_cast<std::uint16_t>(kappa));
  out.U16(static_cast<std::uint16_t>(field.ElementBytes()));
  out.U32(static_cast<std::uint32_t>(triples));
  out.U32(static_cast<std::uint32_t>(truncs));
}

void WriteTripleRecord(ByteWriter& out, const TripleShape& shape, std::uint64_t serial, const FieldMatrix& u,
                       const FieldMatrix& v, const FieldMatrix& w, std::size_t width) {
  std::size_t at = out.ReserveU32();
  std::size_t start = out.size();
  out.U8(kTagTriple);
  out.U64(serial);
  out.U32(shape.rows);
  out.U32(shape.inner);
  out.U32(shape.cols);
  for (const auto* m : {&u, &v, &w}) {
    for (const auto& x : m->values()) WriteElement(out, x, width);
  }
  out.PatchU32(at, static_cast<std::uint32_t>(out.size() - start));
}

void WriteTruncRecord(ByteWriter& out, std::uint64_t serial, const mpz_class& lo, const mpz_class& hi,
                      std::size_t width) {
  std::size_t at = out.ReserveU32();
  std::size_t start = out.size();
  out.U8(kTagTrunc);
  out.U64(serial);
  WriteElement(out, lo, width);
  WriteElement(out, hi, width);
  out.PatchU32(at, static_cast<std::uint32_t>(out.size() - start));
}

FieldMatrix ReadElements(ByteReader& in, const FieldPtr& field, std::size_t rows, std::size_t cols) {
  FieldMatrix m(field, rows, cols);
  std::size_t width = field->ElementBytes();
  for (std::size_t i = 0; i < rows * cols; ++i) {
    mpz_class v = ReadElement(in, width);
    if (v >= field->q) throw DecodeError("bundle element not reduced");
    m.SetRaw(i, v);
  }
  return m;
}

// Emits per-party fragments of every item in a fixed order: triples by shape
// (ascending), then trunc pairs. Serials count items in that order.
using TripleSink = std::function<void(std::size_t party, const TripleShape&, std::uint64_t, FieldMatrix&&,
                                      FieldMatrix&&, FieldMatrix&&)>;
using TruncSink = std::function<void(std::size_t party, std::uint64_t, mpz_class&&, mpz_class&&)>;

void GenerateMaterial(const Requirements& req, const std::vector<PartyId>& ids, const FieldPtr& field, int kappa,
                      Prng& rng, const TripleSink& on_triple, const TruncSink& on_trunc) {
  TruncLayout layout;
  if (req.trunc_pairs > 0) layout = MakeTruncLayout(*field, kappa);
  const std::size_t parties = ids.size();
  std::uint64_t serial = 0;

  auto uniform = [&](std::size_t r, std::size_t c) {
    FieldMatrix m(field, r, c);
    for (std::size_t i = 0; i < m.size(); ++i) m.SetRaw(i, rng.UniformBelow(field->q));
    return m;
  };

  for (const auto& [shape, count] : req.triples) {
    for (std::size_t n = 0; n < count; ++n, ++serial) {
      FieldMatrix u = uniform(shape.rows, shape.inner);
      FieldMatrix v = uniform(shape.inner, shape.cols);
      FieldMatrix w = u * v;
      auto us = Share(u, ids, rng);
      auto vs = Share(v, ids, rng);
      auto ws = Share(w, ids, rng);
      for (std::size_t p = 0; p < parties; ++p) {
        on_triple(p, shape, serial, std::move(us[p].value), std::move(vs[p].value), std::move(ws[p].value));
      }
    }
  }

  FieldMatrix pair(field, 2, 1);
  for (std::size_t n = 0; n < req.trunc_pairs; ++n, ++serial) {
    pair.SetRaw(0, rng.UniformBits(static_cast<std::size_t>(layout.frac_bits)));
    pair.SetRaw(1, rng.UniformBits(static_cast<std::size_t>(layout.high_bits)));
    auto frags = Share(pair, ids, rng);
    for (std::size_t p = 0; p < parties; ++p) {
      on_trunc(p, serial, mpz_class(frags[p].value[0]), mpz_class(frags[p].value[1]));
    }
  }
}

}  // namespace

Bytes CorrelatedBundle::Serialize() const {
  ByteWriter out;
  Requirements rem = Remaining();
  WriteBundleHeader(out, session_, owner_, group_, *field_, kappa_, rem.TotalTriples(), rem.trunc_pairs);
  std::size_t width = field_->ElementBytes();
  for (const auto& [shape, q] : triples_) {
    for (const auto& t : q) WriteTripleRecord(out, shape, t.serial, t.u, t.v, t.w, width);
  }
  for (const auto& p : trunc_) WriteTruncRecord(out, p.serial, p.r_low, p.r_high, width);
  return out.Take();
}

CorrelatedBundle CorrelatedBundle::Deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  auto magic = in.Raw(4);
  if (!std::equal(magic.begin(), magic.end(), kBundleMagic.begin())) throw DecodeError("not a bundle (bad magic)");
  if (in.U8() != kBundleVersion) throw DecodeError("unsupported bundle version");
  SessionId session{};
  auto sraw = in.Raw(16);
  std::copy(sraw.begin(), sraw.end(), session.begin());
  PartyId owner = in.U16();
  std::vector<PartyId> group(in.U16());
  for (auto& g : group) g = in.U16();
  FieldPtr field = ReadFieldHeader(in);
  int kappa = in.U16();
  std::size_t width = in.U16();
  if (width != field->ElementBytes()) throw DecodeError("bundle element width does not match q");
  std::size_t ntriples = in.U32();
  std::size_t ntrunc = in.U32();

  CorrelatedBundle bundle(session, owner, group, field, kappa);
  for (std::size_t i = 0; i < ntriples + ntrunc; ++i) {
    std::size_t len = in.U32();
    ByteReader rec(in.Raw(len));
    std::uint8_t tag = rec.U8();
    std::uint64_t serial = rec.U64();
    if (tag == kTagTriple && i < ntriples) {
      TripleShape s{rec.U32(), rec.U32(), rec.U32()};
      MatMulTriple t{s, serial, ReadElements(rec, field, s.rows, s.inner), ReadElements(rec, field, s.inner, s.cols),
                     ReadElements(rec, field, s.rows, s.cols)};
      bundle.AddTriple(std::move(t));
    } else if (tag == kTagTrunc && i >= ntriples) {
      TruncPair p{serial, ReadElement(rec, width), ReadElement(rec, width)};
      bundle.AddTruncPair(std::move(p));
    } else {
      throw DecodeError(fmt::format("unexpected bundle record tag {} at index {}", tag, i));
    }
    if (!rec.done()) throw DecodeError("bundle record has trailing bytes");
  }
  if (!in.done()) throw DecodeError("bundle has trailing bytes");
  return bundle;
}

std::array<std::uint8_t, 32> Sha256(std::span<const std::uint8_t> bytes) {
  EnsureSodium();
  std::array<std::uint8_t, 32> digest{};
  crypto_hash_sha256(digest.data(), bytes.data(), bytes.size());
  return digest;
}

std::vector<CorrelatedBundle> GenerateBundles(const Requirements& requirements, std::span<const PartyId> group,
                                              const SessionId& session, const FieldPtr& field, int kappa,
                                              Prng& rng) {
  auto members = NormalizeGroup(group);
  std::vector<CorrelatedBundle> bundles;
  for (PartyId p : members) bundles.emplace_back(session, p, members, field, kappa);
  GenerateMaterial(
      requirements, members, field, kappa, rng,
      [&](std::size_t p, const TripleShape& s, std::uint64_t serial, FieldMatrix&& u, FieldMatrix&& v,
          FieldMatrix&& w) { bundles[p].AddTriple({s, serial, std::move(u), std::move(v), std::move(w)}); },
      [&](std::size_t p, std::uint64_t serial, mpz_class&& lo, mpz_class&& hi) {
        bundles[p].AddTruncPair({serial, std::move(lo), std::move(hi)});
      });
  return bundles;
}

std::vector<Bytes> GenerateSerializedBundles(const Requirements& requirements, std::span<const PartyId> group,
                                             const SessionId& session, const FieldPtr& field, int kappa,
                                             Prng& rng) {
  auto members = NormalizeGroup(group);
  std::vector<ByteWriter> writers(members.size());
  for (std::size_t p = 0; p < members.size(); ++p) {
    WriteBundleHeader(writers[p], session, members[p], members, *field, kappa, requirements.TotalTriples(),
                      requirements.trunc_pairs);
  }
  std::size_t width = field->ElementBytes();
  GenerateMaterial(
      requirements, members, field, kappa, rng,
      [&](std::size_t p, const TripleShape& s, std::uint64_t serial, FieldMatrix&& u, FieldMatrix&& v,
          FieldMatrix&& w) { WriteTripleRecord(writers[p], s, serial, u, v, w, width); },
      [&](std::size_t p, std::uint64_t serial, mpz_class&& lo, mpz_class&& hi) {
        WriteTruncRecord(writers[p], serial, lo, hi, width);
      });
  std::vector<Bytes> out;
  out.reserve(writers.size());
  for (auto& w : writers) out.push_back(w.Take());
  return out;
}

}  // namespace sharelr
