#include "sharelr/protocols.hpp"

#include <fmt/format.h>

namespace sharelr {

std::string_view ProtocolKindName(ProtocolKind kind) {
  switch (kind) {
    case ProtocolKind::kOpen: return "open";
    case ProtocolKind::kDmm: return "dmm";
    case ProtocolKind::kTrunc: return "trunc";
    case ProtocolKind::kMatInv: return "matinv";
    case ProtocolKind::kPredict: return "predict";
    case ProtocolKind::kMask: return "mask";
    case ProtocolKind::kSetup: return "setup";
  }
  return "unknown";
}

// --- payloads --------------------------------------------------------------

Bytes EncodeMatrices(const std::vector<FieldMatrix>& ms) {
  ByteWriter w;
  w.U16(static_cast<std::uint16_t>(ms.size()));
  for (const auto& m : ms) WriteMatrix(w, m);
  return w.Take();
}

std::vector<FieldMatrix> DecodeMatrices(std::span<const std::uint8_t> payload, const FieldPtr& field) {
  ByteReader r(payload);
  std::vector<FieldMatrix> out(r.U16());
  for (auto& m : out) m = ReadMatrix(r, field);
  if (!r.done()) throw DecodeError("trailing bytes after matrices");
  return out;
}

// --- context ---------------------------------------------------------------

PartyContext::PartyContext(SessionId session, PartyId self, std::vector<PartyId> group, FieldPtr field, int kappa,
                           CorrelatedBundle* bundle, Endpoint* endpoint, bool use_broadcast)
    : session_(session),
      self_(self),
      group_(NormalizeGroup(group)),
      field_(field),
      codec_(field),
      layout_(),
      bundle_(bundle),
      endpoint_(endpoint),
      use_broadcast_(use_broadcast) {
  if (!std::binary_search(group_.begin(), group_.end(), self_)) {
    throw ProtocolError(fmt::format("party {} is not in the session group", self_));
  }
  for (PartyId p : group_) {
    if (p != self_) peers_.push_back(p);
  }
  if (bundle_) {
    RequireSameField(bundle_->field(), field_);
    if (bundle_->session() != session_ || bundle_->owner() != self_ || bundle_->group() != group_) {
      throw ProtocolError("correlated bundle belongs to another session, party or group");
    }
    kappa = bundle_->kappa();
  }
  if (field_->ModulusBits() > static_cast<std::size_t>(kappa) + 3 + 2 * field_->f) {
    layout_ = MakeTruncLayout(*field_, kappa);
  }
}

CorrelatedBundle& PartyContext::bundle() {
  if (!bundle_) throw MaterialExhausted(fmt::format("party {} holds no correlated material", self_));
  return *bundle_;
}

ProtocolInstance PartyContext::Begin(ProtocolKind kind) {
  return ProtocolInstance{MakeInstanceId(kind, ++counter_), kind, 0};
}

std::vector<FieldMatrix> PartyContext::ExchangeAndSum(ProtocolInstance& inst, const std::vector<FieldMatrix>& mine) {
  Bytes payload = EncodeMatrices(mine);
  if (!peers_.empty()) {
    if (use_broadcast_) {
      endpoint_->Send(session_, inst.id, inst.round, kBroadcast, PayloadKind::kShares, payload);
    } else {
      for (PartyId p : peers_) endpoint_->Send(session_, inst.id, inst.round, p, PayloadKind::kShares, payload);
    }
  }
  std::vector<FieldMatrix> sum = mine;
  if (!peers_.empty()) {
    auto got = endpoint_->RecvRound(session_, inst.id, inst.round, peers_);
    for (auto& [sender, env] : got) {
      auto theirs = DecodeMatrices(env.payload, field_);
      if (theirs.size() != sum.size()) {
        throw ProtocolError(fmt::format("party {} sent {} matrices in instance {:#x} round {}, expected {}", sender,
                                        theirs.size(), inst.id, inst.round, sum.size()));
      }
      for (std::size_t i = 0; i < sum.size(); ++i) {
        if (!theirs[i].SameShape(sum[i])) {
          throw ProtocolError(fmt::format("party {} sent a {}x{} fragment, expected {}x{}", sender, theirs[i].rows(),
                                          theirs[i].cols(), sum[i].rows(), sum[i].cols()));
        }
        sum[i] += theirs[i];
      }
    }
  }
  ++inst.round;
  ++rounds_;
  return sum;
}

// --- helpers ---------------------------------------------------------------

namespace {

void CheckMember(const PartyContext& ctx, const SharedMatrix& x, const char* op) {
  if (x.owner != ctx.self() || x.group != ctx.group()) {
    throw ProtocolError(fmt::format("{}: fragment does not belong to party {} of this session", op, ctx.self()));
  }
  RequireSameField(x.field(), ctx.field());
}

mpz_class InversePow2(const FieldParams& f, int bits) {
  mpz_class p = mpz_class(1) << bits, inv;
  mpz_invert(inv.get_mpz_t(), p.get_mpz_t(), f.q.get_mpz_t());
  return inv;
}

// Masking half of a truncation: the fragment of c = v + 2^l + 2^f r_high + r_low
// to be opened, and this party's fragment of (v + r_low) / 2^f.
struct TruncMask {
  FieldMatrix c;
  FieldMatrix lin;
};

TruncMask MaskForTrunc(PartyContext& ctx, const FieldMatrix& v) {
  const auto& f = *ctx.field();
  if (ctx.trunc_layout().input_bits == 0) {
    throw ConfigError(fmt::format("field {} is too small to truncate", f.Describe()));
  }
  TruncBatch batch = ctx.bundle().NextTruncPairs(v.rows(), v.cols());
  mpz_class two_f = mpz_class(1) << f.f;
  mpz_class bias = mpz_class(1) << ctx.trunc_layout().input_bits;
  mpz_class inv = InversePow2(f, f.f);
  TruncMask m{FieldMatrix(ctx.field(), v.rows(), v.cols()), FieldMatrix(ctx.field(), v.rows(), v.cols())};
  for (std::size_t i = 0; i < v.size(); ++i) {
    mpz_class c = v[i] + batch.r_high[i] * two_f + batch.r_low[i];
    if (ctx.designated()) c += bias;
    m.c.SetRaw(i, c);
    m.lin.SetRaw(i, (v[i] + batch.r_low[i]) * inv);
  }
  return m;
}

// Public correction c' / 2^f from the opened masked value.
FieldMatrix TruncCorrection(PartyContext& ctx, const FieldMatrix& opened) {
  const auto& f = *ctx.field();
  mpz_class inv = InversePow2(f, f.f);
  FieldMatrix corr(ctx.field(), opened.rows(), opened.cols());
  mpz_class low;
  for (std::size_t i = 0; i < opened.size(); ++i) {
    mpz_fdiv_r_2exp(low.get_mpz_t(), opened[i].get_mpz_t(), static_cast<mp_bitcnt_t>(f.f));
    corr.SetRaw(i, low * inv);
  }
  return corr;
}

}  // namespace

// --- open ------------------------------------------------------------------

OpenedValue Open(PartyContext& ctx, const SharedMatrix& x) {
  CheckMember(ctx, x, "open");
  auto inst = ctx.Begin(ProtocolKind::kOpen);
  auto sum = ctx.ExchangeAndSum(inst, {x.value});
  return {std::move(sum[0]), inst.id};
}

std::optional<OpenedValue> OpenTo(PartyContext& ctx, const SharedMatrix& x, PartyId recipient) {
  CheckMember(ctx, x, "open_to");
  if (!std::binary_search(ctx.group().begin(), ctx.group().end(), recipient)) {
    throw ProtocolError(fmt::format("open_to: party {} is not in the group", recipient));
  }
  auto inst = ctx.Begin(ProtocolKind::kOpen);
  if (ctx.self() != recipient) {
    ctx.endpoint().Send(ctx.session(), inst.id, inst.round, recipient, PayloadKind::kShares,
                        EncodeMatrices({x.value}));
    return std::nullopt;
  }
  FieldMatrix sum = x.value;
  auto got = ctx.endpoint().RecvRound(ctx.session(), inst.id, inst.round, ctx.peers());
  for (auto& [sender, env] : got) {
    auto theirs = DecodeMatrices(env.payload, ctx.field());
    if (theirs.size() != 1 || !theirs[0].SameShape(sum)) {
      throw ProtocolError(fmt::format("open_to: malformed fragment from party {}", sender));
    }
    sum += theirs[0];
  }
  return OpenedValue{std::move(sum), inst.id};
}

// --- multiplication --------------------------------------------------------

FixedShare Multiply(PartyContext& ctx, ProtocolInstance& inst, FixedShare& x, FixedShare& y) {
  CheckMember(ctx, x.share, "multiply");
  CheckMember(ctx, y.share, "multiply");
  if (x.share.cols() != y.share.rows()) {
    throw ConfigError(fmt::format("multiply: inner dimensions differ ({}x{} * {}x{})", x.share.rows(),
                                  x.share.cols(), y.share.rows(), y.share.cols()));
  }
  TripleShape shape{static_cast<std::uint32_t>(x.share.rows()), static_cast<std::uint32_t>(x.share.cols()),
                    static_cast<std::uint32_t>(y.share.cols())};

  std::optional<TruncMask> mx, my;
  if (x.pending) mx = MaskForTrunc(ctx, x.share.value);
  if (y.pending) my = MaskForTrunc(ctx, y.share.value);
  MatMulTriple t = ctx.bundle().NextTriple(shape);

  std::vector<FieldMatrix> out;
  out.push_back((mx ? mx->lin : x.share.value) - t.u);
  out.push_back((my ? my->lin : y.share.value) - t.v);
  if (mx) out.push_back(mx->c);
  if (my) out.push_back(my->c);
  auto sums = ctx.ExchangeAndSum(inst, out);

  FieldMatrix d = std::move(sums[0]);
  FieldMatrix e = std::move(sums[1]);
  std::size_t next = 2;
  if (mx) {
    FieldMatrix corr = TruncCorrection(ctx, sums[next++]);
    d -= corr;
    x.share.value = ctx.designated() ? mx->lin - corr : mx->lin;
    x.pending = false;
  }
  if (my) {
    FieldMatrix corr = TruncCorrection(ctx, sums[next++]);
    e -= corr;
    y.share.value = ctx.designated() ? my->lin - corr : my->lin;
    y.pending = false;
  }

  FieldMatrix z = t.w + d * t.v + t.u * e;
  if (ctx.designated()) z += d * e;
  return FixedShare{ctx.Fragment(std::move(z)), true};
}

SharedMatrix Truncate(PartyContext& ctx, ProtocolInstance& inst, const SharedMatrix& x) {
  CheckMember(ctx, x, "trunc");
  TruncMask m = MaskForTrunc(ctx, x.value);
  auto sums = ctx.ExchangeAndSum(inst, {m.c});
  FieldMatrix corr = TruncCorrection(ctx, sums[0]);
  return ctx.Fragment(ctx.designated() ? m.lin - corr : std::move(m.lin));
}

SharedMatrix Dmm(PartyContext& ctx, const SharedMatrix& x, const SharedMatrix& y) {
  auto inst = ctx.Begin(ProtocolKind::kDmm);
  FixedShare a{x, false}, b{y, false};
  return Multiply(ctx, inst, a, b).share;
}

SharedMatrix Trunc(PartyContext& ctx, const SharedMatrix& x) {
  auto inst = ctx.Begin(ProtocolKind::kTrunc);
  return Truncate(ctx, inst, x);
}

SharedMatrix FixedMul(PartyContext& ctx, FixedShare x, FixedShare y) {
  auto inst = ctx.Begin(ProtocolKind::kDmm);
  FixedShare z = Multiply(ctx, inst, x, y);
  return Trunc(ctx, z.share);
}

// --- inversion -------------------------------------------------------------

FixedShare MatInv(PartyContext& ctx, const SharedMatrix& a, double trace_bound, std::size_t iterations) {
  CheckMember(ctx, a, "matinv");
  if (a.rows() != a.cols()) throw ConfigError(fmt::format("matinv: {}x{} is not square", a.rows(), a.cols()));
  if (!(trace_bound > 0)) throw ConfigError("matinv: trace_bound must be positive");
  if (iterations < 1) throw ConfigError("matinv: needs at least one iteration");
  const std::size_t k = a.rows();
  const auto& field = ctx.field();

  FieldMatrix x0(field, k, k);
  if (ctx.designated()) {
    FieldElement diag = ctx.codec().Encode(1.0 / trace_bound);
    for (std::size_t i = 0; i < k; ++i) x0.Set(i, i, diag);
  }
  FieldMatrix two_i = FieldMatrix::Identity(field, k).Scaled(mpz_class(2) << (2 * field->f));

  auto inst = ctx.Begin(ProtocolKind::kMatInv);
  FixedShare A{a, false};
  FixedShare X{ctx.Fragment(std::move(x0)), false};
  for (std::size_t t = 0; t < iterations; ++t) {
    FixedShare P = Multiply(ctx, inst, A, X);
    FixedShare E{LocalAddPublic(LocalScale(mpz_class(-1), P.share), two_i), true};
    X = Multiply(ctx, inst, X, E);
  }
  return X;
}

SharedMatrix InvertMatrix(PartyContext& ctx, const SharedMatrix& a, double trace_bound, std::size_t iterations) {
  FixedShare x = MatInv(ctx, a, trace_bound, iterations);
  return Trunc(ctx, x.share);
}

}  // namespace sharelr
