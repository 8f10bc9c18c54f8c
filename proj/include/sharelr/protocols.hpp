#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "sharelr/randomness.hpp"
#include "sharelr/sharing.hpp"
#include "sharelr/transport/endpoint.hpp"

namespace sharelr {

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ProtocolKind : std::uint8_t {
  kOpen = 1,
  kDmm = 2,
  kTrunc = 3,
  kMatInv = 4,
  kPredict = 5,  // client-facing prediction queries; counter = query index
  kMask = 6,     // ensemble masking of target-calibrated predictions
  kSetup = 7,    // trusted initializer distribution
};

std::string_view ProtocolKindName(ProtocolKind kind);

// Instance ids carry their kind in the top byte: (kind << 56) | counter.
inline std::uint64_t MakeInstanceId(ProtocolKind kind, std::uint64_t counter) {
  return (static_cast<std::uint64_t>(kind) << 56) | (counter & ((std::uint64_t{1} << 56) - 1));
}
inline ProtocolKind InstanceKind(std::uint64_t instance) { return static_cast<ProtocolKind>(instance >> 56); }

// A round-structured protocol run. Rounds are numbered from 0 and advance
// only after the previous round's messages have all been collected.
struct ProtocolInstance {
  std::uint64_t id = 0;
  ProtocolKind kind = ProtocolKind::kOpen;
  std::uint32_t round = 0;
};

// Everything one party needs to take part in protocols of one session: the
// group, its correlated material, the transport handle and the field.
// Instances are started in program order, which every party follows
// identically, so instance ids and material consumption agree across the
// group. One context is driven by one thread.
class PartyContext {
 public:
  PartyContext(SessionId session, PartyId self, std::vector<PartyId> group, FieldPtr field, int kappa,
               CorrelatedBundle* bundle, Endpoint* endpoint, bool use_broadcast);

  const SessionId& session() const { return session_; }
  PartyId self() const { return self_; }
  const std::vector<PartyId>& group() const { return group_; }
  const std::vector<PartyId>& peers() const { return peers_; }
  bool designated() const { return self_ == group_.front(); }
  const FieldPtr& field() const { return field_; }
  const FixedPointCodec& codec() const { return codec_; }
  const TruncLayout& trunc_layout() const { return layout_; }
  CorrelatedBundle& bundle();
  Endpoint& endpoint() { return *endpoint_; }

  ProtocolInstance Begin(ProtocolKind kind);

  // One round: sends `mine` to every peer and returns the element-wise sum
  // of all fragments (own included). Every party must contribute matrices
  // of identical count and shapes.
  std::vector<FieldMatrix> ExchangeAndSum(ProtocolInstance& inst, const std::vector<FieldMatrix>& mine);

  SharedMatrix Fragment(FieldMatrix value) const { return AsFragment(self_, group_, std::move(value)); }

  // Counters for audits.
  std::uint64_t instances_started() const { return counter_; }
  std::uint64_t rounds_run() const { return rounds_; }

 private:
  SessionId session_;
  PartyId self_;
  std::vector<PartyId> group_;
  std::vector<PartyId> peers_;
  FieldPtr field_;
  FixedPointCodec codec_;
  TruncLayout layout_;
  CorrelatedBundle* bundle_;
  Endpoint* endpoint_;
  bool use_broadcast_;
  std::uint64_t counter_ = 0;
  std::uint64_t rounds_ = 0;
};

Bytes EncodeMatrices(const std::vector<FieldMatrix>& ms);
std::vector<FieldMatrix> DecodeMatrices(std::span<const std::uint8_t> payload, const FieldPtr& field);

struct OpenedValue {
  FieldMatrix value;
  std::uint64_t instance = 0;
};

// All parties learn the plaintext. One round.
OpenedValue Open(PartyContext& ctx, const SharedMatrix& x);
// Only `recipient` learns the plaintext; everyone else gets nullopt. One round.
std::optional<OpenedValue> OpenTo(PartyContext& ctx, const SharedMatrix& x, PartyId recipient);

// Raw field product of two shared matrices using one triple. One round.
SharedMatrix Dmm(PartyContext& ctx, const SharedMatrix& x, const SharedMatrix& y);

// Fixed-point rescaling of a scale-2^(2f) value to scale 2^f. The result t
// satisfies t in {floor(v / 2^f), floor(v / 2^f) + 1}. One round.
SharedMatrix Trunc(PartyContext& ctx, const SharedMatrix& x);

// A fixed-point share whose scale may still be 2^(2f), waiting for a
// truncation that the next multiplication performs in its own round.
struct FixedShare {
  SharedMatrix share;
  bool pending = false;
};

// One round of instance `inst`: the product x*y of two fixed-point shares.
// Pending operands are truncated in the same round and replaced by their
// resolved form. The returned product is pending.
FixedShare Multiply(PartyContext& ctx, ProtocolInstance& inst, FixedShare& x, FixedShare& y);

// One round of instance `inst`: truncation of a pending share.
SharedMatrix Truncate(PartyContext& ctx, ProtocolInstance& inst, const SharedMatrix& x);

// Newton-Raphson inversion X_{t+1} = X_t (2I - A X_t), X_0 = I / trace_bound,
// of a shared symmetric positive definite fixed-point matrix. Exactly
// 2 * iterations rounds; the result is left pending.
FixedShare MatInv(PartyContext& ctx, const SharedMatrix& a, double trace_bound, std::size_t iterations);

// MatInv followed by one truncation instance.
SharedMatrix InvertMatrix(PartyContext& ctx, const SharedMatrix& a, double trace_bound, std::size_t iterations);

// x*y of fixed-point shares followed by truncation; resolves a pending x
// inside the multiplication round. Two rounds in two instances (Dmm, Trunc).
SharedMatrix FixedMul(PartyContext& ctx, FixedShare x, FixedShare y);

}  // namespace sharelr
