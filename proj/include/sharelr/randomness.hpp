#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <deque>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sharelr/field.hpp"
#include "sharelr/ids.hpp"
#include "sharelr/random.hpp"
#include "sharelr/sharing.hpp"

namespace sharelr {

// The online phase asked for material the trusted initializer never issued.
// Fatal: correlated randomness is never reused.
class MaterialExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// (rows x inner) * (inner x cols)
struct TripleShape {
  std::uint32_t rows = 0;
  std::uint32_t inner = 0;
  std::uint32_t cols = 0;

  auto operator<=>(const TripleShape&) const = default;
  std::string ToString() const;
};

// One party's fragments of U, V and W = U V.
struct MatMulTriple {
  TripleShape shape;
  std::uint64_t serial = 0;
  FieldMatrix u;
  FieldMatrix v;
  FieldMatrix w;
};

// One party's fragments of a truncation mask r = 2^f * r_high + r_low with
// r_low uniform in [0, 2^f) and r_high uniform in [0, 2^high_bits).
struct TruncPair {
  std::uint64_t serial = 0;
  mpz_class r_low;
  mpz_class r_high;
};

// A block of trunc pairs laid out element-wise over a rows x cols matrix.
struct TruncBatch {
  std::vector<std::uint64_t> serials;
  FieldMatrix r_low;
  FieldMatrix r_high;
};

// Bit budget of probabilistic truncation for a field and statistical
// parameter kappa. Inputs v must satisfy |v| < 2^input_bits; the masked value
// v + 2^input_bits + r stays below 2^(input_bits + kappa + 2) < q.
struct TruncLayout {
  int frac_bits = 0;
  int kappa = 0;
  int input_bits = 0;
  int high_bits = 0;
};

inline constexpr int kDefaultKappa = 48;

// Throws ConfigError unless input_bits > 2f, i.e. unless a product of two
// encodings with magnitude >= 1 can be truncated.
TruncLayout MakeTruncLayout(const FieldParams& field, int kappa);

struct Requirements {
  std::map<TripleShape, std::size_t> triples;
  std::size_t trunc_pairs = 0;

  Requirements& operator+=(const Requirements& o);
  friend Requirements operator+(Requirements a, const Requirements& b) { return a += b; }
  Requirements Times(std::size_t n) const;
  std::size_t TotalTriples() const;
  bool operator==(const Requirements&) const = default;
  std::string ToString() const;
};

// Static cost model mirroring the protocol call graph.
namespace cost {

// One multiplication round; pending operands are truncated inside it.
Requirements Multiply(TripleShape shape, bool left_pending, bool right_pending);
Requirements Truncate(std::size_t elements);
// Newton-Raphson inversion of a k x k matrix; result is left pending.
Requirements MatInv(std::size_t k, std::size_t iterations);
// Inversion, coefficient product (absorbing the pending inverse) and final
// truncation of the k coefficients.
Requirements Train(std::size_t k, std::size_t iterations);
// One prediction: (1 x k) * (k x 1) followed by one truncation.
Requirements Predict(std::size_t k);

}  // namespace cost

enum class ScenarioKind { kTargetIndependent, kTargetCalibrated };

ScenarioKind ParseScenarioKind(std::string_view name);  // "ti-lr" | "tc-lr"
std::string_view ScenarioName(ScenarioKind kind);

// The protocol-relevant slice of a scenario.
struct Workload {
  ScenarioKind kind = ScenarioKind::kTargetIndependent;
  std::size_t sources = 2;      // m
  std::size_t columns = 1;      // k, including the intercept column
  std::size_t iterations = 32;  // Newton-Raphson steps
  std::size_t inferences = 0;   // prediction queries served
};

struct SessionPlan {
  std::size_t index = 0;  // 0 for TI-LR; i for the (p_i, target) session of TC-LR
  std::vector<PartyId> group;
  Requirements requirements;
};

// Target-independent: one session over parties 1..m. Target-calibrated: m
// two-party sessions {i, m+1}, the target being party m+1.
std::vector<SessionPlan> PlanRequirements(const Workload& workload);

// One party's share of the correlated material of one session. Triples are
// queued per shape and trunc pairs in a single queue; every party consumes in
// the same program order, so the fragments used by a given multiplication
// always belong to the same generated item. Not thread-safe: one protocol
// instance at a time.
class CorrelatedBundle {
 public:
  CorrelatedBundle(SessionId session, PartyId owner, std::vector<PartyId> group, FieldPtr field, int kappa);

  const SessionId& session() const { return session_; }
  PartyId owner() const { return owner_; }
  const std::vector<PartyId>& group() const { return group_; }
  const FieldPtr& field() const { return field_; }
  int kappa() const { return kappa_; }

  void AddTriple(MatMulTriple triple);
  void AddTruncPair(TruncPair pair);

  MatMulTriple NextTriple(const TripleShape& shape);
  TruncPair NextTruncPair();
  TruncBatch NextTruncPairs(std::size_t rows, std::size_t cols);

  Requirements Remaining() const;
  const Requirements& Consumed() const { return consumed_; }
  // Serial numbers in consumption order.
  const std::vector<std::uint64_t>& consumed_serials() const { return consumed_serials_; }

  // Wire/file format of the unconsumed material (see docs/formats.md).
  Bytes Serialize() const;
  static CorrelatedBundle Deserialize(std::span<const std::uint8_t> bytes);

 private:
  SessionId session_;
  PartyId owner_;
  std::vector<PartyId> group_;
  FieldPtr field_;
  int kappa_;
  std::map<TripleShape, std::deque<MatMulTriple>> triples_;
  std::deque<TruncPair> trunc_;
  Requirements consumed_;
  std::vector<std::uint64_t> consumed_serials_;
};

std::array<std::uint8_t, 32> Sha256(std::span<const std::uint8_t> bytes);

// Trusted-initializer generation for one session. Returns one bundle per
// group member, ordered like the normalized group.
std::vector<CorrelatedBundle> GenerateBundles(const Requirements& requirements, std::span<const PartyId> group,
                                              const SessionId& session, const FieldPtr& field, int kappa,
                                              Prng& rng);
// Same material streamed straight into the serialized form, which keeps the
// initializer's memory at one copy of the wire bytes.
std::vector<Bytes> GenerateSerializedBundles(const Requirements& requirements, std::span<const PartyId> group,
                                             const SessionId& session, const FieldPtr& field, int kappa,
                                             Prng& rng);

// Shared header pieces of the record formats.
void WriteFieldHeader(ByteWriter& out, const FieldParams& field);
FieldPtr ReadFieldHeader(ByteReader& in);

}  // namespace sharelr
