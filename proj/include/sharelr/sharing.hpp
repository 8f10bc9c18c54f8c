#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "sharelr/field.hpp"
#include "sharelr/ids.hpp"
#include "sharelr/random.hpp"

namespace sharelr {

class SharingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One party's additive fragment of a jointly held matrix. All fragments of a
// value share the same group and shape, and sum to the plaintext mod q.
struct SharedMatrix {
  PartyId owner = 0;
  std::vector<PartyId> group;  // ascending, unique
  FieldMatrix value;

  std::size_t rows() const { return value.rows(); }
  std::size_t cols() const { return value.cols(); }
  const FieldPtr& field() const { return value.field(); }
};

// Sorted, de-duplicated copy; throws on an empty list or duplicates.
std::vector<PartyId> NormalizeGroup(std::span<const PartyId> group);

// The party that absorbs public constants: the lowest id in the group.
inline PartyId DesignatedParty(std::span<const PartyId> group) { return group.front(); }
inline bool IsDesignated(const SharedMatrix& s) { return s.owner == s.group.front(); }

// First m-1 fragments uniform, last = secret - sum(others). A one-party
// group gets the secret itself.
std::vector<SharedMatrix> Share(const FieldMatrix& secret, std::span<const PartyId> group, Prng& rng);

// Requires exactly one fragment per group member, all the same shape.
FieldMatrix Reconstruct(std::span<const SharedMatrix> fragments);

// Wraps a locally held matrix as this party's fragment.
SharedMatrix AsFragment(PartyId owner, std::span<const PartyId> group, FieldMatrix value);

SharedMatrix LocalAdd(const SharedMatrix& a, const SharedMatrix& b);
SharedMatrix LocalSub(const SharedMatrix& a, const SharedMatrix& b);
SharedMatrix LocalScale(const FieldElement& c, const SharedMatrix& a);
SharedMatrix LocalScale(const mpz_class& c, const SharedMatrix& a);
// a + C; only the designated party's fragment changes.
SharedMatrix LocalAddPublic(const SharedMatrix& a, const FieldMatrix& c);
SharedMatrix LocalSubPublic(const SharedMatrix& a, const FieldMatrix& c);
// P * a and a * P for a public matrix P.
SharedMatrix LocalMulPublicLeft(const FieldMatrix& p, const SharedMatrix& a);
SharedMatrix LocalMulPublicRight(const SharedMatrix& a, const FieldMatrix& p);

// Gram fragment X^T X and moment fragment X^T y of a party's own rows.
// Summed over a horizontal partition they give the joint X^T X and X^T y.
struct LocalMoments {
  FieldMatrix gram;
  FieldMatrix xty;
};

// With rescale_bits = 0 this is the plain product over F_q. With
// rescale_bits = f the inputs are read as signed fixed-point encodings, the
// sums are formed exactly over the integers and divided by 2^f (round half
// away from zero), so the result is again at scale 2^f.
LocalMoments ComputeLocalMoments(const FieldMatrix& x, const FieldMatrix& y, int rescale_bits = 0);

}  // namespace sharelr
