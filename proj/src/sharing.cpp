#include "sharelr/sharing.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

namespace sharelr {

namespace {

void CheckPeers(const SharedMatrix& a, const SharedMatrix& b, const char* op) {
  if (a.owner != b.owner || a.group != b.group) {
    throw SharingError(fmt::format("{}: fragments belong to different parties or groups", op));
  }
  if (!a.value.SameShape(b.value)) {
    throw SharingError(fmt::format("{}: shape mismatch {}x{} vs {}x{}", op, a.rows(), a.cols(), b.rows(),
                                   b.cols()));
  }
}

mpz_class RoundShiftRight(const mpz_class& v, int bits) {
  if (bits == 0) return v;
  mpz_class mag = abs(v);
  mpz_class half;
  mpz_ui_pow_ui(half.get_mpz_t(), 2, static_cast<unsigned long>(bits - 1));
  mag += half;
  mpz_fdiv_q_2exp(mag.get_mpz_t(), mag.get_mpz_t(), static_cast<mp_bitcnt_t>(bits));
  return v < 0 ? mpz_class(-mag) : mag;
}

}  // namespace

std::vector<PartyId> NormalizeGroup(std::span<const PartyId> group) {
  if (group.empty()) throw SharingError("empty party group");
  std::vector<PartyId> out(group.begin(), group.end());
  std::sort(out.begin(), out.end());
  if (std::adjacent_find(out.begin(), out.end()) != out.end()) {
    throw SharingError("duplicate party id in group");
  }
  return out;
}

std::vector<SharedMatrix> Share(const FieldMatrix& secret, std::span<const PartyId> group, Prng& rng) {
  auto members = NormalizeGroup(group);
  const auto& field = secret.field();
  std::vector<SharedMatrix> out;
  out.reserve(members.size());
  FieldMatrix remainder = secret;
  for (std::size_t i = 0; i + 1 < members.size(); ++i) {
    FieldMatrix r(field, secret.rows(), secret.cols());
    for (std::size_t j = 0; j < r.size(); ++j) r.SetRaw(j, rng.UniformBelow(field->q));
    remainder -= r;
    out.push_back({members[i], members, std::move(r)});
  }
  out.push_back({members.back(), members, std::move(remainder)});
  return out;
}

FieldMatrix Reconstruct(std::span<const SharedMatrix> fragments) {
  if (fragments.empty()) throw SharingError("reconstruct: no fragments");
  const auto& group = fragments.front().group;
  std::set<PartyId> seen;
  FieldMatrix sum(fragments.front().field(), fragments.front().rows(), fragments.front().cols());
  for (const auto& frag : fragments) {
    if (frag.group != group) throw SharingError("reconstruct: fragments from different groups");
    if (!frag.value.SameShape(sum)) throw SharingError("reconstruct: dimension mismatch");
    if (!std::binary_search(group.begin(), group.end(), frag.owner)) {
      throw SharingError(fmt::format("reconstruct: party {} is not in the group", frag.owner));
    }
    if (!seen.insert(frag.owner).second) {
      throw SharingError(fmt::format("reconstruct: duplicated fragment from party {}", frag.owner));
    }
    sum += frag.value;
  }
  if (seen.size() != group.size()) {
    for (PartyId p : group) {
      if (!seen.count(p)) throw SharingError(fmt::format("reconstruct: missing fragment of party {}", p));
    }
  }
  return sum;
}

SharedMatrix AsFragment(PartyId owner, std::span<const PartyId> group, FieldMatrix value) {
  auto members = NormalizeGroup(group);
  if (!std::binary_search(members.begin(), members.end(), owner)) {
    throw SharingError(fmt::format("party {} is not in the group", owner));
  }
  return {owner, std::move(members), std::move(value)};
}

SharedMatrix LocalAdd(const SharedMatrix& a, const SharedMatrix& b) {
  CheckPeers(a, b, "local_add");
  return {a.owner, a.group, a.value + b.value};
}

SharedMatrix LocalSub(const SharedMatrix& a, const SharedMatrix& b) {
  CheckPeers(a, b, "local_sub");
  return {a.owner, a.group, a.value - b.value};
}

SharedMatrix LocalScale(const FieldElement& c, const SharedMatrix& a) {
  RequireSameField(c.field(), a.field());
  return {a.owner, a.group, a.value.Scaled(c.value())};
}

SharedMatrix LocalScale(const mpz_class& c, const SharedMatrix& a) {
  return {a.owner, a.group, a.value.Scaled(c)};
}

SharedMatrix LocalAddPublic(const SharedMatrix& a, const FieldMatrix& c) {
  if (!a.value.SameShape(c)) throw SharingError("local_add_public: shape mismatch");
  if (!IsDesignated(a)) {
    RequireSameField(a.field(), c.field());
    return a;
  }
  return {a.owner, a.group, a.value + c};
}

SharedMatrix LocalSubPublic(const SharedMatrix& a, const FieldMatrix& c) {
  if (!a.value.SameShape(c)) throw SharingError("local_sub_public: shape mismatch");
  if (!IsDesignated(a)) {
    RequireSameField(a.field(), c.field());
    return a;
  }
  return {a.owner, a.group, a.value - c};
}

SharedMatrix LocalMulPublicLeft(const FieldMatrix& p, const SharedMatrix& a) {
  return {a.owner, a.group, p * a.value};
}

SharedMatrix LocalMulPublicRight(const SharedMatrix& a, const FieldMatrix& p) {
  return {a.owner, a.group, a.value * p};
}

LocalMoments ComputeLocalMoments(const FieldMatrix& x, const FieldMatrix& y, int rescale_bits) {
  RequireSameField(x.field(), y.field());
  if (y.cols() != 1 || y.rows() != x.rows()) {
    throw SharingError(fmt::format("local moments: X is {}x{} but y is {}x{}", x.rows(), x.cols(), y.rows(),
                                   y.cols()));
  }
  if (rescale_bits == 0) {
    FieldMatrix xt = x.Transposed();
    return {xt * x, xt * y};
  }

  const auto& field = x.field();
  const std::size_t n = x.rows();
  const std::size_t k = x.cols();
  mpz_class half_q = field->q / 2;
  auto signed_of = [&](const mpz_class& v) { return v > half_q ? mpz_class(v - field->q) : v; };

  // Column-major signed copies keep the inner loops contiguous.
  std::vector<mpz_class> xs(n * k);
  std::vector<mpz_class> ys(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < k; ++c) xs[c * n + r] = signed_of(x(r, c));
    ys[r] = signed_of(y(r, 0));
  }

  FieldMatrix gram(field, k, k);
  FieldMatrix xty(field, k, 1);
  mpz_class acc;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i; j < k; ++j) {
      acc = 0;
      for (std::size_t r = 0; r < n; ++r) {
        mpz_addmul(acc.get_mpz_t(), xs[i * n + r].get_mpz_t(), xs[j * n + r].get_mpz_t());
      }
      mpz_class v = RoundShiftRight(acc, rescale_bits);
      gram.SetRaw(i * k + j, v);
      gram.SetRaw(j * k + i, v);
    }
    acc = 0;
    for (std::size_t r = 0; r < n; ++r) {
      mpz_addmul(acc.get_mpz_t(), xs[i * n + r].get_mpz_t(), ys[r].get_mpz_t());
    }
    xty.SetRaw(i, RoundShiftRight(acc, rescale_bits));
  }
  return {std::move(gram), std::move(xty)};
}

}  // namespace sharelr
