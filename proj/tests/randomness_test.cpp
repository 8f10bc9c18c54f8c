#include <set>

#include <gtest/gtest.h>

#include "sharelr/randomness.hpp"

namespace sharelr {
namespace {

std::vector<PartyId> Parties(std::size_t m) {
  std::vector<PartyId> g;
  for (std::size_t i = 1; i <= m; ++i) g.push_back(static_cast<PartyId>(i));
  return g;
}

SessionId TestSession() {
  SessionId s{};
  s[0] = 0xAB;
  return s;
}

std::vector<SharedMatrix> Fragments(const std::vector<FieldMatrix>& parts, const std::vector<PartyId>& group) {
  std::vector<SharedMatrix> out;
  for (std::size_t i = 0; i < parts.size(); ++i) out.push_back(AsFragment(group[i], group, parts[i]));
  return out;
}

TEST(Prng, SeededStreamsAreReproducible) {
  auto a = Prng::Seeded(42, "x");
  auto b = Prng::Seeded(42, "x");
  auto c = Prng::Seeded(42, "y");
  for (int i = 0; i < 2000; ++i) {
    auto va = a.NextU64();
    EXPECT_EQ(va, b.NextU64());
    EXPECT_NE(va, c.NextU64());
  }
  auto d1 = Prng::Seeded(1).Derive("child");
  auto d2 = Prng::Seeded(1).Derive("child");
  EXPECT_EQ(d1.NextU64(), d2.NextU64());
}

TEST(Prng, UniformBelowStaysInRange) {
  auto rng = Prng::Seeded(5);
  mpz_class bound = 17;
  std::set<long> seen;
  for (int i = 0; i < 2000; ++i) {
    mpz_class v = rng.UniformBelow(bound);
    ASSERT_GE(v, 0);
    ASSERT_LT(v, bound);
    seen.insert(v.get_si());
  }
  EXPECT_EQ(seen.size(), 17u);
  for (int i = 0; i < 200; ++i) EXPECT_LT(rng.UniformBits(13), mpz_class(1) << 13);
}

TEST(TruncLayout, DefaultsFitTheField) {
  auto f = MakeParams(64, 64);
  auto l = MakeTruncLayout(*f, kDefaultKappa);
  EXPECT_EQ(l.input_bits, 143);
  EXPECT_EQ(l.high_bits, 143 + 1 + 48 - 64);
  // Masked value v + 2^l + 2^f r_high + r_low stays below q.
  mpz_class top = (mpz_class(1) << (l.input_bits + 1)) + (mpz_class(1) << (f->f + l.high_bits)) +
                  (mpz_class(1) << f->f);
  EXPECT_LT(top, f->q);
  EXPECT_THROW(MakeTruncLayout(*f, 120), ConfigError);
}

TEST(Cost, InferenceNeedsOneTripleAndOnePair) {
  auto r = cost::Predict(7);
  ASSERT_EQ(r.triples.size(), 1u);
  EXPECT_EQ(r.triples.begin()->first, (TripleShape{1, 7, 1}));
  EXPECT_EQ(r.triples.begin()->second, 1u);
  EXPECT_EQ(r.trunc_pairs, 1u);
}

TEST(Cost, MatInvCountsFollowTheIteration) {
  for (std::size_t k : {1, 3, 10}) {
    for (std::size_t t : {1, 2, 32}) {
      auto r = cost::MatInv(k, t);
      auto kk = static_cast<std::uint32_t>(k);
      EXPECT_EQ(r.triples.at({kk, kk, kk}), 2 * t);
      EXPECT_EQ(r.trunc_pairs, k * k * (2 * t - 1));
    }
  }
}

TEST(Cost, PlanSplitsByScenario) {
  Workload ti{ScenarioKind::kTargetIndependent, 4, 5, 8, 0};
  auto plans = PlanRequirements(ti);
  ASSERT_EQ(plans.size(), 1u);
  EXPECT_EQ(plans[0].group, Parties(4));
  EXPECT_EQ(plans[0].requirements, cost::Train(5, 8));

  Workload tc{ScenarioKind::kTargetCalibrated, 3, 5, 8, 10};
  plans = PlanRequirements(tc);
  ASSERT_EQ(plans.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(plans[i].group, (std::vector<PartyId>{static_cast<PartyId>(i + 1), 4}));
    EXPECT_EQ(plans[i].requirements, cost::Train(5, 8) + cost::Predict(5).Times(10));
  }

  Workload none{ScenarioKind::kTargetIndependent, 2, 3, 4, 0};
  auto inference_free = PlanRequirements(none)[0].requirements;
  EXPECT_EQ(inference_free.triples.count({1, 3, 1}), 0u);
  EXPECT_THROW(ParseScenarioKind("lasso"), ConfigError);
}

TEST(Generate, TriplesSatisfyDefiningProperty) {
  auto f = MakeParams(64, 64);
  auto rng = Prng::Seeded(21);
  Requirements req;
  req.triples[{2, 3, 4}] = 3;
  req.triples[{1, 5, 1}] = 2;
  req.trunc_pairs = 6;
  for (std::size_t m : {2, 3, 5}) {
    auto g = Parties(m);
    auto bundles = GenerateBundles(req, g, TestSession(), f, kDefaultKappa, rng);
    ASSERT_EQ(bundles.size(), m);
    for (const auto& [shape, count] : req.triples) {
      for (std::size_t n = 0; n < count; ++n) {
        std::vector<FieldMatrix> u, v, w;
        std::uint64_t serial = 0;
        for (std::size_t p = 0; p < m; ++p) {
          auto t = bundles[p].NextTriple(shape);
          if (p == 0) serial = t.serial;
          EXPECT_EQ(t.serial, serial);
          u.push_back(t.u);
          v.push_back(t.v);
          w.push_back(t.w);
        }
        EXPECT_EQ(Reconstruct(Fragments(w, g)), Reconstruct(Fragments(u, g)) * Reconstruct(Fragments(v, g)));
      }
    }
    auto layout = MakeTruncLayout(*f, kDefaultKappa);
    for (std::size_t n = 0; n < req.trunc_pairs; ++n) {
      mpz_class lo = 0, hi = 0;
      for (auto& b : bundles) {
        auto p = b.NextTruncPair();
        lo += p.r_low;
        hi += p.r_high;
      }
      lo %= f->q;
      hi %= f->q;
      EXPECT_LT(lo, mpz_class(1) << f->f);
      EXPECT_LT(hi, mpz_class(1) << layout.high_bits);
    }
    for (auto& b : bundles) {
      EXPECT_THROW(b.NextTruncPair(), MaterialExhausted);
      EXPECT_THROW(b.NextTriple({2, 3, 4}), MaterialExhausted);
      EXPECT_EQ(b.Consumed(), req);
      std::set<std::uint64_t> unique(b.consumed_serials().begin(), b.consumed_serials().end());
      EXPECT_EQ(unique.size(), b.consumed_serials().size());
    }
  }
}

// Every 1x1 triple over F_17 lets each pair (x, y) be multiplied correctly by
// the masked-difference recombination, across the whole multiplication table.
TEST(Generate, ScalarTripleOverQ17AcrossMultiplicationTable) {
  auto f = MakeParams(1, 1);
  auto rng = Prng::Seeded(22);
  Requirements req;
  req.triples[{1, 1, 1}] = 40;
  for (std::size_t m : {2, 3}) {
    auto g = Parties(m);
    auto bundles = GenerateBundles(req, g, TestSession(), f, 1, rng);
    for (int n = 0; n < 40; ++n) {
      std::vector<MatMulTriple> t;
      for (auto& b : bundles) t.push_back(b.NextTriple({1, 1, 1}));
      mpz_class u = 0, v = 0, w = 0;
      for (auto& x : t) {
        u += x.u[0];
        v += x.v[0];
        w += x.w[0];
      }
      ASSERT_EQ(mpz_class(w % 17), mpz_class((u * v) % 17));
      for (long x = 0; x < 17; ++x) {
        for (long y = 0; y < 17; ++y) {
          mpz_class d = ((x - u) % 17 + 17) % 17, e = ((y - v) % 17 + 17) % 17;
          mpz_class z = 0;
          for (std::size_t p = 0; p < m; ++p) {
            z += t[p].w[0] + d * t[p].v[0] + t[p].u[0] * e;
            if (p == 0) z += d * e;
          }
          ASSERT_EQ(mpz_class(z % 17), mpz_class((x * y) % 17));
        }
      }
    }
  }
}

TEST(Bundle, SerializationRoundTrip) {
  auto f = MakeParams(64, 64);
  auto rng = Prng::Seeded(23);
  Requirements req = cost::Train(3, 2) + cost::Predict(3).Times(2);
  auto g = Parties(3);
  auto bundles = GenerateBundles(req, g, TestSession(), f, kDefaultKappa, rng);
  auto rng2 = Prng::Seeded(23);
  auto wire = GenerateSerializedBundles(req, g, TestSession(), f, kDefaultKappa, rng2);
  for (std::size_t p = 0; p < g.size(); ++p) {
    Bytes bytes = bundles[p].Serialize();
    EXPECT_EQ(bytes, wire[p]);
    auto back = CorrelatedBundle::Deserialize(bytes);
    EXPECT_EQ(back.owner(), g[p]);
    EXPECT_EQ(back.group(), g);
    EXPECT_EQ(back.session(), TestSession());
    EXPECT_EQ(back.kappa(), kDefaultKappa);
    EXPECT_EQ(back.field()->q, f->q);
    EXPECT_EQ(back.Remaining(), req);
    EXPECT_EQ(back.Serialize(), bytes);
  }
  // Partially consumed bundles persist only what is left.
  bundles[0].NextTruncPair();
  auto left = CorrelatedBundle::Deserialize(bundles[0].Serialize());
  EXPECT_EQ(left.Remaining().trunc_pairs, req.trunc_pairs - 1);
}

TEST(Bundle, RejectsCorruption) {
  auto f = MakeParams(64, 64);
  auto rng = Prng::Seeded(24);
  Requirements req = cost::Predict(2);
  auto wire = GenerateSerializedBundles(req, Parties(2), TestSession(), f, kDefaultKappa, rng);
  Bytes bad = wire[0];
  bad[0] = 'X';
  EXPECT_THROW(CorrelatedBundle::Deserialize(bad), DecodeError);
  Bytes cut(wire[0].begin(), wire[0].end() - 3);
  EXPECT_THROW(CorrelatedBundle::Deserialize(cut), DecodeError);
  Bytes extra = wire[0];
  extra.push_back(0);
  EXPECT_THROW(CorrelatedBundle::Deserialize(extra), DecodeError);
}

}  // namespace
}  // namespace sharelr
