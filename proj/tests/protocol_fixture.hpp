#pragma once

#include <cmath>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "sharelr/protocols.hpp"

namespace sharelr::testing {

inline std::vector<PartyId> Parties(std::size_t m) {
  std::vector<PartyId> g;
  for (std::size_t i = 1; i <= m; ++i) g.push_back(static_cast<PartyId>(i));
  return g;
}

inline SessionId FixtureSession(std::uint8_t tag = 1) {
  SessionId s{};
  s[15] = tag;
  return s;
}

inline FieldMatrix RandomMatrix(const FieldPtr& f, std::size_t r, std::size_t c, Prng& rng) {
  FieldMatrix m(f, r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m.SetRaw(i, rng.UniformBelow(f->q));
  return m;
}

// Shares every secret for the session's group; result[i][p] is party p's
// fragment of secret i.
inline std::vector<std::vector<SharedMatrix>> ShareAll(const std::vector<FieldMatrix>& secrets,
                                                const std::vector<PartyId>& group, Prng& rng) {
  std::vector<std::vector<SharedMatrix>> out;
  for (const auto& s : secrets) out.push_back(Share(s, group, rng));
  return out;
}

inline FieldMatrix Gather(const std::vector<SharedMatrix>& per_party) { return Reconstruct(per_party); }

inline Eigen::MatrixXd RandomSpd(std::size_t k, double cond, Prng& rng) {
  Eigen::MatrixXd g(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) g(i, j) = rng.Gaussian();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd lambda(k);
  for (std::size_t i = 0; i < k; ++i) {
    lambda(i) = k == 1 ? 1.0 : std::pow(cond, static_cast<double>(i) / static_cast<double>(k - 1));
  }
  Eigen::MatrixXd a = q * lambda.asDiagonal() * q.transpose();
  return (a + a.transpose()) / 2;
}

// m parties of one session wired through an in-memory hub, one thread each.
class LocalSession {
 public:
  LocalSession(FieldPtr field, std::size_t m, const Requirements& req, std::uint64_t seed, bool encrypt = false,
               int kappa = kDefaultKappa)
      : field_(field), group_(Parties(m)), hub_(MemoryHub::Create()), transcript_(std::make_shared<Transcript>()) {
    auto rng = Prng::Seeded(seed, "ti");
    bundles_ = GenerateBundles(req, group_, FixtureSession(), field, kappa, rng);
    EndpointOptions opts;
    opts.round_timeout = std::chrono::seconds(20);
    opts.encrypt = encrypt;
    std::vector<Endpoint*> raw;
    for (PartyId p : group_) {
      endpoints_.push_back(std::make_unique<Endpoint>(p, opts));
      endpoints_.back()->SetTranscript(transcript_);
      hub_->Connect(endpoints_.back().get());
      raw.push_back(endpoints_.back().get());
    }
    MemoryHub::ExchangeKeys(raw);
    for (std::size_t i = 0; i < m; ++i) {
      contexts_.push_back(std::make_unique<PartyContext>(FixtureSession(), group_[i], group_, field, kappa,
                                                         &bundles_[i], endpoints_[i].get(), true));
    }
  }

  std::size_t size() const { return group_.size(); }
  const std::vector<PartyId>& group() const { return group_; }
  PartyContext& context(std::size_t i) { return *contexts_[i]; }
  CorrelatedBundle& bundle(std::size_t i) { return bundles_[i]; }
  Endpoint& endpoint(std::size_t i) { return *endpoints_[i]; }
  const std::shared_ptr<Transcript>& transcript() const { return transcript_; }

  // Runs fn(ctx, index) on every party concurrently; rethrows the first
  // failure after aborting the others.
  template <typename T>
  std::vector<T> Run(const std::function<T(PartyContext&, std::size_t)>& fn) {
    std::vector<T> out(size());
    std::exception_ptr first;
    std::mutex mu;
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < size(); ++i) {
      threads.emplace_back([&, i] {
        try {
          out[i] = fn(*contexts_[i], i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!first) first = std::current_exception();
          for (auto& ep : endpoints_) ep->Fail("peer failed");
        }
      });
    }
    for (auto& t : threads) t.join();
    if (first) std::rethrow_exception(first);
    return out;
  }

 private:
  FieldPtr field_;
  std::vector<PartyId> group_;
  std::shared_ptr<MemoryHub> hub_;
  std::shared_ptr<Transcript> transcript_;
  std::vector<CorrelatedBundle> bundles_;
  std::vector<std::unique_ptr<Endpoint>> endpoints_;
  std::vector<std::unique_ptr<PartyContext>> contexts_;
};

}  // namespace sharelr::testing
