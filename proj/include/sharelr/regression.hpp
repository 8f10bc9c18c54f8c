#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "sharelr/protocols.hpp"
#include "sharelr/randomness.hpp"

namespace sharelr {

class RegressionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Real-valued rows as a party or client holds them, without the intercept
// column.
struct PlainDataset {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;

  std::size_t rows() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t features() const { return static_cast<std::size_t>(x.cols()); }
};

// Appends the constant-1 column last.
Eigen::MatrixXd WithIntercept(const Eigen::MatrixXd& x);
PlainDataset Stack(std::span<const PlainDataset> parts);

// In-the-clear baseline: beta = (X^T X)^{-1} X^T y. Throws RegressionError
// when X^T X is singular.
Eigen::VectorXd SolveNormalEquations(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);
double Rmse(const Eigen::VectorXd& predicted, const Eigen::VectorXd& actual);

// A party's encoded rows; with `intercept` the last column is encode(1).
struct LocalDataset {
  FieldMatrix x;
  FieldMatrix y;
  bool intercept = true;

  std::size_t rows() const { return x.rows(); }
  std::size_t columns() const { return x.cols(); }

  static LocalDataset Encode(const FixedPointCodec& codec, const PlainDataset& data, bool intercept = true);
};

// Public upper bound on the trace of X^T X for features and intercept in
// [-1, 1]: every diagonal entry is at most the row count.
inline double DefaultTraceBound(std::size_t total_rows, std::size_t columns) {
  return static_cast<double>(total_rows) * static_cast<double>(columns);
}

// One party's part of training in a session: local Gram and moment
// fragments, joint inversion, joint coefficient product. Returns the k x 1
// fragment of beta. Every group member calls this with its own rows.
SharedMatrix TrainParty(PartyContext& ctx, const LocalDataset& data, double trace_bound, std::size_t iterations);

// Fragment of x * beta for a shared 1 x k row. Two rounds.
SharedMatrix PredictShare(PartyContext& ctx, const SharedMatrix& x_row, const SharedMatrix& beta);

// Instances on which clients and targets exchange query data; numbered from
// 1 per session in query order.
std::uint64_t QueryInstance(std::uint64_t query);
std::uint64_t MaskInstance(std::uint64_t query);

// --- target-independent inference -------------------------------------------

// Party side: answers client queries in arrival order until the client
// signals the end. Returns the number of queries served.
// `first_timeout` bounds the wait for the first query.
std::size_t ServeTiInference(PartyContext& ctx, const SharedMatrix& beta,
                             std::optional<std::chrono::milliseconds> first_timeout = {});

class TiClient {
 public:
  TiClient(Endpoint& endpoint, SessionId session, std::vector<PartyId> group, FieldPtr field, std::size_t columns,
           bool intercept, Prng rng);

  // `features` excludes the intercept. Shares the row with every party and
  // sums the returned fragments.
  double Predict(std::span<const double> features);
  // Sends all rows before collecting any answer.
  Eigen::VectorXd PredictAll(const Eigen::MatrixXd& features);
  // Tells the parties no more queries follow.
  void Finish();
  // Bound on the wait for the first answer, which spans the parties' setup
  // and training.
  void SetFirstAnswerTimeout(std::chrono::milliseconds t) { first_timeout_ = t; }

 private:
  void SendQuery(std::uint64_t query, std::span<const double> features);
  double CollectAnswer(std::uint64_t query);

  Endpoint& endpoint_;
  SessionId session_;
  std::vector<PartyId> group_;
  FieldPtr field_;
  FixedPointCodec codec_;
  std::size_t columns_;
  bool intercept_;
  Prng rng_;
  std::uint64_t next_query_ = 1;
  bool finished_ = false;
  std::optional<std::chrono::milliseconds> first_timeout_;
};

// --- target-calibrated inference --------------------------------------------

struct TcServingRoles {
  SessionId root;  // session of the mask exchange
  PartyId target = 0;
  PartyId aggregator = 1;        // collects the masks; lowest source id
  std::vector<PartyId> sources;  // all source ids
};

// Source side: per query, computes its fragment of the pairwise prediction,
// sends it masked to the target and the mask to the aggregator (which
// forwards the sum of masks). Returns the number of queries served.
std::size_t ServeTcSource(PartyContext& pair_ctx, const SharedMatrix& beta, const TcServingRoles& roles, Prng& rng,
                          std::optional<std::chrono::milliseconds> first_timeout = {});

class TcTarget {
 public:
  // `pair_contexts[i]` and `betas[i]` belong to the session with the i-th
  // source of `roles.sources`.
  TcTarget(std::vector<PartyContext*> pair_contexts, std::vector<SharedMatrix> betas, TcServingRoles roles,
           bool intercept, Prng rng);

  // Average of the m pairwise model predictions.
  double Predict(std::span<const double> features);
  void Finish();

 private:
  std::vector<PartyContext*> contexts_;
  std::vector<SharedMatrix> betas_;
  TcServingRoles roles_;
  bool intercept_;
  Prng rng_;
  std::uint64_t next_query_ = 1;
  bool finished_ = false;
};

// --- model records -----------------------------------------------------------

struct ModelShare {
  std::size_t plan_index = 0;
  SharedMatrix beta;  // k x 1; session and group identify the pairing
  SessionId session{};
};

// Everything one party keeps after training; persisted as an "SLRM" record.
struct PartyModel {
  ScenarioKind scenario = ScenarioKind::kTargetIndependent;
  PartyId owner = 0;
  std::size_t sources = 0;
  std::size_t columns = 0;
  bool intercept = true;
  FieldPtr field;
  std::vector<ModelShare> shares;

  Bytes Serialize() const;
  static PartyModel Deserialize(std::span<const std::uint8_t> bytes);
  void Save(const std::filesystem::path& path) const;
  static PartyModel Load(const std::filesystem::path& path);
};

}  // namespace sharelr
