#pragma once

#include <chrono>
#include <memory>
#include <span>
#include <vector>

#include "sharelr/regression.hpp"
#include "sharelr/transport/transcript.hpp"

namespace sharelr {

// A whole run in one process: TI, parties and client on threads, wired
// through an in-memory relay. Used by tests, the acceptance binary and the
// harness's in-process mode.
struct LocalRunOptions {
  int e = 64;
  int f = 64;
  int kappa = kDefaultKappa;
  std::size_t iterations = 32;
  double trace_bound = 0;  // 0: DefaultTraceBound over all training rows
  bool intercept = true;
  bool encrypt = true;
  std::uint64_t seed = 0;  // 0: OS randomness
  std::chrono::milliseconds round_timeout{60000};
  PartyId aggregator = 1;  // TC-LR mask aggregator
};

struct PlanUsage {
  Requirements planned;
  Requirements consumed;  // by the first group member
};

struct LocalRunResult {
  ScenarioKind scenario = ScenarioKind::kTargetIndependent;
  FieldPtr field;
  double trace_bound = 0;
  // Decoded reconstruction of each plan's coefficients (TI-LR: one; TC-LR: one
  // per source). Only a test harness holding every fragment can form these.
  std::vector<Eigen::VectorXd> betas;
  Eigen::VectorXd predictions;
  std::vector<PartyModel> models;  // index = party id - 1
  std::vector<PlanUsage> usage;
  std::shared_ptr<Transcript> transcript;
  std::size_t setup_entries = 0;  // transcript entries recorded during setup
  std::size_t ti_envelopes_after_setup = 0;
  std::size_t online_rounds = 0;  // rounds run by party 1 across its contexts
  double setup_seconds = 0;
  double train_seconds = 0;
  double infer_seconds = 0;
};

LocalRunResult RunTiLocal(std::span<const PlainDataset> parties, const Eigen::MatrixXd& queries,
                          const LocalRunOptions& options = {});

// Parties 1..m are the sources; the target is party m+1 and holds the
// calibration rows and the queries.
LocalRunResult RunTcLocal(std::span<const PlainDataset> sources, const PlainDataset& calibration,
                          const Eigen::MatrixXd& queries, const LocalRunOptions& options = {});

}  // namespace sharelr
