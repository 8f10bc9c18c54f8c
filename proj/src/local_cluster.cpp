#include "sharelr/local_cluster.hpp"

#include <fmt/format.h>

#include "sharelr/parallel.hpp"
#include "sharelr/transport/setup.hpp"

namespace sharelr {

namespace {

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) { return std::chrono::duration<double>(Clock::now() - since).count(); }

Prng MakeRng(const LocalRunOptions& o, std::string_view label) {
  return o.seed == 0 ? Prng::Secure() : Prng::Seeded(o.seed, label);
}

// Roles of one run wired through a MemoryHub.
struct Wiring {
  std::shared_ptr<MemoryHub> hub = MemoryHub::Create();
  std::shared_ptr<Transcript> transcript = std::make_shared<Transcript>();
  std::unique_ptr<Endpoint> ti;
  std::vector<std::unique_ptr<Endpoint>> parties;  // index = id - 1
  std::unique_ptr<Endpoint> client;

  Wiring(std::size_t n_parties, bool with_client, const LocalRunOptions& o) {
    EndpointOptions eo{o.round_timeout, o.encrypt};
    std::vector<Endpoint*> all;
    auto add = [&](PartyId id) {
      auto ep = std::make_unique<Endpoint>(id, eo);
      ep->SetTranscript(transcript);
      hub->Connect(ep.get());
      all.push_back(ep.get());
      return ep;
    };
    ti = add(kTiId);
    for (std::size_t i = 1; i <= n_parties; ++i) parties.push_back(add(static_cast<PartyId>(i)));
    if (with_client) client = add(kClientId);
    MemoryHub::ExchangeKeys(all);
  }

  void FailAll(const std::string& why) {
    for (auto& p : parties) p->Fail(why);
    if (client) client->Fail(why);
  }
};

struct SetupOutcome {
  std::vector<std::vector<CorrelatedBundle>> bundles;  // per party, in PlansOfParty order
  std::vector<Requirements> planned;
};

SetupOutcome RunSetup(Wiring& w, const SessionId& root, const Workload& workload, const FieldPtr& field,
                      const LocalRunOptions& o, LocalRunResult& result) {
  auto started = Clock::now();
  SetupOutcome out;
  out.bundles.resize(w.parties.size());
  Prng ti_rng = MakeRng(o, "trusted-initializer");
  std::vector<BundleDelivery> deliveries = GenerateDeliveries(root, workload, field, o.kappa, ti_rng, &out.planned);
  ParallelFor(
      w.parties.size() + 1,
      [&](std::size_t i) {
        if (i == 0) {
          DistributeBundles(*w.ti, root, std::move(deliveries));
          return;
        }
        auto id = static_cast<PartyId>(i);
        auto indices = PlansOfParty(workload.kind, workload.sources, id);
        out.bundles[i - 1] = ReceiveBundles(*w.parties[i - 1], root, workload.kind, indices);
        w.parties[i - 1]->ForbidSender(kTiId);
      },
      [&] { w.FailAll("setup failed"); });
  // The TI leaves; anything it sent from here on would be a violation.
  w.hub->Disconnect(kTiId);
  result.setup_entries = w.transcript->size();
  result.setup_seconds = Seconds(started);
  return out;
}

void CountTiAfterSetup(LocalRunResult& r) {
  auto entries = r.transcript->Entries();
  for (std::size_t i = r.setup_entries; i < entries.size(); ++i) {
    if (entries[i].sender == kTiId && entries[i].event != TranscriptEvent::kRejected) ++r.ti_envelopes_after_setup;
  }
}

Eigen::VectorXd Reconstructed(const FixedPointCodec& codec, std::vector<SharedMatrix> fragments) {
  FieldMatrix sum = Reconstruct(fragments);
  auto values = codec.DecodeMatrix(sum);
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

std::size_t FeatureCount(std::span<const PlainDataset> parts) {
  if (parts.empty()) throw RegressionError("a run needs at least one data holder");
  std::size_t k = parts[0].features();
  for (const auto& p : parts) {
    if (p.features() != k) {
      throw RegressionError(fmt::format("feature counts differ between parties ({} vs {})", k, p.features()));
    }
  }
  return k;
}

}  // namespace

LocalRunResult RunTiLocal(std::span<const PlainDataset> parties, const Eigen::MatrixXd& queries,
                          const LocalRunOptions& o) {
  const std::size_t m = parties.size();
  const std::size_t features = FeatureCount(parties);
  const std::size_t k = features + (o.intercept ? 1 : 0);
  if (queries.rows() > 0 && static_cast<std::size_t>(queries.cols()) != features) {
    throw RegressionError("query feature count differs from the training data");
  }
  std::size_t total_rows = 0;
  for (const auto& p : parties) total_rows += p.rows();

  LocalRunResult result;
  result.scenario = ScenarioKind::kTargetIndependent;
  result.field = MakeParams(o.e, o.f);
  result.trace_bound = o.trace_bound > 0 ? o.trace_bound : DefaultTraceBound(total_rows, k);
  FixedPointCodec codec(result.field);

  SessionId root{};
  MakeRng(o, "session").Fill(root);
  Wiring w(m, true, o);
  result.transcript = w.transcript;

  Workload workload{ScenarioKind::kTargetIndependent, m, k, o.iterations, static_cast<std::size_t>(queries.rows())};
  SetupOutcome setup = RunSetup(w, root, workload, result.field, o, result);

  std::vector<PartyId> group;
  for (std::size_t i = 1; i <= m; ++i) group.push_back(static_cast<PartyId>(i));
  std::vector<std::unique_ptr<PartyContext>> ctx;
  for (std::size_t i = 0; i < m; ++i) {
    ctx.push_back(std::make_unique<PartyContext>(root, group[i], group, result.field, o.kappa, &setup.bundles[i][0],
                                                 w.parties[i].get(), true));
  }

  auto started = Clock::now();
  std::vector<SharedMatrix> betas(m);
  ParallelFor(
      m,
      [&](std::size_t i) {
        LocalDataset data = LocalDataset::Encode(codec, parties[i], o.intercept);
        betas[i] = TrainParty(*ctx[i], data, result.trace_bound, o.iterations);
      },
      [&] { w.FailAll("training failed"); });
  result.train_seconds = Seconds(started);

  started = Clock::now();
  ParallelFor(
      m + 1,
      [&](std::size_t i) {
        if (i < m) {
          ServeTiInference(*ctx[i], betas[i]);
          return;
        }
        TiClient client(*w.client, root, group, result.field, k, o.intercept, MakeRng(o, "client"));
        result.predictions = client.PredictAll(queries);
        client.Finish();
      },
      [&] { w.FailAll("inference failed"); });
  result.infer_seconds = Seconds(started);

  result.betas.push_back(Reconstructed(codec, betas));
  for (std::size_t i = 0; i < m; ++i) {
    PartyModel model{ScenarioKind::kTargetIndependent, group[i], m, k, o.intercept, result.field, {}};
    model.shares.push_back({0, betas[i], root});
    result.models.push_back(std::move(model));
  }
  result.usage.push_back({setup.planned[0], setup.bundles[0][0].Consumed()});
  result.online_rounds = ctx[0]->rounds_run();
  CountTiAfterSetup(result);
  return result;
}

LocalRunResult RunTcLocal(std::span<const PlainDataset> sources, const PlainDataset& calibration,
                          const Eigen::MatrixXd& queries, const LocalRunOptions& o) {
  const std::size_t m = sources.size();
  const std::size_t features = FeatureCount(sources);
  if (calibration.features() != features) throw RegressionError("calibration data has a different feature count");
  if (calibration.rows() < 1) throw RegressionError("target-calibrated training needs calibration rows");
  if (queries.rows() > 0 && static_cast<std::size_t>(queries.cols()) != features) {
    throw RegressionError("query feature count differs from the training data");
  }
  const std::size_t k = features + (o.intercept ? 1 : 0);
  const auto target = static_cast<PartyId>(m + 1);
  if (o.aggregator < 1 || o.aggregator > m) throw RegressionError("the aggregator must be a source party");

  LocalRunResult result;
  result.scenario = ScenarioKind::kTargetCalibrated;
  result.field = MakeParams(o.e, o.f);
  FixedPointCodec codec(result.field);
  std::vector<double> bounds(m);
  for (std::size_t i = 0; i < m; ++i) {
    bounds[i] = o.trace_bound > 0 ? o.trace_bound : DefaultTraceBound(sources[i].rows() + calibration.rows(), k);
  }
  result.trace_bound = *std::max_element(bounds.begin(), bounds.end());

  SessionId root{};
  MakeRng(o, "session").Fill(root);
  Wiring w(m + 1, false, o);
  result.transcript = w.transcript;

  Workload workload{ScenarioKind::kTargetCalibrated, m, k, o.iterations, static_cast<std::size_t>(queries.rows())};
  SetupOutcome setup = RunSetup(w, root, workload, result.field, o, result);

  std::vector<std::unique_ptr<PartyContext>> source_ctx;
  std::vector<std::unique_ptr<PartyContext>> target_ctx;
  for (std::size_t i = 0; i < m; ++i) {
    auto id = static_cast<PartyId>(i + 1);
    SessionId session = SessionForPlan(root, ScenarioKind::kTargetCalibrated, i + 1);
    std::vector<PartyId> pair{id, target};
    source_ctx.push_back(std::make_unique<PartyContext>(session, id, pair, result.field, o.kappa,
                                                        &setup.bundles[i][0], w.parties[i].get(), false));
    target_ctx.push_back(std::make_unique<PartyContext>(session, target, pair, result.field, o.kappa,
                                                        &setup.bundles[m][i], w.parties[m].get(), false));
  }

  auto started = Clock::now();
  std::vector<SharedMatrix> source_beta(m);
  std::vector<SharedMatrix> target_beta(m);
  LocalDataset calib = LocalDataset::Encode(codec, calibration, o.intercept);
  ParallelFor(
      2 * m,
      [&](std::size_t t) {
        std::size_t i = t % m;
        if (t < m) {
          LocalDataset data = LocalDataset::Encode(codec, sources[i], o.intercept);
          source_beta[i] = TrainParty(*source_ctx[i], data, bounds[i], o.iterations);
        } else {
          target_beta[i] = TrainParty(*target_ctx[i], calib, bounds[i], o.iterations);
        }
      },
      [&] { w.FailAll("training failed"); });
  result.train_seconds = Seconds(started);

  TcServingRoles roles{root, target, o.aggregator, {}};
  for (std::size_t i = 1; i <= m; ++i) roles.sources.push_back(static_cast<PartyId>(i));

  started = Clock::now();
  ParallelFor(
      m + 1,
      [&](std::size_t i) {
        if (i < m) {
          Prng rng = MakeRng(o, fmt::format("mask-{}", i + 1));
          ServeTcSource(*source_ctx[i], source_beta[i], roles, rng);
          return;
        }
        std::vector<PartyContext*> ctxs;
        for (auto& c : target_ctx) ctxs.push_back(c.get());
        TcTarget tgt(ctxs, target_beta, roles, o.intercept, MakeRng(o, "target-queries"));
        result.predictions.resize(queries.rows());
        for (Eigen::Index r = 0; r < queries.rows(); ++r) {
          Eigen::VectorXd row = queries.row(r).transpose();
          result.predictions(r) = tgt.Predict(std::span<const double>(row.data(), row.size()));
        }
        tgt.Finish();
      },
      [&] { w.FailAll("inference failed"); });
  result.infer_seconds = Seconds(started);

  PartyModel target_model{ScenarioKind::kTargetCalibrated, target, m, k, o.intercept, result.field, {}};
  for (std::size_t i = 0; i < m; ++i) {
    result.betas.push_back(Reconstructed(codec, {source_beta[i], target_beta[i]}));
    PartyModel model{ScenarioKind::kTargetCalibrated, static_cast<PartyId>(i + 1), m, k, o.intercept, result.field,
                     {}};
    model.shares.push_back({i + 1, source_beta[i], source_ctx[i]->session()});
    result.models.push_back(std::move(model));
    target_model.shares.push_back({i + 1, target_beta[i], target_ctx[i]->session()});
    result.usage.push_back({setup.planned[i], setup.bundles[i][0].Consumed()});
  }
  result.models.push_back(std::move(target_model));
  result.online_rounds = source_ctx[0]->rounds_run();
  CountTiAfterSetup(result);
  return result;
}

}  // namespace sharelr
