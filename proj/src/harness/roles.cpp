#include "sharelr/harness/roles.hpp"

#include <fstream>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "sharelr/parallel.hpp"
#include "sharelr/transport/setup.hpp"
#include "sharelr/transport/tcp.hpp"

namespace sharelr {

namespace {

using nlohmann::json;

double UnixSeconds() {
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

EndpointOptions MakeEndpointOptions(const SessionConfig& c, std::chrono::milliseconds timeout) {
  return EndpointOptions{timeout, c.roster.encrypt};
}

std::vector<PartyId> Range(PartyId from, PartyId to) {
  std::vector<PartyId> out;
  for (PartyId i = from; i <= to; ++i) out.push_back(i);
  return out;
}

json UsageJson(const CorrelatedBundle& b) {
  return {{"consumed_triples", b.Consumed().TotalTriples()},
          {"consumed_trunc_pairs", b.Consumed().trunc_pairs},
          {"remaining_triples", b.Remaining().TotalTriples()},
          {"remaining_trunc_pairs", b.Remaining().trunc_pairs}};
}

Ingested Ingest(const std::filesystem::path& path, const SessionConfig& c, const std::optional<Scaling>& scaling,
                bool has_response) {
  std::size_t features = c.columns - (c.intercept ? 1 : 0);
  IngestOptions io;
  io.features = features;
  io.has_response = has_response;
  io.scaling = scaling ? *scaling : Scaling::Identity(features);
  return IngestCsv(path, io);
}

std::vector<CorrelatedBundle> ObtainBundles(Endpoint& ep, const SessionConfig& c, PartyId id,
                                            const std::filesystem::path& dir, bool& reloaded) {
  const SessionId root = c.roster.session;
  auto indices = PlansOfParty(c.roster.scenario, c.sources(), id);
  bool all_present = true;
  for (auto idx : indices) {
    if (!std::filesystem::exists(BundlePath(dir, SessionForPlan(root, c.roster.scenario, idx), id))) {
      all_present = false;
    }
  }
  reloaded = all_present;
  if (all_present) {
    std::vector<CorrelatedBundle> out;
    for (auto idx : indices) {
      out.push_back(LoadBundle(BundlePath(dir, SessionForPlan(root, c.roster.scenario, idx), id)));
    }
    spdlog::info("party {}: reloaded {} persisted bundle(s)", id, out.size());
    return out;
  }
  return ReceiveBundles(ep, root, c.roster.scenario, indices, dir, c.startup_timeout);
}

void SaveTranscript(const Endpoint& ep, const std::filesystem::path& path) {
  if (!ep.transcript()) return;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  ep.transcript()->WriteJsonl(path.string());
}

}  // namespace

std::filesystem::path ModelPath(const std::filesystem::path& out_dir, PartyId id) {
  return out_dir / fmt::format("model-p{}.slrm", id);
}
std::filesystem::path TranscriptPath(const std::filesystem::path& out_dir, PartyId id) {
  return out_dir / fmt::format("transcript-{}.jsonl", id);
}
std::filesystem::path StatsPath(const std::filesystem::path& out_dir, PartyId id) {
  return out_dir / fmt::format("stats-{}.json", id);
}
std::filesystem::path PredictionsPath(const std::filesystem::path& out_dir) { return out_dir / "predictions.csv"; }

void WriteJson(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
}

json ReadJson(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot read {}", path.string()));
  return json::parse(in);
}

void WritePredictions(const std::filesystem::path& path, const Eigen::VectorXd& predictions) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << "prediction\n";
  for (Eigen::Index i = 0; i < predictions.size(); ++i) out << fmt::format("{:.17g}\n", predictions(i));
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
}

Eigen::VectorXd ReadPredictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot read {}", path.string()));
  std::string line;
  std::vector<double> values;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (!line.empty()) values.push_back(std::stod(line));
  }
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

// --- agent ---------------------------------------------------------------------

void ServeAgent(const AgentServeOptions& options) {
  AgentOptions ao;
  ao.host = options.host;
  ao.port = options.port;
  ao.parties = options.parties;
  BroadcastAgent agent(ao);
  spdlog::info("agent: listening on {}:{}", options.host, agent.port());
  if (!options.port_file.empty()) {
    auto tmp = options.port_file;
    tmp += ".tmp";
    std::ofstream(tmp, std::ios::trunc) << agent.port() << "\n";
    std::filesystem::rename(tmp, options.port_file);
  }
  agent.Wait();
  AgentStats s = agent.stats();
  if (!options.stats_file.empty()) {
    json sent = json::object();
    for (auto& [id, n] : s.sent_by) sent[std::to_string(id)] = n;
    WriteJson(options.stats_file, {{"connections", s.connections},
                                   {"peak_connections", s.peak_connections},
                                   {"registrations", s.registrations},
                                   {"envelopes_relayed", s.envelopes_relayed},
                                   {"frames_delivered", s.frames_delivered},
                                   {"bytes_relayed", s.bytes_relayed},
                                   {"rejected", s.rejected},
                                   {"dropped", s.dropped},
                                   {"sent_by", sent}});
  }
  agent.Stop();
}

void RequestAgentShutdown(const std::string& host, std::uint16_t port) {
  Endpoint ep(kControllerId, EndpointOptions{std::chrono::seconds(10), false});
  auto link = TcpLink::Connect(host, port, &ep, Role::kController, std::chrono::seconds(10));
  Envelope e;
  e.recipient = kAgentId;
  e.kind = PayloadKind::kControl;
  std::string_view cmd = "shutdown";
  e.payload.assign(cmd.begin(), cmd.end());
  ep.Send(std::move(e));
  link->Close();
}

std::uint16_t AwaitPortFile(const std::filesystem::path& path, std::chrono::milliseconds timeout) {
  auto deadline = std::chrono::steady_clock::now() + timeout;
  while (std::chrono::steady_clock::now() < deadline) {
    std::ifstream in(path);
    unsigned port = 0;
    if (in >> port && port > 0 && port <= 0xFFFF) return static_cast<std::uint16_t>(port);
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  throw std::runtime_error(fmt::format("no agent port in {} after {} ms", path.string(), timeout.count()));
}

// --- trusted initializer ---------------------------------------------------------

json RunTrustedInitializer(const SessionConfig& config, const TiRunOptions& options) {
  config.Validate();
  const SessionId root = config.roster.session;
  FieldPtr field = config.field();
  Prng rng = RoleRng(config, "trusted-initializer");
  std::vector<Requirements> planned;
  double started = UnixSeconds();
  auto deliveries = GenerateDeliveries(root, config.workload(), field, config.roster.kappa, rng, &planned);
  double generated = UnixSeconds();
  std::size_t total_bytes = 0;
  for (const auto& d : deliveries) total_bytes += d.bytes.size();
  if (!options.bundle_dir.empty()) {
    std::filesystem::create_directories(options.bundle_dir);
    for (const auto& d : deliveries) {
      SaveBundle(BundlePath(options.bundle_dir, SessionForPlan(root, config.roster.scenario, d.plan_index), d.party),
                 d.bytes);
    }
  }
  json stats = {{"role", "trusted-initializer"},
                {"bundles", deliveries.size()},
                {"bundle_bytes", total_bytes},
                {"generate_seconds", generated - started},
                {"setup_start_unix", started}};
  json plans = json::array();
  for (const auto& r : planned) plans.push_back({{"triples", r.TotalTriples()}, {"trunc_pairs", r.trunc_pairs}});
  stats["planned"] = plans;
  if (!options.distribute) {
    if (!options.out_dir.empty()) WriteJson(StatsPath(options.out_dir, kTiId), stats);
    return stats;
  }

  // Waits on every party's start-up, so the long timeout applies throughout.
  Endpoint ep(kTiId, MakeEndpointOptions(config, config.startup_timeout));
  ep.SetTranscript(std::make_shared<Transcript>());
  auto link = TcpLink::Connect(config.roster.agent_host, config.roster.agent_port, &ep, Role::kTrustedInitializer,
                               config.startup_timeout);
  auto receipt = DistributeBundles(ep, root, std::move(deliveries), config.startup_timeout);
  link->Close();
  stats["distributed"] = receipt.bundles;
  stats["setup_end_unix"] = UnixSeconds();
  spdlog::info("ti: distributed {} bundles ({} bytes); leaving", receipt.bundles, receipt.bytes);
  if (!options.out_dir.empty()) {
    SaveTranscript(ep, TranscriptPath(options.out_dir, kTiId));
    WriteJson(StatsPath(options.out_dir, kTiId), stats);
  }
  return stats;
}

// --- parties ---------------------------------------------------------------------

json RunParty(const SessionConfig& config, const PartyRunOptions& options) {
  config.Validate();
  const auto& roster = config.roster;
  const PartyId id = options.id;
  const std::size_t m = config.sources();
  const bool tc = roster.scenario == ScenarioKind::kTargetCalibrated;
  if (id < 1 || id > roster.parties.size()) throw ConfigError(fmt::format("party {} is not in the roster", id));
  std::filesystem::create_directories(options.out_dir);
  FieldPtr field = config.field();
  FixedPointCodec codec(field);

  // Inputs are read before connecting so that bad files fail fast.
  Ingested training = Ingest(options.data, config, options.scaling, true);
  LocalDataset local = LocalDataset::Encode(codec, training.data, config.intercept);
  const bool is_target = tc && id == roster.target();
  Eigen::MatrixXd queries;
  if (is_target) queries = Ingest(options.queries, config, options.scaling, true).data.x;

  auto transcript = std::make_shared<Transcript>();
  Endpoint ep(id, MakeEndpointOptions(config, config.round_timeout));
  ep.SetTranscript(transcript);
  auto link = TcpLink::Connect(roster.agent_host, roster.agent_port, &ep, Role::kParty, config.startup_timeout);

  json stats = {{"role", is_target ? "target" : "party"}, {"id", id}, {"rows", local.rows()}};
  stats["setup_start_unix"] = UnixSeconds();
  bool reloaded = false;
  std::vector<CorrelatedBundle> bundles = ObtainBundles(ep, config, id, options.out_dir, reloaded);
  ep.ForbidSender(kTiId);
  stats["setup_end_unix"] = UnixSeconds();
  stats["bundles_reloaded"] = reloaded;

  PartyModel model{roster.scenario, id, m, config.columns, config.intercept, field, {}};
  std::vector<std::unique_ptr<PartyContext>> contexts;
  std::size_t served = 0;
  double train_start = 0;
  double train_end = 0;
  double infer_end = 0;

  if (!tc) {
    auto group = Range(1, static_cast<PartyId>(m));
    contexts.push_back(std::make_unique<PartyContext>(roster.session, id, group, field, roster.kappa, &bundles[0],
                                                      &ep, true));
    train_start = UnixSeconds();
    SharedMatrix beta = TrainParty(*contexts[0], local, config.trace_bound, config.iterations);
    train_end = UnixSeconds();
    model.shares.push_back({0, beta, roster.session});
    model.Save(ModelPath(options.out_dir, id));
    served = ServeTiInference(*contexts[0], beta, config.startup_timeout);
    infer_end = UnixSeconds();
  } else {
    TcServingRoles roles{roster.session, roster.target(), config.aggregator, Range(1, static_cast<PartyId>(m))};
    if (!is_target) {
      SessionId session = SessionForPlan(roster.session, roster.scenario, id);
      contexts.push_back(std::make_unique<PartyContext>(session, id, std::vector<PartyId>{id, roles.target}, field,
                                                        roster.kappa, &bundles[0], &ep, false));
      train_start = UnixSeconds();
      SharedMatrix beta = TrainParty(*contexts[0], local, config.trace_bound, config.iterations);
      train_end = UnixSeconds();
      model.shares.push_back({id, beta, session});
      model.Save(ModelPath(options.out_dir, id));
      Prng rng = RoleRng(config, fmt::format("mask-{}", id));
      served = ServeTcSource(*contexts[0], beta, roles, rng, config.startup_timeout);
      infer_end = UnixSeconds();
    } else {
      for (std::size_t i = 1; i <= m; ++i) {
        SessionId session = SessionForPlan(roster.session, roster.scenario, i);
        contexts.push_back(std::make_unique<PartyContext>(session, id,
                                                          std::vector<PartyId>{static_cast<PartyId>(i), id}, field,
                                                          roster.kappa, &bundles[i - 1], &ep, false));
      }
      std::vector<SharedMatrix> betas(m);
      train_start = UnixSeconds();
      ParallelFor(
          m, [&](std::size_t i) { betas[i] = TrainParty(*contexts[i], local, config.trace_bound, config.iterations); },
          [&] { ep.Fail("training failed"); });
      train_end = UnixSeconds();
      for (std::size_t i = 0; i < m; ++i) model.shares.push_back({i + 1, betas[i], contexts[i]->session()});
      model.Save(ModelPath(options.out_dir, id));
      std::vector<PartyContext*> ctxs;
      for (auto& c : contexts) ctxs.push_back(c.get());
      TcTarget target(ctxs, betas, roles, config.intercept, RoleRng(config, "target-queries"));
      Eigen::VectorXd predictions(queries.rows());
      for (Eigen::Index r = 0; r < queries.rows(); ++r) {
        Eigen::VectorXd row = queries.row(r).transpose();
        predictions(r) = target.Predict(std::span<const double>(row.data(), row.size()));
      }
      target.Finish();
      infer_end = UnixSeconds();
      served = static_cast<std::size_t>(queries.rows());
      WritePredictions(PredictionsPath(options.out_dir), predictions);
    }
  }
  link->Close();

  std::uint64_t rounds = 0;
  std::uint64_t instances = 0;
  for (const auto& c : contexts) {
    rounds = std::max(rounds, c->rounds_run());
    instances += c->instances_started();
  }
  json usage = json::array();
  for (const auto& b : bundles) usage.push_back(UsageJson(b));
  stats["train_start_unix"] = train_start;
  stats["train_end_unix"] = train_end;
  stats["infer_end_unix"] = infer_end;
  stats["queries_served"] = served;
  stats["rounds"] = rounds;
  stats["instances"] = instances;
  stats["rejected"] = ep.rejected();
  stats["violations"] = ep.violations();
  stats["usage"] = usage;
  SaveTranscript(ep, TranscriptPath(options.out_dir, id));
  WriteJson(StatsPath(options.out_dir, id), stats);
  return stats;
}

// --- client ----------------------------------------------------------------------

json RunClient(const SessionConfig& config, const ClientRunOptions& options) {
  config.Validate();
  if (config.roster.scenario != ScenarioKind::kTargetIndependent) {
    throw ConfigError("a separate client only exists in the target-independent scenario");
  }
  std::filesystem::create_directories(options.out_dir);
  Eigen::MatrixXd queries = Ingest(options.queries, config, options.scaling, true).data.x;
  auto transcript = std::make_shared<Transcript>();
  Endpoint ep(kClientId, MakeEndpointOptions(config, config.round_timeout));
  ep.SetTranscript(transcript);
  auto link = TcpLink::Connect(config.roster.agent_host, config.roster.agent_port, &ep, Role::kClient,
                               config.startup_timeout);
  auto group = Range(1, static_cast<PartyId>(config.sources()));
  TiClient client(ep, config.roster.session, group, config.field(), config.columns, config.intercept,
                  RoleRng(config, "client"));
  client.SetFirstAnswerTimeout(config.startup_timeout);
  double started = UnixSeconds();
  Eigen::VectorXd predictions = client.PredictAll(queries);
  client.Finish();
  double ended = UnixSeconds();
  link->Close();
  WritePredictions(PredictionsPath(options.out_dir), predictions);
  json stats = {{"role", "client"},
                {"queries", queries.rows()},
                {"infer_start_unix", started},
                {"infer_end_unix", ended},
                {"rejected", ep.rejected()}};
  SaveTranscript(ep, TranscriptPath(options.out_dir, kClientId));
  WriteJson(StatsPath(options.out_dir, kClientId), stats);
  return stats;
}

}  // namespace sharelr
