#include "sharelr/harness/scenario.hpp"

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "sharelr/harness/roles.hpp"
#include "sharelr/local_cluster.hpp"

extern char** environ;

namespace sharelr {

namespace {

using Clock = std::chrono::steady_clock;
using nlohmann::json;

double Seconds(Clock::time_point since) { return std::chrono::duration<double>(Clock::now() - since).count(); }

Eigen::MatrixXd Design(const Eigen::MatrixXd& x, bool intercept) { return intercept ? WithIntercept(x) : x; }

Eigen::VectorXd Decode(const FixedPointCodec& codec, const FieldMatrix& m) {
  auto values = codec.DecodeMatrix(m);
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

// --- process supervision -----------------------------------------------------------

struct Child {
  std::string name;
  pid_t pid = -1;
  std::filesystem::path log;
  bool done = false;
};

Child Spawn(const std::string& name, const std::filesystem::path& exe, const std::vector<std::string>& args,
            const std::filesystem::path& log) {
  std::vector<std::string> argv_store{exe.string()};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  argv.push_back(nullptr);

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  posix_spawn_file_actions_adddup2(&actions, STDOUT_FILENO, STDERR_FILENO);
  posix_spawn_file_actions_addclose(&actions, STDIN_FILENO);
  pid_t pid = -1;
  int rc = posix_spawn(&pid, exe.c_str(), &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) throw ScenarioError(fmt::format("cannot start {} ({}): {}", name, exe.string(), std::strerror(rc)));
  spdlog::debug("started {} as pid {}", name, pid);
  return Child{name, pid, log, false};
}

std::string LogTail(const std::filesystem::path& log, std::size_t lines) {
  std::ifstream in(log);
  std::vector<std::string> all;
  std::string line;
  while (std::getline(in, line)) all.push_back(line);
  std::string out;
  for (std::size_t i = all.size() > lines ? all.size() - lines : 0; i < all.size(); ++i) out += "\n  " + all[i];
  return out;
}

void KillAll(std::vector<Child>& children) {
  for (auto& c : children) {
    if (!c.done) ::kill(c.pid, SIGTERM);
  }
  for (auto& c : children) {
    if (!c.done) {
      int status = 0;
      ::waitpid(c.pid, &status, 0);
      c.done = true;
    }
  }
}

// Waits for every child; the first failure takes the rest down.
void Supervise(std::vector<Child>& children, std::chrono::milliseconds deadline) {
  auto until = Clock::now() + deadline;
  std::size_t remaining = children.size();
  while (remaining > 0) {
    bool progressed = false;
    for (auto& c : children) {
      if (c.done) continue;
      int status = 0;
      pid_t r = ::waitpid(c.pid, &status, WNOHANG);
      if (r == 0) continue;
      c.done = true;
      --remaining;
      progressed = true;
      bool ok = r == c.pid && WIFEXITED(status) && WEXITSTATUS(status) == 0;
      if (!ok) {
        std::string how = WIFSIGNALED(status) ? fmt::format("signal {}", WTERMSIG(status))
                                              : fmt::format("exit code {}", WEXITSTATUS(status));
        KillAll(children);
        throw ScenarioError(fmt::format("{} failed ({}); log {}:{}", c.name, how, c.log.string(), LogTail(c.log, 8)));
      }
    }
    if (remaining == 0) break;
    if (Clock::now() > until) {
      KillAll(children);
      throw ScenarioError(fmt::format("run did not finish within {} ms", deadline.count()));
    }
    if (!progressed) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

std::vector<TranscriptEntry> ReadTranscriptIfPresent(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return {};
  return Transcript::ReadJsonl(path.string());
}

void Append(std::vector<TranscriptEntry>& into, std::vector<TranscriptEntry> from) {
  into.insert(into.end(), std::make_move_iterator(from.begin()), std::make_move_iterator(from.end()));
}

struct SmcRun {
  std::vector<Eigen::VectorXd> betas;
  Eigen::VectorXd predictions;
  std::vector<PartyModel> models;
  std::vector<TranscriptEntry> transcript;
  double setup_seconds = 0;
  double train_seconds = 0;
  double infer_seconds = 0;
  std::uint64_t online_rounds = 0;
  std::uint64_t violations = 0;
  std::optional<std::size_t> agent_peak;
  std::optional<SessionConfig> session;
};

std::vector<Eigen::VectorXd> ReconstructBetas(const SessionConfig& s, const std::vector<PartyModel>& models) {
  FixedPointCodec codec(s.field());
  std::vector<Eigen::VectorXd> out;
  if (s.roster.scenario == ScenarioKind::kTargetIndependent) {
    std::vector<SharedMatrix> parts;
    for (const auto& m : models) parts.push_back(m.shares.at(0).beta);
    out.push_back(Decode(codec, Reconstruct(parts)));
  } else {
    const PartyModel& target = models.back();
    for (std::size_t i = 0; i + 1 < models.size(); ++i) {
      std::vector<SharedMatrix> parts{models[i].shares.at(0).beta, target.shares.at(i).beta};
      out.push_back(Decode(codec, Reconstruct(parts)));
    }
  }
  return out;
}

SmcRun RunInProcess(const ScenarioConfig& c, const ScenarioData& data, double trace_bound) {
  LocalRunOptions o;
  o.e = c.e;
  o.f = c.f;
  o.kappa = c.kappa;
  o.iterations = c.iterations;
  o.trace_bound = trace_bound;
  o.intercept = c.intercept;
  o.encrypt = c.encrypt;
  o.seed = c.protocol_seed;
  o.round_timeout = c.round_timeout;
  LocalRunResult r = c.scenario == ScenarioKind::kTargetIndependent
                         ? RunTiLocal(data.sources, data.test.x, o)
                         : RunTcLocal(data.sources, data.calibration, data.test.x, o);
  SmcRun out;
  out.betas = r.betas;
  out.predictions = r.predictions;
  out.models = r.models;
  out.transcript = r.transcript->Entries();
  out.setup_seconds = r.setup_seconds;
  out.train_seconds = r.train_seconds;
  out.infer_seconds = r.infer_seconds;
  out.online_rounds = r.online_rounds;
  out.violations = r.ti_envelopes_after_setup;
  return out;
}

SmcRun RunLocalSpawn(const ScenarioConfig& c, const ScenarioData& data, double trace_bound) {
  if (c.cli_path.empty()) throw ScenarioError("local-spawn mode needs the path of the sharelr binary");
  const std::filesystem::path work = std::filesystem::absolute(c.work_dir);
  const std::size_t n = c.scenario == ScenarioKind::kTargetIndependent ? c.m : c.m + 1;
  // Only the subdirectories a run creates are cleared.
  for (const char* sub : {"data", "logs", "agent", "ti", "client"}) std::filesystem::remove_all(work / sub);
  for (std::size_t i = 1; i <= n; ++i) std::filesystem::remove_all(work / fmt::format("party-{}", i));
  for (const char* sub : {"data", "logs", "agent"}) std::filesystem::create_directories(work / sub);

  std::vector<std::filesystem::path> party_data;
  for (std::size_t i = 0; i < c.m; ++i) {
    party_data.push_back(work / "data" / fmt::format("party-{}.csv", i + 1));
    WriteDataset(party_data.back(), data.sources[i]);
  }
  const auto test_csv = work / "data" / "test.csv";
  WriteCsv(test_csv, data.test.x, data.labeled ? &data.test.y : nullptr);
  if (c.scenario == ScenarioKind::kTargetCalibrated) {
    party_data.push_back(work / "data" / "calibration.csv");
    WriteDataset(party_data.back(), data.calibration);
  }

  const auto exe = c.cli_path;
  const auto port_file = work / "agent" / "port";
  const auto agent_stats = work / "agent" / "stats.json";
  std::vector<std::string> agent_args{"serve-ba",    "--host",  c.agent_host, "--port", std::to_string(c.agent_port),
                                      "--port-file", port_file, "--stats",    agent_stats, "--parties",
                                      std::to_string(n)};
  std::vector<Child> agent{Spawn("agent", exe, agent_args, work / "logs" / "agent.log")};
  std::uint16_t port = 0;
  try {
    port = AwaitPortFile(port_file, std::chrono::seconds(30));
  } catch (const std::exception&) {
    KillAll(agent);
    throw ScenarioError(fmt::format("the agent did not start; log:{}", LogTail(work / "logs" / "agent.log", 8)));
  }

  SessionConfig session = c.MakeSession(trace_bound, data.test.rows(), port);
  const auto session_file = work / "session.conf";
  session.Save(session_file);

  std::vector<Child> roles;
  auto stop_agent = [&] {
    try {
      RequestAgentShutdown(c.agent_host, port);
    } catch (const std::exception& e) {
      spdlog::warn("agent shutdown request failed: {}", e.what());
    }
    try {
      Supervise(agent, std::chrono::seconds(30));
    } catch (const std::exception&) {
      KillAll(agent);
    }
  };
  try {
    for (std::size_t i = 1; i <= n; ++i) {
      std::vector<std::string> args{"serve-party", "--session", session_file.string(), "--id", std::to_string(i),
                                    "--data",      party_data[i - 1].string(), "--out",
                                    (work / fmt::format("party-{}", i)).string()};
      if (c.scenario == ScenarioKind::kTargetCalibrated && i == n) {
        args.insert(args.end(), {"--queries", test_csv.string()});
      }
      roles.push_back(Spawn(fmt::format("party {}", i), exe, args, work / "logs" / fmt::format("party-{}.log", i)));
    }
    if (c.scenario == ScenarioKind::kTargetIndependent) {
      roles.push_back(Spawn("client", exe,
                            {"run-client", "--session", session_file.string(), "--queries", test_csv.string(),
                             "--out", (work / "client").string()},
                            work / "logs" / "client.log"));
    }
    roles.push_back(Spawn("trusted initializer", exe,
                          {"ti-gen", "--session", session_file.string(), "--out", (work / "ti").string()},
                          work / "logs" / "ti.log"));
    Supervise(roles, c.startup_timeout * 2);
  } catch (...) {
    KillAll(roles);
    stop_agent();
    throw;
  }
  stop_agent();

  SmcRun out;
  double setup_start = 1e300, setup_end = 0, train_start = 1e300, train_end = 0, infer_end = 0;
  for (std::size_t i = 1; i <= n; ++i) {
    auto dir = work / fmt::format("party-{}", i);
    auto id = static_cast<PartyId>(i);
    json st = ReadJson(StatsPath(dir, id));
    setup_start = std::min(setup_start, st.at("setup_start_unix").get<double>());
    setup_end = std::max(setup_end, st.at("setup_end_unix").get<double>());
    train_start = std::min(train_start, st.at("train_start_unix").get<double>());
    train_end = std::max(train_end, st.at("train_end_unix").get<double>());
    infer_end = std::max(infer_end, st.at("infer_end_unix").get<double>());
    out.violations += st.at("violations").get<std::uint64_t>();
    if (i == 1) out.online_rounds = st.at("rounds").get<std::uint64_t>();
    out.models.push_back(PartyModel::Load(ModelPath(dir, id)));
    Append(out.transcript, ReadTranscriptIfPresent(TranscriptPath(dir, id)));
  }
  Append(out.transcript, ReadTranscriptIfPresent(TranscriptPath(work / "ti", kTiId)));
  if (c.scenario == ScenarioKind::kTargetIndependent) {
    Append(out.transcript, ReadTranscriptIfPresent(TranscriptPath(work / "client", kClientId)));
    json st = ReadJson(StatsPath(work / "client", kClientId));
    infer_end = std::max(infer_end, st.at("infer_end_unix").get<double>());
    out.predictions = ReadPredictions(PredictionsPath(work / "client"));
  } else {
    out.predictions = ReadPredictions(PredictionsPath(work / fmt::format("party-{}", n)));
  }
  out.setup_seconds = setup_end - setup_start;
  out.train_seconds = train_end - train_start;
  out.infer_seconds = infer_end - train_end;
  out.betas = ReconstructBetas(session, out.models);
  json agent_json = ReadJson(agent_stats);
  out.agent_peak = agent_json.at("peak_connections").get<std::size_t>();
  out.session = session;
  return out;
}

}  // namespace

LaunchMode ParseLaunchMode(std::string_view name) {
  if (name == "local-spawn") return LaunchMode::kLocalSpawn;
  if (name == "in-process") return LaunchMode::kInProcess;
  throw ConfigError(fmt::format("unknown mode '{}' (expected local-spawn or in-process)", name));
}

std::string_view LaunchModeName(LaunchMode mode) {
  return mode == LaunchMode::kLocalSpawn ? "local-spawn" : "in-process";
}

ScenarioConfig ScenarioConfig::FromConfig(const KeyValueFile& kv, ScenarioConfig c) {
  auto size = [&](const char* key, std::size_t& v) {
    long long x = kv.GetInt(key, static_cast<long long>(v));
    if (x < 0) throw ConfigError(fmt::format("{} must not be negative", key));
    v = static_cast<std::size_t>(x);
  };
  if (auto s = kv.Get("scenario")) c.scenario = ParseScenarioKind(*s);
  size("m", c.m);
  size("features", c.features);
  size("rows", c.rows);
  size("calibration_rows", c.calibration_rows);
  c.e = static_cast<int>(kv.GetInt("field.e", c.e));
  c.f = static_cast<int>(kv.GetInt("field.f", c.f));
  c.kappa = static_cast<int>(kv.GetInt("kappa", c.kappa));
  size("iterations", c.iterations);
  c.trace_bound = kv.GetDouble("trace_bound", c.trace_bound);
  c.intercept = kv.GetBool("intercept", c.intercept);
  c.data_seed = static_cast<std::uint64_t>(kv.GetInt("data_seed", static_cast<long long>(c.data_seed)));
  c.protocol_seed = static_cast<std::uint64_t>(kv.GetInt("protocol_seed", static_cast<long long>(c.protocol_seed)));
  c.noise = kv.GetDouble("noise", c.noise);
  c.party_spread = kv.GetDouble("party_spread", c.party_spread);
  if (auto s = kv.Get("data_dir")) c.data_dir = *s;
  c.test_labeled = kv.GetBool("test_labeled", c.test_labeled);
  if (auto s = kv.Get("mode")) c.mode = ParseLaunchMode(*s);
  if (kv.Has("party")) {
    // Reuse the roster parser for the party lines.
    KeyValueFile roster;
    roster.Set("scenario", std::string(ScenarioName(c.scenario)));
    for (const auto& line : kv.GetAll("party")) roster.Append("party", line);
    c.parties = SessionRoster::FromConfig(roster).parties;
  }
  c.agent_host = kv.GetString("agent_host", c.agent_host);
  long long port = kv.GetInt("agent_port", c.agent_port);
  if (port < 0 || port > 65535) throw ConfigError(fmt::format("agent_port {} out of range", port));
  c.agent_port = static_cast<std::uint16_t>(port);
  c.encrypt = kv.GetBool("encrypt", c.encrypt);
  c.round_timeout = std::chrono::milliseconds(kv.GetInt("timeout_ms", c.round_timeout.count()));
  c.startup_timeout = std::chrono::milliseconds(kv.GetInt("startup_timeout_ms", c.startup_timeout.count()));
  if (auto s = kv.Get("work_dir")) c.work_dir = *s;
  if (auto s = kv.Get("cli")) c.cli_path = *s;
  if (auto s = kv.Get("report")) c.report_path = *s;
  return c;
}

void ScenarioConfig::WriteTo(KeyValueFile& kv) const {
  kv.Set("scenario", std::string(ScenarioName(scenario)));
  kv.Set("m", std::to_string(m));
  kv.Set("features", std::to_string(features));
  kv.Set("rows", std::to_string(rows));
  kv.Set("calibration_rows", std::to_string(calibration_rows));
  kv.Set("field.e", std::to_string(e));
  kv.Set("field.f", std::to_string(f));
  kv.Set("kappa", std::to_string(kappa));
  kv.Set("iterations", std::to_string(iterations));
  kv.Set("trace_bound", fmt::format("{:.17g}", trace_bound));
  kv.Set("intercept", intercept ? "true" : "false");
  kv.Set("data_seed", std::to_string(data_seed));
  kv.Set("protocol_seed", std::to_string(protocol_seed));
  kv.Set("noise", fmt::format("{:.17g}", noise));
  kv.Set("party_spread", fmt::format("{:.17g}", party_spread));
  if (!data_dir.empty()) kv.Set("data_dir", data_dir.string());
  kv.Set("test_labeled", test_labeled ? "true" : "false");
  kv.Set("mode", std::string(LaunchModeName(mode)));
  kv.Remove("party");
  for (const auto& p : parties) kv.Append("party", fmt::format("{} {}", p.id, p.host));
  kv.Set("agent_host", agent_host);
  kv.Set("agent_port", std::to_string(agent_port));
  kv.Set("encrypt", encrypt ? "true" : "false");
  kv.Set("timeout_ms", std::to_string(round_timeout.count()));
  kv.Set("startup_timeout_ms", std::to_string(startup_timeout.count()));
  kv.Set("work_dir", work_dir.string());
  if (!cli_path.empty()) kv.Set("cli", cli_path.string());
  if (!report_path.empty()) kv.Set("report", report_path.string());
}

void ScenarioConfig::Validate() const {
  if (m < 2 || m > 64) throw ConfigError(fmt::format("m = {} is outside 2..64", m));
  if (features < 1) throw ConfigError("a scenario needs at least one feature");
  if (iterations < 1) throw ConfigError("iterations must be at least 1");
  if (data_dir.empty() && rows < columns() + 1) {
    throw ConfigError(fmt::format("rows = {} is below k + 1 = {}", rows, columns() + 1));
  }
  if (scenario == ScenarioKind::kTargetCalibrated) {
    if (calibration_rows < 1) throw ConfigError("the target-calibrated scenario needs calibration_rows >= 1");
    if (data_dir.empty() && calibration_rows >= rows) {
      throw ConfigError(fmt::format("calibration_rows = {} leaves no target rows to test on", calibration_rows));
    }
  }
  if (trace_bound < 0) throw ConfigError("trace_bound must not be negative");
  if (round_timeout.count() <= 0 || startup_timeout.count() <= 0) throw ConfigError("timeouts must be positive");
  MakeParams(e, f);
  // Also checks the explicit roster.
  MakeSession(trace_bound > 0 ? trace_bound : 1.0, 0, agent_port).Validate();
}

SessionConfig ScenarioConfig::MakeSession(double bound, std::size_t inferences, std::uint16_t port) const {
  SessionConfig s;
  SessionRoster& r = s.roster;
  if (protocol_seed != 0) Prng::Seeded(protocol_seed, "session").Fill(r.session);
  else Prng::Secure().Fill(r.session);
  r.scenario = scenario;
  r.e = e;
  r.f = f;
  r.kappa = kappa;
  r.agent_host = agent_host;
  r.agent_port = port;
  r.has_ti = true;
  r.has_client = scenario == ScenarioKind::kTargetIndependent;
  r.encrypt = encrypt;
  const std::size_t n = scenario == ScenarioKind::kTargetIndependent ? m : m + 1;
  if (!parties.empty()) {
    r.parties = parties;
    if (r.parties.size() != n) {
      throw ConfigError(fmt::format("the roster lists {} parties; the scenario needs {}", r.parties.size(), n));
    }
  } else {
    for (std::size_t i = 1; i <= n; ++i) r.parties.push_back({static_cast<PartyId>(i), "127.0.0.1"});
  }
  s.columns = columns();
  s.iterations = iterations;
  s.inferences = inferences;
  s.trace_bound = bound;
  s.intercept = intercept;
  s.seed = protocol_seed;
  s.round_timeout = round_timeout;
  s.startup_timeout = startup_timeout;
  s.aggregator = 1;
  s.Validate();
  return s;
}

std::size_t ScenarioData::total_training_rows() const {
  std::size_t n = calibration.rows();
  for (const auto& s : sources) n += s.rows();
  return n;
}

ScenarioData LoadScenarioData(const ScenarioConfig& c) {
  ScenarioData d;
  if (c.data_dir.empty()) {
    SynthesisOptions so;
    so.seed = c.data_seed;
    so.sources = c.m;
    so.rows = c.rows;
    so.features = c.features;
    so.noise = c.noise;
    so.party_spread = c.party_spread;
    SyntheticData syn = Synthesize(so);
    d.sources = std::move(syn.sources);
    if (c.scenario == ScenarioKind::kTargetCalibrated) {
      std::tie(d.calibration, d.test) = SplitRows(syn.target, c.calibration_rows);
    } else {
      d.test = std::move(syn.target);
    }
    return d;
  }
  // Files: one range fitted over all source rows, applied everywhere.
  std::vector<PlainDataset> raw;
  for (std::size_t i = 1; i <= c.m; ++i) {
    IngestOptions io;
    io.features = c.features;
    io.scale = false;
    raw.push_back(IngestCsv(c.data_dir / fmt::format("party-{}.csv", i), io).data);
  }
  Scaling scaling = Scaling::Fit(Stack(raw).x);
  for (auto& part : raw) d.sources.push_back({scaling.Apply(part.x), part.y});
  IngestOptions test;
  test.features = c.features;
  test.scaling = scaling;
  test.has_response = c.test_labeled;
  d.test = IngestCsv(c.data_dir / "test.csv", test).data;
  d.labeled = c.test_labeled;
  if (!d.labeled) d.test.y = Eigen::VectorXd::Zero(d.test.x.rows());
  if (c.scenario == ScenarioKind::kTargetCalibrated) {
    IngestOptions cal;
    cal.features = c.features;
    cal.scaling = scaling;
    d.calibration = IngestCsv(c.data_dir / "calibration.csv", cal).data;
  }
  return d;
}

double ScenarioTraceBound(const ScenarioConfig& c, const ScenarioData& data) {
  std::size_t rows = 0;
  if (c.scenario == ScenarioKind::kTargetIndependent) {
    rows = data.total_training_rows();
  } else {
    for (const auto& s : data.sources) rows = std::max(rows, s.rows() + data.calibration.rows());
  }
  double required = DefaultTraceBound(rows, c.columns());
  if (c.trace_bound == 0) return required;
  if (c.trace_bound < required) {
    throw ConfigError(fmt::format("trace_bound {} is below n*k = {} for features scaled to [-1, 1]", c.trace_bound,
                                  required));
  }
  return c.trace_bound;
}

ClearResult RunClear(const ScenarioConfig& c, const ScenarioData& data) {
  ClearResult out;
  auto started = Clock::now();
  if (c.scenario == ScenarioKind::kTargetIndependent) {
    PlainDataset all = Stack(data.sources);
    out.betas.push_back(SolveNormalEquations(Design(all.x, c.intercept), all.y));
  } else {
    for (const auto& s : data.sources) {
      std::vector<PlainDataset> pair{s, data.calibration};
      PlainDataset both = Stack(pair);
      out.betas.push_back(SolveNormalEquations(Design(both.x, c.intercept), both.y));
    }
  }
  out.train_seconds = Seconds(started);
  started = Clock::now();
  Eigen::MatrixXd x = Design(data.test.x, c.intercept);
  out.predictions = Eigen::VectorXd::Zero(x.rows());
  for (const auto& b : out.betas) out.predictions += x * b;
  out.predictions /= static_cast<double>(out.betas.size());
  out.infer_seconds = Seconds(started);
  return out;
}

std::vector<Bytes> SecretPatterns(const ScenarioConfig& c, const ScenarioData& data,
                                  const std::vector<PartyModel>& models) {
  FieldPtr field = MakeParams(c.e, c.f);
  FixedPointCodec codec(field);
  const std::size_t width = field->ElementBytes();
  std::vector<Bytes> out;
  auto add = [&](const FieldMatrix& m) {
    for (const auto& v : m.values()) {
      if (v == 0) continue;
      ByteWriter w;
      WriteElement(w, v, width);
      out.push_back(w.Take());
    }
  };
  auto add_data = [&](const PlainDataset& d) {
    LocalDataset enc = LocalDataset::Encode(codec, d, c.intercept);
    LocalMoments mom = ComputeLocalMoments(enc.x, enc.y, field->f);
    add(enc.x);
    add(enc.y);
    add(mom.gram);
    add(mom.xty);
  };
  for (const auto& s : data.sources) add_data(s);
  if (c.scenario == ScenarioKind::kTargetCalibrated) add_data(data.calibration);
  for (const auto& m : models) {
    for (const auto& s : m.shares) add(s.beta.value);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

ScenarioOutcome RunScenario(const ScenarioConfig& config) {
  config.Validate();
  ScenarioOutcome out;
  out.data = LoadScenarioData(config);
  const double bound = ScenarioTraceBound(config, out.data);
  out.clear = RunClear(config, out.data);

  SmcRun smc = config.mode == LaunchMode::kInProcess ? RunInProcess(config, out.data, bound)
                                                     : RunLocalSpawn(config, out.data, bound);
  out.smc_betas = smc.betas;
  out.smc_predictions = smc.predictions;
  out.models = std::move(smc.models);
  out.transcript = std::move(smc.transcript);
  out.session = smc.session ? *smc.session : config.MakeSession(bound, out.data.test.rows(), config.agent_port);

  RunReport& r = out.report;
  r.scenario = std::string(ScenarioName(config.scenario));
  r.mode = std::string(LaunchModeName(config.mode));
  r.m = config.m;
  r.features = config.features;
  r.rows = out.data.sources.empty() ? 0 : out.data.sources[0].rows();
  r.test_rows = out.data.test.rows();
  r.setup_seconds = smc.setup_seconds;
  r.train_clear_seconds = out.clear.train_seconds;
  r.train_smc_seconds = smc.train_seconds;
  r.infer_clear_seconds = out.clear.infer_seconds;
  r.infer_smc_seconds = smc.infer_seconds;
  if (out.data.labeled && out.data.test.rows() > 0) {
    r.rmse_clear = Rmse(out.clear.predictions, out.data.test.y);
    r.rmse_smc = Rmse(out.smc_predictions, out.data.test.y);
  }
  if (smc.betas.size() != out.clear.betas.size()) {
    throw ScenarioError(fmt::format("{} SMC models against {} clear ones", smc.betas.size(), out.clear.betas.size()));
  }
  for (std::size_t i = 0; i < smc.betas.size(); ++i) {
    r.max_beta_diff = std::max(r.max_beta_diff, (smc.betas[i] - out.clear.betas[i]).cwiseAbs().maxCoeff());
  }
  if (out.smc_predictions.size() != out.clear.predictions.size()) {
    throw ScenarioError(fmt::format("{} SMC predictions for {} test rows", out.smc_predictions.size(),
                                    out.clear.predictions.size()));
  }
  if (out.smc_predictions.size() > 0) {
    r.max_prediction_diff = (out.smc_predictions - out.clear.predictions).cwiseAbs().maxCoeff();
  }
  r.online_rounds = smc.online_rounds;
  r.ti_envelopes_after_setup = std::max<std::uint64_t>(AuditTranscripts(out.transcript, {}).ti_after_setup,
                                                        smc.violations);
  r.agent_peak_connections = smc.agent_peak;
  r.messages = TallyMessages(out.transcript);
  if (!config.report_path.empty()) AppendJsonl(config.report_path.string(), r);
  return out;
}

std::filesystem::path SelfExecutable() { return std::filesystem::read_symlink("/proc/self/exe"); }

}  // namespace sharelr
