#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <gtest/gtest.h>

#include "sharelr/harness/dataset.hpp"
#include "sharelr/harness/labeling.hpp"
#include "sharelr/harness/plot.hpp"
#include "sharelr/harness/report.hpp"
#include "sharelr/harness/scenario.hpp"

namespace sharelr {
namespace {

std::filesystem::path TempDir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("sharelr-harness-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string Slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteText(const std::filesystem::path& p, const std::string& text) { std::ofstream(p, std::ios::trunc) << text; }

ScenarioConfig Small(ScenarioKind kind, std::size_t m) {
  ScenarioConfig c;
  c.scenario = kind;
  c.m = m;
  c.features = 3;
  c.rows = 60;
  c.calibration_rows = 20;
  c.protocol_seed = 11;
  c.round_timeout = std::chrono::seconds(30);
  c.startup_timeout = std::chrono::seconds(60);
  c.mode = LaunchMode::kInProcess;
  c.cli_path = SHARELR_CLI_PATH;
  return c;
}

// --- labeling ----------------------------------------------------------------------

TEST(Labeling, ThresholdMapsToZero) {
  EXPECT_EQ(DrowsinessIndex(1.0, 1.0), 0.0);
  EXPECT_EQ(DrowsinessIndex(0.5, 1.0), 0.0);
  EXPECT_EQ(DrowsinessIndex(0.0, 1.0), 0.0);
}

TEST(Labeling, MatchesHalfAngleTanh) {
  // (1 - e^-d) / (1 + e^-d) = tanh(d / 2).
  EXPECT_NEAR(DrowsinessIndex(2.0, 1.0), 0.462117, 1e-6);
  for (double tau = 1.0; tau <= 10.0; tau += 0.37) {
    EXPECT_NEAR(DrowsinessIndex(tau, 1.0), std::tanh((tau - 1.0) / 2), 1e-15) << tau;
  }
}

TEST(Labeling, MonotoneAndBounded) {
  double prev = -1;
  for (int i = 0; i <= 10000; ++i) {
    double tau = i * 0.001;
    double y = DrowsinessIndex(tau, 1.0);
    EXPECT_GE(y, prev);
    EXPECT_GE(y, 0.0);
    EXPECT_LT(y, 1.0);
    prev = y;
  }
}

TEST(Labeling, RejectsBadArguments) {
  EXPECT_THROW(DrowsinessIndex(-0.1, 1.0), std::invalid_argument);
  EXPECT_THROW(DrowsinessIndex(1.0, 0.0), std::invalid_argument);
}

TEST(Smoothing, ConstantSeriesUnchanged) {
  std::vector<double> s(40, 0.3);
  auto out = SmoothMovingAverage(s, 90, 2);
  ASSERT_EQ(out.size(), s.size());
  for (double v : out) EXPECT_NEAR(v, 0.3, 1e-15);
}

TEST(Smoothing, ImpulseSpreadsToPlateau) {
  std::vector<double> s(60, 0.0);
  s[30] = 1.0;
  // 9 s at 1 s per sample: 9 samples.
  auto out = SmoothMovingAverage(s, 9, 1);
  for (std::size_t i = 0; i < s.size(); ++i) {
    double expected = (i >= 26 && i <= 34) ? 1.0 / 9 : 0.0;
    EXPECT_NEAR(out[i], expected, 1e-15) << i;
  }
}

TEST(Smoothing, WindowTruncatesSymmetricallyAtEnds) {
  std::vector<double> s{6, 0, 3, 0, 0};
  auto out = SmoothMovingAverage(s, 3, 1);
  EXPECT_DOUBLE_EQ(out[0], 6);
  EXPECT_DOUBLE_EQ(out[1], 3);
  EXPECT_DOUBLE_EQ(out[2], 1);
  EXPECT_DOUBLE_EQ(out[3], 1);
  EXPECT_DOUBLE_EQ(out[4], 0);
}

TEST(Smoothing, SubSampleWindowIsIdentity) {
  std::vector<double> s{0.1, 0.9, 0.4, 0.7};
  EXPECT_EQ(SmoothMovingAverage(s, 0.5, 1), s);
}

TEST(Smoothing, RejectsEmptySeries) {
  std::vector<double> s;
  EXPECT_THROW(SmoothMovingAverage(s, 90, 1), std::invalid_argument);
}

// --- synthesis and ingestion -----------------------------------------------------------

TEST(Synthesis, SameSeedSameFiles) {
  auto dir = TempDir("synth");
  SynthesisOptions o;
  o.sources = 3;
  o.rows = 40;
  o.features = 5;
  WriteDataset(dir / "a.csv", Synthesize(o).sources[1]);
  WriteDataset(dir / "b.csv", Synthesize(o).sources[1]);
  o.seed = 2;
  WriteDataset(dir / "c.csv", Synthesize(o).sources[1]);
  EXPECT_EQ(Slurp(dir / "a.csv"), Slurp(dir / "b.csv"));
  EXPECT_NE(Slurp(dir / "a.csv"), Slurp(dir / "c.csv"));
}

TEST(Synthesis, NoiselessDataRecoversPlant) {
  SynthesisOptions o;
  o.sources = 4;
  o.rows = 50;
  o.features = 6;
  o.noise = 0;
  SyntheticData d = Synthesize(o);
  PlainDataset all = Stack(d.sources);
  Eigen::VectorXd beta = SolveNormalEquations(WithIntercept(all.x), all.y);
  EXPECT_LT((beta - d.plant).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Synthesis, DefaultShapeMatchesDrivingStudy) {
  SyntheticData d = Synthesize(SynthesisOptions{});
  ASSERT_EQ(d.sources.size(), 14u);
  EXPECT_EQ(d.sources[0].rows(), 1200u);
  EXPECT_EQ(d.sources[0].features(), 30u);
  EXPECT_EQ(d.target.rows(), 1200u);
  EXPECT_LE(d.target.x.cwiseAbs().maxCoeff(), 1.0);
  EXPECT_GE(d.target.y.minCoeff(), 0.0);
  EXPECT_LE(d.target.y.maxCoeff(), 1.0);
}

TEST(Csv, RoundTripIsExact) {
  auto dir = TempDir("csv");
  SynthesisOptions o;
  o.sources = 1;
  o.rows = 30;
  o.features = 4;
  PlainDataset d = Synthesize(o).sources[0];
  WriteDataset(dir / "d.csv", d);
  IngestOptions io;
  io.scaling = Scaling::Identity(4);
  Ingested back = IngestCsv(dir / "d.csv", io);
  EXPECT_EQ(back.data.x, d.x);
  EXPECT_EQ(back.data.y, d.y);
}

TEST(Csv, RaggedRowNamesItsLine) {
  auto dir = TempDir("ragged");
  WriteText(dir / "r.csv", "x1,x2,y\n0.1,0.2,0.3\n0.1,0.3\n");
  try {
    IngestCsv(dir / "r.csv");
    FAIL() << "ragged row accepted";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("r.csv:3"), std::string::npos) << e.what();
  }
}

TEST(Csv, NonNumericCellRejected) {
  auto dir = TempDir("nonnum");
  WriteText(dir / "n.csv", "0.1,0.2,0.3\n0.1,abc,0.3\n");
  EXPECT_THROW(IngestCsv(dir / "n.csv"), DataError);
}

TEST(Csv, HeldOutRowsAreClampedToScaledRange) {
  Eigen::MatrixXd train(3, 2);
  train << 0, 10, 5, 20, 10, 30;
  Scaling s = Scaling::Fit(train);
  Eigen::MatrixXd held(2, 2);
  held << -5, 25, 12, 40;
  Eigen::MatrixXd out = s.Apply(held, true);
  EXPECT_DOUBLE_EQ(out(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(out(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(out(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(out(1, 1), 1.0);
  EXPECT_THROW(s.Apply(held, false), DataError);
  Scaling again = Scaling::FromConfig(s.ToConfig());
  EXPECT_EQ(again.lo, s.lo);
  EXPECT_EQ(again.hi, s.hi);
}

// --- configuration -------------------------------------------------------------------

TEST(ScenarioConfigTest, DuplicatePartyIdFailsValidation) {
  auto kv = KeyValueFile::Parse("scenario = ti-lr\nm = 3\nparty = 1\nparty = 2\nparty = 2\n");
  EXPECT_THROW(ScenarioConfig::FromConfig(kv).Validate(), ConfigError);
}

TEST(ScenarioConfigTest, RejectsOutOfRangeValues) {
  ScenarioConfig c = Small(ScenarioKind::kTargetIndependent, 1);
  EXPECT_THROW(c.Validate(), ConfigError);
  c.m = 65;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = Small(ScenarioKind::kTargetCalibrated, 2);
  c.calibration_rows = 0;
  EXPECT_THROW(c.Validate(), ConfigError);
  c.calibration_rows = c.rows;
  EXPECT_THROW(c.Validate(), ConfigError);
}

TEST(ScenarioConfigTest, TraceBoundBelowRowsTimesColumnsRejected) {
  ScenarioConfig c = Small(ScenarioKind::kTargetIndependent, 2);
  c.trace_bound = 100;  // 120 rows x 4 columns need 480
  EXPECT_THROW(RunScenario(c), ConfigError);
}

TEST(ScenarioConfigTest, FileOverridesFlags) {
  ScenarioConfig flags = Small(ScenarioKind::kTargetIndependent, 4);
  auto kv = KeyValueFile::Parse("m = 7\nmode = local-spawn\n");
  ScenarioConfig c = ScenarioConfig::FromConfig(kv, flags);
  EXPECT_EQ(c.m, 7u);
  EXPECT_EQ(c.mode, LaunchMode::kLocalSpawn);
  EXPECT_EQ(c.features, flags.features);
  KeyValueFile out;
  c.WriteTo(out);
  ScenarioConfig back = ScenarioConfig::FromConfig(out);
  EXPECT_EQ(back.m, 7u);
  EXPECT_EQ(back.protocol_seed, flags.protocol_seed);
  EXPECT_EQ(back.cli_path, flags.cli_path);
}

TEST(SessionConfigTest, SaveLoadRoundTrip) {
  auto dir = TempDir("session");
  ScenarioConfig c = Small(ScenarioKind::kTargetCalibrated, 3);
  SessionConfig s = c.MakeSession(1000, 17, 4242);
  s.Save(dir / "s.conf");
  SessionConfig back = SessionConfig::Load(dir / "s.conf");
  EXPECT_EQ(back.roster.session, s.roster.session);
  EXPECT_EQ(back.roster.parties.size(), 4u);
  EXPECT_EQ(back.roster.agent_port, 4242);
  EXPECT_EQ(back.inferences, 17u);
  EXPECT_EQ(back.trace_bound, 1000);
  EXPECT_EQ(back.startup_timeout, s.startup_timeout);
}

// --- scenario runs -----------------------------------------------------------------

TEST(RunScenarioTest, TiTwoPartiesRmseParity) {
  ScenarioOutcome out = RunScenario(Small(ScenarioKind::kTargetIndependent, 2));
  const RunReport& r = out.report;
  ASSERT_TRUE(r.rmse_clear && r.rmse_smc);
  EXPECT_LE(std::abs(*r.rmse_clear - *r.rmse_smc), 1e-6);
  EXPECT_LE(r.max_beta_diff, 1e-6);
  EXPECT_EQ(r.test_rows, 60u);  // the whole target set
  EXPECT_EQ(r.ti_envelopes_after_setup, 0u);
  EXPECT_GT(r.messages.by_kind.at("shares").messages, 0u);
}

TEST(RunScenarioTest, TcThreeSourcesUsesThreePairSessions) {
  ScenarioOutcome out = RunScenario(Small(ScenarioKind::kTargetCalibrated, 3));
  const RunReport& r = out.report;
  ASSERT_TRUE(r.rmse_clear && r.rmse_smc);
  EXPECT_LE(std::abs(*r.rmse_clear - *r.rmse_smc), 1e-6);
  EXPECT_EQ(out.smc_betas.size(), 3u);
  EXPECT_EQ(r.test_rows, 40u);
  std::set<SessionId> sessions;
  for (const auto& e : out.transcript) {
    if (e.kind == PayloadKind::kShares && InstanceKind(e.instance) == ProtocolKind::kMatInv) sessions.insert(e.session);
  }
  EXPECT_EQ(sessions.size(), 3u);
}

TEST(RunScenarioTest, AuditOfTranscript) {
  ScenarioConfig c = Small(ScenarioKind::kTargetIndependent, 3);
  c.iterations = 12;
  ScenarioOutcome out = RunScenario(c);
  TranscriptAudit a = AuditTranscripts(out.transcript, SecretPatterns(c, out.data, out.models));
  EXPECT_GT(a.dmm_instances, 0u);
  EXPECT_EQ(a.dmm_multi_round, 0u);
  EXPECT_EQ(a.matinv_instances, 3u);  // one per sender
  EXPECT_EQ(a.matinv_min_rounds, 24u);
  EXPECT_EQ(a.matinv_max_rounds, 24u);
  EXPECT_EQ(a.ti_after_setup, 0u);
  EXPECT_EQ(a.secret_hits, 0u);
}

TEST(RunScenarioTest, UnlabeledTestSetHasNoRmse) {
  auto dir = TempDir("unlabeled");
  SynthesisOptions o;
  o.sources = 2;
  o.rows = 40;
  o.features = 3;
  SyntheticData d = Synthesize(o);
  WriteDataset(dir / "party-1.csv", d.sources[0]);
  WriteDataset(dir / "party-2.csv", d.sources[1]);
  WriteCsv(dir / "test.csv", d.target.x, nullptr);
  ScenarioConfig c = Small(ScenarioKind::kTargetIndependent, 2);
  c.data_dir = dir;
  c.test_labeled = false;
  ScenarioOutcome out = RunScenario(c);
  EXPECT_FALSE(out.report.rmse_clear);
  EXPECT_FALSE(out.report.rmse_smc);
  EXPECT_LE(out.report.max_prediction_diff, 1e-6);
  EXPECT_FALSE(out.report.ToJson().contains("rmse_smc"));
}

// Separate processes and threads see the same messages when seeded and
// unencrypted (sealing draws fresh nonces).
void ExpectSameTranscripts(ScenarioKind kind, std::size_t m) {
  ScenarioConfig c = Small(kind, m);
  c.encrypt = false;
  c.rows = 30;
  c.calibration_rows = 10;
  ScenarioOutcome threads = RunScenario(c);
  c.mode = LaunchMode::kLocalSpawn;
  c.work_dir = TempDir(fmt::format("spawn-{}-{}", ScenarioName(kind), m));
  ScenarioOutcome processes = RunScenario(c);
  auto a = CanonicalMessages(threads.transcript);
  auto b = CanonicalMessages(processes.transcript);
  EXPECT_EQ(a.size(), b.size());
  EXPECT_TRUE(a == b);
  EXPECT_EQ(threads.smc_predictions, processes.smc_predictions);
  ASSERT_TRUE(processes.report.agent_peak_connections);
  EXPECT_LE(*processes.report.agent_peak_connections, m + 3);
}

TEST(RunScenarioTest, LocalSpawnMatchesInProcessTi) { ExpectSameTranscripts(ScenarioKind::kTargetIndependent, 2); }

TEST(RunScenarioTest, LocalSpawnMatchesInProcessTc) { ExpectSameTranscripts(ScenarioKind::kTargetCalibrated, 2); }

TEST(RunScenarioTest, MissingBinaryIsReported) {
  ScenarioConfig c = Small(ScenarioKind::kTargetIndependent, 2);
  c.mode = LaunchMode::kLocalSpawn;
  c.cli_path = "/nonexistent/sharelr";
  c.work_dir = TempDir("missing");
  EXPECT_THROW(RunScenario(c), ScenarioError);
}

// --- reports -----------------------------------------------------------------------

TEST(Report, JsonRoundTrip) {
  ScenarioOutcome out = RunScenario(Small(ScenarioKind::kTargetIndependent, 2));
  auto dir = TempDir("report");
  AppendJsonl((dir / "r.jsonl").string(), out.report);
  AppendJsonl((dir / "r.jsonl").string(), out.report);
  auto back = ReadJsonl((dir / "r.jsonl").string());
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].ToJson(), out.report.ToJson());
  EXPECT_NE(SummaryTable(back).find("ti-lr"), std::string::npos);
}

TEST(Plot, ChartsHoldOneSeriesPerLine) {
  RunReport a;
  a.scenario = "ti-lr";
  a.m = 2;
  a.train_smc_seconds = 1;
  a.rmse_clear = 0.1;
  a.rmse_smc = 0.1;
  RunReport b = a;
  b.m = 4;
  b.train_smc_seconds = 2;
  RunReport c = b;
  c.m = 8;
  c.rmse_clear.reset();
  c.rmse_smc.reset();
  LineChart runtime = RuntimeChart({a, b, c});
  EXPECT_EQ(runtime.series.size(), 4u);
  for (const auto& s : runtime.series) EXPECT_EQ(s.points.size(), 3u);
  LineChart rmse = RmseChart({a, b, c});
  ASSERT_EQ(rmse.series.size(), 2u);
  EXPECT_EQ(rmse.series[0].points.size(), 2u);
  std::string svg = runtime.Svg();
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("ti-lr train SMC"), std::string::npos);
  EXPECT_NE(svg.find("<polyline"), std::string::npos);
}

}  // namespace
}  // namespace sharelr
