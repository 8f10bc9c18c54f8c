// sharelr: roles, experiment harness and data tools.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "sharelr/harness/labeling.hpp"
#include "sharelr/harness/plot.hpp"
#include "sharelr/harness/roles.hpp"
#include "sharelr/harness/scenario.hpp"
#include "sharelr/protocols.hpp"

namespace {

using namespace sharelr;

// --config, else $SHARELR_CONFIG; empty when neither is set.
std::string ConfigPath(const std::string& flag) {
  if (!flag.empty()) return flag;
  const char* env = std::getenv("SHARELR_CONFIG");
  return env ? env : "";
}

SessionConfig LoadSession(const std::string& flag) {
  std::string path = ConfigPath(flag);
  if (path.empty()) throw ConfigError("no session file: pass --session or set SHARELR_CONFIG");
  return SessionConfig::Load(path);
}

std::optional<Scaling> LoadScaling(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return Scaling::FromConfig(KeyValueFile::Load(path));
}

int CmdParams(int e, int f, int kappa) {
  FieldPtr field = MakeParams(e, f);
  std::cout << field->Describe() << "\n";
  std::cout << fmt::format("modulus bits {}, element bytes {}\n", field->ModulusBits(), field->ElementBytes());
  TruncLayout layout = MakeTruncLayout(*field, kappa);
  std::cout << fmt::format("truncation: kappa {}, input bits {}, mask high bits {}\n", layout.kappa, layout.input_bits,
                           layout.high_bits);
  return 0;
}

// Response-time log: one column (tau) or two (time, tau); header optional.
int CmdLabel(const std::string& input, const std::string& output, double tau0, double window, double period) {
  std::ifstream in(input);
  if (!in) throw DataError(fmt::format("cannot read {}", input));
  std::vector<double> times;
  std::vector<double> taus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> cells;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        cells.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (line_no == 1) continue;
      throw DataError(fmt::format("{}:{}: non-numeric cell", input, line_no));
    }
    if (cells.size() == 1) {
      taus.push_back(cells[0]);
    } else if (cells.size() == 2) {
      times.push_back(cells[0]);
      taus.push_back(cells[1]);
    } else {
      throw DataError(fmt::format("{}:{}: expected 1 or 2 columns, got {}", input, line_no, cells.size()));
    }
  }
  if (taus.empty()) throw DataError(fmt::format("{} holds no samples", input));
  if (!times.empty() && times.size() != taus.size()) throw DataError("mixed one- and two-column rows");
  if (period <= 0) {
    if (times.size() < 2) throw DataError("pass --period for a log without a time column");
    period = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
  }
  std::vector<double> index;
  for (double t : taus) index.push_back(DrowsinessIndex(t, tau0));
  std::vector<double> smooth = SmoothMovingAverage(index, window, period);
  std::ofstream out(output, std::ios::trunc);
  out << "time,tau,index,smoothed\n";
  for (std::size_t i = 0; i < taus.size(); ++i) {
    double t = times.empty() ? static_cast<double>(i) * period : times[i];
    out << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g}\n", t, taus[i], index[i], smooth[i]);
  }
  if (!out) throw DataError(fmt::format("cannot write {}", output));
  spdlog::info("labeled {} samples into {}", taus.size(), output);
  return 0;
}

int CmdSynth(const SynthesisOptions& o, std::size_t calibration_rows, const std::filesystem::path& dir) {
  SyntheticData d = Synthesize(o);
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < d.sources.size(); ++i) {
    WriteDataset(dir / fmt::format("party-{}.csv", i + 1), d.sources[i]);
  }
  WriteDataset(dir / "target.csv", d.target);
  if (calibration_rows > 0) {
    auto [cal, test] = SplitRows(d.target, calibration_rows);
    WriteDataset(dir / "calibration.csv", cal);
    WriteDataset(dir / "test.csv", test);
  } else {
    WriteDataset(dir / "test.csv", d.target);
  }
  std::ofstream plant(dir / "plant.csv", std::ios::trunc);
  plant << "coefficient\n";
  for (Eigen::Index i = 0; i < d.plant.size(); ++i) plant << fmt::format("{:.17g}\n", d.plant(i));
  spdlog::info("wrote {} source files and the target rows to {}", d.sources.size(), dir.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Secure multiparty linear regression with a trusted initializer and a broadcast agent"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")->capture_default_str();

  // params
  int p_e = 64, p_f = 64, p_kappa = kDefaultKappa;
  auto* params = app.add_subcommand("params", "Print the field and truncation parameters");
  params->add_option("--e", p_e, "Integer bits")->capture_default_str();
  params->add_option("--f", p_f, "Fractional bits")->capture_default_str();
  params->add_option("--kappa", p_kappa, "Statistical masking parameter")->capture_default_str();

  // ti-gen
  std::string ti_session, ti_bundles, ti_out;
  bool ti_no_distribute = false;
  auto* ti = app.add_subcommand("ti-gen", "Trusted initializer: generate and distribute correlated randomness");
  ti->add_option("--session", ti_session, "Session file (default: $SHARELR_CONFIG)");
  ti->add_option("--bundle-dir", ti_bundles, "Also write every bundle to this directory");
  ti->add_option("--out", ti_out, "Directory for the transcript and stats");
  ti->add_flag("--no-distribute", ti_no_distribute, "Only generate (with --bundle-dir)");

  // serve-ba
  AgentServeOptions ba;
  std::size_t ba_parties = 0;
  std::string ba_port_file, ba_stats;
  auto* serve_ba = app.add_subcommand("serve-ba", "Broadcast agent: relay every message of a session");
  serve_ba->add_option("--host", ba.host, "Listen address")->capture_default_str();
  serve_ba->add_option("--port", ba.port, "Listen port; 0 picks a free one")->capture_default_str();
  serve_ba->add_option("--port-file", ba_port_file, "Write the bound port here");
  serve_ba->add_option("--stats", ba_stats, "Write relay statistics (JSON) here on shutdown");
  serve_ba->add_option("--parties", ba_parties, "Roster size; broadcasts are held for parties 1..N not yet connected");

  // serve-party
  std::string sp_session, sp_data, sp_queries, sp_out = ".", sp_scaling;
  int sp_id = 0;
  auto* serve_party = app.add_subcommand("serve-party", "Party: receive material, train, serve inference");
  serve_party->add_option("--session", sp_session, "Session file (default: $SHARELR_CONFIG)");
  serve_party->add_option("--id", sp_id, "Party id")->required();
  serve_party->add_option("--data", sp_data, "Training rows (CSV: features then response)")->required();
  serve_party->add_option("--queries", sp_queries, "Target of the target-calibrated scenario: rows to predict");
  serve_party->add_option("--out", sp_out, "Output directory")->capture_default_str();
  serve_party->add_option("--scaling", sp_scaling, "Scaling file; default: features already in [-1, 1]");

  // run-client
  std::string rc_session, rc_queries, rc_out = ".", rc_scaling;
  auto* run_client = app.add_subcommand("run-client", "Client: secret-share queries and collect predictions");
  run_client->add_option("--session", rc_session, "Session file (default: $SHARELR_CONFIG)");
  run_client->add_option("--queries", rc_queries, "Rows to predict (CSV)")->required();
  run_client->add_option("--out", rc_out, "Output directory")->capture_default_str();
  run_client->add_option("--scaling", rc_scaling, "Scaling file; default: features already in [-1, 1]");

  // run-scenario
  ScenarioConfig sc;
  std::string sc_config, sc_scenario = "ti-lr", sc_mode = "local-spawn", sc_cli;
  long long sc_timeout = 60000;
  bool sc_no_encrypt = false, sc_no_intercept = false;
  auto* run_scenario = app.add_subcommand("run-scenario", "Run one experiment: clear and secure paths, then report");
  run_scenario->add_option("--config", sc_config, "Scenario file; overrides flags (default: $SHARELR_CONFIG)");
  run_scenario->add_option("--scenario", sc_scenario, "ti-lr or tc-lr")->capture_default_str();
  run_scenario->add_option("--m", sc.m, "Source parties")->capture_default_str();
  run_scenario->add_option("--features", sc.features, "Features per row")->capture_default_str();
  run_scenario->add_option("--rows", sc.rows, "Rows per party")->capture_default_str();
  run_scenario->add_option("--calibration-rows", sc.calibration_rows, "Leading target rows used for calibration")
      ->capture_default_str();
  run_scenario->add_option("--e", sc.e, "Integer bits")->capture_default_str();
  run_scenario->add_option("--f", sc.f, "Fractional bits")->capture_default_str();
  run_scenario->add_option("--kappa", sc.kappa, "Statistical masking parameter")->capture_default_str();
  run_scenario->add_option("--iterations", sc.iterations, "Newton-Raphson iterations")->capture_default_str();
  run_scenario->add_option("--trace-bound", sc.trace_bound, "Public bound on trace(X^T X); 0 derives it");
  run_scenario->add_flag("--no-intercept", sc_no_intercept, "Fit without the constant column");
  run_scenario->add_option("--data-seed", sc.data_seed, "Synthetic data seed")->capture_default_str();
  run_scenario->add_option("--protocol-seed", sc.protocol_seed, "Seed for every role's randomness; 0 uses the OS")
      ->capture_default_str();
  run_scenario->add_option("--noise", sc.noise, "Response noise")->capture_default_str();
  run_scenario->add_option("--party-spread", sc.party_spread, "Per-party coefficient deviation")->capture_default_str();
  run_scenario->add_option("--data-dir", sc.data_dir, "Read party-<i>.csv, test.csv, calibration.csv from here");
  run_scenario->add_option("--mode", sc_mode, "local-spawn or in-process")->capture_default_str();
  run_scenario->add_option("--agent-host", sc.agent_host, "Broadcast agent address")->capture_default_str();
  run_scenario->add_option("--agent-port", sc.agent_port, "Broadcast agent port; 0 picks one")->capture_default_str();
  run_scenario->add_flag("--no-encrypt", sc_no_encrypt, "Send addressed payloads unsealed");
  run_scenario->add_option("--timeout-ms", sc_timeout, "Per-round timeout")->capture_default_str();
  run_scenario->add_option("--work-dir", sc.work_dir, "Directory for files of the spawned roles")
      ->capture_default_str();
  run_scenario->add_option("--cli", sc_cli, "sharelr binary for the spawned roles (default: this one)");
  run_scenario->add_option("--report", sc.report_path, "Append the report record (JSONL) here");

  // synth-data
  SynthesisOptions so;
  std::size_t sd_calibration = 0;
  std::string sd_out = "data";
  auto* synth = app.add_subcommand("synth-data", "Write a synthetic dataset in the shape of the driving study");
  synth->add_option("--seed", so.seed, "Seed")->capture_default_str();
  synth->add_option("--m", so.sources, "Source parties")->capture_default_str();
  synth->add_option("--rows", so.rows, "Rows per party")->capture_default_str();
  synth->add_option("--features", so.features, "Features per row")->capture_default_str();
  synth->add_option("--noise", so.noise, "Response noise")->capture_default_str();
  synth->add_option("--party-spread", so.party_spread, "Per-party coefficient deviation")->capture_default_str();
  synth->add_option("--calibration-rows", sd_calibration, "Also split the target into calibration.csv and test.csv");
  synth->add_option("--out-dir", sd_out, "Output directory")->capture_default_str();

  // label
  std::string lb_in, lb_out;
  double lb_tau0 = 1.0, lb_window = 90.0, lb_period = 0.0;
  auto* label = app.add_subcommand("label", "Map response times to a smoothed drowsiness index");
  label->add_option("--input", lb_in, "CSV of tau or time,tau")->required();
  label->add_option("--output", lb_out, "CSV of time,tau,index,smoothed")->required();
  label->add_option("--tau0", lb_tau0, "Response-time threshold (s)")->capture_default_str();
  label->add_option("--window", lb_window, "Moving-average window (s)")->capture_default_str();
  label->add_option("--period", lb_period, "Sample period (s); default from the time column");

  // report
  std::string rp_in;
  bool rp_detail = false;
  auto* report = app.add_subcommand("report", "Print report records as a table");
  report->add_option("--input", rp_in, "JSONL report records")->required();
  report->add_flag("--detail", rp_detail, "Also print message counts per kind and round");

  // plot
  std::string pl_in, pl_out = "plots";
  auto* plot = app.add_subcommand("plot", "Render runtime and RMSE against m as SVG");
  plot->add_option("--input", pl_in, "JSONL report records")->required();
  plot->add_option("--out-dir", pl_out, "Output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  auto logger = spdlog::stderr_color_mt("sharelr");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*params) return CmdParams(p_e, p_f, p_kappa);
    if (*ti) {
      TiRunOptions o{ti_bundles, ti_out, !ti_no_distribute};
      RunTrustedInitializer(LoadSession(ti_session), o);
      return 0;
    }
    if (*serve_ba) {
      ba.port_file = ba_port_file;
      ba.stats_file = ba_stats;
      for (std::size_t i = 1; i <= ba_parties; ++i) ba.parties.push_back(static_cast<PartyId>(i));
      ServeAgent(ba);
      return 0;
    }
    if (*serve_party) {
      PartyRunOptions o;
      o.id = static_cast<PartyId>(sp_id);
      o.data = sp_data;
      o.queries = sp_queries;
      o.out_dir = sp_out;
      o.scaling = LoadScaling(sp_scaling);
      RunParty(LoadSession(sp_session), o);
      return 0;
    }
    if (*run_client) {
      ClientRunOptions o{rc_queries, rc_out, LoadScaling(rc_scaling)};
      RunClient(LoadSession(rc_session), o);
      return 0;
    }
    if (*run_scenario) {
      sc.scenario = ParseScenarioKind(sc_scenario);
      sc.mode = ParseLaunchMode(sc_mode);
      sc.encrypt = !sc_no_encrypt;
      sc.intercept = !sc_no_intercept;
      sc.round_timeout = std::chrono::milliseconds(sc_timeout);
      sc.cli_path = sc_cli.empty() ? SelfExecutable() : std::filesystem::path(sc_cli);
      if (std::string path = ConfigPath(sc_config); !path.empty()) {
        sc = ScenarioConfig::FromConfig(KeyValueFile::Load(path), sc);
      }
      ScenarioOutcome out = RunScenario(sc);
      std::cout << out.report.Table();
      return 0;
    }
    if (*synth) return CmdSynth(so, sd_calibration, sd_out);
    if (*label) return CmdLabel(lb_in, lb_out, lb_tau0, lb_window, lb_period);
    if (*report) {
      auto reports = ReadJsonl(rp_in);
      if (rp_detail) {
        for (const auto& r : reports) std::cout << r.Table() << "\n";
      } else {
        std::cout << SummaryTable(reports);
      }
      return 0;
    }
    if (*plot) {
      for (const auto& p : WritePlots(ReadJsonl(pl_in), pl_out)) std::cout << p.string() << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
