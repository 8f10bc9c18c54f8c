#include "sharelr/harness/report.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "sharelr/protocols.hpp"

namespace sharelr {

namespace {

using nlohmann::json;

json TallyJson(const std::map<std::string, MessageTally>& m) {
  json out = json::object();
  for (const auto& [k, t] : m) out[k] = {{"messages", t.messages}, {"bytes", t.bytes}};
  return out;
}

std::map<std::string, MessageTally> TallyFromJson(const json& j) {
  std::map<std::string, MessageTally> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    out[it.key()] = {it.value().at("messages").get<std::uint64_t>(), it.value().at("bytes").get<std::uint64_t>()};
  }
  return out;
}

std::string Optional(const std::optional<double>& v) { return v ? fmt::format("{:.6f}", *v) : "-"; }

}  // namespace

MessageStats TallyMessages(const std::vector<TranscriptEntry>& entries) {
  MessageStats s;
  for (const auto& e : entries) {
    if (e.event != TranscriptEvent::kSent) continue;
    auto add = [&](MessageTally& t) {
      t.messages++;
      t.bytes += e.payload_bytes;
    };
    add(s.total);
    add(s.by_kind[std::string(PayloadKindName(e.kind))]);
    add(s.by_round[fmt::format("{}/{}", ProtocolKindName(InstanceKind(e.instance)), e.round)]);
  }
  return s;
}

json RunReport::ToJson() const {
  json j = {{"scenario", scenario},
            {"mode", mode},
            {"m", m},
            {"features", features},
            {"rows", rows},
            {"test_rows", test_rows},
            {"setup_seconds", setup_seconds},
            {"train_clear_seconds", train_clear_seconds},
            {"train_smc_seconds", train_smc_seconds},
            {"infer_clear_seconds", infer_clear_seconds},
            {"infer_smc_seconds", infer_smc_seconds},
            {"max_beta_diff", max_beta_diff},
            {"max_prediction_diff", max_prediction_diff},
            {"online_rounds", online_rounds},
            {"ti_envelopes_after_setup", ti_envelopes_after_setup},
            {"messages", {{"messages", messages.total.messages}, {"bytes", messages.total.bytes}}},
            {"messages_by_kind", TallyJson(messages.by_kind)},
            {"messages_by_round", TallyJson(messages.by_round)}};
  if (rmse_clear) j["rmse_clear"] = *rmse_clear;
  if (rmse_smc) j["rmse_smc"] = *rmse_smc;
  if (agent_peak_connections) j["agent_peak_connections"] = *agent_peak_connections;
  return j;
}

RunReport RunReport::FromJson(const json& j) {
  RunReport r;
  r.scenario = j.at("scenario").get<std::string>();
  r.mode = j.at("mode").get<std::string>();
  r.m = j.at("m").get<std::size_t>();
  r.features = j.at("features").get<std::size_t>();
  r.rows = j.at("rows").get<std::size_t>();
  r.test_rows = j.at("test_rows").get<std::size_t>();
  r.setup_seconds = j.at("setup_seconds").get<double>();
  r.train_clear_seconds = j.at("train_clear_seconds").get<double>();
  r.train_smc_seconds = j.at("train_smc_seconds").get<double>();
  r.infer_clear_seconds = j.at("infer_clear_seconds").get<double>();
  r.infer_smc_seconds = j.at("infer_smc_seconds").get<double>();
  r.max_beta_diff = j.at("max_beta_diff").get<double>();
  r.max_prediction_diff = j.at("max_prediction_diff").get<double>();
  r.online_rounds = j.at("online_rounds").get<std::uint64_t>();
  r.ti_envelopes_after_setup = j.at("ti_envelopes_after_setup").get<std::uint64_t>();
  if (j.contains("rmse_clear")) r.rmse_clear = j["rmse_clear"].get<double>();
  if (j.contains("rmse_smc")) r.rmse_smc = j["rmse_smc"].get<double>();
  if (j.contains("agent_peak_connections")) r.agent_peak_connections = j["agent_peak_connections"].get<std::size_t>();
  r.messages.total = {j.at("messages").at("messages").get<std::uint64_t>(),
                      j.at("messages").at("bytes").get<std::uint64_t>()};
  r.messages.by_kind = TallyFromJson(j.at("messages_by_kind"));
  r.messages.by_round = TallyFromJson(j.at("messages_by_round"));
  return r;
}

std::string RunReport::Table() const {
  std::string out = SummaryTable({*this});
  out += fmt::format("\nsetup {:.3f} s, online rounds {}, messages {} ({} bytes), TI envelopes after setup {}\n",
                     setup_seconds, online_rounds, messages.total.messages, messages.total.bytes,
                     ti_envelopes_after_setup);
  out += fmt::format("max |beta_smc - beta_clear| {:.3e}, max |pred_smc - pred_clear| {:.3e}\n", max_beta_diff,
                     max_prediction_diff);
  if (agent_peak_connections) out += fmt::format("agent peak connections {}\n", *agent_peak_connections);
  out += fmt::format("\n{:<14} {:>10} {:>14}\n", "kind", "messages", "bytes");
  for (const auto& [k, t] : messages.by_kind) out += fmt::format("{:<14} {:>10} {:>14}\n", k, t.messages, t.bytes);
  // Rounds grouped per protocol; the records keep every round.
  struct Row {
    std::size_t rounds = 0;
    MessageTally tally;
  };
  std::map<std::string, Row> protocols;
  for (const auto& [k, t] : messages.by_round) {
    Row& row = protocols[k.substr(0, k.find('/'))];
    row.rounds++;
    row.tally.messages += t.messages;
    row.tally.bytes += t.bytes;
  }
  out += fmt::format("\n{:<14} {:>7} {:>10} {:>14}\n", "protocol", "rounds", "messages", "bytes");
  for (const auto& [k, row] : protocols) {
    out += fmt::format("{:<14} {:>7} {:>10} {:>14}\n", k, row.rounds, row.tally.messages, row.tally.bytes);
  }
  return out;
}

std::string SummaryTable(const std::vector<RunReport>& reports) {
  std::string out = fmt::format("{:<6} {:<12} {:>3} {:>3} {:>6} | {:>10} {:>10} | {:>10} {:>10} | {:>9} {:>9}\n",
                                "", "mode", "m", "k", "rows", "train clr", "train smc", "infer clr", "infer smc",
                                "rmse clr", "rmse smc");
  for (const auto& r : reports) {
    out += fmt::format("{:<6} {:<12} {:>3} {:>3} {:>6} | {:>10.4f} {:>10.4f} | {:>10.4f} {:>10.4f} | {:>9} {:>9}\n",
                       r.scenario, r.mode, r.m, r.features, r.rows, r.train_clear_seconds, r.train_smc_seconds,
                       r.infer_clear_seconds, r.infer_smc_seconds, Optional(r.rmse_clear), Optional(r.rmse_smc));
  }
  return out;
}

void AppendJsonl(const std::string& path, const RunReport& report) {
  std::ofstream out(path, std::ios::app);
  out << report.ToJson().dump() << "\n";
  if (!out) throw std::runtime_error(fmt::format("cannot append to {}", path));
}

std::vector<RunReport> ReadJsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot read {}", path));
  std::vector<RunReport> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(RunReport::FromJson(json::parse(line)));
  }
  return out;
}

TranscriptAudit AuditTranscripts(const std::vector<TranscriptEntry>& entries, const std::vector<Bytes>& secrets) {
  TranscriptAudit a;
  std::map<std::tuple<SessionId, PartyId, std::uint64_t>, std::set<std::uint32_t>> rounds;
  for (const auto& e : entries) {
    if (e.sender == kTiId && InstanceKind(e.instance) != ProtocolKind::kSetup) a.ti_after_setup++;
    if (e.event != TranscriptEvent::kSent) continue;
    if (e.kind == PayloadKind::kShares) rounds[{e.session, e.sender, e.instance}].insert(e.round);
    for (const auto& s : secrets) {
      if (std::search(e.payload.begin(), e.payload.end(), s.begin(), s.end()) != e.payload.end()) {
        a.secret_hits++;
        break;
      }
    }
  }
  for (const auto& [key, used] : rounds) {
    switch (InstanceKind(std::get<2>(key))) {
      case ProtocolKind::kDmm:
        a.dmm_instances++;
        if (used.size() != 1 || *used.begin() != 0) a.dmm_multi_round++;
        break;
      case ProtocolKind::kMatInv:
        a.matinv_min_rounds = a.matinv_instances == 0 ? used.size() : std::min(a.matinv_min_rounds, used.size());
        a.matinv_max_rounds = std::max(a.matinv_max_rounds, used.size());
        a.matinv_instances++;
        break;
      default:
        break;
    }
  }
  return a;
}

std::vector<std::string> CanonicalMessages(const std::vector<TranscriptEntry>& entries) {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (e.event != TranscriptEvent::kSent) continue;
    out.push_back(fmt::format("{} {:016x} {} {} {} {} {}", SessionToHex(e.session), e.instance, e.round, e.sender,
                              e.recipient, PayloadKindName(e.kind), e.digest));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace sharelr
