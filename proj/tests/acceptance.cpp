// One PASS/FAIL line per acceptance criterion. Exit status is non-zero iff a
// criterion fails.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <gmpxx.h>
#include <spdlog/spdlog.h>

#include "protocol_fixture.hpp"
#include "sharelr/harness/labeling.hpp"
#include "sharelr/harness/report.hpp"
#include "sharelr/harness/scenario.hpp"

namespace sharelr {
namespace {

using testing::Gather;
using testing::LocalSession;
using testing::RandomMatrix;
using testing::RandomSpd;
using testing::ShareAll;

constexpr double kBetaTolerance = 1e-6;
constexpr double kRmseTolerance = 1e-6;
constexpr double kInverseTolerance = 1e-6;
constexpr double kLabelTolerance = 1e-6;

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void Criterion(int id, const std::string& name, const std::function<Verdict()>& check) {
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, fmt::format("error: {}", e.what())};
  }
  if (!v.pass) failures++;
  std::printf("%s  [%d] %s: %s\n", v.pass ? "PASS" : "FAIL", id, name.c_str(), v.detail.c_str());
  std::fflush(stdout);
}

// Runs of criteria 1 and 4 feed the RMSE check of criterion 2.
struct RunRecord {
  std::string label;
  double reported_gap = 0;
  double recomputed_gap = 0;
  bool labeled = false;
};
std::vector<RunRecord> runs;

double Rmse(const Eigen::VectorXd& pred, const Eigen::VectorXd& y) {
  return std::sqrt((pred - y).squaredNorm() / static_cast<double>(y.size()));
}

// Least squares by column-pivoting QR on the stacked design matrix, apart
// from the normal equations the harness and the protocols use.
Eigen::VectorXd QrOracle(const ScenarioConfig& config, const ScenarioData& data) {
  Eigen::Index rows = static_cast<Eigen::Index>(data.total_training_rows());
  Eigen::Index k = static_cast<Eigen::Index>(config.columns());
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(rows, k);
  Eigen::VectorXd y(rows);
  Eigen::Index at = 0;
  for (const auto& d : data.sources) {
    x.block(at, 0, d.x.rows(), d.x.cols()) = d.x;
    y.segment(at, d.y.size()) = d.y;
    at += d.x.rows();
  }
  return x.colPivHouseholderQr().solve(y);
}

ScenarioOutcome Run(const ScenarioConfig& config, const std::string& label) {
  auto out = RunScenario(config);
  RunRecord r{label, 0, 0, out.data.labeled};
  if (out.report.rmse_clear && out.report.rmse_smc) {
    r.reported_gap = std::abs(*out.report.rmse_smc - *out.report.rmse_clear);
    r.recomputed_gap =
        std::abs(Rmse(out.smc_predictions, out.data.test.y) - Rmse(out.clear.predictions, out.data.test.y));
  }
  runs.push_back(r);
  return out;
}

std::filesystem::path WorkRoot() {
  return std::filesystem::temp_directory_path() / fmt::format("sharelr-acceptance-{}", ::getpid());
}

Verdict CoefficientParity() {
  std::string detail;
  bool pass = true;
  double worst = 0;
  auto check = [&](ScenarioConfig c, const std::string& label) {
    auto out = Run(c, label);
    Eigen::VectorXd oracle = QrOracle(c, out.data);
    double diff = (out.smc_betas.at(0) - oracle).cwiseAbs().maxCoeff();
    worst = std::max(worst, diff);
    pass = pass && diff <= kBetaTolerance;
    detail += fmt::format(" {}={:.1e}", label, diff);
  };
  for (std::size_t m : {2, 3, 5, 8, 15}) {
    ScenarioConfig c;
    c.mode = LaunchMode::kInProcess;
    c.m = m;
    c.e = 24;
    c.f = 40;
    c.kappa = 16;
    c.data_seed = 100 + m;
    check(c, fmt::format("m{}@(24,40)", m));
  }
  ScenarioConfig full;
  full.mode = LaunchMode::kInProcess;
  full.m = 15;
  full.data_seed = 200;
  check(full, "m15@(64,64)");
  return {pass, fmt::format("max |beta_smc - beta_qr| {:.2e} <= {:.0e};{}", worst, kBetaTolerance, detail)};
}

Verdict RmseParity() {
  // A TC-LR run joins the TI-LR runs of criteria 1 and 4.
  ScenarioConfig tc;
  tc.scenario = ScenarioKind::kTargetCalibrated;
  tc.mode = LaunchMode::kInProcess;
  tc.m = 3;
  tc.data_seed = 300;
  Run(tc, "tc-lr m3");
  double worst = 0;
  std::size_t checked = 0;
  bool pass = true;
  for (const auto& r : runs) {
    if (!r.labeled) continue;
    checked++;
    worst = std::max({worst, r.reported_gap, r.recomputed_gap});
    pass = pass && r.reported_gap <= kRmseTolerance && r.recomputed_gap <= kRmseTolerance;
  }
  pass = pass && checked == runs.size() && checked > 0;
  return {pass, fmt::format("{} runs, max |rmse_smc - rmse_clear| {:.2e} <= {:.0e}", checked, worst, kRmseTolerance)};
}

// Exhaustive scalar products over F_17 with every input pair used on
// several triples; the oracle is integer arithmetic mod 17.
std::size_t DmmExhaustiveFailures() {
  auto f = MakeParams(1, 1);
  if (f->q != 17) throw std::runtime_error("expected q = 17");
  const int triples_per_pair = 3;
  std::size_t bad = 0;
  for (std::size_t m : {2, 3}) {
    Requirements req;
    req.triples[{1, 1, 1}] = 17 * 17 * triples_per_pair;
    LocalSession s(f, m, req, 1000 + m, false, 0);
    auto rng = Prng::Seeded(1010 + m);
    std::vector<FieldMatrix> xs, ys;
    std::vector<long> expect;
    for (long x = 0; x < 17; ++x)
      for (long y = 0; y < 17; ++y)
        for (int t = 0; t < triples_per_pair; ++t) {
          xs.push_back(FieldMatrix::Scalar(FieldElement(f, x)));
          ys.push_back(FieldMatrix::Scalar(FieldElement(f, y)));
          expect.push_back(x * y % 17);
        }
    auto xf = ShareAll(xs, s.group(), rng);
    auto yf = ShareAll(ys, s.group(), rng);
    auto out = s.Run<std::vector<SharedMatrix>>([&](PartyContext& ctx, std::size_t p) {
      std::vector<SharedMatrix> z;
      for (std::size_t i = 0; i < xs.size(); ++i) z.push_back(Dmm(ctx, xf[i][p], yf[i][p]));
      return z;
    });
    for (std::size_t i = 0; i < xs.size(); ++i) {
      std::vector<SharedMatrix> parts;
      for (std::size_t p = 0; p < m; ++p) parts.push_back(out[p][i]);
      if (Gather(parts)[0] != expect[i]) bad++;
    }
  }
  return bad;
}

// Schoolbook product mod q on raw residues.
std::vector<mpz_class> ProductModQ(const FieldMatrix& a, const FieldMatrix& b, const mpz_class& q) {
  std::vector<mpz_class> out(a.rows() * b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      mpz_class acc = 0;
      for (std::size_t t = 0; t < a.cols(); ++t) acc += a(i, t) * b(t, j);
      mpz_mod(acc.get_mpz_t(), acc.get_mpz_t(), q.get_mpz_t());
      out[i * b.cols() + j] = acc;
    }
  return out;
}

// 1000 products of square shapes 3..10 at (64,64) among three parties.
std::size_t DmmRandomFailures(std::size_t& trials) {
  auto f = MakeParams(64, 64);
  const std::size_t per_shape = 125;
  const std::size_t m = 3;
  Requirements req;
  for (std::uint32_t n = 3; n <= 10; ++n) req.triples[{n, n, n}] = per_shape;
  LocalSession s(f, m, req, 1100);
  auto rng = Prng::Seeded(1101);
  std::vector<FieldMatrix> as, bs;
  for (std::size_t n = 3; n <= 10; ++n)
    for (std::size_t t = 0; t < per_shape; ++t) {
      as.push_back(RandomMatrix(f, n, n, rng));
      bs.push_back(RandomMatrix(f, n, n, rng));
    }
  auto af = ShareAll(as, s.group(), rng), bf = ShareAll(bs, s.group(), rng);
  auto out = s.Run<std::vector<SharedMatrix>>([&](PartyContext& ctx, std::size_t p) {
    std::vector<SharedMatrix> z;
    for (std::size_t i = 0; i < as.size(); ++i) z.push_back(Dmm(ctx, af[i][p], bf[i][p]));
    return z;
  });
  std::size_t bad = 0;
  for (std::size_t i = 0; i < as.size(); ++i) {
    std::vector<SharedMatrix> parts;
    for (std::size_t p = 0; p < m; ++p) parts.push_back(out[p][i]);
    auto got = Gather(parts);
    auto expect = ProductModQ(as[i], bs[i], f->q);
    for (std::size_t j = 0; j < expect.size(); ++j) {
      if (got[j] != expect[j]) {
        bad++;
        break;
      }
    }
  }
  trials = as.size();
  return bad;
}

// 10^4 signed inputs over the admissible range; the result must lie within
// one unit of 2^-f of the exact quotient x / 2^f.
std::size_t TruncViolations(std::size_t& inputs) {
  auto f = MakeParams(64, 64);
  FixedPointCodec c(f);
  const std::size_t n = 5000;
  std::size_t bad = 0;
  inputs = 0;
  for (std::size_t m : {2, 3}) {
    LocalSession s(f, m, cost::Truncate(n), 1200 + m);
    auto rng = Prng::Seeded(1210 + m);
    auto layout = MakeTruncLayout(*f, kDefaultKappa);
    FieldMatrix v(f, 1, n);
    std::vector<mpz_class> xs(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t bits = 1 + rng.NextU64() % static_cast<std::uint64_t>(layout.input_bits - 1);
      mpz_class x = rng.UniformBits(bits);
      if (rng.NextU64() & 1) x = -x;
      xs[i] = x;
      v.SetRaw(i, x);
    }
    auto frags = Share(v, s.group(), rng);
    auto out = s.Run<SharedMatrix>([&](PartyContext& ctx, std::size_t p) { return Trunc(ctx, frags[p]); });
    auto res = Gather(out);
    mpz_class ulp = mpz_class(1) << f->f;
    for (std::size_t i = 0; i < n; ++i) {
      mpz_class err = (c.Signed(res[i]) << f->f) - xs[i];
      if (abs(err) > ulp) bad++;
    }
    inputs += n;
  }
  return bad;
}

double WorstInverseResidual(std::size_t& matrices) {
  auto f = MakeParams(64, 64);
  FixedPointCodec c(f);
  const std::size_t iters = 32;
  const double cond = 100.0;
  double worst = 0;
  matrices = 0;
  for (std::size_t k : {1, 2, 5, 10, 20, 30}) {
    LocalSession s(f, 3, cost::MatInv(k, iters) + cost::Truncate(k * k), 1300 + k);
    auto rng = Prng::Seeded(1400 + k);
    Eigen::MatrixXd a = RandomSpd(k, cond, rng);
    std::vector<double> av(a.data(), a.data() + k * k);
    auto frags = Share(c.EncodeMatrix(k, k, av), s.group(), rng);
    auto out = s.Run<SharedMatrix>(
        [&](PartyContext& ctx, std::size_t p) { return InvertMatrix(ctx, frags[p], a.trace(), iters); });
    auto inv = c.DecodeMatrix(Gather(out));
    Eigen::MatrixXd x = Eigen::Map<Eigen::MatrixXd>(inv.data(), k, k);
    auto kk = static_cast<Eigen::Index>(k);
    double residual = (a * x - Eigen::MatrixXd::Identity(kk, kk)).cwiseAbs().rowwise().sum().maxCoeff();
    worst = std::max(worst, residual);
    matrices++;
  }
  return worst;
}

Verdict ProtocolUnits() {
  auto t0 = std::chrono::steady_clock::now();
  std::size_t exhaustive = DmmExhaustiveFailures();
  std::size_t trials = 0;
  std::size_t random = DmmRandomFailures(trials);
  std::size_t inputs = 0;
  std::size_t trunc = TruncViolations(inputs);
  std::size_t matrices = 0;
  double residual = WorstInverseResidual(matrices);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool pass = exhaustive == 0 && random == 0 && trials == 1000 && trunc == 0 && inputs == 10000 &&
              residual <= kInverseTolerance;
  return {pass, fmt::format("dmm q=17 exhaustive failures {}; dmm 3x3..10x10 failures {}/{}; trunc violations "
                            "{}/{}; matinv worst residual {:.2e} <= {:.0e} over {} SPD (cond 100, k<=30, T=32); "
                            "{:.1f} s",
                            exhaustive, random, trials, trunc, inputs, residual, kInverseTolerance, matrices, secs)};
}

// Criterion 4 keeps its m = 15 run for the audit of criterion 5.
std::optional<ScenarioOutcome> spawned15;
ScenarioConfig spawned15_config;

ScenarioConfig SpawnConfig(std::size_t m) {
  ScenarioConfig c;
  c.mode = LaunchMode::kLocalSpawn;
  c.m = m;
  c.rows = 100;
  c.data_seed = 400 + m;
  // Unsealed payloads so the secret search sees plaintext bytes.
  c.encrypt = false;
  c.cli_path = SHARELR_CLI_PATH;
  c.work_dir = WorkRoot() / fmt::format("spawn-m{}", m);
  return c;
}

Verdict Scalability() {
  std::vector<std::pair<double, double>> train;  // (m, seconds)
  std::string detail;
  bool pass = true;
  for (std::size_t m : {2, 5, 10, 15}) {
    auto c = SpawnConfig(m);
    auto out = Run(c, fmt::format("spawn m{}", m));
    std::size_t peak = out.report.agent_peak_connections.value_or(SIZE_MAX);
    pass = pass && peak <= m + 3;
    train.emplace_back(static_cast<double>(m), out.report.train_smc_seconds);
    detail += fmt::format(" m{}: train {:.2f}s peak {}", m, out.report.train_smc_seconds, peak);
    if (m == 15) {
      spawned15 = std::move(out);
      spawned15_config = c;
    }
  }
  // Growth exponent of training time from a log-log fit.
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = static_cast<double>(train.size());
  for (auto [m, t] : train) {
    double lx = std::log(m), ly = std::log(std::max(t, 1e-9));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  unsigned cpus = std::thread::hardware_concurrency();
  std::string growth = slope <= 1.2 ? fmt::format("growth exponent {:.2f} (linear)", slope)
                                    : fmt::format("WARN growth exponent {:.2f} > 1.2 on {} cpu(s)", slope, cpus);
  return {pass, fmt::format("peak <= m+3 for every m; {};{}", growth, detail)};
}

Verdict Audit() {
  if (!spawned15) return {false, "criterion 4 produced no m = 15 run"};
  const auto& out = *spawned15;
  auto secrets = SecretPatterns(spawned15_config, out.data, out.models);
  auto a = AuditTranscripts(out.transcript, secrets);
  std::size_t t2 = 2 * spawned15_config.iterations;
  bool pass = a.dmm_instances > 0 && a.dmm_multi_round == 0 && a.matinv_instances > 0 &&
              a.matinv_min_rounds == t2 && a.matinv_max_rounds == t2 && a.ti_after_setup == 0 &&
              a.secret_hits == 0 && !secrets.empty();
  return {pass, fmt::format("{} entries; dmm {} instances, {} multi-round; matinv {} instances, rounds {}..{} "
                            "(expect {}); TI envelopes after setup {}; {} secret patterns, {} hits",
                            out.transcript.size(), a.dmm_instances, a.dmm_multi_round, a.matinv_instances,
                            a.matinv_min_rounds, a.matinv_max_rounds, t2, a.ti_after_setup, secrets.size(),
                            a.secret_hits)};
}

Verdict LabelingCheck() {
  double at1 = DrowsinessIndex(1, 1);
  double at2 = DrowsinessIndex(2, 1);
  double expect2 = (1 - std::exp(-1.0)) / (1 + std::exp(-1.0));
  bool monotone = true, bounded = true;
  double prev = -1;
  for (int i = 0; i <= 10000; ++i) {
    double v = DrowsinessIndex(i * 1e-3);
    monotone = monotone && v >= prev;
    bounded = bounded && v >= 0 && v < 1;
    prev = v;
  }
  bool pass = at1 == 0.0 && std::abs(at2 - 0.462117) <= kLabelTolerance && std::abs(at2 - expect2) <= 1e-15 &&
              monotone && bounded;
  return {pass, fmt::format("index(1,1)={}, index(2,1)={:.9f}, monotone {}, range in [0,1) {} over tau grid [0,10]",
                            at1, at2, monotone, bounded)};
}

Verdict FieldSuite() {
  auto f = MakeParams(64, 64);
  mpz_class base = mpz_class(1) << 193;
  // GMP's own primality test stands apart from the field module's.
  bool prime = mpz_probab_prime_p(f->q.get_mpz_t(), 50) > 0;
  mpz_class next;
  mpz_nextprime(next.get_mpz_t(), base.get_mpz_t());
  std::size_t composites = 0, gap = 0;
  for (mpz_class n = base + 1; n < f->q; ++n) {
    gap++;
    if (mpz_probab_prime_p(n.get_mpz_t(), 50) == 0) composites++;
  }
  FixedPointCodec c(f);
  auto rng = Prng::Seeded(1500);
  const std::size_t trials = 100000;
  std::size_t bad = 0;
  double worst = 0;
  for (std::size_t i = 0; i < trials; ++i) {
    // Magnitudes from 2^-70 to 2^63.
    double x = std::ldexp(rng.UniformReal(0.5, 1.0), static_cast<int>(rng.NextU64() % 133) - 69);
    if (rng.NextU64() & 1) x = -x;
    double err = std::abs(c.Decode(c.Encode(x)) - x);
    worst = std::max(worst, err);
    if (err > std::ldexp(1.0, -(f->f + 1)) + std::abs(x) * 0x1p-53) bad++;
  }
  bool pass = prime && next == f->q && composites == gap && f->q > base && bad == 0;
  return {pass, fmt::format("q = 2^193 + {}, prime {}, equals GMP next prime {}, {}/{} integers in between "
                            "composite; encode/decode {} round trips, {} beyond 2^-(f+1), worst {:.2e}",
                            mpz_class(f->q - base).get_str(), prime, next == f->q, composites, gap, trials, bad,
                            worst)};
}

}  // namespace
}  // namespace sharelr

int main() {
  using namespace sharelr;
  spdlog::set_level(spdlog::level::warn);
  std::filesystem::create_directories(WorkRoot());
  Criterion(1, "coefficient parity", CoefficientParity);
  Criterion(4, "scalability smoke (m = 15, separate processes)", Scalability);
  Criterion(2, "RMSE parity", RmseParity);
  Criterion(3, "protocol unit correctness", ProtocolUnits);
  Criterion(5, "round and communication audit", Audit);
  Criterion(6, "labeling", LabelingCheck);
  Criterion(7, "field and fixed-point suite", FieldSuite);
  std::error_code ec;
  std::filesystem::remove_all(WorkRoot(), ec);
  std::printf("%s: %d criteria failed\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
  return failures == 0 ? 0 : 1;
}
