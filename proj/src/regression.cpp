#include "sharelr/regression.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "sharelr/parallel.hpp"

namespace sharelr {

namespace {

constexpr std::array<std::uint8_t, 4> kModelMagic{'S', 'L', 'R', 'M'};
constexpr std::uint8_t kModelVersion = 1;
constexpr std::string_view kDone = "done";

Bytes DoneMessage() { return Bytes(kDone.begin(), kDone.end()); }

bool IsDone(const Envelope& e) {
  return e.kind == PayloadKind::kControl && std::string_view(reinterpret_cast<const char*>(e.payload.data()),
                                                             e.payload.size()) == kDone;
}

FieldMatrix SingleMatrix(const Envelope& e, const FieldPtr& field, std::size_t rows, std::size_t cols) {
  auto ms = DecodeMatrices(e.payload, field);
  if (ms.size() != 1 || ms[0].rows() != rows || ms[0].cols() != cols) {
    throw ProtocolError(fmt::format("{} from {} does not carry one {}x{} matrix", PayloadKindName(e.kind), e.sender,
                                    rows, cols));
  }
  return std::move(ms[0]);
}

FieldMatrix EncodeRow(const FixedPointCodec& codec, std::span<const double> features, std::size_t columns,
                      bool intercept) {
  std::vector<double> row(features.begin(), features.end());
  if (intercept) row.push_back(1.0);
  if (row.size() != columns) {
    throw RegressionError(fmt::format("query has {} features; the model expects {}", features.size(),
                                      intercept ? columns - 1 : columns));
  }
  return codec.EncodeMatrix(1, columns, row);
}

void ExpectKind(const Envelope& e, PayloadKind kind) {
  if (e.kind != kind) {
    throw ProtocolError(fmt::format("expected {} from {}, got {}", PayloadKindName(kind), e.sender,
                                    PayloadKindName(e.kind)));
  }
}

}  // namespace

// --- plaintext ---------------------------------------------------------------

Eigen::MatrixXd WithIntercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols() + 1);
  out.leftCols(x.cols()) = x;
  out.col(x.cols()).setOnes();
  return out;
}

PlainDataset Stack(std::span<const PlainDataset> parts) {
  if (parts.empty()) throw RegressionError("nothing to stack");
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.x.cols() != parts[0].x.cols()) throw RegressionError("stacked datasets differ in feature count");
    rows += p.x.rows();
  }
  PlainDataset out{Eigen::MatrixXd(rows, parts[0].x.cols()), Eigen::VectorXd(rows)};
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.x.middleRows(at, p.x.rows()) = p.x;
    out.y.segment(at, p.x.rows()) = p.y;
    at += p.x.rows();
  }
  return out;
}

Eigen::VectorXd SolveNormalEquations(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() != y.rows()) {
    throw RegressionError(fmt::format("X has {} rows but y has {}", x.rows(), y.rows()));
  }
  Eigen::MatrixXd gram = x.transpose() * x;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
  if (gram.rows() == 0 || !lu.isInvertible()) throw RegressionError("X^T X is singular");
  return lu.solve(x.transpose() * y);
}

double Rmse(const Eigen::VectorXd& predicted, const Eigen::VectorXd& actual) {
  if (predicted.size() != actual.size() || predicted.size() == 0) {
    throw RegressionError("RMSE needs two vectors of equal, non-zero length");
  }
  return std::sqrt((predicted - actual).squaredNorm() / static_cast<double>(predicted.size()));
}

LocalDataset LocalDataset::Encode(const FixedPointCodec& codec, const PlainDataset& data, bool intercept) {
  if (data.x.rows() < 1) throw RegressionError("a local dataset needs at least one row");
  if (data.y.size() != data.x.rows()) {
    throw RegressionError(fmt::format("X has {} rows but y has {}", data.x.rows(), data.y.size()));
  }
  Eigen::MatrixXd x = intercept ? WithIntercept(data.x) : data.x;
  if (x.cols() < 1) throw RegressionError("a local dataset needs at least one column");
  std::vector<double> xs(static_cast<std::size_t>(x.size()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) xs[static_cast<std::size_t>(r * x.cols() + c)] = x(r, c);
  }
  std::vector<double> ys(data.y.data(), data.y.data() + data.y.size());
  LocalDataset out;
  out.x = codec.EncodeMatrix(x.rows(), x.cols(), xs);
  out.y = codec.EncodeMatrix(ys.size(), 1, ys);
  out.intercept = intercept;
  return out;
}

// --- secure steps ------------------------------------------------------------

SharedMatrix TrainParty(PartyContext& ctx, const LocalDataset& data, double trace_bound, std::size_t iterations) {
  if (data.rows() < 1) throw RegressionError("training needs at least one local row");
  LocalMoments moments = ComputeLocalMoments(data.x, data.y, ctx.field()->f);
  SharedMatrix gram = ctx.Fragment(std::move(moments.gram));
  FixedShare xty{ctx.Fragment(std::move(moments.xty)), false};
  FixedShare inverse = MatInv(ctx, gram, trace_bound, iterations);
  auto inst = ctx.Begin(ProtocolKind::kDmm);
  FixedShare beta = Multiply(ctx, inst, inverse, xty);
  return Trunc(ctx, beta.share);
}

SharedMatrix PredictShare(PartyContext& ctx, const SharedMatrix& x_row, const SharedMatrix& beta) {
  if (x_row.rows() != 1 || x_row.cols() != beta.rows() || beta.cols() != 1) {
    throw RegressionError(fmt::format("prediction needs a 1x{} row, got {}x{}", beta.rows(), x_row.rows(),
                                      x_row.cols()));
  }
  FixedShare x{x_row, false};
  FixedShare b{beta, false};
  auto inst = ctx.Begin(ProtocolKind::kDmm);
  FixedShare y = Multiply(ctx, inst, x, b);
  return Trunc(ctx, y.share);
}

std::uint64_t QueryInstance(std::uint64_t query) { return MakeInstanceId(ProtocolKind::kPredict, query); }
std::uint64_t MaskInstance(std::uint64_t query) { return MakeInstanceId(ProtocolKind::kMask, query); }

// --- target-independent inference --------------------------------------------

std::size_t ServeTiInference(PartyContext& ctx, const SharedMatrix& beta,
                             std::optional<std::chrono::milliseconds> first_timeout) {
  Endpoint& ep = ctx.endpoint();
  for (std::uint64_t q = 1;; ++q) {
    Envelope in = ep.RecvFrom(ctx.session(), QueryInstance(q), 0, kClientId, q == 1 ? first_timeout : std::nullopt);
    if (IsDone(in)) return q - 1;
    ExpectKind(in, PayloadKind::kClientInput);
    SharedMatrix x = ctx.Fragment(SingleMatrix(in, ctx.field(), 1, beta.rows()));
    SharedMatrix y = PredictShare(ctx, x, beta);
    ep.Send(ctx.session(), QueryInstance(q), 1, kClientId, PayloadKind::kResultShare, EncodeMatrices({y.value}));
  }
}

TiClient::TiClient(Endpoint& endpoint, SessionId session, std::vector<PartyId> group, FieldPtr field,
                   std::size_t columns, bool intercept, Prng rng)
    : endpoint_(endpoint),
      session_(session),
      group_(NormalizeGroup(group)),
      field_(field),
      codec_(field),
      columns_(columns),
      intercept_(intercept),
      rng_(std::move(rng)) {}

void TiClient::SendQuery(std::uint64_t query, std::span<const double> features) {
  if (finished_) throw RegressionError("client already finished");
  FieldMatrix row = EncodeRow(codec_, features, columns_, intercept_);
  auto fragments = Share(row, group_, rng_);
  for (auto& f : fragments) {
    endpoint_.Send(session_, QueryInstance(query), 0, f.owner, PayloadKind::kClientInput, EncodeMatrices({f.value}));
  }
}

double TiClient::CollectAnswer(std::uint64_t query) {
  auto answers = endpoint_.RecvRound(session_, QueryInstance(query), 1, group_,
                                     query == 1 ? first_timeout_ : std::nullopt);
  FieldMatrix sum(field_, 1, 1);
  for (const auto& [p, env] : answers) {
    ExpectKind(env, PayloadKind::kResultShare);
    sum += SingleMatrix(env, field_, 1, 1);
  }
  return codec_.Decode(sum.Get(0, 0));
}

double TiClient::Predict(std::span<const double> features) {
  std::uint64_t q = next_query_++;
  SendQuery(q, features);
  return CollectAnswer(q);
}

Eigen::VectorXd TiClient::PredictAll(const Eigen::MatrixXd& features) {
  std::uint64_t first = next_query_;
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    Eigen::VectorXd row = features.row(r).transpose();
    SendQuery(next_query_++, std::span<const double>(row.data(), row.size()));
  }
  Eigen::VectorXd out(features.rows());
  for (Eigen::Index r = 0; r < features.rows(); ++r) out(r) = CollectAnswer(first + r);
  return out;
}

void TiClient::Finish() {
  if (finished_) return;
  for (PartyId p : group_) {
    endpoint_.Send(session_, QueryInstance(next_query_), 0, p, PayloadKind::kControl, DoneMessage());
  }
  finished_ = true;
}

// --- target-calibrated inference ---------------------------------------------

std::size_t ServeTcSource(PartyContext& pair_ctx, const SharedMatrix& beta, const TcServingRoles& roles, Prng& rng,
                          std::optional<std::chrono::milliseconds> first_timeout) {
  Endpoint& ep = pair_ctx.endpoint();
  const FieldPtr& field = pair_ctx.field();
  const PartyId self = pair_ctx.self();
  std::vector<PartyId> others;
  for (PartyId s : roles.sources) {
    if (s != self) others.push_back(s);
  }
  for (std::uint64_t q = 1;; ++q) {
    Envelope in = ep.RecvFrom(pair_ctx.session(), QueryInstance(q), 0, roles.target,
                              q == 1 ? first_timeout : std::nullopt);
    if (IsDone(in)) return q - 1;
    ExpectKind(in, PayloadKind::kShares);
    SharedMatrix x = pair_ctx.Fragment(SingleMatrix(in, field, 1, beta.rows()));
    SharedMatrix y = PredictShare(pair_ctx, x, beta);

    FieldMatrix r(field, 1, 1);
    r.SetRaw(0, rng.UniformBelow(field->q));
    ep.Send(roles.root, MaskInstance(q), 0, roles.target, PayloadKind::kMaskedPrediction,
            EncodeMatrices({y.value + r}));
    if (self == roles.aggregator) {
      auto shares = ep.RecvRound(roles.root, MaskInstance(q), 0, others);
      for (const auto& [p, env] : shares) {
        ExpectKind(env, PayloadKind::kMaskShare);
        r += SingleMatrix(env, field, 1, 1);
      }
      ep.Send(roles.root, MaskInstance(q), 1, roles.target, PayloadKind::kMaskSum, EncodeMatrices({r}));
    } else {
      ep.Send(roles.root, MaskInstance(q), 0, roles.aggregator, PayloadKind::kMaskShare, EncodeMatrices({r}));
    }
  }
}

TcTarget::TcTarget(std::vector<PartyContext*> pair_contexts, std::vector<SharedMatrix> betas, TcServingRoles roles,
                   bool intercept, Prng rng)
    : contexts_(std::move(pair_contexts)),
      betas_(std::move(betas)),
      roles_(std::move(roles)),
      intercept_(intercept),
      rng_(std::move(rng)) {
  if (contexts_.empty() || contexts_.size() != betas_.size() || contexts_.size() != roles_.sources.size()) {
    throw RegressionError("target needs one context and one model per source");
  }
  if (std::find(roles_.sources.begin(), roles_.sources.end(), roles_.aggregator) == roles_.sources.end()) {
    throw RegressionError(fmt::format("aggregator {} is not a source", roles_.aggregator));
  }
}

double TcTarget::Predict(std::span<const double> features) {
  if (finished_) throw RegressionError("target already finished serving");
  const std::uint64_t q = next_query_++;
  const std::size_t m = contexts_.size();
  const FieldPtr& field = contexts_[0]->field();
  const FixedPointCodec& codec = contexts_[0]->codec();
  FieldMatrix row = EncodeRow(codec, features, betas_[0].rows(), intercept_);

  // A fresh sharing per source.
  std::vector<SharedMatrix> own(m);
  for (std::size_t i = 0; i < m; ++i) {
    PartyContext& ctx = *contexts_[i];
    for (auto& f : Share(row, ctx.group(), rng_)) {
      if (f.owner == ctx.self()) {
        own[i] = std::move(f);
      } else {
        ctx.endpoint().Send(ctx.session(), QueryInstance(q), 0, f.owner, PayloadKind::kShares,
                            EncodeMatrices({f.value}));
      }
    }
  }
  std::vector<SharedMatrix> mine(m);
  ParallelFor(
      m, [&](std::size_t i) { mine[i] = PredictShare(*contexts_[i], own[i], betas_[i]); },
      [&] { contexts_[0]->endpoint().Fail("a pairwise prediction failed"); });

  Endpoint& ep = contexts_[0]->endpoint();
  FieldMatrix total(field, 1, 1);
  for (const auto& y : mine) total += y.value;
  auto masked = ep.RecvRound(roles_.root, MaskInstance(q), 0, roles_.sources);
  for (const auto& [p, env] : masked) {
    ExpectKind(env, PayloadKind::kMaskedPrediction);
    total += SingleMatrix(env, field, 1, 1);
  }
  Envelope mask = ep.RecvFrom(roles_.root, MaskInstance(q), 1, roles_.aggregator);
  ExpectKind(mask, PayloadKind::kMaskSum);
  total -= SingleMatrix(mask, field, 1, 1);
  return codec.Decode(total.Get(0, 0)) / static_cast<double>(m);
}

void TcTarget::Finish() {
  if (finished_) return;
  for (std::size_t i = 0; i < contexts_.size(); ++i) {
    PartyContext& ctx = *contexts_[i];
    ctx.endpoint().Send(ctx.session(), QueryInstance(next_query_), 0, roles_.sources[i], PayloadKind::kControl,
                        DoneMessage());
  }
  finished_ = true;
}

// --- model records -----------------------------------------------------------

Bytes PartyModel::Serialize() const {
  if (!field) throw RegressionError("model has no field");
  ByteWriter w;
  w.Raw(kModelMagic);
  w.U8(kModelVersion);
  w.U8(scenario == ScenarioKind::kTargetIndependent ? 0 : 1);
  w.U16(owner);
  w.U32(static_cast<std::uint32_t>(sources));
  w.U32(static_cast<std::uint32_t>(columns));
  w.U8(intercept ? 1 : 0);
  WriteFieldHeader(w, *field);
  w.U16(static_cast<std::uint16_t>(shares.size()));
  for (const auto& s : shares) {
    w.U32(static_cast<std::uint32_t>(s.plan_index));
    w.Raw(s.session);
    w.U16(static_cast<std::uint16_t>(s.beta.group.size()));
    for (PartyId p : s.beta.group) w.U16(p);
    WriteMatrix(w, s.beta.value);
  }
  return w.Take();
}

PartyModel PartyModel::Deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.Raw(4);
  if (!std::equal(magic.begin(), magic.end(), kModelMagic.begin())) throw DecodeError("not a model record");
  if (r.U8() != kModelVersion) throw DecodeError("unsupported model record version");
  PartyModel m;
  std::uint8_t kind = r.U8();
  if (kind > 1) throw DecodeError("unknown scenario in model record");
  m.scenario = kind == 0 ? ScenarioKind::kTargetIndependent : ScenarioKind::kTargetCalibrated;
  m.owner = r.U16();
  m.sources = r.U32();
  m.columns = r.U32();
  m.intercept = r.U8() != 0;
  m.field = ReadFieldHeader(r);
  std::size_t count = r.U16();
  for (std::size_t i = 0; i < count; ++i) {
    ModelShare s;
    s.plan_index = r.U32();
    auto session = r.Raw(16);
    std::copy(session.begin(), session.end(), s.session.begin());
    std::vector<PartyId> group(r.U16());
    for (auto& p : group) p = r.U16();
    s.beta = AsFragment(m.owner, group, ReadMatrix(r, m.field));
    if (s.beta.rows() != m.columns || s.beta.cols() != 1) throw DecodeError("model coefficients have the wrong shape");
    m.shares.push_back(std::move(s));
  }
  if (!r.done()) throw DecodeError("trailing bytes after model record");
  return m;
}

void PartyModel::Save(const std::filesystem::path& path) const {
  Bytes bytes = Serialize();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

PartyModel PartyModel::Load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open model {}", path.string()));
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return Deserialize(bytes);
}

}  // namespace sharelr
