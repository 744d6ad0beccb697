#include "sgmlab/score_net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sgmlab/io.hpp"
#include "sgmlab/rng.hpp"

namespace sgmlab {

void MlpArch::validate() const {
  if (input_dim < 1 || n_blocks < 1 || hidden < 1 || time_embed_dim < 1)
    throw InvalidArgument("mlp arch: all dimensions must be >= 1");
  if (!(horizon > 0.0)) throw InvalidArgument("mlp arch: horizon must be positive");
}

void to_json(nlohmann::json& j, const MlpArch& a) {
  j = {{"input_dim", a.input_dim}, {"n_blocks", a.n_blocks},   {"hidden", a.hidden},
       {"time_embed_dim", a.time_embed_dim}, {"horizon", a.horizon}, {"embed_scale", a.embed_scale},
       {"time_activation", a.time_activation}, {"activation", "silu"}};
}

void from_json(const nlohmann::json& j, MlpArch& a) {
  a.input_dim = j.at("input_dim").get<Eigen::Index>();
  a.n_blocks = j.value("n_blocks", 3);
  a.hidden = j.value("hidden", 32);
  a.time_embed_dim = j.value("time_embed_dim", 32);
  a.horizon = j.at("horizon").get<double>();
  a.embed_scale = j.value("embed_scale", 1000.0);
  a.time_activation = j.value("time_activation", true);
  a.validate();
}

MatrixMap ParamVector::tensor(std::size_t slot) {
  const auto& s = layout.at(slot);
  return {values.data() + s.offset, s.rows, s.cols};
}

ConstMatrixMap ParamVector::tensor(std::size_t slot) const {
  const auto& s = layout.at(slot);
  return {values.data() + s.offset, s.rows, s.cols};
}

void ParamVector::validate() const {
  std::size_t expect = 0;
  for (const auto& s : layout) {
    if (s.offset != expect) throw InvalidArgument("param layout has a gap or overlap at " + s.name);
    expect += s.size();
  }
  if (expect != values.size()) throw InvalidArgument("param layout does not cover the array");
  for (double v : values)
    if (!std::isfinite(v)) throw InvalidArgument("non-finite parameter");
}

namespace {

// Slot indices; blocks occupy six consecutive slots each.
constexpr std::size_t kTime1W = 0, kTime1B = 1, kTime2W = 2, kTime2B = 3, kInW = 4, kInB = 5, kBlock0 = 6;
constexpr std::size_t kInjW = 0, kInjB = 1, kFc1W = 2, kFc1B = 3, kFc2W = 4, kFc2B = 5, kPerBlock = 6;

std::size_t block_slot(int block, std::size_t which) { return kBlock0 + static_cast<std::size_t>(block) * kPerBlock + which; }
std::size_t out_w_slot(const MlpArch& a) { return block_slot(a.n_blocks, 0); }
std::size_t out_b_slot(const MlpArch& a) { return out_w_slot(a) + 1; }

}  // namespace

std::vector<TensorSlot> param_layout(const MlpArch& a) {
  a.validate();
  const Eigen::Index H = a.hidden, E = a.time_embed_dim, d = a.input_dim;
  std::vector<TensorSlot> slots;
  std::size_t offset = 0;
  auto add = [&](std::string name, Eigen::Index r, Eigen::Index c) {
    slots.push_back({std::move(name), offset, r, c});
    offset += static_cast<std::size_t>(r * c);
  };
  add("time1.weight", H, E);
  add("time1.bias", H, 1);
  add("time2.weight", H, H);
  add("time2.bias", H, 1);
  add("input.weight", H, d);
  add("input.bias", H, 1);
  for (int b = 0; b < a.n_blocks; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    add(p + "inject.weight", H, H);
    add(p + "inject.bias", H, 1);
    add(p + "fc1.weight", H, H);
    add(p + "fc1.bias", H, 1);
    add(p + "fc2.weight", H, H);
    add(p + "fc2.bias", H, 1);
  }
  add("output.weight", d, H);
  add("output.bias", d, 1);
  return slots;
}

ParamVector init_params(const MlpArch& arch, std::uint64_t seed, InitOptions options) {
  ParamVector p;
  p.layout = param_layout(arch);
  p.values.assign(p.layout.back().offset + p.layout.back().size(), 0.0);
  RngStream rng(seed, Purpose::init);
  const std::size_t out_w = out_w_slot(arch);
  for (std::size_t s = 0; s < p.layout.size(); ++s) {
    const auto& slot = p.layout[s];
    if (slot.cols == 1) continue;  // bias
    if (s == out_w && options.zero_output) continue;
    const double sd = std::sqrt(2.0 / static_cast<double>(slot.cols));
    for (std::size_t i = 0; i < slot.size(); ++i) p.values[slot.offset + i] = sd * rng.normal();
  }
  return p;
}

ScoreNet make_net(const MlpArch& arch, std::uint64_t seed, InitOptions options) {
  return {arch, init_params(arch, seed, options)};
}

namespace {

using Mat = Eigen::MatrixXd;

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& u) {
  return (1.0 / (1.0 + (-u.array()).exp())).matrix();
}

template <typename A, typename B>
auto silu_grad_from(const Eigen::MatrixBase<A>& u, const Eigen::MatrixBase<B>& sig) {
  return sig.array() * (1.0 + u.array() * (1.0 - sig.array()));
}

Mat time_embedding(const MlpArch& a, std::span<const double> times) {
  const Eigen::Index E = a.time_embed_dim;
  const Eigen::Index half = E / 2;
  Mat emb = Mat::Zero(E, static_cast<Eigen::Index>(times.size()));
  for (std::size_t c = 0; c < times.size(); ++c) {
    const double scaled = a.embed_scale * times[c] / a.horizon;
    for (Eigen::Index i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
      emb(i, static_cast<Eigen::Index>(c)) = std::sin(scaled * freq);
      emb(i + half, static_cast<Eigen::Index>(c)) = std::cos(scaled * freq);
    }
  }
  return emb;
}

// Activations and scratch buffers. One instance lives per thread and is
// reused across calls, so batch-sized buffers are allocated once.
// The time path only depends on t, so it runs once per distinct time; column
// i of the batch reads column time_col[i] of the time-path matrices.
struct Cache {
  std::vector<double> unique_times;
  std::vector<Eigen::Index> time_col;
  Mat emb, a_t1, sig_t1, h_t1, tau, x, inj;
  std::vector<Mat> h;  // h[0] = input projection, h[b+1] = output of block b
  std::vector<Mat> u1, sig1, a1, u2, sig2;
  Mat out;
  Mat d_out, dh, du1, du2, da1, du1_t, dtau;
};

Cache& thread_cache() {
  thread_local Cache cache;
  return cache;
}

void index_times(std::span<const double> times, Cache& c) {
  c.unique_times.assign(times.begin(), times.end());
  std::sort(c.unique_times.begin(), c.unique_times.end());
  c.unique_times.erase(std::unique(c.unique_times.begin(), c.unique_times.end()), c.unique_times.end());
  c.time_col.resize(times.size());
  for (std::size_t i = 0; i < times.size(); ++i)
    c.time_col[i] = std::lower_bound(c.unique_times.begin(), c.unique_times.end(), times[i]) - c.unique_times.begin();
}

void forward(const ScoreNet& net, std::span<const double> times, const PointMatrix& x, Cache& c) {
  const auto& a = net.arch;
  const auto& p = net.params;
  if (x.cols() != a.input_dim) throw InvalidArgument("eps_forward: input has wrong dimension");
  if (static_cast<Eigen::Index>(times.size()) != x.rows()) throw InvalidArgument("eps_forward: one time per row expected");
  index_times(times, c);
  c.emb = time_embedding(a, c.unique_times);
  c.a_t1 = (p.tensor(kTime1W) * c.emb).colwise() + p.tensor(kTime1B).col(0);
  if (a.time_activation) {
    c.sig_t1 = sigmoid(c.a_t1);
    c.h_t1 = (c.a_t1.array() * c.sig_t1.array()).matrix();
  } else {
    c.h_t1 = c.a_t1;
  }
  c.tau = (p.tensor(kTime2W) * c.h_t1).colwise() + p.tensor(kTime2B).col(0);
  c.x = x.transpose();
  const auto nb = static_cast<std::size_t>(a.n_blocks);
  c.h.resize(nb + 1);
  c.u1.resize(nb);
  c.sig1.resize(nb);
  c.a1.resize(nb);
  c.u2.resize(nb);
  c.sig2.resize(nb);
  c.h[0].resize(a.hidden, x.rows());
  c.h[0].noalias() = p.tensor(kInW) * c.x;
  c.h[0].colwise() += p.tensor(kInB).col(0);
  const Eigen::Index B = x.rows();
  for (int b = 0; b < a.n_blocks; ++b) {
    const auto bi = static_cast<std::size_t>(b);
    c.inj = (p.tensor(block_slot(b, kInjW)) * c.tau).colwise() +
            (p.tensor(block_slot(b, kFc1B)).col(0) + p.tensor(block_slot(b, kInjB)).col(0));
    c.u1[bi].resize(a.hidden, B);
    c.u1[bi].noalias() = p.tensor(block_slot(b, kFc1W)) * c.h[bi];
    for (Eigen::Index i = 0; i < B; ++i) c.u1[bi].col(i) += c.inj.col(c.time_col[static_cast<std::size_t>(i)]);
    c.sig1[bi] = sigmoid(c.u1[bi]);
    c.a1[bi] = (c.u1[bi].array() * c.sig1[bi].array()).matrix();
    c.u2[bi].resize(a.hidden, B);
    c.u2[bi].noalias() = p.tensor(block_slot(b, kFc2W)) * c.a1[bi];
    c.u2[bi].colwise() += p.tensor(block_slot(b, kFc2B)).col(0);
    c.sig2[bi] = sigmoid(c.u2[bi]);
    c.h[bi + 1] = c.h[bi] + (c.u2[bi].array() * c.sig2[bi].array()).matrix();
  }
  c.out.resize(a.input_dim, B);
  c.out.noalias() = p.tensor(out_w_slot(a)) * c.h[nb];
  c.out.colwise() += p.tensor(out_b_slot(a)).col(0);
  if (!c.out.allFinite()) throw NumericalFailure("eps_forward: non-finite activations");
}

// Accumulates d(loss)/d(params) given d(loss)/d(out), stored in c.d_out.
// Products are evaluated into aligned temporaries before landing in the flat
// buffer; writing into it directly makes rounding depend on heap alignment.
void backward(const ScoreNet& net, Cache& c, ParamVector& grad) {
  const auto& a = net.arch;
  const auto& p = net.params;
  const auto nb = static_cast<std::size_t>(a.n_blocks);
  const Eigen::Index B = c.d_out.cols();
  grad.tensor(out_w_slot(a)) = Mat(c.d_out * c.h[nb].transpose());
  grad.tensor(out_b_slot(a)).col(0) = Vector(c.d_out.rowwise().sum());
  c.dh.resize(a.hidden, B);
  c.dh.noalias() = p.tensor(out_w_slot(a)).transpose() * c.d_out;
  c.dtau.setZero(c.tau.rows(), c.tau.cols());
  for (int b = a.n_blocks - 1; b >= 0; --b) {
    const auto bi = static_cast<std::size_t>(b);
    c.du2 = (c.dh.array() * silu_grad_from(c.u2[bi], c.sig2[bi])).matrix();
    grad.tensor(block_slot(b, kFc2W)) = Mat(c.du2 * c.a1[bi].transpose());
    grad.tensor(block_slot(b, kFc2B)).col(0) = Vector(c.du2.rowwise().sum());
    c.da1.resize(a.hidden, B);
    c.da1.noalias() = p.tensor(block_slot(b, kFc2W)).transpose() * c.du2;
    c.du1 = (c.da1.array() * silu_grad_from(c.u1[bi], c.sig1[bi])).matrix();
    grad.tensor(block_slot(b, kFc1W)) = Mat(c.du1 * c.h[bi].transpose());
    c.du1_t.setZero(c.du1.rows(), c.tau.cols());
    for (Eigen::Index i = 0; i < B; ++i) c.du1_t.col(c.time_col[static_cast<std::size_t>(i)]) += c.du1.col(i);
    const Vector db = c.du1_t.rowwise().sum();
    grad.tensor(block_slot(b, kFc1B)).col(0) = db;
    grad.tensor(block_slot(b, kInjW)) = Mat(c.du1_t * c.tau.transpose());
    grad.tensor(block_slot(b, kInjB)).col(0) = db;
    c.dtau.noalias() += p.tensor(block_slot(b, kInjW)).transpose() * c.du1_t;
    c.dh.noalias() += p.tensor(block_slot(b, kFc1W)).transpose() * c.du1;
  }
  grad.tensor(kInW) = Mat(c.dh * c.x.transpose());
  grad.tensor(kInB).col(0) = Vector(c.dh.rowwise().sum());
  grad.tensor(kTime2W) = Mat(c.dtau * c.h_t1.transpose());
  grad.tensor(kTime2B).col(0) = Vector(c.dtau.rowwise().sum());
  Mat dh_t1 = p.tensor(kTime2W).transpose() * c.dtau;
  Mat da_t1 = a.time_activation ? Mat(dh_t1.array() * silu_grad_from(c.a_t1, c.sig_t1)) : dh_t1;
  grad.tensor(kTime1W) = Mat(da_t1 * c.emb.transpose());
  grad.tensor(kTime1B).col(0) = Vector(da_t1.rowwise().sum());
}

}  // namespace

PointMatrix eps_forward(const ScoreNet& net, std::span<const double> times, const PointMatrix& x) {
  Cache& c = thread_cache();
  forward(net, times, x, c);
  return c.out.transpose();
}

PointMatrix eps_forward(const ScoreNet& net, double t, const PointMatrix& x) {
  std::vector<double> times(static_cast<std::size_t>(x.rows()), t);
  return eps_forward(net, times, x);
}

Vector eps_forward(const ScoreNet& net, double t, const Vector& x) {
  PointMatrix row = x.transpose();
  return eps_forward(net, t, row).row(0).transpose();
}

namespace {

double eps_to_score_factor(double t) {
  if (!(t > 0.0)) throw InvalidArgument("score_from_eps: time must be positive");
  const double one_minus_alpha = -std::expm1(-2.0 * t);
  if (one_minus_alpha < 1e-12) throw NearSingularTime("score_from_eps: 1 - alpha(t) below 1e-12");
  return -2.0 / std::sqrt(one_minus_alpha);
}

}  // namespace

PointMatrix score_from_eps(const ScoreNet& net, double t, const PointMatrix& x) {
  const double factor = eps_to_score_factor(t);
  return factor * eps_forward(net, t, x);
}

Vector score_from_eps(const ScoreNet& net, double t, const Vector& x) {
  const double factor = eps_to_score_factor(t);
  return factor * eps_forward(net, t, x);
}

ScoreField gamma_score_field(const ScoreNet& net) {
  return [net](double t, const PointMatrix& x) -> PointMatrix { return score_from_eps(net, t, x) + 2.0 * x; };
}

LossAndGradient backprop_eps_loss(const ScoreNet& net, const EpsBatch& batch, std::span<const double> weights) {
  const Eigen::Index B = batch.inputs.rows();
  if (B == 0) throw InvalidArgument("backprop_eps_loss: empty batch");
  if (batch.targets.rows() != B || batch.targets.cols() != batch.inputs.cols())
    throw InvalidArgument("backprop_eps_loss: targets do not match inputs");
  if (!weights.empty() && static_cast<Eigen::Index>(weights.size()) != B)
    throw InvalidArgument("backprop_eps_loss: one weight per sample expected");
  Cache& c = thread_cache();
  forward(net, batch.times, batch.inputs, c);
  Mat resid = c.out - batch.targets.transpose();
  LossAndGradient r;
  r.per_sample = resid.colwise().squaredNorm().transpose();
  Vector w = weights.empty() ? Vector::Ones(B) : Vector(Eigen::Map<const Vector>(weights.data(), B));
  r.loss = w.dot(r.per_sample) / static_cast<double>(B);
  c.d_out = resid * (2.0 / static_cast<double>(B) * w).asDiagonal();
  ParamVector grad;
  grad.layout = net.params.layout;
  grad.values.assign(net.params.size(), 0.0);
  backward(net, c, grad);
  r.gradient = grad.flat();
  if (!std::isfinite(r.loss) || !r.gradient.allFinite()) throw NumericalFailure("backprop_eps_loss: non-finite loss or gradient");
  return r;
}

Vector eps_errors(const ScoreNet& net, const EpsBatch& batch) {
  Cache& c = thread_cache();
  forward(net, batch.times, batch.inputs, c);
  return (c.out - batch.targets.transpose()).colwise().squaredNorm().transpose();
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header = {{"arch", ckpt.net.arch},
                           {"seed", ckpt.seed},
                           {"step", ckpt.step},
                           {"n_params", ckpt.net.params.size()},
                           {"format", "sgmlab-checkpoint-v1"}};
  std::ostringstream out;
  out << header.dump() << '\n';
  write_f64_le(out, ckpt.net.params.values);
  write_file_atomic(path, out.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open checkpoint " + path.string());
  std::string line;
  std::getline(in, line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    throw InvalidArgument("checkpoint header is not valid json: " + path.string());
  }
  Checkpoint c;
  c.net.arch = header.at("arch").get<MlpArch>();
  c.seed = header.value("seed", std::uint64_t{0});
  c.step = header.value("step", std::uint64_t{0});
  c.net.params.layout = param_layout(c.net.arch);
  const auto n = header.at("n_params").get<std::size_t>();
  const auto& last = c.net.params.layout.back();
  if (n != last.offset + last.size()) throw InvalidArgument("checkpoint parameter count does not match arch");
  c.net.params.values = read_f64_le(in, n);
  c.net.params.validate();
  return c;
}

}  // namespace sgmlab
