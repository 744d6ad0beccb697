#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sgmlab/types.hpp"

namespace sgmlab {

/// Time-conditioned residual MLP predicting the forward noise.
///
/// t is embedded sinusoidally (t / horizon, scaled by embed_scale), passed
/// through two fully connected layers, and injected additively into every
/// block through a per-block linear map. Each block is two SiLU layers with a
/// residual skip; the output layer maps back to the input dimension.
struct MlpArch {
  Eigen::Index input_dim = 2;
  int n_blocks = 3;
  int hidden = 32;
  int time_embed_dim = 32;
  double horizon = 1.0;
  double embed_scale = 1000.0;
  bool time_activation = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const MlpArch& arch);
void from_json(const nlohmann::json& j, MlpArch& arch);

struct TensorSlot {
  std::string name;
  std::size_t offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;  // 1 for biases

  std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
};

using MatrixMap = Eigen::Map<Eigen::MatrixXd>;
using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd>;

/// Flat parameter storage plus the table describing where each tensor lives.
/// Tensors are stored column-major.
struct ParamVector {
  std::vector<double> values;
  std::vector<TensorSlot> layout;

  std::size_t size() const { return values.size(); }
  MatrixMap tensor(std::size_t slot);
  ConstMatrixMap tensor(std::size_t slot) const;
  Eigen::Map<Vector> flat() { return {values.data(), static_cast<Eigen::Index>(values.size())}; }
  Eigen::Map<const Vector> flat() const { return {values.data(), static_cast<Eigen::Index>(values.size())}; }
  /// Throws unless the layout tiles the array exactly and every entry is finite.
  void validate() const;
};

std::vector<TensorSlot> param_layout(const MlpArch& arch);

struct ScoreNet {
  MlpArch arch;
  ParamVector params;
};

struct InitOptions {
  // Zero output layer makes eps identically 0 at initialization.
  bool zero_output = true;
};

/// He-style init: weights N(0, 2 / fan_in), biases 0.
ParamVector init_params(const MlpArch& arch, std::uint64_t seed, InitOptions options = {});
ScoreNet make_net(const MlpArch& arch, std::uint64_t seed, InitOptions options = {});

Vector eps_forward(const ScoreNet& net, double t, const Vector& x);
/// Batch forward with one time for all rows.
PointMatrix eps_forward(const ScoreNet& net, double t, const PointMatrix& x);
/// Batch forward with a time per row.
PointMatrix eps_forward(const ScoreNet& net, std::span<const double> times, const PointMatrix& x);

/// s = -2 eps / sqrt(1 - alpha(t)), which targets 2 grad log p (Lebesgue).
Vector score_from_eps(const ScoreNet& net, double t, const Vector& x);
PointMatrix score_from_eps(const ScoreNet& net, double t, const PointMatrix& x);

/// The network score in the gamma convention used by the sampler and the
/// score-error functionals: -2 eps / sqrt(1 - alpha) + 2x.
ScoreField gamma_score_field(const ScoreNet& net);

struct EpsBatch {
  std::vector<double> times;
  PointMatrix inputs;   // x_t, one row per sample
  PointMatrix targets;  // noise the network should predict
};

struct LossAndGradient {
  double loss = 0.0;
  Vector gradient;
  Vector per_sample;  // unweighted squared errors
};

/// (1/B) sum_i w_i |eps(t_i, x_i) - target_i|^2 and its exact gradient.
/// Empty weights mean all ones.
LossAndGradient backprop_eps_loss(const ScoreNet& net, const EpsBatch& batch, std::span<const double> weights = {});

/// Per-sample squared errors without the gradient.
Vector eps_errors(const ScoreNet& net, const EpsBatch& batch);

struct Checkpoint {
  ScoreNet net;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

/// One JSON header line {arch, seed, step, n_params} followed by the raw
/// little-endian float64 parameters.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sgmlab
