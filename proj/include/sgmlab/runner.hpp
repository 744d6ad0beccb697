#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgmlab/gmm.hpp"
#include "sgmlab/losses.hpp"
#include "sgmlab/optim.hpp"
#include "sgmlab/schedule.hpp"
#include "sgmlab/score_net.hpp"
#include "sgmlab/topology.hpp"

namespace sgmlab {

inline constexpr const char* kVersion = "0.3.0";

struct ScheduleParams {
  ScheduleKind kind = ScheduleKind::cosine;
  int train_steps = 200;
  int inference_steps = 100;
  double horizon = 2.0;  // uniform only
  double cosine_offset = 0.008;
  double ratio_cap = 0.999;

  NoiseSchedule train() const;
  /// Strided subset of the training times.
  NoiseSchedule inference() const;
};

struct EvalOptions {
  std::size_t draws_per_point = 10;
  std::size_t sample_m = 1024;
  std::size_t trajectory_steps = 200;
  std::size_t trajectory_subset = 3000;
  std::size_t grad_window = 200;
  double tau = 1.0;
  double delta = 0.05;
  BoundParams topology;
};

struct RunConfig {
  GmmSpec spec = reference_gmm(0);
  std::optional<std::filesystem::path> dataset;  // train on this file instead of sampling
  std::size_t n = 512;
  ScheduleParams schedule;
  MlpArch arch;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  McConfig mc;
  EvalOptions eval;

  /// Throws ConfigError.
  void validate() const;
  /// Architecture with input_dim and horizon filled in.
  MlpArch resolved_arch() const;
};

nlohmann::json config_to_json(const RunConfig& c);
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

struct RunManifest {
  nlohmann::json config;
  std::map<std::string, std::string> inputs;     // name -> git blob hash
  std::map<std::string, std::string> artifacts;  // relative path -> git blob hash
  nlohmann::json timing = nlohmann::json::object();
  std::string version = kVersion;

  nlohmann::json to_json() const;
  /// Hash of everything except timing.
  std::string content_hash() const;
};

void write_manifest(const std::filesystem::path& path, const RunManifest& m);

struct RunMetrics {
  double beta = 0.0, eta = 0.0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string status = "ok";
  std::string error;
  double train_loss = NAN, test_loss = NAN, gen_gap = NAN;
  double avg_sq_grad = NAN, b = NAN, b_sqrt_n = NAN, sgld_bound = NAN;
  double e1 = NAN, pmag_sqrt_n = NAN, pmag_small = NAN, w2 = NAN;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const RunMetrics& m);

/// Mean eps-loss with `draws` (t, noise) pairs per point. Point i uses the
/// same draws for every dataset, so train and test losses share noise.
double eval_eps_loss(const ScoreNet& net, const Dataset& data, const NoiseSchedule& schedule, std::size_t draws,
                     std::uint64_t seed);

Dataset cmd_gen_data(const GmmSpec& spec, std::size_t n, std::uint64_t seed, const std::filesystem::path& out,
                     Purpose purpose = Purpose::data);

struct TrainedRun {
  TrainResult result;
  Dataset train_data, test_data;
  NoiseSchedule schedule;
};

/// Trains one seed into `dir`: datasets, checkpoint, grad_stats.csv, manifest.json.
TrainedRun cmd_train(const RunConfig& config, std::uint64_t seed, const std::filesystem::path& dir);

/// Gen gap, proxies, trajectory topology and W2 for a trained run; writes
/// metrics.csv, topology.json, trajectory.bin and samples.bin into `dir`.
RunMetrics evaluate_run(const RunConfig& config, std::uint64_t seed, const TrainedRun& run,
                        const std::filesystem::path& dir);

PointMatrix cmd_sample(const std::filesystem::path& checkpoint, const NoiseSchedule& schedule, std::size_t m,
                       std::uint64_t seed, const std::filesystem::path& out, int threads = 1);

/// Empty checkpoint path means the exact score 2 grad log p~_t.
DecompositionReport cmd_decompose(const std::optional<std::filesystem::path>& checkpoint, const Dataset& data,
                                  const GmmSpec& spec, const TimeMeasure& measure, const McConfig& mc,
                                  const std::filesystem::path& out);

TopologyReport cmd_topology(const std::filesystem::path& trajectory, const std::vector<double>& scales,
                            const BoundParams& params, std::size_t n, const std::filesystem::path& out,
                            int threads = 1);

struct BoundsOptions {
  double uniform_horizon = 2.0;
  int uniform_steps = 10;
  std::size_t w_samples = 1024;
  std::size_t fisher_samples = 4096;
  std::optional<std::size_t> mc_samples;  // overrides the run's MC budget
};

/// Bound reports for a trained run directory (written by cmd_train).
nlohmann::json cmd_bounds(const std::filesystem::path& run_dir, const BoundsOptions& options,
                          const std::filesystem::path& out);

struct GridConfig {
  RunConfig base;
  std::vector<double> betas{1e4, 1e10};
  std::vector<double> etas{5e-4, 2e-3};
  std::vector<std::size_t> ns{512, 2048};
  std::vector<std::uint64_t> seeds{0, 1, 2};

  std::size_t cells() const { return betas.size() * etas.size() * ns.size(); }
  void validate() const;
};

nlohmann::json grid_to_json(const GridConfig& g);
GridConfig grid_from_json(const nlohmann::json& j);

/// One row per (cell, seed), in axis order; failed runs keep their row with
/// status "failed".
std::vector<RunMetrics> cmd_grid(const GridConfig& grid, const std::filesystem::path& out, int threads = 1);

struct CorrelationRow {
  std::string group;
  std::string complexity;
  std::size_t count = 0;
  double pearson = NAN, spearman = NAN;
};

/// Per-beta Pearson and Spearman between each complexity column and gen_gap;
/// writes correlations.csv and scatter.csv into `out`.
std::vector<CorrelationRow> cmd_report(const std::filesystem::path& aggregate_csv, const std::filesystem::path& out);

/// Minimal CSV table: header plus rows of raw cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;  // throws ConfigError if absent
};

CsvTable parse_csv(const std::string& text);

}  // namespace sgmlab
