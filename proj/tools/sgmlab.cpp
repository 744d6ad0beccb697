#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sgmlab/io.hpp"
#include "sgmlab/runner.hpp"

namespace fs = std::filesystem;
using namespace sgmlab;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kNumerical = 3 };

GmmSpec load_spec(const std::string& what, std::uint64_t mean_seed) {
  if (what == "reference") return reference_gmm(mean_seed);
  return gmm_from_json(read_json(what));
}

GridConfig full_grid() {
  GridConfig g;
  g.betas = {1e4, 1e6, 1e10};
  g.etas = {2e-4, 5e-4, 1e-3, 2e-3, 5e-3};
  g.ns = {512, 1024, 2048, 4096, 8192};
  g.seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  g.base.train.steps = 100000;
  g.base.schedule.train_steps = 1000;
  return g;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Score-based generative model generalization lab"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  const char* env_out = std::getenv("SGMLAB_OUT");
  std::string out = env_out ? env_out : "runs";
  int threads = 1;
  std::optional<std::size_t> mc_budget;
  app.add_option("--seed", seed, "Seed (overrides config seeds)");
  app.add_option("--out", out, "Output root (default $SGMLAB_OUT or ./runs)");
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--mc-budget", mc_budget, "Monte Carlo samples per time atom");

  std::string gmm = "reference";
  std::uint64_t mean_seed = 0;

  auto* gen = app.add_subcommand("gen-data", "Sample a dataset from a mixture");
  std::size_t gen_n = 512;
  gen->add_option("--n", gen_n, "Dataset size")->required();
  gen->add_option("--gmm", gmm, "Mixture JSON file or 'reference'");
  gen->add_option("--mean-seed", mean_seed, "Mean seed for the reference mixture");

  auto* tr = app.add_subcommand("train", "Train one run per seed");
  std::string config_path;
  bool with_eval = false;
  tr->add_option("--config", config_path, "Run config JSON")->check(CLI::ExistingFile);
  tr->add_flag("--eval", with_eval, "Also evaluate gen gap, proxies, topology and W2");

  auto* sm = app.add_subcommand("sample", "Generate samples from a checkpoint");
  std::string checkpoint;
  std::size_t sample_m = 1024;
  sm->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  sm->add_option("--m", sample_m, "Number of samples");
  sm->add_option("--config", config_path, "Run config JSON for the schedule")->check(CLI::ExistingFile);

  auto* dc = app.add_subcommand("decompose", "Decompose the score error");
  std::string data_path;
  double horizon = 2.0;
  int steps = 10;
  dc->add_option("--checkpoint", checkpoint, "Checkpoint file (omit for the exact score)")->check(CLI::ExistingFile);
  dc->add_option("--data", data_path, "Dataset file")->required()->check(CLI::ExistingFile);
  dc->add_option("--gmm", gmm, "Mixture JSON file or 'reference'");
  dc->add_option("--mean-seed", mean_seed, "Mean seed for the reference mixture");
  dc->add_option("--T", horizon, "Horizon of the uniform schedule");
  dc->add_option("--N", steps, "Steps of the uniform schedule");

  auto* tp = app.add_subcommand("topology", "Topological complexities of a trajectory");
  std::string traj;
  std::size_t topo_n = 0;
  std::vector<double> scales;
  BoundParams bp;
  tp->add_option("--trajectory", traj, "Trajectory file")->required()->check(CLI::ExistingFile);
  tp->add_option("--n", topo_n, "Dataset size")->required();
  tp->add_option("--scales", scales, "Magnitude scales (default sqrt(n) and 0.01)");
  tp->add_option("--B", bp.loss_bound, "Loss bound");
  tp->add_option("--delta", bp.delta, "Confidence");
  tp->add_option("--I", bp.mutual_info, "Mutual information surrogate");
  tp->add_option("--L", bp.lipschitz, "Scale constant in PMag(L r W)");

  auto* bd = app.add_subcommand("bounds", "Bound reports for a trained run");
  std::string run_dir;
  BoundsOptions bo;
  bd->add_option("--run", run_dir, "Run directory written by train")->required()->check(CLI::ExistingDirectory);
  bd->add_option("--T", bo.uniform_horizon, "Horizon of the uniform schedule");
  bd->add_option("--N", bo.uniform_steps, "Steps of the uniform schedule");
  bd->add_option("--w-samples", bo.w_samples, "Samples per side for W2");

  auto* gr = app.add_subcommand("grid", "Run a hyperparameter grid");
  bool full = false;
  gr->add_option("--config", config_path, "Grid config JSON")->check(CLI::ExistingFile);
  gr->add_flag("--full-grid", full, "Full-size grid (hours)");

  auto* rp = app.add_subcommand("report", "Correlations between complexities and gen gap");
  std::string aggregate;
  rp->add_option("--aggregate", aggregate, "aggregate.csv from grid")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    const fs::path root(out);
    auto with_mc = [&](RunConfig c) {
      if (mc_budget) c.mc.samples = *mc_budget;
      if (seed) c.seeds = {*seed};
      return c;
    };
    if (gen->parsed()) {
      const fs::path file = root / "dataset.bin";
      cmd_gen_data(load_spec(gmm, mean_seed), gen_n, seed.value_or(0), file);
      std::cout << file.string() << '\n';
    } else if (tr->parsed()) {
      const RunConfig c = with_mc(config_path.empty() ? RunConfig{} : load_config(config_path));
      for (auto s : c.seeds) {
        const fs::path dir = root / ("seed_" + std::to_string(s));
        const TrainedRun run = cmd_train(c, s, dir);
        if (with_eval) evaluate_run(c, s, run, dir);
        std::cout << dir.string() << '\n';
      }
    } else if (sm->parsed()) {
      const RunConfig c = config_path.empty() ? RunConfig{} : load_config(config_path);
      const fs::path file = root / "samples.bin";
      cmd_sample(checkpoint, c.schedule.inference(), sample_m, seed.value_or(0), file, threads);
      std::cout << file.string() << '\n';
    } else if (dc->parsed()) {
      Dataset data;
      data.points = load_cloud(data_path);
      McConfig mc;
      mc.seed = seed.value_or(0);
      if (mc_budget) mc.samples = *mc_budget;
      const fs::path file = root / "decomposition.json";
      const auto ck = checkpoint.empty() ? std::nullopt : std::optional<fs::path>(checkpoint);
      cmd_decompose(ck, data, load_spec(gmm, mean_seed), lambda_measure(build_uniform_schedule(horizon, steps)), mc,
                    file);
      std::cout << file.string() << '\n';
    } else if (tp->parsed()) {
      if (scales.empty()) scales = standard_scales(topo_n);
      const fs::path file = root / "topology.json";
      cmd_topology(traj, scales, bp, topo_n, file, threads);
      std::cout << file.string() << '\n';
    } else if (bd->parsed()) {
      const fs::path file = root / "bounds.json";
      bo.mc_samples = mc_budget;
      cmd_bounds(run_dir, bo, file);
      std::cout << file.string() << '\n';
    } else if (gr->parsed()) {
      GridConfig g = full ? full_grid() : GridConfig{};
      if (!config_path.empty()) g = grid_from_json(read_json(config_path));
      if (mc_budget) g.base.mc.samples = *mc_budget;
      if (seed) g.seeds = {*seed};
      const auto rows = cmd_grid(g, root, threads);
      std::size_t failed = 0;
      for (const auto& r : rows) failed += r.status != "ok";
      std::cout << (root / "aggregate.csv").string() << " (" << rows.size() << " runs, " << failed << " failed)\n";
    } else if (rp->parsed()) {
      const auto rows = cmd_report(aggregate, root);
      for (const auto& r : rows)
        std::cout << r.group << ' ' << r.complexity << " n=" << r.count << " pearson=" << r.pearson
                  << " spearman=" << r.spearman << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}
