#include "sgmlab/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "sgmlab/diffusion.hpp"
#include "sgmlab/io.hpp"
#include "sgmlab/ot.hpp"
#include "sgmlab/parallel.hpp"
#include "sgmlab/rng.hpp"

namespace sgmlab {

namespace fs = std::filesystem;
using nlohmann::json;

NoiseSchedule ScheduleParams::train() const {
  if (kind == ScheduleKind::uniform) return build_uniform_schedule(horizon, train_steps);
  return build_cosine_schedule(train_steps, cosine_offset, ratio_cap);
}

NoiseSchedule ScheduleParams::inference() const { return respace_schedule(train(), inference_steps); }

void RunConfig::validate() const {
  try {
    if (dataset) {
      if (!fs::exists(*dataset)) throw ConfigError("dataset file does not exist: " + dataset->string());
    } else {
      spec.validate();
      if (n < 1) throw ConfigError("n must be >= 1");
    }
    if (seeds.empty()) throw ConfigError("seeds must be nonempty");
    if (schedule.train_steps < 1 || schedule.inference_steps < 1 || schedule.inference_steps > schedule.train_steps)
      throw ConfigError("schedule: need 1 <= inference_steps <= train_steps");
    train.validate();
    mc.validate();
    eval.topology.validate();
    if (eval.draws_per_point < 1) throw ConfigError("eval: draws_per_point must be >= 1");
    if (!(eval.delta > 0.0 && eval.delta < 1.0) || !(eval.tau > 0.0)) throw ConfigError("eval: bad tau or delta");
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

MlpArch RunConfig::resolved_arch() const {
  MlpArch a = arch;
  a.input_dim = dataset ? static_cast<Eigen::Index>(load_cloud(*dataset).cols()) : spec.dim();
  a.horizon = schedule.train().horizon();
  return a;
}

json config_to_json(const RunConfig& c) {
  json j;
  j["gmm"] = gmm_to_json(c.spec);
  if (c.dataset) j["dataset"] = c.dataset->string();
  j["n"] = c.n;
  j["schedule"] = {{"kind", to_string(c.schedule.kind)},
                   {"train_steps", c.schedule.train_steps},
                   {"inference_steps", c.schedule.inference_steps},
                   {"horizon", c.schedule.horizon},
                   {"cosine_offset", c.schedule.cosine_offset},
                   {"ratio_cap", c.schedule.ratio_cap}};
  j["arch"] = {{"n_blocks", c.arch.n_blocks},
               {"hidden", c.arch.hidden},
               {"time_embed_dim", c.arch.time_embed_dim},
               {"embed_scale", c.arch.embed_scale},
               {"time_activation", c.arch.time_activation}};
  j["train"] = c.train;
  j["seeds"] = c.seeds;
  j["mc"] = c.mc;
  const auto& e = c.eval;
  j["eval"] = {{"draws_per_point", e.draws_per_point},
               {"sample_m", e.sample_m},
               {"trajectory_steps", e.trajectory_steps},
               {"trajectory_subset", e.trajectory_subset},
               {"grad_window", e.grad_window},
               {"tau", e.tau},
               {"delta", e.delta},
               {"topology",
                {{"B", e.topology.loss_bound},
                 {"delta", e.topology.delta},
                 {"I", e.topology.mutual_info},
                 {"r", e.topology.r},
                 {"L", e.topology.lipschitz}}}};
  return j;
}

RunConfig config_from_json(const json& j) {
  try {
    RunConfig c;
    if (j.contains("gmm")) {
      const auto& g = j.at("gmm");
      if (g.is_string()) {
        if (g.get<std::string>() != "reference") throw ConfigError("gmm: unknown preset " + g.get<std::string>());
        c.spec = reference_gmm(j.value("mean_seed", std::uint64_t{0}));
      } else {
        c.spec = gmm_from_json(g);
      }
    }
    if (j.contains("dataset")) c.dataset = fs::path(j.at("dataset").get<std::string>());
    c.n = j.value("n", c.n);
    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      c.schedule.kind = schedule_kind_from_string(s.value("kind", std::string("cosine")));
      c.schedule.train_steps = s.value("train_steps", c.schedule.train_steps);
      c.schedule.inference_steps = s.value("inference_steps", c.schedule.inference_steps);
      c.schedule.horizon = s.value("horizon", c.schedule.horizon);
      c.schedule.cosine_offset = s.value("cosine_offset", c.schedule.cosine_offset);
      c.schedule.ratio_cap = s.value("ratio_cap", c.schedule.ratio_cap);
    }
    if (j.contains("arch")) {
      const auto& a = j.at("arch");
      c.arch.n_blocks = a.value("n_blocks", c.arch.n_blocks);
      c.arch.hidden = a.value("hidden", c.arch.hidden);
      c.arch.time_embed_dim = a.value("time_embed_dim", c.arch.time_embed_dim);
      c.arch.embed_scale = a.value("embed_scale", c.arch.embed_scale);
      c.arch.time_activation = a.value("time_activation", c.arch.time_activation);
    }
    if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("mc")) {
      const auto& m = j.at("mc");
      c.mc.samples = m.value("samples_per_atom", c.mc.samples);
      c.mc.seed = m.value("seed", c.mc.seed);
      c.mc.common_random_numbers = m.value("common_random_numbers", c.mc.common_random_numbers);
      c.mc.antithetic = m.value("antithetic", c.mc.antithetic);
    }
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      auto& o = c.eval;
      o.draws_per_point = e.value("draws_per_point", o.draws_per_point);
      o.sample_m = e.value("sample_m", o.sample_m);
      o.trajectory_steps = e.value("trajectory_steps", o.trajectory_steps);
      o.trajectory_subset = e.value("trajectory_subset", o.trajectory_subset);
      o.grad_window = e.value("grad_window", o.grad_window);
      o.tau = e.value("tau", o.tau);
      o.delta = e.value("delta", o.delta);
      if (e.contains("topology")) {
        const auto& t = e.at("topology");
        o.topology.loss_bound = t.value("B", o.topology.loss_bound);
        o.topology.delta = t.value("delta", o.topology.delta);
        o.topology.mutual_info = t.value("I", o.topology.mutual_info);
        o.topology.r = t.value("r", o.topology.r);
        o.topology.lipschitz = t.value("L", o.topology.lipschitz);
      }
    }
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

RunConfig load_config(const fs::path& path) {
  json j;
  try {
    j = read_json(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j);
}

json RunManifest::to_json() const {
  json j = {{"config", config}, {"inputs", inputs}, {"artifacts", artifacts}, {"version", version}};
  j["content_hash"] = content_hash();
  j["timing"] = timing;
  return j;
}

std::string RunManifest::content_hash() const {
  const json j = {{"config", config}, {"inputs", inputs}, {"artifacts", artifacts}, {"version", version}};
  return git_blob_hash(j.dump());
}

void write_manifest(const fs::path& path, const RunManifest& m) { write_json(path, m.to_json()); }

namespace {

RunManifest read_manifest(const fs::path& path) {
  const json j = read_json(path);
  RunManifest m;
  m.config = j.at("config");
  m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
  m.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
  m.timing = j.value("timing", json::object());
  m.version = j.value("version", std::string(kVersion));
  return m;
}

std::string hash_file(const fs::path& path) { return git_blob_hash(read_file(path)); }

std::string csv_double(double v) { return std::isfinite(v) ? format_double(v) : ""; }

std::string csv_text(std::string s) {
  std::replace_if(s.begin(), s.end(), [](char c) { return c == ',' || c == '\n' || c == '\r' || c == '"'; }, ' ');
  return s;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double run_eta(const TrainConfig& c) { return c.kind == OptimizerKind::sgld ? c.sgld.eta : c.adam.lr; }

double run_beta(const TrainConfig& c, std::size_t n) {
  if (c.kind == OptimizerKind::sgld) return c.sgld.beta;
  return heuristic_beta(c.batch_size == 0 ? n : c.batch_size, c.adam.lr);
}

}  // namespace

std::string metrics_csv_header() {
  return "beta,eta,n,seed,status,train_loss,test_loss,gen_gap,avg_sq_grad,B,B_sqrt_n,sgld_bound,E1,pmag_sqrt_n,"
         "pmag_0.01,W2,error\n";
}

std::string metrics_csv_row(const RunMetrics& m) {
  std::ostringstream out;
  out << format_double(m.beta) << ',' << format_double(m.eta) << ',' << m.n << ',' << m.seed << ',' << m.status << ','
      << csv_double(m.train_loss) << ',' << csv_double(m.test_loss) << ',' << csv_double(m.gen_gap) << ','
      << csv_double(m.avg_sq_grad) << ',' << csv_double(m.b) << ',' << csv_double(m.b_sqrt_n) << ','
      << csv_double(m.sgld_bound) << ',' << csv_double(m.e1) << ',' << csv_double(m.pmag_sqrt_n) << ','
      << csv_double(m.pmag_small) << ',' << csv_double(m.w2) << ',' << csv_text(m.error) << '\n';
  return out.str();
}

double eval_eps_loss(const ScoreNet& net, const Dataset& data, const NoiseSchedule& schedule, std::size_t draws,
                     std::uint64_t seed) {
  data.validate();
  const Eigen::Index n = data.size();
  const Eigen::Index d = data.dim();
  const auto R = static_cast<Eigen::Index>(draws);
  constexpr Eigen::Index kChunk = 512;
  double total = 0.0;
  for (Eigen::Index start = 0; start < n; start += kChunk) {
    const Eigen::Index count = std::min(kChunk, n - start);
    EpsBatch batch;
    batch.times.resize(static_cast<std::size_t>(count * R));
    batch.inputs.resize(count * R, d);
    batch.targets.resize(count * R, d);
    for (Eigen::Index i = 0; i < count; ++i) {
      RngStream rng(seed, Purpose::eval, static_cast<std::uint64_t>(start + i));
      for (Eigen::Index r = 0; r < R; ++r) {
        const Eigen::Index row = i * R + r;
        const double t = schedule.times[rng.below(schedule.size())];
        batch.times[static_cast<std::size_t>(row)] = t;
        for (Eigen::Index k = 0; k < d; ++k) batch.targets(row, k) = rng.normal();
        batch.inputs.row(row) =
            std::exp(-t) * data.points.row(start + i) + std::sqrt(-std::expm1(-2.0 * t)) * batch.targets.row(row);
      }
    }
    total += eps_errors(net, batch).sum();
  }
  return total / static_cast<double>(n * R);
}

Dataset cmd_gen_data(const GmmSpec& spec, std::size_t n, std::uint64_t seed, const fs::path& out, Purpose purpose) {
  if (n < 1) throw ConfigError("gen-data: n must be >= 1");
  spec.validate();
  Dataset data = sample_gmm(spec, n, seed, purpose);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_cloud(out, data.points, seed);
  write_json(fs::path(out.string() + ".gmm.json"), gmm_to_json(spec));
  return data;
}

TrainedRun cmd_train(const RunConfig& config, std::uint64_t seed, const fs::path& dir) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(dir);
  TrainedRun run;
  if (config.dataset) {
    run.train_data.points = load_cloud(*config.dataset);
    run.train_data.provenance = config.dataset->string();
    save_cloud(dir / "dataset.bin", run.train_data.points, seed);
  } else {
    run.train_data = cmd_gen_data(config.spec, config.n, seed, dir / "dataset.bin", Purpose::data);
  }
  run.test_data = cmd_gen_data(config.spec, static_cast<std::size_t>(run.train_data.size()), seed, dir / "test.bin",
                               Purpose::test_data);
  run.schedule = config.schedule.train();
  const MlpArch arch = config.resolved_arch();
  TrainConfig tc = config.train;
  tc.seed = seed;
  run.result = train(make_net(arch, seed), run.train_data, run.schedule, tc);
  save_checkpoint(dir / "checkpoint.bin", {run.result.net, seed, tc.step_offset + tc.steps});
  write_file_atomic(dir / "grad_stats.csv", grad_stats_csv(run.result.stats));

  RunManifest m;
  m.config = config_to_json(config);
  m.config["seed"] = seed;
  m.config["arch"] = arch;
  m.inputs["dataset.bin"] = hash_file(dir / "dataset.bin");
  m.inputs["test.bin"] = hash_file(dir / "test.bin");
  for (const char* name : {"checkpoint.bin", "grad_stats.csv"}) m.artifacts[name] = hash_file(dir / name);
  m.timing["train_seconds"] = seconds_since(t0);
  write_manifest(dir / "manifest.json", m);
  return run;
}

RunMetrics evaluate_run(const RunConfig& config, std::uint64_t seed, const TrainedRun& run, const fs::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& ev = config.eval;
  const ScoreNet& net = run.result.net;
  const auto n = static_cast<std::size_t>(run.train_data.size());
  RunMetrics m;
  m.n = n;
  m.seed = seed;
  m.eta = run_eta(config.train);
  m.beta = run_beta(config.train, n);
  m.train_loss = eval_eps_loss(net, run.train_data, run.schedule, ev.draws_per_point, seed);
  m.test_loss = eval_eps_loss(net, run.test_data, run.schedule, ev.draws_per_point, seed);
  m.gen_gap = m.test_loss - m.train_loss;
  m.avg_sq_grad = last_window_avg(run.result.stats, ev.grad_window);
  m.b = proxy_b(n, m.eta, m.beta, m.avg_sq_grad);
  m.b_sqrt_n = proxy_b_sqrt_n(n, m.eta, m.beta, m.avg_sq_grad);
  if (config.train.kind == OptimizerKind::sgld)
    m.sgld_bound = sgld_bound_rhs(run.result.stats, config.train.sgld, ev.tau, ev.delta, n);

  std::vector<std::string> produced{"metrics.csv"};
  if (ev.trajectory_steps > 0) {
    TrainConfig cont = config.train;
    cont.seed = seed;
    cont.step_offset = config.train.step_offset + config.train.steps;
    cont.steps = ev.trajectory_steps;
    const TrajectoryRecord rec =
        record_trajectory(net, run.train_data, run.schedule, cont, {ev.trajectory_subset, seed});
    save_trajectory(dir / "trajectory.bin", rec);
    const auto scales = standard_scales(n);
    const TopologyReport topo = topology_report(pseudometric_matrix(rec), scales, ev.topology, n);
    json tj = topo;
    tj["k0"] = rec.k0;
    tj["k1"] = rec.k1;
    write_json(dir / "topology.json", tj);
    m.e1 = topo.e1;
    m.pmag_sqrt_n = topo.pmag.at(scales[0]).value;
    m.pmag_small = topo.pmag.at(scales[1]).value;
    produced.insert(produced.end(), {"trajectory.bin", "trajectory.bin.json", "topology.json"});
  }
  if (ev.sample_m > 0) {
    const PointMatrix gen =
        ei_backward_sample(gamma_score_field(net), config.schedule.inference(), ev.sample_m, net.arch.input_dim, {seed, 1});
    save_cloud(dir / "samples.bin", gen, seed);
    const Dataset fresh = sample_gmm(config.spec, ev.sample_m, seed, Purpose::reference);
    m.w2 = w2_exact(gen, fresh.points).w2;
    produced.insert(produced.end(), {"samples.bin", "samples.bin.json"});
  }
  write_file_atomic(dir / "metrics.csv", metrics_csv_header() + metrics_csv_row(m));

  const fs::path manifest_path = dir / "manifest.json";
  if (fs::exists(manifest_path)) {
    RunManifest man = read_manifest(manifest_path);
    for (const auto& name : produced) man.artifacts[name] = hash_file(dir / name);
    man.timing["eval_seconds"] = seconds_since(t0);
    write_manifest(manifest_path, man);
  }
  return m;
}

PointMatrix cmd_sample(const fs::path& checkpoint, const NoiseSchedule& schedule, std::size_t m, std::uint64_t seed,
                       const fs::path& out, int threads) {
  if (m < 1) throw ConfigError("sample: m must be >= 1");
  const Checkpoint ck = load_checkpoint(checkpoint);
  const PointMatrix x = ei_backward_sample(gamma_score_field(ck.net), schedule, m, ck.net.arch.input_dim, {seed, threads});
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_cloud(out, x, seed);
  return x;
}

DecompositionReport cmd_decompose(const std::optional<fs::path>& checkpoint, const Dataset& data, const GmmSpec& spec,
                                  const TimeMeasure& measure, const McConfig& mc, const fs::path& out) {
  ScoreField score;
  if (checkpoint) {
    score = gamma_score_field(load_checkpoint(*checkpoint).net);
  } else {
    score = [spec](double t, const PointMatrix& x) -> PointMatrix {
      return 2.0 * true_diffused_score(spec, t, x, ScoreConvention::gamma);
    };
  }
  const DecompositionReport r = decompose(score, data, spec, measure, mc);
  json j = r;
  j["score"] = checkpoint ? checkpoint->string() : std::string("oracle");
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_json(out, j);
  return r;
}

TopologyReport cmd_topology(const fs::path& trajectory, const std::vector<double>& scales, const BoundParams& params,
                            std::size_t n, const fs::path& out, int threads) {
  const TrajectoryRecord rec = load_trajectory(trajectory);
  const TopologyReport r = topology_report(pseudometric_matrix(rec, threads), scales, params, n);
  json j = r;
  j["k0"] = rec.k0;
  j["k1"] = rec.k1;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_json(out, j);
  return r;
}

json cmd_bounds(const fs::path& run_dir, const BoundsOptions& options, const fs::path& out) {
  const RunManifest man = read_manifest(run_dir / "manifest.json");
  const RunConfig config = config_from_json(man.config);
  const auto seed = man.config.at("seed").get<std::uint64_t>();
  Dataset data;
  data.points = load_cloud(run_dir / "dataset.bin");
  const auto n = static_cast<std::size_t>(data.size());
  const Checkpoint ck = load_checkpoint(run_dir / "checkpoint.bin");

  GradStats stats;
  const CsvTable grads = parse_csv(read_file(run_dir / "grad_stats.csv"));
  const std::size_t g_col = grads.column("sq_grad_norm"), l_col = grads.column("train_loss");
  for (std::size_t k = 0; k < grads.rows.size(); ++k)
    stats.push(config.train.kind == OptimizerKind::sgld ? config.train.sgld.eta_at(config.train.step_offset + k)
                                                        : config.train.adam.lr,
               std::stod(grads.rows[k][g_col]), std::stod(grads.rows[k][l_col]));

  const double eta = run_eta(config.train);
  const double beta = run_beta(config.train, n);
  const double avg = last_window_avg(stats, config.eval.grad_window);
  json j;
  j["proxy"] = {{"avg_sq_grad_last_window", avg},
                {"window", config.eval.grad_window},
                {"B", proxy_b(n, eta, beta, avg)},
                {"B_sqrt_n", proxy_b_sqrt_n(n, eta, beta, avg)},
                {"heuristic_beta", heuristic_beta(config.train.batch_size == 0 ? n : config.train.batch_size, eta)}};
  if (config.train.kind == OptimizerKind::sgld)
    j["sgld_bound"] = {{"rhs", sgld_bound_rhs(stats, config.train.sgld, config.eval.tau, config.eval.delta, n)},
                       {"tau", config.eval.tau},
                       {"delta", config.eval.delta},
                       {"expectation", "single observed trajectory"}};

  const NoiseSchedule uniform = build_uniform_schedule(options.uniform_horizon, options.uniform_steps);
  const TimeMeasure lambda = lambda_measure(uniform);
  McConfig mc = config.mc;
  mc.seed = mc.seed ^ splitmix64(seed);
  if (options.mc_samples) mc.samples = *options.mc_samples;
  j["delta_hat_bound"] = delta_hat_bound_report(data, config.spec, lambda, config.eval.delta, mc);
  j["score_error_bound"] = score_error_bound_report(data, config.spec, uniform, config.eval.delta, mc, options.w_samples);
  const Estimate eps_s = score_error(gamma_score_field(ck.net), config.spec, lambda, mc);
  RngStream kl_rng(mc.seed, Purpose::reference, 3);
  const Estimate kl = kl_mc(config.spec, options.fisher_samples, kl_rng);
  const Estimate fisher = fisher_mu_gamma(config.spec, options.fisher_samples, mc.seed);
  const double h = options.uniform_horizon / options.uniform_steps;
  j["kl_bound"] = kl_bound_report(eps_s.value, kl.value, fisher.value, options.uniform_horizon, h);
  j["kl_inputs"] = {{"eps_s", eps_s}, {"kl_mu_gamma", kl}, {"fisher_mu_gamma", fisher}, {"T", options.uniform_horizon},
                    {"h", h}};
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_json(out, j);
  return j;
}

void GridConfig::validate() const {
  if (betas.empty() || etas.empty() || ns.empty() || seeds.empty()) throw ConfigError("grid: every axis must be nonempty");
  base.validate();
}

json grid_to_json(const GridConfig& g) {
  return {{"base", config_to_json(g.base)}, {"betas", g.betas}, {"etas", g.etas}, {"ns", g.ns}, {"seeds", g.seeds}};
}

GridConfig grid_from_json(const json& j) {
  try {
    GridConfig g;
    if (j.contains("base")) g.base = config_from_json(j.at("base"));
    g.betas = j.value("betas", g.betas);
    g.etas = j.value("etas", g.etas);
    g.ns = j.value("ns", g.ns);
    g.seeds = j.value("seeds", g.seeds);
    return g;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("grid config: ") + e.what());
  }
}

std::vector<RunMetrics> cmd_grid(const GridConfig& grid, const fs::path& out, int threads) {
  grid.validate();
  struct Task {
    std::size_t bi, ei, ni, si;
  };
  std::vector<Task> tasks;
  for (std::size_t bi = 0; bi < grid.betas.size(); ++bi)
    for (std::size_t ei = 0; ei < grid.etas.size(); ++ei)
      for (std::size_t ni = 0; ni < grid.ns.size(); ++ni)
        for (std::size_t si = 0; si < grid.seeds.size(); ++si) tasks.push_back({bi, ei, ni, si});
  fs::create_directories(out);
  write_json(out / "grid.json", grid_to_json(grid));

  std::vector<RunMetrics> rows(tasks.size());
  parallel_for(tasks.size(), threads, [&](std::size_t i) {
    const Task& t = tasks[i];
    RunConfig cfg = grid.base;
    cfg.train.sgld.beta = grid.betas[t.bi];
    cfg.train.sgld.eta = grid.etas[t.ei];
    cfg.train.adam.lr = grid.etas[t.ei];
    cfg.n = grid.ns[t.ni];
    const std::uint64_t seed = grid.seeds[t.si];
    cfg.seeds = {seed};
    std::ostringstream name;
    name << "cell_b" << t.bi << "_e" << t.ei << "_n" << t.ni << "/seed_" << seed;
    const fs::path dir = out / name.str();
    RunMetrics& m = rows[i];
    m.beta = grid.betas[t.bi];
    m.eta = grid.etas[t.ei];
    m.n = cfg.n;
    m.seed = seed;
    try {
      const TrainedRun run = cmd_train(cfg, seed, dir);
      m = evaluate_run(cfg, seed, run, dir);
    } catch (const std::exception& e) {
      m.status = "failed";
      m.error = e.what();
      fs::create_directories(dir);
      write_file_atomic(dir / "error.txt", m.error + "\n");
    }
  });
  std::string csv = metrics_csv_header();
  for (const auto& m : rows) csv += metrics_csv_row(m);
  write_file_atomic(out / "aggregate.csv", csv);
  return rows;
}

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ConfigError("csv: missing column " + name);
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(l);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!l.empty() && l.back() == ',') cells.emplace_back();
    return cells;
  };
  if (!std::getline(in, line)) throw ConfigError("csv: empty input");
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.header.size()) throw ConfigError("csv: row has the wrong number of cells");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

std::vector<CorrelationRow> cmd_report(const fs::path& aggregate_csv, const fs::path& out) {
  const CsvTable t = parse_csv(read_file(aggregate_csv));
  const std::size_t beta_col = t.column("beta");
  const std::size_t gap_col = t.column("gen_gap");
  const std::size_t status_col = t.column("status");
  const std::vector<std::string> complexities{"B", "B_sqrt_n", "sgld_bound", "E1", "pmag_sqrt_n", "pmag_0.01", "W2"};
  std::vector<std::size_t> cols;
  for (const auto& c : complexities) cols.push_back(t.column(c));

  std::vector<std::string> groups;
  for (const auto& r : t.rows)
    if (std::find(groups.begin(), groups.end(), r[beta_col]) == groups.end()) groups.push_back(r[beta_col]);
  groups.push_back("all");

  std::vector<CorrelationRow> result;
  std::ostringstream scatter;
  scatter << "complexity,x,gen_gap,beta\n";
  for (std::size_t k = 0; k < complexities.size(); ++k) {
    for (const auto& g : groups) {
      std::vector<double> xs, ys;
      for (const auto& r : t.rows) {
        if (r[status_col] != "ok" || (g != "all" && r[beta_col] != g)) continue;
        if (r[cols[k]].empty() || r[gap_col].empty()) continue;
        xs.push_back(std::stod(r[cols[k]]));
        ys.push_back(std::stod(r[gap_col]));
        if (g != "all") scatter << complexities[k] << ',' << r[cols[k]] << ',' << r[gap_col] << ',' << g << '\n';
      }
      CorrelationRow row{"beta=" + g, complexities[k], xs.size()};
      if (g == "all") row.group = "all";
      try {
        const Correlations c = correlations(xs, ys);
        row.pearson = c.pearson;
        row.spearman = c.spearman;
      } catch (const UndefinedCorrelation&) {
      } catch (const InvalidArgument&) {
      }
      result.push_back(row);
    }
  }
  std::ostringstream csv;
  csv << "group,complexity,count,pearson,spearman\n";
  for (const auto& r : result)
    csv << r.group << ',' << r.complexity << ',' << r.count << ',' << csv_double(r.pearson) << ','
        << csv_double(r.spearman) << '\n';
  fs::create_directories(out);
  write_file_atomic(out / "correlations.csv", csv.str());
  write_file_atomic(out / "scatter.csv", scatter.str());
  return result;
}

}  // namespace sgmlab
