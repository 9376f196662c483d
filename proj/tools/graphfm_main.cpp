#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "graphfm/io.hpp"

namespace fs = std::filesystem;
using namespace graphfm;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct TrainFlags {
  std::string dataset, method, strategy, criterion, seeds, config, out;
};

ExperimentConfig resolve_config(const TrainFlags& f) {
  ExperimentConfig cfg;
  if (!f.config.empty()) cfg = parse_config_file(f.config);
  CliOverrides o;
  o.dataset = f.dataset;
  o.method = f.method;
  o.strategy = f.strategy;
  o.criterion = f.criterion;
  o.seeds = f.seeds;
  o.out = f.out;
  apply_cli_overrides(cfg, o);
  if (cfg.dataset_dir.empty()) throw ConfigError("no dataset given (flag --dataset or config key)");
  return cfg;
}

RunManifest make_manifest(const ExperimentConfig& cfg, const DatasetBundle& data) {
  RunManifest m;
  m.config_hash = config_hash(cfg);
  char id[32];
  std::snprintf(id, sizeof(id), "run-%016llx", static_cast<unsigned long long>(m.config_hash));
  m.run_id = id;
  m.tool_version = kVersion;
  m.started_at = now_iso();
  m.num_nodes = data.graph.num_nodes;
  m.num_edges = data.graph.num_edges;
  m.feat_dim = data.features.cols;
  m.num_classes = data.num_classes;
  return m;
}

void write_text(const std::string& path, const std::string& content) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  out << content;
}

int cmd_gen_data(i64 blocks, i64 nodes_per_block, double p_in, double p_out, i64 feat_dim,
                 u64 seed, const std::string& out) {
  SbmConfig cfg;
  cfg.blocks = blocks;
  cfg.nodes_per_block = nodes_per_block;
  cfg.p_in = p_in;
  cfg.p_out = p_out;
  cfg.feat_dim = feat_dim;
  cfg.seed = seed;
  DatasetBundle data = sbm_generate(cfg);
  save_dataset(data, out);
  std::cout << "wrote " << out << ": " << data.graph.num_nodes << " nodes, "
            << data.graph.num_edges << " edges\n";
  return 0;
}

int cmd_train(const TrainFlags& flags) {
  ExperimentConfig cfg = resolve_config(flags);
  DatasetBundle data = load_dataset(cfg.dataset_dir);
  ensure_splits(data, cfg);
  RunManifest manifest = make_manifest(cfg, data);

  std::vector<TrainResult> results(cfg.seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cfg.seeds.size()) return;
      results[i] = run_training(data, cfg.settings, cfg.seeds[i]);
    }
  };
  const i64 workers = std::min<i64>(thread_budget(), i64(cfg.seeds.size()));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (i64 w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::vector<ResultsRow> rows;
  for (const auto& r : results) rows.push_back(row_from_result(cfg, data.name, r));
  fs::create_directories(cfg.out_dir);
  emit_results(rows, cfg.out_dir);
  emit_plots(rows, (fs::path(cfg.out_dir) / "plots").string());
  write_text((fs::path(cfg.out_dir) / "config.ini").string(), serialize_config(cfg));
  for (std::size_t i = 0; i < results.size(); ++i)
    save_checkpoint(results[i].best_checkpoint,
                    (fs::path(cfg.out_dir) / ("ckpt_seed" + std::to_string(cfg.seeds[i]) + ".bin"))
                        .string());
  manifest.finished_at = now_iso();
  write_text((fs::path(cfg.out_dir) / "manifest.json").string(), manifest_to_json(manifest));
  std::cout << results_summary(rows);
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& dataset, const std::string& tasks,
             const std::string& config_path, const std::string& out) {
  std::string cfg_file = config_path;
  if (cfg_file.empty()) {
    const fs::path sibling = fs::path(ckpt_path).parent_path() / "config.ini";
    if (!fs::exists(sibling))
      throw ConfigError("no config given and " + sibling.string() + " not found");
    cfg_file = sibling.string();
  }
  ExperimentConfig cfg = parse_config_file(cfg_file);
  DatasetBundle data = load_dataset(dataset);
  ensure_splits(data, cfg);
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  auto method = method_from_checkpoint(cfg.settings.method, data, ckpt);
  NormalizedAdjacency adj = normalize_adjacency(data.graph);
  const Matrix h = method->embed(data, adj);

  ResultsRow row;
  row.dataset = data.name;
  row.method = method_name(cfg.settings.method.id);
  row.strategy = strategy_name(cfg.settings.sampler.strategy);
  row.criterion = criterion_name(cfg.settings.criterion);
  row.seed = 0;
  std::istringstream ts(tasks);
  std::string task;
  bool any = false;
  while (std::getline(ts, task, ',')) {
    if (task == "nc") {
      ProbeConfig pc = cfg.settings.final_probe;
      row.acc = eval_node_classification(h, data, pc).accuracy;
      any = true;
    } else if (task == "lp") {
      LinkDecoderConfig lc = cfg.settings.final_link;
      const LinkPredResult lp = eval_link_prediction(h, data, lc);
      row.auc = lp.auc;
      row.ap = lp.ap;
      any = true;
    } else if (task == "clu") {
      const ClusteringResult cl = eval_node_clustering(h, data, 0);
      row.nmi = cl.nmi;
      row.ari = cl.ari;
      any = true;
    } else if (!task.empty()) {
      throw ConfigError("unknown task '" + task + "' (expected nc, lp, clu)");
    }
  }
  if (!any) throw ConfigError("no tasks requested");
  emit_results({row}, out);
  std::cout << results_summary({row});
  return 0;
}

int cmd_sweep(const TrainFlags& flags, i64 budget, u64 search_seed) {
  ExperimentConfig cfg = resolve_config(flags);
  DatasetBundle data = load_dataset(cfg.dataset_dir);
  ensure_splits(data, cfg);
  SearchResult sr = random_search(data, cfg.settings, budget, search_seed, cfg.seeds);

  std::vector<ResultsRow> rows;
  for (std::size_t t = 0; t < sr.trials.size(); ++t)
    for (const auto& r : sr.trials[t].per_seed) {
      ResultsRow row = row_from_result(cfg, data.name, r);
      row.dataset = data.name + "#trial" + std::to_string(t);
      rows.push_back(row);
    }
  fs::create_directories(cfg.out_dir);
  emit_results(rows, cfg.out_dir);
  const TrialRecord& best = sr.trials[std::size_t(sr.best_trial)];
  ExperimentConfig best_cfg = cfg;
  apply_overrides(best_cfg.settings, best.overrides);
  write_text((fs::path(cfg.out_dir) / "best_config.ini").string(), serialize_config(best_cfg));
  std::printf("best trial %lld: criterion %.4f±%.4f\n",
              static_cast<long long>(sr.best_trial), best.criterion_stats.mean,
              best.criterion_stats.stddev);
  return 0;
}

int cmd_bench(const TrainFlags& flags, i64 steps, bool profile) {
  ExperimentConfig cfg = resolve_config(flags);
  DatasetBundle data = load_dataset(cfg.dataset_dir);
  ensure_splits(data, cfg);
  (void)profile;
  EfficiencyProfile prof = profile_efficiency(data, cfg.settings, cfg.seeds.front(), steps);
  std::printf("strategy=%s act_mem_mb=%.3f throughput_it_s=%.3f steps=%lld\n",
              strategy_name(cfg.settings.sampler.strategy), prof.activation_mb, prof.throughput,
              static_cast<long long>(prof.steps));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph self-supervised learning benchmark"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a stochastic block model dataset");
  i64 blocks = 2, nodes_per_block = 500, feat_dim = 16;
  double p_in = 0.1, p_out = 0.005;
  u64 gen_seed = 0;
  std::string gen_out;
  gen->add_option("--blocks", blocks);
  gen->add_option("--nodes-per-block", nodes_per_block);
  gen->add_option("--p-in", p_in);
  gen->add_option("--p-out", p_out);
  gen->add_option("--feat-dim", feat_dim);
  gen->add_option("--seed", gen_seed);
  gen->add_option("--out", gen_out)->required();

  // train
  auto* train = app.add_subcommand("train", "pre-train an SSL method and evaluate downstream");
  TrainFlags tf;
  train->add_option("--dataset", tf.dataset);
  train->add_option("--method", tf.method);
  train->add_option("--strategy", tf.strategy);
  train->add_option("--criterion", tf.criterion);
  train->add_option("--seeds", tf.seeds);
  train->add_option("--config", tf.config);
  train->add_option("--out", tf.out);

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on downstream tasks");
  std::string ev_ckpt, ev_dataset, ev_tasks = "nc,lp,clu", ev_config, ev_out = "eval_out";
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--dataset", ev_dataset)->required();
  ev->add_option("--tasks", ev_tasks);
  ev->add_option("--config", ev_config);
  ev->add_option("--out", ev_out);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "random hyperparameter search");
  TrainFlags sf;
  i64 budget = 30;
  u64 search_seed = 0;
  sweep->add_option("--budget", budget);
  sweep->add_option("--seed", search_seed);
  sweep->add_option("--dataset", sf.dataset);
  sweep->add_option("--method", sf.method);
  sweep->add_option("--strategy", sf.strategy);
  sweep->add_option("--criterion", sf.criterion);
  sweep->add_option("--seeds", sf.seeds);
  sweep->add_option("--config", sf.config);
  sweep->add_option("--out", sf.out);

  // bench
  auto* bench = app.add_subcommand("bench", "efficiency-only run");
  TrainFlags bf;
  i64 bench_steps = 20;
  bool profile = false;
  bench->add_option("--dataset", bf.dataset);
  bench->add_option("--method", bf.method);
  bench->add_option("--strategy", bf.strategy);
  bench->add_option("--config", bf.config);
  bench->add_option("--steps", bench_steps);
  bench->add_flag("--profile", profile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen_data(blocks, nodes_per_block, p_in, p_out, feat_dim, gen_seed, gen_out);
    if (train->parsed()) return cmd_train(tf);
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_dataset, ev_tasks, ev_config, ev_out);
    if (sweep->parsed()) return cmd_sweep(sf, budget, search_seed);
    if (bench->parsed()) return cmd_bench(bf, bench_steps, profile);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
