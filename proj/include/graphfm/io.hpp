#pragma once

#include <map>
#include <optional>

#include "graphfm/runner.hpp"

namespace graphfm {

// --- dataset directory format ---
// meta.json {name, num_nodes, num_edges, feat_dim, num_classes}
// edges.csv: two integer columns, one undirected edge per row, no header
// features.bin: row-major little-endian f32, N x d
// labels.csv: one integer per row
// splits.json (optional): {"train": [...], "val": [...], "test": [...]}
DatasetBundle load_dataset(const std::string& dir);
void save_dataset(const DatasetBundle& data, const std::string& dir);

// --- checkpoint format (ckpt.bin) ---
// magic "GFMC", version u32, param count u32; per parameter: name length u32,
// name bytes, rows u64, cols u64, f64 values. Little-endian throughout.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// --- experiment configuration ---

struct ExperimentConfig {
  std::string dataset_dir;
  std::string out_dir = "runs/run";
  std::vector<u64> seeds = {1, 2, 3, 4, 5};
  TrainSettings settings;
  // Generated when the dataset ships no splits.
  double node_train_ratio = 0.6;
  double node_val_ratio = 0.2;
  double node_test_ratio = 0.2;
  double lp_val_frac = 0.05;
  double lp_test_frac = 0.10;
  u64 split_seed = 0;
};

// INI-style sections: [run], [method], [method.hp], [encoder], [sampler],
// [probe], [link]. Unknown keys are rejected by name.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);
// Canonical serialization: fixed section and key order; parse -> serialize ->
// parse is a fixed point.
std::string serialize_config(const ExperimentConfig& cfg);

// FNV-1a over the canonical serialization; stable under input key order.
u64 config_hash(const ExperimentConfig& cfg);

// Command-line flag values; non-empty fields override config-file values.
struct CliOverrides {
  std::string dataset, method, strategy, criterion, seeds, out;
};
void apply_cli_overrides(ExperimentConfig& cfg, const CliOverrides& o);
std::vector<u64> parse_seed_list(const std::string& s);

struct RunManifest {
  std::string run_id;
  u64 config_hash = 0;
  std::string tool_version;
  std::string started_at;
  std::string finished_at;
  i64 num_nodes = 0, num_edges = 0, feat_dim = 0, num_classes = 0;
};
std::string manifest_to_json(const RunManifest& m);

// --- results emission ---

struct ResultsRow {
  std::string dataset, method, strategy, criterion;
  u64 seed = 0;
  std::optional<double> acc, auc, ap, nmi, ari;
  std::optional<double> act_mem_mb, throughput_it_s;
  std::optional<i64> best_epoch;
};

std::string results_csv(const std::vector<ResultsRow>& rows);
std::string results_json(const std::vector<ResultsRow>& rows);
// Mean +/- std per (dataset, method, strategy), "82.00±2.00" style.
std::string results_summary(const std::vector<ResultsRow>& rows);
void emit_results(const std::vector<ResultsRow>& rows, const std::string& out_dir);

// One grouped bar chart per (dataset, metric): mean bars + std whiskers,
// self-contained SVG.
void emit_plots(const std::vector<ResultsRow>& rows, const std::string& out_dir);

// Ensure node/LP splits exist, generating defaults where absent.
void ensure_splits(DatasetBundle& data, const ExperimentConfig& cfg);

ResultsRow row_from_result(const ExperimentConfig& cfg, const std::string& dataset_name,
                           const TrainResult& r);

}  // namespace graphfm
