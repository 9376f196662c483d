#pragma once

#include <map>

#include "graphfm/eval.hpp"
#include "graphfm/ssl.hpp"

namespace graphfm {

enum class Criterion { accuracy, auc, nmi };

const char* criterion_name(Criterion c);
Criterion criterion_from_name(const std::string& name);

struct TrainSettings {
  MethodConfig method;
  SamplerConfig sampler;
  i64 num_steps = 200;
  i64 eval_every = 10;
  i64 patience = 10;  // counted in evaluations
  Criterion criterion = Criterion::accuracy;
  // Probe settings used while monitoring the criterion (kept light) and for
  // the final test-time evaluation.
  ProbeConfig monitor_probe;
  LinkDecoderConfig monitor_link;
  ProbeConfig final_probe;
  LinkDecoderConfig final_link;

  TrainSettings() {
    monitor_probe.num_layers = 0;
    monitor_probe.epochs = 100;
    monitor_probe.patience = 10;
    monitor_link.num_layers = 1;
    monitor_link.channels = 64;
    monitor_link.epochs = 60;
    monitor_link.patience = 10;
  }
};

struct Checkpoint {
  std::vector<std::pair<std::string, Matrix>> params;
};

struct TrainResult {
  u64 seed = 0;
  double best_criterion_value = 0.0;
  i64 best_step = 0;
  i64 steps_run = 0;
  double final_loss = 0.0;
  Checkpoint best_checkpoint;
  // Test metrics from the best checkpoint, all three tasks.
  double test_accuracy = 0.0;
  double test_auc = 0.0;
  double test_ap = 0.0;
  double test_nmi = 0.0;
  double test_ari = 0.0;
  // Efficiency accounting.
  double activation_mb = 0.0;   // peak analytic activation memory
  double throughput = 0.0;      // optimizer steps per second, eval excluded
};

// Strict-improvement early stopping; patience counts evaluations.
struct EarlyStopState {
  double best = 0.0;
  i64 best_index = -1;
  i64 evals_since_best = 0;
};
// Returns true when training should stop.
bool early_stop_update(EarlyStopState& st, double value, i64 eval_index, i64 patience);

TrainResult run_training(const DatasetBundle& data, const TrainSettings& settings, u64 seed);

// Restore a checkpoint into a freshly constructed method instance.
std::unique_ptr<SslMethod> method_from_checkpoint(const MethodConfig& cfg,
                                                  const DatasetBundle& data,
                                                  const Checkpoint& ckpt);

struct AggregateStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1); 0 when n = 1
};
AggregateStats aggregate_seeds(const std::vector<double>& values);

struct TrialRecord {
  std::map<std::string, double> overrides;
  std::vector<TrainResult> per_seed;
  AggregateStats criterion_stats;
};

struct SearchResult {
  std::vector<TrialRecord> trials;
  i64 best_trial = -1;
};

// Seeded random hyperparameter search; numeric ranges are sampled
// log-uniformly when the lower bound is positive and the span covers at
// least two orders of magnitude. Trials run in parallel when
// GRAPHFM_THREADS > 1.
SearchResult random_search(const DatasetBundle& data, const TrainSettings& base, i64 budget,
                           u64 search_seed, const std::vector<u64>& seeds);

// Draw one override set from the method + general spaces.
std::map<std::string, double> sample_overrides(MethodId id, Rng& rng);
void apply_overrides(TrainSettings& s, const std::map<std::string, double>& overrides);

struct EfficiencyProfile {
  double activation_mb = 0.0;
  double throughput = 0.0;
  i64 steps = 0;
};
EfficiencyProfile profile_efficiency(const DatasetBundle& data, const TrainSettings& settings,
                                     u64 seed, i64 steps);

// Number of worker threads from GRAPHFM_THREADS (>= 1).
i64 thread_budget();

}  // namespace graphfm
