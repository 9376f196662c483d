#include "graphfm/runner.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "graphfm/search_space.hpp"

namespace graphfm {

const char* criterion_name(Criterion c) {
  switch (c) {
    case Criterion::accuracy: return "accuracy";
    case Criterion::auc: return "auc";
    case Criterion::nmi: return "nmi";
  }
  return "?";
}

Criterion criterion_from_name(const std::string& name) {
  if (name == "accuracy") return Criterion::accuracy;
  if (name == "auc") return Criterion::auc;
  if (name == "nmi") return Criterion::nmi;
  throw ConfigError("unknown criterion '" + name + "' (expected accuracy, auc, nmi)");
}

bool early_stop_update(EarlyStopState& st, double value, i64 eval_index, i64 patience) {
  if (st.best_index < 0 || value > st.best) {
    st.best = value;
    st.best_index = eval_index;
    st.evals_since_best = 0;
    return false;
  }
  return ++st.evals_since_best >= patience;
}

i64 thread_budget() {
  const char* env = std::getenv("GRAPHFM_THREADS");
  if (env == nullptr) return 1;
  const long v = std::strtol(env, nullptr, 10);
  if (v < 1) throw ConfigError("GRAPHFM_THREADS must be a positive integer");
  return i64(v);
}

AggregateStats aggregate_seeds(const std::vector<double>& values) {
  if (values.empty()) throw DataError("aggregate_seeds: no values");
  AggregateStats st;
  for (double v : values) st.mean += v;
  st.mean /= double(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - st.mean) * (v - st.mean);
    st.stddev = std::sqrt(ss / double(values.size() - 1));
  }
  return st;
}

namespace {

double criterion_value(Criterion c, const Matrix& h, const DatasetBundle& data,
                       const TrainSettings& s, u64 seed) {
  switch (c) {
    case Criterion::accuracy: {
      ProbeConfig pc = s.monitor_probe;
      pc.seed = seed;
      return eval_node_classification(h, data, pc).val_accuracy;
    }
    case Criterion::auc: {
      LinkDecoderConfig lc = s.monitor_link;
      lc.seed = seed;
      return eval_link_prediction(h, data, lc).val_auc;
    }
    case Criterion::nmi:
      return eval_node_clustering(h, data, seed).nmi;
  }
  return 0.0;
}

// Per-step batch plans for the three strategies. The partition is built once
// per training run.
struct BatchSource {
  Strategy strategy = Strategy::full;
  const SparseGraph* g = nullptr;
  const NormalizedAdjacency* adj = nullptr;
  SamplerConfig cfg;
  Partition partition;
  i64 num_layers = 2;
  Rng rng{0};

  void init(const SparseGraph& graph, const NormalizedAdjacency& a, const SamplerConfig& sc,
            i64 layers, u64 seed) {
    g = &graph;
    adj = &a;
    cfg = sc;
    strategy = sc.strategy;
    num_layers = layers;
    rng = Rng(seed);
    if (strategy == Strategy::subgraph) {
      const i64 k = std::min(cfg.num_clusters, graph.num_nodes);
      partition = partition_graph(graph, std::max<i64>(1, k), cfg.seed);
    }
  }

  // Returns nullptr for full batch; otherwise fills plan.
  const BatchPlan* next(BatchPlan& plan) {
    switch (strategy) {
      case Strategy::full:
        return nullptr;
      case Strategy::node: {
        const i64 b = std::min(cfg.batch_size, g->num_nodes);
        std::vector<i64> all(std::size_t(g->num_nodes), 0);
        for (i64 v = 0; v < g->num_nodes; ++v) all[std::size_t(v)] = v;
        for (i64 i = 0; i < b; ++i) {
          const i64 j = i + rng.uniform_int(g->num_nodes - i);
          std::swap(all[std::size_t(i)], all[std::size_t(j)]);
        }
        std::vector<i64> seeds(all.begin(), all.begin() + b);
        std::vector<i64> fanouts = cfg.fanouts;
        if (fanouts.empty()) fanouts.assign(std::size_t(num_layers), 10);
        if (i64(fanouts.size()) != num_layers)
          throw ConfigError("sampler: fanouts length must equal encoder layers");
        plan = node_sampling_plan(*g, *adj, seeds, fanouts, rng.next_u64());
        return &plan;
      }
      case Strategy::subgraph: {
        const i64 nc = partition.num_clusters;
        const i64 pick = std::min(cfg.clusters_per_batch, nc);
        std::vector<i64> ids(std::size_t(nc), 0);
        for (i64 i = 0; i < nc; ++i) ids[std::size_t(i)] = i;
        for (i64 i = 0; i < pick; ++i) {
          const i64 j = i + rng.uniform_int(nc - i);
          std::swap(ids[std::size_t(i)], ids[std::size_t(j)]);
        }
        std::vector<i64> chosen(ids.begin(), ids.begin() + pick);
        plan = subgraph_batch(*g, *adj, partition, chosen, num_layers);
        return &plan;
      }
    }
    return nullptr;
  }
};

Checkpoint checkpoint_of(SslMethod& method) {
  Checkpoint ck;
  for (const auto& p : method.all_parameters()) ck.params.emplace_back(p.name(), p.value());
  return ck;
}

void restore_checkpoint(SslMethod& method, const Checkpoint& ck) {
  auto params = method.all_parameters();
  if (params.size() != ck.params.size())
    throw DataError("checkpoint: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name() != ck.params[i].first)
      throw DataError("checkpoint: unexpected parameter '" + ck.params[i].first + "'");
    if (!params[i].value().same_shape(ck.params[i].second))
      throw DataError("checkpoint: shape mismatch for '" + ck.params[i].first + "'");
    params[i].mutable_value() = ck.params[i].second;
  }
}

}  // namespace

TrainResult run_training(const DatasetBundle& data, const TrainSettings& settings, u64 seed) {
  TrainResult res;
  res.seed = seed;
  NormalizedAdjacency adj = normalize_adjacency(data.graph);
  auto method = SslMethod::create(settings.method, data, seed);
  const i64 k = method->config().encoder.num_layers;

  BatchSource batches;
  batches.init(data.graph, adj, settings.sampler, k, splitmix64(seed ^ 0x5b8c5d1fULL));

  EarlyStopState stop;
  res.best_checkpoint = checkpoint_of(*method);
  res.best_step = 0;
  std::size_t peak_act = 0;
  double train_seconds = 0.0;
  i64 eval_index = 0;
  for (i64 step = 1; step <= settings.num_steps; ++step) {
    BatchPlan plan;
    const BatchPlan* p = batches.next(plan);
    TrainContext ctx;
    ctx.data = &data;
    ctx.adj = &adj;
    ctx.plan = p;
    const auto t0 = std::chrono::steady_clock::now();
    res.final_loss = method->training_step(ctx);
    const auto t1 = std::chrono::steady_clock::now();
    train_seconds += std::chrono::duration<double>(t1 - t0).count();
    peak_act = std::max(peak_act, method->last_activation_elements());
    res.steps_run = step;

    if (step % settings.eval_every == 0 || step == settings.num_steps) {
      const Matrix h = method->embed(data, adj);
      const double value =
          criterion_value(settings.criterion, h, data, settings, splitmix64(seed));
      const bool had_best = stop.best_index >= 0;
      const double prev_best = stop.best;
      const bool should_stop = early_stop_update(stop, value, eval_index, settings.patience);
      if (!had_best || value > prev_best) {
        res.best_checkpoint = checkpoint_of(*method);
        res.best_step = step;
      }
      ++eval_index;
      if (should_stop) break;
    }
  }
  res.best_criterion_value = stop.best;
  res.activation_mb = double(peak_act) * double(scalar_bytes()) / double(1 << 20);
  res.throughput = train_seconds > 0 ? double(res.steps_run) / train_seconds : 0.0;

  restore_checkpoint(*method, res.best_checkpoint);
  const Matrix h = method->embed(data, adj);
  {
    ProbeConfig pc = settings.final_probe;
    pc.seed = splitmix64(seed ^ 0xabcdULL);
    const NodeClsResult nc = eval_node_classification(h, data, pc);
    res.test_accuracy = nc.accuracy;
  }
  {
    LinkDecoderConfig lc = settings.final_link;
    lc.seed = splitmix64(seed ^ 0x1234ULL);
    const LinkPredResult lp = eval_link_prediction(h, data, lc);
    res.test_auc = lp.auc;
    res.test_ap = lp.ap;
  }
  {
    const ClusteringResult cl = eval_node_clustering(h, data, splitmix64(seed ^ 0x77ULL));
    res.test_nmi = cl.nmi;
    res.test_ari = cl.ari;
  }
  return res;
}

std::unique_ptr<SslMethod> method_from_checkpoint(const MethodConfig& cfg,
                                                  const DatasetBundle& data,
                                                  const Checkpoint& ckpt) {
  auto method = SslMethod::create(cfg, data, 0);
  restore_checkpoint(*method, ckpt);
  return method;
}

std::map<std::string, double> sample_overrides(MethodId id, Rng& rng) {
  std::map<std::string, double> out;
  auto draw = [&](const ParamSpec& p) {
    switch (p.kind) {
      case ParamSpec::Kind::choice:
        return p.choices[std::size_t(rng.uniform_int(i64(p.choices.size())))];
      case ParamSpec::Kind::int_range:
        return double(i64(p.lo) + rng.uniform_int(i64(p.hi) - i64(p.lo) + 1));
      case ParamSpec::Kind::lin_range:
      case ParamSpec::Kind::log_range:
        // Log-uniform when the range is positive and spans >= 2 decades.
        if (p.lo > 0 && p.hi / p.lo >= 100.0) {
          const double lg = std::log(p.lo) + rng.uniform() * (std::log(p.hi) - std::log(p.lo));
          return std::exp(lg);
        }
        return p.lo + rng.uniform() * (p.hi - p.lo);
    }
    return p.lo;
  };
  for (const auto& p : general_search_space()) out[p.name] = draw(p);
  for (const auto& p : method_search_space(id)) out[p.name] = draw(p);
  return out;
}

void apply_overrides(TrainSettings& s, const std::map<std::string, double>& overrides) {
  for (const auto& [key, value] : overrides) {
    if (key == "lr") {
      s.method.lr = value;
    } else if (key == "weight_decay") {
      s.method.weight_decay = value;
    } else if (key == "batch_size") {
      s.sampler.batch_size = i64(value);
    } else if (key == "decode_channels_lp") {
      s.final_link.channels = i64(value);
    } else if (key == "decode_layers_lp") {
      s.final_link.num_layers = i64(value);
    } else {
      s.method.hp[key] = value;
      if (s.method.id == MethodId::gbt && key == "lr_base") s.method.lr = value;
    }
  }
  // Width overrides replace the default encoder dims.
  s.method.encoder.hidden_dims.clear();
}

SearchResult random_search(const DatasetBundle& data, const TrainSettings& base, i64 budget,
                           u64 search_seed, const std::vector<u64>& seeds) {
  if (budget < 1) throw ConfigError("random_search: budget must be >= 1");
  if (seeds.empty()) throw ConfigError("random_search: need at least one seed");
  SearchResult out;
  out.trials.resize(std::size_t(budget));
  for (i64 t = 0; t < budget; ++t) {
    Rng rng(splitmix64(search_seed ^ (0x9e3779b97f4a7c15ULL * u64(t + 1))));
    out.trials[std::size_t(t)].overrides = sample_overrides(base.method.id, rng);
  }

  std::atomic<i64> next{0};
  auto worker = [&]() {
    for (;;) {
      const i64 t = next.fetch_add(1);
      if (t >= budget) return;
      TrialRecord& rec = out.trials[std::size_t(t)];
      TrainSettings s = base;
      apply_overrides(s, rec.overrides);
      std::vector<double> values;
      for (u64 seed : seeds) {
        rec.per_seed.push_back(run_training(data, s, seed));
        values.push_back(rec.per_seed.back().best_criterion_value);
      }
      rec.criterion_stats = aggregate_seeds(values);
    }
  };
  const i64 workers = std::min<i64>(thread_budget(), budget);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (i64 w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (i64 t = 0; t < budget; ++t) {
    if (out.best_trial < 0 ||
        out.trials[std::size_t(t)].criterion_stats.mean >
            out.trials[std::size_t(out.best_trial)].criterion_stats.mean)
      out.best_trial = t;
  }
  return out;
}

EfficiencyProfile profile_efficiency(const DatasetBundle& data, const TrainSettings& settings,
                                     u64 seed, i64 steps) {
  if (steps < 1) throw ConfigError("profile_efficiency: steps must be >= 1");
  EfficiencyProfile prof;
  NormalizedAdjacency adj = normalize_adjacency(data.graph);
  auto method = SslMethod::create(settings.method, data, seed);
  const i64 k = method->config().encoder.num_layers;
  BatchSource batches;
  batches.init(data.graph, adj, settings.sampler, k, splitmix64(seed ^ 0x5b8c5d1fULL));
  std::size_t peak = 0;
  double seconds = 0.0;
  for (i64 step = 0; step < steps; ++step) {
    BatchPlan plan;
    const BatchPlan* p = batches.next(plan);
    TrainContext ctx;
    ctx.data = &data;
    ctx.adj = &adj;
    ctx.plan = p;
    const auto t0 = std::chrono::steady_clock::now();
    method->training_step(ctx);
    const auto t1 = std::chrono::steady_clock::now();
    seconds += std::chrono::duration<double>(t1 - t0).count();
    peak = std::max(peak, method->last_activation_elements());
  }
  prof.steps = steps;
  prof.activation_mb = double(peak) * double(scalar_bytes()) / double(1 << 20);
  prof.throughput = seconds > 0 ? double(steps) / seconds : 0.0;
  return prof;
}

}  // namespace graphfm
