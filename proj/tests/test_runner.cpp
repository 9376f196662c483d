#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include "graphfm/runner.hpp"
#include "graphfm/search_space.hpp"

using namespace graphfm;

namespace {

DatasetBundle make_sbm(i64 npb, u64 seed) {
  SbmConfig sc;
  sc.blocks = 2;
  sc.nodes_per_block = npb;
  sc.p_in = 0.15;
  sc.p_out = 0.02;
  sc.feat_dim = 8;
  sc.feat_noise = 1.0;
  sc.seed = seed;
  DatasetBundle data = sbm_generate(sc);
  split_nodes(data.splits, data.graph.num_nodes, 0.6, 0.2, 0.2, seed + 1);
  split_edges_lp(data.splits, data.graph, 0.05, 0.10, seed + 2);
  return data;
}

TrainSettings light_settings(MethodId id, Strategy strat) {
  TrainSettings s;
  s.method = default_method_config(id);
  s.method.encoder.hidden_dims = {16, 16};
  s.method.encoder.num_layers = 2;
  s.sampler.strategy = strat;
  s.sampler.batch_size = 32;
  s.sampler.fanouts = {5, 5};
  s.sampler.num_clusters = 4;
  s.num_steps = 12;
  s.eval_every = 4;
  s.patience = 10;
  s.monitor_probe.epochs = 30;
  s.monitor_link.epochs = 20;
  s.final_probe.epochs = 40;
  s.final_probe.patience = 10;
  s.final_link.epochs = 25;
  s.final_link.channels = 16;
  s.final_link.num_layers = 1;
  return s;
}

}  // namespace

TEST_CASE("criterion names round trip; unknown name rejected with the valid set") {
  for (Criterion c : {Criterion::accuracy, Criterion::auc, Criterion::nmi})
    CHECK(criterion_from_name(criterion_name(c)) == c);
  CHECK_THROWS_WITH_AS(criterion_from_name("f1"),
                       doctest::Contains("accuracy, auc, nmi"), ConfigError);
}

TEST_CASE("early stopping keeps the best of [0.5, 0.6, 0.55, 0.58] with patience 2") {
  EarlyStopState st;
  CHECK_FALSE(early_stop_update(st, 0.5, 0, 2));
  CHECK_FALSE(early_stop_update(st, 0.6, 1, 2));
  CHECK_FALSE(early_stop_update(st, 0.55, 2, 2));
  CHECK(early_stop_update(st, 0.58, 3, 2));
  CHECK(st.best == doctest::Approx(0.6));
  CHECK(st.best_index == 1);
}

TEST_CASE("early stopping on a flat metric stops after patience non-improvements") {
  EarlyStopState st;
  CHECK_FALSE(early_stop_update(st, 0.5, 0, 3));
  CHECK_FALSE(early_stop_update(st, 0.5, 1, 3));
  CHECK_FALSE(early_stop_update(st, 0.5, 2, 3));
  CHECK(early_stop_update(st, 0.5, 3, 3));
  CHECK(st.best_index == 0);
}

TEST_CASE("equal values do not count as improvement") {
  EarlyStopState st;
  early_stop_update(st, 0.7, 0, 5);
  early_stop_update(st, 0.7, 1, 5);
  CHECK(st.best_index == 0);
  CHECK(st.evals_since_best == 1);
}

TEST_CASE("seed aggregation uses sample standard deviation") {
  AggregateStats st = aggregate_seeds({80.0, 82.0, 84.0});
  CHECK(st.mean == doctest::Approx(82.0).epsilon(1e-12));
  CHECK(st.stddev == doctest::Approx(2.0).epsilon(1e-12));
  AggregateStats one = aggregate_seeds({5.0});
  CHECK(one.mean == doctest::Approx(5.0));
  CHECK(one.stddev == 0.0);
}

TEST_CASE("sampled overrides stay inside their declared ranges") {
  Rng rng(17);
  const auto& general = general_search_space();
  for (int draw = 0; draw < 1000; ++draw) {
    auto ov = sample_overrides(MethodId::gca, rng);
    for (const auto& [key, value] : ov) {
      const ParamSpec* spec = find_param(general, key);
      if (spec == nullptr) spec = find_param(method_search_space(MethodId::gca), key);
      REQUIRE(spec != nullptr);
      CHECK(spec->contains(value));
    }
  }
}

TEST_CASE("lr is drawn log-uniformly over [1e-6, 1e-2]") {
  Rng rng(18);
  i64 below = 0;
  const i64 draws = 1000;
  for (i64 d = 0; d < draws; ++d) {
    auto ov = sample_overrides(MethodId::gbt, rng);
    auto it = ov.find("lr_base");
    if (it == ov.end()) it = ov.find("lr");
    REQUIRE(it != ov.end());
    if (it->second < 1e-5) ++below;
  }
  // One of four decades: expect ~250 of 1000, 3 sigma ~ 41.
  CHECK(below > 250 - 42);
  CHECK(below < 250 + 42);
}

TEST_CASE("overrides land on the right settings fields") {
  TrainSettings s = light_settings(MethodId::gca, Strategy::full);
  apply_overrides(s, {{"lr", 3e-4},
                      {"weight_decay", 1e-4},
                      {"batch_size", 512},
                      {"decode_channels_lp", 128},
                      {"decode_layers_lp", 3},
                      {"tau", 0.7},
                      {"num_hidden", 128}});
  CHECK(s.method.lr == doctest::Approx(3e-4));
  CHECK(s.method.weight_decay == doctest::Approx(1e-4));
  CHECK(s.sampler.batch_size == 512);
  CHECK(s.final_link.channels == 128);
  CHECK(s.final_link.num_layers == 3);
  CHECK(s.method.hp_get("tau", 0.0) == doctest::Approx(0.7));
  CHECK(s.method.hp_get("num_hidden", 0.0) == doctest::Approx(128.0));
  // Width overrides invalidate preset encoder dims so finalize refills them.
  CHECK(s.method.encoder.hidden_dims.empty());
}

TEST_CASE("thread budget reads GRAPHFM_THREADS and rejects non-positive values") {
  unsetenv("GRAPHFM_THREADS");
  CHECK(thread_budget() == 1);
  setenv("GRAPHFM_THREADS", "4", 1);
  CHECK(thread_budget() == 4);
  setenv("GRAPHFM_THREADS", "0", 1);
  CHECK_THROWS_AS(thread_budget(), ConfigError);
  unsetenv("GRAPHFM_THREADS");
}

TEST_CASE("training is reproducible bit for bit under a fixed seed") {
  DatasetBundle data = make_sbm(40, 21);
  TrainSettings s = light_settings(MethodId::gbt, Strategy::full);
  TrainResult a = run_training(data, s, 77);
  TrainResult b = run_training(data, s, 77);
  CHECK(a.final_loss == b.final_loss);
  CHECK(a.best_criterion_value == b.best_criterion_value);
  CHECK(a.best_step == b.best_step);
  CHECK(a.test_accuracy == b.test_accuracy);
  CHECK(a.test_auc == b.test_auc);
  CHECK(a.test_ap == b.test_ap);
  CHECK(a.test_nmi == b.test_nmi);
  CHECK(a.test_ari == b.test_ari);
  CHECK(a.activation_mb == b.activation_mb);
  REQUIRE(a.best_checkpoint.params.size() == b.best_checkpoint.params.size());
  for (std::size_t i = 0; i < a.best_checkpoint.params.size(); ++i) {
    CHECK(a.best_checkpoint.params[i].first == b.best_checkpoint.params[i].first);
    CHECK(a.best_checkpoint.params[i].second.data == b.best_checkpoint.params[i].second.data);
  }
  TrainResult c = run_training(data, s, 78);
  CHECK(a.final_loss != c.final_loss);
}

TEST_CASE("restoring the best checkpoint reproduces the recorded test metrics") {
  DatasetBundle data = make_sbm(40, 22);
  TrainSettings s = light_settings(MethodId::cca_ssg, Strategy::full);
  TrainResult r = run_training(data, s, 5);
  auto method = method_from_checkpoint(s.method, data, r.best_checkpoint);
  NormalizedAdjacency adj = normalize_adjacency(data.graph);
  const Matrix h = method->embed(data, adj);
  ProbeConfig pc = s.final_probe;
  pc.seed = splitmix64(5 ^ 0xabcdULL);
  CHECK(eval_node_classification(h, data, pc).accuracy == doctest::Approx(r.test_accuracy));
}

TEST_CASE("activation accounting tracks the batch footprint") {
  // A subgraph batch covering one of ten clusters touches ~N/10 nodes, so its
  // analytic activation memory should be close to a tenth of the full-batch
  // figure.
  SbmConfig sc;
  sc.blocks = 10;
  sc.nodes_per_block = 100;
  sc.p_in = 0.08;
  sc.p_out = 0.002;
  sc.feat_dim = 16;
  sc.seed = 31;
  DatasetBundle data = sbm_generate(sc);
  split_nodes(data.splits, data.graph.num_nodes, 0.6, 0.2, 0.2, 1);
  split_edges_lp(data.splits, data.graph, 0.05, 0.10, 2);

  TrainSettings full = light_settings(MethodId::gbt, Strategy::full);
  full.num_steps = 3;
  full.eval_every = 100;
  TrainSettings sub = full;
  sub.sampler.strategy = Strategy::subgraph;
  sub.sampler.num_clusters = 10;
  sub.sampler.clusters_per_batch = 1;

  EfficiencyProfile pf = profile_efficiency(data, full, 1, 3);
  EfficiencyProfile ps = profile_efficiency(data, sub, 1, 3);
  CHECK(pf.activation_mb > 0.0);
  CHECK(ps.activation_mb > 0.0);
  const double ratio = ps.activation_mb / pf.activation_mb;
  CHECK(ratio > 0.08);
  CHECK(ratio < 0.12);
}

TEST_CASE("random search is deterministic and picks the best trial by mean criterion") {
  DatasetBundle data = make_sbm(30, 33);
  TrainSettings s = light_settings(MethodId::gbt, Strategy::full);
  s.num_steps = 4;
  s.eval_every = 2;
  SearchResult a = random_search(data, s, 3, 99, {1, 2});
  SearchResult b = random_search(data, s, 3, 99, {1, 2});
  REQUIRE(a.trials.size() == 3);
  REQUIRE(a.best_trial >= 0);
  CHECK(a.best_trial == b.best_trial);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(a.trials[t].overrides == b.trials[t].overrides);
    CHECK(a.trials[t].criterion_stats.mean == b.trials[t].criterion_stats.mean);
    CHECK(a.trials[t].criterion_stats.mean <=
          a.trials[std::size_t(a.best_trial)].criterion_stats.mean);
    CHECK(a.trials[t].per_seed.size() == 2);
  }
}
