#include "graphfm/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <unordered_map>
#include <unordered_set>

namespace graphfm {

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::full: return "full";
    case Strategy::node: return "node";
    case Strategy::subgraph: return "subgraph";
  }
  return "?";
}

Strategy strategy_from_name(const std::string& name) {
  if (name == "full") return Strategy::full;
  if (name == "node") return Strategy::node;
  if (name == "subgraph") return Strategy::subgraph;
  throw ConfigError("unknown strategy '" + name + "' (expected full, node, subgraph)");
}

namespace {

// Restriction of A-hat to rows x cols, keeping every stored entry whose
// column is in the column set. Requires rows to be a prefix of cols.
BatchBlock restrict_block(const NormalizedAdjacency& adj, const std::vector<i64>& rows,
                          const std::vector<i64>& cols) {
  std::unordered_map<i64, i64> col_local;
  col_local.reserve(cols.size() * 2);
  for (std::size_t i = 0; i < cols.size(); ++i) col_local.emplace(cols[i], i64(i));
  BatchBlock b;
  b.n_rows = i64(rows.size());
  b.n_cols = i64(cols.size());
  b.offsets.push_back(0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const i64 u = rows[r];
    for (i64 k = adj.row_offsets[std::size_t(u)]; k < adj.row_offsets[std::size_t(u + 1)]; ++k) {
      auto it = col_local.find(adj.col_indices[std::size_t(k)]);
      if (it == col_local.end()) continue;
      b.cols.push_back(it->second);
      b.vals.push_back(adj.values[std::size_t(k)]);
    }
    b.offsets.push_back(i64(b.cols.size()));
    b.dst_pos.push_back(i64(r));
  }
  return b;
}

}  // namespace

BatchPlan full_batch_plan(const SparseGraph& g, const NormalizedAdjacency& adj, i64 num_layers) {
  if (num_layers < 1) throw ConfigError("full_batch_plan: need at least one layer");
  BatchPlan plan;
  plan.strategy = Strategy::full;
  std::vector<i64> all(std::size_t(g.num_nodes), {});
  for (i64 v = 0; v < g.num_nodes; ++v) all[std::size_t(v)] = v;
  plan.layer_nodes.assign(std::size_t(num_layers + 1), all);
  BatchBlock b;
  b.n_rows = b.n_cols = g.num_nodes;
  b.offsets = adj.row_offsets;
  b.cols = adj.col_indices;
  b.vals = adj.values;
  b.dst_pos = all;
  plan.blocks.assign(std::size_t(num_layers), b);
  return plan;
}

BatchPlan node_sampling_plan(const SparseGraph& g, const NormalizedAdjacency& adj,
                             const std::vector<i64>& seeds, const std::vector<i64>& fanouts,
                             u64 seed) {
  if (seeds.empty()) throw ConfigError("node_sampling_plan: empty seed set");
  for (i64 s : seeds)
    if (s < 0 || s >= g.num_nodes) throw DataError("node_sampling_plan: seed node out of range");
  for (i64 q : fanouts)
    if (q < 1) throw ConfigError("node_sampling_plan: fanout must be >= 1");
  const i64 K = i64(fanouts.size());
  Rng rng(seed);

  BatchPlan plan;
  plan.strategy = Strategy::node;
  plan.layer_nodes.resize(std::size_t(K + 1));
  plan.blocks.resize(std::size_t(K));
  plan.layer_nodes[0] = seeds;

  // Layer l block samples neighbors for each node of B_l; fanout order is
  // Q_1 for the layer closest to the seeds.
  std::vector<i64> scratch;
  for (i64 l = 0; l < K; ++l) {
    const std::vector<i64>& bl = plan.layer_nodes[std::size_t(l)];
    const i64 q = fanouts[std::size_t(l)];
    std::vector<i64> next = bl;  // self-inclusion
    std::unordered_map<i64, i64> local;
    local.reserve(next.size() * 4);
    for (std::size_t i = 0; i < next.size(); ++i) local.emplace(next[i], i64(i));

    BatchBlock& blk = plan.blocks[std::size_t(l)];
    blk.n_rows = i64(bl.size());
    blk.offsets.push_back(0);
    std::vector<i64> fresh;
    for (std::size_t r = 0; r < bl.size(); ++r) {
      const i64 v = bl[r];
      // self entry
      blk.cols.push_back(i64(r));
      blk.vals.push_back(adj.values[std::size_t(adj.row_offsets[std::size_t(v)] + adj.self_pos[std::size_t(v)])]);
      const i64 deg = g.degree(v);
      const i64 take = std::min(q, deg);
      scratch.assign(g.col_indices.begin() + g.row_offsets[std::size_t(v)],
                     g.col_indices.begin() + g.row_offsets[std::size_t(v + 1)]);
      // partial Fisher-Yates: first `take` entries are a uniform sample
      // without replacement
      for (i64 i = 0; i < take; ++i)
        std::swap(scratch[std::size_t(i)], scratch[std::size_t(i + rng.uniform_int(deg - i))]);
      std::sort(scratch.begin(), scratch.begin() + take);
      for (i64 i = 0; i < take; ++i) {
        const i64 u = scratch[std::size_t(i)];
        auto it = local.find(u);
        i64 lu;
        if (it == local.end()) {
          lu = i64(next.size());
          next.push_back(u);
          fresh.push_back(u);
          local.emplace(u, lu);
        } else {
          lu = it->second;
        }
        blk.cols.push_back(lu);
        blk.vals.push_back(adj.value_at(v, u));
      }
      blk.offsets.push_back(i64(blk.cols.size()));
      blk.dst_pos.push_back(i64(r));
    }
    blk.n_cols = i64(next.size());
    plan.layer_nodes[std::size_t(l + 1)] = std::move(next);
  }
  return plan;
}

Partition partition_graph(const SparseGraph& g, i64 num_clusters, u64 seed) {
  const i64 n = g.num_nodes;
  if (num_clusters < 1 || num_clusters > n)
    throw ConfigError("partition_graph: num_clusters must be in [1, num_nodes]");
  Partition p;
  p.num_clusters = num_clusters;
  p.assignment.assign(std::size_t(n), -1);
  if (num_clusters == n) {
    for (i64 v = 0; v < n; ++v) p.assignment[std::size_t(v)] = v;
    return p;
  }
  Rng rng(seed);

  // Farthest-point seeding.
  std::vector<i64> cluster_seeds;
  cluster_seeds.push_back(rng.uniform_int(n));
  std::vector<i64> dist(std::size_t(n), {});
  for (i64 c = 1; c < num_clusters; ++c) {
    std::fill(dist.begin(), dist.end(), -1);
    std::deque<i64> q;
    for (i64 s : cluster_seeds) {
      dist[std::size_t(s)] = 0;
      q.push_back(s);
    }
    while (!q.empty()) {
      const i64 v = q.front();
      q.pop_front();
      for (i64 k = g.row_offsets[std::size_t(v)]; k < g.row_offsets[std::size_t(v + 1)]; ++k) {
        const i64 u = g.col_indices[std::size_t(k)];
        if (dist[std::size_t(u)] < 0) {
          dist[std::size_t(u)] = dist[std::size_t(v)] + 1;
          q.push_back(u);
        }
      }
    }
    i64 best = -1, best_d = -1;
    for (i64 v = 0; v < n; ++v) {
      const i64 d = dist[std::size_t(v)] < 0 ? n + 1 : dist[std::size_t(v)];  // unreachable wins
      if (d > best_d) {
        best_d = d;
        best = v;
      }
    }
    cluster_seeds.push_back(best);
  }

  // Balanced multi-source BFS growth, smallest cluster first.
  std::vector<std::deque<i64>> frontier{std::size_t(num_clusters)};
  std::vector<i64> size(std::size_t(num_clusters), 0);
  i64 assigned = 0;
  for (i64 c = 0; c < num_clusters; ++c) {
    const i64 s = cluster_seeds[std::size_t(c)];
    p.assignment[std::size_t(s)] = c;
    size[std::size_t(c)] = 1;
    ++assigned;
    frontier[std::size_t(c)].push_back(s);
  }
  while (assigned < n) {
    i64 pick = -1;
    for (i64 c = 0; c < num_clusters; ++c) {
      if (frontier[std::size_t(c)].empty()) continue;
      if (pick < 0 || size[std::size_t(c)] < size[std::size_t(pick)]) pick = c;
    }
    if (pick < 0) {
      // Remaining nodes are unreachable from every seed; attach each to the
      // currently smallest cluster.
      for (i64 v = 0; v < n; ++v) {
        if (p.assignment[std::size_t(v)] >= 0) continue;
        i64 c = 0;
        for (i64 d = 1; d < num_clusters; ++d)
          if (size[std::size_t(d)] < size[std::size_t(c)]) c = d;
        p.assignment[std::size_t(v)] = c;
        ++size[std::size_t(c)];
        ++assigned;
        frontier[std::size_t(c)].push_back(v);
      }
      break;
    }
    bool grew = false;
    while (!frontier[std::size_t(pick)].empty() && !grew) {
      const i64 v = frontier[std::size_t(pick)].front();
      for (i64 k = g.row_offsets[std::size_t(v)]; k < g.row_offsets[std::size_t(v + 1)]; ++k) {
        const i64 u = g.col_indices[std::size_t(k)];
        if (p.assignment[std::size_t(u)] >= 0) continue;
        p.assignment[std::size_t(u)] = pick;
        ++size[std::size_t(pick)];
        ++assigned;
        frontier[std::size_t(pick)].push_back(u);
        grew = true;
        break;
      }
      if (!grew) frontier[std::size_t(pick)].pop_front();
    }
  }

  const double target = double(n) / double(num_clusters);
  const i64 lower = std::max<i64>(1, i64(std::floor(0.75 * target)));
  const i64 upper = std::max<i64>(lower, i64(std::ceil(1.25 * target)));

  auto neighbors_in = [&](i64 v, i64 c) {
    i64 cnt = 0;
    for (i64 k = g.row_offsets[std::size_t(v)]; k < g.row_offsets[std::size_t(v + 1)]; ++k)
      if (p.assignment[std::size_t(g.col_indices[std::size_t(k)])] == c) ++cnt;
    return cnt;
  };

  // Rebalance oversized clusters, moving weakly-attached nodes first.
  for (i64 iter = 0; iter < 10 * n; ++iter) {
    i64 big = 0, small = 0;
    for (i64 c = 1; c < num_clusters; ++c) {
      if (size[std::size_t(c)] > size[std::size_t(big)]) big = c;
      if (size[std::size_t(c)] < size[std::size_t(small)]) small = c;
    }
    if (size[std::size_t(big)] <= upper && size[std::size_t(small)] >= lower) break;
    i64 best = -1, best_score = 0;
    for (i64 v = 0; v < n; ++v) {
      if (p.assignment[std::size_t(v)] != big) continue;
      const i64 score = neighbors_in(v, small) - neighbors_in(v, big);
      if (best < 0 || score > best_score) {
        best = v;
        best_score = score;
      }
    }
    if (best < 0) break;
    p.assignment[std::size_t(best)] = small;
    --size[std::size_t(big)];
    ++size[std::size_t(small)];
  }

  // One boundary-refinement pass: move nodes to their neighbor-majority
  // cluster when it strictly reduces cut and keeps the balance bounds.
  std::vector<i64> order(std::size_t(n), {});
  for (i64 v = 0; v < n; ++v) order[std::size_t(v)] = v;
  for (i64 i = n - 1; i > 0; --i)
    std::swap(order[std::size_t(i)], order[std::size_t(rng.uniform_int(i + 1))]);
  std::vector<i64> count(std::size_t(num_clusters), {});
  for (i64 v : order) {
    const i64 cur = p.assignment[std::size_t(v)];
    if (size[std::size_t(cur)] - 1 < lower) continue;
    std::fill(count.begin(), count.end(), 0);
    for (i64 k = g.row_offsets[std::size_t(v)]; k < g.row_offsets[std::size_t(v + 1)]; ++k)
      ++count[std::size_t(p.assignment[std::size_t(g.col_indices[std::size_t(k)])])];
    i64 best = cur;
    for (i64 c = 0; c < num_clusters; ++c)
      if (c != cur && size[std::size_t(c)] + 1 <= upper && count[std::size_t(c)] > count[std::size_t(best)])
        best = c;
    if (best != cur) {
      p.assignment[std::size_t(v)] = best;
      --size[std::size_t(cur)];
      ++size[std::size_t(best)];
    }
  }
  return p;
}

i64 edge_cut(const SparseGraph& g, const Partition& p) {
  i64 cut = 0;
  for (i64 u = 0; u < g.num_nodes; ++u)
    for (i64 k = g.row_offsets[std::size_t(u)]; k < g.row_offsets[std::size_t(u + 1)]; ++k) {
      const i64 v = g.col_indices[std::size_t(k)];
      if (u < v && p.assignment[std::size_t(u)] != p.assignment[std::size_t(v)]) ++cut;
    }
  return cut;
}

BatchPlan subgraph_batch(const SparseGraph& g, const NormalizedAdjacency& adj,
                         const Partition& partition, const std::vector<i64>& cluster_ids,
                         i64 num_layers) {
  std::unordered_set<i64> chosen;
  for (i64 c : cluster_ids) {
    if (c < 0 || c >= partition.num_clusters) throw ConfigError("subgraph_batch: bad cluster id");
    chosen.insert(c);
  }
  std::vector<i64> nodes;
  for (i64 v = 0; v < g.num_nodes; ++v)
    if (chosen.count(partition.assignment[std::size_t(v)])) nodes.push_back(v);
  if (nodes.empty()) throw ConfigError("subgraph_batch: empty cluster union");

  BatchPlan plan;
  plan.strategy = Strategy::subgraph;
  plan.layer_nodes.assign(std::size_t(num_layers + 1), nodes);
  BatchBlock b = restrict_block(adj, nodes, nodes);
  plan.blocks.assign(std::size_t(num_layers), b);
  return plan;
}

}  // namespace graphfm
