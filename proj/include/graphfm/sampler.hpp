#pragma once

#include "graphfm/graph.hpp"
#include "graphfm/tensor.hpp"

namespace graphfm {

enum class Strategy { full, node, subgraph };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

// Restriction of A-hat to rows B_l, columns B_{l+1}. Values are copied from
// the full normalized adjacency (sub-matrix semantics, no renormalization).
struct BatchBlock {
  i64 n_rows = 0;
  i64 n_cols = 0;
  std::vector<i64> offsets;
  std::vector<i64> cols;      // local indices into the column node set
  std::vector<double> vals;
  std::vector<i64> dst_pos;   // position of row node inside the column set

  nn::CsrView view() const {
    nn::CsrView v;
    v.n_rows = n_rows;
    v.n_cols = n_cols;
    v.offsets = offsets.data();
    v.cols = cols.data();
    v.vals = vals.data();
    v.dst_pos = dst_pos.data();
    return v;
  }
};

struct BatchPlan {
  Strategy strategy = Strategy::full;
  // layer_nodes[l] = B_l (global node ids); size K + 1.
  std::vector<std::vector<i64>> layer_nodes;
  // blocks[l] maps B_{l+1}-indexed inputs to B_l-indexed outputs; size K.
  std::vector<BatchBlock> blocks;

  i64 num_layers() const { return i64(blocks.size()); }
  const std::vector<i64>& seed_nodes() const { return layer_nodes.front(); }
  const std::vector<i64>& input_nodes() const { return layer_nodes.back(); }
};

struct SamplerConfig {
  Strategy strategy = Strategy::full;
  i64 batch_size = 1024;           // seed-node count for node sampling
  std::vector<i64> fanouts;        // length K for node sampling
  i64 num_clusters = 10;
  i64 clusters_per_batch = 1;
  u64 seed = 0;
};

struct Partition {
  std::vector<i64> assignment;  // node -> cluster id
  i64 num_clusters = 0;
};

BatchPlan full_batch_plan(const SparseGraph& g, const NormalizedAdjacency& adj, i64 num_layers);

// Uniform neighbor sampling without replacement; B_{l+1} includes B_l.
BatchPlan node_sampling_plan(const SparseGraph& g, const NormalizedAdjacency& adj,
                             const std::vector<i64>& seeds, const std::vector<i64>& fanouts,
                             u64 seed);

// Seeded multi-source BFS growth with farthest-point seeding, balancing, and
// a one-pass boundary refinement minimizing edge cut.
Partition partition_graph(const SparseGraph& g, i64 num_clusters, u64 seed);

i64 edge_cut(const SparseGraph& g, const Partition& p);

BatchPlan subgraph_batch(const SparseGraph& g, const NormalizedAdjacency& adj,
                         const Partition& partition, const std::vector<i64>& cluster_ids,
                         i64 num_layers);

}  // namespace graphfm
