#pragma once

#include <string>
#include <utility>
#include <vector>

#include "graphfm/matrix.hpp"

namespace graphfm {

using Edge = std::pair<i64, i64>;
using EdgeList = std::vector<Edge>;

// Immutable symmetric CSR adjacency. Stores each undirected edge in both
// directions; self-loop free; columns sorted within each row.
struct SparseGraph {
  i64 num_nodes = 0;
  std::vector<i64> row_offsets;  // length num_nodes + 1
  std::vector<i64> col_indices;  // length 2 * num_edges
  i64 num_edges = 0;             // undirected count

  i64 degree(i64 v) const { return row_offsets[v + 1] - row_offsets[v]; }
  bool has_edge(i64 u, i64 v) const;
  // Undirected edges with u < v, in CSR order.
  EdgeList edges() const;
};

// A-hat = D~^{-1/2} (A + I) D~^{-1/2}. CSR with self-loops, sorted columns.
struct NormalizedAdjacency {
  i64 num_nodes = 0;
  std::vector<i64> row_offsets;
  std::vector<i64> col_indices;
  std::vector<double> values;
  // Position of the (v, v) self-loop entry inside row v.
  std::vector<i64> self_pos;

  // Value at (u, v), 0 when absent.
  double value_at(i64 u, i64 v) const;
};

struct SplitSpec {
  std::vector<std::uint8_t> train_mask, val_mask, test_mask;
  EdgeList lp_train_edges;
  EdgeList lp_val_pos, lp_val_neg;
  EdgeList lp_test_pos, lp_test_neg;
  bool has_node_split() const { return !train_mask.empty(); }
  bool has_lp_split() const { return !lp_test_pos.empty(); }
};

struct DatasetBundle {
  SparseGraph graph;
  Matrix features;            // N x d
  std::vector<i64> labels;    // length N, values in [0, C)
  i64 num_classes = 0;
  SplitSpec splits;
  std::string name;
};

SparseGraph build_csr(const EdgeList& edges, i64 num_nodes);

// Throws DataError when a CSR invariant is violated.
void validate_csr(const SparseGraph& g);

NormalizedAdjacency normalize_adjacency(const SparseGraph& g);

// Y = A-hat * X.
Matrix spmm(const NormalizedAdjacency& adj, const Matrix& x);

// Deterministic ratio node split; sizes floor(ratio * N).
void split_nodes(SplitSpec& out, i64 num_nodes, double train_ratio, double val_ratio,
                 double test_ratio, u64 seed);

// Hold out val/test positive edges and sample equal-count negatives.
void split_edges_lp(SplitSpec& out, const SparseGraph& g, double val_frac, double test_frac,
                    u64 seed);

struct SbmConfig {
  i64 blocks = 2;
  i64 nodes_per_block = 50;
  double p_in = 0.2;
  double p_out = 0.01;
  i64 feat_dim = 16;
  double feat_noise = 1.0;
  u64 seed = 0;
};

DatasetBundle sbm_generate(const SbmConfig& cfg);

}  // namespace graphfm
