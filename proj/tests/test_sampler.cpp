#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "graphfm/sampler.hpp"

using namespace graphfm;

namespace {

EdgeList random_edges(i64 n, double p, Rng& rng) {
  EdgeList edges;
  for (i64 u = 0; u < n; ++u)
    for (i64 v = u + 1; v < n; ++v)
      if (rng.bernoulli(p)) edges.emplace_back(u, v);
  return edges;
}

// Every block entry must equal the corresponding full A-hat entry.
void check_submatrix(const BatchPlan& plan, const NormalizedAdjacency& adj) {
  for (i64 l = 0; l < plan.num_layers(); ++l) {
    const BatchBlock& blk = plan.blocks[std::size_t(l)];
    const auto& rows = plan.layer_nodes[std::size_t(l)];
    const auto& cols = plan.layer_nodes[std::size_t(l + 1)];
    REQUIRE(blk.n_rows == i64(rows.size()));
    REQUIRE(blk.n_cols == i64(cols.size()));
    for (i64 r = 0; r < blk.n_rows; ++r) {
      CHECK(cols[std::size_t(blk.dst_pos[std::size_t(r)])] == rows[std::size_t(r)]);
      for (i64 e = blk.offsets[std::size_t(r)]; e < blk.offsets[std::size_t(r + 1)]; ++e) {
        const i64 gu = rows[std::size_t(r)];
        const i64 gv = cols[std::size_t(blk.cols[std::size_t(e)])];
        CHECK(blk.vals[std::size_t(e)] ==
              doctest::Approx(adj.value_at(gu, gv)).epsilon(1e-15));
      }
    }
  }
}

}  // namespace

TEST_CASE("full batch plan covers the whole adjacency") {
  Rng rng(1);
  SparseGraph g = build_csr(random_edges(30, 0.15, rng), 30);
  NormalizedAdjacency adj = normalize_adjacency(g);
  BatchPlan plan = full_batch_plan(g, adj, 2);
  CHECK(plan.num_layers() == 2);
  for (const auto& layer : plan.layer_nodes) CHECK(i64(layer.size()) == 30);
  for (const auto& blk : plan.blocks)
    CHECK(blk.offsets.back() == i64(adj.col_indices.size()));
  check_submatrix(plan, adj);
}

TEST_CASE("star center with Q=2 keeps the center plus two distinct leaves") {
  EdgeList edges;
  for (i64 leaf = 1; leaf <= 5; ++leaf) edges.emplace_back(0, leaf);
  SparseGraph g = build_csr(edges, 6);
  NormalizedAdjacency adj = normalize_adjacency(g);
  BatchPlan plan = node_sampling_plan(g, adj, {0}, {2}, 7);
  REQUIRE(plan.layer_nodes.size() == 2);
  const auto& b1 = plan.layer_nodes[1];
  CHECK(b1.size() == 3);
  CHECK(b1[0] == 0);
  std::set<i64> uniq(b1.begin(), b1.end());
  CHECK(uniq.size() == 3);
  for (i64 v : b1) CHECK(v <= 5);
  check_submatrix(plan, adj);
}

TEST_CASE("node sampling: nesting, fanout bound, sub-matrix values") {
  Rng rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    SparseGraph g = build_csr(random_edges(40, 0.1, rng), 40);
    NormalizedAdjacency adj = normalize_adjacency(g);
    std::vector<i64> seeds = {0, 3, 7, 11};
    const std::vector<i64> fanouts = {3, 2};
    BatchPlan plan = node_sampling_plan(g, adj, seeds, fanouts, rng.next_u64());
    REQUIRE(plan.layer_nodes.size() == 3);
    // B_l is a prefix of B_{l+1} (self-inclusion).
    for (std::size_t l = 0; l + 1 < plan.layer_nodes.size(); ++l) {
      const auto& a = plan.layer_nodes[l];
      const auto& b = plan.layer_nodes[l + 1];
      REQUIRE(a.size() <= b.size());
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    }
    // Row degree bounded by min(Q, deg) + 1 (self entry).
    for (i64 l = 0; l < plan.num_layers(); ++l) {
      const BatchBlock& blk = plan.blocks[std::size_t(l)];
      const i64 q = fanouts[std::size_t(l)];
      for (i64 r = 0; r < blk.n_rows; ++r) {
        const i64 gu = plan.layer_nodes[std::size_t(l)][std::size_t(r)];
        const i64 nnz = blk.offsets[std::size_t(r + 1)] - blk.offsets[std::size_t(r)];
        CHECK(nnz <= std::min(q, g.degree(gu)) + 1);
      }
    }
    check_submatrix(plan, adj);
  }
}

TEST_CASE("two disjoint triangles partition into the triangles with zero cut") {
  EdgeList edges = {{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}};
  SparseGraph g = build_csr(edges, 6);
  Partition p = partition_graph(g, 2, 11);
  CHECK(p.num_clusters == 2);
  CHECK(p.assignment[0] == p.assignment[1]);
  CHECK(p.assignment[1] == p.assignment[2]);
  CHECK(p.assignment[3] == p.assignment[4]);
  CHECK(p.assignment[4] == p.assignment[5]);
  CHECK(p.assignment[0] != p.assignment[3]);
  CHECK(edge_cut(g, p) == 0);
}

TEST_CASE("partition covers all nodes within balance bounds") {
  Rng rng(4);
  SparseGraph g = build_csr(random_edges(120, 0.05, rng), 120);
  const i64 k = 6;
  Partition p = partition_graph(g, k, 5);
  REQUIRE(i64(p.assignment.size()) == 120);
  std::vector<i64> counts(k, 0);
  for (i64 c : p.assignment) {
    REQUIRE(c >= 0);
    REQUIRE(c < k);
    ++counts[std::size_t(c)];
  }
  const i64 lower = std::max<i64>(1, i64(0.75 * 120 / k));
  const i64 upper = std::max<i64>(lower, i64(std::ceil(1.25 * 120.0 / k)));
  for (i64 c = 0; c < k; ++c) {
    CHECK(counts[std::size_t(c)] >= lower);
    CHECK(counts[std::size_t(c)] <= upper);
  }
}

TEST_CASE("singleton partition when clusters equal nodes") {
  EdgeList edges = {{0, 1}, {1, 2}};
  SparseGraph g = build_csr(edges, 3);
  Partition p = partition_graph(g, 3, 0);
  std::set<i64> ids(p.assignment.begin(), p.assignment.end());
  CHECK(ids.size() == 3);
}

TEST_CASE("subgraph batch of one triangle matches the full adjacency values") {
  EdgeList edges = {{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}};
  SparseGraph g = build_csr(edges, 6);
  NormalizedAdjacency adj = normalize_adjacency(g);
  Partition p = partition_graph(g, 2, 11);
  const i64 cluster_of_0 = p.assignment[0];
  BatchPlan plan = subgraph_batch(g, adj, p, {cluster_of_0}, 2);
  REQUIRE(plan.layer_nodes.size() == 3);
  // All layer sets identical for subgraph sampling.
  for (const auto& layer : plan.layer_nodes) CHECK(layer == plan.layer_nodes[0]);
  CHECK(plan.layer_nodes[0].size() == 3);
  // 3 undirected edges -> 6 off-diagonal entries + 3 self-loops.
  CHECK(plan.blocks[0].offsets.back() == 9);
  check_submatrix(plan, adj);
}

TEST_CASE("whole-graph subgraph batch equals the full adjacency") {
  Rng rng(8);
  SparseGraph g = build_csr(random_edges(25, 0.2, rng), 25);
  NormalizedAdjacency adj = normalize_adjacency(g);
  Partition p = partition_graph(g, 4, 2);
  BatchPlan plan = subgraph_batch(g, adj, p, {0, 1, 2, 3}, 2);
  CHECK(plan.layer_nodes[0].size() == 25);
  CHECK(plan.blocks[0].offsets.back() == i64(adj.col_indices.size()));
  check_submatrix(plan, adj);
}
