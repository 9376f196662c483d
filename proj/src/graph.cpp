#include "graphfm/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_set>

namespace graphfm {

bool SparseGraph::has_edge(i64 u, i64 v) const {
  const i64* begin = col_indices.data() + row_offsets[u];
  const i64* end = col_indices.data() + row_offsets[u + 1];
  return std::binary_search(begin, end, v);
}

EdgeList SparseGraph::edges() const {
  EdgeList out;
  out.reserve(std::size_t(num_edges));
  for (i64 u = 0; u < num_nodes; ++u)
    for (i64 k = row_offsets[u]; k < row_offsets[u + 1]; ++k)
      if (u < col_indices[std::size_t(k)]) out.emplace_back(u, col_indices[std::size_t(k)]);
  return out;
}

double NormalizedAdjacency::value_at(i64 u, i64 v) const {
  const i64 lo = row_offsets[u], hi = row_offsets[u + 1];
  auto it = std::lower_bound(col_indices.begin() + lo, col_indices.begin() + hi, v);
  if (it == col_indices.begin() + hi || *it != v) return 0.0;
  return values[std::size_t(it - col_indices.begin())];
}

SparseGraph build_csr(const EdgeList& edges, i64 num_nodes) {
  if (num_nodes < 0) throw DataError("build_csr: negative num_nodes");
  std::vector<std::pair<i64, i64>> dir;
  dir.reserve(edges.size() * 2);
  for (const auto& [u, v] : edges) {
    if (u < 0 || v < 0 || u >= num_nodes || v >= num_nodes)
      throw DataError("build_csr: edge endpoint out of range: (" + std::to_string(u) + ", " +
                      std::to_string(v) + ")");
    if (u == v) continue;  // self-loops dropped
    dir.emplace_back(u, v);
    dir.emplace_back(v, u);
  }
  std::sort(dir.begin(), dir.end());
  dir.erase(std::unique(dir.begin(), dir.end()), dir.end());

  SparseGraph g;
  g.num_nodes = num_nodes;
  g.row_offsets.assign(std::size_t(num_nodes + 1), 0);
  for (const auto& [u, v] : dir) ++g.row_offsets[std::size_t(u + 1)];
  for (i64 i = 0; i < num_nodes; ++i)
    g.row_offsets[std::size_t(i + 1)] += g.row_offsets[std::size_t(i)];
  g.col_indices.reserve(dir.size());
  for (const auto& [u, v] : dir) g.col_indices.push_back(v);
  g.num_edges = i64(dir.size()) / 2;
  return g;
}

void validate_csr(const SparseGraph& g) {
  if (g.num_nodes < 0) throw DataError("csr: negative node count");
  if (i64(g.row_offsets.size()) != g.num_nodes + 1) throw DataError("csr: row_offsets length");
  if (g.row_offsets.front() != 0 || g.row_offsets.back() != i64(g.col_indices.size()))
    throw DataError("csr: row_offsets endpoints");
  if (i64(g.col_indices.size()) != 2 * g.num_edges) throw DataError("csr: edge count mismatch");
  for (i64 u = 0; u < g.num_nodes; ++u) {
    if (g.row_offsets[u + 1] < g.row_offsets[u]) throw DataError("csr: row_offsets decreasing");
    for (i64 k = g.row_offsets[u]; k < g.row_offsets[u + 1]; ++k) {
      const i64 v = g.col_indices[std::size_t(k)];
      if (v < 0 || v >= g.num_nodes) throw DataError("csr: column out of range");
      if (v == u) throw DataError("csr: self-loop stored");
      if (k > g.row_offsets[u] && g.col_indices[std::size_t(k - 1)] >= v)
        throw DataError("csr: row not sorted or duplicate entry");
      if (!g.has_edge(v, u)) throw DataError("csr: asymmetric entry");
    }
  }
}

NormalizedAdjacency normalize_adjacency(const SparseGraph& g) {
  NormalizedAdjacency a;
  a.num_nodes = g.num_nodes;
  const i64 n = g.num_nodes;
  std::vector<double> inv_sqrt_deg(std::size_t(n), {});
  for (i64 v = 0; v < n; ++v) inv_sqrt_deg[std::size_t(v)] = 1.0 / std::sqrt(double(g.degree(v) + 1));

  a.row_offsets.assign(std::size_t(n + 1), 0);
  for (i64 v = 0; v < n; ++v) a.row_offsets[std::size_t(v + 1)] = a.row_offsets[std::size_t(v)] + g.degree(v) + 1;
  a.col_indices.reserve(std::size_t(a.row_offsets.back()));
  a.values.reserve(std::size_t(a.row_offsets.back()));
  a.self_pos.assign(std::size_t(n), 0);
  for (i64 u = 0; u < n; ++u) {
    bool self_inserted = false;
    for (i64 k = g.row_offsets[u]; k < g.row_offsets[u + 1]; ++k) {
      const i64 v = g.col_indices[std::size_t(k)];
      if (!self_inserted && v > u) {
        a.self_pos[std::size_t(u)] = i64(a.col_indices.size()) - a.row_offsets[std::size_t(u)];
        a.col_indices.push_back(u);
        a.values.push_back(inv_sqrt_deg[std::size_t(u)] * inv_sqrt_deg[std::size_t(u)]);
        self_inserted = true;
      }
      a.col_indices.push_back(v);
      a.values.push_back(inv_sqrt_deg[std::size_t(u)] * inv_sqrt_deg[std::size_t(v)]);
    }
    if (!self_inserted) {
      a.self_pos[std::size_t(u)] = i64(a.col_indices.size()) - a.row_offsets[std::size_t(u)];
      a.col_indices.push_back(u);
      a.values.push_back(inv_sqrt_deg[std::size_t(u)] * inv_sqrt_deg[std::size_t(u)]);
    }
  }
  return a;
}

Matrix spmm(const NormalizedAdjacency& adj, const Matrix& x) {
  if (x.rows != adj.num_nodes) throw NumericError("spmm: row count mismatch");
  Matrix y(adj.num_nodes, x.cols);
  for (i64 u = 0; u < adj.num_nodes; ++u) {
    double* yu = y.row(u);
    for (i64 k = adj.row_offsets[std::size_t(u)]; k < adj.row_offsets[std::size_t(u + 1)]; ++k) {
      const double w = adj.values[std::size_t(k)];
      const double* xv = x.row(adj.col_indices[std::size_t(k)]);
      for (i64 j = 0; j < x.cols; ++j) yu[j] += w * xv[j];
    }
  }
  return y;
}

void split_nodes(SplitSpec& out, i64 num_nodes, double train_ratio, double val_ratio,
                 double test_ratio, u64 seed) {
  if (train_ratio <= 0 || val_ratio <= 0 || test_ratio <= 0)
    throw ConfigError("split_nodes: ratios must be positive");
  if (train_ratio + val_ratio + test_ratio > 1.0 + 1e-12)
    throw ConfigError("split_nodes: ratios sum above 1");
  std::vector<i64> perm(std::size_t(num_nodes), {});
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  for (i64 i = num_nodes - 1; i > 0; --i)
    std::swap(perm[std::size_t(i)], perm[std::size_t(rng.uniform_int(i + 1))]);
  const i64 n_train = i64(std::floor(train_ratio * double(num_nodes)));
  const i64 n_val = i64(std::floor(val_ratio * double(num_nodes)));
  const i64 n_test = i64(std::floor(test_ratio * double(num_nodes)));
  out.train_mask.assign(std::size_t(num_nodes), 0);
  out.val_mask.assign(std::size_t(num_nodes), 0);
  out.test_mask.assign(std::size_t(num_nodes), 0);
  for (i64 i = 0; i < n_train; ++i) out.train_mask[std::size_t(perm[std::size_t(i)])] = 1;
  for (i64 i = 0; i < n_val; ++i) out.val_mask[std::size_t(perm[std::size_t(n_train + i)])] = 1;
  for (i64 i = 0; i < n_test; ++i)
    out.test_mask[std::size_t(perm[std::size_t(n_train + n_val + i)])] = 1;
}

void split_edges_lp(SplitSpec& out, const SparseGraph& g, double val_frac, double test_frac,
                    u64 seed) {
  if (val_frac < 0 || test_frac < 0 || val_frac + test_frac >= 1.0)
    throw ConfigError("split_edges_lp: need val_frac + test_frac < 1");
  EdgeList all = g.edges();
  const i64 m = i64(all.size());
  Rng rng(seed);
  for (i64 i = m - 1; i > 0; --i)
    std::swap(all[std::size_t(i)], all[std::size_t(rng.uniform_int(i + 1))]);
  const i64 n_val = i64(std::floor(val_frac * double(m)));
  const i64 n_test = i64(std::floor(test_frac * double(m)));

  out.lp_val_pos.assign(all.begin(), all.begin() + n_val);
  out.lp_test_pos.assign(all.begin() + n_val, all.begin() + n_val + n_test);
  out.lp_train_edges.assign(all.begin() + n_val + n_test, all.end());

  // Negatives: uniform non-edges, disjoint across splits.
  const i64 needed = n_val + n_test;
  std::set<Edge> drawn;
  auto sample_neg = [&](EdgeList& dst, i64 count) {
    i64 attempts = 0;
    const i64 max_attempts = needed > 0 ? 100 * needed : 100;
    while (i64(dst.size()) < count) {
      if (++attempts > max_attempts)
        throw DataError("split_edges_lp: could not sample enough negative edges");
      i64 u = rng.uniform_int(g.num_nodes);
      i64 v = rng.uniform_int(g.num_nodes);
      if (u == v) continue;
      if (u > v) std::swap(u, v);
      if (g.has_edge(u, v)) continue;
      if (!drawn.insert({u, v}).second) continue;
      dst.emplace_back(u, v);
    }
  };
  out.lp_val_neg.clear();
  out.lp_test_neg.clear();
  sample_neg(out.lp_val_neg, n_val);
  sample_neg(out.lp_test_neg, n_test);
}

DatasetBundle sbm_generate(const SbmConfig& cfg) {
  if (cfg.p_out < 0 || cfg.p_in > 1 || cfg.p_out > cfg.p_in)
    throw ConfigError("sbm_generate: need 0 <= p_out <= p_in <= 1");
  if (cfg.blocks < 1 || cfg.nodes_per_block < 1) throw ConfigError("sbm_generate: empty blocks");
  const i64 n = cfg.blocks * cfg.nodes_per_block;
  Rng rng(cfg.seed);
  EdgeList edges;

  // Geometric skipping over the pair index space, one pass per block pair.
  auto sample_pairs = [&](double p, auto&& emit, i64 total_pairs) {
    if (p <= 0 || total_pairs == 0) return;
    if (p >= 1.0) {
      for (i64 t = 0; t < total_pairs; ++t) emit(t);
      return;
    }
    const double log1mp = std::log1p(-p);
    double t = -1;
    while (true) {
      double u = rng.uniform();
      while (u <= 0) u = rng.uniform();
      t += 1 + std::floor(std::log(u) / log1mp);
      if (t >= double(total_pairs)) break;
      emit(i64(t));
    }
  };

  for (i64 b = 0; b < cfg.blocks; ++b) {
    const i64 base = b * cfg.nodes_per_block;
    const i64 nb = cfg.nodes_per_block;
    sample_pairs(
        cfg.p_in,
        [&](i64 t) {
          // Unrank pair t among {(i, j) : 0 <= i < j < nb}.
          i64 i = i64((1.0 + std::sqrt(1.0 + 8.0 * double(t))) / 2.0);
          while (i * (i - 1) / 2 > t) --i;
          while ((i + 1) * i / 2 <= t) ++i;
          const i64 j = t - i * (i - 1) / 2;
          edges.emplace_back(base + j, base + i);
        },
        nb * (nb - 1) / 2);
  }
  for (i64 b1 = 0; b1 < cfg.blocks; ++b1)
    for (i64 b2 = b1 + 1; b2 < cfg.blocks; ++b2) {
      const i64 base1 = b1 * cfg.nodes_per_block, base2 = b2 * cfg.nodes_per_block;
      const i64 nb = cfg.nodes_per_block;
      sample_pairs(
          cfg.p_out, [&](i64 t) { edges.emplace_back(base1 + t / nb, base2 + t % nb); },
          nb * nb);
    }

  DatasetBundle out;
  out.graph = build_csr(edges, n);
  out.features = Matrix(n, cfg.feat_dim);
  out.labels.resize(std::size_t(n));
  out.num_classes = cfg.blocks;
  out.name = "sbm";
  Rng frng = rng.split(0x5b5b);
  for (i64 v = 0; v < n; ++v) {
    const i64 b = v / cfg.nodes_per_block;
    out.labels[std::size_t(v)] = b;
    double* f = out.features.row(v);
    if (b < cfg.feat_dim) f[b] = 1.0;  // block centroid
    for (i64 j = 0; j < cfg.feat_dim; ++j) f[j] += cfg.feat_noise * frng.normal();
  }
  return out;
}

}  // namespace graphfm
