#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "graphfm/encoder.hpp"

using namespace graphfm;
using nn::Tape;
using nn::Tensor;

namespace {

EdgeList random_edges(i64 n, double p, Rng& rng) {
  EdgeList edges;
  for (i64 u = 0; u < n; ++u)
    for (i64 v = u + 1; v < n; ++v)
      if (rng.bernoulli(p)) edges.emplace_back(u, v);
  return edges;
}

Matrix dense_adj(const NormalizedAdjacency& adj) {
  Matrix d(adj.num_nodes, adj.num_nodes);
  for (i64 u = 0; u < adj.num_nodes; ++u)
    for (i64 e = adj.row_offsets[std::size_t(u)]; e < adj.row_offsets[std::size_t(u + 1)]; ++e)
      d.at(u, adj.col_indices[std::size_t(e)]) = adj.values[std::size_t(e)];
  return d;
}

Matrix forward_batch(const Encoder& enc, const BatchPlan& plan, const Matrix& x_full) {
  Tape tape;
  Rng rng(0);
  const auto& input = plan.input_nodes();
  Matrix x(i64(input.size()), x_full.cols);
  for (std::size_t i = 0; i < input.size(); ++i)
    std::copy(x_full.row(input[i]), x_full.row(input[i]) + x_full.cols, x.row(i64(i)));
  return enc.forward(tape, plan_views(plan), Tensor::constant(x), false, rng).value();
}

}  // namespace

TEST_CASE("2-layer GCN on the path matches a dense reference") {
  SparseGraph g = build_csr({{0, 1}, {1, 2}}, 3);
  NormalizedAdjacency adj = normalize_adjacency(g);
  EncoderConfig cfg;
  cfg.kind = EncoderKind::gcn;
  cfg.activation = Activation::relu;
  cfg.num_layers = 2;
  cfg.hidden_dims = {2, 2};
  Rng init(1);
  Encoder enc(cfg, 2, init);
  Matrix x(3, 2);
  x.at(0, 0) = 1.0;
  x.at(1, 1) = -1.0;
  x.at(2, 0) = 0.5;
  const Matrix h = encoder_forward_full(enc, adj, x);

  // Dense replay: H = A (relu(A X W0 + b0)) W1 + b1.
  auto params = enc.parameters();  // l0.W, l0.b, l1.W, l1.b
  const Matrix a = dense_adj(adj);
  Matrix h0 = matmul(matmul(a, matmul(x, params[0].value())), Matrix::identity(2));
  for (i64 r = 0; r < 3; ++r)
    for (i64 c = 0; c < 2; ++c) h0.at(r, c) += params[1].value().at(0, c);
  for (double& v : h0.data) v = std::max(v, 0.0);
  Matrix h1 = matmul(a, matmul(h0, params[2].value()));
  for (i64 r = 0; r < 3; ++r)
    for (i64 c = 0; c < 2; ++c) h1.at(r, c) += params[3].value().at(0, c);
  for (i64 i = 0; i < h.size(); ++i) CHECK(std::abs(h.data[i] - h1.data[i]) < 1e-12);
}

TEST_CASE("gradient of sum(H) with respect to encoder weights matches finite differences") {
  Rng rng(2);
  SparseGraph g = build_csr(random_edges(8, 0.4, rng), 8);
  NormalizedAdjacency adj = normalize_adjacency(g);
  EncoderConfig cfg;
  cfg.kind = EncoderKind::gcn;
  cfg.activation = Activation::prelu;
  cfg.num_layers = 2;
  cfg.hidden_dims = {3, 2};
  Rng init(3);
  Encoder enc(cfg, 4, init);
  Matrix x(8, 4);
  for (double& v : x.data) v = rng.normal();

  auto build = [&](Tape& t) {
    Rng r(0);
    std::vector<i64> scratch;
    auto views = full_views(adj, 2, scratch);
    return t.sum(enc.forward(t, views, Tensor::constant(x), false, r));
  };
  Tape tape;
  Tensor loss = build(tape);
  auto params = enc.parameters();
  for (auto& p : params) {
    p.node()->ensure_grad();
    p.node()->zero_grad();
  }
  tape.backward(loss);
  for (auto& p : params) {
    Matrix fd = nn::finite_difference(p, [&]() {
      Tape t;
      return build(t).item();
    });
    for (i64 i = 0; i < fd.size(); ++i) {
      const double denom = std::max({1.0, std::abs(fd.data[i]), std::abs(p.grad().data[i])});
      CHECK(std::abs(fd.data[i] - p.grad().data[i]) / denom < 1e-5);
    }
  }
}

TEST_CASE("full batch plan reproduces forward_full") {
  Rng rng(5);
  SparseGraph g = build_csr(random_edges(20, 0.2, rng), 20);
  NormalizedAdjacency adj = normalize_adjacency(g);
  EncoderConfig cfg;
  cfg.kind = EncoderKind::gcn;
  cfg.num_layers = 2;
  cfg.hidden_dims = {4, 3};
  Rng init(6);
  Encoder enc(cfg, 5, init);
  Matrix x(20, 5);
  for (double& v : x.data) v = rng.normal();
  const Matrix full = encoder_forward_full(enc, adj, x);
  const Matrix mini = forward_batch(enc, full_batch_plan(g, adj, 2), x);
  REQUIRE(mini.rows == full.rows);
  for (i64 i = 0; i < full.size(); ++i) CHECK(std::abs(full.data[i] - mini.data[i]) < 1e-12);
}

TEST_CASE("exhaustive-fanout node sampling equals forward_full on the seed set") {
  Rng rng(7);
  for (int rep = 0; rep < 5; ++rep) {
    const i64 n = 15 + rng.uniform_int(10);
    SparseGraph g = build_csr(random_edges(n, 0.25, rng), n);
    NormalizedAdjacency adj = normalize_adjacency(g);
    EncoderConfig cfg;
    cfg.kind = EncoderKind::gcn;
    cfg.num_layers = 2;
    cfg.hidden_dims = {4, 3};
    Rng init(8);
    Encoder enc(cfg, 3, init);
    Matrix x(n, 3);
    for (double& v : x.data) v = rng.normal();
    const Matrix full = encoder_forward_full(enc, adj, x);
    std::vector<i64> seeds = {0, 2, 5};
    BatchPlan plan = node_sampling_plan(g, adj, seeds, {n, n}, rng.next_u64());
    const Matrix mini = forward_batch(enc, plan, x);
    REQUIRE(mini.rows == i64(seeds.size()));
    for (std::size_t s = 0; s < seeds.size(); ++s)
      for (i64 c = 0; c < 3; ++c)
        CHECK(std::abs(mini.at(i64(s), c) - full.at(seeds[s], c)) < 1e-12);
  }
}

TEST_CASE("whole-graph subgraph batch equals forward_full") {
  Rng rng(9);
  SparseGraph g = build_csr(random_edges(18, 0.25, rng), 18);
  NormalizedAdjacency adj = normalize_adjacency(g);
  Partition p = partition_graph(g, 3, 1);
  EncoderConfig cfg;
  cfg.kind = EncoderKind::gcn;
  cfg.num_layers = 2;
  cfg.hidden_dims = {4, 4};
  Rng init(10);
  Encoder enc(cfg, 3, init);
  Matrix x(18, 3);
  for (double& v : x.data) v = rng.normal();
  const Matrix full = encoder_forward_full(enc, adj, x);
  BatchPlan plan = subgraph_batch(g, adj, p, {0, 1, 2}, 2);
  const Matrix mini = forward_batch(enc, plan, x);
  const auto& nodes = plan.seed_nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i)
    for (i64 c = 0; c < 4; ++c)
      CHECK(std::abs(mini.at(i64(i), c) - full.at(nodes[i], c)) < 1e-12);
}

TEST_CASE("GAT minibatch consistency and gradient") {
  Rng rng(11);
  SparseGraph g = build_csr(random_edges(12, 0.3, rng), 12);
  NormalizedAdjacency adj = normalize_adjacency(g);
  EncoderConfig cfg;
  cfg.kind = EncoderKind::gat;
  cfg.activation = Activation::elu;
  cfg.num_layers = 2;
  cfg.hidden_dims = {3, 3};
  cfg.num_heads = 2;
  Rng init(12);
  Encoder enc(cfg, 4, init);
  Matrix x(12, 4);
  for (double& v : x.data) v = rng.normal();
  const Matrix full = encoder_forward_full(enc, adj, x);
  CHECK(full.cols == 3);

  BatchPlan plan = node_sampling_plan(g, adj, {1, 4}, {12, 12}, 3);
  const Matrix mini = forward_batch(enc, plan, x);
  for (i64 c = 0; c < 3; ++c) {
    CHECK(std::abs(mini.at(0, c) - full.at(1, c)) < 1e-12);
    CHECK(std::abs(mini.at(1, c) - full.at(4, c)) < 1e-12);
  }

  auto build = [&](Tape& t) {
    Rng r(0);
    std::vector<i64> scratch;
    auto views = full_views(adj, 2, scratch);
    Tensor h = enc.forward(t, views, Tensor::constant(x), false, r);
    return t.sum(t.mul(h, h));
  };
  Tape tape;
  Tensor loss = build(tape);
  auto params = enc.parameters();
  for (auto& p : params) {
    p.node()->ensure_grad();
    p.node()->zero_grad();
  }
  tape.backward(loss);
  for (auto& p : params) {
    Matrix fd = nn::finite_difference(p, [&]() {
      Tape t;
      return build(t).item();
    });
    for (i64 i = 0; i < fd.size(); ++i) {
      const double denom = std::max({1.0, std::abs(fd.data[i]), std::abs(p.grad().data[i])});
      CHECK(std::abs(fd.data[i] - p.grad().data[i]) / denom < 1e-5);
    }
  }
}

TEST_CASE("MLP encoder ignores graph structure") {
  Rng rng(13);
  SparseGraph g1 = build_csr({{0, 1}, {1, 2}}, 4);
  SparseGraph g2 = build_csr({{0, 3}, {2, 3}}, 4);
  EncoderConfig cfg;
  cfg.kind = EncoderKind::mlp;
  cfg.num_layers = 2;
  cfg.hidden_dims = {4, 2};
  Rng init(14);
  Encoder enc(cfg, 3, init);
  Matrix x(4, 3);
  for (double& v : x.data) v = rng.normal();
  const Matrix h1 = encoder_forward_full(enc, normalize_adjacency(g1), x);
  const Matrix h2 = encoder_forward_full(enc, normalize_adjacency(g2), x);
  CHECK(h1.data == h2.data);
}

TEST_CASE("encoder config validation") {
  EncoderConfig cfg;
  cfg.num_layers = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.num_layers = 2;
  cfg.hidden_dims = {8};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.hidden_dims = {8, 8};
  CHECK_NOTHROW(cfg.validate());
  cfg.kind = EncoderKind::gat;
  cfg.num_heads = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
