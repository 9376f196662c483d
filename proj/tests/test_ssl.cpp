#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "graphfm/runner.hpp"
#include "graphfm/ssl.hpp"

using namespace graphfm;
using nn::Tape;
using nn::Tensor;

namespace {

Matrix random_matrix(i64 r, i64 c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.normal();
  return m;
}

void check_param_grads(const std::vector<Tensor>& params,
                       const std::function<Tensor(Tape&)>& build, double tol = 1e-5) {
  Tape tape;
  Tensor loss = build(tape);
  for (const auto& p : params) {
    p.node()->ensure_grad();
    p.node()->zero_grad();
  }
  tape.backward(loss);
  for (const auto& p : params) {
    Matrix fd = nn::finite_difference(p, [&]() {
      Tape t;
      return build(t).item();
    });
    for (i64 i = 0; i < fd.size(); ++i) {
      const double denom = std::max({1.0, std::abs(fd.data[i]), std::abs(p.grad().data[i])});
      CHECK(std::abs(fd.data[i] - p.grad().data[i]) / denom < tol);
    }
  }
}

// Dense oracle for the barlow-twins style cross-correlation matrix.
Matrix cross_corr(const Matrix& z1, const Matrix& z2) {
  auto standardize = [](const Matrix& z) {
    Matrix out = z;
    for (i64 c = 0; c < z.cols; ++c) {
      double mean = 0.0;
      for (i64 r = 0; r < z.rows; ++r) mean += z.at(r, c);
      mean /= double(z.rows);
      double var = 0.0;
      for (i64 r = 0; r < z.rows; ++r) var += (z.at(r, c) - mean) * (z.at(r, c) - mean);
      const double sd = std::max(std::sqrt(var / double(z.rows)), 1e-8);
      for (i64 r = 0; r < z.rows; ++r) out.at(r, c) = (z.at(r, c) - mean) / sd;
    }
    return out;
  };
  Matrix c = matmul(standardize(z1), standardize(z2), true, false);
  for (double& v : c.data) v /= double(z1.rows);
  return c;
}

}  // namespace

TEST_CASE("gbt loss against the dense cross-correlation oracle") {
  Rng rng(1);
  Matrix z = random_matrix(8, 4, rng);
  Matrix z2 = z;
  for (double& v : z2.data) v = -v;
  Matrix c = cross_corr(z, z2);
  double expect = 0.0;
  for (i64 i = 0; i < 4; ++i) {
    expect += (1.0 - c.at(i, i)) * (1.0 - c.at(i, i));
    CHECK(c.at(i, i) == doctest::Approx(-1.0).epsilon(1e-12));
  }
  double off = 0.0;
  for (i64 i = 0; i < 4; ++i)
    for (i64 j = 0; j < 4; ++j)
      if (i != j) off += c.at(i, j) * c.at(i, j);
  expect += off / 4.0;
  // Negated view: the on-diagonal term alone is 4 * l.
  CHECK(expect - off / 4.0 == doctest::Approx(16.0).epsilon(1e-12));

  Tape tape;
  Tensor loss = gbt_loss(tape, Tensor::constant(z), Tensor::constant(z2));
  CHECK(loss.item() == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("gbt gradient") {
  Rng rng(2);
  Tensor z1 = Tensor::param(random_matrix(6, 3, rng), "z1");
  Tensor z2 = Tensor::param(random_matrix(6, 3, rng), "z2");
  check_param_grads({z1, z2}, [&](Tape& t) { return gbt_loss(t, z1, z2); });
}

TEST_CASE("cca-ssg loss with lambda 0 is the invariance term") {
  Rng rng(3);
  Matrix z1 = random_matrix(7, 3, rng);
  Matrix z2 = random_matrix(7, 3, rng);
  Tape tape;
  Tensor loss = cca_ssg_loss(tape, Tensor::constant(z1), Tensor::constant(z2), 0.0);
  auto tilde = [&](const Matrix& z) {
    Matrix c = cross_corr(z, z);  // reuse standardization
    (void)c;
    Matrix out = z;
    for (i64 col = 0; col < z.cols; ++col) {
      double mean = 0.0;
      for (i64 r = 0; r < z.rows; ++r) mean += z.at(r, col);
      mean /= double(z.rows);
      double var = 0.0;
      for (i64 r = 0; r < z.rows; ++r) var += (z.at(r, col) - mean) * (z.at(r, col) - mean);
      const double sd = std::max(std::sqrt(var / double(z.rows)), 1e-8);
      for (i64 r = 0; r < z.rows; ++r)
        out.at(r, col) = (z.at(r, col) - mean) / (sd * std::sqrt(double(z.rows)));
    }
    return out;
  };
  const Matrix a = tilde(z1), b = tilde(z2);
  double expect = 0.0;
  for (i64 i = 0; i < a.size(); ++i) expect += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  CHECK(loss.item() == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("cca-ssg gradient") {
  Rng rng(4);
  Tensor z1 = Tensor::param(random_matrix(6, 3, rng), "z1");
  Tensor z2 = Tensor::param(random_matrix(6, 3, rng), "z2");
  check_param_grads({z1, z2}, [&](Tape& t) { return cca_ssg_loss(t, z1, z2, 0.7); });
}

TEST_CASE("gca infonce hand-evaluated two-node example") {
  Matrix u(2, 2);
  u.at(0, 0) = 1.0;
  u.at(1, 1) = 1.0;
  Tape tape;
  Tensor loss = gca_infonce_loss(tape, Tensor::constant(u), Tensor::constant(u), 1.0);
  const double expect = -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0));
  CHECK(loss.item() == doctest::Approx(expect).epsilon(1e-12));
  CHECK(loss.item() == doctest::Approx(0.551445).epsilon(1e-5));
}

TEST_CASE("gca gradient") {
  Rng rng(5);
  Tensor u = Tensor::param(random_matrix(5, 3, rng), "u");
  Tensor v = Tensor::param(random_matrix(5, 3, rng), "v");
  check_param_grads({u, v}, [&](Tape& t) { return gca_infonce_loss(t, u, v, 0.5); });
}

TEST_CASE("graphmae loss is zero on perfect reconstruction and positive otherwise") {
  Rng rng(6);
  Matrix target = random_matrix(4, 5, rng);
  Tape tape;
  Tensor zero = graphmae_loss(tape, Tensor::constant(target), target, 2);
  CHECK(zero.item() == doctest::Approx(0.0).epsilon(1e-12));
  Matrix other = random_matrix(4, 5, rng);
  Tensor pos = graphmae_loss(tape, Tensor::constant(other), target, 2);
  CHECK(pos.item() > 0.0);
}

TEST_CASE("graphmae gradient and alpha scaling") {
  Rng rng(7);
  Tensor recon = Tensor::param(random_matrix(4, 3, rng), "recon");
  Matrix target = random_matrix(4, 3, rng);
  for (int alpha : {1, 2, 3})
    check_param_grads({recon}, [&](Tape& t) { return graphmae_loss(t, recon, target, alpha); });
}

TEST_CASE("s2gae loss equals ln 2 at zero logits") {
  Tape tape;
  Tensor loss = s2gae_loss(tape, Tensor::constant(Matrix(3, 1, 0.0)),
                           Tensor::constant(Matrix(5, 1, 0.0)));
  CHECK(loss.item() == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("s2gae gradient") {
  Rng rng(8);
  Tensor pos = Tensor::param(random_matrix(4, 1, rng), "pos");
  Tensor neg = Tensor::param(random_matrix(6, 1, rng), "neg");
  check_param_grads({pos, neg}, [&](Tape& t) { return s2gae_loss(t, pos, neg); });
}

TEST_CASE("bgrl cosine loss is zero when prediction equals target") {
  Rng rng(9);
  Matrix target = random_matrix(5, 4, rng);
  Tape tape;
  Tensor loss = bgrl_cosine_loss(tape, Tensor::constant(target), target);
  CHECK(loss.item() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("bgrl gradient") {
  Rng rng(10);
  Tensor pred = Tensor::param(random_matrix(5, 3, rng), "pred");
  Matrix target = random_matrix(5, 3, rng);
  check_param_grads({pred}, [&](Tape& t) { return bgrl_cosine_loss(t, pred, target); });
}

TEST_CASE("augmentation: edge retention within 3 sigma, feature columns zeroed") {
  Rng rng(11);
  EdgeList edges;
  std::set<std::pair<i64, i64>> used;
  const i64 n = 80;
  while (edges.size() < 1000) {
    i64 u = rng.uniform_int(n), v = rng.uniform_int(n);
    if (u == v) continue;
    auto mm = std::minmax(u, v);
    if (!used.insert({mm.first, mm.second}).second) continue;
    edges.emplace_back(u, v);
  }
  SparseGraph g = build_csr(edges, n);
  Matrix x(n, 10, 1.0);
  AugmentationSpec spec;
  spec.drop_edge_p = 0.5;
  spec.drop_feat_p = 0.3;
  spec.seed = 4;
  auto [g2, x2] = augment(g, x, spec);
  const double sigma = std::sqrt(1000 * 0.25);
  CHECK(std::abs(double(g2.num_edges) - 500.0) < 3.0 * sigma);
  for (i64 c = 0; c < 10; ++c) {
    bool all_zero = true, all_one = true;
    for (i64 r = 0; r < n; ++r) {
      if (x2.at(r, c) != 0.0) all_zero = false;
      if (x2.at(r, c) != 1.0) all_one = false;
    }
    CHECK((all_zero || all_one));
  }
}

TEST_CASE("mask_nodes masks exactly floor(rate * N) rows with the token") {
  Rng rng(12);
  Matrix x = random_matrix(100, 6, rng);
  std::vector<double> token(6, -7.0);
  NodeMask mask = mask_nodes(x, 0.5, 3, token);
  CHECK(mask.mask_index.size() == 50);
  for (std::size_t i = 0; i < mask.mask_index.size(); ++i) {
    const i64 r = mask.mask_index[i];
    for (i64 c = 0; c < 6; ++c) {
      CHECK(mask.x_masked.at(r, c) == -7.0);
      CHECK(mask.targets.at(i64(i), c) == x.at(r, c));
    }
  }
}

TEST_CASE("mask_edges removes floor(ratio * E) edges") {
  EdgeList edges;
  for (i64 i = 0; i < 10; ++i) edges.emplace_back(i, i + 1);
  SparseGraph g = build_csr(edges, 11);
  EdgeMask em = mask_edges(g, 0.5, 9);
  CHECK(em.masked.size() == 5);
  CHECK(em.visible.num_edges == 5);
  for (const auto& [u, v] : em.masked) CHECK_FALSE(em.visible.has_edge(u, v));
}

TEST_CASE("method config rejects out-of-range hyperparameters") {
  MethodConfig cfg = default_method_config(MethodId::graphmae);
  cfg.hp["mask_rate"] = 1.5;
  CHECK_THROWS_WITH_AS(cfg.finalize(16), doctest::Contains("mask_rate"), ConfigError);
  MethodConfig cfg2 = default_method_config(MethodId::gbt);
  cfg2.hp["unknown_knob"] = 1.0;
  CHECK_THROWS_WITH_AS(cfg2.finalize(16), doctest::Contains("unknown_knob"), ConfigError);
}

TEST_CASE("bgrl target follows the EMA recurrence and receives no gradients") {
  SbmConfig sc;
  sc.blocks = 2;
  sc.nodes_per_block = 20;
  sc.p_in = 0.3;
  sc.p_out = 0.05;
  sc.feat_dim = 6;
  sc.seed = 13;
  DatasetBundle data = sbm_generate(sc);
  NormalizedAdjacency adj = normalize_adjacency(data.graph);
  MethodConfig cfg = default_method_config(MethodId::bgrl);
  cfg.encoder.hidden_dims = {8, 8};
  cfg.hp["pred_dim"] = 8;
  cfg.hp["ema_decay"] = 0.9;
  auto method = SslMethod::create(cfg, data, 1);

  auto params = method->all_parameters();
  std::vector<Matrix> target_before, online_prefix;
  for (const auto& p : params)
    if (p.name().rfind("target", 0) == 0) {
      target_before.push_back(p.value());
      CHECK_FALSE(p.requires_grad());
    }
  REQUIRE(!target_before.empty());

  TrainContext ctx;
  ctx.data = &data;
  ctx.adj = &adj;
  method->training_step(ctx);

  params = method->all_parameters();
  std::vector<const Matrix*> online_after, target_after;
  for (const auto& p : params) {
    if (p.name().rfind("online", 0) == 0) online_after.push_back(&p.value());
    if (p.name().rfind("target", 0) == 0) target_after.push_back(&p.value());
  }
  REQUIRE(online_after.size() == target_after.size());
  for (std::size_t i = 0; i < target_after.size(); ++i)
    for (i64 j = 0; j < target_after[i]->size(); ++j) {
      const double expect =
          0.9 * target_before[i].data[std::size_t(j)] + 0.1 * online_after[i]->data[std::size_t(j)];
      CHECK(target_after[i]->data[std::size_t(j)] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("200 training steps reduce the loss below its first value") {
  SbmConfig sc;
  sc.blocks = 2;
  sc.nodes_per_block = 40;
  sc.p_in = 0.2;
  sc.p_out = 0.02;
  sc.feat_dim = 8;
  sc.feat_noise = 1.0;
  sc.seed = 17;
  DatasetBundle data = sbm_generate(sc);
  NormalizedAdjacency adj = normalize_adjacency(data.graph);
  MethodConfig cfg = default_method_config(MethodId::gbt);
  cfg.encoder.hidden_dims = {16, 16};
  auto method = SslMethod::create(cfg, data, 3);
  TrainContext ctx;
  ctx.data = &data;
  ctx.adj = &adj;
  double first = method->training_step(ctx);
  double last = first;
  for (int i = 1; i < 200; ++i) last = method->training_step(ctx);
  CHECK(last < first);
}

TEST_CASE("snapshot and restore round-trips method parameters") {
  SbmConfig sc;
  sc.blocks = 2;
  sc.nodes_per_block = 15;
  sc.seed = 19;
  DatasetBundle data = sbm_generate(sc);
  NormalizedAdjacency adj = normalize_adjacency(data.graph);
  MethodConfig cfg = default_method_config(MethodId::cca_ssg);
  cfg.encoder.hidden_dims = {8, 8};
  auto method = SslMethod::create(cfg, data, 4);
  auto snap = method->snapshot();
  TrainContext ctx;
  ctx.data = &data;
  ctx.adj = &adj;
  method->training_step(ctx);
  auto changed = method->snapshot();
  bool any_diff = false;
  for (std::size_t i = 0; i < snap.size(); ++i)
    if (snap[i].data != changed[i].data) any_diff = true;
  CHECK(any_diff);
  method->restore(snap);
  auto back = method->snapshot();
  for (std::size_t i = 0; i < snap.size(); ++i) CHECK(back[i].data == snap[i].data);
}
