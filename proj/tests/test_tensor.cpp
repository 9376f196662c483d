#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "graphfm/graph.hpp"
#include "graphfm/tensor.hpp"

using namespace graphfm;
using nn::Tape;
using nn::Tensor;

namespace {

Matrix random_matrix(i64 r, i64 c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data) v = scale * rng.normal();
  return m;
}

// Analytic gradients vs central finite differences for every parameter.
void check_grads(const std::vector<Tensor>& params, const std::function<Tensor(Tape&)>& build,
                 double tol = 1e-6) {
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
    const Matrix& an = p.grad();
    REQUIRE(fd.same_shape(an));
    for (i64 i = 0; i < fd.size(); ++i) {
      const double denom = std::max({1.0, std::abs(fd.data[i]), std::abs(an.data[i])});
      CHECK(std::abs(fd.data[i] - an.data[i]) / denom < tol);
    }
  }
}

}  // namespace

TEST_CASE("column_standardize closed form") {
  Tape tape;
  Matrix x(2, 1);
  x.at(0, 0) = 1.0;
  x.at(1, 0) = 3.0;
  Tensor out = tape.column_standardize(Tensor::constant(x));
  CHECK(out.value().at(0, 0) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(out.value().at(1, 0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("adam hand-evaluated first step") {
  Tensor p = Tensor::param(Matrix(1, 1, 1.0), "p");
  p.node()->ensure_grad();
  p.node()->grad.at(0, 0) = 1.0;
  nn::AdamState st;
  st.lr = 0.1;
  st.weight_decay = 0.0;
  nn::adam_step(st, {p});
  CHECK(p.value().at(0, 0) == doctest::Approx(1.0 - 0.1 * 1.0 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("adam weight decay is additive L2") {
  Tensor p = Tensor::param(Matrix(1, 1, 2.0), "p");
  p.node()->ensure_grad();
  p.node()->grad.at(0, 0) = 0.0;
  nn::AdamState st;
  st.lr = 0.1;
  st.weight_decay = 0.5;
  nn::adam_step(st, {p});
  // Effective gradient 0 + 0.5 * 2 = 1 => same update as the previous case.
  CHECK(p.value().at(0, 0) == doctest::Approx(2.0 - 0.1).epsilon(1e-6));
}

TEST_CASE("xavier uniform bounds") {
  Rng rng(3);
  Matrix w = nn::xavier_uniform(30, 20, rng);
  const double limit = std::sqrt(6.0 / 50.0);
  for (double v : w.data) {
    CHECK(v <= limit);
    CHECK(v >= -limit);
  }
}

TEST_CASE("matmul gradients, all transpose variants") {
  Rng rng(5);
  for (bool ta : {false, true})
    for (bool tb : {false, true}) {
      Tensor a = Tensor::param(random_matrix(ta ? 4 : 3, ta ? 3 : 4, rng), "a");
      Tensor b = Tensor::param(random_matrix(tb ? 5 : 4, tb ? 4 : 5, rng), "b");
      check_grads({a, b}, [&](Tape& t) { return t.sum(t.matmul(a, b, ta, tb)); });
    }
}

TEST_CASE("spmm gradient") {
  Rng rng(6);
  SparseGraph g = build_csr({{0, 1}, {1, 2}, {2, 3}, {0, 3}}, 4);
  NormalizedAdjacency adj = normalize_adjacency(g);
  nn::CsrView view = nn::full_view(adj);
  Tensor x = Tensor::param(random_matrix(4, 3, rng), "x");
  check_grads({x}, [&](Tape& t) { return t.sum(t.spmm(view, x)); });
}

TEST_CASE("elementwise op gradients") {
  Rng rng(8);
  Tensor a = Tensor::param(random_matrix(3, 4, rng), "a");
  Tensor b = Tensor::param(random_matrix(3, 4, rng), "b");
  Tensor bias = Tensor::param(random_matrix(1, 4, rng), "bias");
  check_grads({a, b}, [&](Tape& t) { return t.sum(t.mul(t.add(a, b), t.sub(a, b))); });
  check_grads({a, bias}, [&](Tape& t) { return t.sum(t.add_rowvec(a, bias)); });
  check_grads({a}, [&](Tape& t) { return t.sum(t.scale(t.add_scalar(a, 0.7), 1.3)); });
  check_grads({a}, [&](Tape& t) { return t.sum(t.exp(a)); });
  check_grads({a}, [&](Tape& t) { return t.sum(t.log(t.add_scalar(t.exp(a), 1.0))); });
  check_grads({a}, [&](Tape& t) { return t.mean(t.pow_int(a, 3)); });
}

TEST_CASE("activation gradients away from kinks") {
  Rng rng(9);
  Matrix m = random_matrix(4, 4, rng);
  for (double& v : m.data)
    if (std::abs(v) < 0.05) v = 0.3;  // keep clear of the non-differentiable point
  Tensor a = Tensor::param(m, "a");
  Tensor slope = Tensor::param(Matrix(1, 1, 0.25), "slope");
  check_grads({a}, [&](Tape& t) { return t.sum(t.relu(a)); });
  check_grads({a}, [&](Tape& t) { return t.sum(t.leaky_relu(a, 0.2)); });
  check_grads({a}, [&](Tape& t) { return t.sum(t.elu(a)); });
  check_grads({a, slope}, [&](Tape& t) { return t.sum(t.prelu(a, slope)); });
}

TEST_CASE("row_l2_normalize and column_standardize gradients") {
  Rng rng(10);
  Tensor a = Tensor::param(random_matrix(5, 3, rng), "a");
  Tensor b = Tensor::param(random_matrix(6, 4, rng), "b");
  check_grads({a}, [&](Tape& t) { return t.sum(t.mul(t.row_l2_normalize(a), t.row_l2_normalize(a))); });
  check_grads({b}, [&](Tape& t) {
    Tensor z = t.column_standardize(b);
    return t.sum(t.mul(z, t.scale(z, 0.5)));
  });
}

TEST_CASE("gather, concat, broadcast, transpose gradients") {
  Rng rng(11);
  Tensor a = Tensor::param(random_matrix(5, 3, rng), "a");
  Tensor row = Tensor::param(random_matrix(1, 3, rng), "row");
  std::vector<i64> idx = {4, 0, 2, 2};
  check_grads({a}, [&](Tape& t) { return t.sum(t.gather_rows(a, idx)); });
  check_grads({a, row}, [&](Tape& t) {
    Tensor br = t.broadcast_row(row, 5);
    return t.sum(t.mul(t.concat_cols({a, br}), t.concat_cols({br, a})));
  });
  check_grads({a}, [&](Tape& t) { return t.sum(t.mul(t.transpose(a), t.transpose(a))); });
}

TEST_CASE("segment softmax sums to one and differentiates") {
  Rng rng(12);
  std::vector<i64> offsets = {0, 3, 5, 9};
  Tensor s = Tensor::param(random_matrix(9, 1, rng), "s");
  Tape tape;
  Tensor alpha = tape.segment_softmax(s, offsets);
  for (std::size_t seg = 0; seg + 1 < offsets.size(); ++seg) {
    double sum = 0.0;
    for (i64 e = offsets[seg]; e < offsets[seg + 1]; ++e) sum += alpha.value().at(e, 0);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  Tensor feats = Tensor::param(random_matrix(9, 2, rng), "f");
  check_grads({s, feats}, [&](Tape& t) {
    Tensor al = t.segment_softmax(s, offsets);
    Tensor weighted = t.segment_weighted_sum(al, feats, offsets);
    return t.sum(t.mul(weighted, weighted));
  });
}

TEST_CASE("softmax cross entropy value and gradient") {
  Rng rng(13);
  Tensor logits = Tensor::param(random_matrix(4, 3, rng), "logits");
  std::vector<i64> labels = {0, 2, 1, 2};
  Tape tape;
  Tensor loss = tape.softmax_cross_entropy(logits, labels);
  // Dense oracle.
  double expect = 0.0;
  for (i64 r = 0; r < 4; ++r) {
    double mx = logits.value().at(r, 0);
    for (i64 c = 1; c < 3; ++c) mx = std::max(mx, logits.value().at(r, c));
    double z = 0.0;
    for (i64 c = 0; c < 3; ++c) z += std::exp(logits.value().at(r, c) - mx);
    expect += -(logits.value().at(r, labels[r]) - mx - std::log(z));
  }
  expect /= 4.0;
  CHECK(loss.item() == doctest::Approx(expect).epsilon(1e-12));
  check_grads({logits}, [&](Tape& t) { return t.softmax_cross_entropy(logits, labels); });
}

TEST_CASE("bce with logits value and gradient") {
  Rng rng(14);
  Tensor logits = Tensor::param(random_matrix(6, 1, rng), "logits");
  Matrix targets(6, 1);
  for (i64 i = 0; i < 6; ++i) targets.at(i, 0) = i % 2;
  Tape tape;
  Tensor loss = tape.bce_with_logits(logits, targets);
  double expect = 0.0;
  for (i64 i = 0; i < 6; ++i) {
    const double x = logits.value().at(i, 0), y = targets.at(i, 0);
    expect += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
  }
  expect /= 6.0;
  CHECK(loss.item() == doctest::Approx(expect).epsilon(1e-12));
  check_grads({logits}, [&](Tape& t) { return t.bce_with_logits(logits, targets); });
  // Logit 0 gives ln 2.
  Tape t2;
  Tensor zero = Tensor::constant(Matrix(3, 1, 0.0));
  CHECK(t2.bce_with_logits(zero, Matrix(3, 1, 1.0)).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("dropout semantics") {
  Rng rng(15);
  Matrix m(1000, 1, 1.0);
  Tensor a = Tensor::param(m, "a");
  Tape tape;
  // Identity when not training or p = 0.
  CHECK(tape.dropout(a, 0.5, rng, false).value().data == m.data);
  CHECK(tape.dropout(a, 0.0, rng, true).value().data == m.data);
  // Inverted scaling: surviving entries are 1/(1-p).
  Tensor d = tape.dropout(a, 0.25, rng, true);
  i64 kept = 0;
  for (double v : d.value().data) {
    CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75).epsilon(1e-12)));
    kept += v != 0.0;
  }
  const double mean = 750.0, sigma = std::sqrt(1000 * 0.25 * 0.75);
  CHECK(std::abs(double(kept) - mean) < 3.0 * sigma);
  check_grads({a}, [&](Tape& t) {
    Rng r2(99);
    return t.sum(t.dropout(a, 0.3, r2, true));
  });
}

TEST_CASE("non-finite op output raises NumericError") {
  Tape tape;
  Tensor bad = Tensor::constant(Matrix(1, 1, -1.0));
  CHECK_THROWS_AS(tape.log(bad), NumericError);
}

TEST_CASE("activation accounting counts only gradient-bearing ops") {
  Tape tape;
  Tensor c1 = Tensor::constant(Matrix(4, 4, 1.0));
  Tensor c2 = Tensor::constant(Matrix(4, 4, 2.0));
  tape.add(c1, c2);
  CHECK(tape.activation_elements() == 0);
  Tensor p = Tensor::param(Matrix(4, 4, 1.0), "p");
  tape.add(p, c1);
  CHECK(tape.activation_elements() >= 16);
}

TEST_CASE("rng determinism and split independence") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(42);
  Rng d = c.split(1), e = c.split(2);
  CHECK(d.next_u64() != e.next_u64());
}
