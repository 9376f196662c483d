#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "graphfm/graph.hpp"
#include "graphfm/matrix.hpp"

namespace graphfm::nn {

// Restricted view of the normalized adjacency: rows indexed by the output
// node set, columns by the input node set. dst_pos[r] is the column position
// of the row node itself (self-loops exist by construction).
struct CsrView {
  i64 n_rows = 0;
  i64 n_cols = 0;
  const i64* offsets = nullptr;
  const i64* cols = nullptr;
  const double* vals = nullptr;
  const i64* dst_pos = nullptr;  // length n_rows, index into [0, n_cols)
  i64 nnz() const { return offsets[n_rows]; }
};

CsrView full_view(const NormalizedAdjacency& adj);

struct TensorNode {
  Matrix value;
  Matrix grad;  // allocated lazily
  bool requires_grad = false;
  std::string name;

  void ensure_grad() {
    if (grad.rows != value.rows || grad.cols != value.cols)
      grad = Matrix(value.rows, value.cols);
  }
  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

  static Tensor param(Matrix value, std::string name) {
    auto n = std::make_shared<TensorNode>();
    n->value = std::move(value);
    n->requires_grad = true;
    n->name = std::move(name);
    return Tensor(std::move(n));
  }
  static Tensor constant(Matrix value) {
    auto n = std::make_shared<TensorNode>();
    n->value = std::move(value);
    return Tensor(std::move(n));
  }

  bool defined() const { return node_ != nullptr; }
  i64 rows() const { return node_->value.rows; }
  i64 cols() const { return node_->value.cols; }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  const std::string& name() const { return node_->name; }
  TensorNode* node() const { return node_.get(); }
  std::shared_ptr<TensorNode> node_ptr() const { return node_; }
  double item() const {
    if (rows() != 1 || cols() != 1) throw NumericError("item: tensor is not scalar");
    return node_->value.data[0];
  }

 private:
  std::shared_ptr<TensorNode> node_;
};

// Reverse-mode tape. One tape per trial; ops append backward closures which
// run in exact reverse order. Also accounts the activation elements retained
// for backward (used by the efficiency profiler).
class Tape {
 public:
  // --- primitive forward ops ---
  Tensor matmul(Tensor a, Tensor b, bool ta = false, bool tb = false);
  Tensor spmm(const CsrView& adj, Tensor x);
  Tensor add(Tensor a, Tensor b);
  Tensor sub(Tensor a, Tensor b);
  Tensor mul(Tensor a, Tensor b);  // elementwise
  Tensor add_rowvec(Tensor a, Tensor bias);
  Tensor scale(Tensor a, double s);
  Tensor add_scalar(Tensor a, double s);
  Tensor relu(Tensor a);
  Tensor leaky_relu(Tensor a, double slope);
  Tensor elu(Tensor a);
  Tensor prelu(Tensor a, Tensor slope);  // slope: 1x1 learnable
  Tensor dropout(Tensor a, double p, Rng& rng, bool training);
  Tensor row_l2_normalize(Tensor a, double eps = 1e-12);
  Tensor column_standardize(Tensor a, double eps = 1e-8);
  Tensor transpose(Tensor a);
  Tensor sum(Tensor a);
  Tensor mean(Tensor a);
  Tensor exp(Tensor a);
  Tensor log(Tensor a);
  Tensor pow_int(Tensor a, int k);
  Tensor gather_rows(Tensor a, const std::vector<i64>& idx);
  Tensor concat_cols(const std::vector<Tensor>& parts);
  Tensor broadcast_row(Tensor row, i64 n);
  // Softmax over segments given by offsets (length n_segments + 1) of a
  // column vector of scores.
  Tensor segment_softmax(Tensor scores, const std::vector<i64>& offsets);
  // out[r] = sum_{e in segment r} alpha[e] * feats[e].
  Tensor segment_weighted_sum(Tensor alpha, Tensor feats, const std::vector<i64>& offsets);
  // Fused losses.
  Tensor softmax_cross_entropy(Tensor logits, const std::vector<i64>& labels);
  Tensor bce_with_logits(Tensor logits, const Matrix& targets);

  void backward(Tensor loss);
  void clear();

  // Elements retained for backward since the last clear().
  std::size_t activation_elements() const { return act_elems_; }
  std::size_t num_steps() const { return steps_.size(); }

 private:
  struct Step {
    std::shared_ptr<TensorNode> out;
    std::function<void(const Matrix&)> back;  // receives d(loss)/d(out)
    const char* op;
  };
  std::vector<Step> steps_;
  std::size_t act_elems_ = 0;

  Tensor emit(Matrix out, bool requires_grad, std::function<void(const Matrix&)> back,
              const char* op, std::size_t extra_retained = 0);
};

// Classic Adam with weight decay applied as an additive L2 gradient term.
struct AdamState {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  i64 t = 0;
  std::map<TensorNode*, std::pair<Matrix, Matrix>> moments;  // (m, v)
};

void adam_step(AdamState& state, const std::vector<Tensor>& params);

// Xavier-uniform init for weights.
Matrix xavier_uniform(i64 fan_in, i64 fan_out, Rng& rng);

// Central finite-difference gradient of f with respect to p, for tests.
Matrix finite_difference(Tensor p, const std::function<double()>& f, double eps = 1e-4);

}  // namespace graphfm::nn
