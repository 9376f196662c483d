#pragma once

#include <map>
#include <memory>

#include "graphfm/encoder.hpp"
#include "graphfm/sampler.hpp"

namespace graphfm {

enum class MethodId { gbt, cca_ssg, bgrl, gca, graphmae, s2gae };

const char* method_name(MethodId m);
MethodId method_from_name(const std::string& name);
bool method_is_generative(MethodId m);

struct MethodConfig {
  MethodId id = MethodId::gbt;
  EncoderConfig encoder;
  double lr = 1e-3;
  double weight_decay = 1e-5;
  // Method hyperparameters, keyed by the search-space names.
  std::map<std::string, double> hp;

  double hp_get(const std::string& key, double fallback) const {
    auto it = hp.find(key);
    return it == hp.end() ? fallback : it->second;
  }
  // Fill encoder dims from the method's width hyperparameter and validate
  // every hyperparameter against its search range.
  void finalize(i64 feat_dim);
};

// Method defaults (encoder kind, widths, hyperparameters) before overrides.
MethodConfig default_method_config(MethodId id);

struct AugmentationSpec {
  double drop_edge_p = 0.0;
  double drop_feat_p = 0.0;
  u64 seed = 0;
};

// Independent Bernoulli edge removal + whole-column feature masking.
std::pair<SparseGraph, Matrix> augment(const SparseGraph& g, const Matrix& x,
                                       const AugmentationSpec& spec);

struct NodeMask {
  std::vector<i64> mask_index;
  Matrix targets;   // original rows at mask_index
  Matrix x_masked;  // rows at mask_index replaced by token_row
};
NodeMask mask_nodes(const Matrix& x, double mask_rate, u64 seed,
                    const std::vector<double>& token_row);

struct EdgeMask {
  SparseGraph visible;
  EdgeList masked;
};
EdgeMask mask_edges(const SparseGraph& g, double mask_ratio, u64 seed);

// --- loss functions (tape-recorded, gradient-checked) ---
nn::Tensor gbt_loss(nn::Tape& tape, nn::Tensor z1, nn::Tensor z2);
nn::Tensor cca_ssg_loss(nn::Tape& tape, nn::Tensor z1, nn::Tensor z2, double lambda);
nn::Tensor gca_infonce_loss(nn::Tape& tape, nn::Tensor u, nn::Tensor v, double tau);
nn::Tensor graphmae_loss(nn::Tape& tape, nn::Tensor recon, const Matrix& targets, int alpha_l);
nn::Tensor s2gae_loss(nn::Tape& tape, nn::Tensor pos_logits, nn::Tensor neg_logits);
// mean over rows of 2 - 2 cos(pred_i, target_i); target is the stop-gradient
// side.
nn::Tensor bgrl_cosine_loss(nn::Tape& tape, nn::Tensor pred, const Matrix& target);

struct TrainContext {
  const DatasetBundle* data = nullptr;
  const NormalizedAdjacency* adj = nullptr;
  const BatchPlan* plan = nullptr;  // null for full batch
};

// One SSL method instance: encoder + auxiliary parameters + optimizer state.
class SslMethod {
 public:
  virtual ~SslMethod() = default;
  static std::unique_ptr<SslMethod> create(const MethodConfig& cfg, const DatasetBundle& data,
                                           u64 seed);

  // One optimizer step; returns the loss value.
  double training_step(const TrainContext& ctx);
  // Full-batch embeddings with dropout off.
  virtual Matrix embed(const DatasetBundle& data, const NormalizedAdjacency& adj) = 0;

  // All parameters (including non-trainable EMA targets), stable order.
  virtual std::vector<nn::Tensor> all_parameters() = 0;
  std::vector<Matrix> snapshot();
  void restore(const std::vector<Matrix>& values);

  const MethodConfig& config() const { return cfg_; }
  std::size_t last_activation_elements() const { return last_act_; }
  i64 steps_taken() const { return step_count_; }

 protected:
  SslMethod(MethodConfig cfg, u64 seed);
  virtual nn::Tensor build_loss(nn::Tape& tape, const TrainContext& ctx) = 0;
  virtual std::vector<nn::Tensor> trainable_parameters() = 0;
  virtual void post_step() {}

  MethodConfig cfg_;
  Rng rng_;
  nn::AdamState adam_;
  std::size_t last_act_ = 0;
  i64 step_count_ = 0;
};

}  // namespace graphfm
