#pragma once

#include "graphfm/sampler.hpp"
#include "graphfm/tensor.hpp"

namespace graphfm {

enum class EncoderKind { gcn, gat, mlp };
enum class Activation { relu, prelu, elu };

const char* encoder_kind_name(EncoderKind k);
EncoderKind encoder_kind_from_name(const std::string& name);
const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct EncoderConfig {
  EncoderKind kind = EncoderKind::gcn;
  i64 num_layers = 2;
  std::vector<i64> hidden_dims;  // length num_layers
  Activation activation = Activation::prelu;
  // GAT only.
  i64 num_heads = 1;
  double attn_drop = 0.0;
  double in_drop = 0.0;
  double negative_slope = 0.2;

  void validate() const;
  i64 output_dim() const;
};

// K-layer message-passing encoder over GCN / GAT / MLP layers. Parameters
// are owned by the encoder; forward records onto the caller's tape.
class Encoder {
 public:
  Encoder(EncoderConfig cfg, i64 in_dim, Rng& init_rng, const std::string& prefix = "enc");

  const EncoderConfig& config() const { return cfg_; }
  i64 in_dim() const { return in_dim_; }
  std::vector<nn::Tensor> parameters() const;

  // views.size() must equal num_layers; views[l] is the block consumed by
  // layer l (innermost adjacency first).
  nn::Tensor forward(nn::Tape& tape, const std::vector<nn::CsrView>& views, nn::Tensor x,
                     bool training, Rng& rng) const;
  // Per-layer outputs (post-activation for hidden layers), for methods that
  // concatenate intermediate representations.
  std::vector<nn::Tensor> forward_layers(nn::Tape& tape, const std::vector<nn::CsrView>& views,
                                         nn::Tensor x, bool training, Rng& rng) const;

 private:
  nn::Tensor gat_layer(nn::Tape& tape, const nn::CsrView& view, nn::Tensor h, i64 layer,
                       bool training, Rng& rng) const;
  nn::Tensor apply_activation(nn::Tape& tape, nn::Tensor h, i64 layer) const;

  EncoderConfig cfg_;
  i64 in_dim_ = 0;
  // GCN/MLP: weights_[l], biases_[l]. GAT: per layer, per head weight and
  // the two attention vectors.
  std::vector<nn::Tensor> weights_;
  std::vector<nn::Tensor> biases_;
  std::vector<std::vector<nn::Tensor>> gat_w_;       // [layer][head]
  std::vector<std::vector<nn::Tensor>> gat_a_src_;
  std::vector<std::vector<nn::Tensor>> gat_a_dst_;
  std::vector<nn::Tensor> prelu_slopes_;
};

// Views for full-batch execution: K copies of the full normalized adjacency.
std::vector<nn::CsrView> full_views(const NormalizedAdjacency& adj, i64 num_layers,
                                    std::vector<i64>& identity_scratch);

// Views from a batch plan, ordered for forward execution (blocks[K-1] first).
std::vector<nn::CsrView> plan_views(const BatchPlan& plan);

// Convenience wrappers used throughout training and evaluation.
Matrix encoder_forward_full(const Encoder& enc, const NormalizedAdjacency& adj, const Matrix& x);

}  // namespace graphfm
