#include "graphfm/encoder.hpp"

#include <numeric>

namespace graphfm {

const char* encoder_kind_name(EncoderKind k) {
  switch (k) {
    case EncoderKind::gcn: return "gcn";
    case EncoderKind::gat: return "gat";
    case EncoderKind::mlp: return "mlp";
  }
  return "?";
}

EncoderKind encoder_kind_from_name(const std::string& name) {
  if (name == "gcn") return EncoderKind::gcn;
  if (name == "gat") return EncoderKind::gat;
  if (name == "mlp") return EncoderKind::mlp;
  throw ConfigError("unknown encoder kind '" + name + "' (expected gcn, gat, mlp)");
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::prelu: return "prelu";
    case Activation::elu: return "elu";
  }
  return "?";
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "prelu") return Activation::prelu;
  if (name == "elu") return Activation::elu;
  throw ConfigError("unknown activation '" + name + "' (expected relu, prelu, elu)");
}

void EncoderConfig::validate() const {
  if (num_layers < 1) throw ConfigError("encoder: num_layers must be >= 1");
  if (i64(hidden_dims.size()) != num_layers)
    throw ConfigError("encoder: hidden_dims length must equal num_layers");
  for (i64 d : hidden_dims)
    if (d < 1) throw ConfigError("encoder: hidden dims must be positive");
  if (kind == EncoderKind::gat) {
    if (num_heads < 1) throw ConfigError("encoder: gat num_heads must be >= 1");
    if (attn_drop < 0 || attn_drop > 1 || in_drop < 0 || in_drop > 1)
      throw ConfigError("encoder: gat dropout probabilities must be in [0, 1]");
  }
}

i64 EncoderConfig::output_dim() const { return hidden_dims.back(); }

Encoder::Encoder(EncoderConfig cfg, i64 in_dim, Rng& init_rng, const std::string& prefix)
    : cfg_(std::move(cfg)), in_dim_(in_dim) {
  cfg_.validate();
  i64 cur = in_dim;
  for (i64 l = 0; l < cfg_.num_layers; ++l) {
    const i64 out = cfg_.hidden_dims[std::size_t(l)];
    const std::string lp = prefix + ".l" + std::to_string(l);
    if (cfg_.kind == EncoderKind::gat) {
      gat_w_.emplace_back();
      gat_a_src_.emplace_back();
      gat_a_dst_.emplace_back();
      for (i64 h = 0; h < cfg_.num_heads; ++h) {
        const std::string hp = lp + ".h" + std::to_string(h);
        gat_w_.back().push_back(nn::Tensor::param(nn::xavier_uniform(cur, out, init_rng), hp + ".W"));
        gat_a_src_.back().push_back(nn::Tensor::param(nn::xavier_uniform(1, out, init_rng), hp + ".asrc"));
        gat_a_dst_.back().push_back(nn::Tensor::param(nn::xavier_uniform(1, out, init_rng), hp + ".adst"));
      }
      const bool last = l == cfg_.num_layers - 1;
      const i64 bias_dim = last ? out : out * cfg_.num_heads;
      biases_.push_back(nn::Tensor::param(Matrix(1, bias_dim), lp + ".b"));
      cur = bias_dim;
    } else {
      weights_.push_back(nn::Tensor::param(nn::xavier_uniform(cur, out, init_rng), lp + ".W"));
      biases_.push_back(nn::Tensor::param(Matrix(1, out), lp + ".b"));
      cur = out;
    }
    if (cfg_.activation == Activation::prelu && l < cfg_.num_layers - 1)
      prelu_slopes_.push_back(nn::Tensor::param(Matrix(1, 1, 0.25), lp + ".slope"));
  }
}

std::vector<nn::Tensor> Encoder::parameters() const {
  std::vector<nn::Tensor> out;
  for (i64 l = 0; l < cfg_.num_layers; ++l) {
    if (cfg_.kind == EncoderKind::gat) {
      for (i64 h = 0; h < cfg_.num_heads; ++h) {
        out.push_back(gat_w_[std::size_t(l)][std::size_t(h)]);
        out.push_back(gat_a_src_[std::size_t(l)][std::size_t(h)]);
        out.push_back(gat_a_dst_[std::size_t(l)][std::size_t(h)]);
      }
    } else {
      out.push_back(weights_[std::size_t(l)]);
    }
    out.push_back(biases_[std::size_t(l)]);
  }
  for (const auto& s : prelu_slopes_) out.push_back(s);
  return out;
}

nn::Tensor Encoder::apply_activation(nn::Tape& tape, nn::Tensor h, i64 layer) const {
  switch (cfg_.activation) {
    case Activation::relu: return tape.relu(h);
    case Activation::elu: return tape.elu(h);
    case Activation::prelu: return tape.prelu(h, prelu_slopes_[std::size_t(layer)]);
  }
  return h;
}

nn::Tensor Encoder::gat_layer(nn::Tape& tape, const nn::CsrView& view, nn::Tensor h, i64 layer,
                              bool training, Rng& rng) const {
  const bool last = layer == cfg_.num_layers - 1;
  std::vector<i64> offsets(view.offsets, view.offsets + view.n_rows + 1);
  std::vector<i64> edge_cols(view.cols, view.cols + view.nnz());
  std::vector<i64> edge_dst(std::size_t(view.nnz()));
  for (i64 r = 0; r < view.n_rows; ++r)
    for (i64 e = view.offsets[r]; e < view.offsets[r + 1]; ++e)
      edge_dst[std::size_t(e)] = view.dst_pos[r];

  h = tape.dropout(h, cfg_.in_drop, rng, training);
  std::vector<nn::Tensor> head_outs;
  for (i64 hd = 0; hd < cfg_.num_heads; ++hd) {
    nn::Tensor hw = tape.matmul(h, gat_w_[std::size_t(layer)][std::size_t(hd)]);
    nn::Tensor s_src = tape.matmul(hw, gat_a_src_[std::size_t(layer)][std::size_t(hd)], false, true);
    nn::Tensor s_dst = tape.matmul(hw, gat_a_dst_[std::size_t(layer)][std::size_t(hd)], false, true);
    nn::Tensor e_src = tape.gather_rows(s_src, edge_cols);
    nn::Tensor e_dst = tape.gather_rows(s_dst, edge_dst);
    nn::Tensor scores = tape.leaky_relu(tape.add(e_src, e_dst), cfg_.negative_slope);
    nn::Tensor alpha = tape.segment_softmax(scores, offsets);
    alpha = tape.dropout(alpha, cfg_.attn_drop, rng, training);
    nn::Tensor feats = tape.gather_rows(hw, edge_cols);
    head_outs.push_back(tape.segment_weighted_sum(alpha, feats, offsets));
  }
  nn::Tensor out;
  if (!last && cfg_.num_heads > 1) {
    out = tape.concat_cols(head_outs);
  } else if (cfg_.num_heads > 1) {
    out = head_outs[0];
    for (std::size_t i = 1; i < head_outs.size(); ++i) out = tape.add(out, head_outs[std::size_t(i)]);
    out = tape.scale(out, 1.0 / double(cfg_.num_heads));
  } else {
    out = head_outs[0];
  }
  return tape.add_rowvec(out, biases_[std::size_t(layer)]);
}

std::vector<nn::Tensor> Encoder::forward_layers(nn::Tape& tape, const std::vector<nn::CsrView>& views,
                                                nn::Tensor x, bool training, Rng& rng) const {
  if (cfg_.kind != EncoderKind::mlp && i64(views.size()) != cfg_.num_layers)
    throw NumericError("encoder: block count does not match layer count");
  std::vector<nn::Tensor> outs;
  nn::Tensor h = x;
  for (i64 l = 0; l < cfg_.num_layers; ++l) {
    const bool last = l == cfg_.num_layers - 1;
    if (cfg_.kind == EncoderKind::gat) {
      h = gat_layer(tape, views[std::size_t(l)], h, l, training, rng);
    } else if (cfg_.kind == EncoderKind::gcn) {
      h = tape.matmul(h, weights_[std::size_t(l)]);
      h = tape.spmm(views[std::size_t(l)], h);
      h = tape.add_rowvec(h, biases_[std::size_t(l)]);
    } else {
      // MLP ignores the adjacency but still restricts rows to the layer's
      // output node set (a prefix of the input set by construction).
      h = tape.matmul(h, weights_[std::size_t(l)]);
      h = tape.add_rowvec(h, biases_[std::size_t(l)]);
      if (!views.empty() && h.rows() != views[std::size_t(l)].n_rows) {
        std::vector<i64> prefix(std::size_t(views[std::size_t(l)].n_rows));
        std::iota(prefix.begin(), prefix.end(), 0);
        h = tape.gather_rows(h, prefix);
      }
    }
    if (!last) h = apply_activation(tape, h, l);
    outs.push_back(h);
  }
  return outs;
}

nn::Tensor Encoder::forward(nn::Tape& tape, const std::vector<nn::CsrView>& views, nn::Tensor x,
                            bool training, Rng& rng) const {
  return forward_layers(tape, views, x, training, rng).back();
}

std::vector<nn::CsrView> full_views(const NormalizedAdjacency& adj, i64 num_layers,
                                    std::vector<i64>& identity_scratch) {
  identity_scratch.resize(std::size_t(adj.num_nodes));
  std::iota(identity_scratch.begin(), identity_scratch.end(), 0);
  nn::CsrView v = nn::full_view(adj);
  v.dst_pos = identity_scratch.data();
  return std::vector<nn::CsrView>(std::size_t(num_layers), v);
}

std::vector<nn::CsrView> plan_views(const BatchPlan& plan) {
  std::vector<nn::CsrView> views;
  const i64 k = plan.num_layers();
  for (i64 l = 0; l < k; ++l) views.push_back(plan.blocks[std::size_t(k - 1 - l)].view());
  return views;
}

Matrix encoder_forward_full(const Encoder& enc, const NormalizedAdjacency& adj, const Matrix& x) {
  nn::Tape tape;
  Rng rng(0);
  std::vector<i64> scratch;
  auto views = full_views(adj, enc.config().num_layers, scratch);
  nn::Tensor h = enc.forward(tape, views, nn::Tensor::constant(x), false, rng);
  Matrix out = h.value();
  tape.clear();
  return out;
}

}  // namespace graphfm
