#include "graphfm/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <unordered_map>
#include <unordered_set>

#include "graphfm/search_space.hpp"

namespace graphfm {

const char* method_name(MethodId m) {
  switch (m) {
    case MethodId::gbt: return "gbt";
    case MethodId::cca_ssg: return "cca_ssg";
    case MethodId::bgrl: return "bgrl";
    case MethodId::gca: return "gca";
    case MethodId::graphmae: return "graphmae";
    case MethodId::s2gae: return "s2gae";
  }
  return "?";
}

MethodId method_from_name(const std::string& name) {
  if (name == "gbt") return MethodId::gbt;
  if (name == "cca_ssg") return MethodId::cca_ssg;
  if (name == "bgrl") return MethodId::bgrl;
  if (name == "gca") return MethodId::gca;
  if (name == "graphmae") return MethodId::graphmae;
  if (name == "s2gae") return MethodId::s2gae;
  throw ConfigError("unknown method '" + name +
                    "' (expected gbt, cca_ssg, bgrl, gca, graphmae, s2gae)");
}

bool method_is_generative(MethodId m) {
  return m == MethodId::graphmae || m == MethodId::s2gae;
}

MethodConfig default_method_config(MethodId id) {
  MethodConfig cfg;
  cfg.id = id;
  cfg.lr = 1e-3;
  cfg.weight_decay = 1e-5;
  cfg.encoder.kind = id == MethodId::graphmae ? EncoderKind::gat : EncoderKind::gcn;
  cfg.encoder.activation = id == MethodId::graphmae ? Activation::elu : Activation::prelu;
  cfg.encoder.num_layers = 2;
  switch (id) {
    case MethodId::gbt:
      cfg.hp = {{"emb_dim", 256}, {"p_x", 0.1}, {"p_e", 0.2}};
      break;
    case MethodId::cca_ssg:
      cfg.hp = {{"hid_dim", 256}, {"dfr", 0.2}, {"der", 0.2}, {"lambda", 1e-3}};
      break;
    case MethodId::bgrl:
      cfg.hp = {{"drop_edge_p_1", 0.2}, {"drop_edge_p_2", 0.3}, {"drop_feat_p_1", 0.2},
                {"drop_feat_p_2", 0.3}, {"ema_decay", 0.99},    {"pred_dim", 256}};
      break;
    case MethodId::gca:
      cfg.hp = {{"num_hidden", 256},       {"drop_edge_rate_1", 0.2}, {"drop_edge_rate_2", 0.3},
                {"drop_feature_rate_1", 0.2}, {"drop_feature_rate_2", 0.3}, {"tau", 0.5},
                {"adaptive", 0}};
      break;
    case MethodId::graphmae:
      cfg.hp = {{"num_heads", 4}, {"num_hidden", 256},     {"attn_drop", 0.1},
                {"in_drop", 0.2}, {"negative_slope", 0.2}, {"mask_rate", 0.5},
                {"drop_edge_rate", 0.0}, {"alpha_l", 2}};
      break;
    case MethodId::s2gae:
      cfg.hp = {{"dim_hidden", 256}, {"decode_channels", 256}, {"decode_layers", 2},
                {"mask_ratio", 0.5}};
      break;
  }
  return cfg;
}

namespace {

const char* width_key(MethodId id) {
  switch (id) {
    case MethodId::gbt: return "emb_dim";
    case MethodId::cca_ssg: return "hid_dim";
    case MethodId::gca: return "num_hidden";
    case MethodId::graphmae: return "num_hidden";
    case MethodId::s2gae: return "dim_hidden";
    case MethodId::bgrl: return nullptr;
  }
  return nullptr;
}

}  // namespace

void MethodConfig::finalize(i64 feat_dim) {
  (void)feat_dim;
  const auto& space = method_search_space(id);
  const auto& extra = method_extra_params(id);
  for (const auto& [key, value] : hp) {
    const ParamSpec* spec = find_param(space, key);
    if (spec == nullptr) spec = find_param(extra, key);
    if (spec == nullptr)
      throw ConfigError("unknown hyperparameter '" + key + "' for method " + method_name(id));
    if (id == MethodId::graphmae && key == "replace_rate")
      std::cerr << "warning: replace_rate is accepted but ignored by graphmae\n";
    if (!spec->contains(value))
      throw ConfigError("hyperparameter " + key + " = " + std::to_string(value) +
                        " out of range; expected " + spec->describe());
  }
  const char* wk = width_key(id);
  const i64 width = wk != nullptr ? i64(hp_get(wk, 256)) : 256;
  if (encoder.hidden_dims.empty())
    encoder.hidden_dims.assign(std::size_t(encoder.num_layers), width);
  if (id == MethodId::graphmae) {
    encoder.num_heads = i64(hp_get("num_heads", 4));
    encoder.attn_drop = hp_get("attn_drop", 0.1);
    encoder.in_drop = hp_get("in_drop", 0.2);
    encoder.negative_slope = hp_get("negative_slope", 0.2);
  }
  encoder.validate();
  if (lr <= 0) throw ConfigError("lr must be positive");
  if (weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
}

std::pair<SparseGraph, Matrix> augment(const SparseGraph& g, const Matrix& x,
                                       const AugmentationSpec& spec) {
  if (spec.drop_edge_p < 0 || spec.drop_edge_p > 1 || spec.drop_feat_p < 0 || spec.drop_feat_p > 1)
    throw ConfigError("augment: probabilities must be in [0, 1]");
  Rng rng(spec.seed);
  EdgeList kept;
  for (const auto& e : g.edges())
    if (!rng.bernoulli(spec.drop_edge_p)) kept.push_back(e);
  SparseGraph g2 = build_csr(kept, g.num_nodes);
  Matrix x2 = x;
  for (i64 c = 0; c < x.cols; ++c) {
    if (rng.bernoulli(spec.drop_feat_p))
      for (i64 r = 0; r < x.rows; ++r) x2.at(r, c) = 0.0;
  }
  return {std::move(g2), std::move(x2)};
}

NodeMask mask_nodes(const Matrix& x, double mask_rate, u64 seed,
                    const std::vector<double>& token_row) {
  if (mask_rate < 0 || mask_rate > 1) throw ConfigError("mask_nodes: mask_rate outside [0, 1]");
  if (i64(token_row.size()) != x.cols) throw ConfigError("mask_nodes: token row dimension");
  const i64 n = x.rows;
  const i64 count = i64(std::floor(mask_rate * double(n)));
  std::vector<i64> perm(std::size_t(n), 0);
  for (i64 i = 0; i < n; ++i) perm[std::size_t(i)] = i;
  Rng rng(seed);
  for (i64 i = n - 1; i > 0; --i)
    std::swap(perm[std::size_t(i)], perm[std::size_t(rng.uniform_int(i + 1))]);
  NodeMask out;
  out.mask_index.assign(perm.begin(), perm.begin() + count);
  std::sort(out.mask_index.begin(), out.mask_index.end());
  out.targets = Matrix(count, x.cols);
  out.x_masked = x;
  for (i64 i = 0; i < count; ++i) {
    const i64 r = out.mask_index[std::size_t(i)];
    std::copy(x.row(r), x.row(r) + x.cols, out.targets.row(i));
    std::copy(token_row.begin(), token_row.end(), out.x_masked.row(r));
  }
  return out;
}

EdgeMask mask_edges(const SparseGraph& g, double mask_ratio, u64 seed) {
  if (mask_ratio <= 0 || mask_ratio >= 1) throw ConfigError("mask_edges: mask_ratio outside (0, 1)");
  if (g.num_edges == 0) throw DataError("mask_edges: graph has no edges");
  EdgeList all = g.edges();
  Rng rng(seed);
  for (i64 i = i64(all.size()) - 1; i > 0; --i)
    std::swap(all[std::size_t(i)], all[std::size_t(rng.uniform_int(i + 1))]);
  const i64 count = i64(std::floor(mask_ratio * double(all.size())));
  EdgeMask out;
  out.masked.assign(all.begin(), all.begin() + count);
  EdgeList kept(all.begin() + count, all.end());
  out.visible = build_csr(kept, g.num_nodes);
  return out;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

nn::Tensor gbt_loss(nn::Tape& tape, nn::Tensor z1, nn::Tensor z2) {
  if (z1.rows() != z2.rows() || z1.cols() != z2.cols())
    throw NumericError("gbt_loss: shape mismatch");
  if (z1.rows() < 2) throw NumericError("gbt_loss: need at least 2 rows");
  const i64 n = z1.rows(), l = z1.cols();
  nn::Tensor c = tape.scale(tape.matmul(tape.column_standardize(z1), tape.column_standardize(z2),
                                        true, false),
                            1.0 / double(n));
  nn::Tensor d = tape.sub(c, nn::Tensor::constant(Matrix::identity(l)));
  nn::Tensor dsq = tape.mul(d, d);
  Matrix diag = Matrix::identity(l);
  Matrix off(l, l, 1.0);
  for (i64 i = 0; i < l; ++i) off.at(i, i) = 0.0;
  nn::Tensor on_term = tape.sum(tape.mul(dsq, nn::Tensor::constant(diag)));
  nn::Tensor off_term = tape.sum(tape.mul(dsq, nn::Tensor::constant(off)));
  return tape.add(on_term, tape.scale(off_term, 1.0 / double(l)));
}

nn::Tensor cca_ssg_loss(nn::Tape& tape, nn::Tensor z1, nn::Tensor z2, double lambda) {
  if (z1.rows() != z2.rows() || z1.cols() != z2.cols())
    throw NumericError("cca_ssg_loss: shape mismatch");
  if (lambda < 0) throw ConfigError("cca_ssg_loss: lambda must be >= 0");
  const i64 n = z1.rows(), l = z1.cols();
  const double inv_sqrt_n = 1.0 / std::sqrt(double(n));
  nn::Tensor zt1 = tape.scale(tape.column_standardize(z1), inv_sqrt_n);
  nn::Tensor zt2 = tape.scale(tape.column_standardize(z2), inv_sqrt_n);
  nn::Tensor diff = tape.sub(zt1, zt2);
  nn::Tensor invariance = tape.sum(tape.mul(diff, diff));
  nn::Tensor eye = nn::Tensor::constant(Matrix::identity(l));
  nn::Tensor c1 = tape.sub(tape.matmul(zt1, zt1, true, false), eye);
  nn::Tensor c2 = tape.sub(tape.matmul(zt2, zt2, true, false), eye);
  nn::Tensor dec = tape.add(tape.sum(tape.mul(c1, c1)), tape.sum(tape.mul(c2, c2)));
  return tape.add(invariance, tape.scale(dec, lambda));
}

nn::Tensor gca_infonce_loss(nn::Tape& tape, nn::Tensor u, nn::Tensor v, double tau) {
  if (tau <= 0) throw ConfigError("gca_infonce_loss: tau must be positive");
  if (u.rows() != v.rows() || u.cols() != v.cols())
    throw NumericError("gca_infonce_loss: shape mismatch");
  const i64 n = u.rows();
  nn::Tensor un = tape.row_l2_normalize(u);
  nn::Tensor vn = tape.row_l2_normalize(v);
  Matrix diag = Matrix::identity(n);
  Matrix off(n, n, 1.0);
  for (i64 i = 0; i < n; ++i) off.at(i, i) = 0.0;
  nn::Tensor diag_c = nn::Tensor::constant(diag);
  nn::Tensor off_c = nn::Tensor::constant(off);
  nn::Tensor ones = nn::Tensor::constant(Matrix(n, 1, 1.0));
  auto direction = [&](nn::Tensor a, nn::Tensor b) {
    nn::Tensor s_ab = tape.scale(tape.matmul(a, b, false, true), 1.0 / tau);
    nn::Tensor s_aa = tape.scale(tape.matmul(a, a, false, true), 1.0 / tau);
    nn::Tensor denom = tape.matmul(tape.add(tape.exp(s_ab), tape.mul(tape.exp(s_aa), off_c)), ones);
    nn::Tensor pos = tape.matmul(tape.mul(s_ab, diag_c), ones);
    return tape.scale(tape.sum(tape.sub(tape.log(denom), pos)), 1.0 / double(n));
  };
  return tape.scale(tape.add(direction(un, vn), direction(vn, un)), 0.5);
}

nn::Tensor graphmae_loss(nn::Tape& tape, nn::Tensor recon, const Matrix& targets, int alpha_l) {
  if (alpha_l < 1) throw ConfigError("graphmae_loss: alpha_l must be >= 1");
  if (recon.rows() == 0 || targets.rows == 0) throw NumericError("graphmae_loss: empty mask set");
  if (recon.rows() != targets.rows || recon.cols() != targets.cols)
    throw NumericError("graphmae_loss: shape mismatch");
  nn::Tensor rn = tape.row_l2_normalize(recon, 1e-12);
  Matrix tn = targets;
  for (i64 r = 0; r < tn.rows; ++r) {
    double s = 0.0;
    for (i64 c = 0; c < tn.cols; ++c) s += tn.at(r, c) * tn.at(r, c);
    const double nrm = std::max(std::sqrt(s), 1e-12);
    for (i64 c = 0; c < tn.cols; ++c) tn.at(r, c) /= nrm;
  }
  nn::Tensor cos = tape.matmul(tape.mul(rn, nn::Tensor::constant(tn)),
                               nn::Tensor::constant(Matrix(targets.cols, 1, 1.0)));
  nn::Tensor one_minus = tape.sub(nn::Tensor::constant(Matrix(targets.rows, 1, 1.0)), cos);
  return tape.mean(tape.pow_int(one_minus, alpha_l));
}

nn::Tensor s2gae_loss(nn::Tape& tape, nn::Tensor pos_logits, nn::Tensor neg_logits) {
  const i64 np = pos_logits.rows() * pos_logits.cols();
  const i64 nn_ = neg_logits.rows() * neg_logits.cols();
  if (np == 0 || nn_ == 0) throw NumericError("s2gae_loss: empty logit set");
  nn::Tensor lp = tape.bce_with_logits(pos_logits, Matrix(pos_logits.rows(), pos_logits.cols(), 1.0));
  nn::Tensor ln = tape.bce_with_logits(neg_logits, Matrix(neg_logits.rows(), neg_logits.cols(), 0.0));
  return tape.scale(tape.add(tape.scale(lp, double(np)), tape.scale(ln, double(nn_))),
                    1.0 / double(np + nn_));
}

nn::Tensor bgrl_cosine_loss(nn::Tape& tape, nn::Tensor pred, const Matrix& target) {
  if (pred.rows() != target.rows || pred.cols() != target.cols)
    throw NumericError("bgrl_cosine_loss: shape mismatch");
  const i64 n = pred.rows();
  nn::Tensor pn = tape.row_l2_normalize(pred);
  Matrix tn = target;
  for (i64 r = 0; r < tn.rows; ++r) {
    double s = 0.0;
    for (i64 c = 0; c < tn.cols; ++c) s += tn.at(r, c) * tn.at(r, c);
    const double nrm = std::max(std::sqrt(s), 1e-12);
    for (i64 c = 0; c < tn.cols; ++c) tn.at(r, c) /= nrm;
  }
  nn::Tensor cos_sum = tape.sum(tape.mul(pn, nn::Tensor::constant(tn)));
  return tape.add_scalar(tape.scale(cos_sum, -2.0 / double(n)), 2.0);
}

// ---------------------------------------------------------------------------
// View construction with per-step augmentation
// ---------------------------------------------------------------------------

namespace {

double pair_hash01(u64 salt, i64 u, i64 v) {
  if (u > v) std::swap(u, v);
  const u64 h = splitmix64(splitmix64(salt ^ u64(u)) ^ (u64(v) * 0x9e3779b97f4a7c15ULL));
  return double(h >> 11) * 0x1.0p-53;
}

// Everything one encoder forward needs, with storage owned here.
struct ViewSet {
  std::vector<BatchBlock> blocks;
  NormalizedAdjacency adj_storage;
  std::vector<i64> identity;
  std::vector<nn::CsrView> views;
  Matrix features;
  std::vector<i64> out_nodes;  // global ids of the output rows
};

void drop_feature_columns(Matrix& x, double p, Rng& rng) {
  for (i64 c = 0; c < x.cols; ++c)
    if (rng.bernoulli(p))
      for (i64 r = 0; r < x.rows; ++r) x.at(r, c) = 0.0;
}

// Copy a plan's blocks, dropping non-self entries whose undirected pair
// hashes below p (consistent across all blocks of the view).
std::vector<BatchBlock> drop_plan_edges(const BatchPlan& plan, double p, u64 salt) {
  std::vector<BatchBlock> out;
  const i64 k = plan.num_layers();
  for (i64 l = 0; l < k; ++l) {
    const BatchBlock& src = plan.blocks[std::size_t(l)];
    const auto& rows = plan.layer_nodes[std::size_t(l)];
    const auto& cols = plan.layer_nodes[std::size_t(l + 1)];
    BatchBlock dst;
    dst.n_rows = src.n_rows;
    dst.n_cols = src.n_cols;
    dst.dst_pos = src.dst_pos;
    dst.offsets.push_back(0);
    for (i64 r = 0; r < src.n_rows; ++r) {
      const i64 gu = rows[std::size_t(r)];
      for (i64 e = src.offsets[std::size_t(r)]; e < src.offsets[std::size_t(r + 1)]; ++e) {
        const i64 gv = cols[std::size_t(src.cols[std::size_t(e)])];
        if (gu != gv && p > 0 && pair_hash01(salt, gu, gv) < p) continue;
        dst.cols.push_back(src.cols[std::size_t(e)]);
        dst.vals.push_back(src.vals[std::size_t(e)]);
      }
      dst.offsets.push_back(i64(dst.cols.size()));
    }
    out.push_back(std::move(dst));
  }
  return out;
}

// Remove an explicit set of undirected edges from a plan's blocks.
std::vector<BatchBlock> remove_plan_edges(const BatchPlan& plan, const EdgeList& edges) {
  std::unordered_set<u64> dead;
  for (const auto& [u, v] : edges) {
    const i64 a = std::min(u, v), b = std::max(u, v);
    dead.insert(u64(a) * 0x100000001ULL ^ u64(b));
  }
  std::vector<BatchBlock> out;
  const i64 k = plan.num_layers();
  for (i64 l = 0; l < k; ++l) {
    const BatchBlock& src = plan.blocks[std::size_t(l)];
    const auto& rows = plan.layer_nodes[std::size_t(l)];
    const auto& cols = plan.layer_nodes[std::size_t(l + 1)];
    BatchBlock dst;
    dst.n_rows = src.n_rows;
    dst.n_cols = src.n_cols;
    dst.dst_pos = src.dst_pos;
    dst.offsets.push_back(0);
    for (i64 r = 0; r < src.n_rows; ++r) {
      const i64 gu = rows[std::size_t(r)];
      for (i64 e = src.offsets[std::size_t(r)]; e < src.offsets[std::size_t(r + 1)]; ++e) {
        const i64 gv = cols[std::size_t(src.cols[std::size_t(e)])];
        const i64 a = std::min(gu, gv), b = std::max(gu, gv);
        if (gu != gv && dead.count(u64(a) * 0x100000001ULL ^ u64(b))) continue;
        dst.cols.push_back(src.cols[std::size_t(e)]);
        dst.vals.push_back(src.vals[std::size_t(e)]);
      }
      dst.offsets.push_back(i64(dst.cols.size()));
    }
    out.push_back(std::move(dst));
  }
  return out;
}

void finish_plan_viewset(ViewSet& vs, const BatchPlan& plan) {
  const i64 k = plan.num_layers();
  for (i64 l = 0; l < k; ++l) vs.views.push_back(vs.blocks[std::size_t(k - 1 - l)].view());
  vs.out_nodes = plan.seed_nodes();
}

Matrix restrict_features(const Matrix& x, const std::vector<i64>& nodes) {
  Matrix out(i64(nodes.size()), x.cols);
  for (std::size_t i = 0; i < nodes.size(); ++i)
    std::copy(x.row(nodes[i]), x.row(nodes[i]) + x.cols, out.row(i64(i)));
  return out;
}

ViewSet make_viewset(const TrainContext& ctx, i64 num_layers, double drop_edge_p,
                     double drop_feat_p, Rng& rng, const std::vector<double>* edge_weights) {
  ViewSet vs;
  if (ctx.plan == nullptr) {
    SparseGraph g2;
    if (drop_edge_p > 0) {
      EdgeList kept;
      const EdgeList all = ctx.data->graph.edges();
      for (std::size_t i = 0; i < all.size(); ++i) {
        double p = drop_edge_p;
        if (edge_weights != nullptr) p = std::min((*edge_weights)[i] * drop_edge_p, 0.95);
        if (!rng.bernoulli(p)) kept.push_back(all[i]);
      }
      g2 = build_csr(kept, ctx.data->graph.num_nodes);
      vs.adj_storage = normalize_adjacency(g2);
    } else {
      vs.adj_storage = *ctx.adj;
    }
    vs.views = full_views(vs.adj_storage, num_layers, vs.identity);
    vs.features = ctx.data->features;
    drop_feature_columns(vs.features, drop_feat_p, rng);
    vs.out_nodes.resize(std::size_t(ctx.data->graph.num_nodes));
    for (i64 v = 0; v < ctx.data->graph.num_nodes; ++v) vs.out_nodes[std::size_t(v)] = v;
  } else {
    vs.blocks = drop_plan_edges(*ctx.plan, drop_edge_p, rng.next_u64());
    finish_plan_viewset(vs, *ctx.plan);
    vs.features = restrict_features(ctx.data->features, ctx.plan->input_nodes());
    drop_feature_columns(vs.features, drop_feat_p, rng);
  }
  return vs;
}

}  // namespace

// ---------------------------------------------------------------------------
// SslMethod
// ---------------------------------------------------------------------------

SslMethod::SslMethod(MethodConfig cfg, u64 seed) : cfg_(std::move(cfg)), rng_(seed) {
  adam_.lr = cfg_.lr;
  adam_.weight_decay = cfg_.weight_decay;
}

double SslMethod::training_step(const TrainContext& ctx) {
  nn::Tape tape;
  ++step_count_;
  nn::Tensor loss;
  try {
    loss = build_loss(tape, ctx);
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + " (training step " + std::to_string(step_count_) +
                       ")");
  }
  const double lv = loss.item();
  if (!std::isfinite(lv))
    throw NumericError("non-finite loss at training step " + std::to_string(step_count_));
  auto params = trainable_parameters();
  for (auto& p : params) {
    p.node()->ensure_grad();
    p.node()->zero_grad();
  }
  last_act_ = tape.activation_elements();
  tape.backward(loss);
  nn::adam_step(adam_, params);
  post_step();
  return lv;
}

std::vector<Matrix> SslMethod::snapshot() {
  std::vector<Matrix> out;
  for (const auto& p : all_parameters()) out.push_back(p.value());
  return out;
}

void SslMethod::restore(const std::vector<Matrix>& values) {
  auto params = all_parameters();
  if (params.size() != values.size()) throw DataError("restore: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].value().same_shape(values[i])) throw DataError("restore: shape mismatch");
    params[i].mutable_value() = values[i];
  }
}

namespace {

// Two-view contrastive methods sharing the augment-encode-loss skeleton.
class ContrastiveMethod : public SslMethod {
 public:
  ContrastiveMethod(MethodConfig cfg, const DatasetBundle& data, u64 seed)
      : SslMethod(std::move(cfg), seed),
        init_rng_(splitmix64(seed)),
        encoder_(cfg_.encoder, data.features.cols, init_rng_) {}

  Matrix embed(const DatasetBundle& data, const NormalizedAdjacency& adj) override {
    return encoder_forward_full(encoder_, adj, data.features);
  }

  std::vector<nn::Tensor> all_parameters() override { return encoder_.parameters(); }

 protected:
  nn::Tensor encode_view(nn::Tape& tape, const TrainContext& ctx, double p_edge, double p_feat) {
    ViewSet vs = make_viewset(ctx, cfg_.encoder.num_layers, p_edge, p_feat, rng_, nullptr);
    return encoder_.forward(tape, vs.views, nn::Tensor::constant(std::move(vs.features)), true,
                            rng_);
  }

  std::vector<nn::Tensor> trainable_parameters() override { return encoder_.parameters(); }

  Rng init_rng_;
  Encoder encoder_;
};

class GbtMethod final : public ContrastiveMethod {
 public:
  using ContrastiveMethod::ContrastiveMethod;

 protected:
  nn::Tensor build_loss(nn::Tape& tape, const TrainContext& ctx) override {
    const double pe = cfg_.hp_get("p_e", 0.2), px = cfg_.hp_get("p_x", 0.1);
    nn::Tensor z1 = encode_view(tape, ctx, pe, px);
    nn::Tensor z2 = encode_view(tape, ctx, pe, px);
    return gbt_loss(tape, z1, z2);
  }
};

class CcaSsgMethod final : public ContrastiveMethod {
 public:
  using ContrastiveMethod::ContrastiveMethod;

 protected:
  nn::Tensor build_loss(nn::Tape& tape, const TrainContext& ctx) override {
    const double der = cfg_.hp_get("der", 0.2), dfr = cfg_.hp_get("dfr", 0.2);
    nn::Tensor z1 = encode_view(tape, ctx, der, dfr);
    nn::Tensor z2 = encode_view(tape, ctx, der, dfr);
    return cca_ssg_loss(tape, z1, z2, cfg_.hp_get("lambda", 1e-3));
  }
};

class GcaMethod final : public ContrastiveMethod {
 public:
  GcaMethod(MethodConfig cfg, const DatasetBundle& data, u64 seed)
      : ContrastiveMethod(std::move(cfg), data, seed) {
    if (cfg_.hp_get("adaptive", 0) != 0) {
      // Degree-centrality weights: low-centrality edges get dropped with
      // higher probability.
      const EdgeList all = data.graph.edges();
      edge_weights_.reserve(all.size());
      double mean_s = 0.0, max_s = 0.0;
      std::vector<double> s;
      for (const auto& [u, v] : all) {
        const double w = std::log(0.5 * double(data.graph.degree(u) + data.graph.degree(v)) + 1.0);
        s.push_back(w);
        mean_s += w;
        max_s = std::max(max_s, w);
      }
      mean_s /= double(std::max<std::size_t>(1, s.size()));
      for (double w : s) {
        const double denom = std::max(max_s - mean_s, 1e-12);
        edge_weights_.push_back(std::min((max_s - w) / denom, 1.5));
      }
    }
  }

 protected:
  nn::Tensor build_loss(nn::Tape& tape, const TrainContext& ctx) override {
    const std::vector<double>* w =
        (!edge_weights_.empty() && ctx.plan == nullptr) ? &edge_weights_ : nullptr;
    auto encode = [&](double pe, double pf) {
      ViewSet vs = make_viewset(ctx, cfg_.encoder.num_layers, pe, pf, rng_, w);
      return encoder_.forward(tape, vs.views, nn::Tensor::constant(std::move(vs.features)), true,
                              rng_);
    };
    nn::Tensor z1 = encode(cfg_.hp_get("drop_edge_rate_1", 0.2), cfg_.hp_get("drop_feature_rate_1", 0.2));
    nn::Tensor z2 = encode(cfg_.hp_get("drop_edge_rate_2", 0.3), cfg_.hp_get("drop_feature_rate_2", 0.3));
    return gca_infonce_loss(tape, z1, z2, cfg_.hp_get("tau", 0.5));
  }

 private:
  std::vector<double> edge_weights_;
};

class BgrlMethod final : public SslMethod {
 public:
  BgrlMethod(MethodConfig cfg, const DatasetBundle& data, u64 seed)
      : SslMethod(std::move(cfg), seed),
        init_rng_(splitmix64(seed)),
        online_(cfg_.encoder, data.features.cols, init_rng_, "online"),
        target_(cfg_.encoder, data.features.cols, init_rng_, "target") {
    const double tau = cfg_.hp_get("ema_decay", 0.99);
    if (tau < 0 || tau > 1) throw ConfigError("bgrl: ema_decay must be in [0, 1]");
    // Target starts as a copy of the online network and never receives
    // gradients.
    auto on = online_.parameters();
    auto tg = target_.parameters();
    for (std::size_t i = 0; i < tg.size(); ++i) {
      tg[i].mutable_value() = on[i].value();
      tg[i].node()->requires_grad = false;
    }
    const i64 l = cfg_.encoder.output_dim();
    const i64 pd = i64(cfg_.hp_get("pred_dim", 256));
    pred_w1_ = nn::Tensor::param(nn::xavier_uniform(l, pd, init_rng_), "pred.W1");
    pred_b1_ = nn::Tensor::param(Matrix(1, pd), "pred.b1");
    pred_w2_ = nn::Tensor::param(nn::xavier_uniform(pd, l, init_rng_), "pred.W2");
    pred_b2_ = nn::Tensor::param(Matrix(1, l), "pred.b2");
  }

  Matrix embed(const DatasetBundle& data, const NormalizedAdjacency& adj) override {
    return encoder_forward_full(online_, adj, data.features);
  }

  std::vector<nn::Tensor> all_parameters() override {
    std::vector<nn::Tensor> out = online_.parameters();
    for (auto& p : target_.parameters()) out.push_back(p);
    out.push_back(pred_w1_);
    out.push_back(pred_b1_);
    out.push_back(pred_w2_);
    out.push_back(pred_b2_);
    return out;
  }

 protected:
  nn::Tensor build_loss(nn::Tape& tape, const TrainContext& ctx) override {
    ViewSet v1 = make_viewset(ctx, cfg_.encoder.num_layers, cfg_.hp_get("drop_edge_p_1", 0.2),
                              cfg_.hp_get("drop_feat_p_1", 0.2), rng_, nullptr);
    ViewSet v2 = make_viewset(ctx, cfg_.encoder.num_layers, cfg_.hp_get("drop_edge_p_2", 0.3),
                              cfg_.hp_get("drop_feat_p_2", 0.3), rng_, nullptr);
    nn::Tensor x1 = nn::Tensor::constant(v1.features);
    nn::Tensor x2 = nn::Tensor::constant(v2.features);
    nn::Tensor z1 = online_.forward(tape, v1.views, x1, true, rng_);
    nn::Tensor z2 = online_.forward(tape, v2.views, x2, true, rng_);
    nn::Tensor t1 = target_.forward(tape, v1.views, x1, false, rng_);
    nn::Tensor t2 = target_.forward(tape, v2.views, x2, false, rng_);
    nn::Tensor p1 = predictor(tape, z1);
    nn::Tensor p2 = predictor(tape, z2);
    return tape.scale(tape.add(bgrl_cosine_loss(tape, p1, t2.value()),
                               bgrl_cosine_loss(tape, p2, t1.value())),
                      0.5);
  }

  std::vector<nn::Tensor> trainable_parameters() override {
    std::vector<nn::Tensor> out = online_.parameters();
    out.push_back(pred_w1_);
    out.push_back(pred_b1_);
    out.push_back(pred_w2_);
    out.push_back(pred_b2_);
    return out;
  }

  void post_step() override {
    const double tau = cfg_.hp_get("ema_decay", 0.99);
    auto on = online_.parameters();
    auto tg = target_.parameters();
    for (std::size_t i = 0; i < tg.size(); ++i) {
      Matrix& t = tg[i].mutable_value();
      const Matrix& o = on[i].value();
      for (i64 j = 0; j < t.size(); ++j)
        t.data[std::size_t(j)] = tau * t.data[std::size_t(j)] + (1.0 - tau) * o.data[std::size_t(j)];
    }
  }

 private:
  nn::Tensor predictor(nn::Tape& tape, nn::Tensor z) {
    nn::Tensor h = tape.relu(tape.add_rowvec(tape.matmul(z, pred_w1_), pred_b1_));
    return tape.add_rowvec(tape.matmul(h, pred_w2_), pred_b2_);
  }

  Rng init_rng_;
  Encoder online_;
  Encoder target_;
  nn::Tensor pred_w1_, pred_b1_, pred_w2_, pred_b2_;
};

class GraphMaeMethod final : public SslMethod {
 public:
  GraphMaeMethod(MethodConfig cfg, const DatasetBundle& data, u64 seed)
      : SslMethod(std::move(cfg), seed),
        init_rng_(splitmix64(seed)),
        encoder_(cfg_.encoder, data.features.cols, init_rng_) {
    const i64 l = cfg_.encoder.output_dim();
    const i64 d = data.features.cols;
    token_ = nn::Tensor::param(Matrix(1, d), "mask_token");
    dec_w_ = nn::Tensor::param(nn::xavier_uniform(l, d, init_rng_), "dec.W");
    dec_b_ = nn::Tensor::param(Matrix(1, d), "dec.b");
  }

  Matrix embed(const DatasetBundle& data, const NormalizedAdjacency& adj) override {
    return encoder_forward_full(encoder_, adj, data.features);
  }

  std::vector<nn::Tensor> all_parameters() override {
    std::vector<nn::Tensor> out = encoder_.parameters();
    out.push_back(token_);
    out.push_back(dec_w_);
    out.push_back(dec_b_);
    return out;
  }

 protected:
  nn::Tensor build_loss(nn::Tape& tape, const TrainContext& ctx) override {
    const double mask_rate = cfg_.hp_get("mask_rate", 0.5);
    const double drop_edge = cfg_.hp_get("drop_edge_rate", 0.0);
    const int alpha_l = int(cfg_.hp_get("alpha_l", 2));
    ViewSet vs = make_viewset(ctx, cfg_.encoder.num_layers, drop_edge, 0.0, rng_, nullptr);
    const i64 n_in = vs.features.rows;
    const i64 n_out = i64(vs.out_nodes.size());
    i64 count = i64(std::floor(mask_rate * double(n_out)));
    if (count == 0 && n_out > 0) count = 1;

    // Masked rows are chosen among the output nodes (a prefix of the input
    // rows by construction).
    std::vector<i64> perm(std::size_t(n_out), 0);
    for (i64 i = 0; i < n_out; ++i) perm[std::size_t(i)] = i;
    for (i64 i = n_out - 1; i > 0; --i)
      std::swap(perm[std::size_t(i)], perm[std::size_t(rng_.uniform_int(i + 1))]);
    std::vector<i64> mask_idx(perm.begin(), perm.begin() + count);
    std::sort(mask_idx.begin(), mask_idx.end());

    const i64 d = vs.features.cols;
    Matrix targets(count, d);
    Matrix keep(n_in, d, 1.0);
    Matrix sel(n_in, d, 0.0);
    for (i64 i = 0; i < count; ++i) {
      const i64 r = mask_idx[std::size_t(i)];
      std::copy(vs.features.row(r), vs.features.row(r) + d, targets.row(i));
      for (i64 c = 0; c < d; ++c) {
        keep.at(r, c) = 0.0;
        sel.at(r, c) = 1.0;
      }
    }
    nn::Tensor xm = tape.add(tape.mul(nn::Tensor::constant(vs.features), nn::Tensor::constant(keep)),
                             tape.mul(tape.broadcast_row(token_, n_in), nn::Tensor::constant(sel)));
    nn::Tensor h = encoder_.forward(tape, vs.views, xm, true, rng_);
    nn::Tensor dec = tape.matmul(h, dec_w_);
    // Single GCN decoder layer when a square adjacency over the output set
    // is available (full batch and subgraph batches).
    if (ctx.plan == nullptr || ctx.plan->strategy == Strategy::subgraph) {
      const nn::CsrView& v = vs.views.back();
      if (v.n_rows == v.n_cols && v.n_rows == dec.rows()) dec = tape.spmm(v, dec);
    }
    dec = tape.add_rowvec(dec, dec_b_);
    nn::Tensor recon = tape.gather_rows(dec, mask_idx);
    return graphmae_loss(tape, recon, targets, alpha_l);
  }

  std::vector<nn::Tensor> trainable_parameters() override { return all_parameters(); }

 private:
  Rng init_rng_;
  Encoder encoder_;
  nn::Tensor token_, dec_w_, dec_b_;
};

class S2gaeMethod final : public SslMethod {
 public:
  S2gaeMethod(MethodConfig cfg, const DatasetBundle& data, u64 seed)
      : SslMethod(std::move(cfg), seed),
        init_rng_(splitmix64(seed)),
        encoder_(cfg_.encoder, data.features.cols, init_rng_),
        full_edges_(data.graph.edges()) {
    const i64 k = cfg_.encoder.num_layers;
    i64 in_dim = 0;
    for (i64 l = 0; l < k; ++l) in_dim += cfg_.encoder.hidden_dims[std::size_t(l)];
    const i64 ch = i64(cfg_.hp_get("decode_channels", 256));
    const i64 layers = std::max<i64>(1, i64(cfg_.hp_get("decode_layers", 2)));
    i64 cur = in_dim;
    for (i64 l = 0; l < layers; ++l) {
      const i64 out = l == layers - 1 ? 1 : ch;
      dec_w_.push_back(nn::Tensor::param(nn::xavier_uniform(cur, out, init_rng_),
                                         "dec.l" + std::to_string(l) + ".W"));
      dec_b_.push_back(nn::Tensor::param(Matrix(1, out), "dec.l" + std::to_string(l) + ".b"));
      cur = out;
    }
  }

  Matrix embed(const DatasetBundle& data, const NormalizedAdjacency& adj) override {
    nn::Tape tape;
    Rng rng(0);
    std::vector<i64> scratch;
    auto views = full_views(adj, cfg_.encoder.num_layers, scratch);
    auto outs = encoder_.forward_layers(tape, views, nn::Tensor::constant(data.features), false, rng);
    i64 cols = 0;
    for (auto& o : outs) cols += o.cols();
    Matrix out(data.features.rows, cols);
    i64 off = 0;
    for (auto& o : outs) {
      for (i64 r = 0; r < out.rows; ++r)
        std::copy(o.value().row(r), o.value().row(r) + o.cols(), out.row(r) + off);
      off += o.cols();
    }
    return out;
  }

  std::vector<nn::Tensor> all_parameters() override {
    std::vector<nn::Tensor> out = encoder_.parameters();
    for (std::size_t i = 0; i < dec_w_.size(); ++i) {
      out.push_back(dec_w_[i]);
      out.push_back(dec_b_[i]);
    }
    return out;
  }

 protected:
  nn::Tensor build_loss(nn::Tape& tape, const TrainContext& ctx) override {
    const double mask_ratio = cfg_.hp_get("mask_ratio", 0.5);
    // Edge population for this step: the whole graph (full batch) or the
    // edges induced by the batch's seed set.
    EdgeList edges;
    std::unordered_map<i64, i64> local;
    if (ctx.plan == nullptr) {
      edges = full_edges_;
    } else {
      const auto& seeds = ctx.plan->seed_nodes();
      local.reserve(seeds.size() * 2);
      for (std::size_t i = 0; i < seeds.size(); ++i) local.emplace(seeds[i], i64(i));
      const SparseGraph& g = ctx.data->graph;
      for (i64 u : seeds)
        for (i64 k = g.row_offsets[std::size_t(u)]; k < g.row_offsets[std::size_t(u + 1)]; ++k) {
          const i64 v = g.col_indices[std::size_t(k)];
          if (u < v && local.count(v)) edges.emplace_back(u, v);
        }
    }
    if (edges.empty()) throw DataError("s2gae: no edges available in this batch");
    for (i64 i = i64(edges.size()) - 1; i > 0; --i)
      std::swap(edges[std::size_t(i)], edges[std::size_t(rng_.uniform_int(i + 1))]);
    i64 count = i64(std::floor(mask_ratio * double(edges.size())));
    if (count == 0) count = 1;
    EdgeList masked(edges.begin(), edges.begin() + count);

    // Forward on the visible structure.
    ViewSet vs;
    if (ctx.plan == nullptr) {
      EdgeList kept(edges.begin() + count, edges.end());
      SparseGraph visible = build_csr(kept, ctx.data->graph.num_nodes);
      vs.adj_storage = normalize_adjacency(visible);
      vs.views = full_views(vs.adj_storage, cfg_.encoder.num_layers, vs.identity);
      vs.features = ctx.data->features;
      vs.out_nodes.resize(std::size_t(ctx.data->graph.num_nodes));
      for (i64 v = 0; v < ctx.data->graph.num_nodes; ++v) vs.out_nodes[std::size_t(v)] = v;
    } else {
      vs.blocks = remove_plan_edges(*ctx.plan, masked);
      finish_plan_viewset(vs, *ctx.plan);
      vs.features = restrict_features(ctx.data->features, ctx.plan->input_nodes());
    }
    auto outs = encoder_.forward_layers(tape, vs.views, nn::Tensor::constant(std::move(vs.features)),
                                        true, rng_);
    const i64 n_out = i64(vs.out_nodes.size());
    // Restrict every layer output to the seed rows (seed set is a prefix of
    // each layer's node set).
    std::vector<i64> prefix(std::size_t(n_out), 0);
    for (i64 i = 0; i < n_out; ++i) prefix[std::size_t(i)] = i;
    for (auto& o : outs)
      if (o.rows() != n_out) o = tape.gather_rows(o, prefix);

    auto to_local = [&](i64 g) { return ctx.plan == nullptr ? g : local.at(g); };
    std::vector<i64> pos_u, pos_v;
    for (const auto& [u, v] : masked) {
      pos_u.push_back(to_local(u));
      pos_v.push_back(to_local(v));
    }
    // Negatives: uniform non-adjacent pairs inside the batch node set.
    std::vector<i64> neg_u, neg_v;
    const SparseGraph& g = ctx.data->graph;
    i64 attempts = 0;
    while (i64(neg_u.size()) < count && attempts < 200 * count) {
      ++attempts;
      const i64 a = rng_.uniform_int(n_out), b = rng_.uniform_int(n_out);
      if (a == b) continue;
      const i64 ga = vs.out_nodes[std::size_t(a)], gb = vs.out_nodes[std::size_t(b)];
      if (g.has_edge(ga, gb)) continue;
      neg_u.push_back(a);
      neg_v.push_back(b);
    }
    if (neg_u.empty()) throw DataError("s2gae: could not sample negative pairs");

    auto decode = [&](const std::vector<i64>& us, const std::vector<i64>& vsel) {
      std::vector<nn::Tensor> parts;
      for (auto& o : outs)
        parts.push_back(tape.mul(tape.gather_rows(o, us), tape.gather_rows(o, vsel)));
      nn::Tensor h = tape.concat_cols(parts);
      for (std::size_t l = 0; l < dec_w_.size(); ++l) {
        h = tape.add_rowvec(tape.matmul(h, dec_w_[l]), dec_b_[l]);
        if (l + 1 < dec_w_.size()) h = tape.relu(h);
      }
      return h;
    };
    return s2gae_loss(tape, decode(pos_u, pos_v), decode(neg_u, neg_v));
  }

  std::vector<nn::Tensor> trainable_parameters() override { return all_parameters(); }

 private:
  Rng init_rng_;
  Encoder encoder_;
  EdgeList full_edges_;
  std::vector<nn::Tensor> dec_w_, dec_b_;
};

}  // namespace

std::unique_ptr<SslMethod> SslMethod::create(const MethodConfig& cfg, const DatasetBundle& data,
                                             u64 seed) {
  MethodConfig c = cfg;
  c.finalize(data.features.cols);
  switch (c.id) {
    case MethodId::gbt: return std::make_unique<GbtMethod>(std::move(c), data, seed);
    case MethodId::cca_ssg: return std::make_unique<CcaSsgMethod>(std::move(c), data, seed);
    case MethodId::bgrl: return std::make_unique<BgrlMethod>(std::move(c), data, seed);
    case MethodId::gca: return std::make_unique<GcaMethod>(std::move(c), data, seed);
    case MethodId::graphmae: return std::make_unique<GraphMaeMethod>(std::move(c), data, seed);
    case MethodId::s2gae: return std::make_unique<S2gaeMethod>(std::move(c), data, seed);
  }
  throw ConfigError("unknown method id");
}

}  // namespace graphfm
