#include "graphfm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

namespace graphfm {

double auc_score(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw DataError("auc: size mismatch");
  const std::size_t n = scores.size();
  i64 n_pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw DataError("auc: labels must be 0/1");
    n_pos += l;
  }
  const i64 n_neg = i64(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("auc: needs both classes");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Midranks over tied groups, then Mann-Whitney U.
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double r = 0.5 * double(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[idx[t]] = r;
    i = j + 1;
  }
  double rank_sum_pos = 0.0;
  for (std::size_t t = 0; t < n; ++t)
    if (labels[t] == 1) rank_sum_pos += rank[t];
  const double u = rank_sum_pos - 0.5 * double(n_pos) * double(n_pos + 1);
  return u / (double(n_pos) * double(n_neg));
}

double average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw DataError("ap: size mismatch");
  i64 n_pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw DataError("ap: labels must be 0/1");
    n_pos += l;
  }
  if (n_pos == 0) throw DataError("ap: needs at least one positive");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double ap = 0.0;
  i64 tp = 0, seen = 0;
  std::size_t i = 0;
  const std::size_t n = idx.size();
  while (i < n) {
    std::size_t j = i;
    i64 group_pos = labels[idx[i]];
    while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) {
      ++j;
      group_pos += labels[idx[j]];
    }
    tp += group_pos;
    seen += i64(j - i + 1);
    // All members of a tied group share the group-end precision.
    ap += double(group_pos) * double(tp) / double(seen);
    i = j + 1;
  }
  return ap / double(n_pos);
}

namespace {

double entropy_of_counts(const std::map<i64, i64>& counts, i64 n) {
  double h = 0.0;
  for (const auto& [_, c] : counts) {
    const double p = double(c) / double(n);
    if (p > 0) h -= p * std::log(p);
  }
  return h;
}

}  // namespace

double nmi_score(const std::vector<i64>& a, const std::vector<i64>& b) {
  if (a.size() != b.size() || a.empty()) throw DataError("nmi: size mismatch or empty");
  const i64 n = i64(a.size());
  std::map<i64, i64> ca, cb;
  std::map<std::pair<i64, i64>, i64> joint;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++ca[a[i]];
    ++cb[b[i]];
    ++joint[{a[i], b[i]}];
  }
  const double ha = entropy_of_counts(ca, n);
  const double hb = entropy_of_counts(cb, n);
  if (ha == 0.0 || hb == 0.0) return ca.size() == cb.size() && ca.size() == 1 ? 1.0 : 0.0;
  double mi = 0.0;
  for (const auto& [uv, c] : joint) {
    const double pij = double(c) / double(n);
    const double pi = double(ca[uv.first]) / double(n);
    const double pj = double(cb[uv.second]) / double(n);
    mi += pij * std::log(pij / (pi * pj));
  }
  return mi / std::sqrt(ha * hb);
}

double ari_score(const std::vector<i64>& a, const std::vector<i64>& b) {
  if (a.size() != b.size() || a.empty()) throw DataError("ari: size mismatch or empty");
  const i64 n = i64(a.size());
  std::map<i64, i64> ca, cb;
  std::map<std::pair<i64, i64>, i64> joint;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++ca[a[i]];
    ++cb[b[i]];
    ++joint[{a[i], b[i]}];
  }
  auto c2 = [](i64 m) { return 0.5 * double(m) * double(m - 1); };
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [_, c] : joint) sum_ij += c2(c);
  for (const auto& [_, c] : ca) sum_a += c2(c);
  for (const auto& [_, c] : cb) sum_b += c2(c);
  const double total = c2(n);
  const double expected = sum_a * sum_b / total;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 0.0;
  return (sum_ij - expected) / (max_index - expected);
}

double accuracy_score(const std::vector<i64>& pred, const std::vector<i64>& truth) {
  if (pred.size() != truth.size() || pred.empty()) throw DataError("accuracy: size mismatch");
  i64 correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == truth[i];
  return double(correct) / double(pred.size());
}

KMeansResult kmeans(const Matrix& x, i64 k, u64 seed, i64 n_restarts, i64 max_iter) {
  if (k < 1 || k > x.rows) throw DataError("kmeans: invalid k");
  const i64 n = x.rows, d = x.cols;
  auto sqdist = [&](const double* a, const double* b) {
    double s = 0.0;
    for (i64 c = 0; c < d; ++c) {
      const double t = a[c] - b[c];
      s += t * t;
    }
    return s;
  };
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  Rng rng(seed);
  for (i64 restart = 0; restart < n_restarts; ++restart) {
    // k-means++ seeding.
    Matrix centers(k, d);
    std::vector<double> mind(std::size_t(n), std::numeric_limits<double>::infinity());
    i64 first = rng.uniform_int(n);
    std::copy(x.row(first), x.row(first) + d, centers.row(0));
    for (i64 c = 1; c < k; ++c) {
      double total = 0.0;
      for (i64 v = 0; v < n; ++v) {
        mind[std::size_t(v)] = std::min(mind[std::size_t(v)], sqdist(x.row(v), centers.row(c - 1)));
        total += mind[std::size_t(v)];
      }
      i64 pick = 0;
      if (total > 0) {
        double target = rng.uniform() * total, acc = 0.0;
        for (i64 v = 0; v < n; ++v) {
          acc += mind[std::size_t(v)];
          if (acc >= target) {
            pick = v;
            break;
          }
        }
      } else {
        pick = rng.uniform_int(n);
      }
      std::copy(x.row(pick), x.row(pick) + d, centers.row(c));
    }
    // Lloyd iterations.
    std::vector<i64> assign(std::size_t(n), 0);
    double inertia = 0.0;
    for (i64 it = 0; it < max_iter; ++it) {
      bool changed = false;
      inertia = 0.0;
      for (i64 v = 0; v < n; ++v) {
        i64 argmin = 0;
        double dmin = std::numeric_limits<double>::infinity();
        for (i64 c = 0; c < k; ++c) {
          const double dd = sqdist(x.row(v), centers.row(c));
          if (dd < dmin) {
            dmin = dd;
            argmin = c;
          }
        }
        if (assign[std::size_t(v)] != argmin) changed = true;
        assign[std::size_t(v)] = argmin;
        inertia += dmin;
      }
      if (!changed && it > 0) break;
      Matrix sums(k, d);
      std::vector<i64> counts(std::size_t(k), 0);
      for (i64 v = 0; v < n; ++v) {
        const i64 c = assign[std::size_t(v)];
        ++counts[std::size_t(c)];
        for (i64 j = 0; j < d; ++j) sums.at(c, j) += x.at(v, j);
      }
      for (i64 c = 0; c < k; ++c) {
        if (counts[std::size_t(c)] == 0) {
          // Re-seed empty cluster at a random point.
          const i64 v = rng.uniform_int(n);
          std::copy(x.row(v), x.row(v) + d, centers.row(c));
        } else {
          for (i64 j = 0; j < d; ++j) centers.at(c, j) = sums.at(c, j) / double(counts[std::size_t(c)]);
        }
      }
    }
    if (inertia < best.inertia) {
      best.inertia = inertia;
      best.assignment = assign;
      best.centers = centers;
    }
  }
  return best;
}

namespace {

// Small MLP trained with Adam on frozen inputs; shared by the probes.
struct Mlp {
  std::vector<nn::Tensor> ws, bs;
  double dropout = 0.0;

  Mlp(i64 in_dim, i64 hidden, i64 hidden_layers, i64 out_dim, Rng& rng) {
    i64 cur = in_dim;
    for (i64 l = 0; l < hidden_layers; ++l) {
      ws.push_back(nn::Tensor::param(nn::xavier_uniform(cur, hidden, rng),
                                     "probe.l" + std::to_string(l) + ".W"));
      bs.push_back(nn::Tensor::param(Matrix(1, hidden), "probe.l" + std::to_string(l) + ".b"));
      cur = hidden;
    }
    ws.push_back(nn::Tensor::param(nn::xavier_uniform(cur, out_dim, rng), "probe.out.W"));
    bs.push_back(nn::Tensor::param(Matrix(1, out_dim), "probe.out.b"));
  }

  std::vector<nn::Tensor> params() const {
    std::vector<nn::Tensor> out;
    for (std::size_t i = 0; i < ws.size(); ++i) {
      out.push_back(ws[i]);
      out.push_back(bs[i]);
    }
    return out;
  }

  nn::Tensor forward(nn::Tape& tape, nn::Tensor h, bool training, Rng& rng) const {
    for (std::size_t l = 0; l < ws.size(); ++l) {
      h = tape.add_rowvec(tape.matmul(h, ws[l]), bs[l]);
      if (l + 1 < ws.size()) {
        h = tape.relu(h);
        h = tape.dropout(h, dropout, rng, training);
      }
    }
    return h;
  }

  std::vector<Matrix> snapshot() const {
    std::vector<Matrix> out;
    for (const auto& p : params()) out.push_back(p.value());
    return out;
  }
  void restore(const std::vector<Matrix>& vals) {
    auto ps = params();
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i].mutable_value() = vals[i];
  }
};

Matrix select_rows(const Matrix& x, const std::vector<i64>& idx) {
  Matrix out(i64(idx.size()), x.cols);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy(x.row(idx[i]), x.row(idx[i]) + x.cols, out.row(i64(i)));
  return out;
}

std::vector<i64> mask_to_indices(const std::vector<std::uint8_t>& mask) {
  std::vector<i64> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.push_back(i64(i));
  return out;
}

std::vector<i64> argmax_rows(const Matrix& logits) {
  std::vector<i64> out(std::size_t(logits.rows), 0);
  for (i64 r = 0; r < logits.rows; ++r) {
    i64 arg = 0;
    for (i64 c = 1; c < logits.cols; ++c)
      if (logits.at(r, c) > logits.at(r, arg)) arg = c;
    out[std::size_t(r)] = arg;
  }
  return out;
}

}  // namespace

NodeClsResult eval_node_classification(const Matrix& h, const DatasetBundle& data,
                                       const ProbeConfig& cfg) {
  if (!data.splits.has_node_split()) throw DataError("node classification: no node split");
  const std::vector<i64> tr = mask_to_indices(data.splits.train_mask);
  const std::vector<i64> va = mask_to_indices(data.splits.val_mask);
  const std::vector<i64> te = mask_to_indices(data.splits.test_mask);
  if (tr.empty() || va.empty() || te.empty())
    throw DataError("node classification: empty split partition");
  auto labels_of = [&](const std::vector<i64>& idx) {
    std::vector<i64> out;
    for (i64 v : idx) out.push_back(data.labels[std::size_t(v)]);
    return out;
  };
  const Matrix h_tr = select_rows(h, tr), h_va = select_rows(h, va), h_te = select_rows(h, te);
  const std::vector<i64> y_tr = labels_of(tr), y_va = labels_of(va), y_te = labels_of(te);

  Rng rng(cfg.seed);
  Mlp mlp(h.cols, cfg.hidden_dim, cfg.num_layers, data.num_classes, rng);
  mlp.dropout = cfg.dropout;
  nn::AdamState adam;
  adam.lr = cfg.lr;
  adam.weight_decay = cfg.weight_decay;

  double best_val = -1.0;
  std::vector<Matrix> best_params = mlp.snapshot();
  i64 since_best = 0;
  nn::Tensor x_tr = nn::Tensor::constant(h_tr);
  for (i64 epoch = 0; epoch < cfg.epochs; ++epoch) {
    nn::Tape tape;
    nn::Tensor logits = mlp.forward(tape, x_tr, true, rng);
    nn::Tensor loss = tape.softmax_cross_entropy(logits, y_tr);
    auto params = mlp.params();
    for (auto& p : params) {
      p.node()->ensure_grad();
      p.node()->zero_grad();
    }
    tape.backward(loss);
    nn::adam_step(adam, params);

    nn::Tape etape;
    Rng erng(0);
    Matrix val_logits = mlp.forward(etape, nn::Tensor::constant(h_va), false, erng).value();
    const double val_acc = accuracy_score(argmax_rows(val_logits), y_va);
    if (val_acc > best_val) {
      best_val = val_acc;
      best_params = mlp.snapshot();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  mlp.restore(best_params);
  nn::Tape tape;
  Rng erng(0);
  Matrix test_logits = mlp.forward(tape, nn::Tensor::constant(h_te), false, erng).value();
  NodeClsResult res;
  res.accuracy = accuracy_score(argmax_rows(test_logits), y_te);
  res.val_accuracy = best_val;
  return res;
}

namespace {

Matrix hadamard_pairs(const Matrix& h, const EdgeList& pairs) {
  Matrix out(i64(pairs.size()), h.cols);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double* a = h.row(pairs[i].first);
    const double* b = h.row(pairs[i].second);
    double* o = out.row(i64(i));
    for (i64 c = 0; c < h.cols; ++c) o[c] = a[c] * b[c];
  }
  return out;
}

std::vector<double> column(const Matrix& m) {
  return m.data;
}

}  // namespace

LinkPredResult eval_link_prediction(const Matrix& h, const DatasetBundle& data,
                                    const LinkDecoderConfig& cfg) {
  const SplitSpec& sp = data.splits;
  if (!sp.has_lp_split()) throw DataError("link prediction: no edge split");
  Rng rng(cfg.seed);
  Mlp mlp(h.cols, cfg.channels, cfg.num_layers, 1, rng);
  nn::AdamState adam;
  adam.lr = cfg.lr;
  adam.weight_decay = cfg.weight_decay;

  // Training negatives: one fresh uniform non-edge per positive per epoch.
  const SparseGraph& g = data.graph;
  auto sample_negs = [&](std::size_t count) {
    EdgeList out;
    i64 attempts = 0;
    const i64 cap = 200 * i64(count);
    while (out.size() < count && attempts < cap) {
      ++attempts;
      const i64 u = rng.uniform_int(g.num_nodes), v = rng.uniform_int(g.num_nodes);
      if (u == v || g.has_edge(u, v)) continue;
      out.emplace_back(u, v);
    }
    if (out.size() < count) throw DataError("link prediction: negative sampling failed");
    return out;
  };

  auto eval_pairs = [&](const EdgeList& pos, const EdgeList& neg, double* auc, double* ap) {
    nn::Tape tape;
    Rng erng(0);
    EdgeList all = pos;
    all.insert(all.end(), neg.begin(), neg.end());
    Matrix logits =
        mlp.forward(tape, nn::Tensor::constant(hadamard_pairs(h, all)), false, erng).value();
    std::vector<double> scores = column(logits);
    std::vector<int> labels(scores.size(), 0);
    for (std::size_t i = 0; i < pos.size(); ++i) labels[i] = 1;
    if (auc != nullptr) *auc = auc_score(scores, labels);
    if (ap != nullptr) *ap = average_precision(scores, labels);
  };

  const EdgeList& train_pos = sp.lp_train_edges;
  if (train_pos.empty()) throw DataError("link prediction: empty training edges");
  double best_val = -1.0;
  std::vector<Matrix> best_params = mlp.snapshot();
  i64 since_best = 0;
  for (i64 epoch = 0; epoch < cfg.epochs; ++epoch) {
    const EdgeList neg = sample_negs(train_pos.size());
    EdgeList all = train_pos;
    all.insert(all.end(), neg.begin(), neg.end());
    Matrix targets(i64(all.size()), 1);
    for (std::size_t i = 0; i < train_pos.size(); ++i) targets.at(i64(i), 0) = 1.0;
    nn::Tape tape;
    nn::Tensor logits = mlp.forward(tape, nn::Tensor::constant(hadamard_pairs(h, all)), true, rng);
    nn::Tensor loss = tape.bce_with_logits(logits, targets);
    auto params = mlp.params();
    for (auto& p : params) {
      p.node()->ensure_grad();
      p.node()->zero_grad();
    }
    tape.backward(loss);
    nn::adam_step(adam, params);

    double val_auc = 0.0;
    eval_pairs(sp.lp_val_pos, sp.lp_val_neg, &val_auc, nullptr);
    if (val_auc > best_val) {
      best_val = val_auc;
      best_params = mlp.snapshot();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  mlp.restore(best_params);
  LinkPredResult res;
  eval_pairs(sp.lp_test_pos, sp.lp_test_neg, &res.auc, &res.ap);
  res.val_auc = best_val;
  return res;
}

ClusteringResult eval_node_clustering(const Matrix& h, const DatasetBundle& data, u64 seed) {
  if (data.num_classes < 1) throw DataError("clustering: dataset has no classes");
  KMeansResult km = kmeans(h, data.num_classes, seed);
  ClusteringResult res;
  res.nmi = nmi_score(km.assignment, data.labels);
  res.ari = ari_score(km.assignment, data.labels);
  return res;
}

}  // namespace graphfm
