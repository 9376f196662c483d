#include "graphfm/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace graphfm::nn {

CsrView full_view(const NormalizedAdjacency& adj) {
  CsrView v;
  v.n_rows = adj.num_nodes;
  v.n_cols = adj.num_nodes;
  v.offsets = adj.row_offsets.data();
  v.cols = adj.col_indices.data();
  v.vals = adj.values.data();
  v.dst_pos = nullptr;  // filled per-row via self_pos when needed
  return v;
}

namespace {

void accumulate(TensorNode* n, const Matrix& g) {
  if (!n->requires_grad) return;
  n->ensure_grad();
  const std::size_t sz = n->grad.data.size();
  for (std::size_t i = 0; i < sz; ++i) n->grad.data[i] += g.data[i];
}

bool grad_ready(const std::shared_ptr<TensorNode>& n) {
  return n->grad.rows == n->value.rows && n->grad.cols == n->value.cols;
}

}  // namespace

Tensor Tape::emit(Matrix out, bool requires_grad, std::function<void(const Matrix&)> back,
                  const char* op, std::size_t extra_retained) {
  if (!all_finite(out)) throw NumericError(std::string("non-finite values produced by op '") + op + "'");
  auto n = std::make_shared<TensorNode>();
  n->value = std::move(out);
  n->requires_grad = requires_grad;
  if (requires_grad) {
    act_elems_ += std::size_t(n->value.size()) + extra_retained;
    steps_.push_back({n, std::move(back), op});
  }
  return Tensor(std::move(n));
}

Tensor Tape::matmul(Tensor a, Tensor b, bool ta, bool tb) {
  Matrix out = graphfm::matmul(a.value(), b.value(), ta, tb);
  const bool rg = a.requires_grad() || b.requires_grad();
  auto an = a.node_ptr(), bn = b.node_ptr();
  return emit(
      std::move(out), rg,
      [an, bn, ta, tb](const Matrix& g) {
        if (an->requires_grad) {
          Matrix da;
          if (!ta && !tb) da = graphfm::matmul(g, bn->value, false, true);
          else if (ta && !tb) da = graphfm::matmul(bn->value, g, false, true);
          else if (!ta && tb) da = graphfm::matmul(g, bn->value, false, false);
          else da = graphfm::matmul(bn->value, g, true, true);
          accumulate(an.get(), da);
        }
        if (bn->requires_grad) {
          Matrix db;
          if (!ta && !tb) db = graphfm::matmul(an->value, g, true, false);
          else if (ta && !tb) db = graphfm::matmul(an->value, g, false, false);
          else if (!ta && tb) db = graphfm::matmul(g, an->value, true, false);
          else db = graphfm::matmul(g, an->value, true, true);
          accumulate(bn.get(), db);
        }
      },
      "matmul");
}

Tensor Tape::spmm(const CsrView& adj, Tensor x) {
  if (x.rows() != adj.n_cols) throw NumericError("spmm: shape mismatch");
  const Matrix& xv = x.value();
  Matrix out(adj.n_rows, xv.cols);
  for (i64 r = 0; r < adj.n_rows; ++r) {
    double* orow = out.row(r);
    for (i64 k = adj.offsets[r]; k < adj.offsets[r + 1]; ++k) {
      const double w = adj.vals[k];
      const double* xrow = xv.row(adj.cols[k]);
      for (i64 j = 0; j < xv.cols; ++j) orow[j] += w * xrow[j];
    }
  }
  auto xn = x.node_ptr();
  // Copy the structure so the view does not have to outlive the tape.
  std::vector<i64> offsets(adj.offsets, adj.offsets + adj.n_rows + 1);
  std::vector<i64> cols(adj.cols, adj.cols + adj.nnz());
  std::vector<double> vals(adj.vals, adj.vals + adj.nnz());
  const i64 n_rows = adj.n_rows;
  return emit(
      std::move(out), x.requires_grad(),
      [xn, offsets = std::move(offsets), cols = std::move(cols), vals = std::move(vals),
       n_rows](const Matrix& g) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        Matrix& dx = xn->grad;
        for (i64 r = 0; r < n_rows; ++r) {
          const double* grow = g.row(r);
          for (i64 k = offsets[std::size_t(r)]; k < offsets[std::size_t(r + 1)]; ++k) {
            double* drow = dx.row(cols[std::size_t(k)]);
            const double w = vals[std::size_t(k)];
            for (i64 j = 0; j < g.cols; ++j) drow[j] += w * grow[j];
          }
        }
      },
      "spmm");
}

Tensor Tape::add(Tensor a, Tensor b) {
  if (!a.value().same_shape(b.value())) throw NumericError("add: shape mismatch");
  Matrix out = a.value();
  for (i64 i = 0; i < out.size(); ++i) out.data[std::size_t(i)] += b.value().data[std::size_t(i)];
  auto an = a.node_ptr(), bn = b.node_ptr();
  return emit(
      std::move(out), a.requires_grad() || b.requires_grad(),
      [an, bn](const Matrix& g) {
        accumulate(an.get(), g);
        accumulate(bn.get(), g);
      },
      "add");
}

Tensor Tape::sub(Tensor a, Tensor b) {
  if (!a.value().same_shape(b.value())) throw NumericError("sub: shape mismatch");
  Matrix out = a.value();
  for (i64 i = 0; i < out.size(); ++i) out.data[std::size_t(i)] -= b.value().data[std::size_t(i)];
  auto an = a.node_ptr(), bn = b.node_ptr();
  return emit(
      std::move(out), a.requires_grad() || b.requires_grad(),
      [an, bn](const Matrix& g) {
        accumulate(an.get(), g);
        if (bn->requires_grad) {
          Matrix neg = g;
          for (double& v : neg.data) v = -v;
          accumulate(bn.get(), neg);
        }
      },
      "sub");
}

Tensor Tape::mul(Tensor a, Tensor b) {
  if (!a.value().same_shape(b.value())) throw NumericError("mul: shape mismatch");
  Matrix out = a.value();
  for (i64 i = 0; i < out.size(); ++i) out.data[std::size_t(i)] *= b.value().data[std::size_t(i)];
  auto an = a.node_ptr(), bn = b.node_ptr();
  return emit(
      std::move(out), a.requires_grad() || b.requires_grad(),
      [an, bn](const Matrix& g) {
        if (an->requires_grad) {
          Matrix da = g;
          for (i64 i = 0; i < da.size(); ++i) da.data[std::size_t(i)] *= bn->value.data[std::size_t(i)];
          accumulate(an.get(), da);
        }
        if (bn->requires_grad) {
          Matrix db = g;
          for (i64 i = 0; i < db.size(); ++i) db.data[std::size_t(i)] *= an->value.data[std::size_t(i)];
          accumulate(bn.get(), db);
        }
      },
      "mul");
}

Tensor Tape::add_rowvec(Tensor a, Tensor bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) throw NumericError("add_rowvec: shape mismatch");
  Matrix out = a.value();
  for (i64 r = 0; r < out.rows; ++r)
    for (i64 c = 0; c < out.cols; ++c) out.at(r, c) += bias.value().at(0, c);
  auto an = a.node_ptr(), bn = bias.node_ptr();
  return emit(
      std::move(out), a.requires_grad() || bias.requires_grad(),
      [an, bn](const Matrix& g) {
        accumulate(an.get(), g);
        if (bn->requires_grad) {
          Matrix db(1, g.cols);
          for (i64 r = 0; r < g.rows; ++r)
            for (i64 c = 0; c < g.cols; ++c) db.at(0, c) += g.at(r, c);
          accumulate(bn.get(), db);
        }
      },
      "add_rowvec");
}

Tensor Tape::scale(Tensor a, double s) {
  Matrix out = a.value();
  for (double& v : out.data) v *= s;
  auto an = a.node_ptr();
  return emit(
      std::move(out), a.requires_grad(),
      [an, s](const Matrix& g) {
        if (!an->requires_grad) return;
        Matrix da = g;
        for (double& v : da.data) v *= s;
        accumulate(an.get(), da);
      },
      "scale");
}

Tensor Tape::add_scalar(Tensor a, double s) {
  Matrix out = a.value();
  for (double& v : out.data) v += s;
  auto an = a.node_ptr();
  return emit(
      std::move(out), a.requires_grad(),
      [an](const Matrix& g) { accumulate(an.get(), g); }, "add_scalar");
}

Tensor Tape::relu(Tensor a) {
  Matrix out = a.value();
  for (double& v : out.data) v = v > 0 ? v : 0.0;
  auto an = a.node_ptr();
  return emit(
      std::move(out), a.requires_grad(),
      [an](const Matrix& g) {
        if (!an->requires_grad) return;
        Matrix da = g;
        for (i64 i = 0; i < da.size(); ++i)
          if (an->value.data[std::size_t(i)] <= 0) da.data[std::size_t(i)] = 0.0;
        accumulate(an.get(), da);
      },
      "relu");
}

Tensor Tape::leaky_relu(Tensor a, double slope) {
  Matrix out = a.value();
  for (double& v : out.data) v = v > 0 ? v : slope * v;
  auto an = a.node_ptr();
  return emit(
      std::move(out), a.requires_grad(),
      [an, slope](const Matrix& g) {
        if (!an->requires_grad) return;
        Matrix da = g;
        for (i64 i = 0; i < da.size(); ++i)
          if (an->value.data[std::size_t(i)] <= 0) da.data[std::size_t(i)] *= slope;
        accumulate(an.get(), da);
      },
      "leaky_relu");
}

Tensor Tape::elu(Tensor a) {
  Matrix out = a.value();
  for (double& v : out.data) v = v > 0 ? v : std::expm1(v);
  auto an = a.node_ptr();
  return emit(
      std::move(out), a.requires_grad(),
      [an](const Matrix& g) {
        if (!an->requires_grad) return;
        Matrix da = g;
        for (i64 i = 0; i < da.size(); ++i) {
          const double x = an->value.data[std::size_t(i)];
          if (x <= 0) da.data[std::size_t(i)] *= std::exp(x);
        }
        accumulate(an.get(), da);
      },
      "elu");
}

Tensor Tape::prelu(Tensor a, Tensor slope) {
  if (slope.rows() != 1 || slope.cols() != 1) throw NumericError("prelu: slope must be 1x1");
  const double s = slope.value().data[0];
  Matrix out = a.value();
  for (double& v : out.data) v = v > 0 ? v : s * v;
  auto an = a.node_ptr(), sn = slope.node_ptr();
  return emit(
      std::move(out), a.requires_grad() || slope.requires_grad(),
      [an, sn, s](const Matrix& g) {
        if (an->requires_grad) {
          Matrix da = g;
          for (i64 i = 0; i < da.size(); ++i)
            if (an->value.data[std::size_t(i)] <= 0) da.data[std::size_t(i)] *= s;
          accumulate(an.get(), da);
        }
        if (sn->requires_grad) {
          double ds = 0.0;
          for (i64 i = 0; i < g.size(); ++i) {
            const double x = an->value.data[std::size_t(i)];
            if (x <= 0) ds += g.data[std::size_t(i)] * x;
          }
          Matrix dm(1, 1);
          dm.data[0] = ds;
          accumulate(sn.get(), dm);
        }
      },
      "prelu");
}

Tensor Tape::dropout(Tensor a, double p, Rng& rng, bool training) {
  if (p < 0.0 || p > 1.0) throw ConfigError("dropout: p outside [0, 1]");
  if (!training || p == 0.0) return a;
  auto an = a.node_ptr();
  if (p == 1.0) {
    Matrix out(a.rows(), a.cols());
    return emit(std::move(out), a.requires_grad(), [](const Matrix&) {}, "dropout");
  }
  const double inv_keep = 1.0 / (1.0 - p);
  std::vector<std::uint8_t> mask(std::size_t(a.value().size()));
  Matrix out = a.value();
  for (i64 i = 0; i < out.size(); ++i) {
    if (rng.bernoulli(p)) {
      mask[std::size_t(i)] = 0;
      out.data[std::size_t(i)] = 0.0;
    } else {
      mask[std::size_t(i)] = 1;
      out.data[std::size_t(i)] *= inv_keep;
    }
  }
  return emit(
      std::move(out), a.requires_grad(),
      [an, mask = std::move(mask), inv_keep](const Matrix& g) {
        if (!an->requires_grad) return;
        Matrix da = g;
        for (i64 i = 0; i < da.size(); ++i)
          da.data[std::size_t(i)] = mask[std::size_t(i)] ? da.data[std::size_t(i)] * inv_keep : 0.0;
        accumulate(an.get(), da);
      },
      "dropout", 0);
}

Tensor Tape::row_l2_normalize(Tensor a, double eps) {
  const Matrix& x = a.value();
  Matrix out = x;
  std::vector<double> norms(std::size_t(x.rows), {});
  std::vector<std::uint8_t> clamped(std::size_t(x.rows), 0);
  for (i64 r = 0; r < x.rows; ++r) {
    double s = 0.0;
    for (i64 c = 0; c < x.cols; ++c) s += x.at(r, c) * x.at(r, c);
    double nrm = std::sqrt(s);
    if (nrm < eps) {
      nrm = eps;
      clamped[std::size_t(r)] = 1;
    }
    norms[std::size_t(r)] = nrm;
    for (i64 c = 0; c < x.cols; ++c) out.at(r, c) /= nrm;
  }
  auto an = a.node_ptr();
  return emit(
      std::move(out), a.requires_grad(),
      [an, norms = std::move(norms), clamped = std::move(clamped)](const Matrix& g) {
        if (!an->requires_grad) return;
        const Matrix& x = an->value;
        Matrix da(x.rows, x.cols);
        for (i64 r = 0; r < x.rows; ++r) {
          const double nrm = norms[std::size_t(r)];
          if (clamped[std::size_t(r)]) {
            for (i64 c = 0; c < x.cols; ++c) da.at(r, c) = g.at(r, c) / nrm;
            continue;
          }
          double dot = 0.0;
          for (i64 c = 0; c < x.cols; ++c) dot += g.at(r, c) * x.at(r, c);
          const double n3 = nrm * nrm * nrm;
          for (i64 c = 0; c < x.cols; ++c)
            da.at(r, c) = g.at(r, c) / nrm - x.at(r, c) * dot / n3;
        }
        accumulate(an.get(), da);
      },
      "row_l2_normalize", std::size_t(a.rows()));
}

Tensor Tape::column_standardize(Tensor a, double eps) {
  const Matrix& x = a.value();
  const i64 n = x.rows;
  Matrix out(x.rows, x.cols);
  std::vector<double> mean(std::size_t(x.cols)), stdev(std::size_t(x.cols));
  std::vector<std::uint8_t> clamped(std::size_t(x.cols), 0);
  for (i64 c = 0; c < x.cols; ++c) {
    double m = 0.0;
    for (i64 r = 0; r < n; ++r) m += x.at(r, c);
    m /= double(n);
    double v = 0.0;
    for (i64 r = 0; r < n; ++r) {
      const double d = x.at(r, c) - m;
      v += d * d;
    }
    v /= double(n);
    double s = std::sqrt(v);
    if (s < eps) {
      s = eps;
      clamped[std::size_t(c)] = 1;
    }
    mean[std::size_t(c)] = m;
    stdev[std::size_t(c)] = s;
    for (i64 r = 0; r < n; ++r) out.at(r, c) = (x.at(r, c) - m) / s;
  }
  auto an = a.node_ptr();
  Matrix yv = out;  // retained for backward
  return emit(
      std::move(out), a.requires_grad(),
      [an, mean = std::move(mean), stdev = std::move(stdev), clamped = std::move(clamped),
       y = std::move(yv)](const Matrix& g) {
        if (!an->requires_grad) return;
        const i64 n = y.rows;
        Matrix da(y.rows, y.cols);
        for (i64 c = 0; c < y.cols; ++c) {
          double gm = 0.0, gym = 0.0;
          for (i64 r = 0; r < n; ++r) {
            gm += g.at(r, c);
            gym += g.at(r, c) * y.at(r, c);
          }
          gm /= double(n);
          gym /= double(n);
          const double s = stdev[std::size_t(c)];
          if (clamped[std::size_t(c)]) {
            for (i64 r = 0; r < n; ++r) da.at(r, c) = (g.at(r, c) - gm) / s;
          } else {
            for (i64 r = 0; r < n; ++r)
              da.at(r, c) = (g.at(r, c) - gm - y.at(r, c) * gym) / s;
          }
        }
        accumulate(an.get(), da);
      },
      "column_standardize", std::size_t(x.size()));
}

Tensor Tape::transpose(Tensor a) {
  const Matrix& x = a.value();
  Matrix out(x.cols, x.rows);
  for (i64 r = 0; r < x.rows; ++r)
    for (i64 c = 0; c < x.cols; ++c) out.at(c, r) = x.at(r, c);
  auto an = a.node_ptr();
  return emit(
      std::move(out), a.requires_grad(),
      [an](const Matrix& g) {
        if (!an->requires_grad) return;
        Matrix da(g.cols, g.rows);
        for (i64 r = 0; r < g.rows; ++r)
          for (i64 c = 0; c < g.cols; ++c) da.at(c, r) = g.at(r, c);
        accumulate(an.get(), da);
      },
      "transpose");
}

Tensor Tape::sum(Tensor a) {
  Matrix out(1, 1);
  for (double v : a.value().data) out.data[0] += v;
  auto an = a.node_ptr();
  return emit(
      std::move(out), a.requires_grad(),
      [an](const Matrix& g) {
        if (!an->requires_grad) return;
        Matrix da(an->value.rows, an->value.cols, g.data[0]);
        accumulate(an.get(), da);
      },
      "sum");
}

Tensor Tape::mean(Tensor a) {
  const double inv = 1.0 / double(a.value().size());
  Matrix out(1, 1);
  for (double v : a.value().data) out.data[0] += v;
  out.data[0] *= inv;
  auto an = a.node_ptr();
  return emit(
      std::move(out), a.requires_grad(),
      [an, inv](const Matrix& g) {
        if (!an->requires_grad) return;
        Matrix da(an->value.rows, an->value.cols, g.data[0] * inv);
        accumulate(an.get(), da);
      },
      "mean");
}

Tensor Tape::exp(Tensor a) {
  Matrix out = a.value();
  for (double& v : out.data) v = std::exp(v);
  auto an = a.node_ptr();
  Matrix yv = out;
  return emit(
      std::move(out), a.requires_grad(),
      [an, y = std::move(yv)](const Matrix& g) {
        if (!an->requires_grad) return;
        Matrix da = g;
        for (i64 i = 0; i < da.size(); ++i) da.data[std::size_t(i)] *= y.data[std::size_t(i)];
        accumulate(an.get(), da);
      },
      "exp", std::size_t(a.value().size()));
}

Tensor Tape::log(Tensor a) {
  Matrix out = a.value();
  for (double& v : out.data) v = std::log(v);
  auto an = a.node_ptr();
  return emit(
      std::move(out), a.requires_grad(),
      [an](const Matrix& g) {
        if (!an->requires_grad) return;
        Matrix da = g;
        for (i64 i = 0; i < da.size(); ++i) da.data[std::size_t(i)] /= an->value.data[std::size_t(i)];
        accumulate(an.get(), da);
      },
      "log");
}

Tensor Tape::pow_int(Tensor a, int k) {
  Matrix out = a.value();
  for (double& v : out.data) v = std::pow(v, k);
  auto an = a.node_ptr();
  return emit(
      std::move(out), a.requires_grad(),
      [an, k](const Matrix& g) {
        if (!an->requires_grad) return;
        Matrix da = g;
        for (i64 i = 0; i < da.size(); ++i)
          da.data[std::size_t(i)] *= double(k) * std::pow(an->value.data[std::size_t(i)], k - 1);
        accumulate(an.get(), da);
      },
      "pow_int");
}

Tensor Tape::gather_rows(Tensor a, const std::vector<i64>& idx) {
  const Matrix& x = a.value();
  Matrix out(i64(idx.size()), x.cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= x.rows) throw NumericError("gather_rows: index out of range");
    std::copy(x.row(idx[i]), x.row(idx[i]) + x.cols, out.row(i64(i)));
  }
  auto an = a.node_ptr();
  return emit(
      std::move(out), a.requires_grad(),
      [an, idx](const Matrix& g) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < idx.size(); ++i) {
          double* dst = an->grad.row(idx[i]);
          const double* src = g.row(i64(i));
          for (i64 c = 0; c < g.cols; ++c) dst[c] += src[c];
        }
      },
      "gather_rows");
}

Tensor Tape::concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw NumericError("concat_cols: empty input");
  const i64 rows = parts[0].rows();
  i64 cols = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw NumericError("concat_cols: row mismatch");
    cols += p.cols();
    rg = rg || p.requires_grad();
  }
  Matrix out(rows, cols);
  i64 off = 0;
  for (const auto& p : parts) {
    for (i64 r = 0; r < rows; ++r)
      std::copy(p.value().row(r), p.value().row(r) + p.cols(), out.row(r) + off);
    off += p.cols();
  }
  std::vector<std::shared_ptr<TensorNode>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node_ptr());
  return emit(
      std::move(out), rg,
      [nodes](const Matrix& g) {
        i64 off = 0;
        for (const auto& n : nodes) {
          if (n->requires_grad) {
            Matrix dp(g.rows, n->value.cols);
            for (i64 r = 0; r < g.rows; ++r)
              std::copy(g.row(r) + off, g.row(r) + off + n->value.cols, dp.row(r));
            accumulate(n.get(), dp);
          }
          off += n->value.cols;
        }
      },
      "concat_cols");
}

Tensor Tape::broadcast_row(Tensor row, i64 n) {
  if (row.rows() != 1) throw NumericError("broadcast_row: input must be 1 x d");
  Matrix out(n, row.cols());
  for (i64 r = 0; r < n; ++r)
    std::copy(row.value().data.begin(), row.value().data.end(), out.row(r));
  auto rn = row.node_ptr();
  return emit(
      std::move(out), row.requires_grad(),
      [rn](const Matrix& g) {
        if (!rn->requires_grad) return;
        Matrix dr(1, g.cols);
        for (i64 r = 0; r < g.rows; ++r)
          for (i64 c = 0; c < g.cols; ++c) dr.at(0, c) += g.at(r, c);
        accumulate(rn.get(), dr);
      },
      "broadcast_row");
}

Tensor Tape::segment_softmax(Tensor scores, const std::vector<i64>& offsets) {
  if (scores.cols() != 1) throw NumericError("segment_softmax: scores must be E x 1");
  const Matrix& s = scores.value();
  Matrix out(s.rows, 1);
  const i64 nseg = i64(offsets.size()) - 1;
  for (i64 r = 0; r < nseg; ++r) {
    const i64 lo = offsets[std::size_t(r)], hi = offsets[std::size_t(r + 1)];
    if (lo == hi) continue;
    double mx = s.data[std::size_t(lo)];
    for (i64 e = lo + 1; e < hi; ++e) mx = std::max(mx, s.data[std::size_t(e)]);
    double z = 0.0;
    for (i64 e = lo; e < hi; ++e) z += std::exp(s.data[std::size_t(e)] - mx);
    for (i64 e = lo; e < hi; ++e) out.data[std::size_t(e)] = std::exp(s.data[std::size_t(e)] - mx) / z;
  }
  auto sn = scores.node_ptr();
  Matrix yv = out;
  return emit(
      std::move(out), scores.requires_grad(),
      [sn, offsets, y = std::move(yv)](const Matrix& g) {
        if (!sn->requires_grad) return;
        Matrix da(y.rows, 1);
        const i64 nseg = i64(offsets.size()) - 1;
        for (i64 r = 0; r < nseg; ++r) {
          const i64 lo = offsets[std::size_t(r)], hi = offsets[std::size_t(r + 1)];
          double dot = 0.0;
          for (i64 e = lo; e < hi; ++e) dot += g.data[std::size_t(e)] * y.data[std::size_t(e)];
          for (i64 e = lo; e < hi; ++e)
            da.data[std::size_t(e)] = y.data[std::size_t(e)] * (g.data[std::size_t(e)] - dot);
        }
        accumulate(sn.get(), da);
      },
      "segment_softmax", std::size_t(s.rows));
}

Tensor Tape::segment_weighted_sum(Tensor alpha, Tensor feats, const std::vector<i64>& offsets) {
  if (alpha.cols() != 1 || alpha.rows() != feats.rows())
    throw NumericError("segment_weighted_sum: shape mismatch");
  const i64 nseg = i64(offsets.size()) - 1;
  Matrix out(nseg, feats.cols());
  const Matrix& av = alpha.value();
  const Matrix& fv = feats.value();
  for (i64 r = 0; r < nseg; ++r) {
    double* orow = out.row(r);
    for (i64 e = offsets[std::size_t(r)]; e < offsets[std::size_t(r + 1)]; ++e) {
      const double w = av.data[std::size_t(e)];
      const double* frow = fv.row(e);
      for (i64 c = 0; c < fv.cols; ++c) orow[c] += w * frow[c];
    }
  }
  auto an = alpha.node_ptr(), fn = feats.node_ptr();
  return emit(
      std::move(out), alpha.requires_grad() || feats.requires_grad(),
      [an, fn, offsets](const Matrix& g) {
        const i64 nseg = i64(offsets.size()) - 1;
        if (an->requires_grad) an->ensure_grad();
        if (fn->requires_grad) fn->ensure_grad();
        for (i64 r = 0; r < nseg; ++r) {
          const double* grow = g.row(r);
          for (i64 e = offsets[std::size_t(r)]; e < offsets[std::size_t(r + 1)]; ++e) {
            if (an->requires_grad) {
              double dot = 0.0;
              const double* frow = fn->value.row(e);
              for (i64 c = 0; c < g.cols; ++c) dot += grow[c] * frow[c];
              an->grad.data[std::size_t(e)] += dot;
            }
            if (fn->requires_grad) {
              const double w = an->value.data[std::size_t(e)];
              double* drow = fn->grad.row(e);
              for (i64 c = 0; c < g.cols; ++c) drow[c] += w * grow[c];
            }
          }
        }
      },
      "segment_weighted_sum");
}

Tensor Tape::softmax_cross_entropy(Tensor logits, const std::vector<i64>& labels) {
  const Matrix& z = logits.value();
  if (i64(labels.size()) != z.rows) throw NumericError("softmax_cross_entropy: label count");
  Matrix probs(z.rows, z.cols);
  double loss = 0.0;
  for (i64 r = 0; r < z.rows; ++r) {
    double mx = z.at(r, 0);
    for (i64 c = 1; c < z.cols; ++c) mx = std::max(mx, z.at(r, c));
    double s = 0.0;
    for (i64 c = 0; c < z.cols; ++c) s += std::exp(z.at(r, c) - mx);
    const double logz = mx + std::log(s);
    for (i64 c = 0; c < z.cols; ++c) probs.at(r, c) = std::exp(z.at(r, c) - logz);
    loss -= z.at(r, labels[std::size_t(r)]) - logz;
  }
  loss /= double(z.rows);
  Matrix out(1, 1);
  out.data[0] = loss;
  auto zn = logits.node_ptr();
  return emit(
      std::move(out), logits.requires_grad(),
      [zn, labels, probs = std::move(probs)](const Matrix& g) {
        if (!zn->requires_grad) return;
        const double scale = g.data[0] / double(probs.rows);
        Matrix dz = probs;
        for (i64 r = 0; r < dz.rows; ++r) dz.at(r, labels[std::size_t(r)]) -= 1.0;
        for (double& v : dz.data) v *= scale;
        accumulate(zn.get(), dz);
      },
      "softmax_cross_entropy", std::size_t(z.size()));
}

Tensor Tape::bce_with_logits(Tensor logits, const Matrix& targets) {
  const Matrix& z = logits.value();
  if (!z.same_shape(targets)) throw NumericError("bce_with_logits: shape mismatch");
  double loss = 0.0;
  for (i64 i = 0; i < z.size(); ++i) {
    const double zi = z.data[std::size_t(i)];
    const double ti = targets.data[std::size_t(i)];
    loss += std::max(zi, 0.0) - zi * ti + std::log1p(std::exp(-std::abs(zi)));
  }
  loss /= double(z.size());
  Matrix out(1, 1);
  out.data[0] = loss;
  auto zn = logits.node_ptr();
  return emit(
      std::move(out), logits.requires_grad(),
      [zn, targets](const Matrix& g) {
        if (!zn->requires_grad) return;
        const double scale = g.data[0] / double(zn->value.size());
        Matrix dz(zn->value.rows, zn->value.cols);
        for (i64 i = 0; i < dz.size(); ++i) {
          const double zi = zn->value.data[std::size_t(i)];
          const double sig = 1.0 / (1.0 + std::exp(-zi));
          dz.data[std::size_t(i)] = scale * (sig - targets.data[std::size_t(i)]);
        }
        accumulate(zn.get(), dz);
      },
      "bce_with_logits");
}

void Tape::backward(Tensor loss) {
  if (loss.rows() != 1 || loss.cols() != 1) throw NumericError("backward: loss must be scalar");
  loss.node()->ensure_grad();
  loss.node()->grad.data[0] = 1.0;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
    if (!grad_ready(it->out)) continue;  // not on the path to the loss
    it->back(it->out->grad);
  }
  steps_.clear();
}

void Tape::clear() {
  steps_.clear();
  act_elems_ = 0;
}

void adam_step(AdamState& state, const std::vector<Tensor>& params) {
  bool any_grad = false;
  for (const auto& p : params)
    if (p.node()->grad.rows == p.rows() && p.node()->grad.cols == p.cols()) any_grad = true;
  if (!any_grad) throw NumericError("adam_step: no gradients populated (missing backward?)");
  ++state.t;
  const double bc1 = 1.0 - std::pow(state.beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, double(state.t));
  for (const auto& p : params) {
    TensorNode* n = p.node();
    n->ensure_grad();
    auto& [m, v] = state.moments[n];
    if (m.rows != n->value.rows || m.cols != n->value.cols) {
      m = Matrix(n->value.rows, n->value.cols);
      v = Matrix(n->value.rows, n->value.cols);
    }
    for (i64 i = 0; i < n->value.size(); ++i) {
      const double g = n->grad.data[std::size_t(i)] + state.weight_decay * n->value.data[std::size_t(i)];
      m.data[std::size_t(i)] = state.beta1 * m.data[std::size_t(i)] + (1.0 - state.beta1) * g;
      v.data[std::size_t(i)] = state.beta2 * v.data[std::size_t(i)] + (1.0 - state.beta2) * g * g;
      const double mhat = m.data[std::size_t(i)] / bc1;
      const double vhat = v.data[std::size_t(i)] / bc2;
      n->value.data[std::size_t(i)] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

Matrix xavier_uniform(i64 fan_in, i64 fan_out, Rng& rng) {
  Matrix w(fan_in, fan_out);
  const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
  for (double& v : w.data) v = limit * (2.0 * rng.uniform() - 1.0);
  return w;
}

Matrix finite_difference(Tensor p, const std::function<double()>& f, double eps) {
  Matrix& val = p.mutable_value();
  Matrix g(val.rows, val.cols);
  for (i64 i = 0; i < val.size(); ++i) {
    const double orig = val.data[std::size_t(i)];
    val.data[std::size_t(i)] = orig + eps;
    const double fp = f();
    val.data[std::size_t(i)] = orig - eps;
    const double fm = f();
    val.data[std::size_t(i)] = orig;
    g.data[std::size_t(i)] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

}  // namespace graphfm::nn
