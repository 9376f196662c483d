#pragma once

#include "graphfm/graph.hpp"
#include "graphfm/tensor.hpp"

namespace graphfm {

// --- metrics ---

// Probability a random positive scores above a random negative; ties count
// one half. O(n log n) by rank statistics.
double auc_score(const std::vector<double>& scores, const std::vector<int>& labels);

// Average precision: precision at each positive, swept over thresholds with
// tied scores grouped.
double average_precision(const std::vector<double>& scores, const std::vector<int>& labels);

// Normalized mutual information I(U;V) / sqrt(H(U) H(V)), natural log.
double nmi_score(const std::vector<i64>& a, const std::vector<i64>& b);

// Adjusted Rand index.
double ari_score(const std::vector<i64>& a, const std::vector<i64>& b);

double accuracy_score(const std::vector<i64>& pred, const std::vector<i64>& truth);

// --- clustering ---

struct KMeansResult {
  std::vector<i64> assignment;
  Matrix centers;
  double inertia = 0.0;
};

// k-means++ seeding + Lloyd iterations, best of n_restarts by inertia.
KMeansResult kmeans(const Matrix& x, i64 k, u64 seed, i64 n_restarts = 5, i64 max_iter = 100);

// --- downstream probes (frozen embeddings) ---

struct ProbeConfig {
  i64 hidden_dim = 256;
  i64 num_layers = 1;  // hidden layers; 0 = linear probe
  double lr = 1e-2;
  double weight_decay = 1e-5;
  double dropout = 0.0;
  i64 epochs = 300;
  i64 patience = 30;
  u64 seed = 0;
};

struct LinkDecoderConfig {
  i64 channels = 256;
  i64 num_layers = 2;
  double lr = 1e-2;
  double weight_decay = 0.0;
  i64 epochs = 200;
  i64 patience = 20;
  u64 seed = 0;
};

struct NodeClsResult {
  double accuracy = 0.0;
  double val_accuracy = 0.0;
};

struct LinkPredResult {
  double auc = 0.0;
  double ap = 0.0;
  double val_auc = 0.0;
};

struct ClusteringResult {
  double nmi = 0.0;
  double ari = 0.0;
};

// MLP probe on frozen embeddings using the dataset's node split.
NodeClsResult eval_node_classification(const Matrix& h, const DatasetBundle& data,
                                       const ProbeConfig& cfg);

// Hadamard-product MLP decoder trained on lp_train edges plus resampled
// negatives; reports AUC / AP on the held-out test split.
LinkPredResult eval_link_prediction(const Matrix& h, const DatasetBundle& data,
                                    const LinkDecoderConfig& cfg);

// k-means with k = number of classes, scored against the labels.
ClusteringResult eval_node_clustering(const Matrix& h, const DatasetBundle& data, u64 seed);

}  // namespace graphfm
