#pragma once

#include <map>
#include <string>
#include <vector>

#include "dml/geometry.hpp"

namespace dml {

struct Clustering {
    std::vector<int> assignments;  // per sample, in [0, k)
    int k = 0;
};

struct KMeansResult {
    Clustering clustering;
    DenseArray centers;  // k x d
    double sse = 0.0;
    int iterations = 0;
};

/// k-means++ seeding followed by Lloyd iterations until the assignment
/// reaches a fixpoint or max_iters. An emptied cluster is reseeded to the
/// point farthest from that cluster's previous center.
KMeansResult kmeans(const DenseArray& points, int k, SeededRng& rng, int max_iters = 100);

/// For each query, success means one of its K nearest neighbors (self
/// excluded, squared Euclidean, lowest index on ties) shares the query label.
std::map<int, double> recall_at_k(const EmbeddingBatch& batch, const std::vector<int>& ks);

/// Normalized mutual information I(A,B)/sqrt(H(A)H(B)) from the joint
/// contingency table (natural log). When either entropy is zero the ratio is
/// 0/0; we return 1 if the two clusterings are identical as partitions, else 0.
double nmi(const Clustering& truth, const Clustering& learned);

struct AccuracyReport {
    double micro = 0.0;
    double macro = 0.0;
    std::map<int, double> per_class;
};

/// micro = overall correct fraction; per_class = correct fraction per label
/// class; macro = unweighted mean of per_class over classes present.
AccuracyReport accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

struct EvalReport {
    std::map<int, double> recall_at;
    double nmi = 0.0;
    double micro_acc = 0.0;
    double macro_acc = 0.0;
    std::map<int, double> per_class;
};

/// Recall@K plus NMI of a k-means clustering (k = number of ground-truth
/// classes) against the labels. Accuracy fields are filled when `acc` is given.
EvalReport evaluate_embeddings(const EmbeddingBatch& batch, const std::vector<int>& ks,
                               SeededRng& rng, const AccuracyReport* acc = nullptr);

/// JSON with the fixed key names recall@K, nmi, micro_acc, macro_acc, per_class.
std::string eval_report_json(const EvalReport& report);

} // namespace dml
