#pragma once

#include <vector>

#include "dml/tensor.hpp"

namespace dml {

/// A batch of embedding vectors (b x d) with one class label per row.
struct EmbeddingBatch {
    DenseArray vectors;       // b x d
    std::vector<int> labels;  // length b
    bool normalized = false;

    EmbeddingBatch() = default;
    EmbeddingBatch(DenseArray vecs, std::vector<int> labs, bool is_normalized = false);

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return vectors.cols(); }
    double at(std::size_t i, std::size_t j) const { return vectors.at(i, j); }
};

struct NormalizeResult {
    EmbeddingBatch batch;
    int collapse_count = 0;  // rows whose pre-normalization norm fell below epsilon
};

/// Scales each row onto the unit sphere: row / max(||row||, epsilon).
/// Rows with norm below epsilon are left near zero and counted as collapsed
/// rather than raising an error, so a training loop can observe mode collapse.
NormalizeResult l2_normalize(const EmbeddingBatch& batch, double epsilon = 1e-12);

/// b x b matrix of squared Euclidean distances.
struct DistanceMatrix {
    DenseArray values;

    std::size_t size() const { return values.rows(); }
    double operator()(std::size_t i, std::size_t j) const { return values.at(i, j); }
};

/// values[i][j] = ||v_i - v_j||^2. The upper triangle is computed once and
/// mirrored, so symmetry is exact. Requires b >= 2.
DistanceMatrix pairwise_sq_distances(const EmbeddingBatch& batch);

/// Squared distance between two rows of a batch.
double sq_distance(const EmbeddingBatch& batch, std::size_t i, std::size_t j);

} // namespace dml
