#include "dml/geometry.hpp"

#include <cmath>

namespace dml {

EmbeddingBatch::EmbeddingBatch(DenseArray vecs, std::vector<int> labs, bool is_normalized)
    : vectors(std::move(vecs)), labels(std::move(labs)), normalized(is_normalized) {
    if (vectors.rank() != 2) throw ShapeError("EmbeddingBatch: vectors must be b x d");
    if (vectors.rows() < 1 || vectors.cols() < 1) {
        throw BatchTooSmall("EmbeddingBatch: need b >= 1 and d >= 1");
    }
    if (labels.size() != vectors.rows()) {
        throw ShapeError("EmbeddingBatch: label count does not match row count");
    }
}

NormalizeResult l2_normalize(const EmbeddingBatch& batch, double epsilon) {
    if (!(epsilon > 0.0)) throw InvalidConfig("l2_normalize: epsilon must be positive");
    const std::size_t b = batch.size();
    const std::size_t d = batch.dim();
    DenseArray out = batch.vectors;
    int collapsed = 0;
    for (std::size_t i = 0; i < b; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < d; ++j) sq += out.at(i, j) * out.at(i, j);
        double norm = std::sqrt(sq);
        if (norm < epsilon) ++collapsed;
        double inv = 1.0 / std::max(norm, epsilon);
        for (std::size_t j = 0; j < d; ++j) out.at(i, j) *= inv;
    }
    return {EmbeddingBatch(std::move(out), batch.labels, true), collapsed};
}

DistanceMatrix pairwise_sq_distances(const EmbeddingBatch& batch) {
    const std::size_t b = batch.size();
    if (b < 2) throw BatchTooSmall("pairwise_sq_distances: need b >= 2");
    const std::size_t d = batch.dim();
    DenseArray dists({b, b});
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = i + 1; j < b; ++j) {
            double sq = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                double diff = batch.at(i, k) - batch.at(j, k);
                sq += diff * diff;
            }
            dists.at(i, j) = sq;
            dists.at(j, i) = sq;
        }
    }
    return {std::move(dists)};
}

double sq_distance(const EmbeddingBatch& batch, std::size_t i, std::size_t j) {
    double sq = 0.0;
    for (std::size_t k = 0; k < batch.dim(); ++k) {
        double diff = batch.at(i, k) - batch.at(j, k);
        sq += diff * diff;
    }
    return sq;
}

} // namespace dml
