#pragma once

#include <optional>
#include <vector>

#include "dml/geometry.hpp"
#include "dml/mining.hpp"

namespace dml {

/// Value plus whichever analytic gradients the loss defines. Each gradient
/// is exact for the piecewise-smooth objective with mining indices, cluster
/// assignments and center argmins held fixed.
struct LossResult {
    double value = 0.0;
    std::optional<DenseArray> grad_embeddings;  // b x d
    std::optional<DenseArray> grad_logits;      // b x n
    std::optional<DenseArray> grad_centers;     // n x d
};

/// Per-class center vectors with the moving-average update state.
struct ClassCenters {
    DenseArray centers;        // n x d
    double alpha = 0.5;        // center learning rate, in [0, 1]
    std::vector<long> counts;  // samples that have contributed to each center

    ClassCenters() = default;
    ClassCenters(std::size_t n_classes, std::size_t dim, double alpha);

    std::size_t n_classes() const { return centers.rows(); }
    std::size_t dim() const { return centers.cols(); }
};

/// Triplet margin handling: a fixed hinge margin m, or the soft variant that
/// replaces the hinge (and the additive margin) with softplus(d_ap - d_an).
struct MarginSpec {
    enum class Mode { hard, soft };
    Mode mode = Mode::hard;
    double m = 0.2;

    static MarginSpec hard(double m) { return {Mode::hard, m}; }
    static MarginSpec soft() { return {Mode::soft, 0.0}; }
};

/// Mean cross-entropy over the batch, max-subtraction stabilized.
/// grad_logits = (softmax - onehot) / b.
LossResult softmax_ce(const DenseArray& logits, const std::vector<int>& labels);

/// Mean over triplets of phi(d_ap - d_an + m) with phi = hinge (hard mode),
/// or of softplus(d_ap - d_an) (soft mode). Values are read from `dists`;
/// gradients chain through the squared distances using `batch`, which must be
/// the batch the distances were computed from.
LossResult triplet_loss(const EmbeddingBatch& batch, const DistanceMatrix& dists,
                        const TripletSet& triplets, const MarginSpec& margin);

/// 0.5 * sum_i ||x_i - c_{y_i}||^2 (sum over the batch).
/// grad_centers is diagnostic; center maintenance goes through update_centers.
LossResult center_loss(const EmbeddingBatch& batch, const ClassCenters& centers);

/// Moving-average center update: for each class j present in the batch,
///   delta_j = sum_{i: y_i = j} (c_j - x_i) / (1 + |{i: y_i = j}|)
///   c_j <- c_j - alpha * delta_j.
ClassCenters update_centers(ClassCenters centers, const EmbeddingBatch& batch);

/// Sum over the batch of hinge(d(x_i, own center) - min over other-class
/// centers + m); the argmin center is held fixed for the gradient.
LossResult tcl_loss(const EmbeddingBatch& batch, const ClassCenters& centers, double m);

/// Per-class clustering backing the magnet loss: every sample is assigned to
/// one of k clusters of its own class.
struct MagnetConfig {
    int k_clusters = 1;
    double alpha_margin = 0.0;
    std::vector<int> cluster_assignments;  // per sample: row into cluster_centers
    DenseArray cluster_centers;            // (present classes * k) x d
    std::vector<int> cluster_class;        // class of each center row
};

/// Runs k-means (k = k_clusters) separately inside each class present in the
/// batch. Every class needs at least k samples.
MagnetConfig assign_magnet_clusters(const EmbeddingBatch& batch, int k_clusters, SeededRng& rng,
                                    double alpha_margin = 0.0);

/// Shared variance of all samples around their assigned cluster centers,
/// sum ||x_i - mu_own||^2 / (N - 1).
double magnet_variance(const EmbeddingBatch& batch, const MagnetConfig& config);

/// Mean over samples of -log of the ratio of the own-cluster Gaussian score
/// to the summed scores of all other-class clusters, with the shared variance
/// sigma^2 estimated from the current assignment. Centers and sigma^2 are
/// treated as constants for the gradient; pass `fixed_variance` to evaluate
/// the loss with sigma^2 frozen (what the gradient differentiates). The value
/// may be negative.
LossResult magnet_loss(const EmbeddingBatch& batch, const MagnetConfig& config,
                       std::optional<double> fixed_variance = std::nullopt);

/// L = softmax_part + lambda * embedding_part, gradients combined linearly.
LossResult combined_loss(const LossResult& softmax_part, const LossResult& embedding_part,
                         double lambda);

} // namespace dml
