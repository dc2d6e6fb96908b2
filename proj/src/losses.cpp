#include "dml/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "dml/evaluation.hpp"

namespace dml {

namespace {

double softplus(double z) {
    // log(1 + e^z) without overflow on large |z|.
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
    return z > 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// out += scale * (a - b) applied to row `row` of grad.
void add_scaled_diff(DenseArray& grad, std::size_t row, const EmbeddingBatch& batch,
                     std::size_t i, std::size_t j, double scale) {
    for (std::size_t k = 0; k < batch.dim(); ++k) {
        grad.at(row, k) += scale * (batch.at(i, k) - batch.at(j, k));
    }
}

std::optional<DenseArray> combine_grads(const std::optional<DenseArray>& a,
                                        const std::optional<DenseArray>& b, double lambda) {
    if (!a && !b) return std::nullopt;
    if (a && b && !a->same_shape(*b)) {
        throw ShapeError("combined_loss: gradient shapes disagree");
    }
    DenseArray out = a ? *a : DenseArray::zeros_like(*b);
    if (b) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += lambda * (*b)[i];
    }
    return out;
}

} // namespace

ClassCenters::ClassCenters(std::size_t n_classes, std::size_t dim, double alpha_)
    : centers({n_classes, dim}), alpha(alpha_), counts(n_classes, 0) {
    if (alpha < 0.0 || alpha > 1.0) throw InvalidConfig("ClassCenters: alpha must be in [0, 1]");
}

LossResult softmax_ce(const DenseArray& logits, const std::vector<int>& labels) {
    const std::size_t b = logits.rows();
    const std::size_t n = logits.cols();
    if (n < 2) throw InvalidConfig("softmax_ce: need at least 2 classes");
    if (labels.size() != b) throw ShapeError("softmax_ce: label count does not match batch");

    LossResult out;
    DenseArray grad({b, n});
    double total = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= n) {
            throw InvalidLabel("softmax_ce: label out of range");
        }
        double mx = logits.at(i, 0);
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, logits.at(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) sum += std::exp(logits.at(i, j) - mx);
        double lse = mx + std::log(sum);
        total += lse - logits.at(i, y);
        for (std::size_t j = 0; j < n; ++j) {
            double p = std::exp(logits.at(i, j) - lse);
            grad.at(i, j) = (p - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) / static_cast<double>(b);
        }
    }
    out.value = total / static_cast<double>(b);
    out.grad_logits = std::move(grad);
    return out;
}

LossResult triplet_loss(const EmbeddingBatch& batch, const DistanceMatrix& dists,
                        const TripletSet& triplets, const MarginSpec& margin) {
    if (triplets.empty()) throw EmptyTripletSet("triplet_loss: empty triplet set");
    if (dists.size() != batch.size()) {
        throw ShapeError("triplet_loss: distance matrix does not match batch");
    }
    if (margin.mode == MarginSpec::Mode::hard && margin.m < 0.0) {
        throw InvalidConfig("triplet_loss: hard margin must be >= 0");
    }
    const std::size_t b = batch.size();
    const double inv_t = 1.0 / static_cast<double>(triplets.size());

    LossResult out;
    DenseArray grad({b, batch.dim()});
    double total = 0.0;
    for (const Triplet& t : triplets.triplets) {
        if (t.anchor < 0 || t.positive < 0 || t.negative < 0 ||
            static_cast<std::size_t>(t.anchor) >= b || static_cast<std::size_t>(t.positive) >= b ||
            static_cast<std::size_t>(t.negative) >= b) {
            throw OutOfRange("triplet_loss: triplet index out of range");
        }
        double d_ap = dists(t.anchor, t.positive);
        double d_an = dists(t.anchor, t.negative);
        double weight;  // d phi / d z at z
        if (margin.mode == MarginSpec::Mode::hard) {
            double z = d_ap - d_an + margin.m;
            total += std::max(z, 0.0);
            weight = z > 0.0 ? 1.0 : 0.0;
        } else {
            double z = d_ap - d_an;
            total += softplus(z);
            weight = sigmoid(z);
        }
        if (weight != 0.0) {
            // d(d_ap)/d v_a = 2 (v_a - v_p), d(d_an)/d v_a = 2 (v_a - v_n)
            double s = weight * inv_t;
            add_scaled_diff(grad, t.anchor, batch, t.anchor, t.positive, 2.0 * s);
            add_scaled_diff(grad, t.anchor, batch, t.anchor, t.negative, -2.0 * s);
            add_scaled_diff(grad, t.positive, batch, t.anchor, t.positive, -2.0 * s);
            add_scaled_diff(grad, t.negative, batch, t.anchor, t.negative, 2.0 * s);
        }
    }
    out.value = total * inv_t;
    out.grad_embeddings = std::move(grad);
    return out;
}

LossResult center_loss(const EmbeddingBatch& batch, const ClassCenters& centers) {
    const std::size_t b = batch.size();
    const std::size_t d = batch.dim();
    if (centers.dim() != d) throw ShapeError("center_loss: center dimension mismatch");

    LossResult out;
    DenseArray grad({b, d});
    DenseArray grad_c({centers.n_classes(), d});
    double total = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        int y = batch.labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= centers.n_classes()) {
            throw UnknownClass("center_loss: no center for label");
        }
        for (std::size_t k = 0; k < d; ++k) {
            double diff = batch.at(i, k) - centers.centers.at(y, k);
            total += 0.5 * diff * diff;
            grad.at(i, k) = diff;
            grad_c.at(y, k) -= diff;
        }
    }
    out.value = total;
    out.grad_embeddings = std::move(grad);
    out.grad_centers = std::move(grad_c);
    return out;
}

ClassCenters update_centers(ClassCenters centers, const EmbeddingBatch& batch) {
    const std::size_t d = batch.dim();
    if (centers.dim() != d) throw ShapeError("update_centers: center dimension mismatch");

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        int y = batch.labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= centers.n_classes()) {
            throw UnknownClass("update_centers: no center for label");
        }
        by_class[y].push_back(i);
    }
    for (const auto& [y, members] : by_class) {
        double denom = 1.0 + static_cast<double>(members.size());
        for (std::size_t k = 0; k < d; ++k) {
            double delta = 0.0;
            for (std::size_t i : members) {
                delta += centers.centers.at(y, k) - batch.at(i, k);
            }
            centers.centers.at(y, k) -= centers.alpha * delta / denom;
        }
        centers.counts[y] += static_cast<long>(members.size());
    }
    return centers;
}

LossResult tcl_loss(const EmbeddingBatch& batch, const ClassCenters& centers, double m) {
    const std::size_t b = batch.size();
    const std::size_t d = batch.dim();
    const std::size_t n = centers.n_classes();
    if (n < 2) throw NeedTwoClasses("tcl_loss: need centers for at least 2 classes");
    if (centers.dim() != d) throw ShapeError("tcl_loss: center dimension mismatch");
    if (m < 0.0) throw InvalidConfig("tcl_loss: margin must be >= 0");

    auto center_dist = [&](std::size_t i, std::size_t j) {
        double sq = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            double diff = batch.at(i, k) - centers.centers.at(j, k);
            sq += diff * diff;
        }
        return sq;
    };

    LossResult out;
    DenseArray grad({b, d});
    double total = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        int y = batch.labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= n) {
            throw UnknownClass("tcl_loss: no center for label");
        }
        double d_own = center_dist(i, y);
        std::size_t nearest = n;  // argmin over other-class centers, lowest index on ties
        double d_min = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == static_cast<std::size_t>(y)) continue;
            double dj = center_dist(i, j);
            if (nearest == n || dj < d_min) {
                nearest = j;
                d_min = dj;
            }
        }
        double z = d_own - d_min + m;
        if (z > 0.0) {
            total += z;
            for (std::size_t k = 0; k < d; ++k) {
                grad.at(i, k) += 2.0 * (batch.at(i, k) - centers.centers.at(y, k)) -
                                 2.0 * (batch.at(i, k) - centers.centers.at(nearest, k));
            }
        }
    }
    out.value = total;
    out.grad_embeddings = std::move(grad);
    return out;
}

MagnetConfig assign_magnet_clusters(const EmbeddingBatch& batch, int k_clusters, SeededRng& rng,
                                    double alpha_margin) {
    if (k_clusters < 1) throw InvalidConfig("assign_magnet_clusters: need k >= 1");
    const std::size_t d = batch.dim();

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < batch.size(); ++i) by_class[batch.labels[i]].push_back(i);

    MagnetConfig cfg;
    cfg.k_clusters = k_clusters;
    cfg.alpha_margin = alpha_margin;
    cfg.cluster_assignments.assign(batch.size(), -1);

    std::vector<double> center_values;
    for (const auto& [cls, members] : by_class) {
        if (members.size() < static_cast<std::size_t>(k_clusters)) {
            throw ClassTooSmall("assign_magnet_clusters: class smaller than k");
        }
        DenseArray pts({members.size(), d});
        for (std::size_t r = 0; r < members.size(); ++r) {
            for (std::size_t k = 0; k < d; ++k) pts.at(r, k) = batch.at(members[r], k);
        }
        KMeansResult km = kmeans(pts, k_clusters, rng);
        int base = static_cast<int>(cfg.cluster_class.size());
        for (int k = 0; k < k_clusters; ++k) {
            cfg.cluster_class.push_back(cls);
            for (std::size_t j = 0; j < d; ++j) center_values.push_back(km.centers.at(k, j));
        }
        for (std::size_t r = 0; r < members.size(); ++r) {
            cfg.cluster_assignments[members[r]] = base + km.clustering.assignments[r];
        }
    }
    cfg.cluster_centers = DenseArray({cfg.cluster_class.size(), d}, std::move(center_values));
    return cfg;
}

double magnet_variance(const EmbeddingBatch& batch, const MagnetConfig& config) {
    const std::size_t n = batch.size();
    const std::size_t d = batch.dim();
    if (n < 2) throw BatchTooSmall("magnet_variance: need at least 2 samples");
    if (config.cluster_assignments.size() != n) {
        throw ShapeError("magnet_variance: assignment count does not match batch");
    }
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        int r = config.cluster_assignments[i];
        if (r < 0 || static_cast<std::size_t>(r) >= config.cluster_centers.rows() ||
            config.cluster_class[r] != batch.labels[i]) {
            throw InvalidConfig("magnet_variance: sample assigned outside its own class");
        }
        for (std::size_t k = 0; k < d; ++k) {
            double diff = batch.at(i, k) - config.cluster_centers.at(r, k);
            var += diff * diff;
        }
    }
    return var / static_cast<double>(n - 1);
}

LossResult magnet_loss(const EmbeddingBatch& batch, const MagnetConfig& config,
                       std::optional<double> fixed_variance) {
    const std::size_t n = batch.size();
    const std::size_t d = batch.dim();
    if (n < 2) throw BatchTooSmall("magnet_loss: need at least 2 samples");
    {
        int first = config.cluster_class.empty() ? 0 : config.cluster_class.front();
        bool two = false;
        for (int c : config.cluster_class) two = two || (c != first);
        if (!two) throw NeedTwoClasses("magnet_loss: need clusters from at least 2 classes");
    }

    const std::size_t n_centers = config.cluster_centers.rows();
    auto center_dist = [&](std::size_t i, std::size_t r) {
        double sq = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            double diff = batch.at(i, k) - config.cluster_centers.at(r, k);
            sq += diff * diff;
        }
        return sq;
    };

    // magnet_variance also validates the assignment vector.
    double assignment_var = magnet_variance(batch, config);
    double var = fixed_variance ? *fixed_variance : assignment_var;
    if (var < 1e-12) throw DegenerateVariance("magnet_loss: variance collapsed to zero");

    const double inv_2var = 1.0 / (2.0 * var);
    const double alpha = config.alpha_margin;

    LossResult out;
    DenseArray grad({n, d});
    double total = 0.0;
    std::vector<double> scores(n_centers);
    for (std::size_t i = 0; i < n; ++i) {
        int own = config.cluster_assignments[i];
        double d_own = center_dist(i, own);

        // log-sum-exp over all other-class cluster scores
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < n_centers; ++r) {
            if (config.cluster_class[r] == batch.labels[i]) continue;
            scores[r] = -center_dist(i, r) * inv_2var - alpha;
            mx = std::max(mx, scores[r]);
        }
        double sum = 0.0;
        for (std::size_t r = 0; r < n_centers; ++r) {
            if (config.cluster_class[r] == batch.labels[i]) continue;
            sum += std::exp(scores[r] - mx);
        }
        double lse = mx + std::log(sum);
        total += d_own * inv_2var + alpha + lse;

        // grad_i = [(x_i - mu_own) - sum_r p_r (x_i - mu_r)] / (sigma^2 N)
        double scale = 1.0 / (var * static_cast<double>(n));
        for (std::size_t k = 0; k < d; ++k) {
            grad.at(i, k) += scale * (batch.at(i, k) - config.cluster_centers.at(own, k));
        }
        for (std::size_t r = 0; r < n_centers; ++r) {
            if (config.cluster_class[r] == batch.labels[i]) continue;
            double p = std::exp(scores[r] - lse);
            for (std::size_t k = 0; k < d; ++k) {
                grad.at(i, k) -= scale * p * (batch.at(i, k) - config.cluster_centers.at(r, k));
            }
        }
    }
    out.value = total / static_cast<double>(n);
    out.grad_embeddings = std::move(grad);
    return out;
}

LossResult combined_loss(const LossResult& softmax_part, const LossResult& embedding_part,
                         double lambda) {
    if (lambda < 0.0) throw InvalidConfig("combined_loss: lambda must be >= 0");
    LossResult out;
    out.value = softmax_part.value + lambda * embedding_part.value;
    out.grad_logits = combine_grads(softmax_part.grad_logits, embedding_part.grad_logits, lambda);
    out.grad_embeddings =
        combine_grads(softmax_part.grad_embeddings, embedding_part.grad_embeddings, lambda);
    out.grad_centers = combine_grads(softmax_part.grad_centers, embedding_part.grad_centers, lambda);
    return out;
}

} // namespace dml
