#pragma once

#include <functional>
#include <vector>

#include "dml/mining.hpp"

namespace dml {

/// Per-class sample-id lists for a labeled dataset.
struct DatasetIndex {
    std::vector<std::vector<int>> by_class;  // class id -> sample ids
    std::size_t total = 0;

    static DatasetIndex from_labels(const std::vector<int>& labels);

    std::size_t n_classes() const { return by_class.size(); }
    std::size_t class_count(std::size_t c) const { return by_class[c].size(); }
    std::size_t nonempty_classes() const;
};

struct BatchPlan {
    std::vector<int> sample_ids;  // length b
    std::vector<int> labels;      // class of each slot
};

/// Balanced batch: b/k distinct classes drawn uniformly without replacement,
/// k samples per class (without replacement when the class is large enough,
/// with replacement otherwise).
BatchPlan pk_sample(const DatasetIndex& index, int b, int k, SeededRng& rng);

using EmbedFn = std::function<EmbeddingBatch(const std::vector<int>& sample_ids)>;

struct ImbalancedRound {
    TripletSet triplets;             // indices into train_ids (3i, 3i+1, 3i+2)
    std::vector<int> train_ids;      // flattened triplet members, <= b ids
    std::vector<int> pool_ids;       // the n_b * b pooled draw
    int pairs_without_semi_hard = 0; // positive pairs skipped for lack of one
};

/// One round of the imbalanced-data procedure: pool n_b uniform batches of
/// size b, embed them, pick the nearest semi-hard negative for every ordered
/// positive pair (pairs without one are skipped and counted), shuffle and
/// truncate to b/3 triplets when more were found, and flatten the surviving
/// triplet members into the ids for the training forward pass.
ImbalancedRound imbalanced_round(const DatasetIndex& index, int b, int n_b,
                                 const EmbedFn& embed_fn, double margin, SeededRng& rng);

} // namespace dml
