#include "dml/sampling.hpp"

#include <algorithm>

namespace dml {

DatasetIndex DatasetIndex::from_labels(const std::vector<int>& labels) {
    DatasetIndex index;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        int y = labels[i];
        if (y < 0) throw InvalidLabel("DatasetIndex: negative label");
        if (static_cast<std::size_t>(y) >= index.by_class.size()) {
            index.by_class.resize(static_cast<std::size_t>(y) + 1);
        }
        index.by_class[y].push_back(static_cast<int>(i));
    }
    index.total = labels.size();
    return index;
}

std::size_t DatasetIndex::nonempty_classes() const {
    std::size_t n = 0;
    for (const auto& ids : by_class) n += !ids.empty();
    return n;
}

BatchPlan pk_sample(const DatasetIndex& index, int b, int k, SeededRng& rng) {
    if (b < 1 || k < 1) throw InvalidConfig("pk_sample: b and k must be positive");
    if (b % k != 0) throw IndivisibleBatch("pk_sample: b must be divisible by k");
    const int n_groups = b / k;

    std::vector<int> classes;
    for (std::size_t c = 0; c < index.by_class.size(); ++c) {
        if (!index.by_class[c].empty()) classes.push_back(static_cast<int>(c));
    }
    if (static_cast<int>(classes.size()) < n_groups) {
        throw NotEnoughClasses("pk_sample: fewer classes than b/k");
    }

    // Partial Fisher-Yates: the first n_groups entries become the draw.
    for (int i = 0; i < n_groups; ++i) {
        std::size_t j = i + rng.below(classes.size() - i);
        std::swap(classes[i], classes[j]);
    }

    BatchPlan plan;
    plan.sample_ids.reserve(b);
    plan.labels.reserve(b);
    for (int g = 0; g < n_groups; ++g) {
        int cls = classes[g];
        const std::vector<int>& ids = index.by_class[cls];
        std::vector<int> pool = ids;
        if (pool.size() >= static_cast<std::size_t>(k)) {
            for (int i = 0; i < k; ++i) {
                std::size_t j = i + rng.below(pool.size() - i);
                std::swap(pool[i], pool[j]);
                plan.sample_ids.push_back(pool[i]);
                plan.labels.push_back(cls);
            }
        } else {
            // Small classes repeat: cycle a shuffled copy so every sample is
            // covered before any repeats.
            rng.shuffle(pool);
            for (int i = 0; i < k; ++i) {
                plan.sample_ids.push_back(pool[i % pool.size()]);
                plan.labels.push_back(cls);
            }
        }
    }
    return plan;
}

ImbalancedRound imbalanced_round(const DatasetIndex& index, int b, int n_b,
                                 const EmbedFn& embed_fn, double margin, SeededRng& rng) {
    if (b < 3) throw InvalidConfig("imbalanced_round: need b >= 3");
    if (n_b < 1) throw InvalidConfig("imbalanced_round: need n_b >= 1");
    if (index.total == 0) throw EmptyInput("imbalanced_round: empty dataset");

    // Flatten the index once so draws are uniform over all samples.
    std::vector<int> all_ids;
    all_ids.reserve(index.total);
    for (const auto& ids : index.by_class) {
        all_ids.insert(all_ids.end(), ids.begin(), ids.end());
    }
    std::sort(all_ids.begin(), all_ids.end());

    ImbalancedRound round;
    round.pool_ids.reserve(static_cast<std::size_t>(n_b) * b);
    for (int i = 0; i < n_b * b; ++i) {
        round.pool_ids.push_back(all_ids[rng.below(all_ids.size())]);
    }

    EmbeddingBatch pooled = embed_fn(round.pool_ids);
    if (pooled.size() != round.pool_ids.size()) {
        throw ShapeError("imbalanced_round: embed_fn returned wrong batch size");
    }
    DistanceMatrix dists = pairwise_sq_distances(pooled);
    const std::vector<int>& labels = pooled.labels;

    bool any_pair = false;
    std::vector<Triplet> found;
    const std::size_t pool = round.pool_ids.size();
    for (std::size_t a = 0; a < pool; ++a) {
        for (std::size_t p = 0; p < pool; ++p) {
            if (p == a || labels[p] != labels[a]) continue;
            any_pair = true;
            double d_ap = dists(a, p);
            int best = -1;
            double best_d = 0.0;
            for (std::size_t n = 0; n < pool; ++n) {
                if (labels[n] == labels[a]) continue;
                double d_an = dists(a, n);
                if (classify_negative(d_ap, d_an, margin) != NegativeKind::semi_hard) continue;
                if (best < 0 || d_an < best_d) {
                    best = static_cast<int>(n);
                    best_d = d_an;
                }
            }
            if (best >= 0) {
                found.push_back({static_cast<int>(a), static_cast<int>(p), best});
            } else {
                ++round.pairs_without_semi_hard;
            }
        }
    }
    if (!any_pair) throw EmptyTripletSet("imbalanced_round: no positive pairs in the pooled draw");

    const std::size_t cap = static_cast<std::size_t>(b) / 3;
    if (found.size() > cap) {
        rng.shuffle(found);
        found.resize(cap);
    }

    round.triplets.strategy = MiningStrategy::semi_hard;
    for (std::size_t i = 0; i < found.size(); ++i) {
        const Triplet& t = found[i];
        round.train_ids.push_back(round.pool_ids[t.anchor]);
        round.train_ids.push_back(round.pool_ids[t.positive]);
        round.train_ids.push_back(round.pool_ids[t.negative]);
        int base = static_cast<int>(3 * i);
        round.triplets.triplets.push_back({base, base + 1, base + 2});
    }
    return round;
}

} // namespace dml
