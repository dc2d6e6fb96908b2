#include "dml/mining.hpp"

namespace dml {

const char* to_string(NegativeKind kind) {
    switch (kind) {
        case NegativeKind::semi_hard: return "semi_hard";
        case NegativeKind::easy: return "easy";
        case NegativeKind::hard: return "hard";
    }
    return "unknown";
}

NegativeKind classify_negative(double d_ap, double d_an, double m) {
    if (d_ap < 0.0 || d_an < 0.0) throw OutOfRange("classify_negative: distances must be >= 0");
    if (!(m > 0.0)) throw InvalidConfig("classify_negative: margin must be positive");
    if (d_an <= d_ap) return NegativeKind::hard;
    if (d_an < d_ap + m) return NegativeKind::semi_hard;
    return NegativeKind::easy;
}

TripletSet mine_batch_hard(const DistanceMatrix& dists, const std::vector<int>& labels) {
    const std::size_t b = labels.size();
    if (dists.size() != b) throw ShapeError("mine_batch_hard: labels do not match matrix");
    TripletSet out;
    out.strategy = MiningStrategy::hard;
    for (std::size_t a = 0; a < b; ++a) {
        int best_p = -1, best_n = -1;
        double far_p = -1.0, near_n = 0.0;
        for (std::size_t j = 0; j < b; ++j) {
            if (j == a) continue;
            if (labels[j] == labels[a]) {
                if (dists(a, j) > far_p) {
                    far_p = dists(a, j);
                    best_p = static_cast<int>(j);
                }
            } else {
                if (best_n < 0 || dists(a, j) < near_n) {
                    near_n = dists(a, j);
                    best_n = static_cast<int>(j);
                }
            }
        }
        if (best_p >= 0 && best_n >= 0) {
            out.triplets.push_back({static_cast<int>(a), best_p, best_n});
        }
    }
    if (out.empty()) throw EmptyTripletSet("mine_batch_hard: no eligible anchors");
    return out;
}

TripletSet mine_semi_hard(const DistanceMatrix& dists, const std::vector<int>& labels, double m) {
    const std::size_t b = labels.size();
    if (dists.size() != b) throw ShapeError("mine_semi_hard: labels do not match matrix");
    if (!(m > 0.0)) throw InvalidConfig("mine_semi_hard: margin must be positive");
    TripletSet out;
    out.strategy = MiningStrategy::semi_hard;
    for (std::size_t a = 0; a < b; ++a) {
        for (std::size_t p = 0; p < b; ++p) {
            if (p == a || labels[p] != labels[a]) continue;
            double d_ap = dists(a, p);
            // Nearest negative per kind; the priority fallback picks the
            // first nonempty tier in the order semi_hard, easy, hard.
            int best[3] = {-1, -1, -1};
            double best_d[3] = {0.0, 0.0, 0.0};
            for (std::size_t n = 0; n < b; ++n) {
                if (labels[n] == labels[a]) continue;
                double d_an = dists(a, n);
                int kind = static_cast<int>(classify_negative(d_ap, d_an, m));
                if (best[kind] < 0 || d_an < best_d[kind]) {
                    best[kind] = static_cast<int>(n);
                    best_d[kind] = d_an;
                }
            }
            for (int kind : {static_cast<int>(NegativeKind::semi_hard),
                             static_cast<int>(NegativeKind::easy),
                             static_cast<int>(NegativeKind::hard)}) {
                if (best[kind] >= 0) {
                    out.triplets.push_back({static_cast<int>(a), static_cast<int>(p), best[kind]});
                    break;
                }
            }
        }
    }
    if (out.empty()) throw EmptyTripletSet("mine_semi_hard: no positive pairs");
    return out;
}

TripletSet enumerate_all_triplets(const std::vector<int>& labels) {
    const std::size_t b = labels.size();
    TripletSet out;
    out.strategy = MiningStrategy::exhaustive;
    for (std::size_t a = 0; a < b; ++a) {
        for (std::size_t p = 0; p < b; ++p) {
            if (p == a || labels[p] != labels[a]) continue;
            for (std::size_t n = 0; n < b; ++n) {
                if (labels[n] == labels[a]) continue;
                out.triplets.push_back({static_cast<int>(a), static_cast<int>(p),
                                        static_cast<int>(n)});
            }
        }
    }
    return out;
}

} // namespace dml
