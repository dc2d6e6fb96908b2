#include "dml/reference.hpp"

#include <algorithm>
#include <map>

namespace dml::reference {

TripletSet mine_batch_hard(const DistanceMatrix& dists, const std::vector<int>& labels) {
    TripletSet all = enumerate_all_triplets(labels);
    // Group candidates per anchor, then take the lexicographically best
    // (max positive distance, then lowest p; min negative distance, then lowest n).
    std::map<int, Triplet> chosen;
    for (const Triplet& t : all.triplets) {
        auto it = chosen.find(t.anchor);
        if (it == chosen.end()) {
            chosen.emplace(t.anchor, t);
            continue;
        }
        Triplet& cur = it->second;
        double dp_new = dists(t.anchor, t.positive), dp_cur = dists(cur.anchor, cur.positive);
        if (dp_new > dp_cur || (dp_new == dp_cur && t.positive < cur.positive)) {
            cur.positive = t.positive;
        }
        double dn_new = dists(t.anchor, t.negative), dn_cur = dists(cur.anchor, cur.negative);
        if (dn_new < dn_cur || (dn_new == dn_cur && t.negative < cur.negative)) {
            cur.negative = t.negative;
        }
    }
    TripletSet out;
    out.strategy = MiningStrategy::hard;
    for (const auto& [anchor, t] : chosen) out.triplets.push_back(t);
    if (out.empty()) throw EmptyTripletSet("reference::mine_batch_hard: no eligible anchors");
    return out;
}

TripletSet mine_semi_hard(const DistanceMatrix& dists, const std::vector<int>& labels, double m) {
    TripletSet all = enumerate_all_triplets(labels);
    auto rank = [&](const Triplet& t) {
        // Lower rank wins: priority tier first, then distance, then index.
        double d_ap = dists(t.anchor, t.positive);
        double d_an = dists(t.anchor, t.negative);
        int tier;
        if (d_ap < d_an && d_an < d_ap + m) tier = 0;       // semi-hard
        else if (d_an >= d_ap + m) tier = 1;                // easy
        else tier = 2;                                      // hard
        return std::make_tuple(tier, d_an, t.negative);
    };
    std::map<std::pair<int, int>, Triplet> chosen;
    for (const Triplet& t : all.triplets) {
        auto key = std::make_pair(t.anchor, t.positive);
        auto it = chosen.find(key);
        if (it == chosen.end() || rank(t) < rank(it->second)) {
            chosen.insert_or_assign(key, t);
        }
    }
    TripletSet out;
    out.strategy = MiningStrategy::semi_hard;
    for (const auto& [key, t] : chosen) out.triplets.push_back(t);
    if (out.empty()) throw EmptyTripletSet("reference::mine_semi_hard: no positive pairs");
    return out;
}

bool same_triplets(const TripletSet& a, const TripletSet& b) {
    auto key = [](const Triplet& t) { return std::make_tuple(t.anchor, t.positive, t.negative); };
    std::vector<std::tuple<int, int, int>> ka, kb;
    for (const Triplet& t : a.triplets) ka.push_back(key(t));
    for (const Triplet& t : b.triplets) kb.push_back(key(t));
    std::sort(ka.begin(), ka.end());
    std::sort(kb.begin(), kb.end());
    return ka == kb;
}

} // namespace dml::reference
