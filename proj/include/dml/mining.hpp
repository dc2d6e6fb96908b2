#pragma once

#include <string>
#include <vector>

#include "dml/geometry.hpp"

namespace dml {

/// Position of a negative relative to the anchor-positive pair and margin m:
///   hard       d_an <= d_ap
///   semi_hard  d_ap < d_an < d_ap + m
///   easy       d_an >= d_ap + m
enum class NegativeKind { semi_hard, easy, hard };

const char* to_string(NegativeKind kind);

enum class MiningStrategy { hard, semi_hard, exhaustive };

struct Triplet {
    int anchor = 0;
    int positive = 0;
    int negative = 0;

    bool operator==(const Triplet&) const = default;
};

struct TripletSet {
    std::vector<Triplet> triplets;
    MiningStrategy strategy = MiningStrategy::exhaustive;

    std::size_t size() const { return triplets.size(); }
    bool empty() const { return triplets.empty(); }
};

/// Boundary ties fall to the adjacent closed region: d_an == d_ap is hard,
/// d_an == d_ap + m is easy, everything strictly between is semi-hard.
NegativeKind classify_negative(double d_ap, double d_an, double m);

/// One triplet per anchor whose class has another batch member: the farthest
/// same-class positive and the nearest other-class negative, ties broken by
/// lowest index. Anchors without an in-batch positive are skipped.
TripletSet mine_batch_hard(const DistanceMatrix& dists, const std::vector<int>& labels);

/// One triplet per ordered anchor-positive pair. The negative is the nearest
/// one of the highest-priority nonempty kind, priority semi_hard > easy > hard,
/// ties broken by lowest index.
TripletSet mine_semi_hard(const DistanceMatrix& dists, const std::vector<int>& labels, double m);

/// Every valid (a, p, n): label(a) == label(p), a != p, label(n) != label(a).
/// May be empty.
TripletSet enumerate_all_triplets(const std::vector<int>& labels);

} // namespace dml
