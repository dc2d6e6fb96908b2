#pragma once

#include "dml/mining.hpp"

namespace dml::reference {

// Brute-force counterparts of the miners, written as plain scans over the
// exhaustive triplet enumeration. They share no selection logic with the
// production miners and exist to cross-check them (tests, minebench).

TripletSet mine_batch_hard(const DistanceMatrix& dists, const std::vector<int>& labels);

TripletSet mine_semi_hard(const DistanceMatrix& dists, const std::vector<int>& labels, double m);

bool same_triplets(const TripletSet& a, const TripletSet& b);

} // namespace dml::reference
