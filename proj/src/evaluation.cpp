#include "dml/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"

namespace dml {

namespace {

double point_dist(const DenseArray& points, std::size_t i, const DenseArray& centers,
                  std::size_t c) {
    double sq = 0.0;
    for (std::size_t k = 0; k < points.cols(); ++k) {
        double diff = points.at(i, k) - centers.at(c, k);
        sq += diff * diff;
    }
    return sq;
}

std::size_t count_distinct_rows(const DenseArray& points) {
    std::set<std::vector<double>> rows;
    for (std::size_t i = 0; i < points.rows(); ++i) {
        std::vector<double> row(points.cols());
        for (std::size_t k = 0; k < points.cols(); ++k) row[k] = points.at(i, k);
        rows.insert(std::move(row));
    }
    return rows.size();
}

} // namespace

KMeansResult kmeans(const DenseArray& points, int k, SeededRng& rng, int max_iters) {
    const std::size_t n = points.rows();
    const std::size_t d = points.cols();
    if (k < 1) throw InvalidConfig("kmeans: need k >= 1");
    if (static_cast<std::size_t>(k) > n || static_cast<std::size_t>(k) > count_distinct_rows(points)) {
        throw KTooLarge("kmeans: k exceeds the number of distinct points");
    }

    DenseArray centers({static_cast<std::size_t>(k), d});
    auto copy_point_to_center = [&](std::size_t src, std::size_t dst) {
        for (std::size_t j = 0; j < d; ++j) centers.at(dst, j) = points.at(src, j);
    };

    // k-means++ seeding
    copy_point_to_center(rng.below(n), 0);
    std::vector<double> best_d(n);
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double nearest = point_dist(points, i, centers, 0);
            for (int j = 1; j < c; ++j) nearest = std::min(nearest, point_dist(points, i, centers, j));
            best_d[i] = nearest;
            total += nearest;
        }
        // Weighted draw over points with positive mass; already-chosen points
        // have zero mass and are never reseeded.
        std::size_t pick = n;
        double target = rng.uniform() * total;
        double run = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (best_d[i] <= 0.0) continue;
            run += best_d[i];
            pick = i;
            if (run > target) break;
        }
        if (pick == n) throw KTooLarge("kmeans: fewer distinct points than clusters");
        copy_point_to_center(pick, c);
    }

    KMeansResult result;
    result.clustering.k = k;
    result.clustering.assignments.assign(n, 0);
    std::vector<int> prev(n, -1);

    for (int iter = 0; iter < max_iters; ++iter) {
        result.iterations = iter + 1;
        // assign, lowest index on ties
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double bd = point_dist(points, i, centers, 0);
            for (int c = 1; c < k; ++c) {
                double dc = point_dist(points, i, centers, c);
                if (dc < bd) {
                    bd = dc;
                    best = c;
                }
            }
            result.clustering.assignments[i] = best;
        }
        // empty clusters take the point farthest from their previous center;
        // points claimed this way are off limits to later empty clusters
        std::vector<std::size_t> sizes(k, 0);
        for (int a : result.clustering.assignments) ++sizes[a];
        std::vector<bool> claimed(n, false);
        for (int c = 0; c < k; ++c) {
            if (sizes[c] > 0) continue;
            std::size_t far = n;
            double fd = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (claimed[i] || sizes[result.clustering.assignments[i]] <= 1) continue;
                double dc = point_dist(points, i, centers, c);
                if (dc > fd) {
                    fd = dc;
                    far = i;
                }
            }
            if (far == n) continue;
            --sizes[result.clustering.assignments[far]];
            result.clustering.assignments[far] = c;
            sizes[c] = 1;
            claimed[far] = true;
        }
        if (result.clustering.assignments == prev) break;
        prev = result.clustering.assignments;
        // recompute means
        centers.fill(0.0);
        std::vector<double> counts(k, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            int c = result.clustering.assignments[i];
            counts[c] += 1.0;
            for (std::size_t j = 0; j < d; ++j) centers.at(c, j) += points.at(i, j);
        }
        for (int c = 0; c < k; ++c) {
            for (std::size_t j = 0; j < d; ++j) centers.at(c, j) /= counts[c];
        }
    }

    result.centers = std::move(centers);
    result.sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        result.sse += point_dist(points, i, result.centers, result.clustering.assignments[i]);
    }
    return result;
}

std::map<int, double> recall_at_k(const EmbeddingBatch& batch, const std::vector<int>& ks) {
    const std::size_t b = batch.size();
    if (b < 2) throw BatchTooSmall("recall_at_k: need b >= 2");
    int max_k = 0;
    for (int k : ks) {
        if (k < 1) throw InvalidConfig("recall_at_k: K must be >= 1");
        if (static_cast<std::size_t>(k) >= b) throw KTooLarge("recall_at_k: K must be < b");
        max_k = std::max(max_k, k);
    }

    DistanceMatrix dists = pairwise_sq_distances(batch);
    std::map<int, double> hits;
    for (int k : ks) hits[k] = 0.0;

    std::vector<std::size_t> order(b);
    for (std::size_t q = 0; q < b; ++q) {
        order.clear();
        for (std::size_t j = 0; j < b; ++j) {
            if (j != q) order.push_back(j);
        }
        std::partial_sort(order.begin(), order.begin() + max_k, order.end(),
                          [&](std::size_t x, std::size_t y) {
                              if (dists(q, x) != dists(q, y)) return dists(q, x) < dists(q, y);
                              return x < y;
                          });
        int first_match = -1;
        for (int r = 0; r < max_k; ++r) {
            if (batch.labels[order[r]] == batch.labels[q]) {
                first_match = r;
                break;
            }
        }
        if (first_match >= 0) {
            for (int k : ks) {
                if (first_match < k) hits[k] += 1.0;
            }
        }
    }
    for (auto& [k, v] : hits) v /= static_cast<double>(b);
    return hits;
}

namespace {

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
    std::map<int, int> fwd, bwd;
    for (std::size_t i = 0; i < a.size(); ++i) {
        auto [itf, newf] = fwd.emplace(a[i], b[i]);
        if (!newf && itf->second != b[i]) return false;
        auto [itb, newb] = bwd.emplace(b[i], a[i]);
        if (!newb && itb->second != a[i]) return false;
    }
    return true;
}

} // namespace

double nmi(const Clustering& truth, const Clustering& learned) {
    if (truth.assignments.size() != learned.assignments.size()) {
        throw ShapeError("nmi: clusterings cover different sample counts");
    }
    const std::size_t n = truth.assignments.size();
    if (n == 0) throw EmptyInput("nmi: empty clusterings");

    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> pa, pb;
    for (std::size_t i = 0; i < n; ++i) {
        joint[{truth.assignments[i], learned.assignments[i]}] += 1.0;
        pa[truth.assignments[i]] += 1.0;
        pb[learned.assignments[i]] += 1.0;
    }
    double inv_n = 1.0 / static_cast<double>(n);
    double ha = 0.0, hb = 0.0, mi = 0.0;
    for (auto& [c, cnt] : pa) {
        double p = cnt * inv_n;
        ha -= p * std::log(p);
    }
    for (auto& [c, cnt] : pb) {
        double p = cnt * inv_n;
        hb -= p * std::log(p);
    }
    if (ha <= 0.0 || hb <= 0.0) {
        return same_partition(truth.assignments, learned.assignments) ? 1.0 : 0.0;
    }
    for (auto& [key, cnt] : joint) {
        double p = cnt * inv_n;
        double px = pa[key.first] * inv_n;
        double py = pb[key.second] * inv_n;
        mi += p * std::log(p / (px * py));
    }
    return mi / std::sqrt(ha * hb);
}

AccuracyReport accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size()) throw ShapeError("accuracy: length mismatch");
    if (labels.empty()) throw EmptyInput("accuracy: empty input");
    AccuracyReport out;
    std::map<int, double> correct, total;
    double hit = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        total[labels[i]] += 1.0;
        if (predictions[i] == labels[i]) {
            correct[labels[i]] += 1.0;
            hit += 1.0;
        }
    }
    out.micro = hit / static_cast<double>(labels.size());
    double sum = 0.0;
    for (auto& [cls, cnt] : total) {
        double acc = correct[cls] / cnt;
        out.per_class[cls] = acc;
        sum += acc;
    }
    out.macro = sum / static_cast<double>(total.size());
    return out;
}

EvalReport evaluate_embeddings(const EmbeddingBatch& batch, const std::vector<int>& ks,
                               SeededRng& rng, const AccuracyReport* acc) {
    EvalReport report;
    report.recall_at = recall_at_k(batch, ks);

    std::set<int> classes(batch.labels.begin(), batch.labels.end());
    Clustering truth{batch.labels, static_cast<int>(classes.size())};
    KMeansResult km = kmeans(batch.vectors, static_cast<int>(classes.size()), rng);
    report.nmi = nmi(truth, km.clustering);

    if (acc) {
        report.micro_acc = acc->micro;
        report.macro_acc = acc->macro;
        report.per_class = acc->per_class;
    }
    return report;
}

std::string eval_report_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    for (const auto& [k, v] : report.recall_at) {
        j["recall@" + std::to_string(k)] = v;
    }
    j["nmi"] = report.nmi;
    j["micro_acc"] = report.micro_acc;
    j["macro_acc"] = report.macro_acc;
    nlohmann::ordered_json per;
    for (const auto& [cls, v] : report.per_class) per[std::to_string(cls)] = v;
    j["per_class"] = per;
    return j.dump(2);
}

} // namespace dml
