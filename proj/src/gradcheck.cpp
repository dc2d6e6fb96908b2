#include "dml/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dml/losses.hpp"
#include "dml/network.hpp"

namespace dml {

namespace {

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4});
}

double max_rel_err(const DenseArray& a, const DenseArray& b) {
    double mx = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) mx = std::max(mx, rel_err(a[i], b[i]));
    return mx;
}

EmbeddingBatch random_batch(SeededRng& rng, std::size_t b, std::size_t d, int n_classes) {
    DenseArray vecs({b, d});
    std::vector<int> labels(b);
    for (std::size_t i = 0; i < b; ++i) {
        labels[i] = static_cast<int>(i % n_classes);
        for (std::size_t j = 0; j < d; ++j) vecs.at(i, j) = rng.uniform(-1.0, 1.0);
    }
    return {std::move(vecs), std::move(labels)};
}

EmbeddingBatch batch_from_flat(const DenseArray& flat, const EmbeddingBatch& like) {
    DenseArray vecs({like.size(), like.dim()});
    for (std::size_t i = 0; i < vecs.size(); ++i) vecs[i] = flat[i];
    return {std::move(vecs), like.labels, like.normalized};
}

DenseArray flatten_batch(const EmbeddingBatch& batch) {
    DenseArray flat({batch.size() * batch.dim()});
    for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = batch.vectors[i];
    return flat;
}

// One comparison of an analytic feature gradient against finite differences.
// `value_at` evaluates the loss at probe features with everything held fixed.
template <class ValueFn>
double check_feature_grad(const EmbeddingBatch& batch, const DenseArray& analytic,
                          const ValueFn& value_at, double perturb) {
    auto f = [&](const DenseArray& flat) { return value_at(batch_from_flat(flat, batch)); };
    DenseArray fd = finite_diff_grad(f, flatten_batch(batch));
    DenseArray biased = analytic;
    for (std::size_t i = 0; i < biased.size(); ++i) biased[i] += perturb;
    return max_rel_err(fd, biased);
}

double check_softmax(SeededRng& rng, int points, double perturb) {
    double worst = 0.0;
    for (int p = 0; p < points; ++p) {
        std::size_t b = 2 + rng.below(6), n = 2 + rng.below(5);
        DenseArray logits({b, n});
        std::vector<int> labels(b);
        for (std::size_t i = 0; i < logits.size(); ++i) logits[i] = rng.uniform(-2.0, 2.0);
        for (std::size_t i = 0; i < b; ++i) labels[i] = static_cast<int>(rng.below(n));

        LossResult res = softmax_ce(logits, labels);
        auto f = [&](const DenseArray& flat) {
            DenseArray l({b, n});
            for (std::size_t i = 0; i < flat.size(); ++i) l[i] = flat[i];
            return softmax_ce(l, labels).value;
        };
        DenseArray flat({b * n});
        for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = logits[i];
        DenseArray fd = finite_diff_grad(f, flat);
        DenseArray biased = *res.grad_logits;
        for (std::size_t i = 0; i < biased.size(); ++i) biased[i] += perturb;
        worst = std::max(worst, max_rel_err(fd, biased));
    }
    return worst;
}

double check_triplet(SeededRng& rng, int points, MarginSpec margin, double perturb) {
    double worst = 0.0;
    int done = 0;
    while (done < points) {
        EmbeddingBatch batch = random_batch(rng, 8, 3, 3);
        DistanceMatrix d = pairwise_sq_distances(batch);
        TripletSet all = enumerate_all_triplets(batch.labels);
        if (all.empty()) continue;
        if (margin.mode == MarginSpec::Mode::hard) {
            bool near = false;
            for (const Triplet& t : all.triplets) {
                near = near ||
                       std::abs(d(t.anchor, t.positive) - d(t.anchor, t.negative) + margin.m) < 1e-3;
            }
            if (near) continue;
        }
        LossResult res = triplet_loss(batch, d, all, margin);
        worst = std::max(worst, check_feature_grad(
                                    batch, *res.grad_embeddings,
                                    [&](const EmbeddingBatch& probe) {
                                        return triplet_loss(probe, pairwise_sq_distances(probe),
                                                            all, margin)
                                            .value;
                                    },
                                    perturb));
        ++done;
    }
    return worst;
}

double check_center(SeededRng& rng, int points, double perturb) {
    double worst = 0.0;
    for (int p = 0; p < points; ++p) {
        EmbeddingBatch batch = random_batch(rng, 7, 3, 3);
        ClassCenters centers(3, 3, 0.5);
        for (std::size_t i = 0; i < centers.centers.size(); ++i) {
            centers.centers[i] = rng.uniform(-1.0, 1.0);
        }
        LossResult res = center_loss(batch, centers);
        worst = std::max(worst, check_feature_grad(
                                    batch, *res.grad_embeddings,
                                    [&](const EmbeddingBatch& probe) {
                                        return center_loss(probe, centers).value;
                                    },
                                    perturb));
    }
    return worst;
}

double check_tcl(SeededRng& rng, int points, double perturb) {
    const double m = 0.2;
    double worst = 0.0;
    int done = 0;
    while (done < points) {
        EmbeddingBatch batch = random_batch(rng, 6, 2, 3);
        ClassCenters centers(3, 2, 0.5);
        for (std::size_t i = 0; i < centers.centers.size(); ++i) {
            centers.centers[i] = rng.uniform(-1.5, 1.5);
        }
        bool near = false;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            std::vector<double> others;
            double d_own = 0.0;
            for (int c = 0; c < 3; ++c) {
                double sq = 0.0;
                for (std::size_t k = 0; k < 2; ++k) {
                    double diff = batch.at(i, k) - centers.centers.at(c, k);
                    sq += diff * diff;
                }
                if (c == batch.labels[i]) d_own = sq;
                else others.push_back(sq);
            }
            near = near || std::abs(d_own - std::min(others[0], others[1]) + m) < 1e-3 ||
                   std::abs(others[0] - others[1]) < 1e-3;
        }
        if (near) continue;

        LossResult res = tcl_loss(batch, centers, m);
        worst = std::max(worst, check_feature_grad(
                                    batch, *res.grad_embeddings,
                                    [&](const EmbeddingBatch& probe) {
                                        return tcl_loss(probe, centers, m).value;
                                    },
                                    perturb));
        ++done;
    }
    return worst;
}

double check_magnet(SeededRng& rng, int points, double perturb) {
    double worst = 0.0;
    for (int p = 0; p < points; ++p) {
        EmbeddingBatch batch = random_batch(rng, 8, 2, 2);
        SeededRng krng(rng.next_u64());
        MagnetConfig cfg = assign_magnet_clusters(batch, 2, krng);
        LossResult res = magnet_loss(batch, cfg);
        double frozen = magnet_variance(batch, cfg);
        worst = std::max(worst, check_feature_grad(
                                    batch, *res.grad_embeddings,
                                    [&](const EmbeddingBatch& probe) {
                                        return magnet_loss(probe, cfg, frozen).value;
                                    },
                                    perturb));
    }
    return worst;
}

struct NetworkErrs {
    double trunk = 0.0;
    double w_logits = 0.0;
    double w_emb = 0.0;
};

NetworkErrs check_network(SeededRng& rng, int points, double perturb) {
    NetConfig cfg = NetConfig::desk(3, 8);
    cfg.conv = {{4, 3, 2, 1}, {4, 3, 2, 1}};
    const std::vector<int> labels = {0, 1, 2, 0};

    NetworkErrs errs;
    int done = 0;
    while (done < points) {
        SeededRng draw(rng.next_u64());
        TwoHeadNet net = init_params(cfg, draw);
        std::vector<DenseArray> imgs;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            DenseArray img({16, 16, 1});
            for (std::size_t j = 0; j < img.size(); ++j) img[j] = draw.uniform(-1.0, 1.0);
            imgs.push_back(std::move(img));
        }
        BatchForward fwd = forward_batch(net, imgs, labels);

        bool clean = true;
        for (const ForwardTrace& t : fwd.traces) {
            for (const DenseArray& pre : t.pre_acts) {
                for (std::size_t i = 0; i < pre.size() && clean; ++i) {
                    clean = std::abs(pre[i]) > 1e-4;
                }
            }
            clean = clean && t.pre_norm_norm > 1e-3;
        }
        if (!clean) continue;

        DistanceMatrix d = pairwise_sq_distances(fwd.embeddings);
        TripletSet triplets;
        try {
            triplets = mine_semi_hard(d, labels, 0.2);
        } catch (const EmptyTripletSet&) {
            continue;
        }
        for (const Triplet& t : triplets.triplets) {
            clean = clean && std::abs(d(t.anchor, t.positive) - d(t.anchor, t.negative) + 0.2) > 1e-3;
        }
        if (!clean) continue;

        LossResult soft = softmax_ce(fwd.logits, labels);
        LossResult tri = triplet_loss(fwd.embeddings, d, triplets, MarginSpec::hard(0.2));
        LossResult combined = combined_loss(soft, tri, 1.0);
        NetGrads grads = backward_batch(net, fwd, *combined.grad_logits, *combined.grad_embeddings);

        auto loss_at = [&](TwoHeadNet& probe) {
            BatchForward f = forward_batch(probe, imgs, labels);
            LossResult s = softmax_ce(f.logits, labels);
            LossResult t = triplet_loss(f.embeddings, pairwise_sq_distances(f.embeddings),
                                        triplets, MarginSpec::hard(0.2));
            return combined_loss(s, t, 1.0).value;
        };

        // Probe a handful of random coordinates inside every parameter group.
        auto tensors = net.params();
        const double step = 1e-5;
        for (std::size_t g = 0; g < tensors.size(); ++g) {
            double* group_err = g + 2 == tensors.size()   ? &errs.w_logits
                                : g + 1 == tensors.size() ? &errs.w_emb
                                                          : &errs.trunk;
            int n_coords = std::min<std::size_t>(8, tensors[g]->size());
            for (int c = 0; c < n_coords; ++c) {
                std::size_t idx = draw.below(tensors[g]->size());
                double saved = (*tensors[g])[idx];
                (*tensors[g])[idx] = saved + step;
                ++net.revision;
                double hi = loss_at(net);
                (*tensors[g])[idx] = saved - step;
                ++net.revision;
                double lo = loss_at(net);
                (*tensors[g])[idx] = saved;
                ++net.revision;
                double fd = (hi - lo) / (2.0 * step);
                double analytic = grads.tensors[g][idx] + perturb;
                *group_err = std::max(*group_err, rel_err(fd, analytic));
            }
        }
        ++done;
    }
    return errs;
}

} // namespace

std::vector<GradCheckResult> run_gradchecks(std::uint64_t seed, int points, double perturb) {
    SeededRng rng(seed);
    std::vector<GradCheckResult> out;
    out.push_back({"softmax", check_softmax(rng, points, perturb), points});
    out.push_back({"triplet-hard", check_triplet(rng, points, MarginSpec::hard(0.2), perturb),
                   points});
    out.push_back({"triplet-soft", check_triplet(rng, points, MarginSpec::soft(), perturb), points});
    out.push_back({"center", check_center(rng, points, perturb), points});
    out.push_back({"tcl", check_tcl(rng, points, perturb), points});
    out.push_back({"magnet", check_magnet(rng, points, perturb), points});
    NetworkErrs net_errs = check_network(rng, points, perturb);
    out.push_back({"network-trunk", net_errs.trunk, points});
    out.push_back({"network-w-logits", net_errs.w_logits, points});
    out.push_back({"network-w-emb", net_errs.w_emb, points});
    return out;
}

bool gradchecks_pass(const std::vector<GradCheckResult>& results, double tolerance) {
    for (const GradCheckResult& r : results) {
        if (!(r.max_rel_err < tolerance)) return false;
    }
    return true;
}

} // namespace dml
