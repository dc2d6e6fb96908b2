#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>

#include "dml/losses.hpp"
#include "dml/network.hpp"
#include "test_util.hpp"

using namespace dml;
using namespace dml::testutil;

namespace {

std::vector<DenseArray> random_images(SeededRng& rng, std::size_t n, const NetConfig& cfg,
                                      double lo = -1.0, double hi = 1.0) {
    std::vector<DenseArray> out;
    for (std::size_t i = 0; i < n; ++i) {
        DenseArray img({static_cast<std::size_t>(cfg.input_h), static_cast<std::size_t>(cfg.input_w),
                        static_cast<std::size_t>(cfg.input_c)});
        for (std::size_t j = 0; j < img.size(); ++j) img[j] = rng.uniform(lo, hi);
        out.push_back(std::move(img));
    }
    return out;
}

DenseArray flatten_params(const TwoHeadNet& net) {
    std::vector<double> all;
    for (const DenseArray* p : net.params()) {
        all.insert(all.end(), p->data(), p->data() + p->size());
    }
    return DenseArray::from_vector(std::move(all));
}

void load_params(TwoHeadNet& net, const DenseArray& flat) {
    std::size_t off = 0;
    for (DenseArray* p : net.params()) {
        for (std::size_t i = 0; i < p->size(); ++i) (*p)[i] = flat[off + i];
        off += p->size();
    }
    ++net.revision;
}

} // namespace

TEST_CASE("desk config shapes") {
    NetConfig cfg = NetConfig::desk(5);
    SeededRng rng(1);
    TwoHeadNet net = init_params(cfg, rng);
    CHECK(net.h_height() == 4);
    CHECK(net.h_width() == 4);
    CHECK(net.h_channels() == 8);
    CHECK(net.flat_h() == 128);

    DenseArray img({16, 16, 1});
    ForwardTrace t = forward(net, img);
    CHECK(t.x.size() == 8);
    CHECK(t.logits.size() == 5);
    CHECK(t.embedding.size() == 16);
}

TEST_CASE("parameter count matches the closed-form tally") {
    // conv1 3*3*1*8 + 8, conv2 3*3*8*8 + 8, logits 8*4, emb 128*16
    NetConfig cfg = NetConfig::desk(4);
    SeededRng rng(2);
    TwoHeadNet net = init_params(cfg, rng);
    CHECK(net.param_count() == 72 + 8 + 576 + 8 + 32 + 2048);
}

TEST_CASE("init is deterministic per seed and rejects bad configs") {
    NetConfig cfg = NetConfig::desk(3);
    SeededRng a(7), b(7);
    TwoHeadNet na = init_params(cfg, a);
    TwoHeadNet nb = init_params(cfg, b);
    auto pa = na.params(), pb = nb.params();
    for (std::size_t i = 0; i < pa.size(); ++i) {
        for (std::size_t j = 0; j < pa[i]->size(); ++j) CHECK((*pa[i])[j] == (*pb[i])[j]);
    }

    NetConfig empty = cfg;
    empty.conv.clear();
    SeededRng c(1);
    CHECK_THROWS_AS(init_params(empty, c), InvalidConfig);
}

TEST_CASE("zero embedding weights collapse to the epsilon guard") {
    NetConfig cfg = NetConfig::desk(3);
    SeededRng rng(4);
    TwoHeadNet net = init_params(cfg, rng);
    net.w_emb.fill(0.0);
    DenseArray img({16, 16, 1});
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = 0.5;
    ForwardTrace t = forward(net, img);
    CHECK(t.collapsed);
    CHECK(t.pre_norm_norm == 0.0);
    for (std::size_t e = 0; e < t.embedding.size(); ++e) CHECK(t.embedding[e] == 0.0);
}

TEST_CASE("identity-like trunk pools to the spatial mean") {
    NetConfig cfg;
    cfg.input_h = 6;
    cfg.input_w = 6;
    cfg.input_c = 1;
    cfg.conv = {{1, 1, 1, 0}};  // 1x1 conv, stride 1
    cfg.n_classes = 2;
    cfg.d_emb = 4;
    SeededRng rng(5);
    TwoHeadNet net = init_params(cfg, rng);
    net.trunk[0].weights.fill(1.0);
    net.trunk[0].bias.fill(0.0);

    DenseArray img({6, 6, 1});
    double sum = 0.0;
    for (std::size_t i = 0; i < img.size(); ++i) {
        img[i] = 0.1 + 0.01 * static_cast<double>(i);  // strictly positive
        sum += img[i];
    }
    ForwardTrace t = forward(net, img);
    CHECK(t.x[0] == doctest::Approx(sum / 36.0).epsilon(1e-12));
}

TEST_CASE("forward rejects mismatched input shapes") {
    NetConfig cfg = NetConfig::desk(3);
    SeededRng rng(6);
    TwoHeadNet net = init_params(cfg, rng);
    CHECK_THROWS_AS(forward(net, DenseArray({8, 8, 1})), ShapeError);
}

TEST_CASE("zero head gradients give zero parameter gradients") {
    NetConfig cfg = NetConfig::desk(3);
    SeededRng rng(8);
    TwoHeadNet net = init_params(cfg, rng);
    auto imgs = random_images(rng, 3, cfg);
    BatchForward fwd = forward_batch(net, imgs, {0, 1, 2});
    NetGrads grads = backward_batch(net, fwd, DenseArray({3, 3}), DenseArray({3, 16}));
    for (const DenseArray& g : grads.tensors) {
        for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == 0.0);
    }
}

TEST_CASE("stale traces are rejected") {
    NetConfig cfg = NetConfig::desk(3);
    SeededRng rng(9);
    TwoHeadNet net = init_params(cfg, rng);
    auto imgs = random_images(rng, 2, cfg);
    BatchForward fwd = forward_batch(net, imgs, {0, 1});
    ++net.revision;  // simulate a parameter step
    CHECK_THROWS_AS(backward_batch(net, fwd, DenseArray({2, 3}), DenseArray({2, 16})),
                    TraceMismatch);
}

TEST_CASE("normalization backward output is orthogonal to the embedding") {
    NetConfig cfg = NetConfig::desk(3);
    SeededRng rng(10);
    TwoHeadNet net = init_params(cfg, rng);
    auto imgs = random_images(rng, 2, cfg);
    BatchForward fwd = forward_batch(net, imgs, {0, 1});

    // The projected gradient g_u must satisfy g_u . e == 0. Recover g_u by
    // pushing a probe through the same formula the backward pass uses.
    for (std::size_t i = 0; i < 2; ++i) {
        const ForwardTrace& t = fwd.traces[i];
        DenseArray g_e({16});
        for (std::size_t e = 0; e < 16; ++e) g_e[e] = rng.uniform(-1.0, 1.0);
        double dot = 0.0;
        for (std::size_t e = 0; e < 16; ++e) dot += g_e[e] * t.embedding[e];
        double check = 0.0;
        for (std::size_t e = 0; e < 16; ++e) {
            double gu = (g_e[e] - dot * t.embedding[e]) / std::max(t.pre_norm_norm, 1e-12);
            check += gu * t.embedding[e];
        }
        CHECK(std::abs(check) < 1e-9);
    }
}

TEST_CASE("combined loss gradient matches finite differences through the net") {
    NetConfig cfg = NetConfig::desk(3, 8);
    cfg.conv = {{4, 3, 2, 1}, {4, 3, 2, 1}};  // smaller trunk keeps the probe quick

    std::vector<int> labels = {0, 1, 2, 0};
    int attempts = 0;
    for (int trial = 0; trial < 2; ++trial) {
        TwoHeadNet net;
        BatchForward fwd;
        TripletSet triplets;
        std::vector<DenseArray> imgs;
        while (true) {
            REQUIRE(attempts++ < 60);
            SeededRng rng(1000 + attempts);
            net = init_params(cfg, rng);
            imgs = random_images(rng, labels.size(), cfg);
            fwd = forward_batch(net, imgs, labels);

            // kink guards: ReLU pre-activations, hinge arguments, norms
            bool clean = true;
            for (const ForwardTrace& t : fwd.traces) {
                for (const DenseArray& pre : t.pre_acts) {
                    for (std::size_t i = 0; i < pre.size(); ++i) {
                        clean = clean && std::abs(pre[i]) > 1e-4;
                    }
                }
                clean = clean && t.pre_norm_norm > 1e-3;
            }
            if (!clean) continue;
            DistanceMatrix d = pairwise_sq_distances(fwd.embeddings);
            triplets = mine_semi_hard(d, labels, 0.2);
            for (const Triplet& t : triplets.triplets) {
                clean = clean &&
                        std::abs(d(t.anchor, t.positive) - d(t.anchor, t.negative) + 0.2) > 1e-3;
            }
            if (clean) break;
        }

        auto loss_at = [&](const TwoHeadNet& candidate) {
            BatchForward f = forward_batch(candidate, imgs, labels);
            LossResult soft = softmax_ce(f.logits, labels);
            LossResult tri = triplet_loss(f.embeddings, pairwise_sq_distances(f.embeddings),
                                          triplets, MarginSpec::hard(0.2));
            return combined_loss(soft, tri, 1.0).value;
        };

        // analytic gradient
        LossResult soft = softmax_ce(fwd.logits, labels);
        LossResult tri = triplet_loss(fwd.embeddings, pairwise_sq_distances(fwd.embeddings),
                                      triplets, MarginSpec::hard(0.2));
        LossResult combined = combined_loss(soft, tri, 1.0);
        NetGrads grads = backward_batch(net, fwd, *combined.grad_logits,
                                        *combined.grad_embeddings);
        DenseArray analytic = flatten_params(net);
        {
            std::size_t off = 0;
            for (const DenseArray& g : grads.tensors) {
                for (std::size_t i = 0; i < g.size(); ++i) analytic[off + i] = g[i];
                off += g.size();
            }
        }

        TwoHeadNet probe = net;
        auto f = [&](const DenseArray& flat) {
            load_params(probe, flat);
            return loss_at(probe);
        };
        DenseArray fd = finite_diff_grad(f, flatten_params(net));
        CHECK(max_rel_err(fd, analytic) < 1e-4);
    }
}

TEST_CASE("input gradients match finite differences") {
    NetConfig cfg;
    cfg.input_h = 8;
    cfg.input_w = 8;
    cfg.input_c = 1;
    cfg.conv = {{4, 3, 2, 1}};
    cfg.n_classes = 3;
    cfg.d_emb = 4;

    int attempts = 0;
    while (true) {
        REQUIRE(attempts++ < 40);
        SeededRng rng(500 + attempts);
        TwoHeadNet net = init_params(cfg, rng);
        DenseArray img({8, 8, 1});
        for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform(-1.0, 1.0);
        std::vector<DenseArray> imgs = {img};
        BatchForward fwd = forward_batch(net, imgs, {1});

        bool clean = fwd.traces[0].pre_norm_norm > 1e-3;
        for (const DenseArray& pre : fwd.traces[0].pre_acts) {
            for (std::size_t i = 0; i < pre.size(); ++i) clean = clean && std::abs(pre[i]) > 1e-4;
        }
        if (!clean) continue;

        // probe through the softmax loss of the single sample
        auto loss_at = [&](const DenseArray& probe) {
            BatchForward f = forward_batch(net, {probe}, {1});
            return softmax_ce(f.logits, {1}).value;
        };
        LossResult soft = softmax_ce(fwd.logits, {1});
        NetGrads grads = backward_batch(net, fwd, *soft.grad_logits, DenseArray({1, 4}));
        DenseArray fd = finite_diff_grad(loss_at, img);
        CHECK(max_rel_err(fd, grads.input_grads[0]) < 1e-4);
        break;
    }
}

TEST_CASE("checkpoints round-trip bit exactly") {
    NetConfig cfg = NetConfig::desk(7, 16, 5);
    SeededRng rng(123);
    TwoHeadNet net = init_params(cfg, rng);
    const char* path = "test_network_ckpt.txt";
    save_checkpoint(net, path);
    TwoHeadNet back = load_checkpoint(path);

    CHECK(back.config.n_classes == 7);
    CHECK(back.config.d_emb == 16);
    CHECK(back.config.input_c == 5);
    auto pa = net.params();
    auto pb = back.params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        REQUIRE(pa[i]->size() == pb[i]->size());
        for (std::size_t j = 0; j < pa[i]->size(); ++j) CHECK((*pa[i])[j] == (*pb[i])[j]);
    }
    std::remove(path);
}

TEST_CASE("embedding head sees spatially resolved features") {
    NetConfig cfg = NetConfig::desk(4);
    SeededRng rng(31);
    TwoHeadNet net = init_params(cfg, rng);
    CHECK(net.flat_h() == net.h_height() * net.h_width() * net.h_channels());
    CHECK(net.flat_h() == 16 * net.h_channels());  // 4x4 cells kept, pooling drops them
}
