// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Training-based criteria average over 5 seeds and use the
// parameters pinned below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "dml/datasets.hpp"
#include "dml/evaluation.hpp"
#include "dml/gradcheck.hpp"
#include "dml/reference.hpp"
#include "dml/trainer.hpp"

using namespace dml;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what, const std::string& detail) {
    std::printf("[%s] criterion %2d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, what.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                                 t0)
               .count() /
           1000.0;
}

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return buf;
}

EmbeddingBatch random_embeddings(SeededRng& rng, std::size_t b, std::size_t d, int n_classes) {
    DenseArray vecs({b, d});
    std::vector<int> labels(b);
    for (std::size_t i = 0; i < b; ++i) {
        labels[i] = static_cast<int>(rng.below(n_classes));
        for (std::size_t j = 0; j < d; ++j) vecs.at(i, j) = rng.uniform(-1.0, 1.0);
    }
    return {std::move(vecs), std::move(labels)};
}

// ---------------------------------------------------------------------------
// criterion 1: gradient oracle
// ---------------------------------------------------------------------------
void criterion_1() {
    auto t0 = std::chrono::steady_clock::now();
    auto results = run_gradchecks(1, 100);
    double elapsed = seconds_since(t0);
    double worst = 0.0;
    for (const auto& r : results) worst = std::max(worst, r.max_rel_err);
    bool pass = gradchecks_pass(results) && elapsed < 60.0;
    report(1, pass, "gradient oracle: six losses + full network at 100 kink-free points",
           fmt("max_rel_err=%.2e, %.1fs", worst, elapsed));
}

// ---------------------------------------------------------------------------
// criterion 2: mining oracle equivalence
// ---------------------------------------------------------------------------
void criterion_2() {
    auto t0 = std::chrono::steady_clock::now();
    SeededRng rng(2);
    int checked = 0, equal = 0;
    while (checked < 500) {
        std::size_t b = 6 + rng.below(59);  // up to 64
        int n_classes = 2 + static_cast<int>(rng.below(9));
        EmbeddingBatch batch = random_embeddings(rng, b, 4, n_classes);

        bool has_pair = false, has_negative = false;
        for (std::size_t i = 0; i < b && !(has_pair && has_negative); ++i) {
            for (std::size_t j = 0; j < b; ++j) {
                if (i == j) continue;
                if (batch.labels[i] == batch.labels[j]) has_pair = true;
                else has_negative = true;
            }
        }
        if (!has_pair || !has_negative) continue;

        DistanceMatrix d = pairwise_sq_distances(batch);
        double m = rng.uniform(0.05, 0.5);
        bool ok = reference::same_triplets(mine_batch_hard(d, batch.labels),
                                           reference::mine_batch_hard(d, batch.labels)) &&
                  reference::same_triplets(mine_semi_hard(d, batch.labels, m),
                                           reference::mine_semi_hard(d, batch.labels, m));
        equal += ok;
        ++checked;
    }
    double elapsed = seconds_since(t0);
    report(2, equal == 500 && elapsed < 60.0, "mining equals brute force on 500 random batches",
           fmt("%d/500 equal, %.1fs", equal, elapsed));
}

// ---------------------------------------------------------------------------
// criterion 3: negative-kind partition
// ---------------------------------------------------------------------------
void criterion_3() {
    SeededRng rng(3);
    bool ok = true;
    for (int i = 0; i < 100000 && ok; ++i) {
        double d_ap = rng.uniform(0.0, 2.0);
        double m = rng.uniform(1e-3, 1.0);
        double d_an;
        switch (i % 4) {
            case 0: d_an = rng.uniform(0.0, 3.0); break;
            case 1: d_an = d_ap; break;          // hard boundary
            case 2: d_an = d_ap + m; break;      // easy boundary
            default: d_an = rng.uniform(0.0, 1.0) * (d_ap + m); break;
        }
        NegativeKind kind = classify_negative(d_ap, d_an, m);
        int claims = 0;
        if (d_an <= d_ap) {
            ++claims;
            ok = ok && kind == NegativeKind::hard;
        }
        if (d_an > d_ap && d_an < d_ap + m) {
            ++claims;
            ok = ok && kind == NegativeKind::semi_hard;
        }
        if (d_an >= d_ap + m) {
            ++claims;
            ok = ok && kind == NegativeKind::easy;
        }
        ok = ok && claims == 1;
    }
    report(3, ok, "negative kinds partition 1e5 random (d_ap, d_an, m) incl. boundaries",
           ok ? "exhaustive" : "violation found");
}

// ---------------------------------------------------------------------------
// criterion 4: metric oracles
// ---------------------------------------------------------------------------
void criterion_4() {
    SeededRng rng(4);
    bool recall_ok = true;
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t b = 10 + rng.below(40);
        EmbeddingBatch batch = random_embeddings(rng, b, 4, 2 + static_cast<int>(rng.below(5)));
        std::vector<int> ks = {1, 4, static_cast<int>(b) - 1};
        auto got = recall_at_k(batch, ks);
        DistanceMatrix d = pairwise_sq_distances(batch);
        for (int k : ks) {
            double hits = 0.0;
            for (std::size_t q = 0; q < b; ++q) {
                std::vector<std::size_t> order;
                for (std::size_t j = 0; j < b; ++j) {
                    if (j != q) order.push_back(j);
                }
                std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
                    if (d(q, x) != d(q, y)) return d(q, x) < d(q, y);
                    return x < y;
                });
                for (int r = 0; r < k; ++r) {
                    if (batch.labels[order[r]] == batch.labels[q]) {
                        hits += 1.0;
                        break;
                    }
                }
            }
            recall_ok = recall_ok && std::abs(got.at(k) - hits / b) < 1e-12;
        }
    }

    // permuted-identical partitions, symmetry, independence concentration
    Clustering truth{{0, 0, 1, 1, 2, 2}, 3};
    Clustering permuted{{2, 2, 0, 0, 1, 1}, 3};
    bool nmi_ok = std::abs(nmi(truth, permuted) - 1.0) < 1e-12;

    SeededRng nrng(44);
    double mean_indep = 0.0;
    const int indep_trials = 20;
    for (int t = 0; t < indep_trials; ++t) {
        Clustering a, b;
        a.k = b.k = 10;
        for (int i = 0; i < 1000; ++i) {
            a.assignments.push_back(static_cast<int>(nrng.below(10)));
            b.assignments.push_back(static_cast<int>(nrng.below(10)));
        }
        double ab = nmi(a, b);
        nmi_ok = nmi_ok && std::abs(ab - nmi(b, a)) < 1e-12;
        mean_indep += ab;
    }
    mean_indep /= indep_trials;
    nmi_ok = nmi_ok && mean_indep < 0.05;

    std::vector<int> labels, preds;
    for (int i = 0; i < 10; ++i) {
        labels.push_back(0);
        preds.push_back(i < 9 ? 0 : 1);
    }
    labels.push_back(1);
    preds.push_back(1);
    labels.push_back(1);
    preds.push_back(0);
    AccuracyReport acc = accuracy(preds, labels);
    bool acc_ok = std::abs(acc.micro - 10.0 / 12.0) < 1e-4 && std::abs(acc.macro - 0.7) < 1e-12;

    report(4, recall_ok && nmi_ok && acc_ok, "metric oracles: recall sort-oracle, nmi, micro/macro",
           fmt("recall=%s nmi=%s (indep mean %.3f) acc=%s", recall_ok ? "ok" : "FAIL",
               nmi_ok ? "ok" : "FAIL", mean_indep, acc_ok ? "ok" : "FAIL"));
}

// ---------------------------------------------------------------------------
// criterion 5: magnet scalar check
// ---------------------------------------------------------------------------
void criterion_5() {
    EmbeddingBatch batch(DenseArray({4, 1}, {0.0, 2.0, 10.0, 12.0}), {0, 0, 1, 1});
    SeededRng rng(5);
    MagnetConfig cfg = assign_magnet_clusters(batch, 1, rng, 0.0);
    double value = magnet_loss(batch, cfg).value;
    report(5, std::abs(value - (-37.5)) < 1e-9, "magnet worked example evaluates to -37.5",
           fmt("value=%.12f", value));
}

// ---------------------------------------------------------------------------
// shared training helpers for criteria 6-11
// ---------------------------------------------------------------------------

struct SplitData {
    LabeledDataset train;
    LabeledDataset test;
};

// Pinned multi-modal image dataset for criteria 6, 7 and 10.
SplitData multimodal_split(std::uint64_t seed) {
    SyntheticSpec spec;
    spec.n_classes = 10;
    spec.modes_per_class = 2;
    spec.input_mode = InputMode::image;
    spec.latent_dim = 6;
    spec.image_h = 16;
    spec.image_w = 16;
    spec.sigma = 0.26;  // calibrated: softmax-only test accuracy lands in 0.7-0.9

    SeededRng base(seed);
    SeededRng plan_rng = base.fork(1);
    SyntheticModel model = plan_synthetic(spec, plan_rng);
    std::vector<int> counts(spec.n_classes, 50);  // 500 train / 500 test
    SeededRng train_rng = base.fork(2);
    SeededRng test_rng = base.fork(3);
    return {sample_synthetic(model, counts, train_rng), sample_synthetic(model, counts, test_rng)};
}

struct EvalOutcome {
    double recall1 = 0.0;
    double nmi_val = 0.0;
    double micro = 0.0;
    double macro = 0.0;
};

EvalOutcome evaluate_net(const TwoHeadNet& net, const LabeledDataset& test, std::uint64_t seed) {
    const std::size_t n = test.size();
    DenseArray emb({n, static_cast<std::size_t>(net.config.d_emb)});
    std::vector<int> preds(n);
    for (std::size_t i = 0; i < n; ++i) {
        ForwardTrace t = forward(net, reshape_to_input(test.inputs[i], net.config));
        for (int e = 0; e < net.config.d_emb; ++e) emb.at(i, e) = t.embedding[e];
        int best = 0;
        for (int j = 1; j < net.config.n_classes; ++j) {
            if (t.logits[j] > t.logits[best]) best = j;
        }
        preds[i] = best;
    }
    EmbeddingBatch batch(std::move(emb), test.labels, true);

    EvalOutcome out;
    out.recall1 = recall_at_k(batch, {1}).at(1);
    std::set<int> classes(test.labels.begin(), test.labels.end());
    SeededRng krng = SeededRng(seed).fork(99);
    KMeansResult km = kmeans(batch.vectors, static_cast<int>(classes.size()), krng);
    out.nmi_val = nmi(Clustering{test.labels, static_cast<int>(classes.size())}, km.clustering);
    AccuracyReport acc = accuracy(preds, test.labels);
    out.micro = acc.micro;
    out.macro = acc.macro;
    return out;
}

TrainConfig multimodal_train_config(EmbedObjective objective, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.iterations = 1200;
    cfg.base_lr = 0.1;  // the desk trunk needs a larger step than the default
    cfg.batch_size = 32;
    cfg.samples_per_class = 4;
    cfg.objective = objective;
    cfg.margin = 0.2;
    cfg.lambda = objective == EmbedObjective::center ? 0.003 : 1.0;
    cfg.center_alpha = 0.5;
    cfg.seed = seed;
    return cfg;
}

TrainResult run_multimodal(const SplitData& split, EmbedObjective objective, std::uint64_t seed) {
    NetConfig net_cfg = NetConfig::desk(10, 16, 1);
    net_cfg.conv = {{16, 3, 2, 1}, {16, 3, 2, 1}};
    SeededRng init_rng = SeededRng(seed).fork(7);
    return train(init_params(net_cfg, init_rng), split.train,
                 multimodal_train_config(objective, seed));
}

// ---------------------------------------------------------------------------
// criteria 6 + 7 (+ data reuse): two-head benefit, center-loss inferiority
// ---------------------------------------------------------------------------
void criteria_6_and_7() {
    const int n_seeds = 5;
    double mean_softmax_acc = 0.0;
    double mean_recall_gap = 0.0, mean_nmi_gap = 0.0;
    double mean_semi_nmi = 0.0, mean_center_nmi = 0.0;
    double worst_run = 0.0;

    for (std::uint64_t seed = 0; seed < n_seeds; ++seed) {
        SplitData split = multimodal_split(1000 + seed);

        auto t0 = std::chrono::steady_clock::now();
        TrainResult softmax_only = run_multimodal(split, EmbedObjective::none, seed);
        worst_run = std::max(worst_run, seconds_since(t0));
        t0 = std::chrono::steady_clock::now();
        TrainResult semi = run_multimodal(split, EmbedObjective::triplet_semi_hard, seed);
        worst_run = std::max(worst_run, seconds_since(t0));
        t0 = std::chrono::steady_clock::now();
        TrainResult center = run_multimodal(split, EmbedObjective::center, seed);
        worst_run = std::max(worst_run, seconds_since(t0));

        EvalOutcome eval_soft = evaluate_net(softmax_only.net, split.test, seed);
        EvalOutcome eval_semi = evaluate_net(semi.net, split.test, seed);
        EvalOutcome eval_center = evaluate_net(center.net, split.test, seed);

        mean_softmax_acc += eval_soft.micro;
        mean_recall_gap += eval_semi.recall1 - eval_soft.recall1;
        mean_nmi_gap += eval_semi.nmi_val - eval_soft.nmi_val;
        mean_semi_nmi += eval_semi.nmi_val;
        mean_center_nmi += eval_center.nmi_val;
    }
    mean_softmax_acc /= n_seeds;
    mean_recall_gap /= n_seeds;
    mean_nmi_gap /= n_seeds;
    mean_semi_nmi /= n_seeds;
    mean_center_nmi /= n_seeds;

    bool band_ok = mean_softmax_acc >= 0.7 && mean_softmax_acc <= 0.9;
    bool pass6 = band_ok && mean_recall_gap >= 0.05 && mean_nmi_gap >= 0.05 && worst_run < 120.0;
    report(6, pass6, "two-head semi-hard beats softmax-only on R@1 (>=5pt) and NMI (>=0.05)",
           fmt("softmax acc=%.3f (band 0.7-0.9), dR@1=%.3f, dNMI=%.3f, slowest run %.1fs",
               mean_softmax_acc, mean_recall_gap, mean_nmi_gap, worst_run));

    bool pass7 = mean_semi_nmi > mean_center_nmi;
    report(7, pass7, "semi-hard NMI beats center-loss NMI on the multi-modal set",
           fmt("semi=%.3f center=%.3f", mean_semi_nmi, mean_center_nmi));
}

// ---------------------------------------------------------------------------
// criterion 8: long-tail macro benefit
// ---------------------------------------------------------------------------
void criterion_8() {
    const int n_seeds = 5;
    double mean_macro_gap = 0.0, mean_micro_gap = 0.0;

    for (std::uint64_t seed = 0; seed < n_seeds; ++seed) {
        SyntheticSpec spec;
        spec.n_classes = 8;
        spec.modes_per_class = 2;  // tail classes cannot cover both modes
        spec.input_mode = InputMode::image;
        spec.latent_dim = 6;
        spec.image_h = 16;
        spec.image_w = 16;
        spec.sigma = 0.30;

        SeededRng base(2000 + seed);
        SeededRng plan_rng = base.fork(1);
        SyntheticModel model = plan_synthetic(spec, plan_rng);
        std::vector<int> counts = gen_long_tail(8, 200, 0.55);
        std::vector<int> test_counts = counts;
        for (int& c : test_counts) c *= 3;  // same tail proportions, steadier estimates
        SeededRng train_rng = base.fork(2);
        SeededRng test_rng = base.fork(3);
        SplitData split{sample_synthetic(model, counts, train_rng),
                        sample_synthetic(model, test_counts, test_rng)};

        NetConfig net_cfg = NetConfig::desk(8, 16, 1);
        net_cfg.conv = {{12, 3, 2, 1}, {12, 3, 2, 1}};

        TrainConfig soft_cfg;
        soft_cfg.iterations = 1600;
        soft_cfg.base_lr = 0.04;
        soft_cfg.sampler = SamplerKind::uniform;
        soft_cfg.batch_size = 63;
        soft_cfg.objective = EmbedObjective::none;
        soft_cfg.seed = seed;

        TrainConfig tri_cfg = soft_cfg;
        tri_cfg.sampler = SamplerKind::imbalanced;
        tri_cfg.pool_batches = 3;
        tri_cfg.objective = EmbedObjective::triplet_semi_hard;
        tri_cfg.margin = 0.2;
        tri_cfg.lambda = 1.0;

        SeededRng r1 = SeededRng(seed).fork(7);
        SeededRng r2 = SeededRng(seed).fork(7);
        TrainResult softmax_only = train(init_params(net_cfg, r1), split.train, soft_cfg);
        TrainResult two_head = train(init_params(net_cfg, r2), split.train, tri_cfg);

        EvalOutcome eval_soft = evaluate_net(softmax_only.net, split.test, seed);
        EvalOutcome eval_two = evaluate_net(two_head.net, split.test, seed);
        mean_macro_gap += eval_two.macro - eval_soft.macro;
        mean_micro_gap += eval_two.micro - eval_soft.micro;
    }
    mean_macro_gap /= n_seeds;
    mean_micro_gap /= n_seeds;

    bool pass = mean_macro_gap >= 0.03 && mean_micro_gap > -0.01;
    report(8, pass, "long-tail: macro accuracy up >=3pt, micro degraded <1pt",
           fmt("dMacro=%.3f dMicro=%.3f", mean_macro_gap, mean_micro_gap));
}

// ---------------------------------------------------------------------------
// criterion 9: collapse detection
// ---------------------------------------------------------------------------
void criterion_9() {
    const int n_seeds = 5;
    int hard_soft_collapses = 0;
    int semi_collapses = 0;

    for (std::uint64_t seed = 0; seed < n_seeds; ++seed) {
        SyntheticSpec spec;
        spec.n_classes = 4;
        spec.modes_per_class = 2;
        spec.input_mode = InputMode::image;
        spec.latent_dim = 4;
        spec.image_h = 16;
        spec.image_w = 16;
        spec.sigma = 0.2;
        SeededRng drng(3000 + seed);
        LabeledDataset data = gen_synthetic(spec, drng).data;

        NetConfig net_cfg = NetConfig::desk(4, 8, 1);

        TrainConfig rig;
        rig.iterations = 400;
        rig.base_lr = 0.5;  // adversarial: large steps with no classification anchor
        rig.batch_size = 16;
        rig.samples_per_class = 4;
        rig.detach_softmax = true;
        rig.seed = seed;

        TrainConfig hard_soft = rig;
        hard_soft.objective = EmbedObjective::triplet_hard;
        hard_soft.margin_mode = MarginSpec::Mode::soft;

        TrainConfig semi = rig;
        semi.objective = EmbedObjective::triplet_semi_hard;
        semi.margin_mode = MarginSpec::Mode::hard;
        semi.margin = 0.2;

        SeededRng r1 = SeededRng(seed).fork(7);
        SeededRng r2 = SeededRng(seed).fork(7);
        hard_soft_collapses += train(init_params(net_cfg, r1), data, hard_soft).log.ever_collapsed();
        semi_collapses += train(init_params(net_cfg, r2), data, semi).log.ever_collapsed();
    }

    bool pass = hard_soft_collapses >= 4 && semi_collapses == 0;
    report(9, pass, "collapse rig: hard+soft collapses >=4/5 seeds, semi-hard 0/5",
           fmt("hard+soft %d/5, semi-hard %d/5", hard_soft_collapses, semi_collapses));
}

// ---------------------------------------------------------------------------
// criterion 10: determinism
// ---------------------------------------------------------------------------
void criterion_10() {
    SplitData split = multimodal_split(1000);
    TrainResult a = run_multimodal(split, EmbedObjective::triplet_semi_hard, 0);
    TrainResult b = run_multimodal(split, EmbedObjective::triplet_semi_hard, 0);
    bool pass = a.log.to_csv() == b.log.to_csv();
    report(10, pass, "repeating criterion-6 training with a fixed seed is byte-identical",
           pass ? "logs match" : "logs differ");
}

// ---------------------------------------------------------------------------
// criterion 11: SOD pipeline
// ---------------------------------------------------------------------------
void criterion_11() {
    // exact unit examples first
    bool units_ok = true;
    {
        VideoEvent still;
        for (int f = 0; f < 6; ++f) {
            DenseArray frame({8, 8, 3});
            frame.fill(33.0);
            still.frames.push_back(std::move(frame));
        }
        SeededRng rng(1);
        DenseArray sod = sod_encode(still, rng);
        for (std::size_t i = 0; i < sod.size(); ++i) units_ok = units_ok && sod[i] == 0.0;

        VideoEvent ramp;
        for (int f = 0; f < 6; ++f) {
            DenseArray frame({8, 8, 3});
            frame.fill(10.0 * f);
            ramp.frames.push_back(std::move(frame));
        }
        DenseArray sod2 = sod_encode(ramp, rng);
        for (std::size_t i = 0; i < sod2.size(); ++i) units_ok = units_ok && sod2[i] == 10.0;
    }

    auto t0 = std::chrono::steady_clock::now();
    SeededRng train_vid_rng(41), test_vid_rng(42), sod_rng(43);
    VideoDataset train_vids = gen_synthetic_video(3, train_vid_rng, 60, 8);
    VideoDataset test_vids = gen_synthetic_video(3, test_vid_rng, 25, 8);

    auto encode = [&](const VideoDataset& vids) {
        LabeledDataset out;
        out.n_classes = vids.n_classes;
        for (const VideoEvent& e : vids.events) {
            out.inputs.push_back(scale_sod(sod_encode(e, sod_rng)));
            out.labels.push_back(e.label);
        }
        return out;
    };
    LabeledDataset train_data = encode(train_vids);
    LabeledDataset test_data = encode(test_vids);

    NetConfig net_cfg = NetConfig::desk(3, 8, 5);
    TrainConfig cfg;
    cfg.iterations = 400;
    cfg.base_lr = 0.1;
    cfg.batch_size = 12;
    cfg.samples_per_class = 4;
    cfg.objective = EmbedObjective::triplet_semi_hard;
    cfg.seed = 11;
    SeededRng init_rng = SeededRng(11).fork(7);
    TrainResult res = train(init_params(net_cfg, init_rng), train_data, cfg);
    EvalOutcome eval = evaluate_net(res.net, test_data, 11);
    double elapsed = seconds_since(t0);

    bool pass = units_ok && eval.micro >= 0.9 && elapsed < 120.0;
    report(11, pass, "SOD pipeline: 3 motion classes reach >=0.9 test accuracy through 5 channels",
           fmt("units=%s acc=%.3f %.1fs", units_ok ? "ok" : "FAIL", eval.micro, elapsed));
}

} // namespace

int main() {
    auto t0 = std::chrono::steady_clock::now();
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criteria_6_and_7();
    criterion_8();
    criterion_9();
    criterion_10();
    criterion_11();
    std::printf("---\n%d criterion(s) failed, total %.1fs\n", g_failures, seconds_since(t0));
    return g_failures == 0 ? 0 : 1;
}
