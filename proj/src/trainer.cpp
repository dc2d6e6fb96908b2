#include "dml/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace dml {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double max_pairwise_sq_distance(const EmbeddingBatch& batch) {
    double mx = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        for (std::size_t j = i + 1; j < batch.size(); ++j) {
            mx = std::max(mx, sq_distance(batch, i, j));
        }
    }
    return mx;
}

} // namespace

bool TrainLog::ever_collapsed() const {
    return collapse_raises > 0;
}

std::string TrainLog::to_csv() const {
    std::string out =
        "iteration,loss_total,loss_soft,loss_embed,lr,n_semi,n_easy,n_hard,mean_norm,collapse\n";
    for (const TrainRecord& r : records) {
        out += std::to_string(r.iteration);
        out += ',';
        out += fmt_double(r.loss_total);
        out += ',';
        out += fmt_double(r.loss_soft);
        out += ',';
        out += fmt_double(r.loss_embed);
        out += ',';
        out += fmt_double(r.lr);
        out += ',';
        out += std::to_string(r.n_semi);
        out += ',';
        out += std::to_string(r.n_easy);
        out += ',';
        out += std::to_string(r.n_hard);
        out += ',';
        out += fmt_double(r.mean_norm);
        out += ',';
        out += r.collapse ? '1' : '0';
        out += '\n';
    }
    return out;
}

std::string TrainLog::to_jsonl() const {
    std::string out;
    for (const TrainRecord& r : records) {
        nlohmann::ordered_json j;
        j["iteration"] = r.iteration;
        j["loss_total"] = r.loss_total;
        j["loss_soft"] = r.loss_soft;
        j["loss_embed"] = r.loss_embed;
        j["lr"] = r.lr;
        j["n_semi"] = r.n_semi;
        j["n_easy"] = r.n_easy;
        j["n_hard"] = r.n_hard;
        j["mean_norm"] = r.mean_norm;
        j["collapse"] = r.collapse;
        out += j.dump();
        out += '\n';
    }
    return out;
}

double lr_schedule(int t, int total, double base_lr, double power) {
    if (t < 0 || t > total) throw OutOfRange("lr_schedule: t outside [0, total]");
    if (!(base_lr > 0.0)) throw InvalidConfig("lr_schedule: base_lr must be positive");
    return base_lr * std::pow(1.0 - static_cast<double>(t) / static_cast<double>(total), power);
}

void sgd_momentum_step(const std::vector<DenseArray*>& params,
                       const std::vector<DenseArray>& grads, std::vector<DenseArray>& velocity,
                       double lr, double momentum) {
    if (params.size() != grads.size() || params.size() != velocity.size()) {
        throw ShapeError("sgd_momentum_step: parameter group counts disagree");
    }
    for (std::size_t g = 0; g < params.size(); ++g) {
        DenseArray& p = *params[g];
        const DenseArray& grad = grads[g];
        DenseArray& v = velocity[g];
        if (!p.same_shape(grad) || !p.same_shape(v)) {
            throw ShapeError("sgd_momentum_step: shape mismatch");
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            v[i] = momentum * v[i] - lr * grad[i];
            p[i] += v[i];
        }
    }
}

DenseArray reshape_to_input(const DenseArray& input, const NetConfig& config) {
    const std::size_t h = config.input_h, w = config.input_w, c = config.input_c;
    if (input.rank() == 3) {
        if (input.shape()[0] != h || input.shape()[1] != w || input.shape()[2] != c) {
            throw ShapeError("reshape_to_input: image shape does not match trunk");
        }
        return input;
    }
    if (input.size() != h * w * c) {
        throw ShapeError("reshape_to_input: flat size does not match trunk input");
    }
    return DenseArray({h, w, c}, std::vector<double>(input.data(), input.data() + input.size()));
}

TrainResult train(TwoHeadNet net, const LabeledDataset& dataset, const TrainConfig& cfg) {
    if (dataset.size() == 0) throw EmptyInput("train: empty dataset");
    if (cfg.iterations < 1) throw InvalidConfig("train: need iterations >= 1");
    if (!(cfg.base_lr > 0.0)) throw InvalidConfig("train: base_lr must be positive");
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) {
        throw InvalidConfig("train: momentum must be in [0, 1)");
    }
    if (cfg.lambda < 0.0) throw InvalidConfig("train: lambda must be >= 0");

    const DatasetIndex index = DatasetIndex::from_labels(dataset.labels);
    SeededRng sample_rng(cfg.seed);
    SeededRng cluster_rng = SeededRng(cfg.seed).fork(0x636c7573ULL);

    ClassCenters centers(static_cast<std::size_t>(net.config.n_classes),
                         static_cast<std::size_t>(net.config.d_emb), cfg.center_alpha);

    std::vector<DenseArray> velocity;
    for (const DenseArray* p : net.params()) velocity.push_back(DenseArray::zeros_like(*p));

    const MarginSpec margin_spec =
        cfg.margin_mode == MarginSpec::Mode::hard ? MarginSpec::hard(cfg.margin) : MarginSpec::soft();

    TrainLog log;
    bool collapse_flag = false;

    for (int it = 0; it < cfg.iterations; ++it) {
        const double lr = lr_schedule(it, cfg.iterations, cfg.base_lr, cfg.lr_power);

        // --- batch selection (and, for the imbalanced sampler, the triplets) ---
        std::vector<int> ids;
        TripletSet planned_triplets;
        bool have_planned = false;
        if (cfg.sampler == SamplerKind::pk) {
            BatchPlan plan = pk_sample(index, cfg.batch_size, cfg.samples_per_class, sample_rng);
            ids = std::move(plan.sample_ids);
        } else if (cfg.sampler == SamplerKind::uniform) {
            for (int i = 0; i < cfg.batch_size; ++i) {
                ids.push_back(static_cast<int>(sample_rng.below(dataset.size())));
            }
        } else {
            auto embed_ids = [&](const std::vector<int>& sids) {
                std::vector<DenseArray> ins;
                std::vector<int> labs;
                ins.reserve(sids.size());
                for (int id : sids) {
                    ins.push_back(reshape_to_input(dataset.inputs[id], net.config));
                    labs.push_back(dataset.labels[id]);
                }
                return forward_batch(net, ins, labs).embeddings;
            };
            try {
                ImbalancedRound round = imbalanced_round(index, cfg.batch_size, cfg.pool_batches,
                                                         embed_ids, cfg.margin, sample_rng);
                log.skipped_pairs += round.pairs_without_semi_hard;
                if (!round.triplets.empty()) {
                    ids = std::move(round.train_ids);
                    planned_triplets = std::move(round.triplets);
                    have_planned = true;
                } else {
                    ids.assign(round.pool_ids.begin(), round.pool_ids.begin() + cfg.batch_size);
                    ++log.empty_triplet_events;
                }
            } catch (const EmptyTripletSet&) {
                // No positive pairs in the pool: redraw a plain batch and run softmax only.
                std::vector<int> all;
                for (const auto& c : index.by_class) all.insert(all.end(), c.begin(), c.end());
                std::sort(all.begin(), all.end());
                for (int i = 0; i < cfg.batch_size; ++i) {
                    ids.push_back(all[sample_rng.below(all.size())]);
                }
                ++log.empty_triplet_events;
            }
        }

        std::vector<DenseArray> inputs;
        std::vector<int> labels;
        inputs.reserve(ids.size());
        for (int id : ids) {
            inputs.push_back(reshape_to_input(dataset.inputs[id], net.config));
            labels.push_back(dataset.labels[id]);
        }
        BatchForward fwd = forward_batch(net, inputs, labels);

        // --- losses ---
        LossResult soft = softmax_ce(fwd.logits, labels);
        if (cfg.detach_softmax) soft.grad_logits = DenseArray::zeros_like(*soft.grad_logits);

        LossResult embed;
        int n_semi = 0, n_easy = 0, n_hard = 0;
        bool empty_mining = false;
        auto count_kinds = [&](const TripletSet& ts, const DistanceMatrix& dists) {
            for (const Triplet& t : ts.triplets) {
                switch (classify_negative(dists(t.anchor, t.positive), dists(t.anchor, t.negative),
                                          cfg.margin)) {
                    case NegativeKind::semi_hard: ++n_semi; break;
                    case NegativeKind::easy: ++n_easy; break;
                    case NegativeKind::hard: ++n_hard; break;
                }
            }
        };

        switch (cfg.objective) {
            case EmbedObjective::none:
                break;
            case EmbedObjective::triplet_hard:
            case EmbedObjective::triplet_semi_hard: {
                DistanceMatrix dists = pairwise_sq_distances(fwd.embeddings);
                TripletSet triplets;
                if (have_planned) {
                    triplets = planned_triplets;
                } else {
                    try {
                        triplets = cfg.objective == EmbedObjective::triplet_hard
                                       ? mine_batch_hard(dists, labels)
                                       : mine_semi_hard(dists, labels, cfg.margin);
                    } catch (const EmptyTripletSet&) {
                        empty_mining = true;
                        ++log.empty_triplet_events;
                    }
                }
                if (!empty_mining) {
                    embed = triplet_loss(fwd.embeddings, dists, triplets, margin_spec);
                    count_kinds(triplets, dists);
                }
                break;
            }
            case EmbedObjective::center:
                embed = center_loss(fwd.embeddings, centers);
                break;
            case EmbedObjective::tcl:
                embed = tcl_loss(fwd.embeddings, centers, cfg.margin);
                break;
            case EmbedObjective::magnet: {
                MagnetConfig mc = assign_magnet_clusters(fwd.embeddings, cfg.magnet_clusters,
                                                         cluster_rng, cfg.magnet_alpha);
                embed = magnet_loss(fwd.embeddings, mc);
                break;
            }
        }

        LossResult combined = combined_loss(soft, embed, cfg.lambda);
        DenseArray grad_logits = combined.grad_logits
                                     ? *combined.grad_logits
                                     : DenseArray({ids.size(),
                                                   static_cast<std::size_t>(net.config.n_classes)});
        DenseArray grad_emb = combined.grad_embeddings
                                  ? *combined.grad_embeddings
                                  : DenseArray({ids.size(),
                                                static_cast<std::size_t>(net.config.d_emb)});

        NetGrads grads = backward_batch(net, fwd, grad_logits, grad_emb);
        sgd_momentum_step(net.params(), grads.tensors, velocity, lr, cfg.momentum);
        ++net.revision;

        // Centers track the batch features seen this step, after the weight update.
        if (cfg.objective == EmbedObjective::center || cfg.objective == EmbedObjective::tcl) {
            centers = update_centers(std::move(centers), fwd.embeddings);
        }

        // --- collapse monitor ---
        double max_pd = max_pairwise_sq_distance(fwd.embeddings);
        bool raise = fwd.mean_pre_norm < cfg.collapse_threshold ||
                     max_pd < cfg.distance_collapse_threshold;
        if (raise) {
            if (!collapse_flag) ++log.collapse_raises;
            collapse_flag = true;
        } else if (collapse_flag && fwd.mean_pre_norm > 10.0 * cfg.collapse_threshold) {
            collapse_flag = false;
            ++log.collapse_recoveries;
        }

        TrainRecord rec;
        rec.iteration = it;
        rec.loss_total = combined.value;
        rec.loss_soft = soft.value;
        rec.loss_embed = embed.value;
        rec.lr = lr;
        rec.n_semi = n_semi;
        rec.n_easy = n_easy;
        rec.n_hard = n_hard;
        rec.mean_norm = fwd.mean_pre_norm;
        rec.collapse = collapse_flag;
        log.records.push_back(rec);
    }
    return {std::move(net), std::move(log)};
}

} // namespace dml
