#pragma once

#include <string>
#include <vector>

#include "dml/datasets.hpp"
#include "dml/losses.hpp"
#include "dml/network.hpp"
#include "dml/sampling.hpp"

namespace dml {

enum class EmbedObjective { none, triplet_hard, triplet_semi_hard, center, tcl, magnet };

/// pk: balanced b/k classes x k samples; uniform: b i.i.d. draws over the
/// dataset (keeps the natural class imbalance); imbalanced: the pooled
/// semi-hard round for long-tail data.
enum class SamplerKind { pk, uniform, imbalanced };

struct TrainConfig {
    int iterations = 500;
    double base_lr = 0.01;
    double momentum = 0.9;
    double lr_power = 1.0;
    double lambda = 1.0;

    EmbedObjective objective = EmbedObjective::triplet_semi_hard;
    MarginSpec::Mode margin_mode = MarginSpec::Mode::hard;
    double margin = 0.2;

    double center_alpha = 0.5;
    int magnet_clusters = 2;
    double magnet_alpha = 0.0;

    SamplerKind sampler = SamplerKind::pk;
    int batch_size = 32;
    int samples_per_class = 4;  // K of the PK sampler
    int pool_batches = 3;       // N_B of the imbalanced round

    std::uint64_t seed = 0;
    double collapse_threshold = 1e-3;
    // Embedding-crowding detector: flag when the largest pairwise squared
    // distance in the batch falls below this. The crowded fixed point of
    // hard-mining dynamics equilibrates near 1e-4..1e-3 (pull and push terms
    // balance there), while healthy runs stay above ~1, so 1e-2 splits the
    // two regimes with two orders of magnitude to spare on each side.
    double distance_collapse_threshold = 1e-2;

    // Collapse rig: zero the softmax gradient so only the embedding loss
    // drives the weights (the loss value is still logged).
    bool detach_softmax = false;
};

struct TrainRecord {
    int iteration = 0;
    double loss_total = 0.0;
    double loss_soft = 0.0;
    double loss_embed = 0.0;
    double lr = 0.0;
    int n_semi = 0;
    int n_easy = 0;
    int n_hard = 0;
    double mean_norm = 0.0;
    bool collapse = false;
};

struct TrainLog {
    std::vector<TrainRecord> records;
    int empty_triplet_events = 0;
    int collapse_raises = 0;
    int collapse_recoveries = 0;
    int skipped_pairs = 0;  // imbalanced rounds: positive pairs without a semi-hard negative

    bool ever_collapsed() const;
    std::string to_csv() const;
    std::string to_jsonl() const;
};

/// base_lr * (1 - t/total)^power; 0 <= t <= total.
double lr_schedule(int t, int total, double base_lr, double power = 1.0);

/// v <- momentum * v - lr * g;  p <- p + v.
void sgd_momentum_step(const std::vector<DenseArray*>& params,
                       const std::vector<DenseArray>& grads, std::vector<DenseArray>& velocity,
                       double lr, double momentum);

struct TrainResult {
    TwoHeadNet net;
    TrainLog log;
};

/// Full optimization loop: sample a batch, forward, build the configured
/// embedding loss (mining / centers / clusters as appropriate), combine with
/// the softmax loss, backward, momentum step. Iterations whose mining comes
/// up empty apply the softmax-only gradient and are counted in the log.
TrainResult train(TwoHeadNet net, const LabeledDataset& dataset, const TrainConfig& config);

/// Flat vectors are reshaped to the trunk's input; rank-3 inputs are checked.
DenseArray reshape_to_input(const DenseArray& input, const NetConfig& config);

} // namespace dml
