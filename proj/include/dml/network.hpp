#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dml/geometry.hpp"

namespace dml {

struct ConvSpec {
    int out_channels = 8;
    int kernel = 3;
    int stride = 2;
    int pad = 1;
};

struct NetConfig {
    int input_h = 16;
    int input_w = 16;
    int input_c = 1;
    std::vector<ConvSpec> conv = {{8, 3, 2, 1}, {8, 3, 2, 1}};
    int n_classes = 10;
    int d_emb = 16;
    double norm_epsilon = 1e-12;

    static NetConfig desk(int n_classes, int d_emb = 16, int input_c = 1);
};

struct ConvLayer {
    DenseArray weights;  // kernel x kernel x in_c x out_c
    DenseArray bias;     // out_c
    ConvSpec spec;
    int in_channels = 0;
};

/// Shared convolutional trunk feeding two fully connected heads:
///   logits    = W_logits' * x           with x = spatial average of h
///   embedding = normalize(W_emb' * flatten(h))
/// where h is the trunk's final (pre-pool) feature map. The embedding head
/// reads h before pooling, so it sees the spatial layout the logits head loses.
class TwoHeadNet {
public:
    NetConfig config;
    std::vector<ConvLayer> trunk;
    DenseArray w_logits;  // channels x n_classes
    DenseArray w_emb;     // flat(h) x d_emb
    std::uint64_t revision = 0;  // bumped on every parameter mutation

    std::vector<DenseArray*> params();
    std::vector<const DenseArray*> params() const;
    std::vector<std::string> param_names() const;
    std::size_t param_count() const;

    int h_height() const { return h_h_; }
    int h_width() const { return h_w_; }
    int h_channels() const { return h_c_; }
    int flat_h() const { return h_h_ * h_w_ * h_c_; }

    friend TwoHeadNet init_params(const NetConfig& config, SeededRng& rng);
    friend TwoHeadNet load_checkpoint(const std::string& path);

private:
    int h_h_ = 0, h_w_ = 0, h_c_ = 0;
    void derive_shapes();
};

/// He-uniform weights, zero biases; deterministic per seed.
TwoHeadNet init_params(const NetConfig& config, SeededRng& rng);

/// Everything backward needs: inputs to each trunk layer, pre-activation conv
/// outputs, the pooled feature x, and both head outputs.
struct ForwardTrace {
    DenseArray input;
    std::vector<DenseArray> pre_acts;   // per layer, before ReLU
    std::vector<DenseArray> acts;       // per layer, after ReLU; back() is h
    DenseArray x;                       // per-channel spatial mean of h
    DenseArray logits;                  // n
    DenseArray pre_norm_embedding;      // d_emb
    double pre_norm_norm = 0.0;
    DenseArray embedding;               // d_emb, unit norm (epsilon-guarded)
    bool collapsed = false;
};

ForwardTrace forward(const TwoHeadNet& net, const DenseArray& input);

struct BatchForward {
    std::vector<ForwardTrace> traces;
    DenseArray logits;         // b x n
    EmbeddingBatch embeddings; // b x d_emb, normalized
    int collapse_count = 0;
    double mean_pre_norm = 0.0;
    std::uint64_t net_revision = 0;
};

BatchForward forward_batch(const TwoHeadNet& net, const std::vector<DenseArray>& inputs,
                           const std::vector<int>& labels);

/// Parameter gradients aligned with net.params() order, plus input gradients.
struct NetGrads {
    std::vector<DenseArray> tensors;
    std::vector<DenseArray> input_grads;
};

/// Exact reverse accumulation: tangent projection through the normalization,
/// both heads, uniform pooling redistribution, ReLU masks and convolutions.
/// Head gradients sum into the shared trunk. The trace must come from a
/// forward pass on the same parameter revision.
NetGrads backward_batch(const TwoHeadNet& net, const BatchForward& fwd,
                        const DenseArray& grad_logits, const DenseArray& grad_embeddings);

/// Text checkpoint: shapes then row-major values as C99 hexfloats, so the
/// round trip is bit-exact.
void save_checkpoint(const TwoHeadNet& net, const std::string& path);
TwoHeadNet load_checkpoint(const std::string& path);

} // namespace dml
