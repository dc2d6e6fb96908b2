#pragma once

#include <string>
#include <vector>

#include "dml/tensor.hpp"

namespace dml {

struct LabeledDataset {
    std::vector<DenseArray> inputs;
    std::vector<int> labels;
    int n_classes = 0;

    std::size_t size() const { return labels.size(); }
};

enum class InputMode { vector, image };

/// Gaussian-mixture classification data: each class owns modes_per_class
/// latent mode centers, placed with minimum pairwise separation 6*sigma.
/// Vector mode emits the latent points directly; image mode renders each
/// latent point as a low-frequency cosine pattern so a conv trunk has
/// something spatial to chew on.
struct SyntheticSpec {
    int n_classes = 2;
    int modes_per_class = 1;
    int samples_per_class = 10;
    std::vector<int> class_counts;  // overrides samples_per_class when nonempty
    InputMode input_mode = InputMode::vector;
    int latent_dim = 2;             // latent/vector dimensionality
    int image_h = 16;
    int image_w = 16;
    double sigma = 0.1;
    // Image mode jitters each rendering by a random cyclic shift of up to
    // shift_px pixels per axis. Raw pixel distance then stops mirroring
    // latent distance, so retrieval quality has to come from learned
    // features rather than from the rendering itself.
    int shift_px = 3;
};

/// Mode centers for a spec; splitting train/test means sampling this model twice.
struct SyntheticModel {
    SyntheticSpec spec;
    DenseArray mode_centers;  // (n_classes * modes_per_class) x latent_dim
};

/// Places the mode centers (PlacementFailure if 6*sigma separation cannot be
/// met in the latent box after many attempts).
SyntheticModel plan_synthetic(const SyntheticSpec& spec, SeededRng& rng);

/// Draws class_counts[c] samples for class c, round-robin across its modes.
LabeledDataset sample_synthetic(const SyntheticModel& model, const std::vector<int>& class_counts,
                                SeededRng& rng);

struct SyntheticDataset {
    LabeledDataset data;
    SyntheticModel model;
};

LabeledDataset render_latents(const SyntheticSpec& spec, const DenseArray& latents,
                              const std::vector<int>& labels,
                              const std::vector<std::pair<int, int>>* shifts = nullptr);

SyntheticDataset gen_synthetic(const SyntheticSpec& spec, SeededRng& rng);

/// class i count = max(1, round(head_count * decay^i)).
std::vector<int> gen_long_tail(int n_classes, int head_count, double decay);

struct VideoEvent {
    std::vector<DenseArray> frames;  // each h x w x 3
    double frame_rate = 3.0;
    int label = 0;
};

/// Stack-of-difference motion encoding: a random 6-frame consecutive window,
/// luma grayscale, consecutive pairs subtracted into an h x w x 5 stack of
/// integral values in [-255, 255].
DenseArray sod_encode(const VideoEvent& event, SeededRng& rng);

/// Scales an integral SOD stack by 1/255 into [-1, 1] for the network.
DenseArray scale_sod(const DenseArray& sod);

struct VideoDataset {
    std::vector<VideoEvent> events;
    int n_classes = 0;
};

/// Motion-pattern classes: a bright square translating with a class-specific
/// direction and speed (toroidal wrap). Deterministic per seed.
VideoDataset gen_synthetic_video(int n_classes, SeededRng& rng, int events_per_class = 40,
                                 int frames_per_event = 8, int h = 16, int w = 16);

/// Rows are "label,v1,...,vd". Inputs come back as flat vectors.
LabeledDataset load_csv(const std::string& path, bool has_header = false);

void save_csv(const LabeledDataset& data, const std::string& path);

} // namespace dml
