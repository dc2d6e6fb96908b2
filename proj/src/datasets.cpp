#include "dml/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace dml {

namespace {

// Low-frequency 2-D cosine basis indexed by (u, v) half-wave counts; DC
// excluded so patterns carry contrast.
constexpr int kBasisFreqs[][2] = {{1, 0}, {0, 1}, {1, 1}, {2, 0}, {0, 2}, {2, 1},
                                  {1, 2}, {2, 2}, {3, 0}, {0, 3}, {3, 1}, {1, 3}};

double basis_value(int j, int px, int py, int w, int h) {
    const double u = kBasisFreqs[j][0];
    const double v = kBasisFreqs[j][1];
    return std::cos(std::numbers::pi * u * (px + 0.5) / w) *
           std::cos(std::numbers::pi * v * (py + 0.5) / h);
}

} // namespace

SyntheticModel plan_synthetic(const SyntheticSpec& spec, SeededRng& rng) {
    if (spec.n_classes < 2) throw InvalidConfig("plan_synthetic: need at least 2 classes");
    if (spec.modes_per_class < 1) throw InvalidConfig("plan_synthetic: need modes_per_class >= 1");
    if (!(spec.sigma > 0.0)) throw InvalidConfig("plan_synthetic: sigma must be positive");
    if (spec.latent_dim < 1) throw InvalidConfig("plan_synthetic: need latent_dim >= 1");
    if (spec.input_mode == InputMode::image &&
        spec.latent_dim > static_cast<int>(std::size(kBasisFreqs))) {
        throw InvalidConfig("plan_synthetic: image mode supports latent_dim <= 12");
    }

    const int n_modes = spec.n_classes * spec.modes_per_class;
    const double min_sep = 6.0 * spec.sigma;
    const double min_sep_sq = min_sep * min_sep;

    SyntheticModel model;
    model.spec = spec;
    model.mode_centers = DenseArray({static_cast<std::size_t>(n_modes),
                                     static_cast<std::size_t>(spec.latent_dim)});
    for (int m = 0; m < n_modes; ++m) {
        bool placed = false;
        for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
            std::vector<double> candidate(spec.latent_dim);
            for (double& v : candidate) v = rng.uniform(-1.0, 1.0);
            placed = true;
            for (int prev = 0; prev < m && placed; ++prev) {
                double sq = 0.0;
                for (int k = 0; k < spec.latent_dim; ++k) {
                    double diff = candidate[k] - model.mode_centers.at(prev, k);
                    sq += diff * diff;
                }
                placed = sq >= min_sep_sq;
            }
            if (placed) {
                for (int k = 0; k < spec.latent_dim; ++k) model.mode_centers.at(m, k) = candidate[k];
            }
        }
        if (!placed) {
            throw PlacementFailure("plan_synthetic: cannot separate mode centers by 6*sigma");
        }
    }
    return model;
}

LabeledDataset render_latents(const SyntheticSpec& spec, const DenseArray& latents,
                              const std::vector<int>& labels,
                              const std::vector<std::pair<int, int>>* shifts) {
    LabeledDataset out;
    out.labels = labels;
    out.n_classes = spec.n_classes;
    const std::size_t n = latents.rows();
    const int d = spec.latent_dim;
    if (spec.input_mode == InputMode::vector) {
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> row(d);
            for (int k = 0; k < d; ++k) row[k] = latents.at(i, k);
            out.inputs.push_back(DenseArray::from_vector(std::move(row)));
        }
        return out;
    }
    const int h = spec.image_h, w = spec.image_w;
    for (std::size_t i = 0; i < n; ++i) {
        int dx = shifts ? (*shifts)[i].first : 0;
        int dy = shifts ? (*shifts)[i].second : 0;
        DenseArray img({static_cast<std::size_t>(h), static_cast<std::size_t>(w), 1});
        for (int py = 0; py < h; ++py) {
            for (int px = 0; px < w; ++px) {
                double v = 0.0;
                for (int j = 0; j < d; ++j) {
                    v += latents.at(i, j) * basis_value(j, (px + dx) % w, (py + dy) % h, w, h);
                }
                img.at3(py, px, 0) = v / d;
            }
        }
        out.inputs.push_back(std::move(img));
    }
    return out;
}

LabeledDataset sample_synthetic(const SyntheticModel& model, const std::vector<int>& class_counts,
                                SeededRng& rng) {
    const SyntheticSpec& spec = model.spec;
    if (class_counts.size() != static_cast<std::size_t>(spec.n_classes)) {
        throw ShapeError("sample_synthetic: one count per class required");
    }
    std::size_t total = 0;
    for (int c : class_counts) total += static_cast<std::size_t>(std::max(c, 0));

    DenseArray latents({total, static_cast<std::size_t>(spec.latent_dim)});
    std::vector<int> labels;
    std::vector<std::pair<int, int>> shifts;
    labels.reserve(total);
    shifts.reserve(total);
    std::size_t row = 0;
    for (int c = 0; c < spec.n_classes; ++c) {
        for (int s = 0; s < class_counts[c]; ++s) {
            int mode = c * spec.modes_per_class + (s % spec.modes_per_class);
            for (int k = 0; k < spec.latent_dim; ++k) {
                latents.at(row, k) = model.mode_centers.at(mode, k) + spec.sigma * rng.normal();
            }
            if (spec.input_mode == InputMode::image && spec.shift_px > 0) {
                int dx = static_cast<int>(rng.below(spec.shift_px + 1));
                int dy = static_cast<int>(rng.below(spec.shift_px + 1));
                shifts.emplace_back(dx, dy);
            } else {
                shifts.emplace_back(0, 0);
            }
            labels.push_back(c);
            ++row;
        }
    }
    return render_latents(spec, latents, labels, &shifts);
}

SyntheticDataset gen_synthetic(const SyntheticSpec& spec, SeededRng& rng) {
    SyntheticDataset out;
    out.model = plan_synthetic(spec, rng);
    std::vector<int> counts = spec.class_counts;
    if (counts.empty()) counts.assign(spec.n_classes, spec.samples_per_class);
    out.data = sample_synthetic(out.model, counts, rng);
    return out;
}

std::vector<int> gen_long_tail(int n_classes, int head_count, double decay) {
    if (head_count < 1) throw InvalidConfig("gen_long_tail: head_count must be >= 1");
    if (!(decay > 0.0) || decay > 1.0) throw InvalidConfig("gen_long_tail: decay must be in (0, 1]");
    std::vector<int> counts(n_classes);
    for (int i = 0; i < n_classes; ++i) {
        counts[i] = std::max(1, static_cast<int>(std::llround(head_count * std::pow(decay, i))));
    }
    return counts;
}

DenseArray sod_encode(const VideoEvent& event, SeededRng& rng) {
    if (event.frames.size() < 6) {
        throw EventTooShort("sod_encode: events shorter than 6 frames are invalid");
    }
    const std::size_t start = rng.below(event.frames.size() - 5);
    const DenseArray& f0 = event.frames[start];
    if (f0.rank() != 3 || f0.shape()[2] != 3) throw ShapeError("sod_encode: frames must be h x w x 3");
    const std::size_t h = f0.shape()[0], w = f0.shape()[1];

    auto gray = [&](const DenseArray& frame, std::size_t y, std::size_t x) {
        return std::round(0.299 * frame.at3(y, x, 0) + 0.587 * frame.at3(y, x, 1) +
                          0.114 * frame.at3(y, x, 2));
    };

    DenseArray sod({h, w, 5});
    for (std::size_t k = 0; k < 5; ++k) {
        const DenseArray& a = event.frames[start + k];
        const DenseArray& b = event.frames[start + k + 1];
        if (!a.same_shape(f0) || !b.same_shape(f0)) {
            throw ShapeError("sod_encode: inconsistent frame shapes");
        }
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                sod.at3(y, x, k) = gray(b, y, x) - gray(a, y, x);
            }
        }
    }
    return sod;
}

DenseArray scale_sod(const DenseArray& sod) {
    DenseArray out = sod;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= 255.0;
    return out;
}

VideoDataset gen_synthetic_video(int n_classes, SeededRng& rng, int events_per_class,
                                 int frames_per_event, int h, int w) {
    if (n_classes < 2) throw InvalidConfig("gen_synthetic_video: need at least 2 classes");
    if (frames_per_event < 6) throw InvalidConfig("gen_synthetic_video: need >= 6 frames");

    VideoDataset out;
    out.n_classes = n_classes;
    const int square = 4;
    for (int c = 0; c < n_classes; ++c) {
        // Class pattern: direction around the circle, speed cycling 1..3.
        double angle = 2.0 * std::numbers::pi * c / n_classes;
        double speed = 1.0 + (c % 3);
        double vx = speed * std::cos(angle);
        double vy = speed * std::sin(angle);
        for (int e = 0; e < events_per_class; ++e) {
            VideoEvent event;
            event.label = c;
            event.frame_rate = 3.0;
            double px = rng.uniform(0.0, w);
            double py = rng.uniform(0.0, h);
            for (int f = 0; f < frames_per_event; ++f) {
                DenseArray frame({static_cast<std::size_t>(h), static_cast<std::size_t>(w), 3});
                frame.fill(30.0);
                for (int dy = 0; dy < square; ++dy) {
                    for (int dx = 0; dx < square; ++dx) {
                        int yy = (static_cast<int>(std::floor(py)) + dy) % h;
                        int xx = (static_cast<int>(std::floor(px)) + dx) % w;
                        if (yy < 0) yy += h;
                        if (xx < 0) xx += w;
                        frame.at3(yy, xx, 0) = 200.0;
                        frame.at3(yy, xx, 1) = 200.0;
                        frame.at3(yy, xx, 2) = 200.0;
                    }
                }
                event.frames.push_back(std::move(frame));
                px += vx;
                py += vy;
            }
            out.events.push_back(std::move(event));
        }
    }
    return out;
}

LabeledDataset load_csv(const std::string& path, bool has_header) {
    std::ifstream in(path);
    if (!in) throw Error("load_csv: cannot open " + path);

    LabeledDataset out;
    std::set<int> classes;
    std::string line;
    std::size_t line_no = 0;
    std::size_t expected_cols = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (has_header && line_no == 1) continue;
        if (line.empty()) continue;
        std::vector<double> fields;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            char* end = nullptr;
            double v = std::strtod(cell.c_str(), &end);
            while (end && (*end == ' ' || *end == '\r')) ++end;
            if (end == cell.c_str() || (end && *end != '\0')) {
                throw ParseError("load_csv: non-numeric field at line " + std::to_string(line_no));
            }
            fields.push_back(v);
        }
        if (fields.size() < 2) {
            throw ParseError("load_csv: need a label and at least one feature at line " +
                             std::to_string(line_no));
        }
        if (expected_cols == 0) {
            expected_cols = fields.size();
        } else if (fields.size() != expected_cols) {
            throw ParseError("load_csv: inconsistent column count at line " +
                             std::to_string(line_no));
        }
        double label_v = fields[0];
        int label = static_cast<int>(label_v);
        if (label_v != static_cast<double>(label) || label < 0) {
            throw ParseError("load_csv: label must be a non-negative integer at line " +
                             std::to_string(line_no));
        }
        classes.insert(label);
        out.labels.push_back(label);
        out.inputs.push_back(
            DenseArray::from_vector(std::vector<double>(fields.begin() + 1, fields.end())));
    }
    if (out.labels.empty()) throw EmptyInput("load_csv: no data rows in " + path);
    out.n_classes = classes.empty() ? 0 : *classes.rbegin() + 1;
    return out;
}

void save_csv(const LabeledDataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("save_csv: cannot open " + path);
    char buf[64];
    for (std::size_t i = 0; i < data.size(); ++i) {
        out << data.labels[i];
        for (std::size_t j = 0; j < data.inputs[i].size(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", data.inputs[i][j]);
            out << ',' << buf;
        }
        out << '\n';
    }
    if (!out) throw Error("save_csv: write failed for " + path);
}

} // namespace dml
