#include "dml/network.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace dml {

namespace {

int conv_out_dim(int in, const ConvSpec& s) {
    return (in + 2 * s.pad - s.kernel) / s.stride + 1;
}

// out[y][x][oc] = bias[oc] + sum_{ky,kx,ic} in[y*s-p+ky][x*s-p+kx][ic] * w[ky][kx][ic][oc]
DenseArray conv_forward(const DenseArray& in, const ConvLayer& layer) {
    const int in_h = static_cast<int>(in.shape()[0]);
    const int in_w = static_cast<int>(in.shape()[1]);
    const int in_c = static_cast<int>(in.shape()[2]);
    const ConvSpec& s = layer.spec;
    const int out_h = conv_out_dim(in_h, s);
    const int out_w = conv_out_dim(in_w, s);

    DenseArray out({static_cast<std::size_t>(out_h), static_cast<std::size_t>(out_w),
                    static_cast<std::size_t>(s.out_channels)});
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            for (int oc = 0; oc < s.out_channels; ++oc) {
                double acc = layer.bias[oc];
                for (int ky = 0; ky < s.kernel; ++ky) {
                    int iy = y * s.stride - s.pad + ky;
                    if (iy < 0 || iy >= in_h) continue;
                    for (int kx = 0; kx < s.kernel; ++kx) {
                        int ix = x * s.stride - s.pad + kx;
                        if (ix < 0 || ix >= in_w) continue;
                        for (int ic = 0; ic < in_c; ++ic) {
                            acc += in.at3(iy, ix, ic) * layer.weights.at4(ky, kx, ic, oc);
                        }
                    }
                }
                out.at3(y, x, oc) = acc;
            }
        }
    }
    return out;
}

void conv_backward(const DenseArray& in, const ConvLayer& layer, const DenseArray& grad_out,
                   DenseArray& grad_w, DenseArray& grad_b, DenseArray& grad_in) {
    const int in_h = static_cast<int>(in.shape()[0]);
    const int in_w = static_cast<int>(in.shape()[1]);
    const int in_c = static_cast<int>(in.shape()[2]);
    const ConvSpec& s = layer.spec;
    const int out_h = static_cast<int>(grad_out.shape()[0]);
    const int out_w = static_cast<int>(grad_out.shape()[1]);

    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            for (int oc = 0; oc < s.out_channels; ++oc) {
                double g = grad_out.at3(y, x, oc);
                if (g == 0.0) continue;
                grad_b[oc] += g;
                for (int ky = 0; ky < s.kernel; ++ky) {
                    int iy = y * s.stride - s.pad + ky;
                    if (iy < 0 || iy >= in_h) continue;
                    for (int kx = 0; kx < s.kernel; ++kx) {
                        int ix = x * s.stride - s.pad + kx;
                        if (ix < 0 || ix >= in_w) continue;
                        for (int ic = 0; ic < in_c; ++ic) {
                            grad_w.at4(ky, kx, ic, oc) += in.at3(iy, ix, ic) * g;
                            grad_in.at3(iy, ix, ic) += layer.weights.at4(ky, kx, ic, oc) * g;
                        }
                    }
                }
            }
        }
    }
}

} // namespace

NetConfig NetConfig::desk(int n_classes, int d_emb, int input_c) {
    NetConfig cfg;
    cfg.n_classes = n_classes;
    cfg.d_emb = d_emb;
    cfg.input_c = input_c;
    return cfg;
}

void TwoHeadNet::derive_shapes() {
    int h = config.input_h, w = config.input_w;
    for (const ConvSpec& s : config.conv) {
        h = conv_out_dim(h, s);
        w = conv_out_dim(w, s);
        if (h < 1 || w < 1) throw InvalidConfig("TwoHeadNet: trunk shrinks feature map to nothing");
    }
    h_h_ = h;
    h_w_ = w;
    h_c_ = config.conv.back().out_channels;
}

std::vector<DenseArray*> TwoHeadNet::params() {
    std::vector<DenseArray*> out;
    for (ConvLayer& l : trunk) {
        out.push_back(&l.weights);
        out.push_back(&l.bias);
    }
    out.push_back(&w_logits);
    out.push_back(&w_emb);
    return out;
}

std::vector<const DenseArray*> TwoHeadNet::params() const {
    std::vector<const DenseArray*> out;
    for (const ConvLayer& l : trunk) {
        out.push_back(&l.weights);
        out.push_back(&l.bias);
    }
    out.push_back(&w_logits);
    out.push_back(&w_emb);
    return out;
}

std::vector<std::string> TwoHeadNet::param_names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < trunk.size(); ++i) {
        out.push_back("conv" + std::to_string(i) + ".w");
        out.push_back("conv" + std::to_string(i) + ".b");
    }
    out.push_back("w_logits");
    out.push_back("w_emb");
    return out;
}

std::size_t TwoHeadNet::param_count() const {
    std::size_t total = 0;
    for (const DenseArray* p : params()) total += p->size();
    return total;
}

TwoHeadNet init_params(const NetConfig& config, SeededRng& rng) {
    if (config.conv.empty()) throw InvalidConfig("init_params: trunk needs at least one layer");
    if (config.n_classes < 2) throw InvalidConfig("init_params: need at least 2 classes");
    if (config.d_emb < 1) throw InvalidConfig("init_params: need d_emb >= 1");
    if (config.input_h < 1 || config.input_w < 1 || config.input_c < 1) {
        throw InvalidConfig("init_params: bad input shape");
    }
    for (const ConvSpec& s : config.conv) {
        if (s.out_channels < 1 || s.kernel < 1 || s.stride < 1 || s.pad < 0) {
            throw InvalidConfig("init_params: bad conv spec");
        }
    }

    TwoHeadNet net;
    net.config = config;
    net.derive_shapes();

    auto he_uniform = [&rng](DenseArray& arr, int fan_in) {
        double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (std::size_t i = 0; i < arr.size(); ++i) arr[i] = rng.uniform(-bound, bound);
    };

    int in_c = config.input_c;
    for (const ConvSpec& s : config.conv) {
        ConvLayer layer;
        layer.spec = s;
        layer.in_channels = in_c;
        layer.weights = DenseArray({static_cast<std::size_t>(s.kernel),
                                    static_cast<std::size_t>(s.kernel),
                                    static_cast<std::size_t>(in_c),
                                    static_cast<std::size_t>(s.out_channels)});
        layer.bias = DenseArray({static_cast<std::size_t>(s.out_channels)});
        he_uniform(layer.weights, s.kernel * s.kernel * in_c);
        net.trunk.push_back(std::move(layer));
        in_c = s.out_channels;
    }
    net.w_logits = DenseArray({static_cast<std::size_t>(net.h_channels()),
                               static_cast<std::size_t>(config.n_classes)});
    he_uniform(net.w_logits, net.h_channels());
    net.w_emb = DenseArray({static_cast<std::size_t>(net.flat_h()),
                            static_cast<std::size_t>(config.d_emb)});
    he_uniform(net.w_emb, net.flat_h());
    return net;
}

ForwardTrace forward(const TwoHeadNet& net, const DenseArray& input) {
    const NetConfig& cfg = net.config;
    if (input.rank() != 3 || input.shape()[0] != static_cast<std::size_t>(cfg.input_h) ||
        input.shape()[1] != static_cast<std::size_t>(cfg.input_w) ||
        input.shape()[2] != static_cast<std::size_t>(cfg.input_c)) {
        throw ShapeError("forward: input shape does not match trunk configuration");
    }

    ForwardTrace trace;
    trace.input = input;
    const DenseArray* cur = &trace.input;
    for (const ConvLayer& layer : net.trunk) {
        DenseArray pre = conv_forward(*cur, layer);
        DenseArray act = pre;
        for (std::size_t i = 0; i < act.size(); ++i) act[i] = std::max(act[i], 0.0);
        trace.pre_acts.push_back(std::move(pre));
        trace.acts.push_back(std::move(act));
        cur = &trace.acts.back();
    }
    const DenseArray& h = trace.acts.back();
    const int hh = net.h_height(), hw = net.h_width(), hc = net.h_channels();

    // x = per-channel spatial mean of h
    trace.x = DenseArray({static_cast<std::size_t>(hc)});
    for (int y = 0; y < hh; ++y) {
        for (int x = 0; x < hw; ++x) {
            for (int c = 0; c < hc; ++c) trace.x[c] += h.at3(y, x, c);
        }
    }
    double inv_cells = 1.0 / static_cast<double>(hh * hw);
    for (int c = 0; c < hc; ++c) trace.x[c] *= inv_cells;

    trace.logits = DenseArray({static_cast<std::size_t>(cfg.n_classes)});
    for (int c = 0; c < hc; ++c) {
        for (int j = 0; j < cfg.n_classes; ++j) {
            trace.logits[j] += net.w_logits.at(c, j) * trace.x[c];
        }
    }

    trace.pre_norm_embedding = DenseArray({static_cast<std::size_t>(cfg.d_emb)});
    const int flat = net.flat_h();
    for (int f = 0; f < flat; ++f) {
        double hv = h[f];
        if (hv == 0.0) continue;
        for (int e = 0; e < cfg.d_emb; ++e) {
            trace.pre_norm_embedding[e] += net.w_emb.at(f, e) * hv;
        }
    }
    double sq = 0.0;
    for (int e = 0; e < cfg.d_emb; ++e) sq += trace.pre_norm_embedding[e] * trace.pre_norm_embedding[e];
    trace.pre_norm_norm = std::sqrt(sq);
    trace.collapsed = trace.pre_norm_norm < cfg.norm_epsilon;
    double inv = 1.0 / std::max(trace.pre_norm_norm, cfg.norm_epsilon);
    trace.embedding = trace.pre_norm_embedding;
    for (int e = 0; e < cfg.d_emb; ++e) trace.embedding[e] *= inv;
    return trace;
}

BatchForward forward_batch(const TwoHeadNet& net, const std::vector<DenseArray>& inputs,
                           const std::vector<int>& labels) {
    if (inputs.empty()) throw EmptyInput("forward_batch: no inputs");
    if (inputs.size() != labels.size()) throw ShapeError("forward_batch: labels do not match inputs");
    const std::size_t b = inputs.size();

    BatchForward out;
    out.net_revision = net.revision;
    out.logits = DenseArray({b, static_cast<std::size_t>(net.config.n_classes)});
    DenseArray emb({b, static_cast<std::size_t>(net.config.d_emb)});
    double norm_sum = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        ForwardTrace t = forward(net, inputs[i]);
        for (int j = 0; j < net.config.n_classes; ++j) out.logits.at(i, j) = t.logits[j];
        for (int e = 0; e < net.config.d_emb; ++e) emb.at(i, e) = t.embedding[e];
        if (t.collapsed) ++out.collapse_count;
        norm_sum += t.pre_norm_norm;
        out.traces.push_back(std::move(t));
    }
    out.mean_pre_norm = norm_sum / static_cast<double>(b);
    out.embeddings = EmbeddingBatch(std::move(emb), labels, true);
    return out;
}

NetGrads backward_batch(const TwoHeadNet& net, const BatchForward& fwd,
                        const DenseArray& grad_logits, const DenseArray& grad_embeddings) {
    if (fwd.net_revision != net.revision) {
        throw TraceMismatch("backward_batch: trace is stale for this parameter revision");
    }
    const std::size_t b = fwd.traces.size();
    const NetConfig& cfg = net.config;
    if (grad_logits.rank() != 2 || grad_logits.rows() != b ||
        grad_logits.cols() != static_cast<std::size_t>(cfg.n_classes)) {
        throw ShapeError("backward_batch: grad_logits shape mismatch");
    }
    if (grad_embeddings.rank() != 2 || grad_embeddings.rows() != b ||
        grad_embeddings.cols() != static_cast<std::size_t>(cfg.d_emb)) {
        throw ShapeError("backward_batch: grad_embeddings shape mismatch");
    }

    NetGrads grads;
    for (const DenseArray* p : net.params()) grads.tensors.push_back(DenseArray::zeros_like(*p));
    const std::size_t n_layers = net.trunk.size();
    DenseArray& g_w_logits = grads.tensors[2 * n_layers];
    DenseArray& g_w_emb = grads.tensors[2 * n_layers + 1];

    const int hh = net.h_height(), hw = net.h_width(), hc = net.h_channels();
    const int flat = net.flat_h();
    const double inv_cells = 1.0 / static_cast<double>(hh * hw);

    for (std::size_t i = 0; i < b; ++i) {
        const ForwardTrace& t = fwd.traces[i];

        // Normalization: g_u = (g_e - (g_e . e) e) / max(||u||, eps)
        double dot = 0.0;
        for (int e = 0; e < cfg.d_emb; ++e) dot += grad_embeddings.at(i, e) * t.embedding[e];
        double inv_norm = 1.0 / std::max(t.pre_norm_norm, cfg.norm_epsilon);
        DenseArray g_u({static_cast<std::size_t>(cfg.d_emb)});
        for (int e = 0; e < cfg.d_emb; ++e) {
            g_u[e] = (grad_embeddings.at(i, e) - dot * t.embedding[e]) * inv_norm;
        }

        // Embedding head: u = W_emb' flat(h)
        const DenseArray& h = t.acts.back();
        DenseArray g_h({static_cast<std::size_t>(hh), static_cast<std::size_t>(hw),
                        static_cast<std::size_t>(hc)});
        for (int f = 0; f < flat; ++f) {
            double hv = h[f];
            double acc = 0.0;
            for (int e = 0; e < cfg.d_emb; ++e) {
                double g = g_u[e];
                if (hv != 0.0) g_w_emb.at(f, e) += hv * g;
                acc += net.w_emb.at(f, e) * g;
            }
            g_h[f] = acc;
        }

        // Logits head: logits = W_logits' x, then pooling spreads g_x uniformly.
        DenseArray g_x({static_cast<std::size_t>(hc)});
        for (int c = 0; c < hc; ++c) {
            double acc = 0.0;
            for (int j = 0; j < cfg.n_classes; ++j) {
                double g = grad_logits.at(i, j);
                g_w_logits.at(c, j) += t.x[c] * g;
                acc += net.w_logits.at(c, j) * g;
            }
            g_x[c] = acc;
        }
        for (int y = 0; y < hh; ++y) {
            for (int x = 0; x < hw; ++x) {
                for (int c = 0; c < hc; ++c) g_h.at3(y, x, c) += g_x[c] * inv_cells;
            }
        }

        // Trunk, back to front.
        DenseArray g_act = std::move(g_h);
        for (std::size_t l = n_layers; l-- > 0;) {
            const DenseArray& pre = t.pre_acts[l];
            for (std::size_t j = 0; j < g_act.size(); ++j) {
                if (pre[j] <= 0.0) g_act[j] = 0.0;
            }
            const DenseArray& layer_in = (l == 0) ? t.input : t.acts[l - 1];
            DenseArray g_in = DenseArray::zeros_like(layer_in);
            conv_backward(layer_in, net.trunk[l], g_act, grads.tensors[2 * l],
                          grads.tensors[2 * l + 1], g_in);
            g_act = std::move(g_in);
        }
        grads.input_grads.push_back(std::move(g_act));
    }
    return grads;
}

void save_checkpoint(const TwoHeadNet& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("save_checkpoint: cannot open " + path);
    const NetConfig& cfg = net.config;
    char buf[64];
    auto hex = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%a", v);
        return std::string(buf);
    };

    out << "dmlkit-checkpoint 1\n";
    out << "input " << cfg.input_h << ' ' << cfg.input_w << ' ' << cfg.input_c << '\n';
    out << "classes " << cfg.n_classes << '\n';
    out << "emb " << cfg.d_emb << '\n';
    out << "norm_epsilon " << hex(cfg.norm_epsilon) << '\n';
    out << "layers " << cfg.conv.size() << '\n';
    for (const ConvSpec& s : cfg.conv) {
        out << "layer " << s.out_channels << ' ' << s.kernel << ' ' << s.stride << ' ' << s.pad
            << '\n';
    }
    auto names = net.param_names();
    auto tensors = net.params();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        out << "tensor " << names[i] << ' ' << tensors[i]->rank();
        for (std::size_t dim : tensors[i]->shape()) out << ' ' << dim;
        out << '\n';
        for (std::size_t j = 0; j < tensors[i]->size(); ++j) {
            out << hex((*tensors[i])[j]) << ((j + 1) % 8 == 0 ? '\n' : ' ');
        }
        if (tensors[i]->size() % 8 != 0) out << '\n';
    }
    out << "end\n";
    if (!out) throw Error("save_checkpoint: write failed for " + path);
}

TwoHeadNet load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("load_checkpoint: cannot open " + path);

    auto expect = [&in, &path](const std::string& token) {
        std::string got;
        if (!(in >> got) || got != token) {
            throw ParseError("load_checkpoint: malformed file " + path + " (expected '" + token +
                             "')");
        }
    };
    auto read_double = [&in, &path]() {
        std::string tok;
        if (!(in >> tok)) throw ParseError("load_checkpoint: truncated file " + path);
        char* end = nullptr;
        double v = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0') {
            throw ParseError("load_checkpoint: bad value '" + tok + "' in " + path);
        }
        return v;
    };

    expect("dmlkit-checkpoint");
    int version;
    in >> version;
    if (!in || version != 1) throw ParseError("load_checkpoint: unsupported version in " + path);

    NetConfig cfg;
    cfg.conv.clear();
    expect("input");
    in >> cfg.input_h >> cfg.input_w >> cfg.input_c;
    expect("classes");
    in >> cfg.n_classes;
    expect("emb");
    in >> cfg.d_emb;
    expect("norm_epsilon");
    cfg.norm_epsilon = read_double();
    expect("layers");
    std::size_t n_layers;
    in >> n_layers;
    for (std::size_t i = 0; i < n_layers; ++i) {
        expect("layer");
        ConvSpec s;
        in >> s.out_channels >> s.kernel >> s.stride >> s.pad;
        cfg.conv.push_back(s);
    }
    if (!in) throw ParseError("load_checkpoint: malformed header in " + path);

    // Rebuild with the stored config, then overwrite every tensor.
    SeededRng scratch(0);
    TwoHeadNet net = init_params(cfg, scratch);
    auto names = net.param_names();
    auto tensors = net.params();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        expect("tensor");
        std::string name;
        std::size_t rank;
        in >> name >> rank;
        if (name != names[i] || rank != tensors[i]->rank()) {
            throw ParseError("load_checkpoint: tensor order mismatch in " + path);
        }
        for (std::size_t r = 0; r < rank; ++r) {
            std::size_t dim;
            in >> dim;
            if (dim != tensors[i]->shape()[r]) {
                throw ParseError("load_checkpoint: tensor shape mismatch in " + path);
            }
        }
        for (std::size_t j = 0; j < tensors[i]->size(); ++j) (*tensors[i])[j] = read_double();
    }
    expect("end");
    return net;
}

} // namespace dml
