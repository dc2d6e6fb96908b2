#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "dml/datasets.hpp"
#include "dml/evaluation.hpp"
#include "dml/gradcheck.hpp"
#include "dml/reference.hpp"
#include "dml/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// config parsing (strict: unknown keys are fatal, exit code 2)
// ---------------------------------------------------------------------------

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError(path + ": expected an object");
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key)) throw ConfigError("unknown key: " + path + "." + key);
    }
}

struct DataSection {
    std::string kind = "synthetic";  // synthetic | synthetic_video | csv
    int n_classes = 10;
    int modes_per_class = 1;
    int samples_per_class = 50;
    int test_samples_per_class = 50;
    bool long_tail = false;
    int head_count = 200;
    double decay = 0.55;
    std::string input = "image";  // vector | image
    int latent_dim = 4;
    double noise_sigma = 0.1;
    std::string csv_path;
    std::string test_csv_path;
    int events_per_class = 60;
    int test_events_per_class = 20;
    int frames_per_event = 8;
};

struct OutputSection {
    std::string dir = ".";
    std::string checkpoint = "model.ckpt";
    std::string log_csv = "train_log.csv";
    std::string summary = "summary.json";
    std::string log_jsonl;   // optional
    std::string train_csv;   // optional dataset dumps
    std::string test_csv;
};

struct RunConfig {
    std::uint64_t seed = 0;
    dml::NetConfig net;
    dml::TrainConfig train;
    DataSection data;
    OutputSection output;
};

dml::EmbedObjective parse_objective(const std::string& s) {
    if (s == "none") return dml::EmbedObjective::none;
    if (s == "triplet_hard") return dml::EmbedObjective::triplet_hard;
    if (s == "triplet_semi_hard") return dml::EmbedObjective::triplet_semi_hard;
    if (s == "center") return dml::EmbedObjective::center;
    if (s == "tcl") return dml::EmbedObjective::tcl;
    if (s == "magnet") return dml::EmbedObjective::magnet;
    throw ConfigError("train.objective: unknown value '" + s + "'");
}

RunConfig parse_config(const json& root) {
    RunConfig cfg;
    require_keys(root, "$", {"seed", "network", "train", "data", "output"});
    cfg.seed = root.value("seed", 0ULL);

    if (root.contains("network")) {
        const json& net = root["network"];
        require_keys(net, "network", {"input", "conv_channels", "n_classes", "d_emb"});
        if (net.contains("input")) {
            auto dims = net["input"].get<std::vector<int>>();
            if (dims.size() != 3) throw ConfigError("network.input: expected [h, w, c]");
            cfg.net.input_h = dims[0];
            cfg.net.input_w = dims[1];
            cfg.net.input_c = dims[2];
        }
        if (net.contains("conv_channels")) {
            cfg.net.conv.clear();
            for (int ch : net["conv_channels"].get<std::vector<int>>()) {
                cfg.net.conv.push_back({ch, 3, 2, 1});
            }
        }
        cfg.net.n_classes = net.value("n_classes", cfg.net.n_classes);
        cfg.net.d_emb = net.value("d_emb", cfg.net.d_emb);
    }

    if (root.contains("train")) {
        const json& tr = root["train"];
        require_keys(tr, "train",
                     {"iterations", "base_lr", "momentum", "lr_power", "lambda", "objective",
                      "margin_mode", "margin", "center_alpha", "magnet_clusters", "sampler",
                      "batch_size", "samples_per_class", "pool_batches", "collapse_threshold",
                      "distance_collapse_threshold", "detach_softmax"});
        cfg.train.iterations = tr.value("iterations", cfg.train.iterations);
        cfg.train.base_lr = tr.value("base_lr", cfg.train.base_lr);
        cfg.train.momentum = tr.value("momentum", cfg.train.momentum);
        cfg.train.lr_power = tr.value("lr_power", cfg.train.lr_power);
        cfg.train.lambda = tr.value("lambda", cfg.train.lambda);
        if (tr.contains("objective")) {
            cfg.train.objective = parse_objective(tr["objective"].get<std::string>());
        }
        if (tr.contains("margin_mode")) {
            std::string mode = tr["margin_mode"].get<std::string>();
            if (mode == "hard") cfg.train.margin_mode = dml::MarginSpec::Mode::hard;
            else if (mode == "soft") cfg.train.margin_mode = dml::MarginSpec::Mode::soft;
            else throw ConfigError("train.margin_mode: unknown value '" + mode + "'");
        }
        cfg.train.margin = tr.value("margin", cfg.train.margin);
        cfg.train.center_alpha = tr.value("center_alpha", cfg.train.center_alpha);
        cfg.train.magnet_clusters = tr.value("magnet_clusters", cfg.train.magnet_clusters);
        if (tr.contains("sampler")) {
            std::string s = tr["sampler"].get<std::string>();
            if (s == "pk") cfg.train.sampler = dml::SamplerKind::pk;
            else if (s == "uniform") cfg.train.sampler = dml::SamplerKind::uniform;
            else if (s == "imbalanced") cfg.train.sampler = dml::SamplerKind::imbalanced;
            else throw ConfigError("train.sampler: unknown value '" + s + "'");
        }
        cfg.train.batch_size = tr.value("batch_size", cfg.train.batch_size);
        cfg.train.samples_per_class = tr.value("samples_per_class", cfg.train.samples_per_class);
        cfg.train.pool_batches = tr.value("pool_batches", cfg.train.pool_batches);
        cfg.train.collapse_threshold = tr.value("collapse_threshold", cfg.train.collapse_threshold);
        cfg.train.distance_collapse_threshold =
            tr.value("distance_collapse_threshold", cfg.train.distance_collapse_threshold);
        cfg.train.detach_softmax = tr.value("detach_softmax", cfg.train.detach_softmax);
    }

    if (root.contains("data")) {
        const json& da = root["data"];
        require_keys(da, "data",
                     {"kind", "n_classes", "modes_per_class", "samples_per_class",
                      "test_samples_per_class", "long_tail", "input", "latent_dim", "noise_sigma",
                      "csv_path", "test_csv_path", "events_per_class", "test_events_per_class",
                      "frames_per_event"});
        cfg.data.kind = da.value("kind", cfg.data.kind);
        cfg.data.n_classes = da.value("n_classes", cfg.data.n_classes);
        cfg.data.modes_per_class = da.value("modes_per_class", cfg.data.modes_per_class);
        cfg.data.samples_per_class = da.value("samples_per_class", cfg.data.samples_per_class);
        cfg.data.test_samples_per_class =
            da.value("test_samples_per_class", cfg.data.test_samples_per_class);
        if (da.contains("long_tail") && !da["long_tail"].is_null()) {
            require_keys(da["long_tail"], "data.long_tail", {"head_count", "decay"});
            cfg.data.long_tail = true;
            cfg.data.head_count = da["long_tail"].value("head_count", cfg.data.head_count);
            cfg.data.decay = da["long_tail"].value("decay", cfg.data.decay);
        }
        cfg.data.input = da.value("input", cfg.data.input);
        cfg.data.latent_dim = da.value("latent_dim", cfg.data.latent_dim);
        cfg.data.noise_sigma = da.value("noise_sigma", cfg.data.noise_sigma);
        cfg.data.csv_path = da.value("csv_path", cfg.data.csv_path);
        cfg.data.test_csv_path = da.value("test_csv_path", cfg.data.test_csv_path);
        cfg.data.events_per_class = da.value("events_per_class", cfg.data.events_per_class);
        cfg.data.test_events_per_class =
            da.value("test_events_per_class", cfg.data.test_events_per_class);
        cfg.data.frames_per_event = da.value("frames_per_event", cfg.data.frames_per_event);
    }

    if (root.contains("output")) {
        const json& out = root["output"];
        require_keys(out, "output",
                     {"dir", "checkpoint", "log_csv", "summary", "log_jsonl", "train_csv",
                      "test_csv"});
        cfg.output.dir = out.value("dir", cfg.output.dir);
        cfg.output.checkpoint = out.value("checkpoint", cfg.output.checkpoint);
        cfg.output.log_csv = out.value("log_csv", cfg.output.log_csv);
        cfg.output.summary = out.value("summary", cfg.output.summary);
        cfg.output.log_jsonl = out.value("log_jsonl", cfg.output.log_jsonl);
        cfg.output.train_csv = out.value("train_csv", cfg.output.train_csv);
        cfg.output.test_csv = out.value("test_csv", cfg.output.test_csv);
    }
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    json root;
    try {
        in >> root;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(root);
}

// ---------------------------------------------------------------------------
// data assembly
// ---------------------------------------------------------------------------

struct Splits {
    dml::LabeledDataset train;
    dml::LabeledDataset test;
};

Splits build_data(const RunConfig& cfg) {
    Splits out;
    dml::SeededRng base(cfg.seed);
    if (cfg.data.kind == "csv") {
        if (cfg.data.csv_path.empty()) throw ConfigError("data.csv_path is required for kind=csv");
        out.train = dml::load_csv(cfg.data.csv_path);
        if (!cfg.data.test_csv_path.empty()) out.test = dml::load_csv(cfg.data.test_csv_path);
        return out;
    }
    if (cfg.data.kind == "synthetic") {
        dml::SyntheticSpec spec;
        spec.n_classes = cfg.data.n_classes;
        spec.modes_per_class = cfg.data.modes_per_class;
        spec.samples_per_class = cfg.data.samples_per_class;
        spec.input_mode = cfg.data.input == "vector" ? dml::InputMode::vector
                                                     : dml::InputMode::image;
        spec.latent_dim = cfg.data.latent_dim;
        spec.image_h = cfg.net.input_h;
        spec.image_w = cfg.net.input_w;
        spec.sigma = cfg.data.noise_sigma;

        dml::SeededRng plan_rng = base.fork(1);
        dml::SyntheticModel model = dml::plan_synthetic(spec, plan_rng);

        std::vector<int> train_counts, test_counts;
        if (cfg.data.long_tail) {
            train_counts = dml::gen_long_tail(spec.n_classes, cfg.data.head_count, cfg.data.decay);
            test_counts = train_counts;  // natural test distribution
        } else {
            train_counts.assign(spec.n_classes, cfg.data.samples_per_class);
            test_counts.assign(spec.n_classes, cfg.data.test_samples_per_class);
        }
        dml::SeededRng train_rng = base.fork(2);
        dml::SeededRng test_rng = base.fork(3);
        out.train = dml::sample_synthetic(model, train_counts, train_rng);
        out.test = dml::sample_synthetic(model, test_counts, test_rng);
        return out;
    }
    if (cfg.data.kind == "synthetic_video") {
        dml::SeededRng train_rng = base.fork(4);
        dml::SeededRng test_rng = base.fork(5);
        dml::SeededRng sod_rng = base.fork(6);
        auto encode = [&](const dml::VideoDataset& vids, dml::LabeledDataset& dst) {
            dst.n_classes = vids.n_classes;
            for (const dml::VideoEvent& e : vids.events) {
                dst.inputs.push_back(dml::scale_sod(dml::sod_encode(e, sod_rng)));
                dst.labels.push_back(e.label);
            }
        };
        encode(dml::gen_synthetic_video(cfg.data.n_classes, train_rng, cfg.data.events_per_class,
                                        cfg.data.frames_per_event, cfg.net.input_h,
                                        cfg.net.input_w),
               out.train);
        encode(dml::gen_synthetic_video(cfg.data.n_classes, test_rng,
                                        cfg.data.test_events_per_class, cfg.data.frames_per_event,
                                        cfg.net.input_h, cfg.net.input_w),
               out.test);
        return out;
    }
    throw ConfigError("data.kind: unknown value '" + cfg.data.kind + "'");
}

// ---------------------------------------------------------------------------
// shared evaluation path
// ---------------------------------------------------------------------------

struct EmbeddedSplit {
    dml::EmbeddingBatch embedding;    // normalized embedding head
    dml::EmbeddingBatch penultimate;  // pooled features x
    std::vector<int> predictions;
};

EmbeddedSplit embed_dataset(const dml::TwoHeadNet& net, const dml::LabeledDataset& data) {
    const std::size_t n = data.size();
    dml::DenseArray emb({n, static_cast<std::size_t>(net.config.d_emb)});
    dml::DenseArray pen({n, static_cast<std::size_t>(net.h_channels())});
    std::vector<int> preds(n);
    for (std::size_t i = 0; i < n; ++i) {
        dml::ForwardTrace t = dml::forward(net, dml::reshape_to_input(data.inputs[i], net.config));
        for (int e = 0; e < net.config.d_emb; ++e) emb.at(i, e) = t.embedding[e];
        for (int c = 0; c < net.h_channels(); ++c) pen.at(i, c) = t.x[c];
        int best = 0;
        for (int j = 1; j < net.config.n_classes; ++j) {
            if (t.logits[j] > t.logits[best]) best = j;
        }
        preds[i] = best;
    }
    EmbeddedSplit out;
    out.embedding = dml::EmbeddingBatch(std::move(emb), data.labels, true);
    out.penultimate = dml::EmbeddingBatch(std::move(pen), data.labels, false);
    out.predictions = std::move(preds);
    return out;
}

json eval_to_json(const dml::EvalReport& rep) {
    return json::parse(dml::eval_report_json(rep));
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed_override) {
    RunConfig cfg = load_config(config_path);
    if (seed_override) cfg.seed = *seed_override;
    cfg.train.seed = cfg.seed;

    auto t0 = std::chrono::steady_clock::now();
    Splits splits = build_data(cfg);
    if (cfg.net.n_classes != splits.train.n_classes && splits.train.n_classes > 0) {
        cfg.net.n_classes = splits.train.n_classes;
    }

    dml::SeededRng init_rng = dml::SeededRng(cfg.seed).fork(7);
    dml::TwoHeadNet net = dml::init_params(cfg.net, init_rng);
    dml::TrainResult result = dml::train(std::move(net), splits.train, cfg.train);
    auto t1 = std::chrono::steady_clock::now();

    fs::create_directories(cfg.output.dir);
    auto out_path = [&](const std::string& name) { return (fs::path(cfg.output.dir) / name).string(); };

    dml::save_checkpoint(result.net, out_path(cfg.output.checkpoint));
    {
        std::ofstream log(out_path(cfg.output.log_csv), std::ios::binary);
        log << result.log.to_csv();
    }
    if (!cfg.output.log_jsonl.empty()) {
        std::ofstream log(out_path(cfg.output.log_jsonl), std::ios::binary);
        log << result.log.to_jsonl();
    }
    if (!cfg.output.train_csv.empty()) dml::save_csv(splits.train, out_path(cfg.output.train_csv));
    if (!cfg.output.test_csv.empty() && splits.test.size() > 0) {
        dml::save_csv(splits.test, out_path(cfg.output.test_csv));
    }

    const dml::TrainRecord& last = result.log.records.back();
    json summary;
    summary["iterations"] = cfg.train.iterations;
    summary["final_loss_total"] = last.loss_total;
    summary["final_loss_soft"] = last.loss_soft;
    summary["final_loss_embed"] = last.loss_embed;
    summary["final_mean_norm"] = last.mean_norm;
    summary["collapse_raises"] = result.log.collapse_raises;
    summary["collapse_recoveries"] = result.log.collapse_recoveries;
    summary["empty_triplet_events"] = result.log.empty_triplet_events;
    summary["wall_time_sec"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count() / 1000.0;
    {
        std::ofstream out(out_path(cfg.output.summary));
        out << summary.dump(2) << '\n';
    }
    std::cout << "checkpoint: " << out_path(cfg.output.checkpoint) << '\n'
              << "log:        " << out_path(cfg.output.log_csv) << '\n'
              << summary.dump(2) << std::endl;
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             const std::string& ks_csv, const std::string& out_path, std::uint64_t seed) {
    dml::TwoHeadNet net = dml::load_checkpoint(ckpt_path);
    dml::LabeledDataset data = dml::load_csv(data_path);

    std::vector<int> ks;
    std::stringstream ss(ks_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) ks.push_back(std::stoi(tok));

    EmbeddedSplit split = embed_dataset(net, data);
    dml::AccuracyReport acc = dml::accuracy(split.predictions, data.labels);
    dml::SeededRng rng_e = dml::SeededRng(seed).fork(10);
    dml::SeededRng rng_p = dml::SeededRng(seed).fork(11);
    dml::EvalReport emb_report = dml::evaluate_embeddings(split.embedding, ks, rng_e, &acc);
    dml::EvalReport pen_report = dml::evaluate_embeddings(split.penultimate, ks, rng_p, &acc);

    json out;
    out["embedding"] = eval_to_json(emb_report);
    out["penultimate"] = eval_to_json(pen_report);
    std::string dumped = out.dump(2);
    if (!out_path.empty()) {
        std::ofstream f(out_path);
        f << dumped << '\n';
    }
    std::cout << dumped << std::endl;
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, int points, double perturb) {
    auto results = dml::run_gradchecks(seed, points, perturb);
    std::printf("%-18s %-12s %s\n", "component", "max_rel_err", "status");
    for (const auto& r : results) {
        std::printf("%-18s %-12.3e %s\n", r.component.c_str(), r.max_rel_err,
                    r.max_rel_err < 1e-4 ? "ok" : "FAIL");
    }
    return dml::gradchecks_pass(results) ? 0 : 1;
}

int cmd_minebench(int batch, int trials, std::uint64_t seed, const std::string& out_path) {
    if (batch < 3) {
        std::cerr << "minebench: batch must be >= 3" << std::endl;
        return 2;
    }
    dml::SeededRng rng(seed);
    std::string csv = "trial,strategy,micros,n_triplets,oracle_ok\n";
    int failures = 0;
    for (int trial = 0; trial < trials; ++trial) {
        std::size_t b = static_cast<std::size_t>(batch);
        // keep n_classes < b so round-robin labels always yield a positive pair
        int max_classes = static_cast<int>(std::min<std::size_t>(6, b - 1));
        int n_classes = 2 + static_cast<int>(rng.below(max_classes - 1));
        dml::DenseArray vecs({b, 8});
        std::vector<int> labels(b);
        for (std::size_t i = 0; i < b; ++i) {
            labels[i] = static_cast<int>(i % n_classes);
            for (std::size_t j = 0; j < 8; ++j) vecs.at(i, j) = rng.uniform(-1.0, 1.0);
        }
        dml::EmbeddingBatch batch_data(std::move(vecs), std::move(labels));
        dml::DistanceMatrix dists = dml::pairwise_sq_distances(batch_data);
        double margin = 0.2;

        for (const char* strategy : {"hard", "semi_hard"}) {
            auto start = std::chrono::steady_clock::now();
            dml::TripletSet mined = strategy == std::string("hard")
                                        ? dml::mine_batch_hard(dists, batch_data.labels)
                                        : dml::mine_semi_hard(dists, batch_data.labels, margin);
            auto stop = std::chrono::steady_clock::now();
            long micros =
                std::chrono::duration_cast<std::chrono::microseconds>(stop - start).count();

            dml::TripletSet oracle = strategy == std::string("hard")
                                         ? dml::reference::mine_batch_hard(dists, batch_data.labels)
                                         : dml::reference::mine_semi_hard(dists, batch_data.labels,
                                                                          margin);
            bool ok = dml::reference::same_triplets(mined, oracle);
            failures += !ok;
            csv += std::to_string(trial) + "," + strategy + "," + std::to_string(micros) + "," +
                   std::to_string(mined.size()) + "," + (ok ? "1" : "0") + "\n";
        }
    }
    if (!out_path.empty()) {
        std::ofstream f(out_path, std::ios::binary);
        f << csv;
    } else {
        std::cout << csv;
    }
    std::cerr << (failures == 0 ? "all trials matched the brute-force oracle"
                                : "ORACLE MISMATCHES: " + std::to_string(failures))
              << std::endl;
    return failures == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-head metric-learning toolkit"};
    app.require_subcommand(1);

    // train
    std::string train_config;
    std::optional<std::uint64_t> train_seed;
    auto* train_cmd = app.add_subcommand("train", "train a model from a JSON config");
    train_cmd->add_option("--config", train_config, "config file path")->required();
    std::uint64_t seed_holder = 0;
    auto* seed_opt = train_cmd->add_option("--seed", seed_holder, "override the config seed");

    // eval
    std::string eval_ckpt, eval_data, eval_ks = "1,4,8,16", eval_out;
    std::uint64_t eval_seed = 0;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a CSV dataset");
    eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
    eval_cmd->add_option("--data", eval_data, "dataset CSV path")->required();
    eval_cmd->add_option("--ks", eval_ks, "comma-separated recall cutoffs");
    eval_cmd->add_option("--out", eval_out, "write the report JSON here");
    eval_cmd->add_option("--seed", eval_seed, "clustering seed");

    // gradcheck
    std::uint64_t gc_seed = 0;
    int gc_points = 100;
    double gc_perturb = 0.0;
    auto* gc_cmd = app.add_subcommand("gradcheck", "check analytic gradients against finite differences");
    gc_cmd->add_option("--seed", gc_seed, "rng seed");
    gc_cmd->add_option("--points", gc_points, "kink-free points per component");
    gc_cmd->add_option("--perturb", gc_perturb, "bias injected into analytic gradients (self-test)");

    // minebench
    int mb_batch = 32, mb_trials = 100;
    std::uint64_t mb_seed = 0;
    std::string mb_out;
    auto* mb_cmd = app.add_subcommand("minebench", "time the miners and verify oracle equivalence");
    mb_cmd->add_option("--batch", mb_batch, "batch size");
    mb_cmd->add_option("--trials", mb_trials, "number of random batches");
    mb_cmd->add_option("--seed", mb_seed, "rng seed");
    mb_cmd->add_option("--out", mb_out, "write the timing CSV here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) {
            if (*seed_opt) train_seed = seed_holder;
            return cmd_train(train_config, train_seed);
        }
        if (*eval_cmd) return cmd_eval(eval_ckpt, eval_data, eval_ks, eval_out, eval_seed);
        if (*gc_cmd) return cmd_gradcheck(gc_seed, gc_points, gc_perturb);
        if (*mb_cmd) return cmd_minebench(mb_batch, mb_trials, mb_seed, mb_out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << std::endl;
        return 2;
    } catch (const dml::Error& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}
