#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dml/datasets.hpp"
#include "dml/evaluation.hpp"
#include "dml/gradcheck.hpp"
#include "dml/losses.hpp"
#include "dml/sampling.hpp"
#include "dml/trainer.hpp"

namespace py = pybind11;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

dml::DenseArray to_dense(const Array& arr) {
    std::vector<std::size_t> shape(arr.ndim());
    for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[i] = static_cast<std::size_t>(arr.shape(i));
    std::vector<double> values(arr.data(), arr.data() + arr.size());
    return {std::move(shape), std::move(values)};
}

Array from_dense(const dml::DenseArray& arr) {
    std::vector<py::ssize_t> shape(arr.shape().begin(), arr.shape().end());
    Array out(shape);
    std::copy(arr.data(), arr.data() + arr.size(), out.mutable_data());
    return out;
}

dml::EmbeddingBatch to_batch(const Array& vectors, const std::vector<int>& labels) {
    dml::DenseArray dense = to_dense(vectors);
    if (dense.rank() != 2) throw dml::ShapeError("vectors must be a 2-d array");
    return {std::move(dense), labels};
}

std::vector<std::tuple<int, int, int>> to_tuples(const dml::TripletSet& ts) {
    std::vector<std::tuple<int, int, int>> out;
    for (const dml::Triplet& t : ts.triplets) out.emplace_back(t.anchor, t.positive, t.negative);
    return out;
}

dml::TripletSet from_tuples(const std::vector<std::tuple<int, int, int>>& triplets) {
    dml::TripletSet out;
    for (const auto& [a, p, n] : triplets) out.triplets.push_back({a, p, n});
    return out;
}

py::dict loss_to_dict(const dml::LossResult& res) {
    py::dict out;
    out["value"] = res.value;
    if (res.grad_embeddings) out["grad_embeddings"] = from_dense(*res.grad_embeddings);
    if (res.grad_logits) out["grad_logits"] = from_dense(*res.grad_logits);
    if (res.grad_centers) out["grad_centers"] = from_dense(*res.grad_centers);
    return out;
}

dml::ClassCenters make_centers(const Array& centers, double alpha) {
    dml::ClassCenters out(1, 1, alpha);
    out.centers = to_dense(centers);
    out.counts.assign(out.centers.rows(), 0);
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "two-head metric-learning toolkit: losses, miners, samplers and metrics";

    py::register_exception<dml::Error>(m, "DmlError");

    // geometry -----------------------------------------------------------
    m.def(
        "l2_normalize",
        [](const Array& vectors, double epsilon) {
            std::vector<int> labels(static_cast<std::size_t>(vectors.shape(0)), 0);
            dml::NormalizeResult res = dml::l2_normalize(to_batch(vectors, labels), epsilon);
            return py::make_tuple(from_dense(res.batch.vectors), res.collapse_count);
        },
        py::arg("vectors"), py::arg("epsilon") = 1e-12,
        "Row-normalize onto the unit sphere; returns (array, collapse_count).");

    m.def(
        "pairwise_sq_distances",
        [](const Array& vectors) {
            std::vector<int> labels(static_cast<std::size_t>(vectors.shape(0)), 0);
            return from_dense(dml::pairwise_sq_distances(to_batch(vectors, labels)).values);
        },
        py::arg("vectors"), "Squared Euclidean distance matrix.");

    // losses ---------------------------------------------------------------
    m.def(
        "softmax_ce",
        [](const Array& logits, const std::vector<int>& labels) {
            return loss_to_dict(dml::softmax_ce(to_dense(logits), labels));
        },
        py::arg("logits"), py::arg("labels"));

    m.def(
        "triplet_loss",
        [](const Array& vectors, const std::vector<int>& labels,
           const std::vector<std::tuple<int, int, int>>& triplets, py::object margin) {
            dml::MarginSpec spec = margin.is_none()
                                       ? dml::MarginSpec::soft()
                                       : dml::MarginSpec::hard(margin.cast<double>());
            dml::EmbeddingBatch batch = to_batch(vectors, labels);
            return loss_to_dict(dml::triplet_loss(batch, dml::pairwise_sq_distances(batch),
                                                  from_tuples(triplets), spec));
        },
        py::arg("vectors"), py::arg("labels"), py::arg("triplets"), py::arg("margin") = 0.2,
        "Triplet loss over explicit (a, p, n) index triples; margin=None selects softplus.");

    m.def(
        "center_loss",
        [](const Array& vectors, const std::vector<int>& labels, const Array& centers) {
            return loss_to_dict(dml::center_loss(to_batch(vectors, labels),
                                                 make_centers(centers, 0.5)));
        },
        py::arg("vectors"), py::arg("labels"), py::arg("centers"));

    m.def(
        "update_centers",
        [](const Array& centers, double alpha, const Array& vectors,
           const std::vector<int>& labels) {
            dml::ClassCenters next =
                dml::update_centers(make_centers(centers, alpha), to_batch(vectors, labels));
            return from_dense(next.centers);
        },
        py::arg("centers"), py::arg("alpha"), py::arg("vectors"), py::arg("labels"));

    m.def(
        "tcl_loss",
        [](const Array& vectors, const std::vector<int>& labels, const Array& centers,
           double margin) {
            return loss_to_dict(dml::tcl_loss(to_batch(vectors, labels),
                                              make_centers(centers, 0.5), margin));
        },
        py::arg("vectors"), py::arg("labels"), py::arg("centers"), py::arg("margin") = 0.2);

    m.def(
        "magnet_loss",
        [](const Array& vectors, const std::vector<int>& labels, int k_clusters,
           std::uint64_t seed) {
            dml::EmbeddingBatch batch = to_batch(vectors, labels);
            dml::SeededRng rng(seed);
            dml::MagnetConfig cfg = dml::assign_magnet_clusters(batch, k_clusters, rng);
            py::dict out = loss_to_dict(dml::magnet_loss(batch, cfg));
            out["cluster_assignments"] = cfg.cluster_assignments;
            return out;
        },
        py::arg("vectors"), py::arg("labels"), py::arg("k_clusters") = 1, py::arg("seed") = 0,
        "Per-class k-means assignment followed by the magnet objective.");

    m.def(
        "combined_loss",
        [](double softmax_value, double embedding_value, double lam) {
            dml::LossResult soft, embed;
            soft.value = softmax_value;
            embed.value = embedding_value;
            return dml::combined_loss(soft, embed, lam).value;
        },
        py::arg("softmax_value"), py::arg("embedding_value"), py::arg("lambda_"));

    // mining ---------------------------------------------------------------
    m.def(
        "classify_negative",
        [](double d_ap, double d_an, double m) {
            return std::string(dml::to_string(dml::classify_negative(d_ap, d_an, m)));
        },
        py::arg("d_ap"), py::arg("d_an"), py::arg("margin"));

    m.def(
        "mine_batch_hard",
        [](const Array& vectors, const std::vector<int>& labels) {
            dml::EmbeddingBatch batch = to_batch(vectors, labels);
            return to_tuples(dml::mine_batch_hard(dml::pairwise_sq_distances(batch), labels));
        },
        py::arg("vectors"), py::arg("labels"));

    m.def(
        "mine_semi_hard",
        [](const Array& vectors, const std::vector<int>& labels, double m) {
            dml::EmbeddingBatch batch = to_batch(vectors, labels);
            return to_tuples(dml::mine_semi_hard(dml::pairwise_sq_distances(batch), labels, m));
        },
        py::arg("vectors"), py::arg("labels"), py::arg("margin") = 0.2);

    m.def(
        "enumerate_all_triplets",
        [](const std::vector<int>& labels) { return to_tuples(dml::enumerate_all_triplets(labels)); },
        py::arg("labels"));

    // sampling ---------------------------------------------------------------
    m.def(
        "pk_sample",
        [](const std::vector<int>& labels, int b, int k, std::uint64_t seed) {
            dml::SeededRng rng(seed);
            dml::BatchPlan plan =
                dml::pk_sample(dml::DatasetIndex::from_labels(labels), b, k, rng);
            return py::make_tuple(plan.sample_ids, plan.labels);
        },
        py::arg("labels"), py::arg("b"), py::arg("k"), py::arg("seed") = 0,
        "Balanced b/k-classes-times-k batch plan; returns (sample_ids, slot_labels).");

    // evaluation ---------------------------------------------------------------
    m.def(
        "recall_at_k",
        [](const Array& vectors, const std::vector<int>& labels, const std::vector<int>& ks) {
            std::map<int, double> r = dml::recall_at_k(to_batch(vectors, labels), ks);
            py::dict out;
            for (const auto& [k, v] : r) out[py::int_(k)] = v;
            return out;
        },
        py::arg("vectors"), py::arg("labels"), py::arg("ks"));

    m.def(
        "kmeans",
        [](const Array& points, int k, std::uint64_t seed, int max_iters) {
            dml::SeededRng rng(seed);
            dml::KMeansResult res = dml::kmeans(to_dense(points), k, rng, max_iters);
            return py::make_tuple(res.clustering.assignments, from_dense(res.centers), res.sse);
        },
        py::arg("points"), py::arg("k"), py::arg("seed") = 0, py::arg("max_iters") = 100,
        "k-means++ / Lloyd; returns (assignments, centers, sse).");

    m.def(
        "nmi",
        [](const std::vector<int>& truth, const std::vector<int>& learned) {
            dml::Clustering a{truth, 0}, b{learned, 0};
            return dml::nmi(a, b);
        },
        py::arg("truth"), py::arg("learned"));

    m.def(
        "accuracy",
        [](const std::vector<int>& predictions, const std::vector<int>& labels) {
            dml::AccuracyReport rep = dml::accuracy(predictions, labels);
            py::dict per;
            for (const auto& [cls, v] : rep.per_class) per[py::int_(cls)] = v;
            py::dict out;
            out["micro"] = rep.micro;
            out["macro"] = rep.macro;
            out["per_class"] = per;
            return out;
        },
        py::arg("predictions"), py::arg("labels"));

    // datasets ---------------------------------------------------------------
    m.def(
        "gen_synthetic",
        [](int n_classes, int modes_per_class, int samples_per_class, int latent_dim, double sigma,
           std::uint64_t seed) {
            dml::SyntheticSpec spec;
            spec.n_classes = n_classes;
            spec.modes_per_class = modes_per_class;
            spec.samples_per_class = samples_per_class;
            spec.latent_dim = latent_dim;
            spec.sigma = sigma;
            dml::SeededRng rng(seed);
            dml::SyntheticDataset ds = dml::gen_synthetic(spec, rng);
            dml::DenseArray x({ds.data.size(), static_cast<std::size_t>(latent_dim)});
            for (std::size_t i = 0; i < ds.data.size(); ++i) {
                for (int j = 0; j < latent_dim; ++j) x.at(i, j) = ds.data.inputs[i][j];
            }
            return py::make_tuple(from_dense(x), ds.data.labels);
        },
        py::arg("n_classes") = 2, py::arg("modes_per_class") = 1, py::arg("samples_per_class") = 10,
        py::arg("latent_dim") = 2, py::arg("sigma") = 0.1, py::arg("seed") = 0,
        "Gaussian-mixture vectors; returns (points, labels).");

    m.def(
        "gen_long_tail",
        [](int n_classes, int head_count, double decay) {
            return dml::gen_long_tail(n_classes, head_count, decay);
        },
        py::arg("n_classes"), py::arg("head_count"), py::arg("decay"));

    m.def(
        "sod_encode",
        [](const Array& frames, std::uint64_t seed) {
            if (frames.ndim() != 4 || frames.shape(3) != 3) {
                throw dml::ShapeError("frames must have shape (n, h, w, 3)");
            }
            dml::VideoEvent event;
            std::size_t h = frames.shape(1), w = frames.shape(2);
            for (py::ssize_t f = 0; f < frames.shape(0); ++f) {
                dml::DenseArray frame({h, w, 3});
                std::copy(frames.data() + f * frame.size(),
                          frames.data() + (f + 1) * frame.size(), frame.data());
                event.frames.push_back(std::move(frame));
            }
            dml::SeededRng rng(seed);
            return from_dense(dml::sod_encode(event, rng));
        },
        py::arg("frames"), py::arg("seed") = 0,
        "Stack-of-difference motion encoding of a (n, h, w, 3) frame stack.");

    // trainer ---------------------------------------------------------------
    m.def("lr_schedule", &dml::lr_schedule, py::arg("t"), py::arg("total"), py::arg("base_lr"),
          py::arg("power") = 1.0);

    m.def(
        "train_two_head",
        [](const Array& inputs, const std::vector<int>& labels, int n_classes, int d_emb,
           int iterations, const std::string& objective, double lam, double margin,
           const std::string& margin_mode, int batch_size, int samples_per_class,
           std::uint64_t seed) {
            dml::LabeledDataset data;
            data.labels = labels;
            data.n_classes = n_classes;
            dml::NetConfig net_cfg;
            if (inputs.ndim() == 2) {
                net_cfg.input_h = 1;
                net_cfg.input_w = static_cast<int>(inputs.shape(1));
                net_cfg.input_c = 1;
                net_cfg.conv = {{8, 1, 1, 0}};
            } else if (inputs.ndim() == 4) {
                net_cfg.input_h = static_cast<int>(inputs.shape(1));
                net_cfg.input_w = static_cast<int>(inputs.shape(2));
                net_cfg.input_c = static_cast<int>(inputs.shape(3));
            } else {
                throw dml::ShapeError("inputs must be (n, d) or (n, h, w, c)");
            }
            std::size_t per = static_cast<std::size_t>(inputs.size()) / inputs.shape(0);
            for (py::ssize_t i = 0; i < inputs.shape(0); ++i) {
                std::vector<double> row(inputs.data() + i * per, inputs.data() + (i + 1) * per);
                data.inputs.push_back(dml::DenseArray::from_vector(std::move(row)));
            }
            net_cfg.n_classes = n_classes;
            net_cfg.d_emb = d_emb;

            dml::TrainConfig cfg;
            cfg.iterations = iterations;
            cfg.lambda = lam;
            cfg.margin = margin;
            cfg.margin_mode = margin_mode == "soft" ? dml::MarginSpec::Mode::soft
                                                    : dml::MarginSpec::Mode::hard;
            cfg.batch_size = batch_size;
            cfg.samples_per_class = samples_per_class;
            cfg.seed = seed;
            if (objective == "none") cfg.objective = dml::EmbedObjective::none;
            else if (objective == "triplet_hard") cfg.objective = dml::EmbedObjective::triplet_hard;
            else if (objective == "triplet_semi_hard")
                cfg.objective = dml::EmbedObjective::triplet_semi_hard;
            else if (objective == "center") cfg.objective = dml::EmbedObjective::center;
            else if (objective == "tcl") cfg.objective = dml::EmbedObjective::tcl;
            else if (objective == "magnet") cfg.objective = dml::EmbedObjective::magnet;
            else throw dml::InvalidConfig("unknown objective: " + objective);

            dml::SeededRng init_rng = dml::SeededRng(seed).fork(7);
            dml::TrainResult res = dml::train(dml::init_params(net_cfg, init_rng), data, cfg);

            dml::DenseArray emb({data.size(), static_cast<std::size_t>(d_emb)});
            std::vector<int> preds(data.size());
            for (std::size_t i = 0; i < data.size(); ++i) {
                dml::ForwardTrace t =
                    dml::forward(res.net, dml::reshape_to_input(data.inputs[i], net_cfg));
                for (int e = 0; e < d_emb; ++e) emb.at(i, e) = t.embedding[e];
                int best = 0;
                for (int j = 1; j < n_classes; ++j) {
                    if (t.logits[j] > t.logits[best]) best = j;
                }
                preds[i] = best;
            }
            py::dict out;
            out["final_loss"] = res.log.records.back().loss_total;
            out["log_csv"] = res.log.to_csv();
            out["embeddings"] = from_dense(emb);
            out["predictions"] = preds;
            out["collapsed"] = res.log.ever_collapsed();
            return out;
        },
        py::arg("inputs"), py::arg("labels"), py::arg("n_classes"), py::arg("d_emb") = 8,
        py::arg("iterations") = 200, py::arg("objective") = "triplet_semi_hard",
        py::arg("lambda_") = 1.0, py::arg("margin") = 0.2, py::arg("margin_mode") = "hard",
        py::arg("batch_size") = 16, py::arg("samples_per_class") = 4, py::arg("seed") = 0,
        "Train the two-head model on in-memory data; returns losses, embeddings, predictions.");

    m.def(
        "gradcheck",
        [](std::uint64_t seed, int points) {
            auto results = dml::run_gradchecks(seed, points);
            py::dict out;
            for (const auto& r : results) out[py::str(r.component)] = r.max_rel_err;
            return out;
        },
        py::arg("seed") = 0, py::arg("points") = 20,
        "Max relative error per component against the finite-difference oracle.");
}
