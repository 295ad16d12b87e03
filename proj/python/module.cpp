// Python bindings for the point-cloud attention network: geometry primitives,
// synthetic data generation, network inference, and the training loop.
// Points cross the boundary as sequences of (x, y, z); features as nested
// lists. Heavy lifting stays in the C++ core.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "clcsca/data.hpp"
#include "clcsca/geometry.hpp"
#include "clcsca/model.hpp"
#include "clcsca/rng.hpp"
#include "clcsca/train.hpp"

namespace py = pybind11;
using namespace clcsca;

namespace {

PointCloud cloud_from_points(const std::vector<std::array<double, 3>>& points) {
    PointCloud pc;
    pc.n = points.size();
    pc.coords.reserve(3 * points.size());
    for (const auto& p : points) {
        pc.coords.push_back(p[0]);
        pc.coords.push_back(p[1]);
        pc.coords.push_back(p[2]);
    }
    pc.validate();
    return pc;
}

std::vector<std::array<double, 3>> points_from_cloud(const PointCloud& pc) {
    std::vector<std::array<double, 3>> out(pc.n);
    for (std::size_t i = 0; i < pc.n; ++i) {
        out[i] = {pc.coords[3 * i], pc.coords[3 * i + 1], pc.coords[3 * i + 2]};
    }
    return out;
}

std::vector<double> flat_points(const std::vector<std::array<double, 3>>& points) {
    std::vector<double> out;
    out.reserve(3 * points.size());
    for (const auto& p : points) {
        out.push_back(p[0]);
        out.push_back(p[1]);
        out.push_back(p[2]);
    }
    return out;
}

Tensor matrix_to_tensor(const std::vector<std::vector<double>>& rows, const char* what) {
    if (rows.empty()) throw ContractError(std::string(what) + ": need at least one row");
    const std::size_t cols = rows.front().size();
    std::vector<double> flat;
    flat.reserve(rows.size() * cols);
    for (const auto& row : rows) {
        if (row.size() != cols) throw ContractError(std::string(what) + ": ragged rows");
        flat.insert(flat.end(), row.begin(), row.end());
    }
    return Tensor({rows.size(), cols}, std::move(flat));
}

std::vector<std::vector<double>> tensor_to_matrix(const Tensor& t) {
    const std::size_t rows = t.shape()[0], cols = t.shape()[1];
    std::vector<std::vector<double>> out(rows, std::vector<double>(cols));
    const std::vector<double>& v = t.values();
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) out[i][j] = v[i * cols + j];
    }
    return out;
}

// Inference-facing wrapper owning a config and its parameters.
struct Network {
    NetworkConfig cfg;
    ModelParams params;

    Network(const std::string& config_json, std::uint64_t seed) {
        cfg = network_config_from_json_text(config_json);
        cfg.validate();
        params = init_params(cfg, seed);
    }
    Network(NetworkConfig c, ModelParams p) : cfg(std::move(c)), params(std::move(p)) {}

    std::vector<double> classify(const std::vector<std::array<double, 3>>& points) const {
        const PointCloud pc = cloud_from_points(points);
        const Tensor logits = classify_forward(pc, cfg, params);
        return logits.values();
    }

    std::vector<std::vector<double>> segment(const std::vector<std::array<double, 3>>& points) const {
        const PointCloud pc = cloud_from_points(points);
        return tensor_to_matrix(segment_forward(pc, cfg, params));
    }

    void save(const std::string& path) const { save_params(path, params); }

    static Network load(const std::string& config_json, const std::string& path) {
        NetworkConfig cfg = network_config_from_json_text(config_json);
        cfg.validate();
        ModelParams params = load_params(path, cfg);
        return Network(std::move(cfg), std::move(params));
    }

    std::size_t num_parameters() const {
        std::size_t n = 0;
        for (const auto& [name, t] : params) n += t.values().size();
        return n;
    }

    std::string config_json() const { return to_json_text(cfg); }
};

struct TrainResult {
    std::size_t best_epoch = 0;
    double best_metric = 0.0;
    std::string metrics_csv_text;
    ModelParams best_params;
    ModelParams final_params;
};

TrainResult train_from_json(const std::string& run_config_json, const DatasetPair& data,
                            std::optional<std::uint64_t> seed) {
    RunConfig cfg = run_config_from_json_text(run_config_json);
    if (seed) cfg.train.seed = *seed;
    cfg.network.validate();
    cfg.train.validate();
    TrainOutcome out = run_training(cfg.network, cfg.train, data.train, data.test, nullptr);
    TrainResult r;
    r.best_epoch = out.best_epoch;
    r.best_metric = out.best_metric;
    r.metrics_csv_text = metrics_csv(out.history);
    r.best_params = std::move(out.best_params);
    r.final_params = std::move(out.final_params);
    return r;
}

Rng make_stream(std::uint64_t seed, const std::string& kind, const std::string& name) {
    return Rng::stream(seed, std::vector<std::string>{kind, name});
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Point-cloud attention network core bindings";
    m.attr("__version__") = "1.0.0";

    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);

    // ---- geometry ----
    m.def(
        "fps",
        [](const std::vector<std::array<double, 3>>& points, std::size_t m_out) {
            return farthest_point_sample(cloud_from_points(points), m_out);
        },
        py::arg("points"), py::arg("m"),
        "Farthest point sampling: m indices, seeded at the lexicographically smallest point.");

    m.def(
        "ball_query",
        [](const std::vector<std::array<double, 3>>& points,
           const std::vector<std::size_t>& centroids, double radius, std::size_t k) {
            const PointCloud pc = cloud_from_points(points);
            std::vector<std::vector<std::size_t>> out;
            for (const NeighborGroup& g : ball_query(pc, centroids, radius, k)) {
                out.push_back(g.member_indices);
            }
            return out;
        },
        py::arg("points"), py::arg("centroids"), py::arg("radius"), py::arg("k"),
        "Member indices (k per centroid, padded) of each centroid's radius neighborhood.");

    m.def(
        "knn",
        [](const std::vector<std::array<double, 3>>& query,
           const std::vector<std::array<double, 3>>& source, std::size_t k) {
            const KnnResult r = knn(flat_points(query), flat_points(source), k);
            std::vector<std::vector<std::size_t>> idx(query.size());
            std::vector<std::vector<double>> dist(query.size());
            for (std::size_t i = 0; i < query.size(); ++i) {
                idx[i].assign(r.indices.begin() + i * k, r.indices.begin() + (i + 1) * k);
                dist[i].assign(r.distances.begin() + i * k, r.distances.begin() + (i + 1) * k);
            }
            return py::make_tuple(idx, dist);
        },
        py::arg("query"), py::arg("source"), py::arg("k"),
        "k nearest source points per query: (indices, distances).");

    m.def(
        "interpolate",
        [](const std::vector<std::vector<double>>& source_feats,
           const std::vector<std::array<double, 3>>& source_pts,
           const std::vector<std::array<double, 3>>& query_pts, std::size_t k) {
            const Tensor feats = matrix_to_tensor(source_feats, "interpolate");
            return tensor_to_matrix(
                interpolate_knn(feats, flat_points(source_pts), flat_points(query_pts), k));
        },
        py::arg("source_feats"), py::arg("source_points"), py::arg("query_points"), py::arg("k"),
        "Inverse-distance kNN interpolation of source features onto query positions.");

    // ---- synthetic data ----
    m.def(
        "gen_shape",
        [](const std::string& kind, std::size_t n, double noise, std::uint64_t seed) {
            Rng rng = make_stream(seed, "shape", kind);
            return points_from_cloud(gen_shape(shape_kind_from_string(kind), n, noise, rng));
        },
        py::arg("kind"), py::arg("n"), py::arg("noise") = 0.0, py::arg("seed") = 0,
        "Unit-normalized surface sample of sphere | cube | cylinder | torus.");

    m.def(
        "gen_part_shape",
        [](const std::string& kind, std::size_t n, std::uint64_t seed) {
            Rng rng = make_stream(seed, "part-shape", kind);
            const PointCloud pc = gen_part_shape(part_shape_kind_from_string(kind), n, rng);
            return py::make_tuple(points_from_cloud(pc), pc.point_labels);
        },
        py::arg("kind"), py::arg("n"), py::arg("seed") = 0,
        "(points, part labels) for mug | lamp | table.");

    m.def("classification_class_names", [] { return classification_class_names(); });
    m.def("segmentation_category_names", [] { return segmentation_category_names(); });
    m.def("segmentation_part_sets", [] { return segmentation_part_sets(); });

    py::class_<Dataset>(m, "Dataset")
        .def_readonly("task", &Dataset::task)
        .def_readonly("split", &Dataset::split)
        .def_readonly("class_names", &Dataset::class_names)
        .def("__len__", [](const Dataset& d) { return d.samples.size(); })
        .def(
            "points",
            [](const Dataset& d, std::size_t i) {
                if (i >= d.samples.size()) throw py::index_error();
                return points_from_cloud(d.samples[i]);
            },
            py::arg("i"))
        .def(
            "label",
            [](const Dataset& d, std::size_t i) -> py::object {
                if (i >= d.samples.size()) throw py::index_error();
                const PointCloud& pc = d.samples[i];
                if (d.task == "segmentation") return py::cast(pc.point_labels);
                return py::cast(pc.cloud_label.value());
            },
            py::arg("i"), "Cloud label (classification) or per-point labels (segmentation).");

    py::class_<DatasetPair>(m, "DatasetPair")
        .def_readonly("train", &DatasetPair::train)
        .def_readonly("test", &DatasetPair::test);

    m.def("make_dataset", &make_dataset, py::arg("task"), py::arg("per_class_train"),
          py::arg("per_class_test"), py::arg("points"), py::arg("noise") = 0.0,
          py::arg("seed") = 0, py::arg("classes") = std::vector<std::string>{},
          "Class-balanced synthetic train/test pair.");

    m.def("save_dataset", &save_dataset, py::arg("dir"), py::arg("data"), py::arg("seed"),
          py::arg("noise"));
    m.def("load_dataset", &load_dataset, py::arg("dir"));

    // ---- network ----
    py::class_<Network>(m, "Network")
        .def(py::init<const std::string&, std::uint64_t>(), py::arg("config_json"),
             py::arg("seed") = 0)
        .def("classify", &Network::classify, py::arg("points"),
             "Class logits for one cloud (row vector).")
        .def("segment", &Network::segment, py::arg("points"),
             "Per-point part logits for one cloud.")
        .def("save", &Network::save, py::arg("path"))
        .def_static("load", &Network::load, py::arg("config_json"), py::arg("path"))
        .def_property_readonly("num_parameters", &Network::num_parameters)
        .def_property_readonly("config_json", &Network::config_json);

    // ---- training ----
    m.def(
        "lr_at_epoch",
        [](double initial_lr, double decay_factor, std::size_t decay_every, std::size_t epoch) {
            TrainConfig cfg;
            cfg.initial_lr = initial_lr;
            cfg.decay_factor = decay_factor;
            cfg.decay_every_epochs = decay_every;
            return lr_at_epoch(cfg, epoch);
        },
        py::arg("initial_lr"), py::arg("decay_factor"), py::arg("decay_every"), py::arg("epoch"),
        "Step-decay schedule: initial_lr * decay_factor^(epoch // decay_every).");

    py::class_<TrainResult>(m, "TrainResult")
        .def_readonly("best_epoch", &TrainResult::best_epoch)
        .def_readonly("best_metric", &TrainResult::best_metric)
        .def_readonly("metrics_csv", &TrainResult::metrics_csv_text)
        .def(
            "save_best",
            [](const TrainResult& r, const std::string& path) { save_params(path, r.best_params); },
            py::arg("path"))
        .def(
            "save_final",
            [](const TrainResult& r, const std::string& path) {
                save_params(path, r.final_params);
            },
            py::arg("path"));

    m.def("train", &train_from_json, py::arg("run_config_json"), py::arg("data"),
          py::arg("seed") = py::none(),
          "Run the full training loop; returns best-epoch bookkeeping and the metrics CSV.");
}
