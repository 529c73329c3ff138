#include "xmhash/pipeline.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace xmh;

namespace {

py::dict result_dict(const RetrievalResult& r) {
  py::dict d;
  d["task"] = r.task;
  d["query_modality"] = r.query_modality;
  d["database_modality"] = r.database_modality;
  d["map"] = r.map;
  d["prec_at_r2"] = r.prec_at_r2;
  d["baseline_map"] = r.baseline_map;
  d["num_queries"] = r.num_queries;
  d["skipped_queries"] = r.skipped_queries;
  d["per_query_ap"] = r.per_query_ap;
  return d;
}

py::list results_list(const std::vector<RetrievalResult>& rs) {
  py::list out;
  for (const auto& r : rs) out.append(result_dict(r));
  return out;
}

RelevanceMatrix to_relevance(const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& m) { return m; }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Unsupervised cross-modal hashing core";
  m.attr("__version__") = kVersion;

  // later registrations are tried first, so the base class goes first
  auto base = py::register_exception<Error>(m, "XmhashError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<StageError>(m, "StageError", base.ptr());

  m.def(
      "synthesize",
      [](int n_clusters, int per_cluster, std::vector<int> dims, double spread, std::uint64_t seed,
         double elongation) {
        SynthesisSpec spec{n_clusters, per_cluster, std::move(dims), spread, elongation, seed};
        const auto d = synthesize_clustered(spec);
        std::vector<int> labels;
        for (const auto& set : d.labels()) labels.push_back(set.front());
        return py::make_tuple(d.modalities(), labels);
      },
      py::arg("n_clusters") = 3, py::arg("per_cluster") = 10, py::arg("dims") = std::vector<int>{5, 7},
      py::arg("spread") = 0.1, py::arg("seed") = 0, py::arg("elongation") = 1.0,
      "Paired Gaussian clusters. Returns (list of N x D arrays, labels).");

  m.def(
      "normalize", [](std::vector<Matrix> xs) { return unit_variance_normalize(MultiModalDataset(std::move(xs))).modalities(); },
      py::arg("modalities"), "Scale every modality to unit total variance.");

  m.def(
      "graph_laplacians",
      [](std::vector<Matrix> xs, Index anchors, Index k, Index k_a, std::uint64_t seed) {
        const MultiModalDataset d(std::move(xs));
        GraphParams p;
        p.k = k;
        p.k_a = k_a;
        std::vector<Matrix> out;
        for (const auto& lap : build_graph(d, learn_joint_anchors(d, anchors, seed), p).laplacians())
          out.push_back(lap.dense());
        return out;
      },
      py::arg("modalities"), py::arg("anchors"), py::arg("k") = 3, py::arg("k_a") = 2, py::arg("seed") = 0,
      "Anchor-graph Laplacian (N x N) of every modality.");

  m.def(
      "joint_codes",
      [](std::vector<Matrix> laplacians, Index code_length, double alpha, double lambda1, double lambda2,
         int outer_max_iters, std::uint64_t seed) {
        std::vector<Laplacian> laps(laplacians.begin(), laplacians.end());
        JointCodeConfig cfg;
        cfg.code_length = code_length;
        cfg.alpha = alpha;
        cfg.lambda1 = lambda1;
        cfg.lambda2 = lambda2;
        cfg.outer_max_iters = outer_max_iters;
        cfg.seed = seed;
        auto res = run_joint_codes(laps, cfg);
        std::vector<double> totals;
        for (const auto& row : res.codes.trace) totals.push_back(row.total);
        py::dict d;
        d["codes"] = res.codes.b;
        d["embeddings"] = res.embeddings;
        d["objective_trace"] = totals;
        d["warning"] = res.codes.warning;
        return d;
      },
      py::arg("laplacians"), py::arg("code_length") = 16, py::arg("alpha") = 1.0, py::arg("lambda1") = 1.0,
      py::arg("lambda2") = 1.0, py::arg("outer_max_iters") = 20, py::arg("seed") = 0,
      "Joint binary codes (+-1) from per-modality Laplacians.");

  py::class_<HashModel>(m, "HashModel")
      .def_property_readonly("input_dim", &HashModel::input_dim)
      .def_property_readonly("output_dim", &HashModel::output_dim)
      .def("forward", &HashModel::forward, py::arg("features"))
      .def("encode", [](const HashModel& self, const Matrix& x) { return encode(self, x); }, py::arg("features"))
      .def("save", &HashModel::save, py::arg("path"))
      .def_static("load", &HashModel::load, py::arg("path"));

  m.def(
      "train_hash_models",
      [](std::vector<Matrix> xs, const Matrix& codes, const std::string& architecture, std::vector<Index> hidden,
         double gamma1, double gamma2, int epochs, Index batch_size, std::uint64_t seed) {
        Stage2Config cfg;
        cfg.gamma1 = gamma1;
        cfg.gamma2 = gamma2;
        cfg.epochs = epochs;
        cfg.batch_size = batch_size;
        cfg.seed = seed;
        auto res = train_hash_models(MultiModalDataset(std::move(xs)), codes,
                                     parse_architecture(architecture, hidden), cfg);
        return py::make_tuple(res.models, res.loss_curve);
      },
      py::arg("modalities"), py::arg("codes"), py::arg("architecture") = "linear",
      py::arg("hidden") = std::vector<Index>{128, 64}, py::arg("gamma1") = 100.0, py::arg("gamma2") = 100.0,
      py::arg("epochs") = 60, py::arg("batch_size") = 64, py::arg("seed") = 0,
      "Per-modality hash functions. Returns (models, loss curve).");

  m.def(
      "hamming_distances", [](const Matrix& q, const Matrix& db) { return hamming_distances(q, db); },
      py::arg("queries"), py::arg("database"));
  m.def(
      "mean_average_precision",
      [](const DistanceMatrix& d, const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& rel, Index top_k) {
        return mean_average_precision(d, to_relevance(rel), top_k).map;
      },
      py::arg("distances"), py::arg("relevance"), py::arg("top_k") = 0);
  m.def(
      "precision_at_radius",
      [](const DistanceMatrix& d, const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& rel, int radius) {
        return precision_at_radius(d, to_relevance(rel), radius);
      },
      py::arg("distances"), py::arg("relevance"), py::arg("radius") = 2);
  m.def(
      "evaluate_codes",
      [](const std::vector<Matrix>& query_codes, const std::vector<Matrix>& db_codes,
         const std::vector<int>& query_labels, const std::vector<int>& db_labels) {
        io::LabelSets ql, dl;
        for (int v : query_labels) ql.push_back({v});
        for (int v : db_labels) dl.push_back({v});
        return results_list(evaluate_codes(query_codes, db_codes, ql, dl));
      },
      py::arg("query_codes"), py::arg("database_codes"), py::arg("query_labels"), py::arg("database_labels"),
      "Metrics for every ordered modality pair.");

  m.def(
      "run_pipeline",
      [](const std::string& config_json, bool force) {
        Json c = default_config();
        merge_config(c, Json::parse(config_json));
        const auto cfg = parse_config(c);
        std::vector<RetrievalResult> results;
        {
          py::gil_scoped_release release;
          results = run_pipeline(cfg, force);
        }
        return results_list(results);
      },
      py::arg("config_json"), py::arg("force") = false,
      "Runs graph, codes, train and eval for a JSON configuration overlaying the defaults.");
  m.def("default_config", []() { return default_config().dump(); }, "Default configuration as JSON text.");
}
