#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "opvlm/eval.hpp"
#include "opvlm/hypgeom.hpp"
#include "opvlm/memory_bank.hpp"
#include "opvlm/trainer.hpp"
#include "opvlm/world_io.hpp"

namespace py = pybind11;
using namespace opvlm;

namespace {

using Rows = std::vector<std::vector<double>>;

Matrix to_matrix(const Rows& rows) {
    require(!rows.empty(), "feature map must have at least one row");
    Matrix m(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i].size() == m.cols, "feature map rows must have equal length");
        for (std::size_t j = 0; j < m.cols; ++j) m.at(i, j) = rows[i][j];
    }
    return m;
}

Rows from_matrix(const Matrix& m) {
    Rows rows(m.rows, std::vector<double>(m.cols));
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) rows[i][j] = m.at(i, j);
    return rows;
}

std::vector<Matrix> to_matrices(const std::vector<Rows>& maps) {
    std::vector<Matrix> out;
    out.reserve(maps.size());
    for (const Rows& r : maps) out.push_back(to_matrix(r));
    return out;
}

}  // namespace

PYBIND11_MODULE(_opvlm, m) {
    m.doc() = "online personalized vision-language concept engine";

    m.def(
        "poincare_distance",
        [](const Vec& u, const Vec& v, double c) {
            const Curvature curv(c);
            return poincare_distance(BallPoint{u, curv}, BallPoint{v, curv});
        },
        py::arg("u"), py::arg("v"), py::arg("c") = 1.0);
    m.def("euclidean_limit_distance", &euclidean_limit_distance, py::arg("u"), py::arg("v"));
    m.def(
        "exp_map_origin",
        [](const Vec& v, double c) { return exp_map_origin(v, Curvature(c)).coords; },
        py::arg("v"), py::arg("c") = 1.0);

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("d_feat", &ModelConfig::d_feat)
        .def_readwrite("d_model", &ModelConfig::d_model)
        .def_readwrite("d_ball", &ModelConfig::d_ball)
        .def_readwrite("k", &ModelConfig::k)
        .def_readwrite("hidden_mult", &ModelConfig::hidden_mult)
        .def_readwrite("curvature", &ModelConfig::curvature)
        .def_readwrite("margin", &ModelConfig::margin)
        .def_readwrite("lambda_", &ModelConfig::lambda)
        .def_readwrite("use_instance_norm", &ModelConfig::use_instance_norm)
        .def("default_tau", &ModelConfig::default_tau);

    py::class_<ModelParams>(m, "ModelParams")
        .def_readonly("config", &ModelParams::config)
        .def("param_count", [](const ModelParams& p) { return param_count(p); })
        .def("embedder_fingerprint",
             [](const ModelParams& p) { return embedder_fingerprint(p.embedder); });

    m.def("init_model", &init_model, py::arg("config"), py::arg("seed"));

    py::class_<ConceptEmbedding>(m, "ConceptEmbedding")
        .def_readonly("concept_id", &ConceptEmbedding::concept_id)
        .def_property_readonly("tokens", [](const ConceptEmbedding& z) {
            return from_matrix(z.tokens);
        });

    m.def(
        "embed_concept",
        [](const std::vector<Rows>& ref_maps, const ModelParams& p, const std::string& id) {
            return embed_concept(to_matrices(ref_maps), p.embedder, p.config, id);
        },
        py::arg("ref_maps"), py::arg("params"), py::arg("concept_id"));

    m.def(
        "identify",
        [](const Rows& query, const ConceptEmbedding& z, const ModelParams& p, double tau) {
            return identify(to_matrix(query), z, p.disc, p.config, tau);
        },
        py::arg("query"), py::arg("embedding"), py::arg("params"), py::arg("tau"));

    py::class_<ConceptBank>(m, "ConceptBank")
        .def(py::init<std::uint64_t>(), py::arg("model_fingerprint"))
        .def_property_readonly("fingerprint", &ConceptBank::fingerprint)
        .def("__len__", &ConceptBank::size)
        .def(
            "parse",
            [](ConceptBank& b, const std::string& id, const std::vector<Rows>& refs,
               const ModelParams& p, bool overwrite) {
                return b.parse(id, to_matrices(refs), p.embedder, p.config, overwrite);
            },
            py::arg("identifier"), py::arg("ref_maps"), py::arg("params"),
            py::arg("overwrite") = false, py::return_value_policy::copy)
        .def(
            "retrieve",
            [](const ConceptBank& b, const std::string& id) -> py::object {
                const ConceptEmbedding* z = b.retrieve(id);
                return z ? py::cast(*z) : py::none();
            },
            py::arg("identifier"))
        .def("remove", &ConceptBank::remove, py::arg("identifier"))
        .def("list", &ConceptBank::list)
        .def("save", &ConceptBank::save, py::arg("path"))
        .def_static("load",
                    py::overload_cast<const std::filesystem::path&>(&ConceptBank::load),
                    py::arg("path"));

    py::class_<SyntheticSpec>(m, "SyntheticSpec")
        .def(py::init<>())
        .def_readwrite("num_concepts", &SyntheticSpec::num_concepts)
        .def_readwrite("images_per_concept", &SyntheticSpec::images_per_concept)
        .def_readwrite("queries_per_concept", &SyntheticSpec::queries_per_concept)
        .def_readwrite("tokens", &SyntheticSpec::tokens)
        .def_readwrite("d_feat", &SyntheticSpec::d_feat)
        .def_readwrite("intra_noise", &SyntheticSpec::intra_noise)
        .def_readwrite("negative_fraction", &SyntheticSpec::negative_fraction)
        .def_readwrite("seed", &SyntheticSpec::seed);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("model", &TrainConfig::model)
        .def_readwrite("lr", &TrainConfig::lr)
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("seed", &TrainConfig::seed);

    m.def(
        "run_cached_benchmark",
        [](const TrainConfig& config, const SyntheticSpec& spec) {
            const EvalReport r = run_cached_benchmark(config, spec);
            py::dict d;
            d["protocol"] = r.protocol;
            d["accuracy"] = r.accuracy;
            d["tau"] = r.tau;
            d["seed"] = r.seed;
            d["config_hash"] = r.config_hash;
            d["n_queries"] = r.n_queries;
            return d;
        },
        py::arg("config"), py::arg("spec"));
}
