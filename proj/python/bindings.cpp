#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "dsibh/cli.hpp"
#include "dsibh/config.hpp"
#include "dsibh/dataio.hpp"
#include "dsibh/error.hpp"
#include "dsibh/hamming.hpp"
#include "dsibh/losses.hpp"
#include "dsibh/nets.hpp"
#include "dsibh/renyi.hpp"

namespace py = pybind11;
using namespace dsibh;
using numkit::Matrix;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const DoubleArray& a) {
  if (a.ndim() != 2) throw InvalidArgument("expected a 2-D array, got " + std::to_string(a.ndim()) + "-D");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return Matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

py::array_t<double> to_array(const Matrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

LabelMatrix to_labels(const ByteArray& a) {
  if (a.ndim() != 2) throw InvalidArgument("labels must be a 2-D array");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  std::vector<std::uint8_t> bits(a.data(), a.data() + r * c);
  for (auto& b : bits) b = b != 0;
  return LabelMatrix(r, c, std::move(bits));
}

py::array_t<std::uint8_t> labels_array(const LabelMatrix& y) {
  py::array_t<std::uint8_t> out({y.rows(), y.cols()});
  auto* p = out.mutable_data();
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) *p++ = y(i, j);
  return out;
}

py::tuple value_grad(const numkit::ValueGrad& vg) { return py::make_tuple(vg.value, to_array(vg.grad)); }

LabelMatrix optional_labels(const std::optional<ByteArray>& labels, std::size_t rows) {
  return labels ? to_labels(*labels) : LabelMatrix(rows, 0);
}

py::list hits_list(const hamming::RankedResult& r) {
  py::list out;
  for (const auto& h : r.hits) out.append(py::make_tuple(h.id, h.distance));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the dsibh package";

  py::register_exception<FormatError>(m, "FormatError", PyExc_OSError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<UndefinedMetric>(m, "UndefinedMetric", PyExc_ArithmeticError);
  py::register_exception<UnsupportedOrder>(m, "UnsupportedOrder", PyExc_ValueError);

  m.def("gram", [](const DoubleArray& p, double sigma) { return to_array(renyi::gram(to_matrix(p), sigma).entries); },
        py::arg("points"), py::arg("sigma"), "Unit-trace Gaussian Gram matrix of the rows of `points`.");
  m.def(
      "entropy",
      [](const DoubleArray& a, double alpha) {
        return renyi::entropy({to_matrix(a), 0.0}, renyi::AlphaOrder(alpha));
      },
      py::arg("gram"), py::arg("alpha") = 2.0);
  m.def(
      "joint_entropy",
      [](const DoubleArray& a, const DoubleArray& b, double alpha) {
        return renyi::joint_entropy({to_matrix(a), 0.0}, {to_matrix(b), 0.0}, renyi::AlphaOrder(alpha));
      },
      py::arg("a"), py::arg("b"), py::arg("alpha") = 2.0);
  m.def(
      "mutual_information",
      [](const DoubleArray& x, const DoubleArray& t, double sx, double st, double alpha) {
        return renyi::mutual_information(to_matrix(x), to_matrix(t), sx, st, renyi::AlphaOrder(alpha));
      },
      py::arg("x"), py::arg("t"), py::arg("sigma_x"), py::arg("sigma_t"), py::arg("alpha") = 2.0,
      "Unclamped matrix-based mutual information in bits.");
  m.def(
      "mi_gradient",
      [](const DoubleArray& x, const DoubleArray& t, double sx, double st) {
        return to_array(renyi::mi_gradient(to_matrix(x), to_matrix(t), sx, st));
      },
      py::arg("x"), py::arg("t"), py::arg("sigma_x"), py::arg("sigma_t"));
  m.def(
      "select_sigma", [](const DoubleArray& p) { return renyi::select_sigma(to_matrix(p)).sigma; }, py::arg("points"),
      "Median pairwise distance, floored at 1e-6.");
  m.def(
      "mi_median_bandwidth",
      [](const DoubleArray& x, const DoubleArray& t) {
        const auto r = renyi::mi_median_bandwidth(to_matrix(x), to_matrix(t));
        return py::make_tuple(r.value, to_array(r.grad), r.sigma_x, r.sigma_t);
      },
      py::arg("x"), py::arg("t"), "Returns (mi, grad_t, sigma_x, sigma_t).");

  m.def(
      "similarity_from_labels",
      [](const ByteArray& y) { return to_array(losses::similarity_from_labels(to_labels(y)).entries); },
      py::arg("labels"));
  m.def(
      "labnet_loss",
      [](const DoubleArray& out, const DoubleArray& codes, const DoubleArray& s, double eta) {
        return value_grad(losses::labnet_loss(to_matrix(out), to_matrix(codes), {to_matrix(s)}, eta));
      },
      py::arg("outputs"), py::arg("binary_codes"), py::arg("similarity"), py::arg("eta") = 1.0);
  m.def(
      "weighted_ce_loss",
      [](const DoubleArray& codes, const std::vector<std::size_t>& cls, const DoubleArray& class_codes) {
        const Matrix table_codes = to_matrix(class_codes);
        const losses::ClassCodeTable table{LabelMatrix(table_codes.rows(), 0), table_codes};
        return value_grad(losses::weighted_ce_loss(to_matrix(codes), cls, table));
      },
      py::arg("codes"), py::arg("class_index"), py::arg("class_codes"));
  m.def(
      "consistency_loss",
      [](const DoubleArray& a, const DoubleArray& b) {
        return value_grad(losses::consistency_loss(to_matrix(a), to_matrix(b)));
      },
      py::arg("codes_m"), py::arg("codes_y"));

  py::class_<nets::MlpParams>(m, "Mlp")
      .def(py::init([](std::size_t input_dim, std::vector<std::size_t> hidden, std::size_t bits, std::uint64_t seed,
                       double scale) { return nets::init({input_dim, std::move(hidden), bits, seed, scale}); }),
           py::arg("input_dim"), py::arg("hidden_dims") = std::vector<std::size_t>{256}, py::arg("code_bits") = 16,
           py::arg("seed") = 0, py::arg("init_scale") = 1.0)
      .def_property_readonly("input_dim", &nets::MlpParams::input_dim)
      .def_property_readonly("code_bits", &nets::MlpParams::code_bits)
      .def("forward", [](const nets::MlpParams& p, const DoubleArray& x) { return to_array(nets::forward(p, to_matrix(x))); })
      .def("codes", [](const nets::MlpParams& p, const DoubleArray& x) {
        return to_array(nets::sign(nets::forward(p, to_matrix(x))));
      })
      .def("save", [](const nets::MlpParams& p, const std::filesystem::path& path) { nets::save_model(p, path); })
      .def_static("load", [](const std::filesystem::path& path) { return nets::load_model(path); })
      .def("__eq__", [](const nets::MlpParams& a, const nets::MlpParams& b) { return a == b; });

  py::class_<hamming::PackedCodeDB>(m, "CodeDB")
      .def(py::init([](const DoubleArray& codes, std::optional<ByteArray> labels,
                       std::optional<std::vector<std::uint64_t>> ids) {
             const Matrix c = to_matrix(codes);
             return hamming::PackedCodeDB::from_codes(nets::sign(c), optional_labels(labels, c.rows()),
                                                      ids.value_or(std::vector<std::uint64_t>{}));
           }),
           py::arg("codes"), py::arg("labels") = py::none(), py::arg("ids") = py::none())
      .def_property_readonly("code_bits", &hamming::PackedCodeDB::code_bits)
      .def("__len__", &hamming::PackedCodeDB::size)
      .def_property_readonly("ids", [](const hamming::PackedCodeDB& db) {
        return std::vector<std::uint64_t>(db.ids().begin(), db.ids().end());
      })
      .def_property_readonly("labels", [](const hamming::PackedCodeDB& db) { return labels_array(db.labels()); })
      .def("codes",
           [](const hamming::PackedCodeDB& db) {
             Matrix out(db.size(), db.code_bits());
             for (std::size_t i = 0; i < db.size(); ++i) {
               const auto row = hamming::unpack_code(db.code(i), db.code_bits());
               std::copy(row.begin(), row.end(), out.row(i).begin());
             }
             return to_array(out);
           })
      .def("save", [](const hamming::PackedCodeDB& db, const std::filesystem::path& p) { hamming::save_db(db, p); })
      .def_static("load", [](const std::filesystem::path& p) { return hamming::load_db(p); })
      .def("__eq__", [](const hamming::PackedCodeDB& a, const hamming::PackedCodeDB& b) { return a == b; });

  m.def(
      "encode",
      [](const nets::MlpParams& p, const DoubleArray& x, std::optional<ByteArray> labels) {
        const Matrix features = to_matrix(x);
        return hamming::encode(p, features, optional_labels(labels, features.rows()));
      },
      py::arg("model"), py::arg("features"), py::arg("labels") = py::none());
  m.def(
      "hamming_distance",
      [](const DoubleArray& a, const DoubleArray& b) {
        const Matrix ma = to_matrix(a), mb = to_matrix(b);
        if (ma.rows() != 1 || mb.rows() != 1) throw InvalidArgument("hamming_distance expects two 1 x c code rows");
        return hamming::distance(hamming::pack_codes(nets::sign(ma)), hamming::pack_codes(nets::sign(mb)), ma.cols());
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "retrieve",
      [](const hamming::PackedCodeDB& queries, std::size_t qi, const hamming::PackedCodeDB& db,
         std::optional<std::size_t> k) {
        if (qi >= queries.size()) throw py::index_error("query index out of range");
        return hits_list(hamming::retrieve(queries.code(qi), db, k));
      },
      py::arg("queries"), py::arg("index"), py::arg("db"), py::arg("k") = py::none(),
      "Ranked (id, distance) pairs for one query.");
  m.def(
      "mean_average_precision",
      [](const hamming::PackedCodeDB& q, const hamming::PackedCodeDB& db, std::optional<std::size_t> radius,
         unsigned threads) {
        const auto r = hamming::mean_average_precision(q, db, radius, threads);
        py::dict d;
        d["map"] = r.map;
        d["evaluated"] = r.evaluated;
        d["skipped"] = r.skipped;
        return d;
      },
      py::arg("queries"), py::arg("db"), py::arg("radius") = py::none(), py::arg("threads") = 1);

  m.def(
      "generate_synthetic",
      [](std::size_t classes, std::size_t per_class, std::size_t d1, std::size_t d2, std::optional<std::size_t> label_dim,
         double noise, double multilabel_rate, std::uint64_t seed) {
        dataio::SynthSpec s{classes, per_class, d1, d2, label_dim.value_or(classes), noise, multilabel_rate, seed};
        const auto b = dataio::generate_synthetic(s);
        py::dict out;
        out["x1"] = to_array(b.x1);
        out["x2"] = to_array(b.x2);
        out["labels"] = labels_array(b.y);
        return out;
      },
      py::arg("classes") = 4, py::arg("per_class") = 250, py::arg("d1") = 32, py::arg("d2") = 32,
      py::arg("label_dim") = py::none(), py::arg("noise") = 0.1, py::arg("multilabel_rate") = 0.0,
      py::arg("seed") = 0);
  m.def(
      "split_tags",
      [](std::size_t n, std::size_t q, std::size_t t, std::uint64_t seed) {
        const auto tags = dataio::split_tags(n, q, t, seed);
        std::vector<std::string> out;
        out.reserve(tags.size());
        for (auto tag : tags)
          out.emplace_back(tag == dataio::SplitTag::query ? "query" : tag == dataio::SplitTag::train ? "train" : "retrieval");
        return out;
      },
      py::arg("n"), py::arg("query_count"), py::arg("train_count"), py::arg("seed") = 0);

  m.def(
      "train",
      [](const py::object& cfg, unsigned threads) {
        const std::string text =
            py::isinstance<py::str>(cfg) ? cfg.cast<std::string>() : py::module_::import("json").attr("dumps")(cfg).cast<std::string>();
        config::ExperimentConfig c = config::experiment_from_json(config::json::parse(text));
        std::ostringstream log;
        cli::TrainArtifacts art;
        {
          py::gil_scoped_release release;
          art = cli::cmd_train(c, threads, log);
        }
        return py::module_::import("json").attr("loads")(art.metrics_json.dump());
      },
      py::arg("config"), py::arg("threads") = 1,
      "Run the full training pipeline from a config dict or JSON string; returns the metrics.");
}
