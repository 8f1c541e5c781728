#include "ims/cnn.hpp"
#include "ims/gbm.hpp"
#include "ims/pipeline.hpp"
#include "ims/projection.hpp"
#include "ims/synth.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace ims;
using nlohmann::json;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_array(const std::vector<double>& v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::span<const double> as_span(const DoubleArray& a) {
  if (a.ndim() != 1) throw std::invalid_argument("expected a 1-d array");
  return {a.data(), static_cast<std::size_t>(a.shape(0))};
}

Mesh mesh_from_arrays(const DoubleArray& vertices,
                      const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& faces) {
  if (vertices.ndim() != 2 || vertices.shape(1) != 3) throw std::invalid_argument("vertices must be (n, 3)");
  if (faces.ndim() != 2 || faces.shape(1) != 3) throw std::invalid_argument("faces must be (m, 3)");
  std::vector<Point3> v;
  auto vv = vertices.unchecked<2>();
  for (py::ssize_t i = 0; i < vv.shape(0); ++i) v.emplace_back(vv(i, 0), vv(i, 1), vv(i, 2));
  std::vector<Triangle> f;
  auto ff = faces.unchecked<2>();
  for (py::ssize_t i = 0; i < ff.shape(0); ++i) {
    Triangle t;
    for (int k = 0; k < 3; ++k) {
      if (ff(i, k) < 0) throw std::invalid_argument("negative vertex index");
      t[k] = static_cast<VertexId>(ff(i, k));
    }
    f.push_back(t);
  }
  return Mesh(std::move(v), std::move(f));
}

py::array_t<double> vertex_array(const Mesh& m) {
  py::array_t<double> out({static_cast<py::ssize_t>(m.vertex_count()), py::ssize_t(3)});
  auto o = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < m.vertex_count(); ++i) {
    for (int k = 0; k < 3; ++k) o(i, k) = m.vertex(static_cast<VertexId>(i))[k];
  }
  return out;
}

py::array_t<std::int64_t> face_array(const Mesh& m) {
  py::array_t<std::int64_t> out({static_cast<py::ssize_t>(m.face_count()), py::ssize_t(3)});
  auto o = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < m.face_count(); ++i) {
    for (int k = 0; k < 3; ++k) o(i, k) = m.faces()[i][k];
  }
  return out;
}

py::array_t<double> grid_array(const Grid2D& g) {
  py::array_t<double> out({g.height, g.width});
  std::copy(g.values.begin(), g.values.end(), out.mutable_data());
  return out;
}

FeatureTable table_from_array(const DoubleArray& x) {
  if (x.ndim() != 2) throw std::invalid_argument("features must be 2-d");
  FeatureTable t;
  t.width = static_cast<std::size_t>(x.shape(1));
  t.values.assign(x.data(), x.data() + x.size());
  return t;
}

// A projection kept together with its vertex correspondence.
struct Projection {
  RasterMap raster;
  Correspondence corr;
};

py::dict timings_dict(const StageTimings& t) {
  py::dict d;
  d["preprocessing"] = t.preprocessing;
  d["fill_time"] = t.fill_time;
  d["deflection"] = t.deflection;
  d["total"] = t.total;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Injection moulding surrogate: fill time and deflection prediction";

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<MeshError>(m, "MeshError", PyExc_ValueError);
  py::register_exception<GateError>(m, "GateError", PyExc_ValueError);
  py::register_exception<GbmError>(m, "GbmError", PyExc_RuntimeError);

  py::class_<Mesh>(m, "Mesh")
      .def(py::init(&mesh_from_arrays), py::arg("vertices"), py::arg("faces"))
      .def_property_readonly("vertices", &vertex_array)
      .def_property_readonly("faces", &face_array)
      .def_property_readonly("vertex_count", &Mesh::vertex_count)
      .def_property_readonly("face_count", &Mesh::face_count)
      .def_property_readonly("source_ids", &Mesh::source_ids)
      .def("to_obj", [](const Mesh& self) {
        std::ostringstream out;
        write_obj(out, self);
        return out.str();
      });
  m.def("parse_mesh", [](std::string_view text) { return parse_mesh(text); }, py::arg("text"),
        "Parse OBJ or simplified .pat text (sniffed).");
  m.def("load_mesh", &load_mesh, py::arg("path"));

  m.def(
      "geodesic_distances",
      [](const Mesh& mesh, VertexId source) { return to_array(geodesic_distances(MeshGraph(mesh), source)); },
      py::arg("mesh"), py::arg("source"));

  m.def(
      "fit_plane",
      [](const DoubleArray& points) {
        if (points.ndim() != 2 || points.shape(1) != 3) throw std::invalid_argument("points must be (n, 3)");
        std::vector<Point3> p;
        auto a = points.unchecked<2>();
        for (py::ssize_t i = 0; i < a.shape(0); ++i) p.emplace_back(a(i, 0), a(i, 1), a(i, 2));
        const auto plane = fit_plane(p);
        py::dict d;
        auto vec = [](const Point3& v) { return std::vector<double>{v.x(), v.y(), v.z()}; };
        d["origin"] = vec(plane.origin);
        d["normal"] = vec(plane.normal);
        d["basis_u"] = vec(plane.basis_u);
        d["basis_v"] = vec(plane.basis_v);
        return d;
      },
      py::arg("points"));

  py::class_<Projection>(m, "Projection")
      .def_property_readonly("values", [](const Projection& p) { return grid_array(p.raster.values); })
      .def_property_readonly("mask",
                             [](const Projection& p) {
                               py::array_t<bool> out({p.raster.height(), p.raster.width()});
                               std::copy(p.raster.mask.begin(), p.raster.mask.end(), out.mutable_data());
                               return out;
                             })
      .def_property_readonly("scale", [](const Projection& p) { return p.raster.scale; })
      .def(
          "reproject",
          [](const Projection& p, const DoubleArray& image) {
            if (image.ndim() != 2) throw std::invalid_argument("image must be 2-d");
            Grid2D g;
            g.height = static_cast<int>(image.shape(0));
            g.width = static_cast<int>(image.shape(1));
            g.values.assign(image.data(), image.data() + image.size());
            return to_array(reproject(g, p.corr));
          },
          py::arg("image"));
  m.def(
      "project",
      [](const Mesh& mesh, const DoubleArray& field, int height, int width, int margin) {
        const auto plane = fit_plane(mesh.vertices());
        auto [raster, corr] = project(mesh, as_span(field), plane, RasterSize{height, width, margin});
        return Projection{std::move(raster), std::move(corr)};
      },
      py::arg("mesh"), py::arg("field"), py::arg("height") = kRasterHeight, py::arg("width") = kRasterWidth,
      py::arg("margin") = kRasterMargin);

  py::class_<GbmModel>(m, "GbmModel")
      .def_property_readonly("tree_count", [](const GbmModel& g) { return g.trees().size(); })
      .def_property_readonly("base_score", &GbmModel::base_score)
      .def("predict", [](const GbmModel& g, const DoubleArray& x) { return to_array(g.predict(table_from_array(x))); })
      .def("serialize", &GbmModel::serialize)
      .def_static("deserialize", [](std::string_view text) { return GbmModel::deserialize(text); });
  m.def(
      "fit_gbm",
      [](const DoubleArray& x, const DoubleArray& y, int n_estimators, int max_depth, double learning_rate,
         int min_samples_leaf) {
        GbmConfig cfg;
        cfg.n_estimators = n_estimators;
        cfg.max_depth = max_depth;
        cfg.learning_rate = learning_rate;
        cfg.min_samples_leaf = min_samples_leaf;
        std::vector<double> history;
        auto model = fit(table_from_array(x), as_span(y), cfg, &history);
        return py::make_tuple(std::move(model), to_array(history));
      },
      py::arg("x"), py::arg("y"), py::arg("n_estimators") = 200, py::arg("max_depth") = 8,
      py::arg("learning_rate") = 0.08, py::arg("min_samples_leaf") = 1,
      "Returns the model and the training MSE before and after every round.");

  py::class_<SimulationSample>(m, "Sample")
      .def_readonly("name", &SimulationSample::name)
      .def_readonly("mesh", &SimulationSample::mesh)
      .def_property_readonly("gates_json", [](const SimulationSample& s) { return gates_to_json(s.gates).dump(); })
      .def_property_readonly("fill_time",
                             [](const SimulationSample& s) -> py::object {
                               if (!s.fill_time) return py::none();
                               return to_array(*s.fill_time);
                             })
      .def_property_readonly("deflection", [](const SimulationSample& s) -> py::object {
        if (!s.deflection) return py::none();
        return to_array(*s.deflection);
      });
  m.def(
      "synth_generate",
      [](const std::string& config_json) {
        return synth_generate(synth_config_from_json(json::parse(config_json)));
      },
      py::arg("config_json") = "{}");
  m.def("load_dataset", &load_dataset, py::arg("path"));

  py::class_<FillTimeModel>(m, "FillTimeModel")
      .def_static("load", &FillTimeModel::load, py::arg("path"))
      .def("save", &FillTimeModel::save, py::arg("path"))
      .def("to_json", [](const FillTimeModel& f) { return f.to_json().dump(); });
  m.def(
      "train_fill_time",
      [](const std::vector<SimulationSample>& samples, const std::string& config_json, std::uint64_t seed) {
        std::vector<const SimulationSample*> ptrs;
        for (const auto& s : samples) ptrs.push_back(&s);
        py::gil_scoped_release release;
        return train_fill_time(ptrs, pipeline_config_from_json(json::parse(config_json)), seed);
      },
      py::arg("samples"), py::arg("config_json") = "{}", py::arg("seed") = 0);

  py::class_<cnn::DeflectionNet>(m, "DeflectionNet")
      .def_property_readonly("parameter_count", [](const cnn::DeflectionNet& n) { return n.parameters().size(); })
      .def("summary",
           [](const cnn::DeflectionNet& n) {
             py::list rows;
             for (const auto& r : n.architecture().summary()) {
               py::dict d;
               d["name"] = r.name;
               d["type"] = r.type;
               d["shape"] = py::make_tuple(r.height, r.width, r.channels);
               d["params"] = r.params;
               d["connected_to"] = r.connected_to;
               rows.append(d);
             }
             return rows;
           })
      .def("save", [](const cnn::DeflectionNet& n, const std::filesystem::path& blob,
                      const std::filesystem::path& manifest) { cnn::save_weights(n, blob, manifest); });
  m.def("build_network", [](std::uint64_t seed) { return cnn::build_network(seed); }, py::arg("seed") = 0);
  m.def("load_weights", py::overload_cast<const std::filesystem::path&, const std::filesystem::path&>(&cnn::load_weights),
        py::arg("blob"), py::arg("manifest"));
  m.def(
      "train_deflection",
      [](const std::vector<SimulationSample>& samples, const FillTimeModel& fill_model,
         const std::string& config_json, std::uint64_t seed) {
        std::vector<const SimulationSample*> ptrs;
        for (const auto& s : samples) ptrs.push_back(&s);
        cnn::TrainResult result;
        py::gil_scoped_release release;
        auto net = train_deflection(ptrs, fill_model, pipeline_config_from_json(json::parse(config_json)), seed,
                                    &result);
        return std::make_pair(std::move(net), result.loss_history);
      },
      py::arg("samples"), py::arg("fill_model"), py::arg("config_json") = "{}", py::arg("seed") = 0);

  m.def(
      "predict",
      [](const FillTimeModel& fill_model, const cnn::DeflectionNet* net, const Mesh& mesh,
         const std::string& gates_json, std::uint64_t seed, bool deflection) {
        const auto gates = gates_from_json(json::parse(gates_json), mesh);
        Prediction p;
        {
          py::gil_scoped_release release;
          p = predict(fill_model, net, mesh, gates, PredictOptions{true, deflection, seed});
        }
        py::dict d;
        d["fill_time"] = to_array(p.fill_time);
        d["deflection"] = p.deflection ? py::object(to_array(*p.deflection)) : py::none();
        d["timings"] = timings_dict(p.timings);
        return d;
      },
      py::arg("fill_model"), py::arg("net"), py::arg("mesh"), py::arg("gates_json"), py::arg("seed") = 0,
      py::arg("deflection") = true);

  m.def(
      "crossvalidate",
      [](const std::vector<SimulationSample>& samples, int folds, const std::string& config_json,
         std::uint64_t seed) {
        std::vector<PointRecord> points;
        CVReport report;
        {
          py::gil_scoped_release release;
          report = crossvalidate(samples, folds, pipeline_config_from_json(json::parse(config_json)), seed, &points);
        }
        py::array_t<double> table({static_cast<py::ssize_t>(points.size()), py::ssize_t(7)});
        auto t = table.mutable_unchecked<2>();
        for (std::size_t i = 0; i < points.size(); ++i) {
          const auto& p = points[i];
          const double row[7] = {double(p.fold), double(p.sample), double(p.vertex), p.true_fill,
                                 p.pred_fill, p.true_deflection, p.pred_deflection};
          for (int k = 0; k < 7; ++k) t(i, k) = row[k];
        }
        return py::make_tuple(report.to_json().dump(), table);
      },
      py::arg("samples"), py::arg("folds") = 5, py::arg("config_json") = "{}", py::arg("seed") = 0,
      "Returns the report as JSON text and a point table with columns fold, sample, vertex, "
      "true_fill, pred_fill, true_deflection, pred_deflection.");
}
