// SPDX-License-Identifier: Apache-2.0
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "langfield/error.hpp"
#include "langfield/eval.hpp"
#include "langfield/gradcheck.hpp"
#include "langfield/hungarian.hpp"
#include "langfield/raster.hpp"
#include "langfield/scene.hpp"
#include "langfield/service.hpp"
#include "langfield/toy.hpp"

namespace py = pybind11;
using namespace langfield;

namespace {

template <typename T>
py::array_t<T> to_numpy(const Image<T>& img, bool squeeze = false) {
  std::vector<py::ssize_t> shape{img.height, img.width};
  if (!squeeze || img.channels != 1) shape.push_back(img.channels);
  py::array_t<T> out(shape);
  std::memcpy(out.mutable_data(), img.data.data(), img.data.size() * sizeof(T));
  return out;
}

template <typename T>
Image<T> from_numpy(const py::array_t<T, py::array::c_style | py::array::forcecast>& a, const char* what) {
  if (a.ndim() != 2 && a.ndim() != 3) throw InvalidArgument(std::string(what) + ": expected an (H, W) or (H, W, C) array");
  const int channels = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  Image<T> img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), channels);
  std::memcpy(img.data.data(), a.data(), img.data.size() * sizeof(T));
  return img;
}

template <typename Real>
py::dict render_dict(const Scene& scene, const Camera& cam, const RenderOptions& opt) {
  RenderOutput<Real> r;
  {
    py::gil_scoped_release release;
    r = render<Real>(scene, cam, opt);
  }
  py::dict d;
  d["rgb"] = to_numpy(r.rgb);
  d["alpha"] = to_numpy(r.alpha, true);
  d["depth"] = to_numpy(r.depth, true);
  d["weight_maps"] = to_numpy(r.weight_maps);
  return d;
}

template <typename Real>
py::array_t<Real> assemble(const py::array_t<Real, py::array::c_style | py::array::forcecast>& w, const Scene& scene) {
  const auto maps = from_numpy<Real>(w, "assemble_features");
  return to_numpy(assemble_features(maps, scene.dictionary));
}

template <typename Real>
py::array_t<std::int32_t> segment(const py::array& features, const Scene& scene, const py::array& alpha, double floor) {
  const auto f = from_numpy<Real>(features, "open_vocab_segment");
  const auto a = from_numpy<Real>(alpha, "open_vocab_segment");
  return to_numpy(open_vocab_segment(f, scene.vocabulary, a, floor), true);
}

template <typename Real>
py::array_t<double> heatmap(const py::array& features, const std::vector<float>& term, const py::array& alpha,
                            double floor) {
  const auto f = from_numpy<Real>(features, "similarity_heatmap");
  const auto a = from_numpy<Real>(alpha, "similarity_heatmap");
  return to_numpy(similarity_heatmap(f, term, a, floor), true);
}

bool is_double(const py::array& a) { return a.dtype().is(py::dtype::of<double>()); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "langfield native module";

  // translators run newest first, so the base class goes in before its subclasses
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

  py::class_<Camera>(m, "Camera")
      .def_static("synthetic", &synthetic_camera, py::arg("width"), py::arg("height"), py::arg("azimuth") = 0.0,
                  py::arg("elevation") = 0.0, py::arg("distance") = 3.0)
      .def_static("from_json", [](const std::string& s) { return camera_from_json(s); })
      .def("to_json", &camera_to_json)
      .def_readwrite("fx", &Camera::fx)
      .def_readwrite("fy", &Camera::fy)
      .def_readwrite("cx", &Camera::cx)
      .def_readwrite("cy", &Camera::cy)
      .def_readwrite("width", &Camera::width)
      .def_readwrite("height", &Camera::height)
      .def_readwrite("near", &Camera::near)
      .def_readwrite("far", &Camera::far)
      .def_readwrite("world_to_camera", &Camera::world_to_camera)
      .def("__eq__", [](const Camera& a, const Camera& b) { return a == b; })
      .def("__repr__", [](const Camera& c) {
        return "<Camera " + std::to_string(c.width) + "x" + std::to_string(c.height) + ">";
      });

  py::class_<Scene>(m, "Scene")
      .def_static("synthetic", &make_synthetic_scene, py::arg("seed"), py::arg("n_primitives"), py::arg("k"),
                  py::arg("c"), py::arg("regions"))
      .def_static("load", [](const std::filesystem::path& p) { return load_scene(p); })
      .def("save", [](const Scene& s, const std::filesystem::path& p) { save_scene(s, p); })
      .def_property_readonly("k", [](const Scene& s) { return s.dictionary.k(); })
      .def_property_readonly("c", [](const Scene& s) { return s.dictionary.c(); })
      .def_property_readonly("n_primitives", [](const Scene& s) { return s.primitives.size(); })
      .def_property_readonly("terms", [](const Scene& s) { return s.vocabulary.terms(); })
      .def_property_readonly("atoms", [](const Scene& s) { return Eigen::MatrixXf(s.dictionary.atoms); })
      .def_property_readonly("weights",
                             [](const Scene& s) {
                               py::array_t<float> out({static_cast<py::ssize_t>(s.primitives.size()),
                                                       static_cast<py::ssize_t>(s.dictionary.k())});
                               auto v = out.mutable_unchecked<2>();
                               for (std::size_t i = 0; i < s.primitives.size(); ++i) {
                                 for (std::size_t a = 0; a < s.primitives[i].weights.size(); ++a) {
                                   v(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(a)) = s.primitives[i].weights[a];
                                 }
                               }
                               return out;
                             })
      .def("embedding",
           [](const Scene& s, const std::string& term) {
             const auto i = s.vocabulary.find(term);
             if (!i) throw InvalidArgument("unknown term '" + term + "'");
             return s.vocabulary.entries[*i].embedding;
           })
      .def("validate", [](const Scene& s) {
        std::vector<std::pair<std::int64_t, std::string>> out;
        for (const auto& issue : validate_scene(s)) out.emplace_back(issue.primitive, issue.invariant);
        return out;
      });

  m.def(
      "render",
      [](const Scene& scene, const Camera& cam, int threads, int tile_size, bool dbl) {
        const RenderOptions opt{tile_size, threads};
        return dbl ? render_dict<double>(scene, cam, opt) : render_dict<float>(scene, cam, opt);
      },
      py::arg("scene"), py::arg("camera"), py::arg("threads") = 0, py::arg("tile_size") = 16, py::arg("double") = false,
      "rgb (H, W, 3), alpha and depth (H, W), weight_maps (H, W, K)");

  m.def(
      "assemble_features",
      [](const py::array& w, const Scene& scene) -> py::array {
        if (is_double(w)) return assemble<double>(w, scene);
        return assemble<float>(w, scene);
      },
      py::arg("weight_maps"), py::arg("scene"), "Per-pixel features (H, W, C) from weight maps and the dictionary");

  m.def(
      "render_features_direct",
      [](const Scene& scene, const Camera& cam, int threads, bool dbl) -> py::array {
        const RenderOptions opt{16, threads};
        py::gil_scoped_release release;
        if (dbl) {
          auto f = render_features_direct<double>(scene, cam, opt);
          py::gil_scoped_acquire acquire;
          return to_numpy(f);
        }
        auto f = render_features_direct<float>(scene, cam, opt);
        py::gil_scoped_acquire acquire;
        return to_numpy(f);
      },
      py::arg("scene"), py::arg("camera"), py::arg("threads") = 0, py::arg("double") = false);

  m.def(
      "open_vocab_segment",
      [](const py::array& features, const Scene& scene, const py::array& alpha, double floor) {
        return is_double(features) ? segment<double>(features, scene, alpha, floor)
                                   : segment<float>(features, scene, alpha, floor);
      },
      py::arg("features"), py::arg("scene"), py::arg("alpha"), py::arg("alpha_floor") = kDefaultAlphaFloor);

  m.def(
      "similarity_heatmap",
      [](const py::array& features, const std::vector<float>& term, const py::array& alpha, double floor) {
        return is_double(features) ? heatmap<double>(features, term, alpha, floor)
                                   : heatmap<float>(features, term, alpha, floor);
      },
      py::arg("features"), py::arg("embedding"), py::arg("alpha"), py::arg("alpha_floor") = kDefaultAlphaFloor);

  m.def(
      "miou_accuracy",
      [](const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& pred,
         const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& gt,
         const std::vector<std::string>& names) {
        const auto r = miou_accuracy(from_numpy<std::int32_t>(pred, "miou_accuracy"),
                                     from_numpy<std::int32_t>(gt, "miou_accuracy"), names);
        py::dict d;
        d["miou"] = r.miou;
        d["accuracy"] = r.accuracy;
        py::list per_class;
        for (const auto& c : r.per_class) per_class.append(py::make_tuple(c.label, c.name, c.iou));
        d["per_class"] = per_class;
        return d;
      },
      py::arg("pred"), py::arg("gt"), py::arg("names") = std::vector<std::string>{});

  m.def(
      "hungarian_match",
      [](const Eigen::MatrixXd& cost) {
        const auto a = hungarian_match(cost);
        return py::make_tuple(a.pairs, a.total_cost);
      },
      py::arg("cost"), "Minimum-cost assignment: ([(row, col), ...], total cost)");

  m.def(
      "gradcheck",
      [](int instances, std::uint64_t seed, double tolerance, bool sign_flip, std::vector<std::string> only) {
        GradcheckOptions opt;
        opt.instances = instances;
        opt.seed = seed;
        opt.tolerance = tolerance;
        opt.perturb_sign_flip = sign_flip;
        GradcheckReport report;
        {
          py::gil_scoped_release release;
          report = run_gradcheck(opt, only);
        }
        py::list rows;
        for (const auto& r : report.rows) {
          py::dict d;
          d["name"] = r.name;
          d["instances"] = r.instances;
          d["max_relative_error"] = r.max_relative_error;
          d["pass"] = r.pass;
          rows.append(d);
        }
        return py::make_tuple(report.pass(), rows);
      },
      py::arg("instances") = 100, py::arg("seed") = 0, py::arg("tolerance") = kGradcheckTolerance,
      py::arg("sign_flip") = false, py::arg("suites") = std::vector<std::string>{});

  m.def(
      "run_toy",
      [](std::uint64_t seed, std::size_t primitives, int regions, int view, int steps, double noise) {
        ToyConfig cfg;
        cfg.seed = seed;
        cfg.primitives = primitives;
        cfg.regions = regions;
        cfg.view_size = view;
        cfg.noise = noise;
        if (steps > 0) cfg.train.steps = steps;
        ToyResult r;
        {
          py::gil_scoped_release release;
          r = run_toy_pipeline(cfg);
        }
        py::dict d;
        d["train_miou"] = r.train_miou;
        d["groups_kept"] = r.groups_kept;
        d["sample_agreement"] = r.sample_agreement;
        d["segment_accuracy"] = r.segment_accuracy;
        d["segment_miou"] = r.segment_miou;
        d["factorization_deviation"] = r.factorization_deviation;
        d["field"] = r.field;
        return d;
      },
      py::arg("seed") = 0, py::arg("primitives") = ToyConfig{}.primitives, py::arg("regions") = ToyConfig{}.regions,
      py::arg("view") = ToyConfig{}.view_size, py::arg("steps") = 0, py::arg("noise") = ToyConfig{}.noise);
}
