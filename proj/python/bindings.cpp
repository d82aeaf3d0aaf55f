#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "dmc/baselines.hpp"
#include "dmc/components.hpp"
#include "dmc/counting.hpp"
#include "dmc/evaluation.hpp"
#include "dmc/gaussian.hpp"
#include "dmc/grid.hpp"
#include "dmc/localization.hpp"
#include "dmc/synthesis.hpp"

namespace py = pybind11;
using namespace dmc;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

DensityMap to_map(const FloatArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3)
    throw std::invalid_argument("density map array must be 2D or 3D");
  std::vector<std::size_t> dims(a.shape(), a.shape() + a.ndim());
  std::vector<float> values(a.data(), a.data() + a.size());
  return DensityMap(std::move(dims), std::move(values));
}

py::array_t<float> from_map(const DensityMap& m) {
  std::vector<py::ssize_t> shape(m.dims().begin(), m.dims().end());
  py::array_t<float> out(shape);
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

// Points are (n, ndim) arrays of (x, y[, z]).
PointSet to_points(const DoubleArray& a, int ndim_hint = 0) {
  PointSet p;
  if (a.ndim() == 1 && a.size() == 0) {
    p.ndim = ndim_hint == 0 ? 2 : ndim_hint;
    return p;
  }
  if (a.ndim() != 2 || (a.shape(1) != 2 && a.shape(1) != 3))
    throw std::invalid_argument("points must be an (n, 2) or (n, 3) array");
  p.ndim = static_cast<int>(a.shape(1));
  const auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < r.shape(0); ++i) {
    Point q{0.0, 0.0, 0.0};
    for (int j = 0; j < p.ndim; ++j) q[j] = r(i, j);
    p.points.push_back(q);
  }
  validate(p);
  return p;
}

py::array_t<double> from_points(const PointSet& p) {
  py::array_t<double> out({static_cast<py::ssize_t>(p.size()), static_cast<py::ssize_t>(p.ndim)});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < p.size(); ++i)
    for (int j = 0; j < p.ndim; ++j) w(static_cast<py::ssize_t>(i), j) = p.points[i][j];
  return out;
}

Connectivity to_connectivity(const std::string& s) {
  if (s == "full") return Connectivity::full;
  if (s == "face") return Connectivity::face;
  throw std::invalid_argument("connectivity must be \"full\" or \"face\"");
}

DmaOptions dma_options(std::size_t n_candidates, const std::string& connectivity, bool area_check,
                       std::size_t samples_per_object) {
  DmaOptions o;
  o.n_candidates = n_candidates;
  o.connectivity = to_connectivity(connectivity);
  o.area_check = area_check;
  o.samples_per_object = samples_per_object;
  return o;
}

py::dict count_dict(const CountResult& r) {
  py::dict d;
  d["total_count"] = r.total_count;
  d["threshold"] = r.selection.chosen_t;
  d["objective"] = r.selection.objective;
  py::list records;
  for (const auto& rec : r.records) {
    py::dict x;
    x["id"] = rec.id;
    x["raw_mass"] = rec.raw_mass;
    x["f_of_rt"] = rec.f_of_rt;
    x["normalized_count"] = rec.normalized_count;
    x["rounded_count"] = rec.rounded_count;
    records.append(x);
  }
  d["records"] = records;
  py::list cands;
  for (const auto& c : r.selection.candidates) {
    py::dict x;
    x["threshold"] = c.threshold;
    x["objective"] = c.objective;
    x["admissible"] = c.admissible;
    x["n_components"] = c.n_components;
    x["total_count"] = c.total_count;
    cands.append(x);
  }
  d["candidates"] = cands;
  d["warnings"] = r.warnings;
  return d;
}

KernelSpec kernel_from_cov(const DoubleArray& cov) {
  if (cov.ndim() != 2 || cov.shape(0) != cov.shape(1))
    throw std::invalid_argument("covariance must be a square matrix");
  return KernelSpec(static_cast<int>(cov.shape(0)),
                    std::span<const double>(cov.data(), static_cast<std::size_t>(cov.size())));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Density map counting and localization";

  // Translators run newest first, so the base class goes first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  py::class_<KernelSpec>(m, "Kernel")
      .def(py::init(&kernel_from_cov), py::arg("covariance"),
           "Gaussian kernel from a d x d covariance in (x, y[, z]) order.")
      .def_static("isotropic", &KernelSpec::isotropic, py::arg("ndim"), py::arg("sigma"))
      .def_static(
          "diagonal",
          [](const std::vector<double>& sd) { return KernelSpec::diagonal(sd); },
          py::arg("stddevs"))
      .def_property_readonly("ndim", &KernelSpec::ndim)
      .def_property_readonly("peak_density", &KernelSpec::peak_density)
      .def_property_readonly("covariance",
                             [](const KernelSpec& k) {
                               const int d = k.ndim();
                               py::array_t<double> out({d, d});
                               auto w = out.mutable_unchecked<2>();
                               for (int i = 0; i < d; ++i)
                                 for (int j = 0; j < d; ++j) w(i, j) = k.sigma(i, j);
                               return out;
                             })
      .def("__repr__", [](const KernelSpec& k) {
        std::ostringstream s;
        s << "Kernel(ndim=" << k.ndim() << ", peak_density=" << k.peak_density() << ")";
        return s.str();
      });

  m.def("mass_within_radius", &mass_within_radius, py::arg("r"), py::arg("ndim"));
  m.def("mahalanobis_radius_for_threshold", &mahalanobis_radius_for_threshold,
        py::arg("threshold"), py::arg("kernel"));

  m.def(
      "render",
      [](const DoubleArray& points, const KernelSpec& kernel, const std::vector<std::size_t>& dims,
         std::optional<std::vector<double>> weights) {
        const PointSet p = to_points(points, kernel.ndim());
        DensityMap map;
        {
          py::gil_scoped_release release;
          map = weights ? render_density_map(p, *weights, kernel, dims)
                        : render_density_map(p, kernel, dims);
        }
        return from_map(map);
      },
      py::arg("points"), py::arg("kernel"), py::arg("dims"), py::arg("weights") = py::none());

  m.def(
      "count_dma",
      [](const FloatArray& a, const KernelSpec& kernel, std::size_t n_candidates,
         const std::string& connectivity, bool area_check) {
        const DensityMap map = to_map(a);
        CountResult r;
        {
          py::gil_scoped_release release;
          r = count_dma(map, kernel, dma_options(n_candidates, connectivity, area_check, 2000));
        }
        return count_dict(r);
      },
      py::arg("density"), py::arg("kernel"), py::arg("n_candidates") = 48,
      py::arg("connectivity") = "full", py::arg("area_check") = true);

  m.def(
      "analyze_dma",
      [](const FloatArray& a, const KernelSpec& kernel, std::uint64_t seed,
         std::size_t samples_per_object, std::size_t n_candidates, const std::string& connectivity,
         bool area_check) {
        const DensityMap map = to_map(a);
        DmaAnalysis r;
        {
          py::gil_scoped_release release;
          r = analyze_dma(map, kernel, seed,
                          dma_options(n_candidates, connectivity, area_check, samples_per_object));
        }
        py::dict d = count_dict(r.count);
        d["centers"] = from_points(r.centers);
        return d;
      },
      py::arg("density"), py::arg("kernel"), py::arg("seed") = 0,
      py::arg("samples_per_object") = 2000, py::arg("n_candidates") = 48,
      py::arg("connectivity") = "full", py::arg("area_check") = true);

  m.def(
      "label_components",
      [](const FloatArray& a, double threshold, const std::string& connectivity) {
        const DensityMap map = to_map(a);
        const ComponentLabeling lab = label_components(map, threshold, to_connectivity(connectivity));
        std::vector<py::ssize_t> shape(map.dims().begin(), map.dims().end());
        py::array_t<std::uint32_t> labels(shape);
        std::copy(lab.labels.begin(), lab.labels.end(), labels.mutable_data());
        std::vector<double> masses;
        for (const auto& c : lab.components) masses.push_back(c.raw_mass);
        return py::make_tuple(labels, masses);
      },
      py::arg("density"), py::arg("threshold"), py::arg("connectivity") = "full",
      "Returns (labels, raw masses); label 0 is background.");

  m.def("count_iodm", [](const FloatArray& a) { return count_iodm(to_map(a)); }, py::arg("density"));

  m.def(
      "cca_t",
      [](const FloatArray& a, double threshold, const std::string& connectivity) {
        const CcatResult r = cca_t(to_map(a), threshold, to_connectivity(connectivity));
        return py::make_tuple(r.count, from_points(r.centers));
      },
      py::arg("density"), py::arg("threshold"), py::arg("connectivity") = "full",
      "Returns (count, centers).");

  m.def(
      "local_maxima",
      [](const FloatArray& a, double threshold, int min_distance) {
        return from_points(local_maxima(to_map(a), threshold, min_distance));
      },
      py::arg("density"), py::arg("threshold") = 0.0, py::arg("min_distance") = 1);

  m.def(
      "match_points",
      [](const DoubleArray& pred, const DoubleArray& gt, double radius) {
        const PointSet p = to_points(pred), g = to_points(gt);
        const Matching mt = match_points(p, g, radius);
        py::dict d;
        py::list pairs;
        for (const auto& pr : mt.pairs) pairs.append(py::make_tuple(pr.pred, pr.gt, pr.distance));
        d["pairs"] = pairs;
        d["unmatched_pred"] = mt.unmatched_pred;
        d["unmatched_gt"] = mt.unmatched_gt;
        d["tp"] = mt.tp();
        d["fp"] = mt.fp();
        d["fn"] = mt.fn();
        const double pr = precision(mt.tp(), mt.fp()), rc = recall(mt.tp(), mt.fn());
        d["precision"] = pr;
        d["recall"] = rc;
        d["f1"] = f_measure(pr, rc);
        return d;
      },
      py::arg("pred"), py::arg("gt"), py::arg("radius") = 5.0);

  m.def(
      "generate_scene",
      [](const KernelSpec& kernel, std::uint64_t seed, const std::vector<std::size_t>& dims,
         double count_mean, double count_stddev, std::pair<double, double> overlap,
         std::pair<double, double> pair_separation, double min_separation, double margin) {
        SceneConfig c;
        c.dims = dims;
        c.count_mean = count_mean;
        c.count_stddev = count_stddev;
        c.overlap_min = overlap.first;
        c.overlap_max = overlap.second;
        c.pair_separation_min = pair_separation.first;
        c.pair_separation_max = pair_separation.second;
        c.min_separation = min_separation;
        c.margin = margin;
        const Scene s = generate_scene(c, kernel, seed);
        return py::make_tuple(from_points(s.points), s.n_pairs);
      },
      py::arg("kernel"), py::arg("seed") = 0, py::arg("dims") = std::vector<std::size_t>{256, 256},
      py::arg("count_mean") = 100.0, py::arg("count_stddev") = 30.0,
      py::arg("overlap") = std::make_pair(0.0, 0.5),
      py::arg("pair_separation") = std::make_pair(1.5, 4.0), py::arg("min_separation") = 8.0,
      py::arg("margin") = 4.0,
      "Returns (points, n_pairs); pairs come first. Distances are in kernel sigma units.");

  m.def(
      "corrupt_density",
      [](const FloatArray& clean, const DoubleArray& points, const KernelSpec& kernel,
         std::uint64_t seed, double gain_stddev, double bump_rate,
         std::pair<double, double> bump_amplitude, double bump_width, double white_noise_stddev,
         double blur_stddev) {
        NoiseConfig n;
        n.gain_stddev = gain_stddev;
        n.bump_rate = bump_rate;
        n.bump_amplitude_min = bump_amplitude.first;
        n.bump_amplitude_max = bump_amplitude.second;
        n.bump_width = bump_width;
        n.white_noise_stddev = white_noise_stddev;
        n.blur_stddev = blur_stddev;
        const DensityMap map = to_map(clean);
        return from_map(corrupt_density(map, to_points(points, map.ndim()), kernel, n, seed));
      },
      py::arg("clean"), py::arg("points"), py::arg("kernel"), py::arg("seed") = 0,
      py::arg("gain_stddev") = 0.15, py::arg("bump_rate") = 0.05,
      py::arg("bump_amplitude") = std::make_pair(0.1, 0.4), py::arg("bump_width") = 0.7,
      py::arg("white_noise_stddev") = 1e-4, py::arg("blur_stddev") = 0.0);

  m.def("read_dmap", [](const std::filesystem::path& p) { return from_map(read_density_map(p)); },
        py::arg("path"));
  m.def(
      "write_dmap",
      [](const std::filesystem::path& p, const FloatArray& a) { write_density_map(to_map(a), p); },
      py::arg("path"), py::arg("density"));
  m.def("read_points", [](const std::filesystem::path& p) { return from_points(read_points(p)); },
        py::arg("path"));
  m.def(
      "write_points",
      [](const std::filesystem::path& p, const DoubleArray& a, int ndim) {
        write_points(to_points(a, ndim), p);
      },
      py::arg("path"), py::arg("points"), py::arg("ndim") = 2);

  m.def(
      "evaluate_manifest_json",
      [](const std::filesystem::path& manifest, const KernelSpec& kernel,
         const std::vector<std::string>& methods, std::optional<double> cca_threshold,
         double radius, std::uint64_t seed, unsigned threads) {
        const DatasetManifest man = read_manifest(manifest);
        std::vector<MethodSpec> specs;
        bool needs_sweep = false;
        for (const std::string& name : methods) {
          if (name == "dma") {
            specs.push_back({MethodKind::dma});
          } else if (name == "iodm") {
            specs.push_back({MethodKind::iodm});
          } else if (name == "cca-t") {
            specs.push_back({MethodKind::cca_t, cca_threshold.value_or(0.0)});
            needs_sweep = !cca_threshold.has_value();
          } else {
            throw std::invalid_argument("unknown method \"" + name + "\"");
          }
        }
        std::string json;
        {
          py::gil_scoped_release release;
          const auto images = load_images(man, threads);
          std::string note;
          if (needs_sweep) {
            const auto grid = default_threshold_grid(kernel);
            const SweepResult s =
                sweep_threshold(images, grid, radius, SweepObjective::f1, Connectivity::full, threads);
            for (auto& spec : specs)
              if (spec.kind == MethodKind::cca_t) spec.threshold = s.best_threshold;
          }
          EvalOptions opt;
          opt.threads = threads;
          MetricsReport r = evaluate_images(images, kernel, specs, radius, seed, opt);
          json = report_to_json(r).dump();
        }
        return json;
      },
      py::arg("manifest"), py::arg("kernel"), py::arg("methods"),
      py::arg("cca_threshold") = py::none(), py::arg("radius") = 5.0, py::arg("seed") = 0,
      py::arg("threads") = 1);
}
