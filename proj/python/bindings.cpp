#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "sgsplat/fit.hpp"
#include "sgsplat/io.hpp"
#include "sgsplat/metrics.hpp"
#include "sgsplat/pipeline.hpp"
#include "sgsplat/scene_gen.hpp"
#include "sgsplat/sh.hpp"
#include "sgsplat/splat.hpp"

namespace py = pybind11;
using namespace sgsplat;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using LabelArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

GridSpec make_spec(int nx, int ny, int nz, double resolution,
                   const std::array<double, 3>& origin) {
  GridSpec spec;
  spec.nx = nx;
  spec.ny = ny;
  spec.nz = nz;
  spec.resolution = resolution;
  spec.origin = Eigen::Vector3d(origin[0], origin[1], origin[2]);
  spec.validate();
  return spec;
}

// (nx, ny, nz) C-order arrays match the grid's x-major, z-fastest layout.
LabelGrid labels_from(const LabelArray& arr, double resolution,
                      const std::array<double, 3>& origin) {
  if (arr.ndim() != 3) throw InvalidInput("labels must be a 3D array");
  const GridSpec spec =
      make_spec(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)),
                static_cast<int>(arr.shape(2)), resolution, origin);
  LabelGrid grid = LabelGrid::zeros(spec, 1);
  std::memcpy(grid.values.data(), arr.data(), grid.values.size());
  return grid;
}

py::array labels_to(const LabelGrid& grid) {
  py::array_t<std::uint8_t> arr(
      {grid.spec.nx, grid.spec.ny, grid.spec.nz});
  std::memcpy(arr.mutable_data(), grid.values.data(), grid.values.size());
  return arr;
}

FeatureVolume volume_from(const DoubleArray& arr, double resolution,
                          const std::array<double, 3>& origin) {
  if (arr.ndim() != 4) throw InvalidInput("volume must be a 4D array");
  const GridSpec spec =
      make_spec(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)),
                static_cast<int>(arr.shape(2)), resolution, origin);
  FeatureVolume vol =
      FeatureVolume::zeros(spec, static_cast<int>(arr.shape(3)));
  std::memcpy(vol.values.data(), arr.data(),
              vol.values.size() * sizeof(double));
  return vol;
}

py::array volume_to(const FeatureVolume& vol) {
  py::array_t<double> arr(
      {vol.spec.nx, vol.spec.ny, vol.spec.nz, vol.channels});
  std::memcpy(arr.mutable_data(), vol.values.data(),
              vol.values.size() * sizeof(double));
  return arr;
}

std::vector<SemanticGaussian> gaussians_from(const DoubleArray& means,
                                             const DoubleArray& scales,
                                             const DoubleArray& rotations,
                                             const DoubleArray& opacities,
                                             const DoubleArray& semantics) {
  if (means.ndim() != 2 || means.shape(1) != 3) {
    throw InvalidInput("means must be (K, 3)");
  }
  const py::ssize_t k = means.shape(0);
  if (scales.ndim() != 2 || scales.shape(0) != k || scales.shape(1) != 3) {
    throw InvalidInput("scales must be (K, 3)");
  }
  if (rotations.ndim() != 2 || rotations.shape(0) != k ||
      rotations.shape(1) != 4) {
    throw InvalidInput("rotations must be (K, 4) wxyz");
  }
  if (opacities.ndim() != 1 || opacities.shape(0) != k) {
    throw InvalidInput("opacities must be (K,)");
  }
  if (semantics.ndim() != 2 || semantics.shape(0) != k) {
    throw InvalidInput("semantics must be (K, N)");
  }
  std::vector<SemanticGaussian> out;
  out.reserve(static_cast<std::size_t>(k));
  for (py::ssize_t g = 0; g < k; ++g) {
    std::vector<double> sem(static_cast<std::size_t>(semantics.shape(1)));
    for (py::ssize_t c = 0; c < semantics.shape(1); ++c) {
      sem[static_cast<std::size_t>(c)] = semantics.at(g, c);
    }
    out.push_back(SemanticGaussian::make(
        Eigen::Vector3d(means.at(g, 0), means.at(g, 1), means.at(g, 2)),
        Eigen::Vector3d(scales.at(g, 0), scales.at(g, 1), scales.at(g, 2)),
        Eigen::Vector4d(rotations.at(g, 0), rotations.at(g, 1),
                        rotations.at(g, 2), rotations.at(g, 3)),
        opacities.at(g), std::move(sem)));
  }
  return out;
}

py::dict metrics_to(const MetricsReport& m) {
  py::dict d;
  d["mean_iou"] = m.mean_iou;
  d["occupancy_iou"] = m.occupancy_iou;
  py::list classes;
  for (const ClassCounts& cc : m.per_class) {
    py::dict c;
    c["iou"] = cc.iou();
    c["tp"] = cc.tp;
    c["fp"] = cc.fp;
    c["fn"] = cc.fn;
    classes.append(c);
  }
  d["classes"] = classes;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Semantic Gaussian splatting core";

  py::register_exception<InvalidInput>(m, "InvalidInputError",
                                       PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericErrorPy",
                                       PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoErrorPy", PyExc_OSError);

  m.def(
      "mini_street",
      [](std::uint64_t seed) {
        const LabelGrid g = mini_street(seed);
        return py::make_tuple(labels_to(g), g.spec.resolution);
      },
      py::arg("seed") = 0,
      "Synthetic street scene; returns (labels, resolution).");

  m.def(
      "gen_features",
      [](const LabelArray& labels, int channels, double noise,
         std::uint64_t seed, double resolution,
         const std::array<double, 3>& origin) {
        return volume_to(gen_features(labels_from(labels, resolution, origin),
                                      channels, noise, seed));
      },
      py::arg("labels"), py::arg("channels"), py::arg("noise") = 0.0,
      py::arg("seed") = 0, py::arg("resolution") = 1.0,
      py::arg("origin") = std::array<double, 3>{0.0, 0.0, 0.0},
      "Per-voxel class-prototype features, shape (nx, ny, nz, channels).");

  m.def(
      "sh_basis",
      [](int degree, const std::array<double, 3>& direction) {
        const std::vector<double> b = sh_basis(
            degree,
            Eigen::Vector3d(direction[0], direction[1], direction[2]));
        py::array_t<double> arr(static_cast<py::ssize_t>(b.size()));
        std::memcpy(arr.mutable_data(), b.data(), b.size() * sizeof(double));
        return arr;
      },
      py::arg("degree"), py::arg("direction"),
      "Real SH basis values for a unit direction.");

  m.def(
      "splat",
      [](const DoubleArray& means, const DoubleArray& scales,
         const DoubleArray& rotations, const DoubleArray& opacities,
         const DoubleArray& semantics, const std::array<int, 3>& dims,
         double resolution, const std::array<double, 3>& origin,
         double cutoff, int threads) {
        const std::vector<SemanticGaussian> gs =
            gaussians_from(means, scales, rotations, opacities, semantics);
        const GridSpec spec =
            make_spec(dims[0], dims[1], dims[2], resolution, origin);
        SplatOptions opt;
        opt.cutoff = cutoff;
        opt.threads = threads;
        return volume_to(splat(gs, spec,
                               static_cast<int>(semantics.shape(1)), opt));
      },
      py::arg("means"), py::arg("scales"), py::arg("rotations"),
      py::arg("opacities"), py::arg("semantics"), py::arg("dims"),
      py::arg("resolution") = 1.0,
      py::arg("origin") = std::array<double, 3>{0.0, 0.0, 0.0},
      py::arg("cutoff") = 3.0, py::arg("threads") = 1,
      "Accumulate Gaussian semantics onto a voxel grid, "
      "shape (nx, ny, nz, channels).");

  m.def(
      "pool_planes",
      [](const DoubleArray& features, double resolution,
         const std::array<double, 3>& origin) {
        const FeatureVolume vol = volume_from(features, resolution, origin);
        const TriPlane planes = pool_tpv(vol);
        const auto plane_to = [](const std::vector<double>& v, int a, int b,
                                 int c) {
          py::array_t<double> arr({a, b, c});
          std::memcpy(arr.mutable_data(), v.data(), v.size() * sizeof(double));
          return arr;
        };
        const GridSpec& s = planes.spec;
        return py::make_tuple(
            plane_to(planes.xy, s.nx, s.ny, planes.channels),
            plane_to(planes.yz, s.ny, s.nz, planes.channels),
            plane_to(planes.zx, s.nz, s.nx, planes.channels));
      },
      py::arg("features"), py::arg("resolution") = 1.0,
      py::arg("origin") = std::array<double, 3>{0.0, 0.0, 0.0},
      "Mean-pool a feature volume onto the three axis planes.");

  m.def(
      "evaluate",
      [](const LabelArray& prediction, const LabelArray& gt, int num_classes) {
        const std::array<double, 3> o{0.0, 0.0, 0.0};
        return metrics_to(evaluate(labels_from(prediction, 1.0, o),
                                   labels_from(gt, 1.0, o), num_classes));
      },
      py::arg("prediction"), py::arg("gt"), py::arg("num_classes"),
      "Per-class IoU, occupancy IoU, and mean IoU.");

  m.def(
      "run_pipeline",
      [](const LabelArray& gt, int num_semantic, const std::string& config_text,
         double resolution, const std::array<double, 3>& origin) {
        const PipelineConfig config = config_text.empty()
                                          ? PipelineConfig{}
                                          : parse_config(config_text);
        const PipelineResult r = run_pipeline(
            labels_from(gt, resolution, origin), num_semantic, config);
        py::dict d;
        d["fused"] = metrics_to(r.fused_metrics);
        d["gauss"] = metrics_to(r.gauss_metrics);
        d["prediction"] = labels_to(r.prediction);
        py::list losses;
        for (const FitRecord& rec : r.fit.trajectory) {
          py::dict row;
          row["iteration"] = rec.iteration;
          row["total"] = rec.losses.total();
          row["fused_mean_iou"] = rec.fused_mean_iou;
          row["gauss_occupancy_iou"] = rec.gauss_occupancy_iou;
          losses.append(row);
        }
        d["trajectory"] = losses;
        return d;
      },
      py::arg("gt"), py::arg("num_semantic"), py::arg("config") = "",
      py::arg("resolution") = 1.0,
      py::arg("origin") = std::array<double, 3>{0.0, 0.0, 0.0},
      "Full features -> anchors -> fit -> metrics pipeline on a label grid.");

  m.def(
      "write_scene",
      [](const std::string& path, const LabelArray& labels, int num_semantic,
         double resolution, const std::array<double, 3>& origin) {
        write_scene(path, labels_from(labels, resolution, origin),
                    static_cast<std::uint16_t>(num_semantic));
      },
      py::arg("path"), py::arg("labels"), py::arg("num_semantic"),
      py::arg("resolution") = 1.0,
      py::arg("origin") = std::array<double, 3>{0.0, 0.0, 0.0});

  m.def(
      "read_scene",
      [](const std::string& path) {
        const SceneData scene = read_scene(path);
        py::dict d;
        d["resolution"] = scene.spec.resolution;
        d["origin"] = std::array<double, 3>{
            scene.spec.origin[0], scene.spec.origin[1], scene.spec.origin[2]};
        d["num_semantic"] = scene.num_semantic;
        if (scene.kind == PayloadKind::kLabels) {
          d["kind"] = "labels";
          d["data"] = labels_to(scene.labels);
        } else if (scene.kind == PayloadKind::kLogits) {
          d["kind"] = "logits";
          d["data"] = volume_to(scene.logits);
        } else {
          d["kind"] = "scalar";
          d["data"] = volume_to(scene.scalars);
        }
        return d;
      },
      py::arg("path"));

  m.def("default_anchor_count", &default_anchor_count, py::arg("voxel_count"));
  m.attr("SH_Y00") = kY00;
  m.attr("IGNORE_LABEL") = kIgnoreLabel;
  m.attr("MINI_STREET_CLASSES") = kMiniStreetClasses;
}
