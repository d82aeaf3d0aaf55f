#include "dmc/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "dmc/gaussian.hpp"
#include "dmc/parallel.hpp"
#include "dmc/rng.hpp"

namespace dmc {
namespace {

constexpr int kMaxPlacementAttempts = 10000;
constexpr double kGainMin = 0.2;
constexpr double kGainMax = 1.8;

struct Box {
  Point lo{0.0, 0.0, 0.0};
  Point hi{0.0, 0.0, 0.0};
  int ndim = 2;

  bool contains(const Point& p) const {
    for (int a = 0; a < ndim; ++a)
      if (p[a] < lo[a] || p[a] > hi[a]) return false;
    return true;
  }
};

Box placement_box(const SceneConfig& config, const KernelSpec& kernel) {
  Box box;
  box.ndim = static_cast<int>(config.dims.size());
  // Axis a of a point maps to dims[ndim - 1 - a].
  for (int a = 0; a < box.ndim; ++a) {
    const double extent = static_cast<double>(config.dims[static_cast<std::size_t>(box.ndim - 1 - a)]);
    const double m = config.margin * kernel.axis_stddev(a);
    box.lo[a] = m;
    box.hi[a] = extent - 1.0 - m;
    if (box.lo[a] > box.hi[a])
      throw std::invalid_argument("scene dims too small for a margin of " +
                                  std::to_string(config.margin) + " sigma");
  }
  return box;
}

Point uniform_point(Rng& rng, const Box& box) {
  Point p{0.0, 0.0, 0.0};
  for (int a = 0; a < box.ndim; ++a) p[a] = rng.uniform(box.lo[a], box.hi[a]);
  return p;
}

bool far_enough(const Point& p, const std::vector<Point>& placed, const KernelSpec& kernel,
                double min_sep) {
  const double m2 = min_sep * min_sep;
  for (const Point& q : placed)
    if (kernel.mahalanobis_squared(p, q) < m2) return false;
  return true;
}

void blur_axis(std::vector<double>& v, const std::vector<std::size_t>& dims, int axis,
               const std::vector<double>& taps) {
  const std::size_t depth = dims.size() == 3 ? dims[0] : 1;
  const std::size_t height = dims[dims.size() - 2];
  const std::size_t width = dims.back();
  const std::size_t n = axis == 0 ? width : axis == 1 ? height : depth;
  const std::size_t stride = axis == 0 ? 1 : axis == 1 ? width : width * height;
  const auto radius = static_cast<std::ptrdiff_t>(taps.size() / 2);
  std::vector<double> line(n), out(n);
  for (std::size_t base = 0; base < v.size(); ++base) {
    // Visit each line once, from its first element.
    if ((base / stride) % n != 0) continue;
    for (std::size_t i = 0; i < n; ++i) line[i] = v[base + i * stride];
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0, w = 0.0;
      for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
        const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(i) + t;
        if (j < 0 || j >= static_cast<std::ptrdiff_t>(n)) continue;
        const double tap = taps[static_cast<std::size_t>(t + radius)];
        s += tap * line[static_cast<std::size_t>(j)];
        w += tap;
      }
      out[i] = s / w;
    }
    for (std::size_t i = 0; i < n; ++i) v[base + i * stride] = out[i];
  }
}

}  // namespace

void SceneConfig::validate() const {
  if (dims.size() != 2 && dims.size() != 3) throw std::invalid_argument("scene must be 2D or 3D");
  for (std::size_t d : dims)
    if (d == 0) throw std::invalid_argument("scene dims must be positive");
  if (!(count_stddev >= 0.0)) throw std::invalid_argument("count stddev must be nonnegative");
  if (!(overlap_min >= 0.0 && overlap_min <= overlap_max && overlap_max <= 1.0))
    throw std::invalid_argument("overlap fraction range must satisfy 0 <= min <= max <= 1");
  if (!(pair_separation_min > 0.0 && pair_separation_min <= pair_separation_max))
    throw std::invalid_argument("pair separation range must be positive and ordered");
  if (!(min_separation >= 0.0)) throw std::invalid_argument("min separation must be nonnegative");
  if (!(margin >= 0.0)) throw std::invalid_argument("margin must be nonnegative");
}

NoiseConfig NoiseConfig::none() {
  NoiseConfig n;
  n.gain_stddev = 0.0;
  n.bump_rate = 0.0;
  n.white_noise_stddev = 0.0;
  n.blur_stddev = 0.0;
  return n;
}

void NoiseConfig::validate() const {
  if (!(gain_stddev >= 0.0 && bump_rate >= 0.0 && bump_amplitude_min >= 0.0 &&
        bump_width > 0.0 && white_noise_stddev >= 0.0 && blur_stddev >= 0.0))
    throw std::invalid_argument("noise parameters must be nonnegative");
  if (bump_amplitude_min > bump_amplitude_max)
    throw std::invalid_argument("bump amplitude range must be ordered");
}

Scene generate_scene(const SceneConfig& config, const KernelSpec& kernel, std::uint64_t seed) {
  config.validate();
  if (static_cast<int>(config.dims.size()) != kernel.ndim())
    throw std::invalid_argument("scene dims and kernel disagree on dimensionality");
  const Box box = placement_box(config, kernel);
  Rng rng(seed);

  Scene scene;
  scene.points.ndim = kernel.ndim();
  const double drawn = std::round(rng.normal(config.count_mean, config.count_stddev));
  const auto n_objects = static_cast<std::size_t>(std::max(0.0, drawn));
  scene.overlap_fraction = rng.uniform(config.overlap_min, config.overlap_max);
  scene.n_pairs = std::min(
      n_objects / 2,
      static_cast<std::size_t>(std::round(scene.overlap_fraction * static_cast<double>(n_objects) / 2.0)));

  const auto chol = kernel.cholesky();
  const int d = kernel.ndim();
  auto& placed = scene.points.points;

  for (std::size_t i = 0; i < scene.n_pairs; ++i) {
    bool done = false;
    for (int attempt = 0; attempt < kMaxPlacementAttempts && !done; ++attempt) {
      const Point a = uniform_point(rng, box);
      const double sep = rng.uniform(config.pair_separation_min, config.pair_separation_max);
      Point u{0.0, 0.0, 0.0};
      double norm = 0.0;
      for (int k = 0; k < d; ++k) {
        u[k] = rng.normal();
        norm += u[k] * u[k];
      }
      norm = std::sqrt(norm);
      if (norm == 0.0) continue;
      Point b = a;
      for (int r = 0; r < d; ++r)
        for (int c = 0; c <= r; ++c) b[r] += sep * chol[3 * r + c] * u[c] / norm;
      if (!box.contains(b) || !far_enough(a, placed, kernel, config.min_separation) ||
          !far_enough(b, placed, kernel, config.min_separation))
        continue;
      placed.push_back(a);
      placed.push_back(b);
      done = true;
    }
    if (!done) throw Error("scene too dense");
  }
  while (placed.size() < n_objects) {
    bool done = false;
    for (int attempt = 0; attempt < kMaxPlacementAttempts && !done; ++attempt) {
      const Point p = uniform_point(rng, box);
      if (!far_enough(p, placed, kernel, config.min_separation)) continue;
      placed.push_back(p);
      done = true;
    }
    if (!done) throw Error("scene too dense");
  }
  return scene;
}

void verify_scene(const Scene& scene, const SceneConfig& config, const KernelSpec& kernel) {
  const Box box = placement_box(config, kernel);
  const auto& pts = scene.points.points;
  const double tol = 1e-9;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!box.contains(pts[i])) throw Error("scene point " + std::to_string(i) + " violates margin");
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const double dist = std::sqrt(kernel.mahalanobis_squared(pts[i], pts[j]));
      const bool partners = j == i + 1 && i % 2 == 0 && j < 2 * scene.n_pairs;
      if (partners) {
        if (dist < config.pair_separation_min - tol || dist > config.pair_separation_max + tol)
          throw Error("pair " + std::to_string(i / 2) + " separation out of range");
      } else if (dist < config.min_separation - tol) {
        throw Error("points " + std::to_string(i) + " and " + std::to_string(j) +
                    " closer than the minimum separation");
      }
    }
  }
}

DensityMap corrupt_density(const DensityMap& clean, const PointSet& points,
                           const KernelSpec& kernel, const NoiseConfig& noise, std::uint64_t seed) {
  noise.validate();
  Rng rng(seed);
  std::vector<double> gains(points.size(), 1.0);
  if (noise.gain_stddev > 0.0)
    for (double& g : gains) g = std::clamp(rng.normal(1.0, noise.gain_stddev), kGainMin, kGainMax);
  const DensityMap objects = render_density_map(points, gains, kernel, clean.dims());

  const bool has_bumps = noise.bump_rate > 0.0;
  const bool has_white = noise.white_noise_stddev > 0.0;
  const bool has_blur = noise.blur_stddev > 0.0;
  if (!has_bumps && !has_white && !has_blur) return objects;

  std::vector<double> acc(objects.values().begin(), objects.values().end());
  if (has_bumps) {
    const std::uint64_t n_bumps =
        rng.poisson(noise.bump_rate * static_cast<double>(clean.size()) / 1000.0);
    const int d = kernel.ndim();
    std::vector<double> bump_sigma(static_cast<std::size_t>(d * d));
    const double w2 = noise.bump_width * noise.bump_width;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) bump_sigma[static_cast<std::size_t>(i * d + j)] = w2 * kernel.sigma(i, j);
    const KernelSpec bump_kernel(d, bump_sigma);
    PointSet centers;
    centers.ndim = d;
    std::vector<double> weights;
    for (std::uint64_t b = 0; b < n_bumps; ++b) {
      Point c{0.0, 0.0, 0.0};
      for (int a = 0; a < d; ++a) {
        const double extent = static_cast<double>(clean.dims()[static_cast<std::size_t>(d - 1 - a)]);
        c[a] = rng.uniform(-0.5, extent - 0.5);
      }
      const double amplitude =
          rng.uniform(noise.bump_amplitude_min, noise.bump_amplitude_max) * kernel.peak_density();
      centers.points.push_back(c);
      weights.push_back(amplitude / bump_kernel.peak_density());
    }
    const DensityMap bumps = render_density_map(centers, weights, bump_kernel, clean.dims());
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += static_cast<double>(bumps[i]);
  }
  if (has_white)
    for (double& v : acc) v += rng.normal(0.0, noise.white_noise_stddev);
  for (double& v : acc) v = std::max(v, 0.0);
  if (has_blur) {
    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(4.0 * noise.blur_stddev));
    std::vector<double> taps;
    for (std::ptrdiff_t t = -radius; t <= radius; ++t)
      taps.push_back(std::exp(-0.5 * static_cast<double>(t * t) / (noise.blur_stddev * noise.blur_stddev)));
    for (int axis = 0; axis < clean.ndim(); ++axis) blur_axis(acc, clean.dims(), axis, taps);
  }
  std::vector<float> values(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) values[i] = static_cast<float>(acc[i]);
  return DensityMap(clean.dims(), std::move(values));
}

Preset preset(const std::string& name) {
  Preset p;
  p.name = name;
  if (name == "vgg-like") {
    // Simulated bacterial cells: 176 +- 61 objects on 256 x 256.
    p.scene.dims = {256, 256};
    p.scene.count_mean = 176.0;
    p.scene.count_stddev = 61.0;
    p.scene.min_separation = 4.0;
    p.sigma = {2.0, 2.0};
  } else if (name == "ellipse-like") {
    p.scene.dims = {256, 256};
    p.scene.count_mean = 100.0;
    p.scene.count_stddev = 30.0;
    p.scene.min_separation = 6.0;
    p.sigma = {2.0, 2.0};
  } else if (name == "3d-small") {
    p.scene.dims = {64, 128, 128};
    p.scene.count_mean = 60.0;
    p.scene.count_stddev = 15.0;
    p.scene.min_separation = 6.0;
    p.sigma = {2.0, 2.0, 1.0};
  } else {
    throw std::invalid_argument("unknown preset \"" + name +
                                "\" (expected vgg-like, ellipse-like or 3d-small)");
  }
  return p;
}

DatasetManifest generate_dataset(const SceneConfig& scene, const NoiseConfig& noise,
                                 const KernelSpec& kernel, std::size_t n_images,
                                 std::uint64_t seed, const std::filesystem::path& out_dir,
                                 unsigned threads) {
  scene.validate();
  noise.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.entries.resize(n_images);
  parallel_for(n_images, threads, [&](std::size_t i) {
    char id[32];
    std::snprintf(id, sizeof id, "img_%04zu", i);
    const std::uint64_t image_seed = seed ^ i;
    const Scene s = generate_scene(scene, kernel, image_seed);
    verify_scene(s, scene, kernel);
    const DensityMap clean = render_density_map(s.points, kernel, scene.dims);
    const DensityMap pred =
        corrupt_density(clean, s.points, kernel, noise, splitmix64(image_seed) ^ 0xC0FFEEull);
    ManifestEntry& e = manifest.entries[i];
    e.id = id;
    e.gt_points_path = out_dir / (std::string(id) + ".csv");
    e.gt_density_path = out_dir / (std::string(id) + "_gt.dmap");
    e.pred_density_path = out_dir / (std::string(id) + "_pred.dmap");
    write_points(s.points, e.gt_points_path);
    write_density_map(clean, e.gt_density_path);
    write_density_map(pred, e.pred_density_path);
  });
  write_manifest(manifest, out_dir / "manifest.tsv");
  return manifest;
}

}  // namespace dmc
