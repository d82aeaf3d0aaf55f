// Synthetic scenes with controlled overlap, and a corruption model that
// emulates density-regressor output (per-object mass error, spurious
// background peaks, white noise).
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dmc/grid.hpp"

namespace dmc {

/// Distances are Mahalanobis distances under the scene kernel ("sigma units").
struct SceneConfig {
  std::vector<std::size_t> dims{256, 256};
  double count_mean = 100.0;
  double count_stddev = 30.0;
  /// Fraction p of objects placed in overlapping pairs, p ~ U[min, max].
  double overlap_min = 0.0;
  double overlap_max = 0.5;
  double pair_separation_min = 1.5;
  double pair_separation_max = 4.0;
  /// Minimum distance between objects that are not pair partners.
  double min_separation = 8.0;
  /// Distance kept from the grid border along each axis.
  double margin = 4.0;

  void validate() const;
};

struct NoiseConfig {
  /// Per-object mass factor ~ Normal(1, gain_stddev), clamped to [0.2, 1.8].
  double gain_stddev = 0.15;
  /// Background bumps per 1000 cells (Poisson).
  double bump_rate = 0.05;
  double bump_amplitude_min = 0.1;
  double bump_amplitude_max = 0.4;
  /// Bump covariance is (bump_width)^2 times the kernel covariance.
  double bump_width = 0.7;
  double white_noise_stddev = 1e-4;
  /// Extra isotropic blur (pixels); 0 disables.
  double blur_stddev = 0.0;

  static NoiseConfig none();
  void validate() const;
};

/// A generated scene: points with the pairs listed first.
struct Scene {
  PointSet points;
  std::size_t n_pairs = 0;
  double overlap_fraction = 0.0;
};

Scene generate_scene(const SceneConfig& config, const KernelSpec& kernel, std::uint64_t seed);

/// Throws if the scene violates the separation or margin guarantees.
void verify_scene(const Scene& scene, const SceneConfig& config, const KernelSpec& kernel);

/// Rebuilds the density of `points` with per-object gains, then adds
/// background bumps and white noise, clamps at zero and optionally blurs.
DensityMap corrupt_density(const DensityMap& clean, const PointSet& points,
                           const KernelSpec& kernel, const NoiseConfig& noise, std::uint64_t seed);

struct Preset {
  std::string name;
  SceneConfig scene;
  /// Default kernel standard deviations (x, y[, z]).
  std::vector<double> sigma;
};

/// "vgg-like", "ellipse-like" or "3d-small"; throws std::invalid_argument.
Preset preset(const std::string& name);

/// Writes <id>.csv, <id>_gt.dmap, <id>_pred.dmap per image and manifest.tsv.
/// Image i uses seed ^ i.
DatasetManifest generate_dataset(const SceneConfig& scene, const NoiseConfig& noise,
                                 const KernelSpec& kernel, std::size_t n_images,
                                 std::uint64_t seed, const std::filesystem::path& out_dir,
                                 unsigned threads = 1);

}  // namespace dmc
