// Comparison methods: integration of the density map (IoDM), connected
// components after a fixed threshold (CCA-T), and local maxima.
#pragma once

#include <vector>

#include "dmc/components.hpp"
#include "dmc/evaluation.hpp"
#include "dmc/grid.hpp"

namespace dmc {

double count_iodm(const DensityMap& map);

struct CcatResult {
  double threshold = 0.0;
  std::size_t count = 0;
  /// Density-weighted centroid per component, in component id order.
  PointSet centers;
};

CcatResult cca_t(const DensityMap& map, double threshold,
                 Connectivity connectivity = Connectivity::full);

/// Cells above `threshold` strictly greater than every cell within Chebyshev
/// distance `min_distance`, as integer-coordinate points.
PointSet local_maxima(const DensityMap& map, double threshold, int min_distance = 1);

enum class SweepObjective { f1, mae };

struct SweepPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double mae = 0.0;
};

struct SweepResult {
  double best_threshold = 0.0;
  SweepPoint best;
  std::vector<SweepPoint> points;
};

/// n log-spaced thresholds in [1e-4, 0.95] * peak, ascending.
std::vector<double> default_threshold_grid(const KernelSpec& kernel, std::size_t n = 32);

/// Best CCA-T threshold over a validation set: max F-measure (or min MAE),
/// ties to the smaller threshold.
SweepResult sweep_threshold(const std::vector<LoadedImage>& images, std::span<const double> grid,
                            double radius, SweepObjective objective = SweepObjective::f1,
                            Connectivity connectivity = Connectivity::full, unsigned threads = 1);

SweepResult sweep_threshold(const DatasetManifest& manifest, const KernelSpec& kernel,
                            std::span<const double> grid, double radius,
                            SweepObjective objective = SweepObjective::f1,
                            Connectivity connectivity = Connectivity::full, unsigned threads = 1);

}  // namespace dmc
