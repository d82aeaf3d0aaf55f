// Object center recovery inside connected components.
//
// A component's density is normalized to a distribution, Monte Carlo sampled,
// and fit with a k-component Gaussian mixture whose covariance is pinned to
// the kernel covariance. The fitted means are the object centers.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dmc/components.hpp"
#include "dmc/counting.hpp"
#include "dmc/grid.hpp"

namespace dmc {

struct CellProbability {
  std::size_t cell = 0;
  double p = 0.0;
};

struct ComponentDistribution {
  std::uint32_t id = 0;
  std::vector<std::size_t> dims;
  /// Raster order.
  std::vector<CellProbability> cells;

  int ndim() const { return static_cast<int>(dims.size()); }
  /// Probability-weighted mean of the cell centers.
  Point mean() const;
};

struct GmmOptions {
  int max_iters = 200;
  double tol = 1e-3;
};

struct GmmFit {
  std::size_t k = 0;
  std::vector<Point> means;
  std::vector<double> weights;
  int iterations = 0;
  bool converged = false;
  double final_shift = 0.0;
  /// Log-likelihood of the samples under the parameters entering each E-step.
  std::vector<double> log_likelihood;
  /// Iterations in which an empty cluster was re-seeded.
  std::vector<int> resets;
};

ComponentDistribution normalize_component(const DensityMap& map,
                                          const ComponentLabeling& labeling, std::uint32_t id);

/// Inverse-CDF cell draw followed by uniform jitter inside the cell.
std::vector<Point> sample_component(const ComponentDistribution& dist, std::size_t n,
                                    std::uint64_t seed);

/// EM with every covariance fixed to the kernel's. Means missing from `init`
/// are filled by farthest-point selection among the samples.
GmmFit fit_gmm_fixed_cov(std::span<const Point> samples, std::size_t k, const KernelSpec& kernel,
                         const GmmOptions& options = {}, std::span<const Point> init = {});

/// Local density maxima of a component, strongest first (raster order on ties).
std::vector<std::size_t> component_peaks(const DensityMap& map, const ComponentLabeling& labeling,
                                         std::uint32_t id);

std::vector<Point> localize_component(const DensityMap& map, const ComponentLabeling& labeling,
                                      std::uint32_t id, std::int64_t rounded_count,
                                      const KernelSpec& kernel, std::uint64_t seed,
                                      const DmaOptions& options = {});

struct DmaAnalysis {
  CountResult count;
  PointSet centers;
};

/// Count, then localize every component; centers.size() == total_count.
DmaAnalysis analyze_dma(const DensityMap& map, const KernelSpec& kernel, std::uint64_t seed,
                        const DmaOptions& options = {});

}  // namespace dmc
