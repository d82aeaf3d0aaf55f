// Mass-normalized connected-component counting with automatic threshold
// selection.
//
// At a threshold T a unit Gaussian kernel keeps exactly F(r_T) of its mass
// above T, where r_T is the Mahalanobis radius of the T level set and F the
// chi-square CDF. Dividing a component's supra-threshold mass by F(r_T)
// therefore estimates how many kernels it holds, independent of T when the
// threshold separates objects cleanly.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dmc/components.hpp"
#include "dmc/grid.hpp"

namespace dmc {

struct DmaOptions {
  std::size_t n_candidates = 48;
  Connectivity connectivity = Connectivity::full;
  /// Reject thresholds whose components are far larger than the number of
  /// kernels they hold can cover (noise percolation).
  bool area_check = true;

  std::size_t samples_per_object = 2000;
  int max_iters = 200;
  /// EM stops once no mean moves more than this (pixels).
  double tol = 1e-3;
};

struct ComponentRecord {
  std::uint32_t id = 0;
  double raw_mass = 0.0;
  double f_of_rt = 0.0;
  double normalized_count = 0.0;
  std::int64_t rounded_count = 0;
};

struct ThresholdCandidate {
  double threshold = 0.0;
  double objective = 0.0;
  bool admissible = true;
  std::size_t n_components = 0;
  std::int64_t total_count = 0;
};

struct ThresholdSelection {
  double chosen_t = 0.0;
  double objective = 0.0;
  /// Ascending threshold order.
  std::vector<ThresholdCandidate> candidates;

  bool empty() const { return candidates.empty(); }
};

struct CountResult {
  ThresholdSelection selection;
  std::vector<ComponentRecord> records;
  std::int64_t total_count = 0;
  ComponentLabeling labeling;
  std::vector<std::string> warnings;
};

/// Nearest nonnegative integer, ties rounded up.
std::int64_t round_count(double normalized_count);

/// Log-spaced candidates in [max(1e-4 peak, min positive value), 0.95 peak],
/// ascending. Empty when the map has no positive cell.
std::vector<double> candidate_thresholds(const DensityMap& map, const KernelSpec& kernel,
                                         std::size_t n_candidates);

/// Mean distance of component counts from their nearest integers, over
/// components that count at least one object. Components rounding to zero
/// add their full count to the numerator.
double threshold_objective(std::span<const double> normalized_counts);

std::vector<ComponentRecord> component_counts(const ComponentLabeling& labeling,
                                              const KernelSpec& kernel);
std::vector<ComponentRecord> component_counts(const DensityMap& map, double threshold,
                                              const KernelSpec& kernel,
                                              Connectivity connectivity = Connectivity::full);

ThresholdSelection auto_threshold(const DensityMap& map, const KernelSpec& kernel,
                                  const DmaOptions& options = {});

CountResult count_dma(const DensityMap& map, const KernelSpec& kernel,
                      const DmaOptions& options = {});

}  // namespace dmc
