// Thresholding and connected-component labeling of density maps.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dmc/grid.hpp"

namespace dmc {

/// full: 8-neighborhood (2D) / 26-neighborhood (3D). face: 4 / 6.
enum class Connectivity { full, face };

struct ComponentInfo {
  std::uint32_t id = 0;
  std::size_t cell_count = 0;
  /// Sum of density over the component's cells, accumulated in raster order.
  double raw_mass = 0.0;
  CellIndex bbox_min;
  CellIndex bbox_max;
  /// Flat index of the first cell in raster order.
  std::size_t first_cell = 0;
};

struct ComponentLabeling {
  double threshold = 0.0;
  Connectivity connectivity = Connectivity::full;
  std::vector<std::size_t> dims;
  /// 1 where density > threshold.
  std::vector<std::uint8_t> mask;
  /// 0 = background, otherwise 1..n_components.
  std::vector<std::uint32_t> labels;
  std::vector<ComponentInfo> components;

  std::size_t n_components() const { return components.size(); }
  /// Throws std::out_of_range for ids outside 1..n_components.
  const ComponentInfo& component(std::uint32_t id) const;
  /// Flat indices of the component's cells in raster order.
  std::vector<std::size_t> cells(std::uint32_t id) const;
};

/// Labels {cells : density > threshold}. Ids follow the raster-scan order of
/// each component's first cell.
ComponentLabeling label_components(const DensityMap& map, double threshold,
                                   Connectivity connectivity = Connectivity::full);

double component_mass(const ComponentLabeling& labeling, std::uint32_t id);

/// Per-cell neighbor offsets (dslice, drow, dcol) for a connectivity.
std::vector<std::array<int, 3>> neighbor_offsets(int ndim, Connectivity connectivity);

struct ComponentSummary {
  double mass = 0.0;
  std::size_t cell_count = 0;
  float peak = 0.0f;  // largest cell value
};

/// Component summaries of the superlevel sets at several thresholds, computed
/// in a single descending union-find sweep. Result i belongs to thresholds[i];
/// summaries within a level are in no particular order.
std::vector<std::vector<ComponentSummary>> superlevel_components(
    const DensityMap& map, std::span<const double> thresholds,
    Connectivity connectivity = Connectivity::full);

}  // namespace dmc
