#include "dmc/components.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace dmc {
namespace {

struct UnionFind {
  std::vector<std::uint32_t> parent;

  std::uint32_t make() {
    parent.push_back(static_cast<std::uint32_t>(parent.size()));
    return parent.back();
  }
  std::uint32_t find(std::uint32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    // Smaller index wins so roots stay stable.
    if (a < b) parent[b] = a;
    else parent[a] = b;
  }
};

bool is_backward(const std::array<int, 3>& o) {
  if (o[0] != 0) return o[0] < 0;
  if (o[1] != 0) return o[1] < 0;
  return o[2] < 0;
}

}  // namespace

std::vector<std::array<int, 3>> neighbor_offsets(int ndim, Connectivity connectivity) {
  std::vector<std::array<int, 3>> out;
  const int zr = ndim == 3 ? 1 : 0;
  for (int dz = -zr; dz <= zr; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int nonzero = (dz != 0) + (dy != 0) + (dx != 0);
        if (nonzero == 0) continue;
        if (connectivity == Connectivity::face && nonzero > 1) continue;
        out.push_back({dz, dy, dx});
      }
  return out;
}

const ComponentInfo& ComponentLabeling::component(std::uint32_t id) const {
  if (id == 0 || id > components.size())
    throw std::out_of_range("unknown component id " + std::to_string(id));
  return components[id - 1];
}

std::vector<std::size_t> ComponentLabeling::cells(std::uint32_t id) const {
  const ComponentInfo& info = component(id);
  const std::size_t height = dims[dims.size() - 2];
  const std::size_t width = dims.back();
  std::vector<std::size_t> out;
  out.reserve(info.cell_count);
  for (std::size_t s = info.bbox_min.slice; s <= info.bbox_max.slice; ++s)
    for (std::size_t r = info.bbox_min.row; r <= info.bbox_max.row; ++r)
      for (std::size_t c = info.bbox_min.col; c <= info.bbox_max.col; ++c) {
        const std::size_t i = (s * height + r) * width + c;
        if (labels[i] == id) out.push_back(i);
      }
  return out;
}

ComponentLabeling label_components(const DensityMap& map, double threshold,
                                   Connectivity connectivity) {
  if (!(threshold >= 0.0)) throw std::invalid_argument("threshold must be nonnegative");
  ComponentLabeling out;
  out.threshold = threshold;
  out.connectivity = connectivity;
  out.dims = map.dims();
  out.mask.assign(map.size(), 0);
  out.labels.assign(map.size(), 0);

  const auto depth = static_cast<std::ptrdiff_t>(map.depth());
  const auto height = static_cast<std::ptrdiff_t>(map.height());
  const auto width = static_cast<std::ptrdiff_t>(map.width());
  std::vector<std::array<int, 3>> back;
  for (const auto& o : neighbor_offsets(map.ndim(), connectivity))
    if (is_backward(o)) back.push_back(o);

  // First pass: provisional labels (1-based) with equivalences.
  UnionFind uf;
  uf.make();  // slot 0 is background
  const auto values = map.values();
  for (std::ptrdiff_t z = 0; z < depth; ++z)
    for (std::ptrdiff_t y = 0; y < height; ++y)
      for (std::ptrdiff_t x = 0; x < width; ++x) {
        const std::size_t i = static_cast<std::size_t>((z * height + y) * width + x);
        if (!(static_cast<double>(values[i]) > threshold)) continue;
        out.mask[i] = 1;
        std::uint32_t label = 0;
        for (const auto& o : back) {
          const std::ptrdiff_t nz = z + o[0], ny = y + o[1], nx = x + o[2];
          if (nz < 0 || ny < 0 || nx < 0 || nx >= width || ny >= height) continue;
          const std::uint32_t nl =
              out.labels[static_cast<std::size_t>((nz * height + ny) * width + nx)];
          if (nl == 0) continue;
          if (label == 0) label = nl;
          else if (nl != label) uf.unite(label, nl);
        }
        out.labels[i] = label != 0 ? label : uf.make();
      }

  // Second pass: resolve and renumber by first raster encounter.
  std::vector<std::uint32_t> final_id(uf.parent.size(), 0);
  for (std::size_t i = 0; i < out.labels.size(); ++i) {
    if (out.labels[i] == 0) continue;
    const std::uint32_t root = uf.find(out.labels[i]);
    std::uint32_t& id = final_id[root];
    const CellIndex c = map.cell_index(i);
    if (id == 0) {
      id = static_cast<std::uint32_t>(out.components.size() + 1);
      ComponentInfo info;
      info.id = id;
      info.bbox_min = c;
      info.bbox_max = c;
      info.first_cell = i;
      out.components.push_back(info);
    }
    ComponentInfo& info = out.components[id - 1];
    ++info.cell_count;
    info.raw_mass += static_cast<double>(values[i]);
    info.bbox_min.slice = std::min(info.bbox_min.slice, c.slice);
    info.bbox_min.row = std::min(info.bbox_min.row, c.row);
    info.bbox_min.col = std::min(info.bbox_min.col, c.col);
    info.bbox_max.slice = std::max(info.bbox_max.slice, c.slice);
    info.bbox_max.row = std::max(info.bbox_max.row, c.row);
    info.bbox_max.col = std::max(info.bbox_max.col, c.col);
    out.labels[i] = id;
  }
  return out;
}

double component_mass(const ComponentLabeling& labeling, std::uint32_t id) {
  return labeling.component(id).raw_mass;
}

std::vector<std::vector<ComponentSummary>> superlevel_components(
    const DensityMap& map, std::span<const double> thresholds, Connectivity connectivity) {
  std::vector<std::vector<ComponentSummary>> result(thresholds.size());
  if (thresholds.empty()) return result;

  const double floor_t = *std::min_element(thresholds.begin(), thresholds.end());
  const auto values = map.values();
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (static_cast<double>(values[i]) > floor_t) order.push_back(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });

  std::vector<std::size_t> levels(thresholds.size());
  std::iota(levels.begin(), levels.end(), std::size_t{0});
  std::stable_sort(levels.begin(), levels.end(),
                   [&](std::size_t a, std::size_t b) { return thresholds[a] > thresholds[b]; });

  constexpr std::size_t kInactive = static_cast<std::size_t>(-1);
  std::vector<std::size_t> parent(values.size(), kInactive);
  std::vector<double> mass(values.size(), 0.0);
  std::vector<std::size_t> count(values.size(), 0);
  std::vector<float> peak(values.size(), 0.0f);
  std::vector<std::size_t> roots;

  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };

  const auto depth = static_cast<std::ptrdiff_t>(map.depth());
  const auto height = static_cast<std::ptrdiff_t>(map.height());
  const auto width = static_cast<std::ptrdiff_t>(map.width());
  const auto offsets = neighbor_offsets(map.ndim(), connectivity);

  std::size_t next = 0;
  for (std::size_t level : levels) {
    const double t = thresholds[level];
    while (next < order.size() && static_cast<double>(values[order[next]]) > t) {
      const std::size_t i = order[next++];
      parent[i] = i;
      mass[i] = static_cast<double>(values[i]);
      count[i] = 1;
      peak[i] = values[i];
      roots.push_back(i);
      const CellIndex c = map.cell_index(i);
      for (const auto& o : offsets) {
        const std::ptrdiff_t nz = static_cast<std::ptrdiff_t>(c.slice) + o[0];
        const std::ptrdiff_t ny = static_cast<std::ptrdiff_t>(c.row) + o[1];
        const std::ptrdiff_t nx = static_cast<std::ptrdiff_t>(c.col) + o[2];
        if (nz < 0 || ny < 0 || nx < 0 || nz >= depth || ny >= height || nx >= width) continue;
        const auto n = static_cast<std::size_t>((nz * height + ny) * width + nx);
        if (parent[n] == kInactive) continue;
        std::size_t a = find(i), b = find(n);
        if (a == b) continue;
        if (count[a] < count[b]) std::swap(a, b);
        parent[b] = a;
        mass[a] += mass[b];
        count[a] += count[b];
        peak[a] = std::max(peak[a], peak[b]);
      }
    }
    std::erase_if(roots, [&](std::size_t r) { return parent[r] != r; });
    auto& out = result[level];
    out.reserve(roots.size());
    for (std::size_t r : roots) out.push_back({mass[r], count[r], peak[r]});
  }
  return result;
}

}  // namespace dmc
