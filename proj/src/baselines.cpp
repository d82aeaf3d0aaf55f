#include "dmc/baselines.hpp"

#include <cmath>
#include <stdexcept>

#include "dmc/parallel.hpp"

namespace dmc {

double count_iodm(const DensityMap& map) {
  double s = 0.0;
  for (float v : map.values()) s += static_cast<double>(v);
  return s;
}

CcatResult cca_t(const DensityMap& map, double threshold, Connectivity connectivity) {
  const ComponentLabeling labeling = label_components(map, threshold, connectivity);
  CcatResult out;
  out.threshold = threshold;
  out.count = labeling.n_components();
  out.centers.ndim = map.ndim();
  std::vector<Point> sums(labeling.n_components(), Point{0.0, 0.0, 0.0});
  for (std::size_t i = 0; i < labeling.labels.size(); ++i) {
    const std::uint32_t id = labeling.labels[i];
    if (id == 0) continue;
    const Point c = map.cell_center(i);
    const double v = static_cast<double>(map[i]);
    for (int a = 0; a < 3; ++a) sums[id - 1][a] += v * c[a];
  }
  for (std::size_t j = 0; j < sums.size(); ++j) {
    const double m = labeling.components[j].raw_mass;
    out.centers.points.push_back({sums[j][0] / m, sums[j][1] / m, sums[j][2] / m});
  }
  return out;
}

PointSet local_maxima(const DensityMap& map, double threshold, int min_distance) {
  if (!(threshold >= 0.0)) throw std::invalid_argument("threshold must be nonnegative");
  if (min_distance < 1) throw std::invalid_argument("min_distance must be at least 1");
  PointSet out;
  out.ndim = map.ndim();
  const auto depth = static_cast<std::ptrdiff_t>(map.depth());
  const auto height = static_cast<std::ptrdiff_t>(map.height());
  const auto width = static_cast<std::ptrdiff_t>(map.width());
  const std::ptrdiff_t rz = map.ndim() == 3 ? min_distance : 0;
  const std::ptrdiff_t r = min_distance;
  for (std::size_t i = 0; i < map.size(); ++i) {
    const float v = map[i];
    if (!(static_cast<double>(v) > threshold)) continue;
    const CellIndex c = map.cell_index(i);
    bool is_max = true;
    for (std::ptrdiff_t dz = -rz; dz <= rz && is_max; ++dz)
      for (std::ptrdiff_t dy = -r; dy <= r && is_max; ++dy)
        for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
          if (dz == 0 && dy == 0 && dx == 0) continue;
          const std::ptrdiff_t z = static_cast<std::ptrdiff_t>(c.slice) + dz;
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(c.row) + dy;
          const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(c.col) + dx;
          if (z < 0 || y < 0 || x < 0 || z >= depth || y >= height || x >= width) continue;
          if (map[static_cast<std::size_t>((z * height + y) * width + x)] >= v) {
            is_max = false;
            break;
          }
        }
    if (is_max) out.points.push_back(map.cell_center(i));
  }
  return out;
}

std::vector<double> default_threshold_grid(const KernelSpec& kernel, std::size_t n) {
  if (n == 0) throw std::invalid_argument("threshold grid must be nonempty");
  const double lo = 1e-4 * kernel.peak_density();
  const double hi = 0.95 * kernel.peak_density();
  if (n == 1) return {hi};
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(n - 1));
  out.back() = hi;
  return out;
}

SweepResult sweep_threshold(const std::vector<LoadedImage>& images, std::span<const double> grid,
                            double radius, SweepObjective objective, Connectivity connectivity,
                            unsigned threads) {
  if (images.empty()) throw std::invalid_argument("threshold sweep needs a nonempty validation set");
  if (grid.empty()) throw std::invalid_argument("threshold grid must be nonempty");

  struct Tally {
    std::size_t tp = 0, fp = 0, fn = 0;
    double abs_err = 0.0;
  };
  // tallies[image][threshold]
  std::vector<std::vector<Tally>> tallies(images.size(), std::vector<Tally>(grid.size()));
  parallel_for(images.size(), threads, [&](std::size_t i) {
    const LoadedImage& img = images[i];
    for (std::size_t t = 0; t < grid.size(); ++t) {
      const CcatResult r = cca_t(img.pred, grid[t], connectivity);
      const Matching m = match_points(r.centers, img.gt, radius);
      tallies[i][t] = {m.tp(), m.fp(), m.fn(),
                       std::abs(static_cast<double>(r.count) - static_cast<double>(img.gt.size()))};
    }
  });

  SweepResult out;
  for (std::size_t t = 0; t < grid.size(); ++t) {
    Tally sum;
    for (const auto& per_image : tallies) {
      sum.tp += per_image[t].tp;
      sum.fp += per_image[t].fp;
      sum.fn += per_image[t].fn;
      sum.abs_err += per_image[t].abs_err;
    }
    SweepPoint p;
    p.threshold = grid[t];
    p.precision = precision(sum.tp, sum.fp);
    p.recall = recall(sum.tp, sum.fn);
    p.f1 = f_measure(p.precision, p.recall);
    p.mae = sum.abs_err / static_cast<double>(images.size());
    out.points.push_back(p);
  }

  const SweepPoint* best = nullptr;
  for (const auto& p : out.points) {
    if (best == nullptr) {
      best = &p;
      continue;
    }
    const bool better_score = objective == SweepObjective::f1 ? p.f1 > best->f1 : p.mae < best->mae;
    const bool tie = objective == SweepObjective::f1 ? p.f1 == best->f1 : p.mae == best->mae;
    if (better_score || (tie && p.threshold < best->threshold)) best = &p;
  }
  out.best = *best;
  out.best_threshold = best->threshold;
  return out;
}

SweepResult sweep_threshold(const DatasetManifest& manifest, const KernelSpec& kernel,
                            std::span<const double> grid, double radius, SweepObjective objective,
                            Connectivity connectivity, unsigned threads) {
  if (manifest.empty()) throw std::invalid_argument("threshold sweep needs a nonempty manifest");
  const auto images = load_images(manifest, threads);
  if (images.front().pred.ndim() != kernel.ndim())
    throw std::invalid_argument("manifest maps and kernel disagree on dimensionality");
  return sweep_threshold(images, grid, radius, objective, connectivity, threads);
}

}  // namespace dmc
