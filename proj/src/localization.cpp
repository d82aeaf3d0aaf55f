#include "dmc/localization.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "dmc/rng.hpp"

namespace dmc {
namespace {

Point center_of(std::size_t flat, const std::vector<std::size_t>& dims) {
  const std::size_t width = dims.back();
  const std::size_t height = dims[dims.size() - 2];
  const std::size_t col = flat % width;
  const std::size_t row = (flat / width) % height;
  const std::size_t slice = flat / (width * height);
  return {static_cast<double>(col), static_cast<double>(row), static_cast<double>(slice)};
}

double shift_distance(const Point& a, const Point& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) +
                   (a[2] - b[2]) * (a[2] - b[2]));
}

// Index of the sample with the largest Mahalanobis distance to its nearest
// mean (first such sample on ties).
std::size_t farthest_sample(std::span<const Point> samples, std::span<const Point> means,
                            const KernelSpec& kernel) {
  std::size_t best = 0;
  double best_d = -1.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double d = std::numeric_limits<double>::infinity();
    for (const Point& m : means) d = std::min(d, kernel.mahalanobis_squared(samples[i], m));
    if (means.empty()) d = 0.0;
    if (d > best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}


// Terms more than this many nats below the best one are dropped from the
// E-step; exp(-60) is far below double rounding of a sum that is >= 1.
constexpr double kPruneNats = 60.0;
// Below this many components the E-step visits every mean.
constexpr std::size_t kGridMinComponents = 16;

// Uniform bins over the sample bounding box holding mean indices.
class MeanGrid {
 public:
  MeanGrid(std::span<const Point> samples, double bin) : bin_(bin) {
    Point hi{0.0, 0.0, 0.0};
    lo_ = samples.front();
    hi = samples.front();
    for (const Point& s : samples)
      for (int a = 0; a < 3; ++a) {
        lo_[a] = std::min(lo_[a], s[a]);
        hi[a] = std::max(hi[a], s[a]);
      }
    for (int a = 0; a < 3; ++a)
      n_[a] = static_cast<std::ptrdiff_t>(std::floor((hi[a] - lo_[a]) / bin_)) + 1;
  }

  void build(std::span<const Point> means) {
    const std::size_t total = static_cast<std::size_t>(n_[0] * n_[1] * n_[2]);
    start_.assign(total + 1, 0);
    std::vector<std::size_t> slot(means.size());
    for (std::size_t j = 0; j < means.size(); ++j) {
      slot[j] = flat(bin_of(means[j]));
      ++start_[slot[j] + 1];
    }
    for (std::size_t b = 0; b < total; ++b) start_[b + 1] += start_[b];
    items_.assign(means.size(), 0);
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (std::size_t j = 0; j < means.size(); ++j) items_[fill[slot[j]]++] = j;
  }

  std::array<std::ptrdiff_t, 3> bin_of(const Point& p) const {
    std::array<std::ptrdiff_t, 3> b{};
    for (int a = 0; a < 3; ++a)
      b[a] = std::clamp<std::ptrdiff_t>(
          static_cast<std::ptrdiff_t>(std::floor((p[a] - lo_[a]) / bin_)), 0, n_[a] - 1);
    return b;
  }

  double bin() const { return bin_; }

  // Calls fn(j) for every mean in bins at Chebyshev distance in [r0, r1] of b.
  template <class Fn>
  void visit_ring(const std::array<std::ptrdiff_t, 3>& b, std::ptrdiff_t r0, std::ptrdiff_t r1,
                  Fn&& fn) const {
    for (std::ptrdiff_t z = std::max<std::ptrdiff_t>(0, b[2] - r1);
         z <= std::min(n_[2] - 1, b[2] + r1); ++z)
      for (std::ptrdiff_t y = std::max<std::ptrdiff_t>(0, b[1] - r1);
           y <= std::min(n_[1] - 1, b[1] + r1); ++y)
        for (std::ptrdiff_t x = std::max<std::ptrdiff_t>(0, b[0] - r1);
             x <= std::min(n_[0] - 1, b[0] + r1); ++x) {
          const std::ptrdiff_t c =
              std::max({std::abs(x - b[0]), std::abs(y - b[1]), std::abs(z - b[2])});
          if (c < r0) continue;
          const std::size_t f = flat({x, y, z});
          for (std::size_t i = start_[f]; i < start_[f + 1]; ++i) fn(items_[i]);
        }
  }

  std::ptrdiff_t max_ring() const { return std::max({n_[0], n_[1], n_[2]}); }

 private:
  std::size_t flat(const std::array<std::ptrdiff_t, 3>& b) const {
    return static_cast<std::size_t>((b[2] * n_[1] + b[1]) * n_[0] + b[0]);
  }

  double bin_;
  Point lo_{};
  std::array<std::ptrdiff_t, 3> n_{};
  std::vector<std::size_t> start_;
  std::vector<std::size_t> items_;
};

}  // namespace

Point ComponentDistribution::mean() const {
  Point m{0.0, 0.0, 0.0};
  for (const auto& c : cells) {
    const Point p = center_of(c.cell, dims);
    for (int a = 0; a < 3; ++a) m[a] += c.p * p[a];
  }
  return m;
}

ComponentDistribution normalize_component(const DensityMap& map,
                                          const ComponentLabeling& labeling, std::uint32_t id) {
  const ComponentInfo& info = labeling.component(id);
  if (!(info.raw_mass > 0.0))
    throw std::invalid_argument("component " + std::to_string(id) + " has zero mass");
  ComponentDistribution dist;
  dist.id = id;
  dist.dims = map.dims();
  for (std::size_t cell : labeling.cells(id))
    dist.cells.push_back({cell, static_cast<double>(map[cell]) / info.raw_mass});
  return dist;
}

std::vector<Point> sample_component(const ComponentDistribution& dist, std::size_t n,
                                    std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("sample count must be positive");
  if (dist.cells.empty()) throw std::invalid_argument("cannot sample an empty component");
  std::vector<double> cdf(dist.cells.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < dist.cells.size(); ++i) {
    acc += dist.cells[i].p;
    cdf[i] = acc;
  }
  const bool is3d = dist.ndim() == 3;
  Rng rng(seed);
  std::vector<Point> out(n);
  for (Point& p : out) {
    const double u = rng.uniform() * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.end()) --it;
    p = center_of(dist.cells[static_cast<std::size_t>(it - cdf.begin())].cell, dist.dims);
    p[0] += rng.uniform() - 0.5;
    p[1] += rng.uniform() - 0.5;
    if (is3d) p[2] += rng.uniform() - 0.5;
  }
  return out;
}

GmmFit fit_gmm_fixed_cov(std::span<const Point> samples, std::size_t k, const KernelSpec& kernel,
                         const GmmOptions& options, std::span<const Point> init) {
  if (k == 0) throw std::invalid_argument("mixture needs at least one component");
  if (samples.size() < k)
    throw std::invalid_argument("mixture of " + std::to_string(k) + " components needs at least " +
                                std::to_string(k) + " samples, got " +
                                std::to_string(samples.size()));
  const std::size_t n = samples.size();
  const int d = kernel.ndim();

  GmmFit fit;
  fit.k = k;
  fit.means.assign(init.begin(), init.begin() + static_cast<std::ptrdiff_t>(std::min(k, init.size())));
  while (fit.means.size() < k) {
    if (fit.means.empty()) {
      Point c{0.0, 0.0, 0.0};
      for (const Point& s : samples)
        for (int a = 0; a < 3; ++a) c[a] += s[a];
      for (double& v : c) v /= static_cast<double>(n);
      const std::array<Point, 1> centroid{c};
      // Seed with the sample closest to the centroid.
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        const double dd = kernel.mahalanobis_squared(samples[i], centroid[0]);
        if (dd < best_d) {
          best_d = dd;
          best = i;
        }
      }
      fit.means.push_back(samples[best]);
    } else {
      fit.means.push_back(samples[farthest_sample(samples, fit.means, kernel)]);
    }
  }
  fit.weights.assign(k, 1.0 / static_cast<double>(k));

  const double log_norm = -0.5 * d * std::log(2.0 * std::numbers::pi) -
                          0.5 * std::log(kernel.determinant());
  std::vector<double> logp;
  std::vector<std::size_t> cand;
  std::vector<Point> weighted(k);
  std::vector<double> resp_sum(k);

  const bool use_grid = k >= kGridMinComponents;
  // Bins wide enough that the first ring usually covers the pruning radius.
  const double spread = std::sqrt(kernel.max_eigenvalue());
  MeanGrid grid(samples, 12.0 * spread);

  for (int iter = 0; iter < options.max_iters; ++iter) {
    std::vector<double> log_w(k);
    double log_w_max = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      log_w[j] = fit.weights[j] > 0.0 ? std::log(fit.weights[j])
                                      : -std::numeric_limits<double>::infinity();
      log_w_max = std::max(log_w_max, log_w[j]);
    }
    if (use_grid) grid.build(fit.means);
    std::fill(resp_sum.begin(), resp_sum.end(), 0.0);
    std::fill(weighted.begin(), weighted.end(), Point{0.0, 0.0, 0.0});
    double ll = 0.0;
    for (const Point& x : samples) {
      cand.clear();
      logp.clear();
      double mx = -std::numeric_limits<double>::infinity();
      auto add = [&](std::size_t j) {
        const double v = log_w[j] - 0.5 * kernel.mahalanobis_squared(x, fit.means[j]);
        cand.push_back(j);
        logp.push_back(v);
        mx = std::max(mx, v);
      };
      if (use_grid) {
        const auto b = grid.bin_of(x);
        grid.visit_ring(b, 0, 1, add);
        std::ptrdiff_t rings = grid.max_ring();
        if (std::isfinite(mx)) {
          // Any mean outside this Euclidean radius is below mx - kPruneNats.
          const double d2 = 2.0 * (log_w_max - mx + kPruneNats);
          const double radius = std::sqrt(d2 * kernel.max_eigenvalue());
          rings = std::min<std::ptrdiff_t>(
              rings, static_cast<std::ptrdiff_t>(std::floor(radius / grid.bin())) + 1);
        }
        if (rings > 1) grid.visit_ring(b, 2, rings, add);
      } else {
        for (std::size_t j = 0; j < k; ++j) add(j);
      }
      double s = 0.0;
      for (double& v : logp) {
        const double e = v - mx;
        v = e < -745.0 ? 0.0 : std::exp(e);
        s += v;
      }
      ll += mx + std::log(s) + log_norm;
      for (std::size_t i = 0; i < cand.size(); ++i) {
        const double r = logp[i] / s;
        if (r == 0.0) continue;
        const std::size_t j = cand[i];
        resp_sum[j] += r;
        for (int a = 0; a < 3; ++a) weighted[j][a] += r * x[a];
      }
    }
#ifndef NDEBUG
    if (!fit.log_likelihood.empty() && (fit.resets.empty() || fit.resets.back() != iter - 1)) {
      const double prev = fit.log_likelihood.back();
      assert(ll >= prev - 1e-9 * std::max(1.0, std::abs(prev)));
    }
#endif
    fit.log_likelihood.push_back(ll);

    std::vector<Point> next(k);
    std::vector<std::size_t> empty;
    for (std::size_t j = 0; j < k; ++j) {
      if (resp_sum[j] <= 1e-12 * static_cast<double>(n)) {
        empty.push_back(j);
        next[j] = fit.means[j];
        continue;
      }
      for (int a = 0; a < 3; ++a) next[j][a] = weighted[j][a] / resp_sum[j];
      fit.weights[j] = resp_sum[j] / static_cast<double>(n);
    }
    if (!empty.empty()) {
      std::vector<Point> live;
      for (std::size_t j = 0; j < k; ++j)
        if (std::find(empty.begin(), empty.end(), j) == empty.end()) live.push_back(next[j]);
      for (std::size_t j : empty) {
        next[j] = samples[farthest_sample(samples, live, kernel)];
        live.push_back(next[j]);
        fit.weights[j] = 1.0 / static_cast<double>(n);
      }
      double total = 0.0;
      for (double w : fit.weights) total += w;
      for (double& w : fit.weights) w /= total;
      fit.resets.push_back(iter);
    }

    double shift = 0.0;
    for (std::size_t j = 0; j < k; ++j) shift = std::max(shift, shift_distance(next[j], fit.means[j]));
    fit.means = std::move(next);
    fit.iterations = iter + 1;
    fit.final_shift = shift;
    if (empty.empty() && shift < options.tol) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

std::vector<std::size_t> component_peaks(const DensityMap& map, const ComponentLabeling& labeling,
                                         std::uint32_t id) {
  const auto offsets = neighbor_offsets(map.ndim(), labeling.connectivity);
  const auto depth = static_cast<std::ptrdiff_t>(map.depth());
  const auto height = static_cast<std::ptrdiff_t>(map.height());
  const auto width = static_cast<std::ptrdiff_t>(map.width());
  std::vector<std::size_t> peaks;
  for (std::size_t cell : labeling.cells(id)) {
    const float v = map[cell];
    const CellIndex c = map.cell_index(cell);
    bool peak = true;
    for (const auto& o : offsets) {
      const std::ptrdiff_t nz = static_cast<std::ptrdiff_t>(c.slice) + o[0];
      const std::ptrdiff_t ny = static_cast<std::ptrdiff_t>(c.row) + o[1];
      const std::ptrdiff_t nx = static_cast<std::ptrdiff_t>(c.col) + o[2];
      if (nz < 0 || ny < 0 || nx < 0 || nz >= depth || ny >= height || nx >= width) continue;
      const auto n = static_cast<std::size_t>((nz * height + ny) * width + nx);
      // Plateaus keep only their first cell in raster order.
      if (map[n] > v || (map[n] == v && n < cell)) {
        peak = false;
        break;
      }
    }
    if (peak) peaks.push_back(cell);
  }
  std::stable_sort(peaks.begin(), peaks.end(),
                   [&](std::size_t a, std::size_t b) { return map[a] > map[b]; });
  return peaks;
}

std::vector<Point> localize_component(const DensityMap& map, const ComponentLabeling& labeling,
                                      std::uint32_t id, std::int64_t rounded_count,
                                      const KernelSpec& kernel, std::uint64_t seed,
                                      const DmaOptions& options) {
  if (rounded_count < 0) throw std::invalid_argument("object count must be nonnegative");
  if (rounded_count == 0) return {};
  const ComponentDistribution dist = normalize_component(map, labeling, id);
  if (rounded_count == 1) return {dist.mean()};

  const auto k = static_cast<std::size_t>(rounded_count);
  std::vector<Point> init;
  for (std::size_t cell : component_peaks(map, labeling, id)) {
    if (init.size() == k) break;
    init.push_back(map.cell_center(cell));
  }
  const std::vector<Point> samples =
      sample_component(dist, k * std::max<std::size_t>(1, options.samples_per_object), seed);
  const GmmFit fit =
      fit_gmm_fixed_cov(samples, k, kernel, {options.max_iters, options.tol}, init);
  return fit.means;
}

DmaAnalysis analyze_dma(const DensityMap& map, const KernelSpec& kernel, std::uint64_t seed,
                        const DmaOptions& options) {
  DmaAnalysis out;
  out.count = count_dma(map, kernel, options);
  out.centers.ndim = map.ndim();
  for (const ComponentRecord& rec : out.count.records) {
    const auto centers = localize_component(map, out.count.labeling, rec.id, rec.rounded_count,
                                            kernel, seed ^ rec.id, options);
    out.centers.points.insert(out.centers.points.end(), centers.begin(), centers.end());
  }
  return out;
}

}  // namespace dmc
