#include "dmc/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace dmc {

double gaussian_density(const Point& x, const Point& mu, const KernelSpec& kernel) {
  return kernel.peak_density() * std::exp(-0.5 * kernel.mahalanobis_squared(x, mu));
}

DensityMap render_density_map(const PointSet& points, const KernelSpec& kernel,
                              const std::vector<std::size_t>& dims) {
  const std::vector<double> ones(points.size(), 1.0);
  return render_density_map(points, ones, kernel, dims);
}

DensityMap render_density_map(const PointSet& points, std::span<const double> weights,
                              const KernelSpec& kernel, const std::vector<std::size_t>& dims) {
  validate(points);
  if (points.ndim != kernel.ndim() || static_cast<std::size_t>(points.ndim) != dims.size())
    throw std::invalid_argument("points, kernel and dims disagree on dimensionality");
  if (weights.size() != points.size())
    throw std::invalid_argument("render weights must match the number of points");

  DensityMap shape(dims);
  const auto depth = static_cast<std::ptrdiff_t>(shape.depth());
  const auto height = static_cast<std::ptrdiff_t>(shape.height());
  const auto width = static_cast<std::ptrdiff_t>(shape.width());
  const bool is3d = points.ndim == 3;
  const double peak = kernel.peak_density();
  const double cutoff = kRenderTruncation * kRenderTruncation;

  // Half-extent of the truncation ellipsoid along each axis.
  const double ex = kRenderTruncation * kernel.axis_stddev(0);
  const double ey = kRenderTruncation * kernel.axis_stddev(1);
  const double ez = is3d ? kRenderTruncation * kernel.axis_stddev(2) : 0.0;

  auto clamp_range = [](double lo, double hi, std::ptrdiff_t n) {
    const auto a = static_cast<std::ptrdiff_t>(std::max(0.0, std::ceil(lo)));
    const auto b = static_cast<std::ptrdiff_t>(std::min(static_cast<double>(n - 1), std::floor(hi)));
    return std::pair{a, b};
  };

  std::vector<double> acc(shape.size(), 0.0);
  for (std::size_t j = 0; j < points.size(); ++j) {
    const Point& p = points.points[j];
    const double amp = peak * weights[j];
    if (amp == 0.0) continue;
    const auto [x0, x1] = clamp_range(p[0] - ex, p[0] + ex, width);
    const auto [y0, y1] = clamp_range(p[1] - ey, p[1] + ey, height);
    auto [z0, z1] = is3d ? clamp_range(p[2] - ez, p[2] + ez, depth) : std::pair<std::ptrdiff_t, std::ptrdiff_t>{0, 0};
    for (std::ptrdiff_t z = z0; z <= z1; ++z) {
      const double dz = is3d ? static_cast<double>(z) - p[2] : 0.0;
      for (std::ptrdiff_t y = y0; y <= y1; ++y) {
        const double dy = static_cast<double>(y) - p[1];
        double* row = acc.data() + (z * height + y) * width;
        for (std::ptrdiff_t x = x0; x <= x1; ++x) {
          const double m2 = kernel.mahalanobis_squared(static_cast<double>(x) - p[0], dy, dz);
          if (m2 <= cutoff) row[x] += amp * std::exp(-0.5 * m2);
        }
      }
    }
  }
  std::vector<float> values(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) values[i] = static_cast<float>(std::max(acc[i], 0.0));
  return DensityMap(dims, std::move(values));
}

double mahalanobis_radius_for_threshold(double threshold, const KernelSpec& kernel) {
  if (!(threshold > 0.0)) throw std::invalid_argument("threshold must be positive");
  if (!(threshold < kernel.peak_density()))
    throw std::invalid_argument("threshold above kernel peak");
  return std::sqrt(-2.0 * std::log(threshold / kernel.peak_density()));
}

double mass_within_radius(double r, int ndim) {
  if (r < 0.0 || std::isnan(r)) throw std::invalid_argument("radius must be nonnegative");
  if (std::isinf(r)) return 1.0;
  const double half_r2 = 0.5 * r * r;
  if (ndim == 2) return -std::expm1(-half_r2);
  if (ndim == 3) {
    const double v = std::erf(r / std::numbers::sqrt2) -
                     std::sqrt(2.0 / std::numbers::pi) * r * std::exp(-half_r2);
    return std::clamp(v, 0.0, 1.0);
  }
  throw std::invalid_argument("mass function defined for ndim 2 or 3, got " +
                              std::to_string(ndim));
}

double mahalanobis_ball_volume(double r, const KernelSpec& kernel) {
  const double unit = kernel.ndim() == 2 ? std::numbers::pi : 4.0 / 3.0 * std::numbers::pi;
  return unit * std::pow(r, kernel.ndim()) * std::sqrt(kernel.determinant());
}

}  // namespace dmc
