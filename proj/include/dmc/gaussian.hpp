// Closed-form Gaussian kernel machinery.
#pragma once

#include <span>
#include <vector>

#include "dmc/grid.hpp"

namespace dmc {

/// Kernels are evaluated only within this Mahalanobis radius of their center.
inline constexpr double kRenderTruncation = 5.0;

double gaussian_density(const Point& x, const Point& mu, const KernelSpec& kernel);

/// Sum of unit-mass kernels centered on `points`, sampled at cell centers.
DensityMap render_density_map(const PointSet& points, const KernelSpec& kernel,
                              const std::vector<std::size_t>& dims);

/// Same, with a per-point mass multiplier. `weights` must match `points`.
DensityMap render_density_map(const PointSet& points, std::span<const double> weights,
                              const KernelSpec& kernel, const std::vector<std::size_t>& dims);

/// Mahalanobis distance at which a unit kernel's density equals `threshold`.
/// Requires 0 < threshold < peak_density().
double mahalanobis_radius_for_threshold(double threshold, const KernelSpec& kernel);

/// Probability mass of a d-dimensional Gaussian inside Mahalanobis radius r,
/// i.e. the chi-square CDF with d degrees of freedom at r^2.
double mass_within_radius(double r, int ndim);

/// Volume (cells) of the Mahalanobis ball of radius r.
double mahalanobis_ball_volume(double r, const KernelSpec& kernel);

}  // namespace dmc
