#include "dmc/counting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dmc/gaussian.hpp"

namespace dmc {
namespace {

constexpr double kCandidateFloor = 1e-4;
constexpr double kCandidateCeiling = 0.95;
constexpr double kMinReliableSigma = 1.5;

// A component holding k kernels covers at most k superlevel balls; allow a
// factor of two plus one cell neighborhood of discretization slack.
bool area_plausible(std::size_t cells, std::int64_t rounded, double ball_volume, int ndim) {
  const double slack = ndim == 3 ? 27.0 : 9.0;
  const double k = static_cast<double>(std::max<std::int64_t>(1, rounded));
  return static_cast<double>(cells) <= 2.0 * k * ball_volume + slack;
}

}  // namespace

std::int64_t round_count(double normalized_count) {
  if (!(normalized_count > 0.0)) return 0;
  return static_cast<std::int64_t>(std::floor(normalized_count + 0.5));
}

std::vector<double> candidate_thresholds(const DensityMap& map, const KernelSpec& kernel,
                                         std::size_t n_candidates) {
  if (n_candidates == 0) throw std::invalid_argument("need at least one threshold candidate");
  float min_positive = std::numeric_limits<float>::infinity();
  for (float v : map.values())
    if (v > 0.0f) min_positive = std::min(min_positive, v);
  if (!std::isfinite(min_positive)) return {};

  const double peak = kernel.peak_density();
  const double hi = kCandidateCeiling * peak;
  const double lo = std::max(kCandidateFloor * peak, static_cast<double>(min_positive));
  if (lo >= hi || n_candidates == 1) return {hi};
  std::vector<double> out(n_candidates);
  const double ratio = std::log(hi / lo);
  for (std::size_t i = 0; i < n_candidates; ++i)
    out[i] = lo * std::exp(ratio * static_cast<double>(i) / static_cast<double>(n_candidates - 1));
  out.front() = lo;
  out.back() = hi;
  return out;
}

double threshold_objective(std::span<const double> normalized_counts) {
  double deviation = 0.0;
  std::size_t counted = 0;
  for (double c : normalized_counts) {
    const std::int64_t r = round_count(c);
    deviation += std::abs(c - static_cast<double>(r));
    if (r >= 1) ++counted;
  }
  return deviation / static_cast<double>(std::max<std::size_t>(1, counted));
}

std::vector<ComponentRecord> component_counts(const ComponentLabeling& labeling,
                                              const KernelSpec& kernel) {
  const double r_t = mahalanobis_radius_for_threshold(labeling.threshold, kernel);
  const double f = mass_within_radius(r_t, kernel.ndim());
  std::vector<ComponentRecord> out;
  out.reserve(labeling.n_components());
  for (const ComponentInfo& info : labeling.components) {
    ComponentRecord rec;
    rec.id = info.id;
    rec.raw_mass = info.raw_mass;
    rec.f_of_rt = f;
    rec.normalized_count = info.raw_mass / f;
    rec.rounded_count = round_count(rec.normalized_count);
    out.push_back(rec);
  }
  return out;
}

std::vector<ComponentRecord> component_counts(const DensityMap& map, double threshold,
                                              const KernelSpec& kernel,
                                              Connectivity connectivity) {
  // Validate the threshold before labeling.
  mahalanobis_radius_for_threshold(threshold, kernel);
  return component_counts(label_components(map, threshold, connectivity), kernel);
}

ThresholdSelection auto_threshold(const DensityMap& map, const KernelSpec& kernel,
                                  const DmaOptions& options) {
  if (map.ndim() != kernel.ndim())
    throw std::invalid_argument("map and kernel disagree on dimensionality");
  ThresholdSelection sel;
  const std::vector<double> thresholds = candidate_thresholds(map, kernel, options.n_candidates);
  if (thresholds.empty()) return sel;

  const auto levels = superlevel_components(map, thresholds, options.connectivity);
  // Above the sampled peak of a counted component that object is gone, and
  // J no longer sees it.
  double vanish = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    const double f = mass_within_radius(mahalanobis_radius_for_threshold(thresholds[i], kernel),
                                        kernel.ndim());
    for (const ComponentSummary& s : levels[i])
      if (round_count(s.mass / f) >= 1) vanish = std::min(vanish, static_cast<double>(s.peak));
  }
  std::vector<double> counts;
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    const double r_t = mahalanobis_radius_for_threshold(thresholds[i], kernel);
    const double f = mass_within_radius(r_t, kernel.ndim());
    const double ball = mahalanobis_ball_volume(r_t, kernel);
    ThresholdCandidate cand;
    cand.threshold = thresholds[i];
    cand.n_components = levels[i].size();
    counts.clear();
    for (const ComponentSummary& s : levels[i]) {
      const double c = s.mass / f;
      const std::int64_t r = round_count(c);
      counts.push_back(c);
      cand.total_count += r;
      if (options.area_check && !area_plausible(s.cell_count, r, ball, kernel.ndim()))
        cand.admissible = false;
    }
    if (cand.threshold >= vanish) cand.admissible = false;
    cand.objective = threshold_objective(counts);
    sel.candidates.push_back(cand);
  }

  const bool any_admissible = std::any_of(sel.candidates.begin(), sel.candidates.end(),
                                          [](const auto& c) { return c.admissible; });
  const ThresholdCandidate* best = nullptr;
  for (const auto& c : sel.candidates) {
    if (any_admissible && !c.admissible) continue;
    // Ascending order, so strict comparison keeps the smaller T on ties.
    if (best == nullptr || c.objective < best->objective) best = &c;
  }
  sel.chosen_t = best->threshold;
  sel.objective = best->objective;
  return sel;
}

CountResult count_dma(const DensityMap& map, const KernelSpec& kernel, const DmaOptions& options) {
  CountResult result;
  if (kernel.min_axis_stddev() < kMinReliableSigma)
    result.warnings.push_back("kernel sigma below 1.5 px; mass normalization is less accurate");
  result.selection = auto_threshold(map, kernel, options);
  if (result.selection.empty()) {
    result.labeling = label_components(map, 0.0, options.connectivity);
    return result;
  }
  result.labeling = label_components(map, result.selection.chosen_t, options.connectivity);
  result.records = component_counts(result.labeling, kernel);
  for (const auto& rec : result.records) result.total_count += rec.rounded_count;
  return result;
}

}  // namespace dmc
