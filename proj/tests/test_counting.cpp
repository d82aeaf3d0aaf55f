#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dmc/components.hpp"
#include "dmc/counting.hpp"
#include "dmc/gaussian.hpp"
#include "dmc/synthesis.hpp"
#include "oracles.hpp"

using namespace dmc;

namespace {

DensityMap scaled(const DensityMap& m, float s) {
  std::vector<float> v(m.values().begin(), m.values().end());
  for (float& x : v) x *= s;
  return DensityMap(m.dims(), std::move(v));
}

}  // namespace

TEST_CASE("rounding rule") {
  CHECK(round_count(0.31) == 0);
  CHECK(round_count(0.4999) == 0);
  CHECK(round_count(0.5) == 1);
  CHECK(round_count(1.2) == 1);
  CHECK(round_count(1.4999) == 1);
  CHECK(round_count(1.5) == 2);
  CHECK(round_count(2.5) == 3);
  CHECK(round_count(-0.7) == 0);
  CHECK(round_count(0.0) == 0);
}

TEST_CASE("threshold objective") {
  const double exact[] = {1.0, 2.0, 3.0};
  CHECK(threshold_objective(exact) == 0.0);
  // Sub-half components add their whole mass; only counted components
  // enter the denominator.
  const double mixed[] = {1.2, 0.3};
  CHECK(threshold_objective(mixed) == doctest::Approx(0.5));
  const double pair[] = {1.1, 1.9};
  CHECK(threshold_objective(pair) == doctest::Approx(0.1));
  const double noise[] = {0.2, 0.1};
  CHECK(threshold_objective(noise) == doctest::Approx(0.3));
  CHECK(threshold_objective(std::span<const double>{}) == 0.0);
}

TEST_CASE("candidate thresholds") {
  const KernelSpec k = KernelSpec::isotropic(2, 2.0);
  const DensityMap m = render_density_map({2, {{16.0, 16.0, 0.0}}}, k, {32, 32});
  const auto c = candidate_thresholds(m, k, 48);
  REQUIRE(c.size() == 48);
  CHECK(c.front() == doctest::Approx(1e-4 * k.peak_density()));
  CHECK(c.back() == doctest::Approx(0.95 * k.peak_density()));
  for (std::size_t i = 1; i < c.size(); ++i) {
    CHECK(c[i] > c[i - 1]);
    CHECK(c[i] < k.peak_density());
    CHECK(c[i] / c[i - 1] == doctest::Approx(c[1] / c[0]).epsilon(1e-9));
  }
  CHECK(candidate_thresholds(DensityMap({4, 4}), k, 48).empty());
  CHECK_THROWS(candidate_thresholds(m, k, 0));

  // A floor above 1e-4 * peak comes from the smallest positive value.
  std::vector<float> v(16, 0.0f);
  v[3] = 0.01f;
  v[4] = 0.02f;
  const auto f = candidate_thresholds(DensityMap({4, 4}, v), k, 8);
  CHECK(f.front() == doctest::Approx(0.01));
}

TEST_CASE("component counts of isolated and merged kernels") {
  const KernelSpec k = KernelSpec::isotropic(2, 2.0);
  const DensityMap one = render_density_map({2, {{20.3, 19.6, 0.0}}}, k, {40, 40});
  for (double f : {1e-3, 0.01, 0.05, 0.2}) {
    const auto rec = component_counts(one, f * k.peak_density(), k);
    REQUIRE(rec.size() == 1);
    CHECK(rec[0].normalized_count == doctest::Approx(1.0).epsilon(0.02));
    CHECK(rec[0].rounded_count == 1);
  }

  const DensityMap pair =
      render_density_map({2, {{18.0, 20.0, 0.0}, {23.0, 20.0, 0.0}}}, k, {40, 40});
  const double t = 0.2 * k.peak_density();
  const auto rec = component_counts(pair, t, k);
  REQUIRE(rec.size() == 1);
  const double f = mass_within_radius(oracle::bisect_radius(t, k.peak_density()), 2);
  const double brute = oracle::mass_above(pair, t) / f;
  CHECK(rec[0].normalized_count == doctest::Approx(brute).epsilon(1e-9));
  CHECK(std::abs(rec[0].normalized_count - 2.0) <= 0.15);
  CHECK(rec[0].rounded_count == 2);
  CHECK(rec[0].f_of_rt == doctest::Approx(f).epsilon(1e-9));

  CHECK_THROWS(component_counts(pair, k.peak_density(), k));
}

TEST_CASE("scale covariance and additivity") {
  const KernelSpec k = KernelSpec::isotropic(2, 2.0);
  const DensityMap a = render_density_map({2, {{10.0, 12.0, 0.0}}}, k, {24, 64});
  const DensityMap b = render_density_map({2, {{50.0, 12.0, 0.0}, {53.0, 11.0, 0.0}}}, k, {24, 64});
  const double t = 0.05 * k.peak_density();

  const auto base = component_counts(a, t, k);
  const auto twice = component_counts(scaled(a, 2.0f), 2.0 * t, k);
  REQUIRE(base.size() == twice.size());
  for (std::size_t i = 0; i < base.size(); ++i)
    CHECK(twice[i].raw_mass == 2.0 * base[i].raw_mass);
  const auto same_t = component_counts(scaled(a, 2.0f), t, k);
  CHECK(same_t[0].rounded_count == 2);

  std::vector<float> sum(a.size());
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = a[i] + b[i];
  const DensityMap ab(a.dims(), sum);
  std::int64_t ta = 0, tb = 0, tab = 0;
  for (const auto& r : component_counts(a, t, k)) ta += r.rounded_count;
  for (const auto& r : component_counts(b, t, k)) tb += r.rounded_count;
  for (const auto& r : component_counts(ab, t, k)) tab += r.rounded_count;
  CHECK(ta == 1);
  CHECK(tb == 2);
  CHECK(tab == ta + tb);
}

TEST_CASE("automatic threshold") {
  const KernelSpec k = KernelSpec::isotropic(2, 2.0);

  SUBCASE("all-zero map") {
    const CountResult r = count_dma(DensityMap({16, 16}), k);
    CHECK(r.selection.empty());
    CHECK(r.total_count == 0);
    CHECK(r.records.empty());
  }

  SUBCASE("scaled single kernel still counts one") {
    const DensityMap m = scaled(render_density_map({2, {{16.0, 16.0, 0.0}}}, k, {32, 32}), 1.2f);
    CHECK(count_dma(m, k).total_count == 1);
  }

  SUBCASE("separated clean scene") {
    SceneConfig cfg;
    cfg.count_mean = 50;
    cfg.count_stddev = 0;
    cfg.overlap_min = cfg.overlap_max = 0.0;
    const Scene s = generate_scene(cfg, k, 17);
    REQUIRE(s.points.size() == 50);
    const DensityMap m = render_density_map(s.points, k, cfg.dims);
    const CountResult r = count_dma(m, k);
    CHECK(r.total_count == 50);
    std::int64_t sum = 0;
    for (const auto& rec : r.records) sum += rec.rounded_count;
    CHECK(sum == r.total_count);
    CHECK(r.selection.candidates.size() == 48);
    // The chosen threshold is the smallest candidate with minimal objective.
    for (const auto& c : r.selection.candidates) {
      CHECK(c.threshold < k.peak_density());
      if (c.threshold < r.selection.chosen_t && c.admissible)
        CHECK(c.objective > r.selection.objective);
      if (c.admissible) CHECK(c.objective >= r.selection.objective);
    }
    // Low thresholds keep every component at an integer count (neighbors
    // exactly 8 sigma apart may share a component at the lowest candidates).
    for (const auto& c : r.selection.candidates) {
      if (c.threshold > 1e-3 * k.peak_density()) break;
      for (const auto& rec : component_counts(m, c.threshold, k))
        CHECK(std::abs(rec.normalized_count - static_cast<double>(rec.rounded_count)) <= 0.02);
    }
  }

  SUBCASE("noise bumps are rounded away") {
    PointSet p{2, {{20.0, 20.0, 0.0}}};
    const double w[] = {1.0};
    DensityMap m = render_density_map(p, w, k, {40, 60});
    const KernelSpec bump = KernelSpec::isotropic(2, 1.4);
    const DensityMap b = render_density_map({2, {{45.0, 20.0, 0.0}}}, bump, {40, 60});
    std::vector<float> v(m.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = m[i] + 0.3f * b[i];
    const CountResult r = count_dma(DensityMap(m.dims(), v), k);
    CHECK(r.total_count == 1);
  }

  SUBCASE("low sigma warns") {
    const KernelSpec small = KernelSpec::isotropic(2, 1.0);
    const DensityMap m = render_density_map({2, {{8.0, 8.0, 0.0}}}, small, {16, 16});
    const CountResult r = count_dma(m, small);
    CHECK(r.warnings.size() == 1);
    CHECK(count_dma(render_density_map({2, {{8.0, 8.0, 0.0}}}, k, {16, 16}), k).warnings.empty());
  }

  CHECK_THROWS(count_dma(DensityMap({4, 4, 4}), k));
}

TEST_CASE("3D counting") {
  const double sd[] = {2.0, 2.0, 1.0};
  const KernelSpec k = KernelSpec::diagonal(sd);
  const PointSet p{3, {{10.0, 10.0, 8.0}, {30.0, 12.0, 6.0}, {33.5, 12.0, 6.0}}};
  const DensityMap m = render_density_map(p, k, {16, 24, 44});
  CHECK(count_dma(m, k).total_count == 3);
  CHECK(count_dma(m, k, {.connectivity = Connectivity::face}).total_count == 3);
}

TEST_CASE("objects sampled below the candidate ceiling are not dropped") {
  const double sd[] = {2.0, 2.0, 1.0};
  const KernelSpec k = KernelSpec::diagonal(sd);
  // Half a cell off the lattice in z: the sampled maximum is exp(-1/8) of the peak.
  const PointSet p{3, {{12.0, 12.0, 8.5}}};
  const DensityMap m = render_density_map(p, k, {16, 24, 24});
  const float top = *std::max_element(m.values().begin(), m.values().end());
  REQUIRE(top < 0.95 * k.peak_density());

  const CountResult r = count_dma(m, k);
  CHECK(r.total_count == 1);
  CHECK(r.selection.chosen_t < top);
  for (const auto& c : r.selection.candidates)
    if (c.threshold >= top) CHECK_FALSE(c.admissible);

  const auto levels = superlevel_components(m, std::vector<double>{0.5 * top}, Connectivity::full);
  REQUIRE(levels[0].size() == 1);
  CHECK(levels[0][0].peak == top);
}
