#include <doctest.h>

#include <cmath>
#include <random>

#include "dmc/baselines.hpp"
#include "dmc/evaluation.hpp"
#include "dmc/gaussian.hpp"
#include "dmc/synthesis.hpp"

using namespace dmc;

namespace {

const KernelSpec kK = KernelSpec::isotropic(2, 2.0);

DensityMap pair_map(double sep) {
  return render_density_map({2, {{20.0, 20.0, 0.0}, {20.0 + sep, 20.0, 0.0}}}, kK, {40, 72});
}

// Smallest density along the segment between two kernel centers, sampled
// finely from the continuous mixture.
double min_on_segment(double sep) {
  double lo = 1e300;
  for (int i = 0; i <= 1000; ++i) {
    const double x = sep * i / 1000.0;
    const double v = gaussian_density({x, 0, 0}, {0, 0, 0}, kK) +
                     gaussian_density({x, 0, 0}, {sep, 0, 0}, kK);
    lo = std::min(lo, v);
  }
  return lo;
}

std::vector<LoadedImage> separated_set(int n, std::uint64_t seed) {
  SceneConfig cfg;
  cfg.dims = {96, 96};
  cfg.count_mean = 12;
  cfg.count_stddev = 0;
  cfg.overlap_min = cfg.overlap_max = 0.0;
  std::vector<LoadedImage> out;
  for (int i = 0; i < n; ++i) {
    const Scene s = generate_scene(cfg, kK, seed + static_cast<std::uint64_t>(i));
    out.push_back({"img" + std::to_string(i), s.points, render_density_map(s.points, kK, cfg.dims)});
  }
  return out;
}

}  // namespace

TEST_CASE("integration of the density map") {
  CHECK(count_iodm(DensityMap({8, 8})) == 0.0);
  CHECK(count_iodm(render_density_map({2, {{16.0, 16.0, 0.0}}}, kK, {32, 32})) ==
        doctest::Approx(1.0).epsilon(1e-3));

  SceneConfig cfg;
  cfg.count_mean = 50;
  cfg.count_stddev = 0;
  const Scene s = generate_scene(cfg, kK, 1);
  const DensityMap m = render_density_map(s.points, kK, cfg.dims);
  CHECK(std::abs(count_iodm(m) - 50.0) <= 0.05);

  std::vector<float> v(m.values().begin(), m.values().end());
  for (float& x : v) x *= 4.0f;
  CHECK(count_iodm(DensityMap(m.dims(), v)) == 4.0 * count_iodm(m));
}

TEST_CASE("thresholded component counting") {
  const double half = 0.5 * kK.peak_density();
  const CcatResult far = cca_t(pair_map(40.0), half);
  CHECK(far.count == 2);
  REQUIRE(far.centers.size() == 2);
  CHECK(far.centers.points[0][0] == doctest::Approx(20.0).epsilon(1e-3));
  CHECK(far.centers.points[1][0] == doctest::Approx(60.0).epsilon(1e-3));

  // The valley between kernels 5 px apart stays above half-max.
  CHECK(min_on_segment(5.0) > half);
  CHECK(cca_t(pair_map(5.0), half).count == 1);
  CHECK(cca_t(DensityMap({8, 8}), half).count == 0);

  std::mt19937_64 g(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<float> v(30 * 30);
    for (float& x : v) x = static_cast<float>(u(g));
    const DensityMap m({30, 30}, v);
    for (double t : {0.3, 0.6, 0.9}) {
      const CcatResult r = cca_t(m, t);
      CHECK(r.count == label_components(m, t).n_components());
      CHECK(r.centers.size() == r.count);
    }
  }
}

TEST_CASE("local maxima") {
  const DensityMap one = render_density_map({2, {{15.3, 14.8, 0.0}}}, kK, {32, 32});
  const PointSet p = local_maxima(one, 0.0);
  REQUIRE(p.size() == 1);
  CHECK(p.points[0] == Point{15.0, 15.0, 0.0});

  CHECK(local_maxima(pair_map(5.0), 0.0).size() <= 2);
  CHECK(local_maxima(pair_map(9.0), 0.0).size() == 2);
  CHECK(local_maxima(DensityMap({8, 8}, std::vector<float>(64, 0.3f)), 0.0).empty());
  CHECK(local_maxima(pair_map(9.0), 0.0, 6).size() == 2);
  CHECK(local_maxima(pair_map(9.0), 0.0, 10).size() <= 1);
  CHECK_THROWS(local_maxima(one, 0.0, 0));

  SceneConfig cfg;
  cfg.count_mean = 40;
  cfg.count_stddev = 0;
  cfg.overlap_min = cfg.overlap_max = 0.0;
  const Scene s = generate_scene(cfg, kK, 4);
  CHECK(local_maxima(render_density_map(s.points, kK, cfg.dims), 1e-3 * kK.peak_density()).size() ==
        40);
}

TEST_CASE("threshold sweep") {
  const auto grid = default_threshold_grid(kK);
  REQUIRE(grid.size() == 32);
  CHECK(grid.front() == doctest::Approx(1e-4 * kK.peak_density()));
  CHECK(grid.back() == doctest::Approx(0.95 * kK.peak_density()));
  CHECK_THROWS(default_threshold_grid(kK, 0));

  const auto images = separated_set(4, 30);
  const SweepResult r = sweep_threshold(images, grid, 5.0);
  REQUIRE(r.points.size() == grid.size());
  CHECK(r.best.f1 == 1.0);
  // Smallest threshold on the perfect plateau.
  for (const auto& p : r.points) {
    if (p.threshold < r.best_threshold) CHECK(p.f1 < 1.0);
  }
  std::size_t plateau = 0;
  for (const auto& p : r.points) plateau += p.f1 == 1.0;
  CHECK(plateau >= 10);

  const SweepResult single = sweep_threshold({images[0]}, grid, 5.0, SweepObjective::mae);
  CHECK(single.best.mae == 0.0);
  CHECK(sweep_threshold(images, grid, 5.0, SweepObjective::f1, Connectivity::full, 4).best_threshold ==
        r.best_threshold);

  CHECK_THROWS(sweep_threshold(std::vector<LoadedImage>{}, grid, 5.0));
  CHECK_THROWS(sweep_threshold(images, std::vector<double>{}, 5.0));
}
