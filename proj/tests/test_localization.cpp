#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "dmc/gaussian.hpp"
#include "dmc/localization.hpp"
#include "dmc/rng.hpp"
#include "dmc/synthesis.hpp"
#include "oracles.hpp"

using namespace dmc;

namespace {

std::vector<Point> draw(const std::vector<Point>& centers, const KernelSpec& k, std::size_t per,
                        std::uint64_t seed) {
  Rng rng(seed);
  const auto l = k.cholesky();
  std::vector<Point> out;
  for (const Point& c : centers)
    for (std::size_t i = 0; i < per; ++i) {
      const double z0 = rng.normal(), z1 = rng.normal(), z2 = k.ndim() == 3 ? rng.normal() : 0.0;
      out.push_back({c[0] + l[0] * z0, c[1] + l[3] * z0 + l[4] * z1,
                     c[2] + l[6] * z0 + l[7] * z1 + l[8] * z2});
    }
  return out;
}

// Distance from each truth point to its nearest estimate.
double worst_error(const std::vector<Point>& truth, const std::vector<Point>& est) {
  double worst = 0.0;
  for (const Point& t : truth) {
    double best = 1e300;
    for (const Point& e : est) best = std::min(best, oracle::distance(t, e));
    worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace

TEST_CASE("normalize component") {
  DensityMap m({1, 4}, {0.3f, 0.1f, 0.0f, 0.2f});
  const auto lab = label_components(m, 0.0, Connectivity::face);
  REQUIRE(lab.n_components() == 2);
  const ComponentDistribution d = normalize_component(m, lab, 1);
  REQUIRE(d.cells.size() == 2);
  CHECK(d.cells[0].p == doctest::Approx(0.75).epsilon(1e-7));
  CHECK(d.cells[1].p == doctest::Approx(0.25).epsilon(1e-7));

  DensityMap u({3, 3}, std::vector<float>(9, 0.4f));
  const auto ul = label_components(u, 0.0);
  const ComponentDistribution ud = normalize_component(u, ul, 1);
  double sum = 0.0;
  for (const auto& c : ud.cells) {
    CHECK(c.p == doctest::Approx(1.0 / 9.0));
    sum += c.p;
  }
  CHECK(std::abs(sum - 1.0) < 1e-9);
  CHECK(ud.mean()[0] == doctest::Approx(1.0));

  const KernelSpec k = KernelSpec::isotropic(2, 2.0);
  const Point c{20.3, 17.8, 0.0};
  const DensityMap g = render_density_map({2, {c}}, k, {40, 40});
  const auto gl = label_components(g, 1e-3 * k.peak_density());
  const Point mean = normalize_component(g, gl, 1).mean();
  CHECK(oracle::distance(mean, c) < 0.05);
}

TEST_CASE("component sampling") {
  DensityMap m({3, 3}, {0, 0, 0, 0, 1.0f, 0, 0, 0, 0});
  const auto lab = label_components(m, 0.0);
  const auto d = normalize_component(m, lab, 1);
  for (const Point& p : sample_component(d, 4, 123)) {
    CHECK(std::abs(p[0] - 1.0) <= 0.5);
    CHECK(std::abs(p[1] - 1.0) <= 0.5);
  }
  CHECK(sample_component(d, 50, 7) == sample_component(d, 50, 7));
  CHECK(sample_component(d, 50, 7) != sample_component(d, 50, 8));
  CHECK_THROWS(sample_component(d, 0, 1));

  const KernelSpec k = KernelSpec::isotropic(2, 2.0);
  const Point c{24.4, 23.7, 0.0};
  const DensityMap g = render_density_map({2, {c}}, k, {48, 48});
  const auto gl = label_components(g, 1e-4 * k.peak_density());
  const auto s = sample_component(normalize_component(g, gl, 1), 20000, 99);
  Point mean{0, 0, 0};
  for (const Point& p : s)
    for (int a = 0; a < 2; ++a) mean[a] += p[a] / static_cast<double>(s.size());
  CHECK(oracle::distance(mean, c) < 0.05);
  double cov[2][2] = {{0, 0}, {0, 0}};
  for (const Point& p : s)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        cov[a][b] += (p[a] - mean[a]) * (p[b] - mean[b]) / static_cast<double>(s.size());
  // Jitter adds 1/12 per axis on top of the kernel variance.
  CHECK(cov[0][0] == doctest::Approx(4.0).epsilon(0.1));
  CHECK(cov[1][1] == doctest::Approx(4.0).epsilon(0.1));
  CHECK(std::abs(cov[0][1]) < 0.4);
}

TEST_CASE("fixed covariance EM") {
  const KernelSpec k = KernelSpec::isotropic(2, 2.0);

  SUBCASE("k=1 is the centroid") {
    const auto s = draw({{10.0, 10.0, 0.0}}, k, 500, 1);
    const GmmFit fit = fit_gmm_fixed_cov(s, 1, k);
    Point c{0, 0, 0};
    for (const Point& p : s)
      for (int a = 0; a < 3; ++a) c[a] += p[a];
    for (double& v : c) v /= static_cast<double>(s.size());
    CHECK(oracle::distance(fit.means[0], c) < 1e-9);
    CHECK(fit.weights[0] == doctest::Approx(1.0));
    CHECK(fit.converged);
  }

  SUBCASE("two kernels 6 px apart") {
    const std::vector<Point> truth{{20.0, 20.0, 0.0}, {26.0, 20.0, 0.0}};
    const auto s = draw(truth, k, 5000, 2);
    const GmmFit fit = fit_gmm_fixed_cov(s, 2, k);
    CHECK(worst_error(truth, fit.means) < 0.5);
    CHECK(fit.weights[0] + fit.weights[1] == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("two kernels 3 px apart") {
    const std::vector<Point> truth{{20.0, 20.0, 0.0}, {22.0, 22.236, 0.0}};
    const auto s = draw(truth, k, 10000, 3);
    const GmmFit fit = fit_gmm_fixed_cov(s, 2, k, {}, std::vector<Point>{{19.0, 19.0, 0.0}});
    CHECK(worst_error(truth, fit.means) < 1.0);
  }

  SUBCASE("log-likelihood never decreases") {
    std::mt19937_64 g(4);
    std::uniform_real_distribution<double> u(5.0, 35.0);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<Point> truth;
      const int n = 2 + trial % 4;
      for (int i = 0; i < n; ++i) truth.push_back({u(g), u(g), 0.0});
      const auto s = draw(truth, k, 300, static_cast<std::uint64_t>(trial));
      const GmmFit fit = fit_gmm_fixed_cov(s, static_cast<std::size_t>(n), k);
      for (std::size_t i = 1; i < fit.log_likelihood.size(); ++i) {
        const double prev = fit.log_likelihood[i - 1];
        CHECK(fit.log_likelihood[i] >= prev - 1e-9 * std::max(1.0, std::abs(prev)));
      }
      double w = 0.0;
      for (double x : fit.weights) w += x;
      CHECK(std::abs(w - 1.0) < 1e-9);
    }
  }

  SUBCASE("large k uses the pruned E-step and still recovers centers") {
    std::vector<Point> truth;
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) truth.push_back({10.0 + 12.0 * i, 10.0 + 12.0 * j, 0.0});
    const auto s = draw(truth, k, 400, 5);
    std::vector<Point> init;
    for (const Point& t : truth) init.push_back({t[0] + 0.7, t[1] - 0.6, 0.0});
    const GmmFit fit = fit_gmm_fixed_cov(s, truth.size(), k, {}, init);
    CHECK(worst_error(truth, fit.means) < 0.5);
    for (std::size_t i = 1; i < fit.log_likelihood.size(); ++i)
      CHECK(fit.log_likelihood[i] >=
            fit.log_likelihood[i - 1] - 1e-9 * std::abs(fit.log_likelihood[i - 1]));
  }

  SUBCASE("empty clusters are reseeded") {
    // Two means start on top of each other far from a second blob.
    const std::vector<Point> truth{{10.0, 10.0, 0.0}, {40.0, 10.0, 0.0}};
    const auto s = draw(truth, k, 500, 6);
    const std::vector<Point> init{{10.0, 10.0, 0.0}, {-500.0, -500.0, 0.0}};
    const GmmFit fit = fit_gmm_fixed_cov(s, 2, k, {}, init);
    CHECK_FALSE(fit.resets.empty());
    CHECK(worst_error(truth, fit.means) < 0.5);
  }

  const std::vector<Point> few{{0.0, 0.0, 0.0}};
  CHECK_THROWS(fit_gmm_fixed_cov(few, 2, k));
  CHECK_THROWS(fit_gmm_fixed_cov(few, 0, k));
}

TEST_CASE("localize components") {
  const KernelSpec k = KernelSpec::isotropic(2, 2.0);
  const Point a{20.0, 20.0, 0.0}, b{25.0, 20.3, 0.0};
  const DensityMap m = render_density_map({2, {a, b}}, k, {40, 48});
  const auto lab = label_components(m, 0.05 * k.peak_density());
  REQUIRE(lab.n_components() == 1);
  CHECK(localize_component(m, lab, 1, 0, k, 1).empty());
  const auto two = localize_component(m, lab, 1, 2, k, 1);
  REQUIRE(two.size() == 2);
  CHECK(worst_error({a, b}, two) < 1.0);
  CHECK(two == localize_component(m, lab, 1, 2, k, 1));
  CHECK_THROWS(localize_component(m, lab, 1, -1, k, 1));

  const Point c{12.6, 30.2, 0.0};
  const DensityMap one = render_density_map({2, {c}}, k, {40, 48});
  const auto ol = label_components(one, 1e-3 * k.peak_density());
  const auto centroid = localize_component(one, ol, 1, 1, k, 1);
  REQUIRE(centroid.size() == 1);
  CHECK(oracle::distance(centroid[0], c) < 0.05);
  CHECK(oracle::distance(centroid[0], normalize_component(one, ol, 1).mean()) < 1e-9);
}

TEST_CASE("component peaks") {
  DensityMap m({1, 7}, {0.1f, 0.5f, 0.2f, 0.3f, 0.3f, 0.1f, 0.9f});
  const auto lab = label_components(m, 0.0);
  const auto p = component_peaks(m, lab, 1);
  REQUIRE(p.size() == 3);
  CHECK(p[0] == 6);
  CHECK(p[1] == 1);
  CHECK(p[2] == 3);
}

TEST_CASE("analysis returns one center per counted object") {
  const KernelSpec k = KernelSpec::isotropic(2, 2.0);
  CHECK(analyze_dma(DensityMap({16, 16}), k, 0).centers.empty());

  SceneConfig cfg;
  cfg.count_mean = 50;
  cfg.count_stddev = 0;
  cfg.overlap_min = cfg.overlap_max = 0.0;
  const Scene s = generate_scene(cfg, k, 8);
  const DensityMap m = render_density_map(s.points, k, cfg.dims);
  const DmaAnalysis r = analyze_dma(m, k, 3);
  CHECK(r.count.total_count == 50);
  CHECK(r.centers.size() == 50);
  CHECK(worst_error(s.points.points, r.centers.points) < 0.5);

  cfg.overlap_min = cfg.overlap_max = 0.5;
  const Scene o = generate_scene(cfg, k, 9);
  NoiseConfig noise;
  const DensityMap clean = render_density_map(o.points, k, cfg.dims);
  const DensityMap noisy = corrupt_density(clean, o.points, k, noise, 10);
  const DmaAnalysis n1 = analyze_dma(noisy, k, 11);
  CHECK(static_cast<std::int64_t>(n1.centers.size()) == n1.count.total_count);
  const DmaAnalysis n2 = analyze_dma(noisy, k, 11);
  CHECK(n1.centers.points == n2.centers.points);
}
